#include <cstring>
#include <sstream>

#include "mbx/mbx_format.hpp"

// MBI container: a small fixed header, a canonical s-expression payload,
// and a trailing CRC32.  The writer is deterministic, so structurally equal
// documents always serialize to identical bytes.

namespace mbx {

uint32_t crc32(const uint8_t* data, size_t len) {
  static uint32_t table[256];
  static bool init = false;
  if (!init) {
    for (uint32_t i = 0; i < 256; i++) {
      uint32_t c = i;
      for (int k = 0; k < 8; k++) {
        c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      }
      table[i] = c;
    }
    init = true;
  }
  uint32_t c = 0xFFFFFFFFu;
  for (size_t i = 0; i < len; i++) {
    c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
  }
  return c ^ 0xFFFFFFFFu;
}

namespace {

// ---------------------------------------------------------------------------
// S-expressions

struct SExpr {
  enum class Tag { List, Sym, Str, Int };
  Tag tag = Tag::List;
  std::vector<SExpr> items;
  std::string text;
  int64_t ival = 0;

  static SExpr list(std::vector<SExpr> xs) {
    SExpr s;
    s.items = std::move(xs);
    return s;
  }
  static SExpr sym(std::string t) {
    SExpr s;
    s.tag = Tag::Sym;
    s.text = std::move(t);
    return s;
  }
  static SExpr str(std::string t) {
    SExpr s;
    s.tag = Tag::Str;
    s.text = std::move(t);
    return s;
  }
  static SExpr num(int64_t v) {
    SExpr s;
    s.tag = Tag::Int;
    s.ival = v;
    return s;
  }

  bool is_list() const { return tag == Tag::List; }
  bool is_sym(const char* t) const { return tag == Tag::Sym && text == t; }
};

void write_sexpr(const SExpr& s, std::string& out) {
  switch (s.tag) {
    case SExpr::Tag::List: {
      out += '(';
      for (size_t i = 0; i < s.items.size(); i++) {
        if (i) out += ' ';
        write_sexpr(s.items[i], out);
      }
      out += ')';
      return;
    }
    case SExpr::Tag::Sym:
      out += s.text;
      return;
    case SExpr::Tag::Int:
      out += std::to_string(s.ival);
      return;
    case SExpr::Tag::Str: {
      out += '"';
      for (unsigned char c : s.text) {
        if (c == '"') out += "\\\"";
        else if (c == '\\') out += "\\\\";
        else if (c == '\n') out += "\\n";
        else if (c == '\t') out += "\\t";
        else if (c == '\r') out += "\\r";
        else if (c < 0x20 || c == 0x7f) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\x%02x", c);
          out += buf;
        } else {
          out += static_cast<char>(c);
        }
      }
      out += '"';
      return;
    }
  }
}

struct SExprReader {
  const std::string& src;
  size_t pos = 0;
  std::string error;

  explicit SExprReader(const std::string& s) : src(s) {}

  void skip_ws() {
    while (pos < src.size() && isspace(static_cast<unsigned char>(src[pos]))) pos++;
  }

  bool fail(const std::string& msg) {
    if (error.empty()) error = msg + " at payload offset " + std::to_string(pos);
    return false;
  }

  bool read(SExpr& out) {
    skip_ws();
    if (pos >= src.size()) return fail("unexpected end of payload");
    char c = src[pos];
    if (c == '(') {
      pos++;
      out = SExpr::list({});
      while (true) {
        skip_ws();
        if (pos >= src.size()) return fail("unterminated list");
        if (src[pos] == ')') {
          pos++;
          return true;
        }
        SExpr item;
        if (!read(item)) return false;
        out.items.push_back(std::move(item));
      }
    }
    if (c == '"') {
      pos++;
      std::string text;
      while (pos < src.size() && src[pos] != '"') {
        char d = src[pos];
        if (d == '\\' && pos + 1 < src.size()) {
          char e = src[pos + 1];
          pos += 2;
          switch (e) {
            case 'n': text += '\n'; break;
            case 't': text += '\t'; break;
            case 'r': text += '\r'; break;
            case '"': text += '"'; break;
            case '\\': text += '\\'; break;
            case 'x': {
              if (pos + 1 < src.size()) {
                auto hex = [](char h) -> int {
                  if (h >= '0' && h <= '9') return h - '0';
                  if (h >= 'a' && h <= 'f') return h - 'a' + 10;
                  if (h >= 'A' && h <= 'F') return h - 'A' + 10;
                  return -1;
                };
                int a = hex(src[pos]), b = hex(src[pos + 1]);
                if (a < 0 || b < 0) return fail("bad \\x escape");
                text += static_cast<char>(a * 16 + b);
                pos += 2;
              } else {
                return fail("bad \\x escape");
              }
              break;
            }
            default: text += e; break;
          }
          continue;
        }
        text += d;
        pos++;
      }
      if (pos >= src.size()) return fail("unterminated string");
      pos++;
      out = SExpr::str(std::move(text));
      return true;
    }
    if (c == ')') return fail("unexpected ')'");
    size_t start = pos;
    while (pos < src.size() && !isspace(static_cast<unsigned char>(src[pos])) &&
           src[pos] != '(' && src[pos] != ')' && src[pos] != '"') {
      pos++;
    }
    std::string tok = src.substr(start, pos - start);
    bool numeric = !tok.empty() && (isdigit(static_cast<unsigned char>(tok[0])) ||
                                    (tok[0] == '-' && tok.size() > 1));
    if (numeric) {
      for (size_t i = 1; i < tok.size(); i++) {
        if (!isdigit(static_cast<unsigned char>(tok[i]))) numeric = false;
      }
    }
    if (numeric) {
      out = SExpr::num(std::strtoll(tok.c_str(), nullptr, 10));
    } else {
      out = SExpr::sym(std::move(tok));
    }
    return true;
  }
};

// ---------------------------------------------------------------------------
// Document -> s-expr

SExpr type_sx(const IRTypeRef& t) {
  if (!t) return SExpr::sym("void");
  switch (t->tag) {
    case IRType::Tag::EnumRange:
      return SExpr::list({SExpr::sym("enum"), SExpr::num(t->lo), SExpr::num(t->hi)});
    case IRType::Tag::IntN:
      return SExpr::list({SExpr::sym("int"), SExpr::num(t->bits)});
    case IRType::Tag::AddrData:
      return SExpr::sym("addr");
    case IRType::Tag::Ptr:
      return SExpr::list({SExpr::sym("ptr"), type_sx(t->elem)});
    case IRType::Tag::Vector:
      return SExpr::list({SExpr::sym("vec"),
                          t->count ? SExpr::num(static_cast<int64_t>(*t->count))
                                   : SExpr::sym("_"),
                          type_sx(t->elem)});
    case IRType::Tag::StructLayout: {
      std::vector<SExpr> fs;
      for (const auto& f : t->fields) {
        fs.push_back(SExpr::list(
            {SExpr::num(static_cast<int64_t>(f.offset)), type_sx(f.type)}));
      }
      return SExpr::list({SExpr::sym("struct"), SExpr::num(static_cast<int64_t>(t->size)),
                          SExpr::num(static_cast<int64_t>(t->align)),
                          SExpr::list(std::move(fs))});
    }
    case IRType::Tag::CFun: {
      std::vector<SExpr> ps;
      for (const auto& p : t->params) ps.push_back(type_sx(p));
      return SExpr::list(
          {SExpr::sym("cfun"), SExpr::list(std::move(ps)), type_sx(t->result)});
    }
    case IRType::Tag::StructParam:
      return SExpr::list({SExpr::sym("sparam"), type_sx(t->layout)});
    case IRType::Tag::Void:
      return SExpr::sym("void");
    case IRType::Tag::Unknown:
      return SExpr::sym("unknown");
  }
  return SExpr::sym("void");
}

SExpr lit_sx(const Literal& l) {
  switch (l.tag) {
    case Literal::Tag::Int:
      return SExpr::list({SExpr::sym("int"), SExpr::num(l.ival)});
    case Literal::Tag::Nil:
      return SExpr::sym("nil");
    case Literal::Tag::Str:
      return SExpr::list({SExpr::sym("str"), SExpr::str(l.sval)});
  }
  return SExpr::sym("nil");
}

// normalized operands are always plain variables
bool var_name_of(const ExprPtr& e, std::string& out) {
  if (!e || e->tag != Expr::Tag::Var) return false;
  out = e->name;
  return true;
}

SExpr vars_sx(const std::vector<ExprPtr>& args, bool& ok) {
  std::vector<SExpr> xs;
  for (const auto& a : args) {
    std::string v;
    if (!var_name_of(a, v)) {
      ok = false;
      return SExpr::list({});
    }
    xs.push_back(SExpr::sym(std::move(v)));
  }
  return SExpr::list(std::move(xs));
}

SExpr term_sx(const TermPtr& t, bool& ok) {
  if (!t) {
    ok = false;
    return SExpr::list({});
  }
  std::vector<SExpr> xs;
  auto push_note = [&](const std::optional<IRTypeRef>& note) {
    if (note) xs.push_back(SExpr::list({SExpr::sym("note"), type_sx(*note)}));
  };
  switch (t->tag) {
    case Term::Tag::LetLit:
      xs = {SExpr::sym("lit"), SExpr::sym(t->vars[0]), lit_sx(t->lit)};
      push_note(t->type_note);
      xs.push_back(term_sx(t->body, ok));
      return SExpr::list(std::move(xs));
    case Term::Tag::LetPrim:
      xs = {SExpr::sym("prim"), SExpr::sym(t->vars[0]),
            SExpr::sym(primop_info(t->op).name), vars_sx(t->args, ok)};
      push_note(t->type_note);
      xs.push_back(term_sx(t->body, ok));
      return SExpr::list(std::move(xs));
    case Term::Tag::LetAlloc:
      xs = {SExpr::sym("alloc"), SExpr::sym(t->vars[0]), vars_sx(t->args, ok)};
      push_note(t->type_note);
      xs.push_back(term_sx(t->body, ok));
      return SExpr::list(std::move(xs));
    case Term::Tag::LetSelect: {
      std::string base;
      if (!var_name_of(t->args[0], base)) ok = false;
      xs = {SExpr::sym("select"), SExpr::sym(t->vars[0]), SExpr::sym(base),
            SExpr::num(t->index)};
      push_note(t->type_note);
      xs.push_back(term_sx(t->body, ok));
      return SExpr::list(std::move(xs));
    }
    case Term::Tag::LetCCall:
      xs = {SExpr::sym("ccall"), SExpr::sym(t->vars[0]), SExpr::sym(t->callee),
            vars_sx(t->args, ok)};
      push_note(t->type_note);
      xs.push_back(term_sx(t->body, ok));
      return SExpr::list(std::move(xs));
    case Term::Tag::LetCall: {
      std::vector<SExpr> vs;
      for (const auto& v : t->vars) vs.push_back(SExpr::sym(v));
      xs = {SExpr::sym("call"), SExpr::list(std::move(vs)), SExpr::sym(t->callee),
            vars_sx(t->args, ok), term_sx(t->body, ok)};
      return SExpr::list(std::move(xs));
    }
    case Term::Tag::LetStackAlloc:
      xs = {SExpr::sym("stack"), SExpr::sym(t->vars[0]),
            SExpr::num(static_cast<int64_t>(t->alloc_size)),
            SExpr::num(static_cast<int64_t>(t->alloc_align)), term_sx(t->body, ok)};
      return SExpr::list(std::move(xs));
    case Term::Tag::If: {
      std::string c;
      if (!var_name_of(t->cond, c)) ok = false;
      return SExpr::list({SExpr::sym("if"), SExpr::sym(c), term_sx(t->then_branch, ok),
                          term_sx(t->else_branch, ok)});
    }
    case Term::Tag::Return:
      return SExpr::list({SExpr::sym("ret"), vars_sx(t->args, ok)});
  }
  ok = false;
  return SExpr::list({});
}

SExpr document_sx(const MbiDocument& doc, bool& ok) {
  std::vector<SExpr> tds, tbs, eds, fbs;
  for (const auto& td : doc.module.typedefs) {
    tds.push_back(SExpr::list({SExpr::sym("td"), SExpr::sym(td.name), type_sx(td.type)}));
  }
  for (const auto& tb : doc.module.type_bindings) {
    if (tb.is_alias) {
      tbs.push_back(SExpr::list({SExpr::sym("tp"), SExpr::sym(tb.name),
                                 SExpr::sym("alias"), SExpr::sym(tb.alias_of)}));
    } else {
      tbs.push_back(SExpr::list(
          {SExpr::sym("tp"), SExpr::sym(tb.name), SExpr::sym("prim"), type_sx(tb.type)}));
    }
  }
  for (const auto& ed : doc.module.externals) {
    eds.push_back(
        SExpr::list({SExpr::sym("ext"), SExpr::sym(ed.name), type_sx(ed.signature)}));
  }
  for (const auto& fb : doc.module.fun_bindings) {
    std::vector<SExpr> ps;
    for (const auto& p : fb.def.params) {
      ps.push_back(SExpr::list({SExpr::sym(p.name), type_sx(p.type)}));
    }
    fbs.push_back(SExpr::list({SExpr::sym("fun"), SExpr::sym(fb.name),
                               SExpr::str(fb.hl_type), SExpr::sym(fb.def.self_name),
                               SExpr::list(std::move(ps)), term_sx(fb.def.body, ok)}));
  }
  return SExpr::list({SExpr::sym("module"), SExpr::sym(doc.module.name),
                      SExpr::list(std::move(tds)), SExpr::list(std::move(tbs)),
                      SExpr::list(std::move(eds)), SExpr::list(std::move(fbs))});
}

// ---------------------------------------------------------------------------
// s-expr -> document

struct SxParser {
  DiagnosticList& diags;
  std::string name;
  bool failed = false;

  void fail(const std::string& msg) {
    if (!failed) diags.push_back({Severity::Error, "mbi: " + msg, {name, 0, 0, 0, 0}});
    failed = true;
  }

  std::string sym(const SExpr& s, const char* what) {
    if (s.tag != SExpr::Tag::Sym) {
      fail(std::string("expected ") + what);
      return "";
    }
    return s.text;
  }

  int64_t num(const SExpr& s, const char* what) {
    if (s.tag != SExpr::Tag::Int) {
      fail(std::string("expected ") + what);
      return 0;
    }
    return s.ival;
  }

  IRTypeRef type(const SExpr& s) {
    if (s.tag == SExpr::Tag::Sym) {
      if (s.text == "addr") return ty_addr();
      if (s.text == "void") return ty_void();
      if (s.text == "unknown") return ty_unknown();
      fail("unknown type symbol '" + s.text + "'");
      return ty_void();
    }
    if (!s.is_list() || s.items.empty() || s.items[0].tag != SExpr::Tag::Sym) {
      fail("malformed type");
      return ty_void();
    }
    const std::string& head = s.items[0].text;
    if (head == "enum" && s.items.size() == 3) {
      return ty_enum(num(s.items[1], "enum lo"), num(s.items[2], "enum hi"));
    }
    if (head == "int" && s.items.size() == 2) {
      return ty_int(static_cast<int>(num(s.items[1], "int width")));
    }
    if (head == "ptr" && s.items.size() == 2) return ty_ptr(type(s.items[1]));
    if (head == "vec" && s.items.size() == 3) {
      std::optional<uint64_t> count;
      if (s.items[1].tag == SExpr::Tag::Int) {
        count = static_cast<uint64_t>(s.items[1].ival);
      }
      return ty_vector(count, type(s.items[2]));
    }
    if (head == "struct" && s.items.size() == 4 && s.items[3].is_list()) {
      std::vector<StructField> fields;
      for (const auto& f : s.items[3].items) {
        if (!f.is_list() || f.items.size() != 2) {
          fail("malformed struct field");
          break;
        }
        fields.push_back({static_cast<uint64_t>(num(f.items[0], "field offset")),
                          type(f.items[1])});
      }
      return ty_struct(static_cast<uint64_t>(num(s.items[1], "struct size")),
                       static_cast<uint64_t>(num(s.items[2], "struct align")),
                       std::move(fields));
    }
    if (head == "cfun" && s.items.size() == 3 && s.items[1].is_list()) {
      std::vector<IRTypeRef> params;
      for (const auto& p : s.items[1].items) params.push_back(type(p));
      return ty_cfun(std::move(params), type(s.items[2]));
    }
    if (head == "sparam" && s.items.size() == 2) {
      return ty_struct_param(type(s.items[1]));
    }
    fail("unknown type form '" + head + "'");
    return ty_void();
  }

  Literal lit(const SExpr& s) {
    if (s.is_sym("nil")) return Literal::make_nil();
    if (s.is_list() && s.items.size() == 2 && s.items[0].tag == SExpr::Tag::Sym) {
      if (s.items[0].text == "int") return Literal::make_int(num(s.items[1], "int literal"));
      if (s.items[0].text == "str") {
        if (s.items[1].tag != SExpr::Tag::Str) {
          fail("malformed string literal");
          return Literal::make_str("");
        }
        return Literal::make_str(s.items[1].text);
      }
    }
    fail("malformed literal");
    return Literal::make_nil();
  }

  std::vector<ExprPtr> var_list(const SExpr& s) {
    std::vector<ExprPtr> out;
    if (!s.is_list()) {
      fail("expected variable list");
      return out;
    }
    for (const auto& v : s.items) out.push_back(ex_var(sym(v, "variable")));
    return out;
  }

  // optional (note TYPE) element before the body
  std::optional<IRTypeRef> note_at(const SExpr& s, size_t& i) {
    if (i < s.items.size() && s.items[i].is_list() && !s.items[i].items.empty() &&
        s.items[i].items[0].is_sym("note")) {
      IRTypeRef t = type(s.items[i].items[1]);
      i++;
      return t;
    }
    return std::nullopt;
  }

  TermPtr term(const SExpr& s) {
    if (!s.is_list() || s.items.empty() || s.items[0].tag != SExpr::Tag::Sym) {
      fail("malformed term");
      return mk_return({});
    }
    const std::string& head = s.items[0].text;
    if (head == "ret" && s.items.size() == 2) {
      return mk_return(var_list(s.items[1]));
    }
    if (head == "if" && s.items.size() == 4) {
      return mk_if(ex_var(sym(s.items[1], "condition")), term(s.items[2]),
                   term(s.items[3]));
    }
    if (head == "lit" && s.items.size() >= 4) {
      size_t i = 3;
      auto note = note_at(s, i);
      if (i + 1 != s.items.size()) {
        fail("malformed lit term");
        return mk_return({});
      }
      return mk_let_lit(sym(s.items[1], "binder"), lit(s.items[2]), term(s.items[i]),
                        {}, note);
    }
    if (head == "prim" && s.items.size() >= 5) {
      auto op = primop_by_name(sym(s.items[2], "prim op"));
      if (!op) {
        fail("unknown prim op");
        return mk_return({});
      }
      size_t i = 4;
      auto note = note_at(s, i);
      if (i + 1 != s.items.size()) {
        fail("malformed prim term");
        return mk_return({});
      }
      return mk_let_prim(sym(s.items[1], "binder"), *op, var_list(s.items[3]),
                         term(s.items[i]), {}, note);
    }
    if (head == "alloc" && s.items.size() >= 4) {
      size_t i = 3;
      auto note = note_at(s, i);
      if (i + 1 != s.items.size()) {
        fail("malformed alloc term");
        return mk_return({});
      }
      return mk_let_alloc(sym(s.items[1], "binder"), var_list(s.items[2]),
                          term(s.items[i]), {}, note);
    }
    if (head == "select" && s.items.size() >= 5) {
      size_t i = 4;
      auto note = note_at(s, i);
      if (i + 1 != s.items.size()) {
        fail("malformed select term");
        return mk_return({});
      }
      return mk_let_select(sym(s.items[1], "binder"), ex_var(sym(s.items[2], "base")),
                           static_cast<int>(num(s.items[3], "field index")),
                           term(s.items[i]), {}, note);
    }
    if (head == "ccall" && s.items.size() >= 5) {
      size_t i = 4;
      auto note = note_at(s, i);
      if (i + 1 != s.items.size()) {
        fail("malformed ccall term");
        return mk_return({});
      }
      return mk_let_ccall(sym(s.items[1], "binder"), sym(s.items[2], "callee"),
                          var_list(s.items[3]), term(s.items[i]), {}, note);
    }
    if (head == "call" && s.items.size() == 5) {
      std::vector<std::string> vars;
      if (!s.items[1].is_list()) {
        fail("malformed call binders");
        return mk_return({});
      }
      for (const auto& v : s.items[1].items) vars.push_back(sym(v, "binder"));
      return mk_let_call(std::move(vars), sym(s.items[2], "callee"),
                         var_list(s.items[3]), term(s.items[4]));
    }
    if (head == "stack" && s.items.size() == 5) {
      return mk_stack_alloc(sym(s.items[1], "binder"),
                            static_cast<uint64_t>(num(s.items[2], "size")),
                            static_cast<uint64_t>(num(s.items[3], "align")),
                            term(s.items[4]));
    }
    fail("unknown term form '" + head + "'");
    return mk_return({});
  }

  bool document(const SExpr& s, MbiDocument& doc) {
    if (!s.is_list() || s.items.size() != 6 || !s.items[0].is_sym("module")) {
      fail("malformed module payload");
      return false;
    }
    doc.module.name = sym(s.items[1], "module name");
    for (const auto& td : s.items[2].items) {
      if (!td.is_list() || td.items.size() != 3 || !td.items[0].is_sym("td")) {
        fail("malformed typedef");
        return false;
      }
      doc.module.typedefs.push_back(
          {sym(td.items[1], "typedef name"), type(td.items[2]), {}});
    }
    for (const auto& tb : s.items[3].items) {
      if (!tb.is_list() || tb.items.size() != 4 || !tb.items[0].is_sym("tp")) {
        fail("malformed type binding");
        return false;
      }
      TypeBinding b;
      b.name = sym(tb.items[1], "type name");
      std::string k = sym(tb.items[2], "type binding kind");
      if (k == "alias") {
        b.is_alias = true;
        b.alias_of = sym(tb.items[3], "aliased name");
      } else if (k == "prim") {
        b.type = type(tb.items[3]);
      } else {
        fail("unknown type binding kind");
        return false;
      }
      doc.module.type_bindings.push_back(std::move(b));
    }
    for (const auto& ed : s.items[4].items) {
      if (!ed.is_list() || ed.items.size() != 3 || !ed.items[0].is_sym("ext")) {
        fail("malformed external");
        return false;
      }
      doc.module.externals.push_back(
          {sym(ed.items[1], "external name"), type(ed.items[2]), {}});
    }
    for (const auto& fb : s.items[5].items) {
      if (!fb.is_list() || fb.items.size() != 6 || !fb.items[0].is_sym("fun")) {
        fail("malformed fun binding");
        return false;
      }
      FunBinding b;
      b.name = sym(fb.items[1], "fun name");
      if (fb.items[2].tag != SExpr::Tag::Str) {
        fail("malformed fun annotation");
        return false;
      }
      b.hl_type = fb.items[2].text;
      b.def.self_name = sym(fb.items[3], "self name");
      if (!fb.items[4].is_list()) {
        fail("malformed parameter list");
        return false;
      }
      for (const auto& p : fb.items[4].items) {
        if (!p.is_list() || p.items.size() != 2) {
          fail("malformed parameter");
          return false;
        }
        b.def.params.push_back({sym(p.items[0], "parameter name"), type(p.items[1]), {}});
      }
      b.def.body = term(fb.items[5]);
      doc.module.fun_bindings.push_back(std::move(b));
    }
    return !failed;
  }
};

void put_u32le(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xFF));
  out.push_back(static_cast<uint8_t>((v >> 8) & 0xFF));
  out.push_back(static_cast<uint8_t>((v >> 16) & 0xFF));
  out.push_back(static_cast<uint8_t>((v >> 24) & 0xFF));
}

uint32_t get_u32le(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

}  // namespace

SerializeResult serialize_mbi(const MbiDocument& doc) {
  SerializeResult res;
  for (const auto& fb : doc.module.fun_bindings) {
    if (!is_normal(fb.def)) {
      res.diags.push_back({Severity::Error,
                           "cannot serialize: function '" + fb.name +
                               "' is not in normal form",
                           fb.span});
      return res;
    }
  }
  bool ok = true;
  SExpr sx = document_sx(doc, ok);
  if (!ok) {
    res.diags.push_back({Severity::Error, "cannot serialize: malformed document", {}});
    return res;
  }
  std::string payload;
  write_sexpr(sx, payload);

  std::vector<uint8_t>& out = res.bytes;
  out.push_back('M');
  out.push_back('B');
  out.push_back('I');
  out.push_back('1');
  out.push_back(static_cast<uint8_t>(doc.target.word_size));
  out.push_back(static_cast<uint8_t>(doc.target.endianness));
  out.push_back(static_cast<uint8_t>(doc.target.default_int_bits));
  out.push_back(0);
  put_u32le(out, static_cast<uint32_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  put_u32le(out, crc32(out.data(), out.size()));
  return res;
}

ParseResult parse_mbi(const std::vector<uint8_t>& bytes, const std::string& name) {
  ParseResult res;
  auto fail = [&](const std::string& msg) {
    res.diags.push_back({Severity::Error, "mbi: " + msg, {name, 0, 0, 0, 0}});
  };
  if (bytes.size() < 16) {
    fail("file too short to be an MBI module");
    return res;
  }
  if (bytes[0] != 'M' || bytes[1] != 'B' || bytes[2] != 'I') {
    fail("bad magic; not an MBI module");
    return res;
  }
  if (bytes[3] != '1') {
    fail(std::string("unsupported container version '") +
         static_cast<char>(bytes[3]) + "'");
    return res;
  }
  int word_size = bytes[4];
  if (word_size != 32 && word_size != 64) {
    fail("unsupported word size " + std::to_string(word_size));
    return res;
  }
  if (bytes[5] > 1) {
    fail("unsupported endianness tag");
    return res;
  }
  res.doc.target.word_size = word_size;
  res.doc.target.endianness = static_cast<Endian>(bytes[5]);
  res.doc.target.default_int_bits = bytes[6];
  uint32_t len = get_u32le(bytes.data() + 8);
  if (bytes.size() != 12 + static_cast<size_t>(len) + 4) {
    fail("payload length does not match file size");
    return res;
  }
  uint32_t stored = get_u32le(bytes.data() + 12 + len);
  uint32_t actual = crc32(bytes.data(), 12 + len);
  if (stored != actual) {
    fail("checksum mismatch");
    return res;
  }
  std::string payload(reinterpret_cast<const char*>(bytes.data()) + 12, len);
  SExprReader reader(payload);
  SExpr sx;
  if (!reader.read(sx)) {
    fail(reader.error);
    return res;
  }
  SxParser sp{res.diags, name};
  sp.document(sx, res.doc);
  return res;
}

}  // namespace mbx
