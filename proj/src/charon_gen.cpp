#include <cctype>

#include "mbx/charon_gen.hpp"
#include "mbx/mbx_format.hpp"

namespace mbx::charon {
namespace {

using layout::CDeclTable;
using layout::CField;
using layout::CStructDef;
using layout::CType;
using layout::CTypeRef;
using layout::Scalar;

// ---------------------------------------------------------------------------
// Lexer (C header subset)

struct Token {
  enum class Kind { Ident, Int, Punct, End };
  Kind kind = Kind::End;
  std::string text;
  int64_t ival = 0;
  int line = 1, col = 1;
};

std::vector<Token> lex(const std::string& src, const std::string& file,
                       DiagnosticList& diags) {
  std::vector<Token> out;
  size_t i = 0;
  int line = 1, col = 1;
  auto advance = [&](size_t n) {
    for (size_t k = 0; k < n; k++) {
      if (src[i + k] == '\n') {
        line++;
        col = 1;
      } else {
        col++;
      }
    }
    i += n;
  };
  while (i < src.size()) {
    char c = src[i];
    if (isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }
    if (c == '/' && i + 1 < src.size() && src[i + 1] == '/') {
      while (i < src.size() && src[i] != '\n') advance(1);
      continue;
    }
    if (c == '/' && i + 1 < src.size() && src[i + 1] == '*') {
      advance(2);
      while (i + 1 < src.size() && !(src[i] == '*' && src[i + 1] == '/')) advance(1);
      advance(i + 1 < src.size() ? 2 : 1);
      continue;
    }
    Token t;
    t.line = line;
    t.col = col;
    if (isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t j = i;
      while (j < src.size() &&
             (isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) {
        j++;
      }
      t.kind = Token::Kind::Ident;
      t.text = src.substr(i, j - i);
      advance(j - i);
    } else if (isdigit(static_cast<unsigned char>(c))) {
      size_t j = i;
      while (j < src.size() && isdigit(static_cast<unsigned char>(src[j]))) j++;
      t.kind = Token::Kind::Int;
      t.text = src.substr(i, j - i);
      t.ival = std::strtoll(t.text.c_str(), nullptr, 10);
      advance(j - i);
    } else if (std::string("*(){},;:[]").find(c) != std::string::npos) {
      t.kind = Token::Kind::Punct;
      t.text = std::string(1, c);
      advance(1);
    } else {
      diags.push_back({Severity::Error, std::string("stray character '") + c + "'",
                       {file, line, col, line, col}});
      advance(1);
      continue;
    }
    out.push_back(std::move(t));
  }
  Token end;
  end.kind = Token::Kind::End;
  end.line = line;
  end.col = col;
  out.push_back(std::move(end));
  return out;
}

// ---------------------------------------------------------------------------
// Parser

struct Parser {
  std::vector<Token> toks;
  size_t pos = 0;
  std::string file;
  DiagnosticList& diags;
  HeaderUnit& unit;
  int anon_structs = 0;

  const Token& cur() const { return toks[pos]; }
  const Token& peek(size_t n) const {
    return toks[pos + n < toks.size() ? pos + n : toks.size() - 1];
  }
  Token take() { return toks[pos < toks.size() - 1 ? pos++ : pos]; }

  SourceSpan span_here() const {
    const Token& t = cur();
    return {file, t.line, t.col, t.line, t.col + static_cast<int>(t.text.size())};
  }
  void error(const std::string& msg) {
    diags.push_back({Severity::Error, msg, span_here()});
  }

  bool at_punct(const std::string& p) const {
    return cur().kind == Token::Kind::Punct && cur().text == p;
  }
  bool at_ident(const std::string& s) const {
    return cur().kind == Token::Kind::Ident && cur().text == s;
  }
  bool eat_punct(const std::string& p) {
    if (at_punct(p)) {
      take();
      return true;
    }
    return false;
  }
  bool eat_ident(const std::string& s) {
    if (at_ident(s)) {
      take();
      return true;
    }
    return false;
  }
  void expect_punct(const std::string& p) {
    if (!eat_punct(p)) error("expected '" + p + "'");
  }
  std::string expect_ident(const std::string& what) {
    if (cur().kind == Token::Kind::Ident) return take().text;
    error("expected " + what);
    return "";
  }

  static bool is_scalar_word(const std::string& s) {
    return s == "char" || s == "short" || s == "int" || s == "long" ||
           s == "unsigned" || s == "signed" || s == "void";
  }

  CTypeRef parse_scalar() {
    bool uns = false;
    if (eat_ident("unsigned")) uns = true;
    else eat_ident("signed");
    if (eat_ident("char")) return layout::ct_scalar(uns ? Scalar::UChar : Scalar::Char);
    if (eat_ident("short")) {
      eat_ident("int");
      return layout::ct_scalar(uns ? Scalar::UShort : Scalar::Short);
    }
    if (eat_ident("long")) {
      eat_ident("int");
      return layout::ct_scalar(uns ? Scalar::ULong : Scalar::Long);
    }
    if (eat_ident("int")) return layout::ct_scalar(uns ? Scalar::UInt : Scalar::Int);
    if (eat_ident("void")) return layout::ct_scalar(Scalar::Void);
    if (uns) return layout::ct_scalar(Scalar::UInt);
    error("expected a type");
    take();
    return layout::ct_scalar(Scalar::Int);
  }

  CStructDef parse_struct_body(const std::string& tag) {
    CStructDef def;
    def.tag = tag;
    expect_punct("{");
    while (!at_punct("}") && cur().kind != Token::Kind::End) {
      CTypeRef base = parse_type_spec();
      do {
        CTypeRef ft = base;
        while (eat_punct("*")) ft = layout::ct_ptr(ft);
        std::string fname = expect_ident("field name");
        if (at_punct(":")) {
          error("unsupported construct: bitfield '" + fname + "'");
          take();
          if (cur().kind == Token::Kind::Int) take();
        }
        if (at_punct("[")) {
          error("unsupported construct: array field '" + fname + "'");
          while (!at_punct("]") && cur().kind != Token::Kind::End) take();
          eat_punct("]");
        }
        def.fields.push_back({fname, ft});
      } while (eat_punct(","));
      expect_punct(";");
    }
    expect_punct("}");
    return def;
  }

  void define_struct(CStructDef def) {
    if (unit.table.structs.count(def.tag)) {
      error("duplicate struct tag '" + def.tag + "'");
      return;
    }
    unit.struct_order.push_back(def.tag);
    unit.table.structs[def.tag] = std::move(def);
  }

  CTypeRef parse_type_spec() {
    if (at_ident("struct")) {
      take();
      std::string tag;
      if (cur().kind == Token::Kind::Ident) tag = take().text;
      if (at_punct("{")) {
        if (tag.empty()) tag = "$anon" + std::to_string(anon_structs++);
        define_struct(parse_struct_body(tag));
        return layout::ct_named(tag);
      }
      if (tag.empty()) error("expected struct tag");
      return layout::ct_named(tag);
    }
    if (cur().kind == Token::Kind::Ident && is_scalar_word(cur().text)) {
      return parse_scalar();
    }
    if (cur().kind == Token::Kind::Ident) return layout::ct_named(take().text);
    error("expected a type");
    take();
    return layout::ct_scalar(Scalar::Int);
  }

  void rename_anon_tag(const std::string& from, const std::string& to) {
    auto it = unit.table.structs.find(from);
    if (it == unit.table.structs.end() || unit.table.structs.count(to)) return;
    CStructDef def = it->second;
    def.tag = to;
    unit.table.structs.erase(it);
    unit.table.structs[to] = std::move(def);
    for (auto& tag : unit.struct_order) {
      if (tag == from) tag = to;
    }
  }

  void parse_typedef() {
    SourceSpan sp = span_here();
    CTypeRef base = parse_type_spec();
    bool first = true;
    do {
      CTypeRef t = base;
      int stars = 0;
      while (eat_punct("*")) {
        t = layout::ct_ptr(t);
        stars++;
      }
      std::string name = expect_ident("typedef name");
      if (name.empty()) break;
      if (first && stars == 0 && base->tag == CType::Tag::Named &&
          base->name.rfind("$anon", 0) == 0) {
        rename_anon_tag(base->name, name);
        base = layout::ct_named(name);
        t = base;
      }
      if (!(t->tag == CType::Tag::Named && t->name == name)) {
        unit.table.typedefs[name] = t;
      }
      unit.typedefs.push_back({name, t, sp});
      first = false;
    } while (eat_punct(","));
    expect_punct(";");
  }

  void parse_extern(SourceSpan sp) {
    HeaderExtern ext;
    ext.span = sp;
    ext.result = parse_type_spec();
    while (eat_punct("*")) ext.result = layout::ct_ptr(ext.result);
    ext.name = expect_ident("function name");
    expect_punct("(");
    if (at_ident("void") && peek(1).kind == Token::Kind::Punct && peek(1).text == ")") {
      take();
    } else if (!at_punct(")")) {
      int n = 0;
      do {
        HeaderParam p;
        p.type = parse_type_spec();
        while (eat_punct("*")) p.type = layout::ct_ptr(p.type);
        if (cur().kind == Token::Kind::Ident) {
          p.name = take().text;
        } else {
          p.name = "arg" + std::to_string(n);
        }
        n++;
        ext.params.push_back(std::move(p));
      } while (eat_punct(","));
    }
    expect_punct(")");
    expect_punct(";");
    unit.externs.push_back(std::move(ext));
  }

  // Unresolved type names are reported once the whole header is read, so
  // forward and self references work.
  void validate_names() {
    auto check = [&](const CTypeRef& t, const SourceSpan& sp) {
      CTypeRef r = t;
      while (r && r->tag == CType::Tag::Pointer) r = r->pointee;
      r = layout::resolve(r, unit.table);
      while (r && r->tag == CType::Tag::Pointer) r = r->pointee;
      r = layout::resolve(r, unit.table);
      if (r && r->tag == CType::Tag::Named && !unit.table.find_struct(r->name)) {
        diags.push_back({Severity::Error, "unknown type '" + r->name + "'", sp});
      }
    };
    for (const auto& [tag, def] : unit.table.structs) {
      for (const CField& f : def.fields) check(f.type, {});
    }
    for (const HeaderExtern& e : unit.externs) {
      check(e.result, e.span);
      for (const HeaderParam& p : e.params) check(p.type, e.span);
    }
  }

  void run() {
    while (cur().kind != Token::Kind::End) {
      SourceSpan sp = span_here();
      if (eat_ident("typedef")) {
        parse_typedef();
        continue;
      }
      if (at_ident("struct") && peek(2).kind == Token::Kind::Punct &&
          peek(2).text == "{") {
        parse_type_spec();
        expect_punct(";");
        continue;
      }
      eat_ident("extern");
      parse_extern(sp);
    }
    validate_names();
  }
};

// ---------------------------------------------------------------------------
// Type rendering

std::string lower_first(const std::string& s) {
  std::string r = s;
  if (!r.empty()) r[0] = static_cast<char>(tolower(static_cast<unsigned char>(r[0])));
  return r;
}

std::string moby_scalar(Scalar s) {
  switch (s) {
    case Scalar::Char: return "SChar";
    case Scalar::UChar: return "UChar";
    case Scalar::Short: return "SShort";
    case Scalar::UShort: return "UShort";
    case Scalar::Int: return "SInt";
    case Scalar::UInt: return "UInt";
    case Scalar::Long: return "SLong";
    case Scalar::ULong: return "ULong";
    case Scalar::Void: return "()";
  }
  return "SInt";
}

// Moby spelling of a C type as written: typedef names become Def_ types,
// struct tags become Struct_ phantoms.
std::string moby_type(const CTypeRef& t, const HeaderUnit& unit) {
  switch (t->tag) {
    case CType::Tag::Scalar:
      return moby_scalar(t->scalar);
    case CType::Tag::Pointer:
      return "CPtr(" + moby_type(t->pointee, unit) + ")";
    case CType::Tag::Named:
      if (unit.table.typedefs.count(t->name)) return "Def_" + t->name;
      return "Struct_" + t->name;
  }
  return "?";
}

bool is_pointerish(const CTypeRef& t, const CDeclTable& table) {
  CTypeRef r = layout::resolve(t, table);
  return r && r->tag == CType::Tag::Pointer;
}

// IR type for an extern's C result.
IRTypeRef result_ir(const CTypeRef& t, const CDeclTable& table,
                    const TargetConfig& target) {
  CTypeRef r = layout::resolve(t, table);
  if (!r) return ty_void();
  if (r->tag == CType::Tag::Pointer) return ty_addr();
  if (r->tag == CType::Tag::Scalar) {
    switch (r->scalar) {
      case Scalar::Void:
        return ty_void();
      case Scalar::Long:
      case Scalar::ULong:
        return ty_int(target.word_size);
      default:
        return ty_int(32);
    }
  }
  return ty_addr();
}

}  // namespace

// ---------------------------------------------------------------------------
// Public entry points

HeaderParseResult parse_header(const std::string& text, const std::string& filename) {
  HeaderParseResult res;
  std::vector<Token> toks = lex(text, filename, res.diags);
  Parser p{std::move(toks), 0, filename, res.diags, res.unit};
  p.run();
  return res;
}

std::string gen_interface(const HeaderUnit& unit) {
  std::string out;
  for (const std::string& tag : unit.struct_order) {
    out += "type Struct_" + tag + "\n";
  }
  for (const HeaderTypedef& td : unit.typedefs) {
    out += "type Def_" + td.name + " = " + moby_type(td.type, unit) + "\n";
  }
  for (const std::string& tag : unit.struct_order) {
    const CStructDef* def = unit.table.find_struct(tag);
    if (!def) continue;
    out += "\nmodule S" + tag + " {\n";
    for (const CField& f : def->fields) {
      out += "  val " + f.name + " : LValue(Struct_" + tag + ") -> LValue(" +
             moby_type(f.type, unit) + ")\n";
    }
    out += "  val sizeOf : () -> SizeOf(Struct_" + tag + ")\n";
    out += "}\n";
  }
  if (!unit.externs.empty() && (!unit.struct_order.empty() || !unit.typedefs.empty())) {
    out += "\n";
  }
  for (const HeaderExtern& e : unit.externs) {
    std::vector<std::string> ins;
    for (const HeaderParam& p : e.params) {
      CTypeRef r = layout::resolve(p.type, unit.table);
      if (r && r->tag == CType::Tag::Scalar) {
        ins.push_back("Int");
      } else {
        ins.push_back(moby_type(p.type, unit));
      }
    }
    std::string lhs;
    if (ins.empty()) {
      lhs = "()";
    } else if (ins.size() == 1) {
      lhs = ins[0];
    } else {
      lhs = "(";
      for (size_t i = 0; i < ins.size(); i++) {
        if (i) lhs += ", ";
        lhs += ins[i];
      }
      lhs += ")";
    }
    std::string rhs;
    CTypeRef rr = layout::resolve(e.result, unit.table);
    if (rr && rr->tag == CType::Tag::Scalar) {
      rhs = rr->scalar == Scalar::Void ? "()" : "Int";
    } else if (is_pointerish(e.result, unit.table)) {
      rhs = "LValue(" + moby_type(e.result, unit) + ")";
    } else {
      rhs = moby_type(e.result, unit);
    }
    out += "val " + lower_first(e.name) + " : " + lhs + " -> " + rhs + "\n";
  }
  return out;
}

GenResult gen_impl(const HeaderUnit& unit, const std::string& module_name,
                   const TargetConfig& target) {
  GenResult res;
  ModuleInterface& m = res.doc.module;
  res.doc.target = target;
  m.name = module_name;

  for (const std::string& tag : unit.struct_order) {
    m.type_bindings.push_back({"Struct_" + tag, false, "", ty_void(), {}});
  }
  for (const HeaderTypedef& td : unit.typedefs) {
    CTypeRef r = layout::resolve(td.type, unit.table);
    if (r && r->tag == CType::Tag::Named && unit.table.find_struct(r->name)) {
      // struct value alias
      m.type_bindings.push_back({"Def_" + td.name, true, "Struct_" + r->name,
                                 nullptr, td.span});
    } else if (r && r->tag == CType::Tag::Pointer) {
      // pointers erase to untyped addresses; keep a named IR typedef so
      // the printed module reads like the interface
      m.typedefs.push_back({"def_" + td.name, ty_addr(), td.span});
      m.type_bindings.push_back({"Def_" + td.name, false, "", ty_addr(), td.span});
    } else if (r && r->tag == CType::Tag::Scalar) {
      IRTypeRef ir = r->scalar == Scalar::Char || r->scalar == Scalar::UChar
                         ? ty_enum(0, 255)
                         : result_ir(r, unit.table, target);
      m.type_bindings.push_back({"Def_" + td.name, false, "", ir, td.span});
    } else {
      res.diags.push_back({Severity::Error,
                           "cannot translate typedef '" + td.name + "'", td.span});
    }
  }

  for (const std::string& tag : unit.struct_order) {
    const CStructDef* def = unit.table.find_struct(tag);
    layout::CLayout lay = layout::layout_of_struct(*def, unit.table, target);
    std::string iface = "Struct_" + tag;
    for (size_t i = 0; i < def->fields.size(); i++) {
      const CField& f = def->fields[i];
      uint64_t off = lay.field_offsets[i];
      FunBinding fb;
      fb.name = "S" + tag + "." + f.name;
      fb.hl_type = "LValue(" + iface + ") -> LValue(" + moby_type(f.type, unit) + ")";
      fb.span = {};
      fb.def.self_name = "fld";
      fb.def.params.push_back({"p", ty_addr(), {}});
      fb.def.params.push_back({"$u0", ty_addr(), {}});
      if (off == 0) {
        fb.def.body = mk_return({ex_var("p")});
      } else {
        fb.def.body = mk_let_prim(
            "q", PrimOp::AdrAdd,
            {ex_var("p"), ex_lit(Literal::make_int(static_cast<int64_t>(off)))},
            mk_return({ex_var("q")}));
      }
      m.fun_bindings.push_back(std::move(fb));
    }
    FunBinding sz;
    sz.name = "S" + tag + ".sizeOf";
    sz.hl_type = "() -> SizeOf(" + iface + ")";
    sz.def.self_name = "sz";
    sz.def.params.push_back({"$u0", ty_addr(), {}});
    sz.def.body = mk_let_lit("n", Literal::make_int(static_cast<int64_t>(lay.size)),
                             mk_return({ex_var("n")}));
    m.fun_bindings.push_back(std::move(sz));
  }

  for (const HeaderExtern& e : unit.externs) {
    std::vector<IRTypeRef> ext_params;
    for (const HeaderParam& p : e.params) {
      ext_params.push_back(layout::promote_param(p.type, unit.table, target));
    }
    IRTypeRef ext_result = result_ir(e.result, unit.table, target);
    m.externals.push_back({e.name, ty_cfun(ext_params, ext_result), e.span});

    FunBinding fb;
    fb.name = lower_first(e.name);
    fb.span = e.span;
    fb.def.self_name = fb.name;
    fb.def.span = e.span;
    std::vector<ExprPtr> args;
    for (size_t i = 0; i < e.params.size(); i++) {
      fb.def.params.push_back({e.params[i].name, ext_params[i], {}});
      args.push_back(ex_var(e.params[i].name));
    }
    fb.def.params.push_back({"eh", ty_addr(), {}});

    std::vector<std::string> ins;
    for (const HeaderParam& p : e.params) {
      CTypeRef r = layout::resolve(p.type, unit.table);
      ins.push_back(r && r->tag == CType::Tag::Scalar ? "Int" : moby_type(p.type, unit));
    }
    std::string lhs;
    if (ins.empty()) {
      lhs = "()";
    } else if (ins.size() == 1) {
      lhs = ins[0];
    } else {
      lhs = "(";
      for (size_t i = 0; i < ins.size(); i++) {
        if (i) lhs += ", ";
        lhs += ins[i];
      }
      lhs += ")";
    }
    CTypeRef rr = layout::resolve(e.result, unit.table);
    std::string rhs;
    if (rr && rr->tag == CType::Tag::Pointer) {
      rhs = "CPtr(" + moby_type(rr->pointee, unit) + ")";
      fb.def.body = mk_let_ccall("result", e.name, args, mk_return({ex_var("result")}),
                                 {}, ty_addr());
    } else if (rr && rr->tag == CType::Tag::Scalar && rr->scalar == Scalar::Void) {
      rhs = "()";
      fb.def.body = mk_let_ccall("$u0", e.name, args, mk_return({}));
    } else {
      rhs = "Int";
      fb.def.body = mk_let_ccall("result", e.name, args, mk_return({ex_var("result")}),
                                 {}, ext_result);
    }
    fb.hl_type = lhs + " -> " + rhs;
    m.fun_bindings.push_back(std::move(fb));
  }

  res.doc = normalize(res.doc);
  return res;
}

// ---------------------------------------------------------------------------
// C-interface library

const char* c_interface_source() {
  return R"(module CInterface {
  typedef cptr = addr(data)

  external addr(data) malloc (int)
  external void free (addr(data))

  val isNull : [t] CPtr(t) -> Bool =
    fun isNull (p : cptr, _ : exn_handler) {
      let r = AdrEq(p, nil)
      return r
    }

  val deref : [t] CPtr(t) -> LValue(t) =
    fun deref (p : cptr, _ : exn_handler) {
      return p
    }

  val getPtr : [t] LValue(CPtr(t)) -> CPtr(t) =
    fun getPtr (lv : lvalue, _ : exn_handler) {
      let r = AdrLoadAdr(lv)
      return r
    }

  val setPtr : [t] (LValue(CPtr(t)), CPtr(t)) -> () =
    fun setPtr (lv : lvalue, v : cptr, _ : exn_handler) {
      let _ = AdrStoreAdr(lv, v)
      return
    }

  val malloc : [t] SizeOf(t) -> CPtr(t) =
    fun malloc (sz : int, _ : exn_handler) {
      let r = ccall malloc(sz)
      return r
    }

  val free : [t] CPtr(t) -> () =
    fun free (p : cptr, _ : exn_handler) {
      ccall free(p)
      return
    }

  val getSInt : LValue(SInt) -> Int =
    fun getSInt (lv : lvalue, _ : exn_handler) {
      let r = AdrLoadI32(lv)
      return r
    }

  val setSInt : (LValue(SInt), Int) -> () =
    fun setSInt (lv : lvalue, v : int, _ : exn_handler) {
      let _ = AdrStoreI32(lv, v)
      return
    }

  val sizeOfSInt : () -> SizeOf(SInt) =
    fun sizeOfSInt (_ : exn_handler) {
      let n = 4
      return n
    }

  val getSChar : LValue(SChar) -> Int =
    fun getSChar (lv : lvalue, _ : exn_handler) {
      let b = AdrLoadU8(lv)
      let lim = 127
      let big = I32Lt(lim, b)
      if big then {
        let m = 256
        let r = I32Sub(b, m)
        return r
      } else {
        return b
      }
    }

  val setSChar : (LValue(SChar), Int) -> () =
    fun setSChar (lv : lvalue, v : int, _ : exn_handler) {
      let _ = AdrStoreU8(lv, v)
      return
    }

  val sizeOfSChar : () -> SizeOf(SChar) =
    fun sizeOfSChar (_ : exn_handler) {
      let n = 1
      return n
    }

  val getUChar : LValue(UChar) -> Int =
    fun getUChar (lv : lvalue, _ : exn_handler) {
      let r = AdrLoadU8(lv)
      return r
    }

  val setUChar : (LValue(UChar), Int) -> () =
    fun setUChar (lv : lvalue, v : int, _ : exn_handler) {
      let _ = AdrStoreU8(lv, v)
      return
    }

  val sizeOfUChar : () -> SizeOf(UChar) =
    fun sizeOfUChar (_ : exn_handler) {
      let n = 1
      return n
    }
}
)";
}

MbiDocument c_interface_library(const TargetConfig& target) {
  ParseResult parsed = parse_mbx(c_interface_source(), "cinterface.mbx", target);
  // the source is a fixed asset; parse failures here are programming errors
  return normalize(parsed.doc);
}

}  // namespace mbx::charon
