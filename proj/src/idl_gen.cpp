#include <cctype>
#include <functional>
#include <optional>

#include "mbx/idl_gen.hpp"
#include "mbx/mbx_format.hpp"

namespace mbx::idl {
namespace {

using layout::CDeclTable;
using layout::CField;
using layout::CStructDef;
using layout::CType;
using layout::CTypeRef;
using layout::Scalar;

// ---------------------------------------------------------------------------
// Lexer

struct Token {
  enum class Kind { Ident, Punct, End };
  Kind kind = Kind::End;
  std::string text;
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
    } else if (std::string("[]*(){},;").find(c) != std::string::npos) {
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
  IdlUnit& unit;
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

  static std::optional<Attr> attr_of(const std::string& s) {
    if (s == "in") return Attr::In;
    if (s == "out") return Attr::Out;
    if (s == "ref") return Attr::Ref;
    if (s == "unique") return Attr::Unique;
    if (s == "string") return Attr::Str;
    return std::nullopt;
  }

  std::set<Attr> parse_attrs() {
    std::set<Attr> attrs;
    if (!eat_punct("[")) return attrs;
    do {
      SourceSpan sp = span_here();
      std::string name = expect_ident("attribute name");
      if (name.empty()) break;
      auto a = attr_of(name);
      if (!a) {
        diags.push_back({Severity::Error, "unknown attribute " + name, sp});
      } else {
        attrs.insert(*a);
      }
    } while (eat_punct(","));
    expect_punct("]");
    return attrs;
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
    if (uns) return layout::ct_scalar(Scalar::UInt);  // bare `unsigned`
    error("expected a type");
    take();
    return layout::ct_scalar(Scalar::Int);
  }

  // Struct body: `{ type declarator ; ... }`.  Attributes are not allowed on
  // fields in this subset.
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
        def.fields.push_back({fname, ft});
      } while (eat_punct(","));
      expect_punct(";");
    }
    expect_punct("}");
    return def;
  }

  // Base type without pointer declarators: scalars, `struct tag`, an inline
  // struct definition, or a typedef name.
  CTypeRef parse_type_spec() {
    if (at_ident("struct")) {
      take();
      std::string tag;
      if (cur().kind == Token::Kind::Ident) tag = take().text;
      if (at_punct("{")) {
        if (tag.empty()) tag = "$anon" + std::to_string(anon_structs++);
        CStructDef def = parse_struct_body(tag);
        if (unit.table.structs.count(tag)) {
          error("duplicate struct tag '" + tag + "'");
        }
        unit.table.structs[tag] = std::move(def);
        unit.struct_order.push_back(tag);
        return layout::ct_named(tag);
      }
      if (tag.empty()) error("expected struct tag");
      return layout::ct_named(tag);
    }
    if (is_scalar_word(cur().text) && cur().kind == Token::Kind::Ident) {
      return parse_scalar();
    }
    if (cur().kind == Token::Kind::Ident) return layout::ct_named(take().text);
    error("expected a type");
    take();
    return layout::ct_scalar(Scalar::Int);
  }

  // Registers a typedef name, renaming an anonymous tag after its first
  // declarator so `typedef struct { ... } timeval;` defines struct timeval.
  void register_typedef(const std::string& name, const std::set<Attr>& attrs,
                        CTypeRef type, SourceSpan sp) {
    if (type->tag == CType::Tag::Named && type->name == name) {
      // `typedef struct X {} X;`: the tag already covers the name
    } else {
      unit.table.typedefs[name] = type;
    }
    unit.typedefs.push_back({name, attrs, std::move(type), sp});
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
    std::set<Attr> attrs = parse_attrs();
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
      // an anonymous inline struct takes its name from the first plain alias
      if (first && stars == 0 && base->tag == CType::Tag::Named &&
          base->name.rfind("$anon", 0) == 0) {
        rename_anon_tag(base->name, name);
        base = layout::ct_named(name);
        t = base;
      }
      register_typedef(name, attrs, t, sp);
      first = false;
    } while (eat_punct(","));
    expect_punct(";");
  }

  void parse_proto(CTypeRef result, const std::string& result_typedef) {
    IdlProto proto;
    proto.span = span_here();
    proto.result = std::move(result);
    proto.result_typedef = result_typedef;
    proto.name = expect_ident("function name");
    expect_punct("(");
    if (at_ident("void") && peek(1).kind == Token::Kind::Punct && peek(1).text == ")") {
      take();
    } else if (!at_punct(")")) {
      do {
        IdlParam p;
        p.span = span_here();
        p.attrs = parse_attrs();
        CTypeRef t = parse_type_spec();
        while (eat_punct("*")) t = layout::ct_ptr(t);
        p.type = std::move(t);
        p.name = expect_ident("parameter name");
        bool has_in = p.attrs.count(Attr::In) != 0;
        bool has_out = p.attrs.count(Attr::Out) != 0;
        if (!has_in && !has_out) {
          diags.push_back(
              {Severity::Error, "parameter '" + p.name + "' needs a direction attribute",
               p.span});
        }
        if (has_out && p.type->tag != CType::Tag::Pointer) {
          diags.push_back(
              {Severity::Error, "out parameter '" + p.name + "' must be a pointer",
               p.span});
        }
        proto.params.push_back(std::move(p));
      } while (eat_punct(","));
    }
    expect_punct(")");
    expect_punct(";");
    unit.protos.push_back(std::move(proto));
  }

  void run() {
    while (cur().kind != Token::Kind::End) {
      if (eat_ident("typedef")) {
        parse_typedef();
        continue;
      }
      if (at_ident("struct") &&
          (peek(2).kind == Token::Kind::Punct && peek(2).text == "{")) {
        CTypeRef t = parse_type_spec();  // registers the definition
        (void)t;
        expect_punct(";");
        continue;
      }
      // prototype: result type, then name(params);
      std::string result_typedef;
      if (cur().kind == Token::Kind::Ident && !is_scalar_word(cur().text) &&
          !at_ident("struct")) {
        result_typedef = cur().text;
      }
      CTypeRef result = parse_type_spec();
      while (eat_punct("*")) result = layout::ct_ptr(result);
      parse_proto(std::move(result), result_typedef);
    }
  }
};

// ---------------------------------------------------------------------------
// Classification

enum class ParamKind { InScalar, InString, InStructVal, OutScalar, OutStruct };
enum class ResultKind { Void, Scalar, OptString };

struct ParamPlan {
  ParamKind kind = ParamKind::InScalar;
  const IdlParam* p = nullptr;
  CTypeRef resolved;        // value type: scalar, or the struct Named type
  std::string struct_tag;   // when a struct is involved
};

struct ProtoPlan {
  const IdlProto* proto = nullptr;
  ResultKind result = ResultKind::Void;
  Scalar result_scalar = Scalar::Int;
  std::vector<ParamPlan> params;
};

std::string cap_name(const std::string& s) {
  std::string r = s;
  if (!r.empty()) r[0] = static_cast<char>(toupper(static_cast<unsigned char>(r[0])));
  return r;
}

std::string upper_name(const std::string& s) {
  std::string r = s;
  for (char& c : r) c = static_cast<char>(toupper(static_cast<unsigned char>(c)));
  return r;
}

bool is_char_ptr(const CTypeRef& t, const CDeclTable& table) {
  CTypeRef r = layout::resolve(t, table);
  if (!r || r->tag != CType::Tag::Pointer) return false;
  CTypeRef inner = layout::resolve(r->pointee, table);
  return inner && inner->tag == CType::Tag::Scalar &&
         (inner->scalar == Scalar::Char || inner->scalar == Scalar::UChar);
}

// Field types we can copy in and out of C structs: integer words and
// pointers.  Sub-word fields would need sign handling that no supported
// interface exercises.
bool marshalable_field(const CTypeRef& t, const CDeclTable& table) {
  CTypeRef r = layout::resolve(t, table);
  if (!r) return false;
  if (r->tag == CType::Tag::Pointer) return true;
  if (r->tag != CType::Tag::Scalar) return false;
  switch (r->scalar) {
    case Scalar::Int:
    case Scalar::UInt:
    case Scalar::Long:
    case Scalar::ULong:
      return true;
    default:
      return false;
  }
}

PrimOp field_load_op(const CTypeRef& t, const CDeclTable& table,
                     const TargetConfig& target) {
  CTypeRef r = layout::resolve(t, table);
  if (r->tag == CType::Tag::Pointer) return PrimOp::AdrLoadAdr;
  if (r->scalar == Scalar::Long || r->scalar == Scalar::ULong) {
    return target.word_size == 64 ? PrimOp::AdrLoadI64 : PrimOp::AdrLoadI32;
  }
  return PrimOp::AdrLoadI32;
}

PrimOp field_store_op(const CTypeRef& t, const CDeclTable& table,
                      const TargetConfig& target) {
  CTypeRef r = layout::resolve(t, table);
  if (r->tag == CType::Tag::Pointer) return PrimOp::AdrStoreAdr;
  if (r->scalar == Scalar::Long || r->scalar == Scalar::ULong) {
    return target.word_size == 64 ? PrimOp::AdrStoreI64 : PrimOp::AdrStoreI32;
  }
  return PrimOp::AdrStoreI32;
}

std::optional<ProtoPlan> plan_proto(const IdlUnit& unit, const IdlProto& proto,
                                    DiagnosticList& diags) {
  ProtoPlan plan;
  plan.proto = &proto;
  bool ok = true;

  // result
  std::set<Attr> rattrs;
  if (!proto.result_typedef.empty()) {
    if (const IdlTypedef* td = unit.find_typedef(proto.result_typedef)) {
      rattrs = td->attrs;
    }
  }
  CTypeRef rres = layout::resolve(proto.result, unit.table);
  if (rres->tag == CType::Tag::Scalar && rres->scalar == Scalar::Void) {
    plan.result = ResultKind::Void;
  } else if (rres->tag == CType::Tag::Scalar) {
    plan.result = ResultKind::Scalar;
    plan.result_scalar = rres->scalar;
  } else if (is_char_ptr(proto.result, unit.table) && rattrs.count(Attr::Str) &&
             rattrs.count(Attr::Unique)) {
    plan.result = ResultKind::OptString;
  } else {
    diags.push_back({Severity::Error,
                     "unsupported result type for '" + proto.name + "'", proto.span});
    ok = false;
  }

  for (const IdlParam& p : proto.params) {
    ParamPlan pp;
    pp.p = &p;
    std::set<Attr> attrs = p.attrs;
    if (p.type->tag == CType::Tag::Named) {
      if (const IdlTypedef* td = unit.find_typedef(p.type->name)) {
        attrs.insert(td->attrs.begin(), td->attrs.end());
      }
    }
    bool has_in = attrs.count(Attr::In) != 0;
    bool has_out = attrs.count(Attr::Out) != 0;
    CTypeRef r = layout::resolve(p.type, unit.table);
    if (has_in && has_out) {
      diags.push_back({Severity::Error,
                       "in/out parameter '" + p.name + "' is not supported", p.span});
      ok = false;
    } else if (has_in) {
      if (attrs.count(Attr::Str)) {
        if (!is_char_ptr(p.type, unit.table)) {
          diags.push_back({Severity::Error,
                           "string parameter '" + p.name + "' must be char*", p.span});
          ok = false;
        }
        pp.kind = ParamKind::InString;
      } else if (r->tag == CType::Tag::Scalar && r->scalar != Scalar::Void) {
        pp.kind = ParamKind::InScalar;
        pp.resolved = r;
      } else if (r->tag == CType::Tag::Named &&
                 unit.table.find_struct(r->name) != nullptr) {
        pp.kind = ParamKind::InStructVal;
        pp.struct_tag = r->name;
      } else {
        diags.push_back({Severity::Error,
                         "unsupported in parameter type for '" + p.name + "'", p.span});
        ok = false;
      }
    } else if (has_out) {
      if (r->tag != CType::Tag::Pointer) {
        ok = false;  // already diagnosed at parse time
      } else {
        CTypeRef inner = layout::resolve(r->pointee, unit.table);
        if (inner->tag == CType::Tag::Named &&
            unit.table.find_struct(inner->name) != nullptr) {
          pp.kind = ParamKind::OutStruct;
          pp.struct_tag = inner->name;
        } else if (inner->tag == CType::Tag::Scalar &&
                   marshalable_field(inner, unit.table)) {
          pp.kind = ParamKind::OutScalar;
          pp.resolved = inner;
        } else {
          diags.push_back({Severity::Error,
                           "unsupported out parameter type for '" + p.name + "'",
                           p.span});
          ok = false;
        }
      }
    } else {
      ok = false;  // missing direction, diagnosed at parse time
    }
    plan.params.push_back(std::move(pp));
  }

  // every field of every struct crossing the boundary must be copyable
  for (const ParamPlan& pp : plan.params) {
    if (pp.struct_tag.empty()) continue;
    const CStructDef* def = unit.table.find_struct(pp.struct_tag);
    if (!def) {
      diags.push_back({Severity::Error, "undefined struct '" + pp.struct_tag + "'",
                       pp.p->span});
      ok = false;
      continue;
    }
    for (const CField& f : def->fields) {
      if (!marshalable_field(f.type, unit.table)) {
        diags.push_back({Severity::Error,
                         "unsupported field type for marshaling: " + pp.struct_tag +
                             "." + f.name,
                         pp.p->span});
        ok = false;
      }
    }
  }

  if (!ok) return std::nullopt;
  return plan;
}

// ---------------------------------------------------------------------------
// Signature rendering

std::string moby_param_type(const ParamPlan& pp) {
  switch (pp.kind) {
    case ParamKind::InString:
      return "String";
    case ParamKind::InScalar:
      return "Int";
    case ParamKind::InStructVal:
      return cap_name(pp.struct_tag);
    default:
      return "";
  }
}

std::string moby_result_tuple(const ProtoPlan& plan) {
  std::vector<std::string> parts;
  if (plan.result == ResultKind::Scalar) parts.push_back("Int");
  if (plan.result == ResultKind::OptString) parts.push_back("Option(String)");
  for (const ParamPlan& pp : plan.params) {
    if (pp.kind == ParamKind::OutStruct) parts.push_back(cap_name(pp.struct_tag));
    if (pp.kind == ParamKind::OutScalar) parts.push_back("Int");
  }
  if (parts.empty()) return "()";
  if (parts.size() == 1) return parts[0];
  std::string out = "(";
  for (size_t i = 0; i < parts.size(); i++) {
    if (i) out += ", ";
    out += parts[i];
  }
  return out + ")";
}

std::string moby_fun_type(const ProtoPlan& plan) {
  std::vector<std::string> ins;
  for (const ParamPlan& pp : plan.params) {
    std::string t = moby_param_type(pp);
    if (!t.empty()) ins.push_back(t);
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
  return lhs + " -> " + moby_result_tuple(plan);
}

// ---------------------------------------------------------------------------
// Stub construction

// Terms are built front-to-back as wrapper steps and folded over the tail.
struct BodyBuilder {
  std::vector<std::function<TermPtr(TermPtr)>> steps;
  std::set<std::string> taken;
  int scratch = 0;

  std::string claim(std::string base) {
    while (taken.count(base)) base += "_";
    taken.insert(base);
    return base;
  }
  std::string scratch_name() { return "$u" + std::to_string(scratch++); }

  TermPtr finish(TermPtr tail) {
    for (auto it = steps.rbegin(); it != steps.rend(); ++it) tail = (*it)(tail);
    return tail;
  }
};

ExprPtr field_addr(const std::string& base, uint64_t offset) {
  if (offset == 0) return ex_var(base);
  return ex_prim(PrimOp::AdrAdd,
                 {ex_var(base), ex_lit(Literal::make_int(static_cast<int64_t>(offset)))});
}

}  // namespace

// ---------------------------------------------------------------------------
// Public entry points

IdlParseResult parse_idl(const std::string& text, const std::string& filename) {
  IdlParseResult res;
  std::vector<Token> toks = lex(text, filename, res.diags);
  Parser p{std::move(toks), 0, filename, res.diags, res.unit};
  p.run();
  return res;
}

std::string gen_signature(const IdlUnit& unit) {
  std::string out;
  DiagnosticList scratch;
  for (const std::string& tag : unit.struct_order) {
    const CStructDef* def = unit.table.find_struct(tag);
    if (!def) continue;
    out += "datatype " + cap_name(tag) + " { " + upper_name(tag) + " of (";
    for (size_t i = 0; i < def->fields.size(); i++) {
      if (i) out += ", ";
      CTypeRef r = layout::resolve(def->fields[i].type, unit.table);
      out += (r && r->tag == CType::Tag::Pointer) ? "Addr" : "Int";
    }
    out += ") }\n";
  }
  if (!unit.struct_order.empty() && !unit.protos.empty()) out += "\n";
  for (const IdlProto& proto : unit.protos) {
    auto plan = plan_proto(unit, proto, scratch);
    if (!plan) continue;
    out += "val " + proto.name + " : " + moby_fun_type(*plan) + "\n";
  }
  return out;
}

GenResult gen_stubs(const IdlUnit& unit, const std::string& module_name,
                    const TargetConfig& target) {
  GenResult res;
  ModuleInterface& m = res.doc.module;
  res.doc.target = target;
  m.name = module_name;

  bool uses_string = false;
  std::vector<ProtoPlan> plans;
  for (const IdlProto& proto : unit.protos) {
    auto plan = plan_proto(unit, proto, res.diags);
    if (!plan) continue;
    plans.push_back(std::move(*plan));
  }

  for (const ProtoPlan& plan : plans) {
    const IdlProto& proto = *plan.proto;
    BodyBuilder b;
    // out parameters are not wrapper parameters; only in-names are reserved
    for (const ParamPlan& pp : plan.params) {
      if (pp.kind != ParamKind::OutScalar && pp.kind != ParamKind::OutStruct)
        b.taken.insert(pp.p->name);
    }
    b.taken.insert("eh");
    std::map<const IdlParam*, std::string> out_buf;

    // wrapper parameters: in-params in order, then the exception handler
    std::vector<Param> params;
    std::vector<IRTypeRef> ext_params;
    std::vector<ExprPtr> call_args;
    std::vector<std::string> out_results;

    for (const ParamPlan& pp : plan.params) {
      const std::string& pname = pp.p->name;
      switch (pp.kind) {
        case ParamKind::InString: {
          uses_string = true;
          params.push_back({pname, string_ptr_type(target), pp.p->span});
          ext_params.push_back(ty_addr());
          std::string c_name = b.claim("c_" + pname);
          // unpack the data pointer (field 1 of the string object)
          b.steps.push_back([c_name, pname](TermPtr body) {
            return mk_let_select(c_name, ex_var(pname), 1, std::move(body));
          });
          call_args.push_back(ex_var(c_name));
          break;
        }
        case ParamKind::InScalar: {
          IRTypeRef ty = layout::promote_param(pp.p->type, unit.table, target);
          params.push_back({pname, ty, pp.p->span});
          ext_params.push_back(ty);
          call_args.push_back(ex_var(pname));
          break;
        }
        case ParamKind::InStructVal: {
          const CStructDef* def = unit.table.find_struct(pp.struct_tag);
          layout::CLayout lay = layout::layout_of_struct(*def, unit.table, target);
          IRTypeRef ir_struct = layout::to_ir_struct(*def, unit.table, target);
          params.push_back({pname, ty_ptr(ir_struct), pp.p->span});
          ext_params.push_back(ty_struct_param(ir_struct));
          std::string buf = b.claim("b_" + pname);
          b.steps.push_back([buf, size = lay.size, align = lay.align](TermPtr body) {
            return mk_stack_alloc(buf, size, align, std::move(body));
          });
          for (size_t i = 0; i < def->fields.size(); i++) {
            PrimOp op = field_store_op(def->fields[i].type, unit.table, target);
            uint64_t off = lay.field_offsets[i];
            std::string s = b.scratch_name();
            int idx = static_cast<int>(i);
            b.steps.push_back([s, op, buf, off, pname, idx](TermPtr body) {
              return mk_let_prim(
                  s, op, {field_addr(buf, off), ex_select(ex_var(pname), idx)},
                  std::move(body));
            });
          }
          call_args.push_back(ex_var(buf));
          break;
        }
        case ParamKind::OutScalar:
        case ParamKind::OutStruct: {
          ext_params.push_back(ty_addr());
          uint64_t size, align;
          if (pp.kind == ParamKind::OutStruct) {
            const CStructDef* def = unit.table.find_struct(pp.struct_tag);
            layout::CLayout lay = layout::layout_of_struct(*def, unit.table, target);
            size = lay.size;
            align = lay.align;
          } else {
            layout::CLayout lay = layout::layout_of(pp.resolved, unit.table, target);
            size = lay.size;
            align = lay.align;
          }
          std::string buf = b.claim(pname);
          out_buf[pp.p] = buf;
          b.steps.push_back([buf, size, align](TermPtr body) {
            return mk_stack_alloc(buf, size, align, std::move(body));
          });
          call_args.push_back(ex_var(buf));
          break;
        }
      }
    }
    params.push_back({"eh", ty_addr(), proto.span});

    // the foreign call itself
    std::string res_var =
        plan.result == ResultKind::Void ? b.scratch_name() : b.claim("res");
    b.steps.push_back([res_var, name = proto.name, call_args](TermPtr body) {
      return mk_let_ccall(res_var, name, call_args, std::move(body));
    });

    // copy-out: one fresh heap object per out parameter
    for (const ParamPlan& pp : plan.params) {
      const std::string& pname = pp.p->name;
      if (pp.kind == ParamKind::OutStruct) {
        const std::string& buf = out_buf[pp.p];
        const CStructDef* def = unit.table.find_struct(pp.struct_tag);
        layout::CLayout lay = layout::layout_of_struct(*def, unit.table, target);
        std::vector<ExprPtr> loads;
        for (size_t i = 0; i < def->fields.size(); i++) {
          PrimOp op = field_load_op(def->fields[i].type, unit.table, target);
          loads.push_back(ex_prim(op, {field_addr(buf, lay.field_offsets[i])}));
        }
        std::string dst = b.claim(pname + "2");
        b.steps.push_back([dst, loads](TermPtr body) {
          return mk_let_alloc(dst, loads, std::move(body));
        });
        out_results.push_back(dst);
      } else if (pp.kind == ParamKind::OutScalar) {
        const std::string& buf = out_buf[pp.p];
        PrimOp op = field_load_op(pp.resolved, unit.table, target);
        std::string dst = b.claim(pname + "2");
        b.steps.push_back([dst, op, buf](TermPtr body) {
          return mk_let_prim(dst, op, {ex_var(buf)}, std::move(body));
        });
        out_results.push_back(dst);
      }
    }

    // result tuple: C return value first, then the copied-out objects
    TermPtr tail;
    auto returns_with_head = [&](ExprPtr head) {
      std::vector<ExprPtr> vals;
      if (head) vals.push_back(std::move(head));
      for (const std::string& r : out_results) vals.push_back(ex_var(r));
      return mk_return(std::move(vals));
    };
    if (plan.result == ResultKind::OptString) {
      uses_string = true;
      std::string s_var = b.claim("res_str");
      std::string some_var = b.claim("res2");
      TermPtr none_branch = returns_with_head(ex_lit(Literal::make_int(0)));
      TermPtr some_branch = mk_let_ccall(
          s_var, "MOBY_AllocCString", {ex_var(res_var)},
          mk_let_alloc(some_var, {ex_var(s_var)}, returns_with_head(ex_var(some_var))));
      tail = mk_if(ex_prim(PrimOp::AdrEq, {ex_var(res_var), ex_lit(Literal::make_nil())}),
                   std::move(none_branch), std::move(some_branch));
    } else if (plan.result == ResultKind::Scalar) {
      tail = returns_with_head(ex_var(res_var));
    } else {
      tail = returns_with_head(nullptr);
    }

    FunBinding fb;
    fb.name = proto.name;
    fb.hl_type = moby_fun_type(plan);
    fb.span = proto.span;
    fb.def.self_name = proto.name;
    fb.def.params = std::move(params);
    fb.def.body = b.finish(std::move(tail));
    fb.def.span = proto.span;
    m.fun_bindings.push_back(std::move(fb));

    // matching external for the raw C entry point
    IRTypeRef ext_result;
    switch (plan.result) {
      case ResultKind::Void:
        ext_result = ty_void();
        break;
      case ResultKind::OptString:
        ext_result = ty_addr();
        break;
      case ResultKind::Scalar:
        ext_result =
            (plan.result_scalar == Scalar::Long || plan.result_scalar == Scalar::ULong)
                ? ty_int(target.word_size)
                : ty_int(32);
        break;
    }
    m.externals.push_back({proto.name, ty_cfun(std::move(ext_params), ext_result),
                           proto.span});
  }

  if (uses_string) {
    // string representation: length word plus pointer to NUL-terminated data
    m.typedefs.push_back({"char", ty_enum(0, 255), {}});
    m.typedefs.push_back({"string", string_ptr_type(target), {}});
    m.externals.push_back(
        {"MOBY_AllocCString", ty_cfun({ty_addr()}, ty_addr()), {}});
  }

  res.doc = normalize(res.doc);
  return res;
}

}  // namespace mbx::idl
