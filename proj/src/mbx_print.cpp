#include <sstream>

#include "mbx/mbx_format.hpp"

// MBX pretty-printer.  Output is itself valid MBX; printing a parsed
// document and reparsing it yields a structurally equal document.

namespace mbx {
namespace {

struct PrintCtx {
  std::vector<const TypeDef*> typedefs;
  TargetConfig target;

  PrintCtx() = default;
  explicit PrintCtx(const MbiDocument& doc) : target(doc.target) {
    for (const auto& td : doc.module.typedefs) typedefs.push_back(&td);
  }

  // Prefer a typedef name when the structural type matches one.
  const std::string* typedef_name(const IRTypeRef& t) const {
    for (const TypeDef* td : typedefs) {
      if (type_equal(td->type, t)) return &td->name;
    }
    return nullptr;
  }

  std::string type(const IRTypeRef& t) const {
    if (!t) return "void";
    if (t->tag != IRType::Tag::AddrData && t->tag != IRType::Tag::IntN) {
      if (const std::string* n = typedef_name(t)) return *n;
    }
    std::ostringstream os;
    switch (t->tag) {
      case IRType::Tag::EnumRange:
        os << "enum(" << t->lo << "," << t->hi << ")";
        break;
      case IRType::Tag::IntN:
        if (t->bits == 32) os << "int";
        else os << "int" << t->bits;
        break;
      case IRType::Tag::AddrData:
        os << "addr(data)";
        break;
      case IRType::Tag::Ptr:
        os << "ptr(" << type(t->elem) << ")";
        break;
      case IRType::Tag::Vector: {
        auto es = byte_size(t->elem, target);
        os << "vector(" << (es ? std::to_string(*es) : "0") << ", " << type(t->elem);
        if (t->count) os << ", " << *t->count;
        os << ")";
        break;
      }
      case IRType::Tag::StructLayout: {
        os << "struct " << t->size << ":" << t->align << " (";
        for (size_t i = 0; i < t->fields.size(); i++) {
          if (i) os << ", ";
          os << t->fields[i].offset << ": " << type(t->fields[i].type);
        }
        os << ")";
        break;
      }
      case IRType::Tag::CFun: {
        os << "cfun((";
        for (size_t i = 0; i < t->params.size(); i++) {
          if (i) os << ", ";
          os << type(t->params[i]);
        }
        os << ") -> " << type(t->result) << ")";
        break;
      }
      case IRType::Tag::StructParam:
        os << "sparam(" << type(t->layout) << ")";
        break;
      case IRType::Tag::Void:
      case IRType::Tag::Unknown:
        os << "void";
        break;
    }
    return os.str();
  }
};

std::string escape_str(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      case '\0': out += "\\0"; break;
      default: out += c;
    }
  }
  out += '"';
  return out;
}

std::string lit_str(const Literal& l) {
  switch (l.tag) {
    case Literal::Tag::Int: return std::to_string(l.ival);
    case Literal::Tag::Nil: return "nil";
    case Literal::Tag::Str: return escape_str(l.sval);
  }
  return "0";
}

std::string display_name(const std::string& v) {
  // `_` binders are parsed into unique `$u<n>` names; print them back as `_`
  if (!v.empty() && v[0] == '$') return "_";
  return v;
}

struct TermPrinter {
  const PrintCtx& ctx;
  std::ostringstream os{};

  void pad(int n) {
    for (int i = 0; i < n; i++) os << ' ';
  }

  std::string expr(const ExprPtr& e) {
    if (!e) return "?";
    std::ostringstream s;
    switch (e->tag) {
      case Expr::Tag::Var:
        return e->name;
      case Expr::Tag::Lit:
        return lit_str(e->lit);
      case Expr::Tag::Prim:
        s << primop_info(e->op).name;
        break;
      case Expr::Tag::Select:
        return expr(e->args[0]) + "#" + std::to_string(e->index);
      case Expr::Tag::Alloc:
        s << "alloc";
        break;
      case Expr::Tag::CCall:
        s << "ccall " << e->name;
        break;
      case Expr::Tag::Call:
        s << e->name;
        break;
    }
    s << "(";
    for (size_t i = 0; i < e->args.size(); i++) {
      if (i) s << ", ";
      s << expr(e->args[i]);
    }
    s << ")";
    return s.str();
  }

  void term(const TermPtr& t, int indent) {
    if (!t) return;
    pad(indent);
    switch (t->tag) {
      case Term::Tag::LetLit:
        os << "let " << display_name(t->vars[0]);
        if (t->type_note) os << " : " << ctx.type(*t->type_note);
        os << " = " << lit_str(t->lit) << "\n";
        term(t->body, indent);
        return;
      case Term::Tag::LetPrim:
      case Term::Tag::LetAlloc:
      case Term::Tag::LetCCall: {
        os << "let " << display_name(t->vars[0]);
        if (t->type_note) os << " : " << ctx.type(*t->type_note);
        os << " = ";
        Expr e;
        e.tag = t->tag == Term::Tag::LetPrim    ? Expr::Tag::Prim
                : t->tag == Term::Tag::LetAlloc ? Expr::Tag::Alloc
                                                : Expr::Tag::CCall;
        e.op = t->op;
        e.name = t->callee;
        e.args = t->args;
        os << expr(std::make_shared<const Expr>(std::move(e))) << "\n";
        term(t->body, indent);
        return;
      }
      case Term::Tag::LetSelect:
        os << "let " << display_name(t->vars[0]);
        if (t->type_note) os << " : " << ctx.type(*t->type_note);
        os << " = " << expr(t->args[0]) << "#" << t->index << "\n";
        term(t->body, indent);
        return;
      case Term::Tag::LetCall: {
        if (t->vars.empty()) {
          os << t->callee;
        } else if (t->vars.size() == 1) {
          os << "let " << display_name(t->vars[0]) << " = " << t->callee;
        } else {
          os << "let (";
          for (size_t i = 0; i < t->vars.size(); i++) {
            if (i) os << ", ";
            os << display_name(t->vars[i]);
          }
          os << ") = " << t->callee;
        }
        os << "(";
        for (size_t i = 0; i < t->args.size(); i++) {
          if (i) os << ", ";
          os << expr(t->args[i]);
        }
        os << ")\n";
        term(t->body, indent);
        return;
      }
      case Term::Tag::LetStackAlloc:
        os << "stackalloc " << display_name(t->vars[0]) << "[" << t->alloc_size
           << ":" << t->alloc_align << "]\n";
        term(t->body, indent);
        return;
      case Term::Tag::If:
        os << "if " << expr(t->cond) << " then {\n";
        term(t->then_branch, indent + 2);
        pad(indent);
        os << "} else {\n";
        term(t->else_branch, indent + 2);
        pad(indent);
        os << "}\n";
        return;
      case Term::Tag::Return:
        if (t->args.size() == 1) {
          os << "return " << expr(t->args[0]) << "\n";
        } else {
          os << "return (";
          for (size_t i = 0; i < t->args.size(); i++) {
            if (i) os << ", ";
            os << expr(t->args[i]);
          }
          os << ")\n";
        }
        return;
    }
  }
};

}  // namespace

std::string print_term(const TermPtr& t, int indent) {
  PrintCtx ctx;
  TermPrinter tp{ctx};
  tp.term(t, indent);
  return tp.os.str();
}

std::string print_mbx(const MbiDocument& doc) {
  PrintCtx ctx(doc);
  std::ostringstream os;
  os << "module " << doc.module.name << " {\n";
  for (const auto& td : doc.module.typedefs) {
    // a typedef may reference earlier typedefs; print its definition against
    // only the names declared before it, so it never prints as its own name
    MbiDocument trimmed = doc;
    trimmed.module.typedefs.clear();
    for (const auto& other : doc.module.typedefs) {
      if (other.name == td.name) break;
      trimmed.module.typedefs.push_back(other);
    }
    PrintCtx prior(trimmed);
    os << "  typedef " << td.name << " = " << prior.type(td.type) << "\n";
  }
  for (const auto& tb : doc.module.type_bindings) {
    if (tb.is_alias) {
      os << "  type " << tb.name << " = " << tb.alias_of << "\n";
    } else {
      os << "  type " << tb.name << " = prim " << ctx.type(tb.type) << "\n";
    }
  }
  for (const auto& ed : doc.module.externals) {
    os << "  external " << ctx.type(ed.signature->result) << " " << ed.name << " (";
    for (size_t i = 0; i < ed.signature->params.size(); i++) {
      if (i) os << ", ";
      os << ctx.type(ed.signature->params[i]);
    }
    os << ")\n";
  }
  for (const auto& fb : doc.module.fun_bindings) {
    os << "\n  val " << fb.name << " : " << fb.hl_type << " =\n";
    os << "    fun " << fb.def.self_name << " (";
    for (size_t i = 0; i < fb.def.params.size(); i++) {
      if (i) os << ", ";
      os << display_name(fb.def.params[i].name) << " : " << ctx.type(fb.def.params[i].type);
    }
    os << ") {\n";
    TermPrinter tp{ctx};
    tp.term(fb.def.body, 6);
    os << tp.os.str();
    os << "    }\n";
  }
  os << "}\n";
  return os.str();
}

bool document_equal(const MbiDocument& a, const MbiDocument& b) {
  if (!(a.target == b.target)) return false;
  const ModuleInterface& ma = a.module;
  const ModuleInterface& mb = b.module;
  if (ma.name != mb.name) return false;
  if (ma.typedefs.size() != mb.typedefs.size() ||
      ma.type_bindings.size() != mb.type_bindings.size() ||
      ma.externals.size() != mb.externals.size() ||
      ma.fun_bindings.size() != mb.fun_bindings.size()) {
    return false;
  }
  for (size_t i = 0; i < ma.typedefs.size(); i++) {
    if (ma.typedefs[i].name != mb.typedefs[i].name) return false;
    if (!type_equal(ma.typedefs[i].type, mb.typedefs[i].type)) return false;
  }
  for (size_t i = 0; i < ma.type_bindings.size(); i++) {
    const auto& x = ma.type_bindings[i];
    const auto& y = mb.type_bindings[i];
    if (x.name != y.name || x.is_alias != y.is_alias || x.alias_of != y.alias_of)
      return false;
    if (!x.is_alias && !type_equal(x.type, y.type)) return false;
  }
  for (size_t i = 0; i < ma.externals.size(); i++) {
    if (ma.externals[i].name != mb.externals[i].name) return false;
    if (!type_equal(ma.externals[i].signature, mb.externals[i].signature))
      return false;
  }
  for (size_t i = 0; i < ma.fun_bindings.size(); i++) {
    const auto& x = ma.fun_bindings[i];
    const auto& y = mb.fun_bindings[i];
    if (x.name != y.name || x.hl_type != y.hl_type) return false;
    if (x.def.self_name != y.def.self_name) return false;
    if (x.def.params.size() != y.def.params.size()) return false;
    for (size_t j = 0; j < x.def.params.size(); j++) {
      if (x.def.params[j].name != y.def.params[j].name) return false;
      if (!type_equal(x.def.params[j].type, y.def.params[j].type)) return false;
    }
    if (!term_identical(x.def.body, y.def.body)) return false;
  }
  return true;
}

}  // namespace mbx
