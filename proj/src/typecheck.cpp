#include "mbx/typecheck.hpp"

#include <algorithm>
#include <set>

namespace mbx {
namespace {

bool is_intish(const IRTypeRef& t) {
  return t->tag == IRType::Tag::IntN || t->tag == IRType::Tag::EnumRange ||
         t->tag == IRType::Tag::Unknown;
}

bool is_addrish(const IRTypeRef& t) {
  return t->tag == IRType::Tag::AddrData || t->tag == IRType::Tag::Ptr ||
         t->tag == IRType::Tag::CFun || t->tag == IRType::Tag::Unknown;
}

// Weak compatibility at argument positions: addresses interchange,
// integer widths interchange, Unknown matches anything.
bool arg_compatible(const IRTypeRef& want, const IRTypeRef& have) {
  if (want->tag == IRType::Tag::Unknown || have->tag == IRType::Tag::Unknown)
    return true;
  if (is_intish(want) && is_intish(have)) return true;
  if (is_addrish(want) && is_addrish(have)) return true;
  if (want->tag == IRType::Tag::StructParam) {
    if (have->tag == IRType::Tag::AddrData) return true;  // e.g. a stack block
    if (have->tag == IRType::Tag::Ptr &&
        have->elem->tag == IRType::Tag::StructLayout) {
      return type_equal(want->layout, have->elem);
    }
    return false;
  }
  return type_equal(want, have);
}

// Join of result types across multiple returns.
IRTypeRef weak_join(const IRTypeRef& a, const IRTypeRef& b, bool& ok) {
  if (a->tag == IRType::Tag::Unknown) return b;
  if (b->tag == IRType::Tag::Unknown) return a;
  if (type_equal(a, b)) return a;
  if (is_addrish(a) && is_addrish(b)) return ty_addr();
  if (is_intish(a) && is_intish(b)) return ty_int(32);
  // a word from one branch and an address from the other is the tagged-union
  // idiom (0 for None, a pointer otherwise); the join is simply unknown
  if ((is_intish(a) && is_addrish(b)) || (is_addrish(a) && is_intish(b)))
    return ty_unknown();
  ok = false;
  return a;
}

struct FunSite {
  const MbiDocument* doc;
  const FunBinding* binding;
  int arity;  // syntactic return arity, -1 if inconsistent
  std::string canonical;  // program-wide name: "<module>.<binding>"
};

struct Checker {
  const TypeEnv& env;
  const MbiDocument& doc;
  CheckedModule result;

  // flat indexes over the whole environment
  std::map<std::string, std::vector<FunSite>> fun_index;
  std::map<std::string, std::vector<const ExternalDecl*>> ext_index;

  Checker(const TypeEnv& e, const MbiDocument& d) : env(e), doc(d) {}

  void error(const SourceSpan& sp, const std::string& msg) {
    result.diags.push_back({Severity::Error, msg, sp});
  }

  static int syntactic_arity(const FunDef& f, bool* consistent) {
    std::vector<int> as = return_arities(f.body);
    if (as.empty()) {
      if (consistent) *consistent = true;
      return 0;
    }
    bool same = std::all_of(as.begin(), as.end(), [&](int a) { return a == as[0]; });
    if (consistent) *consistent = same;
    return same ? as[0] : -1;
  }

  void index_module(const MbiDocument* m) {
    for (const auto& fb : m->module.fun_bindings) {
      std::string canon = program_name(*m, fb);
      FunSite site{m, &fb, syntactic_arity(fb.def, nullptr), canon};
      fun_index[fb.name].push_back(site);
      // bindings are also reachable under their module-qualified name
      if (canon != fb.name) fun_index[canon].push_back(site);
    }
    for (const auto& ed : m->module.externals) {
      ext_index[ed.name].push_back(&ed);
    }
  }

  void build_indexes() {
    index_module(&doc);
    for (const MbiDocument* m : env.modules) {
      if (m == &doc) continue;
      if (!(m->target == env.target)) {
        error({}, "module '" + m->module.name + "' was built for a different target");
      }
      index_module(m);
    }
  }

  const FunSite* resolve_fun(const std::string& name, const FunBinding* self,
                             const SourceSpan& sp) {
    if (self && name == self->def.self_name) {
      auto& sites = fun_index[self->name];
      for (const auto& s : sites) {
        if (s.binding == self) return &s;
      }
    }
    auto it = fun_index.find(name);
    if (it == fun_index.end()) {
      error(sp, "call to unknown function '" + name + "'");
      return nullptr;
    }
    // prefer a definition in the current module
    const FunSite* local = nullptr;
    int local_count = 0;
    for (const auto& s : it->second) {
      if (s.doc == &doc) {
        local = &s;
        local_count++;
      }
    }
    if (local_count == 1) return local;
    if (it->second.size() == 1) return &it->second[0];
    error(sp, "ambiguous function name '" + name + "' (defined in multiple modules)");
    return nullptr;
  }

  const ExternalDecl* resolve_external(const std::string& name, const SourceSpan& sp) {
    auto it = ext_index.find(name);
    if (it == ext_index.end()) {
      error(sp, "ccall to unknown C function '" + name + "'");
      return nullptr;
    }
    // duplicate declarations are fine as long as the signatures agree
    for (size_t i = 1; i < it->second.size(); i++) {
      if (!type_equal(it->second[i]->signature, it->second[0]->signature)) {
        error(sp, "conflicting declarations for C function '" + name + "'");
        return nullptr;
      }
    }
    return it->second[0];
  }

  void check_declared_types() {
    auto report = [&](const SourceSpan& sp, const std::string& what,
                      const IRTypeRef& t) {
      for (const auto& v : well_formed(t, env.target)) {
        error(sp, what + ": " + v);
      }
    };
    for (const auto& td : doc.module.typedefs) {
      report(td.span, "typedef '" + td.name + "'", td.type);
    }
    std::set<std::string> type_names;
    for (const auto& tb : doc.module.type_bindings) {
      if (!type_names.insert(tb.name).second) {
        error(tb.span, "duplicate type '" + tb.name + "'");
      }
      if (!tb.is_alias) report(tb.span, "type '" + tb.name + "'", tb.type);
    }
    for (const auto& tb : doc.module.type_bindings) {
      if (tb.is_alias && !type_names.count(tb.alias_of)) {
        error(tb.span, "type '" + tb.name + "' aliases unknown type '" +
                           tb.alias_of + "'");
      }
    }
    for (const auto& ed : doc.module.externals) {
      report(ed.span, "external '" + ed.name + "'", ed.signature);
      if (ed.signature->tag != IRType::Tag::CFun) {
        error(ed.span, "external '" + ed.name + "' must have a C function type");
        continue;
      }
      for (const auto& p : ed.signature->params) {
        Kind k = kind_of(p, env.target);
        if (k == Kind::Memory && p->tag != IRType::Tag::StructParam) {
          error(ed.span, "external '" + ed.name +
                             "' has a memory-kind parameter; pass it behind a "
                             "pointer or as a by-value struct param");
        }
      }
      const IRTypeRef& r = ed.signature->result;
      if (r->tag != IRType::Tag::Void && kind_of(r, env.target) == Kind::Memory) {
        error(ed.span, "external '" + ed.name + "' result must fit a register");
      }
    }
  }

  // ------------------------------------------------------------------
  // per-function walk

  struct FunCtx {
    const FunBinding* fb;
    CheckedFun* out;
    std::map<std::string, IRTypeRef>* types;
  };

  IRTypeRef use_var(FunCtx& cx, const ExprPtr& e) {
    if (!e || e->tag != Expr::Tag::Var) {
      error(e ? e->span : SourceSpan{}, "operand is not a variable (term is not "
                                        "in normal form; run normalize first)");
      return ty_unknown();
    }
    auto it = cx.types->find(e->name);
    if (it == cx.types->end()) {
      error(e->span, "use of unbound variable '" + e->name + "'");
      return ty_unknown();
    }
    if (it->second->tag == IRType::Tag::Void) {
      error(e->span, "use of void value '" + e->name + "'");
      return ty_unknown();
    }
    return it->second;
  }

  void bind(FunCtx& cx, const Term& t, const std::string& v, IRTypeRef ty) {
    if (v.empty()) return;
    Kind k = kind_of(ty, env.target);
    if (k == Kind::Memory && ty->tag != IRType::Tag::Void) {
      error(t.span, "binding '" + v + "' has memory kind (" + type_to_string(ty) +
                        "); values of this type live behind pointers");
    }
    if (t.type_note) {
      if (!arg_compatible(*t.type_note, ty) && !arg_compatible(ty, *t.type_note)) {
        error(t.span, "annotation on '" + v + "' (" + type_to_string(*t.type_note) +
                          ") does not match inferred type " + type_to_string(ty));
      }
    }
    (*cx.types)[v] = std::move(ty);
  }

  void check_args(FunCtx& cx, const Term& t, const std::vector<IRTypeRef>& want,
                  const std::string& what) {
    if (t.args.size() != want.size()) {
      error(t.span, what + " expects " + std::to_string(want.size()) +
                        " arguments, got " + std::to_string(t.args.size()));
      return;
    }
    for (size_t i = 0; i < t.args.size(); i++) {
      IRTypeRef have = use_var(cx, t.args[i]);
      if (!arg_compatible(want[i], have)) {
        error(t.args[i]->span, what + " argument " + std::to_string(i + 1) +
                                   " has type " + type_to_string(have) +
                                   " but " + type_to_string(want[i]) +
                                   " is required");
      }
    }
  }

  void check_term(FunCtx& cx, const TermPtr& tp) {
    const Term& t = *tp;
    switch (t.tag) {
      case Term::Tag::LetLit: {
        IRTypeRef ty;
        switch (t.lit.tag) {
          case Literal::Tag::Int: ty = ty_int(32); break;
          case Literal::Tag::Nil: ty = ty_addr(); break;
          case Literal::Tag::Str: ty = string_ptr_type(env.target); break;
        }
        bind(cx, t, t.vars[0], std::move(ty));
        check_term(cx, t.body);
        return;
      }
      case Term::Tag::LetPrim: {
        check_args(cx, t, primop_params(t.op, env.target),
                   std::string(primop_info(t.op).name));
        bind(cx, t, t.vars[0], primop_result(t.op, env.target));
        check_term(cx, t.body);
        return;
      }
      case Term::Tag::LetAlloc: {
        // heap object layout is derived from the argument types
        std::vector<StructField> fields;
        uint64_t cursor = 0, align = 1;
        for (const auto& a : t.args) {
          IRTypeRef ty = use_var(cx, a);
          if (kind_of(ty, env.target) == Kind::Memory) {
            error(a->span, "alloc argument has memory kind");
            ty = ty_unknown();
          }
          uint64_t al = natural_align(ty, env.target);
          uint64_t sz = byte_size(ty, env.target).value_or(env.target.word_bytes());
          cursor = (cursor + al - 1) / al * al;
          fields.push_back({cursor, ty});
          cursor += sz;
          align = std::max(align, al);
        }
        uint64_t size = (cursor + align - 1) / align * align;
        if (size == 0) size = align;
        bind(cx, t, t.vars[0], ty_ptr(ty_struct(size, align, std::move(fields))));
        check_term(cx, t.body);
        return;
      }
      case Term::Tag::LetSelect: {
        IRTypeRef base = use_var(cx, t.args[0]);
        IRTypeRef ty = ty_unknown();
        if (base->tag == IRType::Tag::Ptr &&
            base->elem->tag == IRType::Tag::StructLayout) {
          const auto& fields = base->elem->fields;
          if (t.index < 0 || static_cast<size_t>(t.index) >= fields.size()) {
            error(t.span, "select index " + std::to_string(t.index) +
                              " out of range for " + type_to_string(base->elem));
          } else {
            ty = fields[t.index].type;
            if (kind_of(ty, env.target) == Kind::Memory) {
              error(t.span, "selected field has memory kind; take its address instead");
              ty = ty_unknown();
            }
          }
        } else if (base->tag != IRType::Tag::Unknown) {
          error(t.span, "select base has type " + type_to_string(base) +
                            "; a pointer to a struct is required");
        }
        bind(cx, t, t.vars[0], std::move(ty));
        check_term(cx, t.body);
        return;
      }
      case Term::Tag::LetCCall: {
        const ExternalDecl* ed = resolve_external(t.callee, t.span);
        IRTypeRef rty = ty_unknown();
        if (ed) {
          check_args(cx, t, ed->signature->params, "ccall " + t.callee);
          rty = ed->signature->result;
        }
        bind(cx, t, t.vars[0], std::move(rty));
        check_term(cx, t.body);
        return;
      }
      case Term::Tag::LetCall: {
        const FunSite* site = resolve_fun(t.callee, cx.fb, t.span);
        std::vector<IRTypeRef> rtys;
        if (site) {
          cx.out->callee_resolution[t.callee] = site->canonical;
          const auto& params = site->binding->def.params;
          std::vector<IRTypeRef> want;
          for (const auto& p : params) want.push_back(p.type);
          check_args(cx, t, want, "call to '" + t.callee + "'");
          if (site->arity >= 0 &&
              static_cast<size_t>(site->arity) != t.vars.size()) {
            error(t.span, "call to '" + t.callee + "' binds " +
                              std::to_string(t.vars.size()) + " results but the "
                              "function returns " + std::to_string(site->arity));
          }
          // result types when the callee is already checked
          auto chk = result.funs.find(site->binding->name);
          if (chk != result.funs.end() &&
              chk->second.result_types.size() == t.vars.size()) {
            rtys = chk->second.result_types;
          }
        }
        for (size_t i = 0; i < t.vars.size(); i++) {
          bind(cx, t, t.vars[i], i < rtys.size() ? rtys[i] : ty_unknown());
        }
        check_term(cx, t.body);
        return;
      }
      case Term::Tag::LetStackAlloc: {
        bind(cx, t, t.vars[0], ty_addr());
        check_term(cx, t.body);
        return;
      }
      case Term::Tag::If: {
        IRTypeRef c = use_var(cx, t.cond);
        if (!is_intish(c)) {
          error(t.span, "if condition has type " + type_to_string(c) +
                            "; an integer is required (compare addresses with AdrEq)");
        }
        check_term(cx, t.then_branch);
        check_term(cx, t.else_branch);
        return;
      }
      case Term::Tag::Return: {
        std::vector<IRTypeRef> tys;
        for (const auto& a : t.args) tys.push_back(use_var(cx, a));
        if (cx.out->result_types.empty() && !tys.empty() &&
            cx.out->result_arity == static_cast<int>(tys.size())) {
          cx.out->result_types = std::move(tys);
        } else if (cx.out->result_arity == static_cast<int>(tys.size()) &&
                   cx.out->result_types.size() == tys.size()) {
          for (size_t i = 0; i < tys.size(); i++) {
            bool ok = true;
            cx.out->result_types[i] = weak_join(cx.out->result_types[i], tys[i], ok);
            if (!ok) {
              error(t.span, "return value " + std::to_string(i + 1) +
                                " has type " + type_to_string(tys[i]) +
                                " but an earlier return produced " +
                                type_to_string(cx.out->result_types[i]));
            }
          }
        }
        return;
      }
    }
  }

  void check_fun(const FunBinding& fb) {
    CheckedFun cf;
    bool consistent = true;
    cf.result_arity = syntactic_arity(fb.def, &consistent);
    if (!consistent) {
      error(fb.span, "function '" + fb.name + "' returns differing numbers of values");
      cf.result_arity = 0;
    }
    cf.result_types.clear();

    FunCtx cx{&fb, &cf, &cf.var_types};
    for (const auto& p : fb.def.params) {
      for (const auto& v : well_formed(p.type, env.target)) {
        error(p.span, "parameter '" + p.name + "': " + v);
      }
      if (p.type->tag == IRType::Tag::Void) {
        error(p.span, "parameter '" + p.name + "' has void type");
      } else if (kind_of(p.type, env.target) == Kind::Memory) {
        error(p.span, "parameter '" + p.name + "' has memory kind (" +
                          type_to_string(p.type) + "); pass a pointer instead");
      }
      cf.var_types[p.name] = p.type;
    }
    for (auto d : validate_scopes(fb.def)) result.diags.push_back(std::move(d));
    check_term(cx, fb.def.body);
    if (cf.result_types.empty() && cf.result_arity > 0) {
      cf.result_types.assign(cf.result_arity, ty_unknown());
    }
    result.funs[fb.name] = std::move(cf);
  }

  CheckedModule run() {
    build_indexes();
    check_declared_types();
    for (const auto& fb : doc.module.fun_bindings) check_fun(fb);
    return std::move(result);
  }
};

}  // namespace

CheckedModule check_module(const TypeEnv& env, const MbiDocument& doc) {
  Checker c(env, doc);
  return c.run();
}

std::string program_name(const MbiDocument& doc, const FunBinding& fb) {
  if (doc.module.name.empty()) return fb.name;
  return doc.module.name + "." + fb.name;
}

const ProgramFun* CheckedProgram::resolve_name(const std::string& name) const {
  if (const ProgramFun* pf = find(name)) return pf;
  const ProgramFun* match = nullptr;
  int count = 0;
  std::string suffix = "." + name;
  for (const auto& [key, pf] : funs) {
    if (key.size() > suffix.size() &&
        key.compare(key.size() - suffix.size(), suffix.size(), suffix) == 0) {
      match = &pf;
      count++;
    }
  }
  return count == 1 ? match : nullptr;
}

CheckedProgram check_program(const std::vector<const MbiDocument*>& docs,
                             DiagnosticList& diags) {
  CheckedProgram prog;
  if (docs.empty()) return prog;
  prog.target = docs[0]->target;
  TypeEnv env{prog.target, docs};
  for (const MbiDocument* d : docs) {
    CheckedModule cm = check_module(env, *d);
    for (auto& dg : cm.diags) diags.push_back(std::move(dg));
    for (const auto& fb : d->module.fun_bindings) {
      std::string canon = program_name(*d, fb);
      if (prog.funs.count(canon)) {
        diags.push_back({Severity::Error,
                         "binding '" + canon + "' is defined in more than one module",
                         fb.span});
        continue;
      }
      ProgramFun pf;
      pf.doc = d;
      pf.binding = &fb;
      auto it = cm.funs.find(fb.name);
      if (it != cm.funs.end()) pf.checked = std::move(it->second);
      prog.funs[canon] = std::move(pf);
    }
    for (const auto& ed : d->module.externals) {
      auto it = prog.externals.find(ed.name);
      if (it == prog.externals.end()) {
        prog.externals[ed.name] = ed.signature;
      } else if (!type_equal(it->second, ed.signature)) {
        diags.push_back({Severity::Error,
                         "conflicting declarations for C function '" + ed.name + "'",
                         ed.span});
      }
    }
  }
  return prog;
}

// ---------------------------------------------------------------------------
// Escape lint

namespace {

struct EscapeLint {
  DiagnosticList diags;

  void warn(const SourceSpan& sp, const std::string& msg) {
    diags.push_back({Severity::Warning, msg, sp});
  }

  bool tainted_arg(const std::set<std::string>& tainted, const ExprPtr& e) {
    return e && e->tag == Expr::Tag::Var && tainted.count(e->name);
  }

  void walk(const TermPtr& tp, std::set<std::string> tainted) {
    if (!tp) return;
    const Term& t = *tp;
    switch (t.tag) {
      case Term::Tag::LetStackAlloc:
        tainted.insert(t.vars[0]);
        walk(t.body, std::move(tainted));
        return;
      case Term::Tag::LetPrim:
        if (t.op == PrimOp::AdrAdd && tainted_arg(tainted, t.args[0])) {
          tainted.insert(t.vars[0]);
        }
        if (t.op == PrimOp::AdrStoreAdr && t.args.size() == 2 &&
            tainted_arg(tainted, t.args[1])) {
          warn(t.span, "stack address '" + t.args[1]->name +
                           "' escapes through a store");
        }
        walk(t.body, std::move(tainted));
        return;
      case Term::Tag::LetAlloc:
        for (const auto& a : t.args) {
          if (tainted_arg(tainted, a)) {
            warn(t.span, "stack address '" + a->name +
                             "' escapes into a heap allocation");
          }
        }
        walk(t.body, std::move(tainted));
        return;
      case Term::Tag::Return:
        for (const auto& a : t.args) {
          if (tainted_arg(tainted, a)) {
            warn(t.span, "stack address '" + a->name + "' escapes through return");
          }
        }
        return;
      case Term::Tag::If:
        walk(t.then_branch, tainted);
        walk(t.else_branch, std::move(tainted));
        return;
      default:
        walk(t.body, std::move(tainted));
        return;
    }
  }
};

}  // namespace

DiagnosticList escape_lint(const FunDef& f) {
  EscapeLint lint;
  lint.walk(f.body, {});
  return lint.diags;
}

DiagnosticList escape_lint(const MbiDocument& doc) {
  DiagnosticList out;
  for (const auto& fb : doc.module.fun_bindings) {
    for (auto d : escape_lint(fb.def)) {
      d.message = "in '" + fb.name + "': " + d.message;
      out.push_back(std::move(d));
    }
  }
  return out;
}

}  // namespace mbx
