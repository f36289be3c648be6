#include "mbx/optimizer.hpp"

#include <algorithm>
#include <set>

namespace mbx {

// ---------------------------------------------------------------------------
// Inlining

namespace {

struct FunRef {
  const MbiDocument* doc;
  const FunBinding* binding;
  std::string canonical;  // program_name of the binding
};

struct Inliner {
  const TypeEnv& env;
  const MbiDocument& doc;
  InlinePolicy policy;
  NameSupply supply;

  std::map<std::string, std::vector<FunRef>> index;

  Inliner(const TypeEnv& e, const MbiDocument& d, const InlinePolicy& p)
      : env(e), doc(d), policy(p) {
    int64_t seed = max_temp_index(d.module);
    auto add = [&](const MbiDocument* m) {
      seed = std::max(seed, max_temp_index(m->module));
      for (const auto& fb : m->module.fun_bindings) {
        std::string canon = program_name(*m, fb);
        FunRef ref{m, &fb, canon};
        index[fb.name].push_back(ref);
        if (canon != fb.name) index[canon].push_back(ref);
      }
    };
    add(&d);
    for (const MbiDocument* m : env.modules) {
      if (m != &d) add(m);
    }
    supply.next = static_cast<uint64_t>(seed + 1);
  }

  // Resolution mirrors the typechecker: self name, then the module the call
  // appears in, then a unique global match.
  const FunRef* resolve(const std::string& name, const MbiDocument* site_doc,
                        const FunBinding* site_fun) {
    if (site_fun && name == site_fun->def.self_name) {
      for (const auto& r : index[site_fun->name]) {
        if (r.binding == site_fun) return &r;
      }
    }
    auto it = index.find(name);
    if (it == index.end()) return nullptr;
    const FunRef* local = nullptr;
    int local_count = 0;
    for (const auto& r : it->second) {
      if (r.doc == site_doc) {
        local = &r;
        local_count++;
      }
    }
    if (local_count == 1) return local;
    if (it->second.size() == 1) return &it->second[0];
    return nullptr;  // ambiguous; leave the call alone
  }

  static bool calls_self(const TermPtr& t, const std::set<std::string>& names) {
    if (!t) return false;
    if (t->tag == Term::Tag::LetCall && names.count(t->callee)) return true;
    return calls_self(t->body, names) || calls_self(t->then_branch, names) ||
           calls_self(t->else_branch, names);
  }

  static int syntactic_arity(const FunDef& f) {
    std::vector<int> as = return_arities(f.body);
    if (as.empty()) return 0;
    for (int a : as) {
      if (a != as[0]) return -1;
    }
    return as[0];
  }

  // Rewrites call sites in a spliced body to flat binding names so they stay
  // resolvable outside their home module.
  TermPtr flatten_callees(const TermPtr& t, const MbiDocument* home,
                          const FunBinding* home_fun) {
    if (!t) return t;
    Term copy = *t;
    if (t->tag == Term::Tag::If) {
      copy.then_branch = flatten_callees(t->then_branch, home, home_fun);
      copy.else_branch = flatten_callees(t->else_branch, home, home_fun);
      return std::make_shared<const Term>(std::move(copy));
    }
    if (t->tag == Term::Tag::Return) return t;
    if (t->tag == Term::Tag::LetCall) {
      if (const FunRef* r = resolve(t->callee, home, home_fun)) {
        copy.callee = r->canonical;
      }
    }
    copy.body = flatten_callees(t->body, home, home_fun);
    return std::make_shared<const Term>(std::move(copy));
  }

  // Every Return in the inlined body becomes the continuation with the
  // destination variables bound to the returned ones.  Additional return
  // sites get a freshly renamed copy of the continuation.
  TermPtr replace_returns(const TermPtr& t, const std::vector<std::string>& dests,
                          const TermPtr& cont, bool& cont_used) {
    if (!t) return t;
    if (t->tag == Term::Tag::Return) {
      std::map<std::string, std::string> sub;
      for (size_t i = 0; i < dests.size(); i++) {
        sub[dests[i]] = t->args[i]->name;
      }
      TermPtr c = cont;
      if (cont_used) c = rename_bound(cont, supply, {});
      cont_used = true;
      return subst_vars(c, sub);
    }
    Term copy = *t;
    if (t->tag == Term::Tag::If) {
      copy.then_branch = replace_returns(t->then_branch, dests, cont, cont_used);
      copy.else_branch = replace_returns(t->else_branch, dests, cont, cont_used);
    } else {
      copy.body = replace_returns(t->body, dests, cont, cont_used);
    }
    return std::make_shared<const Term>(std::move(copy));
  }

  TermPtr process(const TermPtr& t, const MbiDocument* site_doc,
                  const FunBinding* site_fun, int depth,
                  std::set<const FunBinding*>& active) {
    if (!t) return t;
    Term copy = *t;
    if (t->tag == Term::Tag::If) {
      copy.then_branch = process(t->then_branch, site_doc, site_fun, depth, active);
      copy.else_branch = process(t->else_branch, site_doc, site_fun, depth, active);
      return std::make_shared<const Term>(std::move(copy));
    }
    if (t->tag == Term::Tag::Return) return t;
    TermPtr cont = process(t->body, site_doc, site_fun, depth, active);
    copy.body = cont;
    if (t->tag != Term::Tag::LetCall) {
      return std::make_shared<const Term>(std::move(copy));
    }

    const FunRef* callee = resolve(t->callee, site_doc, site_fun);
    bool keep = callee == nullptr || depth >= policy.max_depth ||
                active.count(callee ? callee->binding : nullptr) > 0;
    if (!keep) {
      const FunDef& def = callee->binding->def;
      keep = binding_count(def.body) > policy.max_body_size ||
             def.params.size() != t->args.size() ||
             syntactic_arity(def) != static_cast<int>(t->vars.size()) ||
             calls_self(def.body, {def.self_name, callee->binding->name,
                                   callee->canonical});
    }
    if (keep) {
      return std::make_shared<const Term>(std::move(copy));
    }

    const FunDef& def = callee->binding->def;
    std::map<std::string, std::string> pmap;
    for (size_t i = 0; i < def.params.size(); i++) {
      pmap[def.params[i].name] = t->args[i]->name;
    }
    TermPtr body = flatten_callees(def.body, callee->doc, callee->binding);
    body = rename_bound(body, supply, pmap);
    active.insert(callee->binding);
    body = process(body, callee->doc, callee->binding, depth + 1, active);
    active.erase(callee->binding);
    bool cont_used = false;
    return replace_returns(body, t->vars, cont, cont_used);
  }
};

}  // namespace

MbiDocument inline_module(const TypeEnv& env, const MbiDocument& doc,
                          const InlinePolicy& policy) {
  Inliner in(env, doc, policy);
  MbiDocument out = doc;
  for (auto& fb : out.module.fun_bindings) {
    const FunBinding* original = doc.module.find_fun(fb.name);
    std::set<const FunBinding*> active;
    active.insert(original);  // a function never inlines into itself
    fb.def.body = in.process(fb.def.body, &doc, original, 0, active);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Simplifier

namespace {

struct SimplifyPass {
  struct AllocInfo {
    std::vector<std::string> args;
    uint64_t version;
  };

  struct Ctx {
    std::map<std::string, Literal> lits;
    std::map<std::string, AllocInfo> allocs;
    std::map<std::string, std::string> copies;
    uint64_t store_version = 0;
  };

  static std::string resolve(const Ctx& cx, const std::string& v) {
    auto it = cx.copies.find(v);
    return it == cx.copies.end() ? v : it->second;
  }

  static ExprPtr resolve_arg(const Ctx& cx, const ExprPtr& e) {
    if (!e || e->tag != Expr::Tag::Var) return e;
    std::string r = resolve(cx, e->name);
    return r == e->name ? e : ex_var(r, e->span);
  }

  static std::vector<ExprPtr> resolve_args(const Ctx& cx,
                                           const std::vector<ExprPtr>& args) {
    std::vector<ExprPtr> out;
    out.reserve(args.size());
    for (const auto& a : args) out.push_back(resolve_arg(cx, a));
    return out;
  }

  static const Literal* lit_of(const Ctx& cx, const ExprPtr& e) {
    if (!e || e->tag != Expr::Tag::Var) return nullptr;
    auto it = cx.lits.find(resolve(cx, e->name));
    return it == cx.lits.end() ? nullptr : &it->second;
  }

  static std::optional<Literal> fold(PrimOp op, const Literal* a, const Literal* b) {
    auto as_addr = [](const Literal& l) -> std::optional<uint64_t> {
      if (l.tag == Literal::Tag::Nil) return uint64_t{0};
      if (l.tag == Literal::Tag::Int) return static_cast<uint64_t>(l.ival);
      return std::nullopt;
    };
    auto as_i32 = [](const Literal& l) -> std::optional<int32_t> {
      if (l.tag == Literal::Tag::Int) return static_cast<int32_t>(l.ival);
      return std::nullopt;
    };
    if (!a || !b) return std::nullopt;
    switch (op) {
      case PrimOp::I32Add:
      case PrimOp::I32Sub:
      case PrimOp::I32Mul:
      case PrimOp::I32Lt:
      case PrimOp::I32Eq: {
        auto x = as_i32(*a), y = as_i32(*b);
        if (!x || !y) return std::nullopt;
        int64_t r = 0;
        switch (op) {
          case PrimOp::I32Add:
            r = static_cast<int32_t>(static_cast<uint32_t>(*x) + static_cast<uint32_t>(*y));
            break;
          case PrimOp::I32Sub:
            r = static_cast<int32_t>(static_cast<uint32_t>(*x) - static_cast<uint32_t>(*y));
            break;
          case PrimOp::I32Mul:
            r = static_cast<int32_t>(static_cast<uint32_t>(*x) * static_cast<uint32_t>(*y));
            break;
          case PrimOp::I32Lt: r = *x < *y ? 1 : 0; break;
          case PrimOp::I32Eq: r = *x == *y ? 1 : 0; break;
          default: break;
        }
        return Literal::make_int(r);
      }
      case PrimOp::AdrEq: {
        auto x = as_addr(*a), y = as_addr(*b);
        if (!x || !y) return std::nullopt;
        return Literal::make_int(*x == *y ? 1 : 0);
      }
      default:
        return std::nullopt;
    }
  }

  TermPtr walk(const TermPtr& t, Ctx cx) {
    if (!t) return t;
    switch (t->tag) {
      case Term::Tag::Return:
        return mk_return(resolve_args(cx, t->args), t->span);
      case Term::Tag::If: {
        ExprPtr c = resolve_arg(cx, t->cond);
        if (const Literal* l = lit_of(cx, c)) {
          bool taken = l->tag == Literal::Tag::Int ? l->ival != 0
                                                   : l->tag != Literal::Tag::Nil;
          return walk(taken ? t->then_branch : t->else_branch, std::move(cx));
        }
        return mk_if(c, walk(t->then_branch, cx), walk(t->else_branch, cx), t->span);
      }
      case Term::Tag::LetLit: {
        if (t->lit.tag != Literal::Tag::Str) cx.lits[t->vars[0]] = t->lit;
        TermPtr body = walk(t->body, cx);
        return mk_let_lit(t->vars[0], t->lit, body, t->span, t->type_note);
      }
      case Term::Tag::LetPrim: {
        std::vector<ExprPtr> args = resolve_args(cx, t->args);
        const PrimOpInfo& info = primop_info(t->op);
        if (info.arity == 2) {
          if (auto folded = fold(t->op, lit_of(cx, args[0]), lit_of(cx, args[1]))) {
            cx.lits[t->vars[0]] = *folded;
            TermPtr body = walk(t->body, cx);
            return mk_let_lit(t->vars[0], *folded, body, t->span, t->type_note);
          }
        }
        if (info.is_store) cx.store_version++;
        TermPtr body = walk(t->body, cx);
        return mk_let_prim(t->vars[0], t->op, std::move(args), body, t->span,
                           t->type_note);
      }
      case Term::Tag::LetAlloc: {
        std::vector<ExprPtr> args = resolve_args(cx, t->args);
        AllocInfo info;
        for (const auto& a : args) info.args.push_back(a->name);
        info.version = cx.store_version;
        cx.allocs[t->vars[0]] = std::move(info);
        TermPtr body = walk(t->body, cx);
        return mk_let_alloc(t->vars[0], std::move(args), body, t->span, t->type_note);
      }
      case Term::Tag::LetSelect: {
        ExprPtr base = resolve_arg(cx, t->args[0]);
        auto it = cx.allocs.find(base->name);
        if (it != cx.allocs.end() && it->second.version == cx.store_version &&
            t->index >= 0 && static_cast<size_t>(t->index) < it->second.args.size()) {
          // the field still holds what the allocation stored; forward it
          cx.copies[t->vars[0]] = it->second.args[t->index];
          return walk(t->body, std::move(cx));
        }
        TermPtr body = walk(t->body, cx);
        return mk_let_select(t->vars[0], base, t->index, body, t->span, t->type_note);
      }
      case Term::Tag::LetCCall: {
        std::vector<ExprPtr> args = resolve_args(cx, t->args);
        cx.store_version++;  // the callee may write through any pointer it got
        TermPtr body = walk(t->body, cx);
        return mk_let_ccall(t->vars[0], t->callee, std::move(args), body, t->span,
                            t->type_note);
      }
      case Term::Tag::LetCall: {
        std::vector<ExprPtr> args = resolve_args(cx, t->args);
        cx.store_version++;
        TermPtr body = walk(t->body, cx);
        return mk_let_call(t->vars, t->callee, std::move(args), body, t->span);
      }
      case Term::Tag::LetStackAlloc: {
        TermPtr body = walk(t->body, cx);
        return mk_stack_alloc(t->vars[0], t->alloc_size, t->alloc_align, body, t->span);
      }
    }
    return t;
  }
};

// Removes bindings whose variables are never used.  Only effect-free forms
// are candidates; an allocation nobody can reach is unobservable, so
// LetAlloc qualifies.
TermPtr dce(const TermPtr& t, std::set<std::string>& used) {
  if (!t) return t;
  if (t->tag == Term::Tag::Return) {
    for (const auto& a : t->args) used.insert(a->name);
    return t;
  }
  if (t->tag == Term::Tag::If) {
    TermPtr tb = dce(t->then_branch, used);
    TermPtr eb = dce(t->else_branch, used);
    used.insert(t->cond->name);
    if (tb == t->then_branch && eb == t->else_branch) return t;
    return mk_if(t->cond, tb, eb, t->span);
  }
  TermPtr body = dce(t->body, used);
  bool removable = false;
  switch (t->tag) {
    case Term::Tag::LetLit:
    case Term::Tag::LetSelect:
    case Term::Tag::LetAlloc:
      removable = true;
      break;
    case Term::Tag::LetPrim:
      removable = !primop_info(t->op).is_store;
      break;
    default:
      removable = false;  // calls, ccalls, stack allocations stay
  }
  if (removable) {
    bool any_used = false;
    for (const auto& v : t->vars) {
      if (used.count(v)) any_used = true;
    }
    if (!any_used) return body;
  }
  for (const auto& a : t->args) {
    if (a->tag == Expr::Tag::Var) used.insert(a->name);
  }
  for (const auto& v : t->vars) used.erase(v);
  if (body == t->body) return t;
  Term copy = *t;
  copy.body = body;
  return std::make_shared<const Term>(std::move(copy));
}

}  // namespace

TermPtr simplify(const TermPtr& t) {
  TermPtr cur = t;
  for (int round = 0; round < 64; round++) {
    SimplifyPass pass;
    TermPtr next = pass.walk(cur, {});
    std::set<std::string> used;
    next = dce(next, used);
    if (term_identical(next, cur)) return cur;
    cur = next;
  }
  return cur;
}

MbiDocument simplify_module(const MbiDocument& doc) {
  MbiDocument out = doc;
  for (auto& fb : out.module.fun_bindings) {
    fb.def.body = simplify(fb.def.body);
  }
  return out;
}

MbiDocument optimize(const TypeEnv& env, const MbiDocument& doc,
                     const InlinePolicy& policy) {
  return simplify_module(inline_module(env, doc, policy));
}

}  // namespace mbx
