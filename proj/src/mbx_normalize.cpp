#include <functional>

#include "mbx/mbx_format.hpp"

// A-normalization: flatten nested expressions so every operand is a variable
// and every intermediate value, literals included, is let-bound.

namespace mbx {
namespace {

using Cont = std::function<TermPtr(std::string)>;
using ContN = std::function<TermPtr(std::vector<std::string>)>;

struct Normalizer {
  NameSupply& supply;

  TermPtr bind_args(const std::vector<ExprPtr>& args, size_t i,
                    std::vector<std::string> acc, const ContN& k) {
    if (i == args.size()) return k(std::move(acc));
    return bind_expr(args[i], [this, &args, i, acc = std::move(acc), &k](
                                  std::string v) mutable {
      acc.push_back(std::move(v));
      return bind_args(args, i + 1, std::move(acc), k);
    });
  }

  // Emits whatever bindings the expression needs and hands the continuation
  // the variable holding its value.
  TermPtr bind_expr(const ExprPtr& e, const Cont& k) {
    switch (e->tag) {
      case Expr::Tag::Var:
        return k(e->name);
      case Expr::Tag::Lit: {
        std::string v = supply.fresh();
        return mk_let_lit(v, e->lit, k(v), e->span);
      }
      case Expr::Tag::Prim:
        return bind_args(e->args, 0, {}, [this, &e, &k](std::vector<std::string> vs) {
          std::string v = supply.fresh();
          return mk_let_prim(v, e->op, to_var_exprs(vs), k(v), e->span);
        });
      case Expr::Tag::Select:
        return bind_expr(e->args[0], [this, &e, &k](std::string base) {
          std::string v = supply.fresh();
          return mk_let_select(v, ex_var(base), e->index, k(v), e->span);
        });
      case Expr::Tag::Alloc:
        return bind_args(e->args, 0, {}, [this, &e, &k](std::vector<std::string> vs) {
          std::string v = supply.fresh();
          return mk_let_alloc(v, to_var_exprs(vs), k(v), e->span);
        });
      case Expr::Tag::CCall:
        return bind_args(e->args, 0, {}, [this, &e, &k](std::vector<std::string> vs) {
          std::string v = supply.fresh();
          return mk_let_ccall(v, e->name, to_var_exprs(vs), k(v), e->span);
        });
      case Expr::Tag::Call:
        return bind_args(e->args, 0, {}, [this, &e, &k](std::vector<std::string> vs) {
          std::string v = supply.fresh();
          return mk_let_call({v}, e->name, to_var_exprs(vs), k(v), e->span);
        });
    }
    return k("");
  }

  static std::vector<ExprPtr> to_var_exprs(const std::vector<std::string>& vs) {
    std::vector<ExprPtr> out;
    out.reserve(vs.size());
    for (const auto& v : vs) out.push_back(ex_var(v));
    return out;
  }

  TermPtr norm(const TermPtr& t) {
    switch (t->tag) {
      case Term::Tag::Return:
        return bind_args(t->args, 0, {}, [&t](std::vector<std::string> vs) {
          return mk_return(Normalizer::to_var_exprs(vs), t->span);
        });
      case Term::Tag::If:
        return bind_expr(t->cond, [this, &t](std::string c) {
          return mk_if(ex_var(c), norm(t->then_branch), norm(t->else_branch), t->span);
        });
      case Term::Tag::LetLit:
        return mk_let_lit(t->vars[0], t->lit, norm(t->body), t->span, t->type_note);
      case Term::Tag::LetStackAlloc:
        return mk_stack_alloc(t->vars[0], t->alloc_size, t->alloc_align,
                              norm(t->body), t->span);
      case Term::Tag::LetPrim:
        return bind_args(t->args, 0, {}, [this, &t](std::vector<std::string> vs) {
          return mk_let_prim(t->vars[0], t->op, to_var_exprs(vs), norm(t->body),
                             t->span, t->type_note);
        });
      case Term::Tag::LetSelect:
        return bind_expr(t->args[0], [this, &t](std::string base) {
          return mk_let_select(t->vars[0], ex_var(base), t->index, norm(t->body),
                               t->span, t->type_note);
        });
      case Term::Tag::LetAlloc:
        return bind_args(t->args, 0, {}, [this, &t](std::vector<std::string> vs) {
          return mk_let_alloc(t->vars[0], to_var_exprs(vs), norm(t->body), t->span,
                              t->type_note);
        });
      case Term::Tag::LetCCall:
        return bind_args(t->args, 0, {}, [this, &t](std::vector<std::string> vs) {
          return mk_let_ccall(t->vars[0], t->callee, to_var_exprs(vs), norm(t->body),
                              t->span, t->type_note);
        });
      case Term::Tag::LetCall:
        return bind_args(t->args, 0, {}, [this, &t](std::vector<std::string> vs) {
          return mk_let_call(t->vars, t->callee, to_var_exprs(vs), norm(t->body),
                             t->span);
        });
    }
    return t;
  }
};

}  // namespace

FunDef normalize_fun(const FunDef& f, NameSupply& supply) {
  FunDef out = f;
  Normalizer n{supply};
  out.body = n.norm(f.body);
  return out;
}

MbiDocument normalize(const MbiDocument& doc) {
  MbiDocument out = doc;
  NameSupply supply;
  supply.next = static_cast<uint64_t>(max_temp_index(doc.module) + 1);
  for (auto& fb : out.module.fun_bindings) {
    if (!is_normal(fb.def)) fb.def = normalize_fun(fb.def, supply);
  }
  return out;
}

}  // namespace mbx
