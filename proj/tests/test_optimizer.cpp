#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>
#include <sstream>
#include <string>

#include "mbx/charon_gen.hpp"
#include "mbx/interp.hpp"
#include "mbx/mbx_format.hpp"
#include "mbx/optimizer.hpp"
#include "mbx/typecheck.hpp"

using namespace mbx;

namespace {

const TargetConfig t32 = target_ilp32();

MbiDocument load(const std::string& text) {
  ParseResult pr = parse_mbx(text, "<test>", t32, "Test");
  for (const auto& d : pr.diags) INFO(d.render());
  REQUIRE(pr.ok());
  return normalize(pr.doc);
}

RuntimeValue word(int64_t v) { return RuntimeValue::make_word(v); }
RuntimeValue addr(uint64_t a) { return RuntimeValue::make_addr(a); }

}  // namespace

TEST_CASE("inlining length into length s + 1 leaves three bindings") {
  MbiDocument lib = load(R"(
module Std {
  typedef char = enum(0,255)
  typedef string = ptr(struct 8:4 (0: int, 4: ptr(vector(1, char))))

  val length : String -> Int =
    fun len (s : string, _ : exn_handler) {
      let n : int = s#0
      return n
    }
}
)");
  MbiDocument app = load(R"(
module App {
  typedef char = enum(0,255)
  typedef string = ptr(struct 8:4 (0: int, 4: ptr(vector(1, char))))

  val lengthPlus1 : String -> Int =
    fun lengthPlus1 (s : string, eh : exn_handler) {
      let m = Std.length(s, eh)
      let r = I32Add(m, 1)
      return r
    }
}
)");
  TypeEnv env{t32, {&lib}};
  MbiDocument opt = optimize(env, app);

  // the residual body is the inlined select feeding the add
  TermPtr want = mk_let_select("n", ex_var("s"), 0,
                 mk_let_lit("one", Literal::make_int(1),
                 mk_let_prim("t", PrimOp::I32Add, {ex_var("n"), ex_var("one")},
                 mk_return({ex_var("t")}))));
  const FunDef& def = opt.module.fun_bindings[0].def;
  INFO(print_term(def.body));
  CHECK(alpha_eq(def.body, want));
  CHECK(binding_count(def.body) == 3);

  // and it executes in exactly three steps
  DiagnosticList diags;
  CheckedProgram prog = check_program({&opt}, diags);
  REQUIRE(!has_errors(diags));
  ForeignRegistry reg;
  register_builtin_world(reg);
  Interp ip(prog, reg);
  uint64_t s = ip.materialize_string("abc");
  RunResult r = ip.run("lengthPlus1", {addr(s), addr(0)});
  REQUIRE(r.ok);
  CHECK(r.values[0].word == 4);
  CHECK(r.stats.steps == 3);

  // without inlining the same call costs the call overhead too
  DiagnosticList d2;
  CheckedProgram orig = check_program({&lib, &app}, d2);
  REQUIRE(!has_errors(d2));
  Interp ip2(orig, reg);
  uint64_t s2 = ip2.materialize_string("abc");
  RunResult r2 = ip2.run("App.lengthPlus1", {addr(s2), addr(0)});
  REQUIRE(r2.ok);
  CHECK(r2.values[0].word == 4);
  CHECK(r2.stats.steps >= 4);
}

TEST_CASE("select of a known allocation forwards the field") {
  MbiDocument doc = load(R"(
module M {
  val f : (Int) -> Int =
    fun f (x : int, _ : exn_handler) {
      let o = alloc(x, x)
      let y = o#0
      return y
    }
}
)");
  MbiDocument opt = simplify_module(doc);
  TermPtr body = opt.module.fun_bindings[0].def.body;
  INFO(print_term(body));
  CHECK(alpha_eq(body, mk_return({ex_var("x")})));
}

TEST_CASE("stores and calls act as barriers for forwarding") {
  MbiDocument doc = load(R"(
module M {
  val f : (Int, Int) -> Int =
    fun f (x : int, y : int, _ : exn_handler) {
      let o = alloc(x)
      let u = AdrStoreI32(o, y)
      let z = o#0
      return z
    }
}
)");
  MbiDocument opt = simplify_module(doc);

  DiagnosticList diags;
  CheckedProgram prog = check_program({&opt}, diags);
  REQUIRE(!has_errors(diags));
  ForeignRegistry reg;
  register_builtin_world(reg);
  Interp ip(prog, reg);
  RunResult r = ip.run("f", {word(3), word(7), addr(0)});
  REQUIRE(r.ok);
  CHECK(r.values[0].word == 7);  // the store, not the initializer
}

TEST_CASE("constant folding and literal branches") {
  MbiDocument doc = load(R"(
module M {
  val f : () -> Int =
    fun f (_ : exn_handler) {
      let a = 2
      let b = 3
      let c = I32Mul(a, b)
      let t = 1
      if t then {
        let r = I32Add(c, c)
        return r
      } else {
        let z = 0
        return z
      }
    }
}
)");
  MbiDocument opt = simplify_module(doc);
  TermPtr body = opt.module.fun_bindings[0].def.body;
  INFO(print_term(body));
  // everything folds to a single literal binding
  CHECK(binding_count(body) == 1);
  CHECK(alpha_eq(body, mk_let_lit("r", Literal::make_int(12), mk_return({ex_var("r")}))));
}

TEST_CASE("dead code elimination keeps effects") {
  MbiDocument doc = load(R"(
module M {
  external void free (addr(data))
  val f : (Int) -> Int =
    fun f (p : addr(data), x : int) {
      let unused = I32Add(x, x)
      ccall free (p)
      return x
    }
}
)");
  MbiDocument opt = simplify_module(doc);
  TermPtr body = opt.module.fun_bindings[0].def.body;
  INFO(print_term(body));
  CHECK(binding_count(body) == 1);  // the dead add went away
  REQUIRE(body->tag == Term::Tag::LetCCall);
  CHECK(body->callee == "free");
}

TEST_CASE("recursive functions are never inlined into themselves") {
  MbiDocument doc = load(R"(
module M {
  val count : (Int) -> Int =
    fun count (n : int, eh : exn_handler) {
      let stop = I32Eq(n, 0)
      if stop then {
        let z = 0
        return z
      } else {
        let m = I32Sub(n, 1)
        let r = count(m, eh)
        let s = I32Add(r, 1)
        return s
      }
    }
}
)");
  TypeEnv env{t32, {}};
  MbiDocument opt = optimize(env, doc);

  // the self call survives
  std::string printed = print_term(opt.module.fun_bindings[0].def.body);
  CHECK(printed.find("count(") != std::string::npos);

  DiagnosticList diags;
  CheckedProgram prog = check_program({&opt}, diags);
  REQUIRE(!has_errors(diags));
  ForeignRegistry reg;
  register_builtin_world(reg);
  Interp ip(prog, reg);
  RunResult r = ip.run("count", {word(5), addr(0)});
  REQUIRE(r.ok);
  CHECK(r.values[0].word == 5);
}

TEST_CASE("the size policy caps what gets inlined") {
  std::ostringstream big;
  big << "module Lib {\n  val big : (Int) -> Int =\n    fun big (x : int, _ : exn_handler) {\n";
  big << "      let v0 = I32Add(x, x)\n";
  for (int i = 1; i < 30; i++)
    big << "      let v" << i << " = I32Add(v" << (i - 1) << ", x)\n";
  big << "      return v29\n    }\n";
  big << "  val small : (Int) -> Int =\n    fun small (x : int, _ : exn_handler) {\n"
         "      let r = I32Add(x, 1)\n      return r\n    }\n}\n";
  MbiDocument lib = load(big.str());
  MbiDocument app = load(R"(
module App {
  val f : (Int) -> Int =
    fun f (x : int, eh : exn_handler) {
      let a = Lib.big(x, eh)
      let b = Lib.small(a, eh)
      return b
    }
}
)");
  TypeEnv env{t32, {&lib}};
  MbiDocument opt = inline_module(env, app, InlinePolicy{20, 4});
  std::string printed = print_term(opt.module.fun_bindings[0].def.body);
  CHECK(printed.find("big(") != std::string::npos);     // too large, stays a call
  CHECK(printed.find("small(") == std::string::npos);   // small one disappears
}

TEST_CASE("guest library accessors optimize down to plain loads") {
  MbiDocument lib = charon::c_interface_library(t32);
  MbiDocument app = load(R"(
module App {
  val get : (Int) -> Int =
    fun get (p : addr(data), eh : exn_handler) {
      let lv = CInterface.deref(p, eh)
      let v = CInterface.getSInt(lv, eh)
      return v
    }
}
)");
  TypeEnv env{t32, {&lib}};
  MbiDocument opt = optimize(env, app);
  TermPtr body = opt.module.fun_bindings[0].def.body;
  INFO(print_term(body));
  // deref is the identity and getSInt is one load
  CHECK(binding_count(body) == 1);
  CHECK(alpha_eq(body, mk_let_prim("v", PrimOp::AdrLoadI32, {ex_var("p")},
                                   mk_return({ex_var("v")}))));
}

// ---------------------------------------------------------------------------
// Randomized semantics preservation

namespace {

// Straight-line integer programs with branches and non-recursive calls:
// no memory, no C world, so every run is trap-free by construction.
struct ProgGen {
  std::mt19937 rng{4242};
  std::ostringstream out;
  int temp = 0;

  std::string pick(const std::vector<std::string>& scope) {
    return scope[rng() % scope.size()];
  }

  void stmts(std::vector<std::string>& scope, int fuel, int callable_below,
             int indent) {
    std::string pad(static_cast<size_t>(indent), ' ');
    while (fuel-- > 0) {
      int r = static_cast<int>(rng() % 8);
      std::string v = "t" + std::to_string(temp++);
      if (r < 2) {
        out << pad << "let " << v << " = " << rng() % 1000 << "\n";
      } else if (r < 5) {
        const char* ops[] = {"I32Add", "I32Sub", "I32Mul", "I32Lt", "I32Eq"};
        out << pad << "let " << v << " = " << ops[rng() % 5] << "(" << pick(scope)
            << ", " << pick(scope) << ")\n";
      } else if (r == 5 && callable_below > 0) {
        out << pad << "let " << v << " = f" << rng() % callable_below << "("
            << pick(scope) << ", eh)\n";
      } else if (r == 6 && fuel > 2) {
        out << pad << "if " << pick(scope) << " then {\n";
        auto s1 = scope;
        stmts(s1, fuel / 2, callable_below, indent + 2);
        out << pad << "} else {\n";
        auto s2 = scope;
        stmts(s2, fuel - fuel / 2, callable_below, indent + 2);
        out << pad << "}\n";
        return;  // both branches returned
      } else {
        out << pad << "let " << v << " = I32Add(" << pick(scope) << ", 1)\n";
      }
      scope.push_back(v);
    }
    out << pad << "return " << pick(scope) << "\n";
  }

  std::string module(int nfuns, int fuel) {
    out.str("");
    out << "module R {\n";
    for (int i = 0; i < nfuns; i++) {
      out << "  val f" << i << " : (Int) -> Int =\n";
      out << "    fun f" << i << " (x : int, eh : exn_handler) {\n";
      std::vector<std::string> scope{"x"};
      stmts(scope, fuel, i, 6);
      out << "    }\n";
    }
    out << "}\n";
    return out.str();
  }
};

}  // namespace

TEST_CASE("optimization preserves results and never adds steps") {
  ProgGen g;
  int checked_runs = 0;
  for (int trial = 0; trial < 120; trial++) {
    g.temp = 0;
    std::string src = g.module(2 + static_cast<int>(g.rng() % 3),
                               3 + static_cast<int>(g.rng() % 10));
    CAPTURE(src);
    MbiDocument doc = load(src);

    TypeEnv env{t32, {}};
    MbiDocument opt = optimize(env, doc);

    // the output still checks
    CheckedModule cm = check_module(env, opt);
    for (const auto& d : cm.diags) INFO(d.render());
    CHECK(cm.ok());

    // optimizing again changes nothing
    CHECK(document_equal(optimize(env, opt), opt));

    DiagnosticList d1, d2;
    CheckedProgram orig = check_program({&doc}, d1);
    CheckedProgram optp = check_program({&opt}, d2);
    REQUIRE(!has_errors(d1));
    REQUIRE(!has_errors(d2));

    ForeignRegistry reg;
    register_builtin_world(reg);
    std::string entry =
        "f" + std::to_string(doc.module.fun_bindings.size() - 1);
    for (int64_t input : {0LL, 1LL, 17LL, -5LL}) {
      Interp i1(orig, reg), i2(optp, reg);
      RunResult r1 = i1.run(entry, {word(input), addr(0)});
      RunResult r2 = i2.run(entry, {word(input), addr(0)});
      REQUIRE(r1.ok);
      REQUIRE(r2.ok);
      CHECK(r1.values == r2.values);
      CHECK(r2.stats.steps <= r1.stats.steps);
      checked_runs++;
    }
  }
  CHECK(checked_runs == 480);
}
