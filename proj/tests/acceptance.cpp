// End-to-end acceptance checks for the toolchain.  Each criterion prints one
// PASS/FAIL line; the exit status is nonzero when any criterion fails.
//
//   acceptance <path-to-mbx-binary> <source-dir>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mbx/bench.hpp"
#include "mbx/charon_gen.hpp"
#include "mbx/idl_gen.hpp"
#include "mbx/interp.hpp"
#include "mbx/layout.hpp"
#include "mbx/mbx_format.hpp"
#include "mbx/optimizer.hpp"
#include "mbx/typecheck.hpp"

using namespace mbx;

namespace {

const TargetConfig t32 = target_ilp32();
const TargetConfig t64 = target_lp64();

std::string g_mbx_path;
std::string g_source_dir;
int g_failures = 0;

// First failed expectation wins; later ones are usually noise.
struct Crit {
  bool ok = true;
  std::string why;
  void expect(bool cond, const std::string& msg) {
    if (!cond && ok) {
      ok = false;
      why = msg;
    }
  }
};

void report(int n, const char* title, const Crit& c, double secs) {
  if (c.ok) {
    std::printf("criterion %2d: PASS  %s  [%.2fs]\n", n, title, secs);
  } else {
    std::printf("criterion %2d: FAIL  %s: %s  [%.2fs]\n", n, title, c.why.c_str(),
                secs);
    g_failures++;
  }
}

// `limit_secs` enforces the per-criterion runtime budget (0 = none).
template <typename F>
void run_criterion(int n, const char* title, F body, double limit_secs = 0) {
  Crit c;
  auto t0 = std::chrono::steady_clock::now();
  body(c);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                    .count();
  if (limit_secs > 0) {
    c.expect(secs < limit_secs,
             "runtime budget exceeded (" + std::to_string(secs) + "s)");
  }
  report(n, title, c, secs);
}

// ---------------------------------------------------------------------------
// Shared fixtures

RuntimeValue word(int64_t v) { return RuntimeValue::make_word(v); }
RuntimeValue addr(uint64_t a) { return RuntimeValue::make_addr(a); }

MbiDocument load(Crit& c, const std::string& text, const TargetConfig& target = t32) {
  ParseResult pr = parse_mbx(text, "<acceptance>", target, "Test");
  c.expect(pr.ok(), "fixture module failed to parse");
  return normalize(pr.doc);
}

const FunDef* fun_named(const MbiDocument& doc, const std::string& name) {
  for (const auto& fb : doc.module.fun_bindings) {
    if (fb.name == name) return &fb.def;
  }
  return nullptr;
}

const char* kGetenvGolden = R"(
module Std {
  typedef char = enum(0,255)
  typedef string = ptr(struct 8:4 (0: int, 4: ptr(vector(1, char))))
  external addr(data) getenv (addr(data))
  external addr(data) MOBY_AllocCString (addr(data))

  val getenv : String -> Option(String) =
    fun getenv (str : string, _ : exn_handler) {
      let c_str = str#1
      let c_res = ccall getenv (c_str)
      if AdrEq (c_res, nil) then {
        return 0
      } else {
        let res_str = ccall MOBY_AllocCString(c_res)
        let res = alloc (res_str)
        return (res)
      }
    }
}
)";

const char* kTimeGolden = R"(
module Std {
  external int gettimeofday (addr(data), addr(data))

  val gettimeofday : () -> (Int, Timeval, Timezone) =
    fun gettimeofday (_ : exn_handler) {
      stackalloc tm[8:4], tz[8:4]
      let res = ccall gettimeofday (tm, tz)
      let tm2 = alloc(AdrLoadI32(tm), AdrLoadI32(AdrAdd(tm, 4)))
      let tz2 = alloc(AdrLoadI32(tz), AdrLoadI32(AdrAdd(tz, 4)))
      return (res, tm2, tz2)
    }
}
)";

const char* kLengthLib = R"(
module Std {
  typedef char = enum(0,255)
  typedef string = ptr(struct 8:4 (0: int, 4: ptr(vector(1, char))))

  val length : String -> Int =
    fun len (s : string, _ : exn_handler) {
      let n : int = s#0
      return n
    }
}
)";

const char* kLengthApp = R"(
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
)";

std::string squash(const std::string& s) {
  std::string out;
  bool in_space = true;
  for (char ch : s) {
    if (isspace(static_cast<unsigned char>(ch))) {
      if (!in_space) out += ' ';
      in_space = true;
    } else {
      out += ch;
      in_space = false;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::string run_cli(const std::string& args) {
  std::string cmd = "'" + g_mbx_path + "' " + args + " 2>/dev/null";
  std::string out;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return out;
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) out.append(buf, n);
  pclose(p);
  return out;
}

// ---------------------------------------------------------------------------
// 1. Generated marshaling stubs match the reference listings exactly
//    (alpha-equivalent bodies, same declared high-level types).

void crit_golden_stubs(Crit& c) {
  idl::IdlParseResult gp = idl::parse_idl(bench::getenv_idl_source(), "getenv.idl");
  c.expect(gp.ok(), "getenv IDL failed to parse");
  idl::GenResult gs = idl::gen_stubs(gp.unit, "Std", t32);
  c.expect(gs.ok(), "getenv stub generation failed");
  MbiDocument ggold = load(c, kGetenvGolden);
  const FunDef* got = fun_named(gs.doc, "getenv");
  const FunDef* want = fun_named(ggold, "getenv");
  c.expect(got && want && alpha_eq(*got, *want),
           "getenv stub body differs from the reference listing");

  idl::IdlParseResult tp = idl::parse_idl(bench::time_idl_source(), "time.idl");
  c.expect(tp.ok(), "time IDL failed to parse");
  idl::GenResult ts = idl::gen_stubs(tp.unit, "Std", t32);
  c.expect(ts.ok(), "gettimeofday stub generation failed");
  MbiDocument tgold = load(c, kTimeGolden);
  got = fun_named(ts.doc, "gettimeofday");
  want = fun_named(tgold, "gettimeofday");
  c.expect(got && want && alpha_eq(*got, *want),
           "gettimeofday stub body differs from the reference listing");

  c.expect(idl::gen_signature(gp.unit) == "val getenv : String -> Option(String)\n",
           "getenv signature text differs");
  c.expect(idl::gen_signature(tp.unit) ==
               "datatype Timeval { TIMEVAL of (Int, Int) }\n"
               "datatype Timezone { TIMEZONE of (Int, Int) }\n"
               "\n"
               "val gettimeofday : () -> (Int, Timeval, Timezone)\n",
           "gettimeofday signature text differs");
}

// ---------------------------------------------------------------------------
// 2. The header embedding reproduces the reference interface text and
//    accessor bodies at offsets 0/4/8 with sizeOf 12 on the 32-bit target.

void crit_golden_embedding(Crit& c) {
  charon::HeaderParseResult hp =
      charon::parse_header(bench::tree_header_source(), "tree.h");
  c.expect(hp.ok(), "tree header failed to parse");

  const char* want_interface = R"(
type Struct_tree
type Def_tree_node = Struct_tree
type Def_tree_ptr = CPtr(Struct_tree)

module Stree {
  val label : LValue(Struct_tree) -> LValue(SInt)
  val left : LValue(Struct_tree) -> LValue(Def_tree_ptr)
  val right : LValue(Struct_tree) -> LValue(Def_tree_ptr)
  val sizeOf : () -> SizeOf(Struct_tree)
}

val makeTree : Int -> LValue(Def_tree_ptr)
)";
  c.expect(squash(charon::gen_interface(hp.unit)) == squash(want_interface),
           "interface text differs");

  charon::GenResult impl = charon::gen_impl(hp.unit, "Tree", t32);
  c.expect(impl.ok(), "tree implementation generation failed");
  MbiDocument golden = load(c, R"(
module G {
  external addr(data) MakeTree (int)
  val a : T = fun fld (p : lvalue, _ : exn_handler) { return p }
  val b : T = fun fld (p : lvalue, _ : exn_handler) {
    let q = AdrAdd(p, 4)
    return q
  }
  val c : T = fun fld (p : lvalue, _ : exn_handler) {
    let q = AdrAdd(p, 8)
    return q
  }
  val d : T = fun sz (_ : exn_handler) {
    let n = 12
    return n
  }
  val e : T = fun makeTree (depth : int, eh : exn_handler) {
    let result : addr(data) = ccall MakeTree(depth)
    return result
  }
}
)");
  struct Pair {
    const char* gen;
    const char* gold;
  } pairs[] = {{"Stree.label", "a"},
               {"Stree.left", "b"},
               {"Stree.right", "c"},
               {"Stree.sizeOf", "d"},
               {"makeTree", "e"}};
  for (const Pair& p : pairs) {
    const FunDef* got = fun_named(impl.doc, p.gen);
    const FunDef* want = fun_named(golden, p.gold);
    c.expect(got && want && alpha_eq(*got, *want),
             std::string("accessor body differs: ") + p.gen);
  }
}

// ---------------------------------------------------------------------------
// 3. Layout engine vs. an independent byte-probing placement oracle.

struct OracleResult {
  uint64_t size = 0, align = 1;
  std::vector<uint64_t> offsets;
};

OracleResult brute_force(const layout::CStructDef& s, const layout::CDeclTable& table,
                         const TargetConfig& target) {
  OracleResult r;
  uint64_t cursor = 0;
  for (const auto& f : s.fields) {
    layout::CLayout fl = layout::layout_of(f.type, table, target);
    uint64_t off = cursor;
    while (off % fl.align != 0) off++;
    r.offsets.push_back(off);
    cursor = off + fl.size;
    if (fl.align > r.align) r.align = fl.align;
  }
  r.size = cursor;
  while (r.size % r.align != 0) r.size++;
  if (r.size == 0) r.size = r.align;
  return r;
}

void crit_layout_oracle(Crit& c) {
  using layout::Scalar;
  std::mt19937 rng(1009);
  layout::CDeclTable table;
  const Scalar scalars[] = {Scalar::Char, Scalar::Short, Scalar::Int, Scalar::Long};
  int mismatches = 0;
  for (int trial = 0; trial < 1000; trial++) {
    layout::CStructDef s{"s", {}};
    int n = 1 + static_cast<int>(rng() % 8);
    for (int i = 0; i < n; i++) {
      layout::CTypeRef t = rng() % 5 == 0
                               ? layout::ct_ptr(layout::ct_scalar(Scalar::Void))
                               : layout::ct_scalar(scalars[rng() % 4]);
      s.fields.push_back({"f" + std::to_string(i), t});
    }
    for (const TargetConfig* target : {&t32, &t64}) {
      layout::CLayout got = layout::layout_of_struct(s, table, *target);
      OracleResult want = brute_force(s, table, *target);
      if (got.size != want.size || got.align != want.align ||
          got.field_offsets != want.offsets) {
        mismatches++;
      }
    }
  }
  c.expect(mismatches == 0,
           std::to_string(mismatches) + " of 2000 layouts disagree with the oracle");
}

// ---------------------------------------------------------------------------
// 4. Inlining a one-line length function leaves a three-binding body that
//    executes in exactly three steps.

void crit_inlining_fidelity(Crit& c) {
  MbiDocument lib = load(c, kLengthLib);
  MbiDocument app = load(c, kLengthApp);
  TypeEnv env{t32, {&lib}};
  MbiDocument opt = optimize(env, app);

  TermPtr want = mk_let_select("n", ex_var("s"), 0,
                 mk_let_lit("one", Literal::make_int(1),
                 mk_let_prim("t", PrimOp::I32Add, {ex_var("n"), ex_var("one")},
                 mk_return({ex_var("t")}))));
  const FunDef* got = fun_named(opt, "lengthPlus1");
  c.expect(got != nullptr, "lengthPlus1 missing after optimization");
  c.expect(got && alpha_eq(got->body, want), "inlined body is not the expected term");
  c.expect(got && binding_count(got->body) == 3, "inlined body is not three bindings");

  // executing the inlined function costs exactly those three bindings
  DiagnosticList diags;
  CheckedProgram prog = check_program({&opt}, diags);
  c.expect(!has_errors(diags), "optimized module fails the checker");
  ForeignRegistry reg;
  register_builtin_world(reg);
  Interp ip(prog, reg);
  RunResult r = ip.run("lengthPlus1", {addr(ip.materialize_string("abc")), addr(0)});
  c.expect(r.ok, "optimized run trapped");
  c.expect(r.ok && r.values.size() == 1 && r.values[0].word == 4, "wrong result");
  c.expect(r.stats.steps == 3, "expected 3 executed bindings, got " +
                                   std::to_string(r.stats.steps));

  // count_steps agrees: a two-binding driver plus the inlined three
  MbiDocument driver = load(c, R"(
module Main {
  typedef char = enum(0,255)
  typedef string = ptr(struct 8:4 (0: int, 4: ptr(vector(1, char))))
  val main : () -> Int =
    fun main (eh : exn_handler) {
      let s = "abc"
      let r = App.lengthPlus1(s, eh)
      return r
    }
}
)");
  DiagnosticList d2;
  CheckedProgram whole = check_program({&opt, &driver}, d2);
  c.expect(!has_errors(d2), "driver program fails the checker");
  auto steps = count_steps(whole, "main", {addr(0)});
  c.expect(steps.has_value() && *steps == 5,
           "count_steps: expected 2 driver + 3 inlined bindings");
}

// ---------------------------------------------------------------------------
// 5. End-to-end marshaling over randomized environments and clocks.

void crit_marshaling(Crit& c) {
  // getenv: None iff absent, else a fresh string with the exact bytes
  idl::GenResult stubs =
      idl::gen_stubs(idl::parse_idl(bench::getenv_idl_source(), "getenv.idl").unit,
                     "Std", t32);
  c.expect(stubs.ok(), "getenv stub generation failed");
  MbiDocument probe = load(c, R"(
module App {
  typedef char = enum(0,255)
  typedef string = ptr(struct 8:4 (0: int, 4: ptr(vector(1, char))))
  val probeOpt : (String) -> Int =
    fun probeOpt (s : string, eh : exn_handler) {
      let o = Std.getenv(s, eh)
      return o
    }
}
)");
  DiagnosticList diags;
  CheckedProgram prog = check_program({&stubs.doc, &probe}, diags);
  c.expect(!has_errors(diags), "getenv probe program fails the checker");

  std::mt19937 rng(31337);
  const std::string alphabet =
      "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 _/.:,-";
  unsigned wb = static_cast<unsigned>(t32.word_bytes());
  for (int trial = 0; trial < 100 && c.ok; trial++) {
    ForeignRegistry reg;
    register_builtin_world(reg);
    std::vector<std::string> keys;
    for (int k = 0; k < 5; k++) {
      std::string key = "K" + std::to_string(trial) + "_" + std::to_string(k);
      std::string value;
      size_t len = rng() % 17;
      for (size_t i = 0; i < len; i++) value += alphabet[rng() % alphabet.size()];
      reg.world.env[key] = value;
      keys.push_back(key);
    }
    bool want_hit = trial % 2 == 0;
    std::string query = want_hit ? keys[rng() % keys.size()]
                                 : "MISSING_" + std::to_string(trial);
    Interp ip(prog, reg);
    RunResult r = ip.run("probeOpt", {addr(ip.materialize_string(query)), addr(0)});
    c.expect(r.ok, "getenv probe trapped");
    if (!r.ok) break;
    if (!want_hit) {
      c.expect(!r.values[0].is_addr && r.values[0].word == 0,
               "absent key did not map to 0");
      continue;
    }
    c.expect(r.values[0].is_addr, "present key did not yield a heap cell");
    if (!r.values[0].is_addr) break;
    const std::string& expect = reg.world.env[query];
    MemoryModel& mem = ip.memory();
    uint64_t str = mem.load(r.values[0].addr, wb, false);
    uint64_t len = mem.load(str, wb, true);
    uint64_t data = mem.load(str + wb, wb, false);
    c.expect(len == expect.size(), "marshaled string length differs");
    for (size_t i = 0; i < expect.size() && c.ok; i++) {
      c.expect(mem.load(data + i, 1, false) ==
                   static_cast<uint8_t>(expect[i]),
               "marshaled string bytes differ");
    }
  }

  // gettimeofday: the configured clock comes back through the out buffers
  idl::GenResult tstubs =
      idl::gen_stubs(idl::parse_idl(bench::time_idl_source(), "time.idl").unit,
                     "Std", t32);
  c.expect(tstubs.ok(), "gettimeofday stub generation failed");
  MbiDocument tprobe = load(c, R"(
module App {
  val probe : () -> Int =
    fun probe (eh : exn_handler) {
      let (res, tm, tz) = Std.gettimeofday(eh)
      let sec = tm#0
      let usec = tm#1
      let mw = tz#0
      let dst = tz#1
      return (res, sec, usec, mw, dst)
    }
}
)");
  DiagnosticList td;
  CheckedProgram tprog = check_program({&tstubs.doc, &tprobe}, td);
  c.expect(!has_errors(td), "gettimeofday probe program fails the checker");
  for (int trial = 0; trial < 100 && c.ok; trial++) {
    ForeignRegistry reg;
    register_builtin_world(reg);
    // the simulated clock advances per call, so remember what was configured
    int64_t sec = static_cast<int64_t>(rng() % 2000000);
    int64_t usec = static_cast<int64_t>(rng() % 1000000);
    reg.world.clock_sec = sec;
    reg.world.clock_usec = usec;
    Interp ip(tprog, reg);
    RunResult r = ip.run("probe", {addr(0)});
    c.expect(r.ok, "gettimeofday probe trapped");
    if (!r.ok) break;
    std::vector<RuntimeValue> want = {word(0), word(sec), word(usec), word(0),
                                      word(0)};
    c.expect(r.values == want, "clock values did not round-trip");
  }
}

// ---------------------------------------------------------------------------
// 6. End-to-end embedding: incLabels over generated trees.

void crit_embedding(Crit& c) {
  charon::HeaderParseResult hp =
      charon::parse_header(bench::tree_header_source(), "tree.h");
  charon::GenResult impl = charon::gen_impl(hp.unit, "Tree", t32);
  c.expect(hp.ok() && impl.ok(), "tree embedding generation failed");

  MbiDocument lib = charon::c_interface_library(t32);
  ParseResult bp = parse_mbx(bench::tree_bench_source(), "bench_tree.mbx", t32);
  c.expect(bp.ok(), "tree walker module failed to parse");
  MbiDocument walkers = normalize(bp.doc);
  MbiDocument probe = load(c, R"(
module Probe {
  external addr(data) MakeTree (int)
  val once : (Int) -> Int =
    fun once (d : int, eh : exn_handler) {
      let t = ccall MakeTree(d)
      let m1 = Bench.dfsMax(t, eh)
      Bench.incLabels(t, eh)
      let m2 = Bench.dfsMax(t, eh)
      let n = Bench.nodeCount(t, eh)
      Bench.freeTree(t, eh)
      return (m1, m2, n)
    }
}
)");
  DiagnosticList diags;
  CheckedProgram prog = check_program({&lib, &impl.doc, &walkers, &probe}, diags);
  c.expect(!has_errors(diags), "embedding program fails the checker");

  ForeignRegistry reg;
  register_builtin_world(reg);
  for (int d = 1; d <= 6 && c.ok; d++) {
    Interp ip(prog, reg);
    RunResult r = ip.run("once", {word(d), addr(0)});
    c.expect(r.ok, "tree walk trapped at depth " + std::to_string(d));
    if (!r.ok) break;
    int64_t m1 = r.values[0].word, m2 = r.values[1].word, n = r.values[2].word;
    c.expect(m2 == m1 + 1,
             "incLabels did not raise the max label by 1 at depth " +
                 std::to_string(d));
    c.expect(n == (1 << d) - 1, "node count changed at depth " + std::to_string(d));
    c.expect(ip.memory().cheap_live_bytes() == 0,
             "C heap bytes leaked at depth " + std::to_string(d));
  }
}

// ---------------------------------------------------------------------------
// 7. Optimizer soundness over randomized trap-free programs.

struct ProgGen {
  std::mt19937 rng{20240229};
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
        return;
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

void crit_optimizer_soundness(Crit& c) {
  ProgGen g;
  for (int trial = 0; trial < 500 && c.ok; trial++) {
    g.temp = 0;
    std::string src = g.module(2 + static_cast<int>(g.rng() % 3),
                               4 + static_cast<int>(g.rng() % 12));
    ParseResult pr = parse_mbx(src, "<gen>", t32, "R");
    c.expect(pr.ok(), "generated program failed to parse");
    if (!pr.ok()) break;
    MbiDocument doc = normalize(pr.doc);
    TypeEnv env{t32, {}};
    MbiDocument opt = optimize(env, doc);

    DiagnosticList d1, d2;
    CheckedProgram orig = check_program({&doc}, d1);
    CheckedProgram optp = check_program({&opt}, d2);
    c.expect(!has_errors(d1) && !has_errors(d2),
             "generated or optimized program fails the checker");

    ForeignRegistry reg;
    register_builtin_world(reg);
    std::string entry = "f" + std::to_string(doc.module.fun_bindings.size() - 1);
    for (int64_t input : {1LL, 23LL}) {
      Interp i1(orig, reg), i2(optp, reg);
      RunResult r1 = i1.run(entry, {word(input), addr(0)});
      RunResult r2 = i2.run(entry, {word(input), addr(0)});
      c.expect(r1.ok && r2.ok, "a generated program trapped");
      c.expect(r1.values == r2.values, "optimization changed a result");
      c.expect(r2.stats.steps <= r1.stats.steps, "optimization added steps");
    }
  }
}

// ---------------------------------------------------------------------------
// 8. Deterministic memory-safety traps and the escape lint.

void crit_traps_and_lint(Crit& c) {
  MbiDocument doc = load(c, R"(
module M {
  external addr(data) malloc (int)
  external void free (addr(data))
  val readNil : () -> Int =
    fun readNil (_ : exn_handler) {
      let p = nil
      let r = AdrLoadI32(p)
      return r
    }
  val readOdd : () -> Int =
    fun readOdd (_ : exn_handler) {
      stackalloc buf[8:4]
      let one = 1
      let p = AdrAdd(buf, one)
      let r = AdrLoadI32(p)
      return r
    }
  val leakStack : () -> Int =
    fun leakStack (_ : exn_handler) {
      stackalloc buf[8:4]
      return buf
    }
  val useAfterScope : () -> Int =
    fun useAfterScope (eh : exn_handler) {
      let p = leakStack(eh)
      let r = AdrLoadI32(p)
      return r
    }
  val doubleFree : () -> () =
    fun doubleFree (_ : exn_handler) {
      let n = 8
      let p = ccall malloc (n)
      let u1 = ccall free (p)
      let u2 = ccall free (p)
      return
    }
  val storeEscape : (Int) -> () =
    fun storeEscape (out : addr(data), _ : exn_handler) {
      stackalloc tmp[8:4]
      let u = AdrStoreAdr(out, tmp)
      return
    }
}
)");
  DiagnosticList diags;
  CheckedProgram prog = check_program({&doc}, diags);
  c.expect(!has_errors(diags), "trap fixture fails the checker");
  ForeignRegistry reg;
  register_builtin_world(reg);
  Interp ip(prog, reg);

  struct Want {
    const char* entry;
    TrapKind kind;
  } wants[] = {{"readNil", TrapKind::NilAccess},
               {"readOdd", TrapKind::Misaligned},
               {"useAfterScope", TrapKind::UseAfterScope},
               {"doubleFree", TrapKind::DoubleFree}};
  for (const Want& w : wants) {
    // twice: the same trap both times
    for (int round = 0; round < 2; round++) {
      RunResult r = ip.run(w.entry, {addr(0)});
      c.expect(!r.ok && r.trap.kind == w.kind,
               std::string(w.entry) + " did not trap with " +
                   trap_kind_name(w.kind));
    }
  }

  // the lint flags both escape patterns by name
  DiagnosticList lint = escape_lint(doc);
  auto mentions = [&](const std::string& needle) {
    for (const auto& d : lint)
      if (d.message.find(needle) != std::string::npos) return true;
    return false;
  };
  c.expect(mentions("escapes through return"), "return escape not flagged");
  c.expect(mentions("escapes through a store"), "store escape not flagged");

  // and stays quiet on everything the generators produce
  idl::GenResult gs =
      idl::gen_stubs(idl::parse_idl(bench::getenv_idl_source(), "getenv.idl").unit,
                     "Std", t32);
  idl::GenResult ts =
      idl::gen_stubs(idl::parse_idl(bench::time_idl_source(), "time.idl").unit,
                     "Std", t32);
  charon::GenResult impl = charon::gen_impl(
      charon::parse_header(bench::tree_header_source(), "tree.h").unit, "Tree", t32);
  c.expect(escape_lint(gs.doc).empty(), "lint warning on getenv stubs");
  c.expect(escape_lint(ts.doc).empty(), "lint warning on gettimeofday stubs");
  c.expect(escape_lint(impl.doc).empty(), "lint warning on tree accessors");
  c.expect(escape_lint(charon::c_interface_library(t32)).empty(),
           "lint warning on the C-interface library");
}

// ---------------------------------------------------------------------------
// 9. Format stability: serialization is a canonical bijection on the corpus,
//    and bench output is byte-identical across repeated seeded runs.

void crit_format_stability(Crit& c) {
  std::vector<MbiDocument> corpus;
  corpus.push_back(charon::c_interface_library(t32));
  corpus.push_back(charon::c_interface_library(t64));
  for (const TargetConfig* target : {&t32, &t64}) {
    corpus.push_back(idl::gen_stubs(
        idl::parse_idl(bench::getenv_idl_source(), "getenv.idl").unit, "Std",
        *target).doc);
    corpus.push_back(idl::gen_stubs(
        idl::parse_idl(bench::time_idl_source(), "time.idl").unit, "Std",
        *target).doc);
    corpus.push_back(charon::gen_impl(
        charon::parse_header(bench::tree_header_source(), "tree.h").unit, "Tree",
        *target).doc);
  }
  {
    ParseResult p1 = parse_mbx(bench::tree_bench_source(), "bench_tree.mbx", t32);
    ParseResult p2 = parse_mbx(bench::tod_bench_source(), "bench_tod.mbx", t32);
    c.expect(p1.ok() && p2.ok(), "bench sources failed to parse");
    corpus.push_back(normalize(p1.doc));
    corpus.push_back(normalize(p2.doc));
  }
  {
    std::ifstream in(g_source_dir + "/assets/cinterface.mbx");
    std::stringstream ss;
    ss << in.rdbuf();
    c.expect(in.good() || in.eof(), "assets/cinterface.mbx unreadable");
    ParseResult pr = parse_mbx(ss.str(), "cinterface.mbx", t32, "CInterface");
    c.expect(pr.ok(), "checked-in library asset failed to parse");
    corpus.push_back(normalize(pr.doc));
  }
  Crit dummy;
  corpus.push_back(load(dummy, kGetenvGolden));
  corpus.push_back(load(dummy, kLengthLib));
  c.expect(dummy.ok, "corpus fixtures failed to parse");

  for (size_t i = 0; i < corpus.size(); i++) {
    SerializeResult s1 = serialize_mbi(corpus[i]);
    c.expect(s1.ok(), "serialization failed on corpus entry " + std::to_string(i));
    if (!s1.ok()) continue;
    ParseResult back = parse_mbi(s1.bytes, "corpus");
    c.expect(back.ok(), "reparse failed on corpus entry " + std::to_string(i));
    if (!back.ok()) continue;
    c.expect(document_equal(back.doc, corpus[i]),
             "round trip changed corpus entry " + std::to_string(i));
    SerializeResult s2 = serialize_mbi(back.doc);
    c.expect(s2.ok() && s2.bytes == s1.bytes,
             "double serialization differs on corpus entry " + std::to_string(i));
  }

  // the CLI bench output is reproducible byte for byte
  std::string tree1 = run_cli("bench tree --depth 3 --iters 2 --seed 7");
  std::string tree2 = run_cli("bench tree --depth 3 --iters 2 --seed 7");
  c.expect(!tree1.empty() && tree1 == tree2, "bench tree output not reproducible");
  std::string tod1 = run_cli("bench tod --calls 3 --clock 100:999995");
  std::string tod2 = run_cli("bench tod --calls 3 --clock 100:999995");
  c.expect(!tod1.empty() && tod1 == tod2, "bench tod output not reproducible");
}

// ---------------------------------------------------------------------------
// 10. Inlining strictly reduces interpreter steps on both bench programs.

void crit_bench_steps(Crit& c) {
  bench::ProgramBundle tree_on = bench::build_tree_bench(t32, true);
  bench::ProgramBundle tree_off = bench::build_tree_bench(t32, false);
  c.expect(tree_on.ok() && tree_off.ok(), "tree bench failed to build");
  bench::TreeBenchResult tr_on = bench::run_tree_bench(tree_on, 3, 1, 1);
  bench::TreeBenchResult tr_off = bench::run_tree_bench(tree_off, 3, 1, 1);
  c.expect(tr_on.ok && tr_off.ok, "tree bench trapped");
  c.expect(tr_on.max_label == tr_off.max_label, "inlining changed the tree result");
  c.expect(tr_on.stats.steps < tr_off.stats.steps,
           "tree bench: inlining did not reduce steps (" +
               std::to_string(tr_on.stats.steps) + " vs " +
               std::to_string(tr_off.stats.steps) + ")");

  bench::ProgramBundle tod_on = bench::build_tod_bench(t32, true);
  bench::ProgramBundle tod_off = bench::build_tod_bench(t32, false);
  c.expect(tod_on.ok() && tod_off.ok(), "tod bench failed to build");
  bench::TodBenchResult td_on = bench::run_tod_bench(tod_on, 3, 100, 999995);
  bench::TodBenchResult td_off = bench::run_tod_bench(tod_off, 3, 100, 999995);
  c.expect(td_on.ok && td_off.ok, "tod bench trapped");
  c.expect(td_on.sec == td_off.sec && td_on.usec == td_off.usec,
           "inlining changed the tod result");
  c.expect(td_on.stats.steps < td_off.stats.steps,
           "tod bench: inlining did not reduce steps (" +
               std::to_string(td_on.stats.steps) + " vs " +
               std::to_string(td_off.stats.steps) + ")");
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::fprintf(stderr, "usage: acceptance <mbx-binary> <source-dir>\n");
    return 2;
  }
  g_mbx_path = argv[1];
  g_source_dir = argv[2];

  run_criterion(1, "generated stubs match the reference listings",
                crit_golden_stubs, 1.0);
  run_criterion(2, "header embedding matches the reference interface",
                crit_golden_embedding, 1.0);
  run_criterion(3, "layout engine agrees with the placement oracle",
                crit_layout_oracle, 5.0);
  run_criterion(4, "inlining yields the three-binding body and step count",
                crit_inlining_fidelity);
  run_criterion(5, "marshaling round-trips environments and clocks",
                crit_marshaling);
  run_criterion(6, "tree embedding walks, updates, and frees cleanly",
                crit_embedding);
  run_criterion(7, "optimizer preserves results on randomized programs",
                crit_optimizer_soundness, 30.0);
  run_criterion(8, "memory-safety traps and escape lint behave as specified",
                crit_traps_and_lint);
  run_criterion(9, "serialized format is stable and bench output reproducible",
                crit_format_stability);
  run_criterion(10, "inlining strictly reduces bench interpreter steps",
                crit_bench_steps);

  if (g_failures > 0) {
    std::printf("%d of 10 criteria failed\n", g_failures);
    return 1;
  }
  std::printf("all 10 criteria passed\n");
  return 0;
}
