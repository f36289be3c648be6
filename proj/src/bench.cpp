#include "mbx/bench.hpp"

#include "mbx/charon_gen.hpp"
#include "mbx/idl_gen.hpp"
#include "mbx/mbx_format.hpp"
#include "mbx/optimizer.hpp"

namespace mbx::bench {

const char* tree_header_source() {
  return R"(typedef struct tree {
    int         label;
    tree_ptr    left;
    tree_ptr    right;
} tree_node, *tree_ptr;
extern tree_ptr MakeTree (int depth);
)";
}

const char* time_idl_source() {
  return R"(typedef struct {
    long  tv_sec;
    long  tv_usec;
} timeval;

typedef struct {
    int  tz_minuteswest;
    int  tz_dsttime;
} timezone;

int gettimeofday (
    [ref, out] timeval *t,
    [ref, out] timezone *tz);
)";
}

const char* getenv_idl_source() {
  return R"(typedef [unique,string] char *StringOpt;

StringOpt getenv ([in,string] char *name);
)";
}

// The driver walks trees through the generated accessors and the generic
// C-interface operations, so nearly every step is an inlinable call.
const char* tree_bench_source() {
  return R"(module Bench {
  val max2 : (Int, Int) -> Int =
    fun max2 (a : int, b : int, eh : exn_handler) {
      let c = I32Lt(a, b)
      if c then return b else return a
    }

  val dfsMax : CPtr(Struct_tree) -> Int =
    fun dfsMax (t : addr(data), eh : exn_handler) {
      let z = CInterface.isNull(t, eh)
      if z then {
        let m = 0
        return m
      } else {
        let lv = CInterface.deref(t, eh)
        let llbl = Stree.label(lv, eh)
        let lbl = CInterface.getSInt(llbl, eh)
        let lflv = Stree.left(lv, eh)
        let lp = CInterface.getPtr(lflv, eh)
        let lm = dfsMax(lp, eh)
        let rflv = Stree.right(lv, eh)
        let rp = CInterface.getPtr(rflv, eh)
        let rm = dfsMax(rp, eh)
        let m1 = max2(lm, rm, eh)
        let m2 = max2(lbl, m1, eh)
        return m2
      }
    }

  val incLabels : CPtr(Struct_tree) -> () =
    fun incLabels (t : addr(data), eh : exn_handler) {
      let z = CInterface.isNull(t, eh)
      if z then {
        return
      } else {
        let lv = CInterface.deref(t, eh)
        let llbl = Stree.label(lv, eh)
        let old = CInterface.getSInt(llbl, eh)
        let one = 1
        let neu = I32Add(old, one)
        CInterface.setSInt(llbl, neu, eh)
        let lflv = Stree.left(lv, eh)
        let lp = CInterface.getPtr(lflv, eh)
        incLabels(lp, eh)
        let rflv = Stree.right(lv, eh)
        let rp = CInterface.getPtr(rflv, eh)
        incLabels(rp, eh)
        return
      }
    }

  val nodeCount : CPtr(Struct_tree) -> Int =
    fun nodeCount (t : addr(data), eh : exn_handler) {
      let z = CInterface.isNull(t, eh)
      if z then {
        let k = 0
        return k
      } else {
        let lv = CInterface.deref(t, eh)
        let lflv = Stree.left(lv, eh)
        let lp = CInterface.getPtr(lflv, eh)
        let lc = nodeCount(lp, eh)
        let rflv = Stree.right(lv, eh)
        let rp = CInterface.getPtr(rflv, eh)
        let rc = nodeCount(rp, eh)
        let s1 = I32Add(lc, rc)
        let one = 1
        let s2 = I32Add(s1, one)
        return s2
      }
    }

  val freeTree : CPtr(Struct_tree) -> () =
    fun freeTree (t : addr(data), eh : exn_handler) {
      let z = CInterface.isNull(t, eh)
      if z then {
        return
      } else {
        let lv = CInterface.deref(t, eh)
        let lflv = Stree.left(lv, eh)
        let lp = CInterface.getPtr(lflv, eh)
        freeTree(lp, eh)
        let rflv = Stree.right(lv, eh)
        let rp = CInterface.getPtr(rflv, eh)
        freeTree(rp, eh)
        CInterface.free(t, eh)
        return
      }
    }

  val benchIter : Int -> Int =
    fun benchIter (d : int, eh : exn_handler) {
      let t = Tree.makeTree(d, eh)
      let m = dfsMax(t, eh)
      freeTree(t, eh)
      return m
    }

  val benchLoop : (Int, Int, Int) -> Int =
    fun benchLoop (d : int, k : int, acc : int, eh : exn_handler) {
      let z = 0
      let stop = I32Eq(k, z)
      if stop then {
        return acc
      } else {
        let m = benchIter(d, eh)
        let acc2 = max2(acc, m, eh)
        let one = 1
        let k2 = I32Sub(k, one)
        let r = benchLoop(d, k2, acc2, eh)
        return r
      }
    }
}
)";
}

const char* tod_bench_source() {
  return R"(module TodBench {
  val todLoop : Int -> (Int, Int, Int) =
    fun todLoop (k : int, eh : exn_handler) {
      let (r, tm, tz) = Time.gettimeofday(eh)
      let sec = tm#0
      let usec = tm#1
      let one = 1
      let k2 = I32Sub(k, one)
      let stop = I32Lt(k2, one)
      if stop then {
        return (r, sec, usec)
      } else {
        let (r2, s2, u2) = todLoop(k2, eh)
        return (r2, s2, u2)
      }
    }
}
)";
}

namespace {

ProgramBundle assemble(std::vector<MbiDocument> docs, bool optimize_flag) {
  ProgramBundle out;
  for (auto& d : docs) {
    out.docs.push_back(std::make_shared<MbiDocument>(std::move(d)));
  }
  if (optimize_flag) {
    std::vector<const MbiDocument*> originals;
    for (const auto& d : out.docs) originals.push_back(d.get());
    TypeEnv env{out.docs[0]->target, originals};
    std::vector<std::shared_ptr<MbiDocument>> opt;
    for (const auto& d : out.docs) {
      opt.push_back(std::make_shared<MbiDocument>(optimize(env, *d)));
    }
    out.docs = std::move(opt);
  }
  std::vector<const MbiDocument*> ptrs;
  for (const auto& d : out.docs) ptrs.push_back(d.get());
  out.prog = check_program(ptrs, out.diags);
  return out;
}

}  // namespace

ProgramBundle build_tree_bench(const TargetConfig& target, bool optimize) {
  ProgramBundle failed;
  auto header = charon::parse_header(tree_header_source(), "tree.h");
  if (!header.ok()) {
    failed.diags = header.diags;
    return failed;
  }
  auto impl = charon::gen_impl(header.unit, "Tree", target);
  if (!impl.ok()) {
    failed.diags = impl.diags;
    return failed;
  }
  auto driver = parse_mbx(tree_bench_source(), "bench_tree.mbx", target);
  if (!driver.ok()) {
    failed.diags = driver.diags;
    return failed;
  }
  std::vector<MbiDocument> docs;
  docs.push_back(charon::c_interface_library(target));
  docs.push_back(std::move(impl.doc));
  docs.push_back(normalize(driver.doc));
  return assemble(std::move(docs), optimize);
}

ProgramBundle build_tod_bench(const TargetConfig& target, bool optimize) {
  ProgramBundle failed;
  auto idl = idl::parse_idl(time_idl_source(), "time.idl");
  if (!idl.ok()) {
    failed.diags = idl.diags;
    return failed;
  }
  auto stubs = idl::gen_stubs(idl.unit, "Time", target);
  if (!stubs.ok()) {
    failed.diags = stubs.diags;
    return failed;
  }
  auto driver = parse_mbx(tod_bench_source(), "bench_tod.mbx", target);
  if (!driver.ok()) {
    failed.diags = driver.diags;
    return failed;
  }
  std::vector<MbiDocument> docs;
  docs.push_back(std::move(stubs.doc));
  docs.push_back(normalize(driver.doc));
  return assemble(std::move(docs), optimize);
}

TreeBenchResult run_tree_bench(const ProgramBundle& bundle, int depth, int iters,
                               uint32_t seed) {
  TreeBenchResult res;
  ForeignRegistry reg;
  register_builtin_world(reg);
  reg.world.rand_state = seed;
  Interp in(bundle.prog, reg, {});
  RunResult r = in.run("Bench.benchLoop",
                       {RuntimeValue::make_word(depth), RuntimeValue::make_word(iters),
                        RuntimeValue::make_word(0), RuntimeValue::make_addr(0)});
  res.ok = r.ok;
  res.stats = r.stats;
  res.trap = r.trap;
  if (r.ok && !r.values.empty()) res.max_label = r.values[0].word;
  res.cheap_leaked = in.memory().cheap_live_bytes();
  return res;
}

TodBenchResult run_tod_bench(const ProgramBundle& bundle, int calls,
                             int64_t clock_sec, int64_t clock_usec) {
  TodBenchResult res;
  ForeignRegistry reg;
  register_builtin_world(reg);
  reg.world.clock_sec = clock_sec;
  reg.world.clock_usec = clock_usec;
  Interp in(bundle.prog, reg, {});
  RunResult r = in.run("TodBench.todLoop",
                       {RuntimeValue::make_word(calls), RuntimeValue::make_addr(0)});
  res.ok = r.ok;
  res.stats = r.stats;
  res.trap = r.trap;
  if (r.ok && r.values.size() == 3) {
    res.ret = r.values[0].word;
    res.sec = r.values[1].word;
    res.usec = r.values[2].word;
  }
  return res;
}

}  // namespace mbx::bench
