#pragma once

// Built-in benchmark programs: a tree build/traverse/free loop over the
// generated C embedding, and a gettimeofday marshaling loop over generated
// IDL stubs.  Both assemble a multi-module program from embedded sources so
// the CLI and tests exercise the full pipeline.

#include <memory>
#include <string>
#include <vector>

#include "mbx/diagnostics.hpp"
#include "mbx/interp.hpp"
#include "mbx/ir.hpp"
#include "mbx/typecheck.hpp"

namespace mbx::bench {

// embedded sources
const char* tree_header_source();   // C header fed to the header embedding
const char* time_idl_source();      // gettimeofday IDL specification
const char* getenv_idl_source();    // getenv IDL specification
const char* tree_bench_source();    // MBX driver over the tree embedding
const char* tod_bench_source();     // MBX driver over the time stubs

// A checked multi-module program with owned documents.
struct ProgramBundle {
  std::vector<std::shared_ptr<MbiDocument>> docs;
  CheckedProgram prog;
  DiagnosticList diags;
  bool ok() const { return !has_errors(diags); }
};

// Assembles, optionally optimizes (inline + simplify), and checks the
// benchmark programs.
ProgramBundle build_tree_bench(const TargetConfig& target, bool optimize);
ProgramBundle build_tod_bench(const TargetConfig& target, bool optimize);

struct TreeBenchResult {
  bool ok = false;
  int64_t max_label = 0;
  ExecStats stats;
  uint64_t cheap_leaked = 0;  // C-heap bytes still live on exit
  TrapInfo trap;
};

TreeBenchResult run_tree_bench(const ProgramBundle& bundle, int depth, int iters,
                               uint32_t seed);

struct TodBenchResult {
  bool ok = false;
  int64_t ret = 0, sec = 0, usec = 0;
  ExecStats stats;
  TrapInfo trap;
};

TodBenchResult run_tod_bench(const ProgramBundle& bundle, int calls,
                             int64_t clock_sec, int64_t clock_usec);

}  // namespace mbx::bench
