#pragma once

// ANF interpreter over simulated byte-addressable memory.  Three managed
// regions (moby heap, C heap, stack) plus a static area live in one address
// space; every access is checked against live block bounds, so stray and
// stale pointers trap deterministically instead of corrupting state.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mbx/ir.hpp"
#include "mbx/typecheck.hpp"

namespace mbx {

// ---------------------------------------------------------------------------
// Values

struct RuntimeValue {
  bool is_addr = false;
  int64_t word = 0;    // integer payload
  uint64_t addr = 0;   // address payload

  static RuntimeValue make_word(int64_t w) { return {false, w, 0}; }
  static RuntimeValue make_addr(uint64_t a) { return {true, 0, a}; }

  bool operator==(const RuntimeValue&) const = default;
};

// ---------------------------------------------------------------------------
// Traps

enum class TrapKind {
  NilAccess,
  Misaligned,
  OutOfBounds,
  UseAfterScope,
  UseAfterFree,
  DoubleFree,
  InvalidFree,
  UnknownCCall,
  StepBudget,
  CallDepth,
  OutOfMemory,
  Internal,
};

const char* trap_kind_name(TrapKind k);

struct TrapInfo {
  TrapKind kind = TrapKind::Internal;
  std::string message;
};

struct TrapException {
  TrapInfo info;
};

// ---------------------------------------------------------------------------
// Memory

class MemoryModel {
 public:
  enum class Region { Heap, CHeap, Stack, Static };

  // Heap tuples carry their field geometry so `#i` selection works on any
  // object, whichever module allocated it.
  struct FieldMeta {
    uint64_t offset = 0;
    unsigned width = 0;
    bool is_addr = false;
    bool sign_extend = false;
  };

  struct Block {
    uint64_t start = 0;
    uint64_t size = 0;
    Region region = Region::Heap;
    bool live = false;
    std::vector<uint8_t> bytes;
    std::vector<FieldMeta> fields;
  };

  explicit MemoryModel(const TargetConfig& target);

  // bump allocation in heap/stack/static; blocks are separated by guard
  // gaps so off-by-one addresses never land in a neighbor
  uint64_t alloc(Region region, uint64_t size, uint64_t align);
  void end_stack_block(uint64_t start);

  // first-fit free list with 8-byte alignment; freed blocks are reused
  uint64_t c_malloc(uint64_t size);
  void c_free(uint64_t addr);

  // width in {1, 2, 4, 8}; traps on nil, misalignment, dead or missing blocks
  uint64_t load(uint64_t addr, unsigned width, bool sign_extend);
  void store(uint64_t addr, unsigned width, uint64_t value);

  // bytes up to (not including) the first NUL
  std::string read_cstring(uint64_t addr);

  uint64_t cheap_live_bytes() const { return cheap_live_bytes_; }
  uint64_t cheap_freelist_bytes() const;
  uint64_t cheap_peak_live_bytes() const { return cheap_peak_live_bytes_; }

  const Block* block_at(uint64_t addr) const;
  void set_fields(uint64_t start, std::vector<FieldMeta> fields);
  const TargetConfig& target() const { return target_; }

 private:
  Block& live_block_for(uint64_t addr, unsigned width);

  TargetConfig target_;
  std::map<uint64_t, Block> blocks_;  // keyed by start address
  std::map<Region, uint64_t> next_;
  std::vector<uint64_t> cheap_free_;  // dead C-heap block starts, address order
  uint64_t cheap_live_bytes_ = 0;
  uint64_t cheap_peak_live_bytes_ = 0;
  uint64_t total_bytes_ = 0;
};

// ---------------------------------------------------------------------------
// Simulated C world

struct World {
  std::map<std::string, std::string> env;
  int64_t clock_sec = 0;
  int64_t clock_usec = 0;
  int32_t tz_minuteswest = 0;
  int32_t tz_dsttime = 0;
  uint32_t rand_state = 1;
  std::map<std::string, uint64_t> env_str_cache;  // interned getenv results
};

// Deterministic libc-style PRNG; advances the world state.
int32_t world_rand(World& w);

class Interp;
using ForeignHook =
    std::function<RuntimeValue(Interp&, const std::vector<RuntimeValue>&)>;

struct ForeignRegistry {
  World world;
  std::map<std::string, ForeignHook> hooks;
};

// Installs getenv, MOBY_AllocCString, gettimeofday, rand, malloc, free,
// and MakeTree.
void register_builtin_world(ForeignRegistry& reg);

// ---------------------------------------------------------------------------
// Execution

struct ExecStats {
  uint64_t steps = 0;        // let bindings evaluated
  uint64_t heap_allocs = 0;  // LetAlloc only
  uint64_t stack_allocs = 0;
  uint64_t ccalls = 0;
  uint64_t loads = 0;        // AdrLoad* and select
  uint64_t stores = 0;

  bool operator==(const ExecStats&) const = default;
};

struct RunOptions {
  uint64_t step_budget = 100000000;
  uint64_t max_call_depth = 100000;
};

struct RunResult {
  bool ok = false;
  std::vector<RuntimeValue> values;
  ExecStats stats;
  TrapInfo trap;
};

class Interp {
 public:
  Interp(const CheckedProgram& prog, ForeignRegistry& reg, RunOptions opts = {});

  RunResult run(const std::string& entry, std::vector<RuntimeValue> args);

  MemoryModel& memory() { return mem_; }
  World& world() { return reg_.world; }
  const TargetConfig& target() const { return prog_.target; }
  ExecStats& stats() { return stats_; }

  // heap string object (len + NUL-terminated data vector)
  uint64_t materialize_string(const std::string& bytes);
  // NUL-terminated bytes in the static region
  uint64_t materialize_c_string(const std::string& bytes);

 private:
  struct Frame;
  RuntimeValue eval_prim(Frame& fr, const Term& t);
  void exec_alloc(Frame& fr, const Term& t);
  void exec_select(Frame& fr, const Term& t);

  const CheckedProgram& prog_;
  ForeignRegistry& reg_;
  RunOptions opts_;
  MemoryModel mem_;
  ExecStats stats_;
};

// Convenience: run the entry point and report only the step count
// (nullopt when the program traps).
std::optional<uint64_t> count_steps(const CheckedProgram& prog,
                                    const std::string& entry,
                                    const std::vector<RuntimeValue>& args);

}  // namespace mbx
