#include "mbx/interp.hpp"

// The simulated C world.  Everything here is deterministic: the clock ticks
// one microsecond per gettimeofday call, rand is the classic ANSI C linear
// congruential generator, and getenv reads only the configured table.

namespace mbx {

int32_t world_rand(World& w) {
  w.rand_state = static_cast<uint32_t>(
      (static_cast<uint64_t>(w.rand_state) * 1103515245u + 12345u) & 0x7FFFFFFFu);
  return static_cast<int32_t>((w.rand_state / 65536u) % 32768u);
}

namespace {

uint64_t addr_arg(const std::vector<RuntimeValue>& args, size_t i) {
  const RuntimeValue& v = args.at(i);
  return v.is_addr ? v.addr : static_cast<uint64_t>(v.word);
}

RuntimeValue hook_getenv(Interp& in, const std::vector<RuntimeValue>& args) {
  std::string name = in.memory().read_cstring(addr_arg(args, 0));
  World& w = in.world();
  auto it = w.env.find(name);
  if (it == w.env.end()) return RuntimeValue::make_addr(0);
  auto cached = w.env_str_cache.find(name);
  if (cached != w.env_str_cache.end()) {
    return RuntimeValue::make_addr(cached->second);
  }
  uint64_t a = in.materialize_c_string(it->second);
  w.env_str_cache[name] = a;
  return RuntimeValue::make_addr(a);
}

RuntimeValue hook_alloc_cstring(Interp& in, const std::vector<RuntimeValue>& args) {
  std::string bytes = in.memory().read_cstring(addr_arg(args, 0));
  return RuntimeValue::make_addr(in.materialize_string(bytes));
}

RuntimeValue hook_gettimeofday(Interp& in, const std::vector<RuntimeValue>& args) {
  World& w = in.world();
  MemoryModel& mem = in.memory();
  unsigned long_w = static_cast<unsigned>(in.target().word_bytes());
  uint64_t tv = addr_arg(args, 0);
  // struct timeval { long tv_sec; long tv_usec; }
  mem.store(tv, long_w, static_cast<uint64_t>(w.clock_sec));
  mem.store(tv + long_w, long_w, static_cast<uint64_t>(w.clock_usec));
  if (args.size() > 1 && addr_arg(args, 1) != 0) {
    uint64_t tz = addr_arg(args, 1);
    // struct timezone { int tz_minuteswest; int tz_dsttime; }
    mem.store(tz, 4, static_cast<uint32_t>(w.tz_minuteswest));
    mem.store(tz + 4, 4, static_cast<uint32_t>(w.tz_dsttime));
  }
  w.clock_usec++;
  if (w.clock_usec >= 1000000) {
    w.clock_sec += w.clock_usec / 1000000;
    w.clock_usec %= 1000000;
  }
  return RuntimeValue::make_word(0);
}

RuntimeValue hook_rand(Interp& in, const std::vector<RuntimeValue>&) {
  return RuntimeValue::make_word(world_rand(in.world()));
}

RuntimeValue hook_malloc(Interp& in, const std::vector<RuntimeValue>& args) {
  int64_t size = args.at(0).is_addr ? 0 : args.at(0).word;
  if (size < 0) return RuntimeValue::make_addr(0);
  return RuntimeValue::make_addr(in.memory().c_malloc(static_cast<uint64_t>(size)));
}

RuntimeValue hook_free(Interp& in, const std::vector<RuntimeValue>& args) {
  in.memory().c_free(addr_arg(args, 0));
  return RuntimeValue::make_word(0);
}

// Builds a full binary tree of the given depth out of C heap nodes:
//   struct tree { int label; struct tree *left, *right; }
// Labels come from rand(), consumed in preorder.
uint64_t make_tree(Interp& in, int depth) {
  if (depth <= 0) return 0;
  MemoryModel& mem = in.memory();
  unsigned w = static_cast<unsigned>(in.target().word_bytes());
  uint64_t node = mem.c_malloc(3ull * w);
  if (node == 0) return 0;
  mem.store(node, 4, static_cast<uint32_t>(world_rand(in.world())));
  uint64_t left = make_tree(in, depth - 1);
  uint64_t right = make_tree(in, depth - 1);
  mem.store(node + w, w, left);
  mem.store(node + 2ull * w, w, right);
  return node;
}

RuntimeValue hook_make_tree(Interp& in, const std::vector<RuntimeValue>& args) {
  int depth = static_cast<int>(args.at(0).word);
  if (depth > 24) {
    throw TrapException{{TrapKind::OutOfMemory, "MakeTree depth too large"}};
  }
  return RuntimeValue::make_addr(make_tree(in, depth));
}

}  // namespace

void register_builtin_world(ForeignRegistry& reg) {
  reg.hooks["getenv"] = hook_getenv;
  reg.hooks["MOBY_AllocCString"] = hook_alloc_cstring;
  reg.hooks["gettimeofday"] = hook_gettimeofday;
  reg.hooks["rand"] = hook_rand;
  reg.hooks["malloc"] = hook_malloc;
  reg.hooks["free"] = hook_free;
  reg.hooks["MakeTree"] = hook_make_tree;
}

}  // namespace mbx
