#include "mbx/interp.hpp"

#include <algorithm>
#include <sstream>

namespace mbx {

const char* trap_kind_name(TrapKind k) {
  switch (k) {
    case TrapKind::NilAccess: return "nil-access";
    case TrapKind::Misaligned: return "misaligned";
    case TrapKind::OutOfBounds: return "out-of-bounds";
    case TrapKind::UseAfterScope: return "use-after-scope";
    case TrapKind::UseAfterFree: return "use-after-free";
    case TrapKind::DoubleFree: return "double-free";
    case TrapKind::InvalidFree: return "invalid-free";
    case TrapKind::UnknownCCall: return "unknown-ccall";
    case TrapKind::StepBudget: return "step-budget";
    case TrapKind::CallDepth: return "call-depth";
    case TrapKind::OutOfMemory: return "out-of-memory";
    case TrapKind::Internal: return "internal";
  }
  return "?";
}

[[noreturn]] static void trap(TrapKind kind, const std::string& msg) {
  throw TrapException{{kind, msg}};
}

// ---------------------------------------------------------------------------
// Memory model

namespace {
constexpr uint64_t kHeapBase = 0x10000000;
constexpr uint64_t kCHeapBase = 0x20000000;
constexpr uint64_t kStackBase = 0x30000000;
constexpr uint64_t kStaticBase = 0x40000000;
constexpr uint64_t kGuardGap = 16;
constexpr uint64_t kMaxBlock = uint64_t{1} << 26;       // single allocation cap
constexpr uint64_t kMaxTotal = uint64_t{1} << 28;       // whole-space cap

uint64_t align_up(uint64_t v, uint64_t a) { return (v + a - 1) / a * a; }
}  // namespace

MemoryModel::MemoryModel(const TargetConfig& target) : target_(target) {
  next_[Region::Heap] = kHeapBase;
  next_[Region::CHeap] = kCHeapBase;
  next_[Region::Stack] = kStackBase;
  next_[Region::Static] = kStaticBase;
}

uint64_t MemoryModel::alloc(Region region, uint64_t size, uint64_t align) {
  if (region == Region::CHeap) return c_malloc(size);
  if (size == 0) size = 1;
  if (align == 0) align = 1;
  if (size > kMaxBlock || total_bytes_ + size > kMaxTotal) {
    trap(TrapKind::OutOfMemory, region == Region::Stack
                                    ? "stack exhausted"
                                    : "allocation too large");
  }
  uint64_t start = align_up(next_[region], align);
  next_[region] = start + size + kGuardGap;
  total_bytes_ += size;
  Block b;
  b.start = start;
  b.size = size;
  b.region = region;
  b.live = true;
  b.bytes.assign(size, 0);
  blocks_[start] = std::move(b);
  return start;
}

void MemoryModel::end_stack_block(uint64_t start) {
  auto it = blocks_.find(start);
  if (it == blocks_.end() || it->second.region != Region::Stack) {
    trap(TrapKind::Internal, "ending a non-stack block");
  }
  // addresses are never reused, so a stale pointer finds a dead block here
  it->second.live = false;
}

uint64_t MemoryModel::c_malloc(uint64_t size) {
  if (size == 0) size = 1;
  if (size > kMaxBlock || total_bytes_ + size > kMaxTotal) {
    return 0;  // C allocation failure is a nil result, not a trap
  }
  // first fit over the address-ordered free list
  for (size_t i = 0; i < cheap_free_.size(); i++) {
    Block& b = blocks_[cheap_free_[i]];
    if (b.size < size) continue;
    uint64_t need = align_up(size, 8);
    if (b.size >= need + 32) {
      // split off the tail as its own dead block
      Block tail;
      tail.start = b.start + need;
      tail.size = b.size - need;
      tail.region = Region::CHeap;
      tail.live = false;
      tail.bytes.assign(tail.size, 0);
      b.size = need;
      b.bytes.assign(b.size, 0);
      uint64_t tail_start = tail.start;
      blocks_[tail_start] = std::move(tail);
      cheap_free_.insert(cheap_free_.begin() + i + 1, tail_start);
    }
    b.live = true;
    std::fill(b.bytes.begin(), b.bytes.end(), 0);
    cheap_free_.erase(cheap_free_.begin() + i);
    cheap_live_bytes_ += b.size;
    cheap_peak_live_bytes_ = std::max(cheap_peak_live_bytes_, cheap_live_bytes_);
    return b.start;
  }
  uint64_t start = align_up(next_[Region::CHeap], 8);
  next_[Region::CHeap] = start + size + kGuardGap;
  total_bytes_ += size;
  Block b;
  b.start = start;
  b.size = size;
  b.region = Region::CHeap;
  b.live = true;
  b.bytes.assign(size, 0);
  blocks_[start] = std::move(b);
  cheap_live_bytes_ += size;
  cheap_peak_live_bytes_ = std::max(cheap_peak_live_bytes_, cheap_live_bytes_);
  return start;
}

void MemoryModel::c_free(uint64_t addr) {
  if (addr == 0) return;  // free(NULL) is a no-op
  auto it = blocks_.find(addr);
  if (it == blocks_.end() || it->second.region != Region::CHeap) {
    trap(TrapKind::InvalidFree,
         "free of an address that was never returned by malloc");
  }
  Block& b = it->second;
  if (!b.live) {
    trap(TrapKind::DoubleFree, "double free of C heap block");
  }
  b.live = false;
  cheap_live_bytes_ -= b.size;
  auto pos = std::lower_bound(cheap_free_.begin(), cheap_free_.end(), addr);
  cheap_free_.insert(pos, addr);
}

uint64_t MemoryModel::cheap_freelist_bytes() const {
  uint64_t total = 0;
  for (uint64_t start : cheap_free_) total += blocks_.at(start).size;
  return total;
}

const MemoryModel::Block* MemoryModel::block_at(uint64_t addr) const {
  auto it = blocks_.upper_bound(addr);
  if (it == blocks_.begin()) return nullptr;
  --it;
  const Block& b = it->second;
  if (addr >= b.start && addr < b.start + b.size) return &b;
  return nullptr;
}

void MemoryModel::set_fields(uint64_t start, std::vector<FieldMeta> fields) {
  auto it = blocks_.find(start);
  if (it != blocks_.end()) it->second.fields = std::move(fields);
}

MemoryModel::Block& MemoryModel::live_block_for(uint64_t addr, unsigned width) {
  if (addr == 0) trap(TrapKind::NilAccess, "access through nil");
  auto it = blocks_.upper_bound(addr);
  if (it == blocks_.begin()) {
    trap(TrapKind::OutOfBounds, "access outside any allocation");
  }
  --it;
  Block& b = it->second;
  if (addr < b.start || addr + width > b.start + b.size) {
    trap(TrapKind::OutOfBounds, "access outside any allocation");
  }
  if (!b.live) {
    switch (b.region) {
      case Region::Stack:
        trap(TrapKind::UseAfterScope, "stack block used after its scope ended");
      case Region::CHeap:
        trap(TrapKind::UseAfterFree, "C heap block used after free");
      default:
        trap(TrapKind::Internal, "dead block in immortal region");
    }
  }
  return b;
}

uint64_t MemoryModel::load(uint64_t addr, unsigned width, bool sign_extend) {
  if (addr % width != 0) {
    trap(TrapKind::Misaligned, "load of width " + std::to_string(width) +
                                   " from unaligned address");
  }
  Block& b = live_block_for(addr, width);
  uint64_t off = addr - b.start;
  uint64_t v = 0;
  if (target_.endianness == Endian::Little) {
    for (unsigned i = 0; i < width; i++) {
      v |= static_cast<uint64_t>(b.bytes[off + i]) << (8 * i);
    }
  } else {
    for (unsigned i = 0; i < width; i++) {
      v = (v << 8) | b.bytes[off + i];
    }
  }
  if (sign_extend && width < 8) {
    uint64_t sign_bit = uint64_t{1} << (8 * width - 1);
    if (v & sign_bit) v |= ~((sign_bit << 1) - 1);
  }
  return v;
}

void MemoryModel::store(uint64_t addr, unsigned width, uint64_t value) {
  if (addr % width != 0) {
    trap(TrapKind::Misaligned, "store of width " + std::to_string(width) +
                                   " to unaligned address");
  }
  Block& b = live_block_for(addr, width);
  uint64_t off = addr - b.start;
  if (target_.endianness == Endian::Little) {
    for (unsigned i = 0; i < width; i++) {
      b.bytes[off + i] = static_cast<uint8_t>(value >> (8 * i));
    }
  } else {
    for (unsigned i = 0; i < width; i++) {
      b.bytes[off + i] = static_cast<uint8_t>(value >> (8 * (width - 1 - i)));
    }
  }
}

std::string MemoryModel::read_cstring(uint64_t addr) {
  std::string out;
  for (uint64_t a = addr;; a++) {
    uint8_t c = static_cast<uint8_t>(load(a, 1, false));
    if (c == 0) break;
    out += static_cast<char>(c);
    if (out.size() > (1u << 20)) {
      trap(TrapKind::OutOfBounds, "unterminated C string");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Interpreter

struct Interp::Frame {
  const ProgramFun* fn = nullptr;
  TermPtr pc;
  std::map<std::string, RuntimeValue> env;
  std::vector<std::string> pending_dests;
  std::vector<uint64_t> stack_blocks;
};

Interp::Interp(const CheckedProgram& prog, ForeignRegistry& reg, RunOptions opts)
    : prog_(prog), reg_(reg), opts_(opts), mem_(prog.target) {}

uint64_t Interp::materialize_string(const std::string& bytes) {
  uint64_t w = prog_.target.word_bytes();
  uint64_t data = mem_.alloc(MemoryModel::Region::Heap, bytes.size() + 1, 1);
  for (size_t i = 0; i < bytes.size(); i++) {
    mem_.store(data + i, 1, static_cast<uint8_t>(bytes[i]));
  }
  mem_.store(data + bytes.size(), 1, 0);
  uint64_t obj = mem_.alloc(MemoryModel::Region::Heap, 2 * w, w);
  mem_.store(obj, 4, static_cast<uint32_t>(bytes.size()));
  mem_.store(obj + w, static_cast<unsigned>(w), data);
  mem_.set_fields(obj, {{0, 4, false, true},
                        {w, static_cast<unsigned>(w), true, false}});
  return obj;
}

uint64_t Interp::materialize_c_string(const std::string& bytes) {
  uint64_t a = mem_.alloc(MemoryModel::Region::Static, bytes.size() + 1, 1);
  for (size_t i = 0; i < bytes.size(); i++) {
    mem_.store(a + i, 1, static_cast<uint8_t>(bytes[i]));
  }
  mem_.store(a + bytes.size(), 1, 0);
  return a;
}

namespace {

int32_t to_i32(const RuntimeValue& v) { return static_cast<int32_t>(v.word); }

uint64_t addr_of(const RuntimeValue& v) {
  // nil literals arrive as addr 0; integer zero compares equal to nil too
  return v.is_addr ? v.addr : static_cast<uint64_t>(v.word);
}

// load width and signedness for a struct field type
struct FieldAccess {
  unsigned width;
  bool sign_extend;
  bool is_addr;
};

FieldAccess field_access(const IRTypeRef& t, const TargetConfig& target) {
  switch (t->tag) {
    case IRType::Tag::IntN:
      return {static_cast<unsigned>(t->bits / 8), true, false};
    case IRType::Tag::EnumRange: {
      auto sz = byte_size(t, target);
      return {static_cast<unsigned>(*sz), t->lo < 0, false};
    }
    case IRType::Tag::AddrData:
    case IRType::Tag::Ptr:
    case IRType::Tag::CFun:
      return {static_cast<unsigned>(target.word_bytes()), false, true};
    default:
      return {static_cast<unsigned>(target.word_bytes()), false, false};
  }
}

}  // namespace

RuntimeValue Interp::eval_prim(Frame& fr, const Term& t) {
  auto arg = [&](size_t i) -> const RuntimeValue& {
    return fr.env.at(t.args[i]->name);
  };
  unsigned w = static_cast<unsigned>(prog_.target.word_bytes());
  switch (t.op) {
    case PrimOp::I32Add:
      return RuntimeValue::make_word(
          static_cast<int32_t>(to_i32(arg(0)) + to_i32(arg(1))));
    case PrimOp::I32Sub:
      return RuntimeValue::make_word(
          static_cast<int32_t>(to_i32(arg(0)) - to_i32(arg(1))));
    case PrimOp::I32Mul:
      return RuntimeValue::make_word(static_cast<int32_t>(
          static_cast<uint32_t>(to_i32(arg(0))) * static_cast<uint32_t>(to_i32(arg(1)))));
    case PrimOp::I32Lt:
      return RuntimeValue::make_word(to_i32(arg(0)) < to_i32(arg(1)) ? 1 : 0);
    case PrimOp::I32Eq:
      return RuntimeValue::make_word(to_i32(arg(0)) == to_i32(arg(1)) ? 1 : 0);
    case PrimOp::AdrAdd:
      return RuntimeValue::make_addr(addr_of(arg(0)) +
                                     static_cast<int64_t>(to_i32(arg(1))));
    case PrimOp::AdrEq:
      return RuntimeValue::make_word(addr_of(arg(0)) == addr_of(arg(1)) ? 1 : 0);
    case PrimOp::AdrLoadI32:
      stats_.loads++;
      return RuntimeValue::make_word(
          static_cast<int64_t>(mem_.load(addr_of(arg(0)), 4, true)));
    case PrimOp::AdrLoadI64:
      stats_.loads++;
      return RuntimeValue::make_word(
          static_cast<int64_t>(mem_.load(addr_of(arg(0)), 8, true)));
    case PrimOp::AdrLoadAdr:
      stats_.loads++;
      return RuntimeValue::make_addr(mem_.load(addr_of(arg(0)), w, false));
    case PrimOp::AdrLoadU8:
      stats_.loads++;
      return RuntimeValue::make_word(
          static_cast<int64_t>(mem_.load(addr_of(arg(0)), 1, false)));
    case PrimOp::AdrStoreI32:
      stats_.stores++;
      mem_.store(addr_of(arg(0)), 4, static_cast<uint32_t>(arg(1).word));
      return RuntimeValue::make_word(0);
    case PrimOp::AdrStoreI64:
      stats_.stores++;
      mem_.store(addr_of(arg(0)), 8, static_cast<uint64_t>(arg(1).word));
      return RuntimeValue::make_word(0);
    case PrimOp::AdrStoreAdr:
      stats_.stores++;
      mem_.store(addr_of(arg(0)), w, addr_of(arg(1)));
      return RuntimeValue::make_word(0);
    case PrimOp::AdrStoreU8:
      stats_.stores++;
      mem_.store(addr_of(arg(0)), 1, static_cast<uint8_t>(arg(1).word));
      return RuntimeValue::make_word(0);
  }
  trap(TrapKind::Internal, "unhandled prim op");
}

void Interp::exec_alloc(Frame& fr, const Term& t) {
  // the checker recorded the object's layout as the binding's type
  const IRTypeRef& bound = fr.fn->checked.var_types.at(t.vars[0]);
  if (bound->tag != IRType::Tag::Ptr ||
      bound->elem->tag != IRType::Tag::StructLayout) {
    trap(TrapKind::Internal, "alloc binding without a recorded layout");
  }
  const IRType& layout = *bound->elem;
  uint64_t base = mem_.alloc(MemoryModel::Region::Heap, layout.size, layout.align);
  std::vector<MemoryModel::FieldMeta> meta;
  for (size_t i = 0; i < t.args.size(); i++) {
    const RuntimeValue& v = fr.env.at(t.args[i]->name);
    FieldAccess fa = field_access(layout.fields[i].type, prog_.target);
    // runtime addresses stay addresses even when the static type was unknown
    bool is_addr = fa.is_addr || v.is_addr;
    unsigned width = is_addr ? static_cast<unsigned>(prog_.target.word_bytes())
                             : fa.width;
    mem_.store(base + layout.fields[i].offset, width,
               is_addr ? addr_of(v) : static_cast<uint64_t>(v.word));
    meta.push_back({layout.fields[i].offset, width, is_addr, fa.sign_extend});
  }
  mem_.set_fields(base, std::move(meta));
  stats_.heap_allocs++;
  fr.env[t.vars[0]] = RuntimeValue::make_addr(base);
}

void Interp::exec_select(Frame& fr, const Term& t) {
  uint64_t base = addr_of(fr.env.at(t.args[0]->name));
  if (base == 0) trap(TrapKind::NilAccess, "select through nil");
  const MemoryModel::Block* blk = mem_.block_at(base);
  MemoryModel::FieldMeta meta;
  if (blk && base == blk->start &&
      static_cast<size_t>(t.index) < blk->fields.size()) {
    meta = blk->fields[t.index];
  } else {
    // fall back to the statically recorded layout
    const IRTypeRef& base_ty = fr.fn->checked.var_types.at(t.args[0]->name);
    if (base_ty->tag != IRType::Tag::Ptr ||
        base_ty->elem->tag != IRType::Tag::StructLayout) {
      trap(TrapKind::Internal, "select on a value without a recorded layout");
    }
    const StructField& f = base_ty->elem->fields.at(t.index);
    FieldAccess fa = field_access(f.type, prog_.target);
    meta = {f.offset, fa.width, fa.is_addr, fa.sign_extend};
  }
  uint64_t raw = mem_.load(base + meta.offset, meta.width, meta.sign_extend);
  stats_.loads++;
  fr.env[t.vars[0]] = meta.is_addr ? RuntimeValue::make_addr(raw)
                                   : RuntimeValue::make_word(static_cast<int64_t>(raw));
}

RunResult Interp::run(const std::string& entry, std::vector<RuntimeValue> args) {
  RunResult res;
  const ProgramFun* fn = prog_.resolve_name(entry);
  if (!fn) {
    res.trap = {TrapKind::Internal, "no function named '" + entry + "'"};
    return res;
  }
  try {
    std::vector<Frame> stack;
    {
      Frame fr;
      fr.fn = fn;
      fr.pc = fn->binding->def.body;
      const auto& params = fn->binding->def.params;
      if (args.size() != params.size()) {
        trap(TrapKind::Internal,
             "entry '" + entry + "' takes " + std::to_string(params.size()) +
                 " arguments, got " + std::to_string(args.size()));
      }
      for (size_t i = 0; i < params.size(); i++) fr.env[params[i].name] = args[i];
      stack.push_back(std::move(fr));
    }

    while (true) {
      Frame& fr = stack.back();
      const Term& t = *fr.pc;
      switch (t.tag) {
        case Term::Tag::LetLit: {
          stats_.steps++;
          RuntimeValue v;
          switch (t.lit.tag) {
            case Literal::Tag::Int: v = RuntimeValue::make_word(t.lit.ival); break;
            case Literal::Tag::Nil: v = RuntimeValue::make_addr(0); break;
            case Literal::Tag::Str:
              v = RuntimeValue::make_addr(materialize_string(t.lit.sval));
              break;
          }
          fr.env[t.vars[0]] = v;
          fr.pc = t.body;
          break;
        }
        case Term::Tag::LetPrim: {
          stats_.steps++;
          fr.env[t.vars[0]] = eval_prim(fr, t);
          fr.pc = t.body;
          break;
        }
        case Term::Tag::LetAlloc: {
          stats_.steps++;
          exec_alloc(fr, t);
          fr.pc = t.body;
          break;
        }
        case Term::Tag::LetSelect: {
          stats_.steps++;
          exec_select(fr, t);
          fr.pc = t.body;
          break;
        }
        case Term::Tag::LetCCall: {
          stats_.steps++;
          stats_.ccalls++;
          auto hook = reg_.hooks.find(t.callee);
          if (hook == reg_.hooks.end()) {
            trap(TrapKind::UnknownCCall,
                 "no registered C function '" + t.callee + "'");
          }
          std::vector<RuntimeValue> hargs;
          hargs.reserve(t.args.size());
          for (const auto& a : t.args) hargs.push_back(fr.env.at(a->name));
          fr.env[t.vars[0]] = hook->second(*this, hargs);
          fr.pc = t.body;
          break;
        }
        case Term::Tag::LetStackAlloc: {
          stats_.steps++;
          stats_.stack_allocs++;
          uint64_t a =
              mem_.alloc(MemoryModel::Region::Stack, t.alloc_size, t.alloc_align);
          fr.stack_blocks.push_back(a);
          fr.env[t.vars[0]] = RuntimeValue::make_addr(a);
          fr.pc = t.body;
          break;
        }
        case Term::Tag::LetCall: {
          stats_.steps++;
          if (stack.size() >= opts_.max_call_depth) {
            trap(TrapKind::CallDepth, "call depth limit exceeded");
          }
          auto resolved = fr.fn->checked.callee_resolution.find(t.callee);
          const std::string& name =
              resolved != fr.fn->checked.callee_resolution.end() ? resolved->second
                                                                 : t.callee;
          const ProgramFun* callee = prog_.find(name);
          if (!callee) {
            trap(TrapKind::Internal, "call to unresolved function '" + t.callee + "'");
          }
          Frame next;
          next.fn = callee;
          next.pc = callee->binding->def.body;
          const auto& params = callee->binding->def.params;
          if (params.size() != t.args.size()) {
            trap(TrapKind::Internal, "argument count mismatch at call");
          }
          for (size_t i = 0; i < params.size(); i++) {
            next.env[params[i].name] = fr.env.at(t.args[i]->name);
          }
          fr.pending_dests = t.vars;
          fr.pc = t.body;
          stack.push_back(std::move(next));
          break;
        }
        case Term::Tag::If: {
          const RuntimeValue& c = fr.env.at(t.cond->name);
          bool taken = c.is_addr ? c.addr != 0 : c.word != 0;
          fr.pc = taken ? t.then_branch : t.else_branch;
          break;
        }
        case Term::Tag::Return: {
          std::vector<RuntimeValue> vals;
          vals.reserve(t.args.size());
          for (const auto& a : t.args) vals.push_back(fr.env.at(a->name));
          for (uint64_t b : fr.stack_blocks) mem_.end_stack_block(b);
          stack.pop_back();
          if (stack.empty()) {
            res.ok = true;
            res.values = std::move(vals);
            res.stats = stats_;
            return res;
          }
          Frame& caller = stack.back();
          if (caller.pending_dests.size() != vals.size()) {
            trap(TrapKind::Internal, "result count mismatch at return");
          }
          for (size_t i = 0; i < vals.size(); i++) {
            caller.env[caller.pending_dests[i]] = vals[i];
          }
          caller.pending_dests.clear();
          break;
        }
      }
      if (stats_.steps > opts_.step_budget) {
        trap(TrapKind::StepBudget, "step budget exhausted");
      }
    }
  } catch (const TrapException& e) {
    res.ok = false;
    res.trap = e.info;
    res.stats = stats_;
    return res;
  } catch (const std::exception& e) {
    res.ok = false;
    res.trap = {TrapKind::Internal, e.what()};
    res.stats = stats_;
    return res;
  }
}

std::optional<uint64_t> count_steps(const CheckedProgram& prog,
                                    const std::string& entry,
                                    const std::vector<RuntimeValue>& args) {
  ForeignRegistry reg;
  register_builtin_world(reg);
  Interp in(prog, reg, {});
  RunResult r = in.run(entry, args);
  if (!r.ok) return std::nullopt;
  return r.stats.steps;
}

}  // namespace mbx
