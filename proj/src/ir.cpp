#include "mbx/ir.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace mbx {

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::Word: return "word";
    case Kind::Var: return "var";
    case Kind::Memory: return "memory";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Type constructors

static IRTypeRef make_type(IRType t) {
  return std::make_shared<const IRType>(std::move(t));
}

IRTypeRef ty_enum(int64_t lo, int64_t hi) {
  IRType t;
  t.tag = IRType::Tag::EnumRange;
  t.lo = lo;
  t.hi = hi;
  return make_type(std::move(t));
}

IRTypeRef ty_int(int bits) {
  IRType t;
  t.tag = IRType::Tag::IntN;
  t.bits = bits;
  return make_type(std::move(t));
}

IRTypeRef ty_addr() {
  static IRTypeRef cached = [] {
    IRType t;
    t.tag = IRType::Tag::AddrData;
    return make_type(std::move(t));
  }();
  return cached;
}

IRTypeRef ty_ptr(IRTypeRef target) {
  IRType t;
  t.tag = IRType::Tag::Ptr;
  t.elem = std::move(target);
  return make_type(std::move(t));
}

IRTypeRef ty_vector(std::optional<uint64_t> count, IRTypeRef elem) {
  IRType t;
  t.tag = IRType::Tag::Vector;
  t.count = count;
  t.elem = std::move(elem);
  return make_type(std::move(t));
}

IRTypeRef ty_struct(uint64_t size, uint64_t align, std::vector<StructField> fields) {
  IRType t;
  t.tag = IRType::Tag::StructLayout;
  t.size = size;
  t.align = align;
  t.fields = std::move(fields);
  return make_type(std::move(t));
}

IRTypeRef ty_cfun(std::vector<IRTypeRef> params, IRTypeRef result) {
  IRType t;
  t.tag = IRType::Tag::CFun;
  t.params = std::move(params);
  t.result = std::move(result);
  return make_type(std::move(t));
}

IRTypeRef ty_struct_param(IRTypeRef layout) {
  IRType t;
  t.tag = IRType::Tag::StructParam;
  t.layout = std::move(layout);
  return make_type(std::move(t));
}

IRTypeRef ty_void() {
  static IRTypeRef cached = [] {
    IRType t;
    t.tag = IRType::Tag::Void;
    return make_type(std::move(t));
  }();
  return cached;
}

IRTypeRef ty_unknown() {
  static IRTypeRef cached = [] {
    IRType t;
    t.tag = IRType::Tag::Unknown;
    return make_type(std::move(t));
  }();
  return cached;
}

bool type_equal(const IRTypeRef& a, const IRTypeRef& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  if (a->tag != b->tag) return false;
  switch (a->tag) {
    case IRType::Tag::EnumRange:
      return a->lo == b->lo && a->hi == b->hi;
    case IRType::Tag::IntN:
      return a->bits == b->bits;
    case IRType::Tag::AddrData:
    case IRType::Tag::Void:
    case IRType::Tag::Unknown:
      return true;
    case IRType::Tag::Ptr:
      return type_equal(a->elem, b->elem);
    case IRType::Tag::Vector:
      return a->count == b->count && type_equal(a->elem, b->elem);
    case IRType::Tag::StructLayout: {
      if (a->size != b->size || a->align != b->align) return false;
      if (a->fields.size() != b->fields.size()) return false;
      for (size_t i = 0; i < a->fields.size(); i++) {
        if (a->fields[i].offset != b->fields[i].offset) return false;
        if (!type_equal(a->fields[i].type, b->fields[i].type)) return false;
      }
      return true;
    }
    case IRType::Tag::CFun: {
      if (a->params.size() != b->params.size()) return false;
      for (size_t i = 0; i < a->params.size(); i++) {
        if (!type_equal(a->params[i], b->params[i])) return false;
      }
      return type_equal(a->result, b->result);
    }
    case IRType::Tag::StructParam:
      return type_equal(a->layout, b->layout);
  }
  return false;
}

static uint64_t enum_byte_size(int64_t lo, int64_t hi) {
  // Smallest of 1/2/4/8 bytes that covers the range.
  auto fits = [&](int bits) {
    if (lo >= 0) {
      uint64_t max = (bits == 64) ? UINT64_MAX : ((uint64_t{1} << bits) - 1);
      return static_cast<uint64_t>(hi) <= max;
    }
    int64_t smin = (bits == 64) ? INT64_MIN : -(int64_t{1} << (bits - 1));
    int64_t smax = (bits == 64) ? INT64_MAX : (int64_t{1} << (bits - 1)) - 1;
    return lo >= smin && hi <= smax;
  };
  if (fits(8)) return 1;
  if (fits(16)) return 2;
  if (fits(32)) return 4;
  return 8;
}

std::optional<uint64_t> byte_size(const IRTypeRef& t, const TargetConfig& target) {
  if (!t) return std::nullopt;
  switch (t->tag) {
    case IRType::Tag::EnumRange:
      return enum_byte_size(t->lo, t->hi);
    case IRType::Tag::IntN:
      return static_cast<uint64_t>(t->bits / 8);
    case IRType::Tag::AddrData:
    case IRType::Tag::Ptr:
    case IRType::Tag::CFun:
    case IRType::Tag::Unknown:
      return static_cast<uint64_t>(target.word_bytes());
    case IRType::Tag::Vector: {
      if (!t->count) return std::nullopt;
      auto es = byte_size(t->elem, target);
      if (!es) return std::nullopt;
      return *t->count * *es;
    }
    case IRType::Tag::StructLayout:
      return t->size;
    case IRType::Tag::StructParam:
      return byte_size(t->layout, target);
    case IRType::Tag::Void:
      return uint64_t{0};
  }
  return std::nullopt;
}

uint64_t natural_align(const IRTypeRef& t, const TargetConfig& target) {
  if (!t) return 1;
  switch (t->tag) {
    case IRType::Tag::EnumRange:
      return enum_byte_size(t->lo, t->hi);
    case IRType::Tag::IntN:
      return static_cast<uint64_t>(t->bits / 8);
    case IRType::Tag::AddrData:
    case IRType::Tag::Ptr:
    case IRType::Tag::CFun:
    case IRType::Tag::Unknown:
      return static_cast<uint64_t>(target.word_bytes());
    case IRType::Tag::Vector:
      return natural_align(t->elem, target);
    case IRType::Tag::StructLayout:
      return t->align ? t->align : 1;
    case IRType::Tag::StructParam:
      return natural_align(t->layout, target);
    case IRType::Tag::Void:
      return 1;
  }
  return 1;
}

Kind kind_of(const IRTypeRef& t, const TargetConfig& target) {
  switch (t->tag) {
    case IRType::Tag::EnumRange: {
      uint64_t sz = enum_byte_size(t->lo, t->hi);
      return sz * 8 <= static_cast<uint64_t>(target.word_size) ? Kind::Word : Kind::Var;
    }
    case IRType::Tag::IntN:
      return t->bits <= target.word_size ? Kind::Word : Kind::Var;
    case IRType::Tag::AddrData:
    case IRType::Tag::Ptr:
    case IRType::Tag::CFun:
    case IRType::Tag::Unknown:
      return Kind::Word;
    case IRType::Tag::Vector:
    case IRType::Tag::StructLayout:
    case IRType::Tag::StructParam:
    case IRType::Tag::Void:
      return Kind::Memory;
  }
  return Kind::Memory;
}

static bool is_power_of_two(uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

static void well_formed_rec(const IRTypeRef& t, const TargetConfig& target,
                            bool under_ptr, std::vector<std::string>& out) {
  if (!t) {
    out.push_back("null type");
    return;
  }
  switch (t->tag) {
    case IRType::Tag::EnumRange:
      if (t->lo > t->hi) {
        out.push_back("enum range is empty: " + type_to_string(t));
      }
      break;
    case IRType::Tag::IntN:
      if (t->bits != 8 && t->bits != 16 && t->bits != 32 && t->bits != 64) {
        out.push_back("unsupported integer width: " + std::to_string(t->bits));
      }
      break;
    case IRType::Tag::AddrData:
    case IRType::Tag::Void:
    case IRType::Tag::Unknown:
      break;
    case IRType::Tag::Ptr:
      well_formed_rec(t->elem, target, true, out);
      break;
    case IRType::Tag::Vector: {
      if (!t->count && !under_ptr) {
        out.push_back("vector of unknown count outside ptr: " + type_to_string(t));
      }
      if (t->count && *t->count == 0) {
        out.push_back("vector count must be positive");
      }
      if (!byte_size(t->elem, target)) {
        out.push_back("vector element has unknown size: " + type_to_string(t->elem));
      }
      well_formed_rec(t->elem, target, false, out);
      break;
    }
    case IRType::Tag::StructLayout: {
      if (!is_power_of_two(t->align)) {
        out.push_back("struct alignment not a power of two: " + std::to_string(t->align));
      } else if (t->size % t->align != 0) {
        out.push_back("struct size " + std::to_string(t->size) +
                      " not a multiple of alignment " + std::to_string(t->align));
      }
      uint64_t prev_end = 0;
      bool first = true;
      for (const auto& f : t->fields) {
        auto fsz = byte_size(f.type, target);
        if (!fsz) {
          out.push_back("struct field at offset " + std::to_string(f.offset) +
                        " has unknown size");
          well_formed_rec(f.type, target, false, out);
          continue;
        }
        if (!first && f.offset < prev_end) {
          out.push_back("struct fields overlap at offset " + std::to_string(f.offset));
        }
        if (f.offset + *fsz > t->size) {
          out.push_back("struct field at offset " + std::to_string(f.offset) +
                        " extends past size " + std::to_string(t->size));
        }
        prev_end = f.offset + *fsz;
        first = false;
        well_formed_rec(f.type, target, false, out);
      }
      // Offsets must be strictly increasing; overlap check above covers the
      // non-decreasing case, equal offsets of zero-size fields still break it.
      for (size_t i = 1; i < t->fields.size(); i++) {
        if (t->fields[i].offset <= t->fields[i - 1].offset) {
          out.push_back("struct field offsets not strictly increasing");
          break;
        }
      }
      break;
    }
    case IRType::Tag::CFun: {
      for (const auto& p : t->params) well_formed_rec(p, target, false, out);
      well_formed_rec(t->result, target, false, out);
      break;
    }
    case IRType::Tag::StructParam:
      if (!t->layout || t->layout->tag != IRType::Tag::StructLayout) {
        out.push_back("struct-param payload is not a struct layout");
      } else {
        well_formed_rec(t->layout, target, false, out);
      }
      break;
  }
}

std::vector<std::string> well_formed(const IRTypeRef& t, const TargetConfig& target) {
  std::vector<std::string> out;
  well_formed_rec(t, target, false, out);
  return out;
}

std::string type_to_string(const IRTypeRef& t) {
  if (!t) return "<null>";
  std::ostringstream os;
  switch (t->tag) {
    case IRType::Tag::EnumRange:
      os << "enum(" << t->lo << "," << t->hi << ")";
      break;
    case IRType::Tag::IntN:
      if (t->bits == 32) os << "int";
      else os << "int" << t->bits;
      break;
    case IRType::Tag::AddrData:
      os << "addr(data)";
      break;
    case IRType::Tag::Ptr:
      os << "ptr(" << type_to_string(t->elem) << ")";
      break;
    case IRType::Tag::Vector:
      os << "vector(";
      {
        // element byte size is only printable for sized scalar-ish elements;
        // fall back to ? when unknown
        os << "?";
      }
      os << ", " << type_to_string(t->elem);
      if (t->count) os << ", " << *t->count;
      os << ")";
      break;
    case IRType::Tag::StructLayout: {
      os << "struct " << t->size << ":" << t->align << " (";
      for (size_t i = 0; i < t->fields.size(); i++) {
        if (i) os << ", ";
        os << t->fields[i].offset << ": " << type_to_string(t->fields[i].type);
      }
      os << ")";
      break;
    }
    case IRType::Tag::CFun: {
      os << "cfun((";
      for (size_t i = 0; i < t->params.size(); i++) {
        if (i) os << ", ";
        os << type_to_string(t->params[i]);
      }
      os << ") -> " << type_to_string(t->result) << ")";
      break;
    }
    case IRType::Tag::StructParam:
      os << "sparam(" << type_to_string(t->layout) << ")";
      break;
    case IRType::Tag::Void:
      os << "void";
      break;
    case IRType::Tag::Unknown:
      os << "?";
      break;
  }
  return os.str();
}

IRTypeRef string_object_type(const TargetConfig& target) {
  uint64_t w = target.word_bytes();
  std::vector<StructField> fields;
  fields.push_back({0, ty_int(32)});
  fields.push_back({w, ty_ptr(ty_vector(std::nullopt, ty_enum(0, 255)))});
  return ty_struct(2 * w, w, std::move(fields));
}

IRTypeRef string_ptr_type(const TargetConfig& target) {
  return ty_ptr(string_object_type(target));
}

// ---------------------------------------------------------------------------
// Prim ops

static const PrimOpInfo kPrimOps[] = {
    {"I32Add", 2, false, false},
    {"I32Sub", 2, false, false},
    {"I32Mul", 2, false, false},
    {"I32Lt", 2, false, false},
    {"I32Eq", 2, false, false},
    {"AdrAdd", 2, false, false},
    {"AdrEq", 2, false, false},
    {"AdrLoadI32", 1, false, true},
    {"AdrStoreI32", 2, true, false},
    {"AdrLoadI64", 1, false, true},
    {"AdrStoreI64", 2, true, false},
    {"AdrLoadAdr", 1, false, true},
    {"AdrStoreAdr", 2, true, false},
    {"AdrLoadU8", 1, false, true},
    {"AdrStoreU8", 2, true, false},
};

const PrimOpInfo& primop_info(PrimOp op) {
  return kPrimOps[static_cast<int>(op)];
}

std::optional<PrimOp> primop_by_name(const std::string& name) {
  for (size_t i = 0; i < std::size(kPrimOps); i++) {
    if (name == kPrimOps[i].name) return static_cast<PrimOp>(i);
  }
  return std::nullopt;
}

std::vector<IRTypeRef> primop_params(PrimOp op, const TargetConfig&) {
  switch (op) {
    case PrimOp::I32Add:
    case PrimOp::I32Sub:
    case PrimOp::I32Mul:
    case PrimOp::I32Lt:
    case PrimOp::I32Eq:
      return {ty_int(32), ty_int(32)};
    case PrimOp::AdrAdd:
      return {ty_addr(), ty_int(32)};
    case PrimOp::AdrEq:
      return {ty_addr(), ty_addr()};
    case PrimOp::AdrLoadI32:
    case PrimOp::AdrLoadI64:
    case PrimOp::AdrLoadAdr:
    case PrimOp::AdrLoadU8:
      return {ty_addr()};
    case PrimOp::AdrStoreI32:
      return {ty_addr(), ty_int(32)};
    case PrimOp::AdrStoreI64:
      return {ty_addr(), ty_int(64)};
    case PrimOp::AdrStoreAdr:
      return {ty_addr(), ty_addr()};
    case PrimOp::AdrStoreU8:
      return {ty_addr(), ty_int(32)};
  }
  return {};
}

IRTypeRef primop_result(PrimOp op, const TargetConfig&) {
  switch (op) {
    case PrimOp::I32Add:
    case PrimOp::I32Sub:
    case PrimOp::I32Mul:
    case PrimOp::I32Lt:
    case PrimOp::I32Eq:
    case PrimOp::AdrLoadI32:
    case PrimOp::AdrLoadU8:
      return ty_int(32);
    case PrimOp::AdrLoadI64:
      return ty_int(64);
    case PrimOp::AdrAdd:
    case PrimOp::AdrLoadAdr:
      return ty_addr();
    case PrimOp::AdrEq:
      return ty_int(32);
    case PrimOp::AdrStoreI32:
    case PrimOp::AdrStoreI64:
    case PrimOp::AdrStoreAdr:
    case PrimOp::AdrStoreU8:
      return ty_void();
  }
  return ty_void();
}

// ---------------------------------------------------------------------------
// Expression / term constructors

static ExprPtr make_expr(Expr e) { return std::make_shared<const Expr>(std::move(e)); }
static TermPtr make_term(Term t) { return std::make_shared<const Term>(std::move(t)); }

ExprPtr ex_var(std::string name, SourceSpan span) {
  Expr e;
  e.tag = Expr::Tag::Var;
  e.name = std::move(name);
  e.span = span;
  return make_expr(std::move(e));
}

ExprPtr ex_lit(Literal lit, SourceSpan span) {
  Expr e;
  e.tag = Expr::Tag::Lit;
  e.lit = std::move(lit);
  e.span = span;
  return make_expr(std::move(e));
}

ExprPtr ex_prim(PrimOp op, std::vector<ExprPtr> args, SourceSpan span) {
  Expr e;
  e.tag = Expr::Tag::Prim;
  e.op = op;
  e.args = std::move(args);
  e.span = span;
  return make_expr(std::move(e));
}

ExprPtr ex_select(ExprPtr base, int index, SourceSpan span) {
  Expr e;
  e.tag = Expr::Tag::Select;
  e.args = {std::move(base)};
  e.index = index;
  e.span = span;
  return make_expr(std::move(e));
}

ExprPtr ex_alloc(std::vector<ExprPtr> args, SourceSpan span) {
  Expr e;
  e.tag = Expr::Tag::Alloc;
  e.args = std::move(args);
  e.span = span;
  return make_expr(std::move(e));
}

ExprPtr ex_ccall(std::string callee, std::vector<ExprPtr> args, SourceSpan span) {
  Expr e;
  e.tag = Expr::Tag::CCall;
  e.name = std::move(callee);
  e.args = std::move(args);
  e.span = span;
  return make_expr(std::move(e));
}

ExprPtr ex_call(std::string callee, std::vector<ExprPtr> args, SourceSpan span) {
  Expr e;
  e.tag = Expr::Tag::Call;
  e.name = std::move(callee);
  e.args = std::move(args);
  e.span = span;
  return make_expr(std::move(e));
}

TermPtr mk_let_lit(std::string v, Literal lit, TermPtr body, SourceSpan span,
                   std::optional<IRTypeRef> note) {
  Term t;
  t.tag = Term::Tag::LetLit;
  t.vars = {std::move(v)};
  t.lit = std::move(lit);
  t.body = std::move(body);
  t.span = span;
  t.type_note = std::move(note);
  return make_term(std::move(t));
}

TermPtr mk_let_prim(std::string v, PrimOp op, std::vector<ExprPtr> args, TermPtr body,
                    SourceSpan span, std::optional<IRTypeRef> note) {
  Term t;
  t.tag = Term::Tag::LetPrim;
  t.vars = {std::move(v)};
  t.op = op;
  t.args = std::move(args);
  t.body = std::move(body);
  t.span = span;
  t.type_note = std::move(note);
  return make_term(std::move(t));
}

TermPtr mk_let_alloc(std::string v, std::vector<ExprPtr> args, TermPtr body,
                     SourceSpan span, std::optional<IRTypeRef> note) {
  Term t;
  t.tag = Term::Tag::LetAlloc;
  t.vars = {std::move(v)};
  t.args = std::move(args);
  t.body = std::move(body);
  t.span = span;
  t.type_note = std::move(note);
  return make_term(std::move(t));
}

TermPtr mk_let_select(std::string v, ExprPtr base, int index, TermPtr body,
                      SourceSpan span, std::optional<IRTypeRef> note) {
  Term t;
  t.tag = Term::Tag::LetSelect;
  t.vars = {std::move(v)};
  t.args = {std::move(base)};
  t.index = index;
  t.body = std::move(body);
  t.span = span;
  t.type_note = std::move(note);
  return make_term(std::move(t));
}

TermPtr mk_let_ccall(std::string v, std::string callee, std::vector<ExprPtr> args,
                     TermPtr body, SourceSpan span, std::optional<IRTypeRef> note) {
  Term t;
  t.tag = Term::Tag::LetCCall;
  t.vars = {std::move(v)};
  t.callee = std::move(callee);
  t.args = std::move(args);
  t.body = std::move(body);
  t.span = span;
  t.type_note = std::move(note);
  return make_term(std::move(t));
}

TermPtr mk_let_call(std::vector<std::string> vars, std::string callee,
                    std::vector<ExprPtr> args, TermPtr body, SourceSpan span) {
  Term t;
  t.tag = Term::Tag::LetCall;
  t.vars = std::move(vars);
  t.callee = std::move(callee);
  t.args = std::move(args);
  t.body = std::move(body);
  t.span = span;
  return make_term(std::move(t));
}

TermPtr mk_stack_alloc(std::string v, uint64_t size, uint64_t align, TermPtr body,
                       SourceSpan span) {
  Term t;
  t.tag = Term::Tag::LetStackAlloc;
  t.vars = {std::move(v)};
  t.alloc_size = size;
  t.alloc_align = align;
  t.body = std::move(body);
  t.span = span;
  return make_term(std::move(t));
}

TermPtr mk_if(ExprPtr cond, TermPtr then_branch, TermPtr else_branch, SourceSpan span) {
  Term t;
  t.tag = Term::Tag::If;
  t.cond = std::move(cond);
  t.then_branch = std::move(then_branch);
  t.else_branch = std::move(else_branch);
  t.span = span;
  return make_term(std::move(t));
}

TermPtr mk_return(std::vector<ExprPtr> args, SourceSpan span) {
  Term t;
  t.tag = Term::Tag::Return;
  t.args = std::move(args);
  t.span = span;
  return make_term(std::move(t));
}

// ---------------------------------------------------------------------------
// Module lookups

const FunBinding* ModuleInterface::find_fun(const std::string& n) const {
  for (const auto& f : fun_bindings) {
    if (f.name == n) return &f;
  }
  return nullptr;
}

const ExternalDecl* ModuleInterface::find_external(const std::string& n) const {
  for (const auto& e : externals) {
    if (e.name == n) return &e;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// Fresh names

bool is_temp_name(const std::string& name) {
  if (name.size() < 3 || name[0] != '_' || name[1] != 't') return false;
  for (size_t i = 2; i < name.size(); i++) {
    if (!isdigit(static_cast<unsigned char>(name[i]))) return false;
  }
  return true;
}

static void temp_index_of(const std::string& name, int64_t& best) {
  if (!is_temp_name(name)) return;
  best = std::max(best, static_cast<int64_t>(std::stoll(name.substr(2))));
}

static void max_temp_expr(const ExprPtr& e, int64_t& best) {
  if (!e) return;
  if (e->tag == Expr::Tag::Var) temp_index_of(e->name, best);
  for (const auto& a : e->args) max_temp_expr(a, best);
}

static void max_temp_term(const TermPtr& t, int64_t& best) {
  if (!t) return;
  for (const auto& v : t->vars) temp_index_of(v, best);
  for (const auto& a : t->args) max_temp_expr(a, best);
  max_temp_expr(t->cond, best);
  max_temp_term(t->body, best);
  max_temp_term(t->then_branch, best);
  max_temp_term(t->else_branch, best);
}

int64_t max_temp_index(const TermPtr& t) {
  int64_t best = -1;
  max_temp_term(t, best);
  return best;
}

int64_t max_temp_index(const ModuleInterface& m) {
  int64_t best = -1;
  for (const auto& f : m.fun_bindings) {
    for (const auto& p : f.def.params) temp_index_of(p.name, best);
    max_temp_term(f.def.body, best);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Term utilities

uint64_t binding_count(const TermPtr& t) {
  if (!t) return 0;
  switch (t->tag) {
    case Term::Tag::If:
      return binding_count(t->then_branch) + binding_count(t->else_branch);
    case Term::Tag::Return:
      return 0;
    default:
      return 1 + binding_count(t->body);
  }
}

static bool expr_is_var(const ExprPtr& e) { return e && e->tag == Expr::Tag::Var; }

static bool args_are_vars(const std::vector<ExprPtr>& args) {
  return std::all_of(args.begin(), args.end(), expr_is_var);
}

bool is_normal(const TermPtr& t) {
  if (!t) return false;
  switch (t->tag) {
    case Term::Tag::Return:
      return args_are_vars(t->args);
    case Term::Tag::If:
      return expr_is_var(t->cond) && is_normal(t->then_branch) &&
             is_normal(t->else_branch);
    case Term::Tag::LetLit:
    case Term::Tag::LetStackAlloc:
      return is_normal(t->body);
    default:
      return args_are_vars(t->args) && is_normal(t->body);
  }
}

bool is_normal(const FunDef& f) { return is_normal(f.body); }

static void free_vars_expr(const ExprPtr& e, const std::set<std::string>& bound,
                           std::vector<std::string>& out, std::set<std::string>& seen) {
  if (!e) return;
  if (e->tag == Expr::Tag::Var) {
    if (!bound.count(e->name) && seen.insert(e->name).second) out.push_back(e->name);
  }
  for (const auto& a : e->args) free_vars_expr(a, bound, out, seen);
}

static void free_vars_term(const TermPtr& t, std::set<std::string> bound,
                           std::vector<std::string>& out, std::set<std::string>& seen) {
  if (!t) return;
  for (const auto& a : t->args) free_vars_expr(a, bound, out, seen);
  free_vars_expr(t->cond, bound, out, seen);
  if (t->tag == Term::Tag::If) {
    free_vars_term(t->then_branch, bound, out, seen);
    free_vars_term(t->else_branch, bound, out, seen);
    return;
  }
  for (const auto& v : t->vars) bound.insert(v);
  free_vars_term(t->body, std::move(bound), out, seen);
}

std::vector<std::string> free_vars(const TermPtr& t) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  free_vars_term(t, {}, out, seen);
  return out;
}

static ExprPtr subst_expr(const ExprPtr& e, const std::map<std::string, std::string>& sub) {
  if (!e) return e;
  if (e->tag == Expr::Tag::Var) {
    auto it = sub.find(e->name);
    if (it == sub.end()) return e;
    Expr copy = *e;
    copy.name = it->second;
    return std::make_shared<const Expr>(std::move(copy));
  }
  if (e->args.empty()) return e;
  Expr copy = *e;
  for (auto& a : copy.args) a = subst_expr(a, sub);
  return std::make_shared<const Expr>(std::move(copy));
}

TermPtr subst_vars(const TermPtr& t, const std::map<std::string, std::string>& sub) {
  if (!t || sub.empty()) return t;
  Term copy = *t;
  for (auto& a : copy.args) a = subst_expr(a, sub);
  copy.cond = subst_expr(copy.cond, sub);
  if (t->tag == Term::Tag::If) {
    copy.then_branch = subst_vars(t->then_branch, sub);
    copy.else_branch = subst_vars(t->else_branch, sub);
  } else if (t->body) {
    // Bound names shadow the substitution in the continuation.
    std::map<std::string, std::string> inner = sub;
    for (const auto& v : t->vars) inner.erase(v);
    copy.body = inner.empty() ? t->body : subst_vars(t->body, inner);
  }
  return std::make_shared<const Term>(std::move(copy));
}

static TermPtr rename_bound_rec(const TermPtr& t, NameSupply& supply,
                                std::map<std::string, std::string> sub) {
  if (!t) return t;
  Term copy = *t;
  for (auto& a : copy.args) a = subst_expr(a, sub);
  copy.cond = subst_expr(copy.cond, sub);
  if (t->tag == Term::Tag::If) {
    copy.then_branch = rename_bound_rec(t->then_branch, supply, sub);
    copy.else_branch = rename_bound_rec(t->else_branch, supply, sub);
    return std::make_shared<const Term>(std::move(copy));
  }
  for (auto& v : copy.vars) {
    std::string fresh = supply.fresh();
    sub[v] = fresh;
    v = fresh;
  }
  copy.body = rename_bound_rec(t->body, supply, std::move(sub));
  return std::make_shared<const Term>(std::move(copy));
}

TermPtr rename_bound(const TermPtr& t, NameSupply& supply,
                     const std::map<std::string, std::string>& init) {
  return rename_bound_rec(t, supply, init);
}

// ---------------------------------------------------------------------------
// Scope validation

namespace {

struct ScopeChecker {
  DiagnosticList diags;
  std::set<std::string> ever_bound;

  void error(const SourceSpan& span, const std::string& msg) {
    diags.push_back({Severity::Error, msg, span});
  }

  void check_expr(const ExprPtr& e, const std::set<std::string>& in_scope) {
    if (!e) return;
    if (e->tag == Expr::Tag::Var && !in_scope.count(e->name)) {
      error(e->span, "use of unbound variable '" + e->name + "'");
    }
    for (const auto& a : e->args) check_expr(a, in_scope);
  }

  void check_term(const TermPtr& t, std::set<std::string> in_scope) {
    if (!t) return;
    for (const auto& a : t->args) check_expr(a, in_scope);
    check_expr(t->cond, in_scope);
    if (t->tag == Term::Tag::If) {
      check_term(t->then_branch, in_scope);
      check_term(t->else_branch, std::move(in_scope));
      return;
    }
    if (t->tag == Term::Tag::Return) return;
    for (const auto& v : t->vars) {
      if (!ever_bound.insert(v).second) {
        error(t->span, "variable '" + v + "' bound more than once");
      }
      in_scope.insert(v);
    }
    check_term(t->body, std::move(in_scope));
  }
};

}  // namespace

DiagnosticList validate_scopes(const FunDef& f) {
  ScopeChecker sc;
  std::set<std::string> in_scope;
  for (const auto& p : f.params) {
    if (!sc.ever_bound.insert(p.name).second) {
      sc.error(p.span, "parameter '" + p.name + "' bound more than once");
    }
    in_scope.insert(p.name);
  }
  sc.check_term(f.body, std::move(in_scope));
  return sc.diags;
}

// ---------------------------------------------------------------------------
// Alpha equivalence

namespace {

// Bound names map to serial numbers on each side; free names must agree
// verbatim.
struct AlphaCtx {
  std::map<std::string, uint64_t> left, right;
  uint64_t next = 0;

  void bind(const std::string& a, const std::string& b) {
    left[a] = next;
    right[b] = next;
    next++;
  }

  bool var_eq(const std::string& a, const std::string& b) const {
    auto la = left.find(a);
    auto rb = right.find(b);
    if (la != left.end() || rb != right.end()) {
      return la != left.end() && rb != right.end() && la->second == rb->second;
    }
    return a == b;
  }
};

bool alpha_expr(const ExprPtr& a, const ExprPtr& b, const AlphaCtx& ctx) {
  if (!a || !b) return a == b;
  if (a->tag != b->tag) return false;
  switch (a->tag) {
    case Expr::Tag::Var:
      return ctx.var_eq(a->name, b->name);
    case Expr::Tag::Lit:
      return a->lit == b->lit;
    case Expr::Tag::Prim:
      if (a->op != b->op) return false;
      break;
    case Expr::Tag::Select:
      if (a->index != b->index) return false;
      break;
    case Expr::Tag::Alloc:
      break;
    case Expr::Tag::CCall:
    case Expr::Tag::Call:
      if (a->name != b->name) return false;
      break;
  }
  if (a->args.size() != b->args.size()) return false;
  for (size_t i = 0; i < a->args.size(); i++) {
    if (!alpha_expr(a->args[i], b->args[i], ctx)) return false;
  }
  return true;
}

bool alpha_term(const TermPtr& a, const TermPtr& b, AlphaCtx ctx) {
  if (!a || !b) return a == b;
  if (a->tag != b->tag) return false;
  switch (a->tag) {
    case Term::Tag::LetLit:
      if (!(a->lit == b->lit)) return false;
      break;
    case Term::Tag::LetPrim:
      if (a->op != b->op) return false;
      break;
    case Term::Tag::LetSelect:
      if (a->index != b->index) return false;
      break;
    case Term::Tag::LetCCall:
    case Term::Tag::LetCall:
      if (a->callee != b->callee) return false;
      break;
    case Term::Tag::LetStackAlloc:
      if (a->alloc_size != b->alloc_size || a->alloc_align != b->alloc_align)
        return false;
      break;
    default:
      break;
  }
  if (a->args.size() != b->args.size()) return false;
  for (size_t i = 0; i < a->args.size(); i++) {
    if (!alpha_expr(a->args[i], b->args[i], ctx)) return false;
  }
  if (a->tag == Term::Tag::If) {
    if (!alpha_expr(a->cond, b->cond, ctx)) return false;
    return alpha_term(a->then_branch, b->then_branch, ctx) &&
           alpha_term(a->else_branch, b->else_branch, std::move(ctx));
  }
  if (a->tag == Term::Tag::Return) return true;
  if (a->vars.size() != b->vars.size()) return false;
  for (size_t i = 0; i < a->vars.size(); i++) ctx.bind(a->vars[i], b->vars[i]);
  return alpha_term(a->body, b->body, std::move(ctx));
}

}  // namespace

bool alpha_eq(const TermPtr& a, const TermPtr& b) {
  return alpha_term(a, b, AlphaCtx{});
}

bool alpha_eq(const FunDef& a, const FunDef& b) {
  if (a.params.size() != b.params.size()) return false;
  AlphaCtx ctx;
  for (size_t i = 0; i < a.params.size(); i++) {
    if (!type_equal(a.params[i].type, b.params[i].type)) return false;
    ctx.bind(a.params[i].name, b.params[i].name);
  }
  // self names participate like a binder so recursive calls line up
  ctx.bind(a.self_name, b.self_name);
  return alpha_term(a.body, b.body, std::move(ctx));
}

// ---------------------------------------------------------------------------
// Exact structural equality

static bool expr_identical(const ExprPtr& a, const ExprPtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  if (a->tag != b->tag || a->name != b->name || a->index != b->index ||
      !(a->lit == b->lit) || a->op != b->op || a->args.size() != b->args.size()) {
    return false;
  }
  for (size_t i = 0; i < a->args.size(); i++) {
    if (!expr_identical(a->args[i], b->args[i])) return false;
  }
  return true;
}

bool term_identical(const TermPtr& a, const TermPtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  if (a->tag != b->tag || a->vars != b->vars || !(a->lit == b->lit) ||
      a->op != b->op || a->callee != b->callee || a->index != b->index ||
      a->alloc_size != b->alloc_size || a->alloc_align != b->alloc_align ||
      a->args.size() != b->args.size()) {
    return false;
  }
  for (size_t i = 0; i < a->args.size(); i++) {
    if (!expr_identical(a->args[i], b->args[i])) return false;
  }
  return expr_identical(a->cond, b->cond) && term_identical(a->body, b->body) &&
         term_identical(a->then_branch, b->then_branch) &&
         term_identical(a->else_branch, b->else_branch);
}

static void return_arities_rec(const TermPtr& t, std::vector<int>& out) {
  if (!t) return;
  if (t->tag == Term::Tag::Return) {
    out.push_back(static_cast<int>(t->args.size()));
    return;
  }
  return_arities_rec(t->body, out);
  return_arities_rec(t->then_branch, out);
  return_arities_rec(t->else_branch, out);
}

std::vector<int> return_arities(const TermPtr& t) {
  std::vector<int> out;
  return_arities_rec(t, out);
  return out;
}

}  // namespace mbx
