#pragma once

// Kinded low-level IR shared by every stage of the toolchain: the type
// grammar, A-normal-form terms, module interfaces, and the structural
// predicates (kind_of, well_formed, alpha_eq) the rest of the pipeline
// leans on.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mbx/diagnostics.hpp"

namespace mbx {

// ---------------------------------------------------------------------------
// Target description

enum class Endian : uint8_t { Little = 0, Big = 1 };

struct TargetConfig {
  int word_size = 32;  // bits: 32 or 64
  Endian endianness = Endian::Little;
  int default_int_bits = 32;

  int word_bytes() const { return word_size / 8; }
  bool operator==(const TargetConfig&) const = default;
};

inline TargetConfig target_ilp32() { return TargetConfig{32, Endian::Little, 32}; }
inline TargetConfig target_lp64() { return TargetConfig{64, Endian::Little, 32}; }

// ---------------------------------------------------------------------------
// Kinds
//
// Word: fits a machine register and may be passed, returned, and compared.
// Var: fits in (possibly several) registers; may be bound but not compared.
// Memory: lives only behind a pointer.  Word < Var < Memory.

enum class Kind { Word, Var, Memory };

inline bool kind_leq(Kind a, Kind b) {
  return static_cast<int>(a) <= static_cast<int>(b);
}

const char* kind_name(Kind k);

// ---------------------------------------------------------------------------
// Types

struct IRType;
using IRTypeRef = std::shared_ptr<const IRType>;

struct StructField {
  uint64_t offset = 0;
  IRTypeRef type;
};

struct IRType {
  enum class Tag {
    EnumRange,    // enum(lo, hi): integers in [lo, hi]
    IntN,         // int8/int16/int32/int64
    AddrData,     // untyped data address
    Ptr,          // typed pointer
    Vector,       // contiguous elements; count may be unknown
    StructLayout, // explicit size:align plus offset-tagged fields
    CFun,         // C function signature
    StructParam,  // struct passed by value at a C boundary
    Void,         // no value; legal only as a CFun result
    Unknown,      // checker-internal: result of a not-yet-typed call
  };

  Tag tag = Tag::Void;
  int64_t lo = 0, hi = 0;                // EnumRange
  int bits = 0;                          // IntN
  IRTypeRef elem;                        // Ptr target, Vector element
  std::optional<uint64_t> count;         // Vector: nullopt = unknown
  uint64_t size = 0, align = 0;          // StructLayout
  std::vector<StructField> fields;       // StructLayout
  std::vector<IRTypeRef> params;         // CFun
  IRTypeRef result;                      // CFun
  IRTypeRef layout;                      // StructParam
};

IRTypeRef ty_enum(int64_t lo, int64_t hi);
IRTypeRef ty_int(int bits);
IRTypeRef ty_addr();
IRTypeRef ty_ptr(IRTypeRef target);
IRTypeRef ty_vector(std::optional<uint64_t> count, IRTypeRef elem);
IRTypeRef ty_struct(uint64_t size, uint64_t align, std::vector<StructField> fields);
IRTypeRef ty_cfun(std::vector<IRTypeRef> params, IRTypeRef result);
IRTypeRef ty_struct_param(IRTypeRef layout);
IRTypeRef ty_void();
IRTypeRef ty_unknown();

// Structural equality.  Unknown compares equal only to Unknown.
bool type_equal(const IRTypeRef& a, const IRTypeRef& b);

// Size in bytes, if statically known (vectors of unknown count have none).
std::optional<uint64_t> byte_size(const IRTypeRef& t, const TargetConfig& target);

// Natural alignment in bytes.
uint64_t natural_align(const IRTypeRef& t, const TargetConfig& target);

Kind kind_of(const IRTypeRef& t, const TargetConfig& target);

// Checks the structural invariants (offset monotonicity, no field overlap,
// alignment sanity, vector placement).  Returns a list of violations;
// empty means well-formed.
std::vector<std::string> well_formed(const IRTypeRef& t, const TargetConfig& target);

std::string type_to_string(const IRTypeRef& t);

// The heap string object: struct { int len; addr data } at target layout.
IRTypeRef string_object_type(const TargetConfig& target);
IRTypeRef string_ptr_type(const TargetConfig& target);

// ---------------------------------------------------------------------------
// Primitive operations

enum class PrimOp {
  I32Add, I32Sub, I32Mul, I32Lt, I32Eq,
  AdrAdd, AdrEq,
  AdrLoadI32, AdrStoreI32,
  AdrLoadI64, AdrStoreI64,
  AdrLoadAdr, AdrStoreAdr,
  AdrLoadU8, AdrStoreU8,
};

struct PrimOpInfo {
  const char* name;
  int arity;
  bool is_store;  // stores bind a Void result
  bool is_load;
};

const PrimOpInfo& primop_info(PrimOp op);
std::optional<PrimOp> primop_by_name(const std::string& name);
// Parameter / result types for an op under the given target.
std::vector<IRTypeRef> primop_params(PrimOp op, const TargetConfig& target);
IRTypeRef primop_result(PrimOp op, const TargetConfig& target);

// ---------------------------------------------------------------------------
// Literals

struct Literal {
  enum class Tag { Int, Nil, Str };
  Tag tag = Tag::Int;
  int64_t ival = 0;
  std::string sval;

  static Literal make_int(int64_t v) { return Literal{Tag::Int, v, {}}; }
  static Literal make_nil() { return Literal{Tag::Nil, 0, {}}; }
  static Literal make_str(std::string s) { return Literal{Tag::Str, 0, std::move(s)}; }

  bool operator==(const Literal&) const = default;
};

// ---------------------------------------------------------------------------
// Expressions and terms
//
// Surface expressions may nest arbitrarily; after normalization every
// argument position holds a Var and every intermediate result is let-bound.

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum class Tag { Var, Lit, Prim, Select, Alloc, CCall, Call };

  Tag tag = Tag::Var;
  std::string name;             // Var; CCall/Call: callee
  Literal lit;                  // Lit
  PrimOp op = PrimOp::I32Add;   // Prim
  std::vector<ExprPtr> args;    // Prim/Alloc/CCall/Call; Select: {base}
  int index = 0;                // Select
  SourceSpan span;
};

ExprPtr ex_var(std::string name, SourceSpan span = {});
ExprPtr ex_lit(Literal lit, SourceSpan span = {});
ExprPtr ex_prim(PrimOp op, std::vector<ExprPtr> args, SourceSpan span = {});
ExprPtr ex_select(ExprPtr base, int index, SourceSpan span = {});
ExprPtr ex_alloc(std::vector<ExprPtr> args, SourceSpan span = {});
ExprPtr ex_ccall(std::string callee, std::vector<ExprPtr> args, SourceSpan span = {});
ExprPtr ex_call(std::string callee, std::vector<ExprPtr> args, SourceSpan span = {});

struct Term;
using TermPtr = std::shared_ptr<const Term>;

struct Term {
  enum class Tag {
    LetLit,        // let v = literal
    LetPrim,       // let v = op(args)
    LetAlloc,      // let v = alloc(args)        heap allocation
    LetSelect,     // let v = base#i
    LetCCall,      // let v = ccall f(args)
    LetCall,       // let (v...) = f(args)       direct call, 0+ results
    LetStackAlloc, // stackalloc v[size:align]   scoped to enclosing function
    If,            // if c then t else e         tail position only
    Return,        // return (args)
  };

  Tag tag = Tag::Return;
  std::vector<std::string> vars;  // bound names; LetCall may bind several
  Literal lit;                    // LetLit
  PrimOp op = PrimOp::I32Add;     // LetPrim
  std::string callee;             // LetCCall / LetCall
  std::vector<ExprPtr> args;      // operands; LetSelect: {base}; Return: results
  int index = 0;                  // LetSelect
  std::optional<IRTypeRef> type_note;  // optional annotation (let v : T = ...)
  uint64_t alloc_size = 0, alloc_align = 0;  // LetStackAlloc
  TermPtr body;                   // continuation of every Let form
  ExprPtr cond;                   // If
  TermPtr then_branch, else_branch;
  SourceSpan span;
};

TermPtr mk_let_lit(std::string v, Literal lit, TermPtr body, SourceSpan span = {},
                   std::optional<IRTypeRef> note = std::nullopt);
TermPtr mk_let_prim(std::string v, PrimOp op, std::vector<ExprPtr> args, TermPtr body,
                    SourceSpan span = {}, std::optional<IRTypeRef> note = std::nullopt);
TermPtr mk_let_alloc(std::string v, std::vector<ExprPtr> args, TermPtr body,
                     SourceSpan span = {}, std::optional<IRTypeRef> note = std::nullopt);
TermPtr mk_let_select(std::string v, ExprPtr base, int index, TermPtr body,
                      SourceSpan span = {}, std::optional<IRTypeRef> note = std::nullopt);
TermPtr mk_let_ccall(std::string v, std::string callee, std::vector<ExprPtr> args,
                     TermPtr body, SourceSpan span = {},
                     std::optional<IRTypeRef> note = std::nullopt);
TermPtr mk_let_call(std::vector<std::string> vars, std::string callee,
                    std::vector<ExprPtr> args, TermPtr body, SourceSpan span = {});
TermPtr mk_stack_alloc(std::string v, uint64_t size, uint64_t align, TermPtr body,
                       SourceSpan span = {});
TermPtr mk_if(ExprPtr cond, TermPtr then_branch, TermPtr else_branch, SourceSpan span = {});
TermPtr mk_return(std::vector<ExprPtr> args, SourceSpan span = {});

// ---------------------------------------------------------------------------
// Functions and modules

struct Param {
  std::string name;
  IRTypeRef type;
  SourceSpan span;
};

struct FunDef {
  std::string self_name;  // name recursive calls use inside the body
  std::vector<Param> params;
  TermPtr body;
  SourceSpan span;
};

struct TypeDef {  // typedef n = <type>
  std::string name;
  IRTypeRef type;
  SourceSpan span;
};

struct TypeBinding {  // type N = prim <type>  |  type N = M (alias)
  std::string name;
  bool is_alias = false;
  std::string alias_of;  // when is_alias
  IRTypeRef type;        // when !is_alias
  SourceSpan span;
};

struct ExternalDecl {
  std::string name;
  IRTypeRef signature;  // always a CFun
  SourceSpan span;
};

struct FunBinding {
  std::string name;      // possibly dotted: "Stree.label"
  std::string hl_type;   // opaque high-level annotation, e.g. "Int -> Int"
  FunDef def;
  SourceSpan span;
};

struct ModuleInterface {
  std::string name;
  std::vector<TypeDef> typedefs;
  std::vector<TypeBinding> type_bindings;
  std::vector<ExternalDecl> externals;
  std::vector<FunBinding> fun_bindings;

  const FunBinding* find_fun(const std::string& n) const;
  const ExternalDecl* find_external(const std::string& n) const;
};

struct MbiDocument {
  int version = 1;
  TargetConfig target;
  ModuleInterface module;
};

// ---------------------------------------------------------------------------
// Fresh names

// Generated temporaries are "_t<n>"; callers seed the supply past the
// highest temporary index already present so fresh names never collide.
struct NameSupply {
  uint64_t next = 0;
  std::string fresh() { return "_t" + std::to_string(next++); }
};

bool is_temp_name(const std::string& name);
// Largest _t index present in the term (or -1), for seeding a supply.
int64_t max_temp_index(const TermPtr& t);
int64_t max_temp_index(const ModuleInterface& m);

// ---------------------------------------------------------------------------
// Term utilities

// Number of let bindings (any Let form counts 1; If/Return count 0).
uint64_t binding_count(const TermPtr& t);

// True when every operand position is a Var (full A-normal form).
bool is_normal(const TermPtr& t);
bool is_normal(const FunDef& f);

// Free variables of a term (vars used before being bound in it).
std::vector<std::string> free_vars(const TermPtr& t);

// Capture-avoiding only in the sense needed post-normalization: replaces
// free occurrences of each key with the mapped variable name.
TermPtr subst_vars(const TermPtr& t, const std::map<std::string, std::string>& sub);

// Fresh-renames every variable bound inside the term; `init` seeds the
// substitution (used to map parameters onto call arguments).
TermPtr rename_bound(const TermPtr& t, NameSupply& supply,
                     const std::map<std::string, std::string>& init);

// Verifies each variable is bound at most once and used only in scope.
DiagnosticList validate_scopes(const FunDef& f);

// Equality up to consistent renaming of bound variables.  Type annotations
// on bindings are ignored; parameter types and every other payload
// (ops, indices, literals, callees, sizes) must match exactly.
bool alpha_eq(const TermPtr& a, const TermPtr& b);
bool alpha_eq(const FunDef& a, const FunDef& b);

// Exact structural equality, names included (used for fixpoint detection).
bool term_identical(const TermPtr& a, const TermPtr& b);

// All return arities that syntactically occur in the body.
std::vector<int> return_arities(const TermPtr& t);

}  // namespace mbx
