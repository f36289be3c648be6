#pragma once

// Kind/type checking over parsed modules.  The checker is deliberately weak
// where the IR is: every address joins with every other address, and integer
// widths mix freely (arithmetic wraps at 32 bits anyway).  What it enforces
// hard: kinds at binding and call sites, arities, field indices, scope
// discipline, and resolution of every ccall and direct call.

#include <map>
#include <string>
#include <vector>

#include "mbx/diagnostics.hpp"
#include "mbx/ir.hpp"

namespace mbx {

struct TypeEnv {
  TargetConfig target;
  std::vector<const MbiDocument*> modules;  // compilation environment
};

struct CheckedFun {
  // static type of every parameter and let-bound variable
  std::map<std::string, IRTypeRef> var_types;
  std::vector<IRTypeRef> result_types;
  int result_arity = 0;
  // callee name as written -> flat resolved binding name
  std::map<std::string, std::string> callee_resolution;
};

struct CheckedModule {
  std::map<std::string, CheckedFun> funs;  // by flat binding name
  DiagnosticList diags;
  bool ok() const { return !has_errors(diags); }
};

CheckedModule check_module(const TypeEnv& env, const MbiDocument& doc);

// Whole-program view used by the interpreter: every module checked against
// the others, with flat function and external indexes.
struct ProgramFun {
  const MbiDocument* doc = nullptr;
  const FunBinding* binding = nullptr;
  CheckedFun checked;
};

struct CheckedProgram {
  TargetConfig target;
  std::map<std::string, ProgramFun> funs;  // keyed by program_name
  std::map<std::string, IRTypeRef> externals;  // name -> CFun signature

  const ProgramFun* find(const std::string& name) const {
    auto it = funs.find(name);
    return it == funs.end() ? nullptr : &it->second;
  }

  // Exact match first, then a unique ".name" suffix match so entry points
  // can be given without their module qualifier.
  const ProgramFun* resolve_name(const std::string& name) const;
};

// Program-wide canonical name of a binding: "<module>.<binding>".
std::string program_name(const MbiDocument& doc, const FunBinding& fb);

CheckedProgram check_program(const std::vector<const MbiDocument*>& docs,
                             DiagnosticList& diags);

// Flags stack addresses that may outlive their frame: a stackalloc-bound
// address (or anything derived from it via AdrAdd) that is returned, stored
// via AdrStoreAdr, or captured by a heap allocation.
DiagnosticList escape_lint(const FunDef& f);
DiagnosticList escape_lint(const MbiDocument& doc);

}  // namespace mbx
