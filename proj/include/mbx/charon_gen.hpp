#pragma once

// Identity-policy C embedding: a C header subset is mapped to phantom types,
// per-struct accessor modules whose bodies are plain address arithmetic, and
// thin ccall wrappers for extern functions.  A fixed generic library module
// (pointer tests, loads/stores, malloc/free) complements the generated code.

#include <string>
#include <vector>

#include "mbx/diagnostics.hpp"
#include "mbx/ir.hpp"
#include "mbx/layout.hpp"

namespace mbx::charon {

struct HeaderTypedef {
  std::string name;
  layout::CTypeRef type;
  SourceSpan span;
};

struct HeaderParam {
  std::string name;
  layout::CTypeRef type;
};

struct HeaderExtern {
  std::string name;
  layout::CTypeRef result;
  std::vector<HeaderParam> params;
  SourceSpan span;
};

struct HeaderUnit {
  layout::CDeclTable table;
  std::vector<std::string> struct_order;
  std::vector<HeaderTypedef> typedefs;
  std::vector<HeaderExtern> externs;
};

struct HeaderParseResult {
  HeaderUnit unit;
  DiagnosticList diags;
  bool ok() const { return !has_errors(diags); }
};

HeaderParseResult parse_header(const std::string& text, const std::string& filename);

// High-level view: phantom types, typedef equations, accessor signatures.
std::string gen_interface(const HeaderUnit& unit);

struct GenResult {
  MbiDocument doc;
  DiagnosticList diags;
  bool ok() const { return !has_errors(diags); }
};

// The implementation module (normalized).
GenResult gen_impl(const HeaderUnit& unit, const std::string& module_name,
                   const TargetConfig& target);

// The generic C-interface library module (normalized), and its source text
// for regeneration of the checked-in asset.
MbiDocument c_interface_library(const TargetConfig& target);
const char* c_interface_source();

}  // namespace mbx::charon
