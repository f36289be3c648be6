#pragma once

// Marshaling stub generation from an OSF-style IDL subset.  The policy is
// copy-in/copy-out: string arguments are unpacked to their C data pointer,
// out parameters become stack-allocated buffers whose contents are copied
// into fresh heap objects after the call, and [unique,string] results
// become an option (nil maps to 0, otherwise a one-field heap cell).

#include <set>
#include <string>
#include <vector>

#include "mbx/diagnostics.hpp"
#include "mbx/ir.hpp"
#include "mbx/layout.hpp"

namespace mbx::idl {

enum class Attr { In, Out, Ref, Unique, Str };

struct IdlParam {
  std::set<Attr> attrs;
  layout::CTypeRef type;  // pointer layers included
  std::string name;
  SourceSpan span;
};

struct IdlTypedef {
  std::string name;
  std::set<Attr> attrs;
  layout::CTypeRef type;
  SourceSpan span;
};

struct IdlProto {
  layout::CTypeRef result;
  std::string result_typedef;  // typedef name as written, when one was used
  std::string name;
  std::vector<IdlParam> params;
  SourceSpan span;
};

struct IdlUnit {
  layout::CDeclTable table;
  std::vector<std::string> struct_order;
  std::vector<IdlTypedef> typedefs;
  std::vector<IdlProto> protos;

  const IdlTypedef* find_typedef(const std::string& n) const {
    for (const auto& td : typedefs) {
      if (td.name == n) return &td;
    }
    return nullptr;
  }
};

struct IdlParseResult {
  IdlUnit unit;
  DiagnosticList diags;
  bool ok() const { return !has_errors(diags); }
};

IdlParseResult parse_idl(const std::string& text, const std::string& filename);

// High-level signature: one datatype per struct, one val per prototype.
std::string gen_signature(const IdlUnit& unit);

struct GenResult {
  MbiDocument doc;
  DiagnosticList diags;
  bool ok() const { return !has_errors(diags); }
};

// Marshaling stubs as a normalized module.
GenResult gen_stubs(const IdlUnit& unit, const std::string& module_name,
                    const TargetConfig& target);

}  // namespace mbx::idl
