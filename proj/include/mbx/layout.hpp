#pragma once

// Natural-alignment C ABI layout: sizes, alignments, and field offsets for
// the C type subset the marshaling generators understand, plus the mapping
// from C types into IR types at call boundaries.

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mbx/ir.hpp"

namespace mbx::layout {

enum class Scalar {
  Char, UChar, Short, UShort, Int, UInt, Long, ULong, Void,
};

struct CType;
using CTypeRef = std::shared_ptr<const CType>;

struct CType {
  enum class Tag { Scalar, Pointer, Named };
  Tag tag = Tag::Scalar;
  Scalar scalar = Scalar::Int;
  CTypeRef pointee;   // Pointer
  std::string name;   // Named: a struct tag or typedef name
};

CTypeRef ct_scalar(Scalar s);
CTypeRef ct_ptr(CTypeRef pointee);
CTypeRef ct_named(std::string name);

struct CField {
  std::string name;
  CTypeRef type;
};

struct CStructDef {
  std::string tag;
  std::vector<CField> fields;
};

// Declaration table for resolving named types.  Typedefs may alias scalars,
// pointers, or struct tags; struct tags resolve through `structs`.
struct CDeclTable {
  std::map<std::string, CStructDef> structs;
  std::map<std::string, CTypeRef> typedefs;

  const CStructDef* find_struct(const std::string& tag) const {
    auto it = structs.find(tag);
    return it == structs.end() ? nullptr : &it->second;
  }
};

struct CLayout {
  uint64_t size = 0;
  uint64_t align = 1;
  std::vector<uint64_t> field_offsets;  // structs only, in field order
};

struct LayoutError {
  std::string message;
};

// Size/alignment/offsets under the natural-alignment ABI: each field is
// placed at the next multiple of its alignment, struct alignment is the max
// of field alignments, and total size rounds up to that alignment.
CLayout layout_of(const CTypeRef& t, const CDeclTable& table, const TargetConfig& target);
CLayout layout_of_struct(const CStructDef& s, const CDeclTable& table,
                         const TargetConfig& target);

// How a C parameter of this type crosses the call boundary: integer types
// promote to at least int width, pointers become data addresses, and
// by-value structs become StructParam.
IRTypeRef promote_param(const CTypeRef& t, const CDeclTable& table,
                        const TargetConfig& target);

// IR view of a struct definition, offsets per layout_of.
IRTypeRef to_ir_struct(const CStructDef& s, const CDeclTable& table,
                       const TargetConfig& target);

// Resolves typedef names down to a concrete scalar/pointer/struct view.
CTypeRef resolve(const CTypeRef& t, const CDeclTable& table);

bool is_struct_type(const CTypeRef& t, const CDeclTable& table, std::string* tag_out);

std::string scalar_name(Scalar s);

}  // namespace mbx::layout
