#include "mbx/layout.hpp"

#include <algorithm>
#include <stdexcept>

namespace mbx::layout {

CTypeRef ct_scalar(Scalar s) {
  CType t;
  t.tag = CType::Tag::Scalar;
  t.scalar = s;
  return std::make_shared<const CType>(std::move(t));
}

CTypeRef ct_ptr(CTypeRef pointee) {
  CType t;
  t.tag = CType::Tag::Pointer;
  t.pointee = std::move(pointee);
  return std::make_shared<const CType>(std::move(t));
}

CTypeRef ct_named(std::string name) {
  CType t;
  t.tag = CType::Tag::Named;
  t.name = std::move(name);
  return std::make_shared<const CType>(std::move(t));
}

std::string scalar_name(Scalar s) {
  switch (s) {
    case Scalar::Char: return "char";
    case Scalar::UChar: return "unsigned char";
    case Scalar::Short: return "short";
    case Scalar::UShort: return "unsigned short";
    case Scalar::Int: return "int";
    case Scalar::UInt: return "unsigned int";
    case Scalar::Long: return "long";
    case Scalar::ULong: return "unsigned long";
    case Scalar::Void: return "void";
  }
  return "?";
}

CTypeRef resolve(const CTypeRef& t, const CDeclTable& table) {
  CTypeRef cur = t;
  // typedef chains are short; a cycle would be a malformed table
  for (int depth = 0; depth < 64; depth++) {
    if (!cur || cur->tag != CType::Tag::Named) return cur;
    auto it = table.typedefs.find(cur->name);
    if (it == table.typedefs.end()) return cur;  // struct tag
    cur = it->second;
  }
  return cur;
}

bool is_struct_type(const CTypeRef& t, const CDeclTable& table, std::string* tag_out) {
  CTypeRef r = resolve(t, table);
  if (r && r->tag == CType::Tag::Named && table.find_struct(r->name)) {
    if (tag_out) *tag_out = r->name;
    return true;
  }
  return false;
}

static uint64_t align_up(uint64_t v, uint64_t a) { return (v + a - 1) / a * a; }

static CLayout scalar_layout(Scalar s, const TargetConfig& target) {
  switch (s) {
    case Scalar::Char:
    case Scalar::UChar:
      return {1, 1, {}};
    case Scalar::Short:
    case Scalar::UShort:
      return {2, 2, {}};
    case Scalar::Int:
    case Scalar::UInt:
      return {4, 4, {}};
    case Scalar::Long:
    case Scalar::ULong:
      return {static_cast<uint64_t>(target.word_bytes()),
              static_cast<uint64_t>(target.word_bytes()),
              {}};
    case Scalar::Void:
      return {0, 1, {}};
  }
  return {0, 1, {}};
}

CLayout layout_of(const CTypeRef& t, const CDeclTable& table, const TargetConfig& target) {
  CTypeRef r = resolve(t, table);
  if (!r) throw std::runtime_error("layout_of: null type");
  switch (r->tag) {
    case CType::Tag::Scalar:
      return scalar_layout(r->scalar, target);
    case CType::Tag::Pointer:
      return {static_cast<uint64_t>(target.word_bytes()),
              static_cast<uint64_t>(target.word_bytes()),
              {}};
    case CType::Tag::Named: {
      const CStructDef* sd = table.find_struct(r->name);
      if (!sd) throw std::runtime_error("layout_of: unknown type '" + r->name + "'");
      return layout_of_struct(*sd, table, target);
    }
  }
  return {0, 1, {}};
}

CLayout layout_of_struct(const CStructDef& s, const CDeclTable& table,
                         const TargetConfig& target) {
  CLayout out;
  uint64_t cursor = 0;
  uint64_t align = 1;
  for (const auto& f : s.fields) {
    CLayout fl = layout_of(f.type, table, target);
    uint64_t off = align_up(cursor, fl.align);
    out.field_offsets.push_back(off);
    cursor = off + fl.size;
    align = std::max(align, fl.align);
  }
  out.align = align;
  out.size = align_up(cursor, align);
  if (out.size == 0) out.size = align;  // empty structs still occupy storage
  return out;
}

// IR field representation: signed integers keep their width, unsigned ones
// become range types, pointers are data addresses, nested structs recurse.
static IRTypeRef field_ir_type(const CTypeRef& t, const CDeclTable& table,
                               const TargetConfig& target) {
  CTypeRef r = resolve(t, table);
  switch (r->tag) {
    case CType::Tag::Scalar:
      switch (r->scalar) {
        case Scalar::Char: return ty_int(8);
        case Scalar::UChar: return ty_enum(0, 255);
        case Scalar::Short: return ty_int(16);
        case Scalar::UShort: return ty_enum(0, 65535);
        case Scalar::Int: return ty_int(32);
        case Scalar::UInt: return ty_enum(0, 4294967295LL);
        case Scalar::Long:
        case Scalar::ULong:
          return ty_int(target.word_size);
        case Scalar::Void: return ty_void();
      }
      return ty_void();
    case CType::Tag::Pointer:
      return ty_addr();
    case CType::Tag::Named: {
      const CStructDef* sd = table.find_struct(r->name);
      if (!sd) throw std::runtime_error("field type: unknown type '" + r->name + "'");
      return to_ir_struct(*sd, table, target);
    }
  }
  return ty_void();
}

IRTypeRef to_ir_struct(const CStructDef& s, const CDeclTable& table,
                       const TargetConfig& target) {
  CLayout lay = layout_of_struct(s, table, target);
  std::vector<StructField> fields;
  for (size_t i = 0; i < s.fields.size(); i++) {
    fields.push_back({lay.field_offsets[i], field_ir_type(s.fields[i].type, table, target)});
  }
  return ty_struct(lay.size, lay.align, std::move(fields));
}

IRTypeRef promote_param(const CTypeRef& t, const CDeclTable& table,
                        const TargetConfig& target) {
  CTypeRef r = resolve(t, table);
  switch (r->tag) {
    case CType::Tag::Scalar:
      switch (r->scalar) {
        case Scalar::Char:
        case Scalar::UChar:
        case Scalar::Short:
        case Scalar::UShort:
        case Scalar::Int:
        case Scalar::UInt:
          return ty_int(32);  // default integer promotion
        case Scalar::Long:
        case Scalar::ULong:
          return ty_int(target.word_size);
        case Scalar::Void:
          return ty_void();
      }
      return ty_void();
    case CType::Tag::Pointer:
      return ty_addr();
    case CType::Tag::Named: {
      const CStructDef* sd = table.find_struct(r->name);
      if (!sd) throw std::runtime_error("promote_param: unknown type '" + r->name + "'");
      return ty_struct_param(to_ir_struct(*sd, table, target));
    }
  }
  return ty_void();
}

}  // namespace mbx::layout
