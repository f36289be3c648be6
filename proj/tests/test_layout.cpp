#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "mbx/layout.hpp"

using namespace mbx;
using namespace mbx::layout;

namespace {

const TargetConfig t32 = target_ilp32();
const TargetConfig t64 = target_lp64();

CDeclTable tree_table() {
  CDeclTable table;
  table.structs["tree"] = CStructDef{
      "tree",
      {{"label", ct_scalar(Scalar::Int)},
       {"left", ct_named("tree_ptr")},
       {"right", ct_named("tree_ptr")}}};
  table.typedefs["tree_ptr"] = ct_ptr(ct_named("tree"));
  table.typedefs["tree_node"] = ct_named("tree");
  return table;
}

}  // namespace

TEST_CASE("scalar and pointer layouts per target") {
  CDeclTable empty;
  CHECK(layout_of(ct_scalar(Scalar::Char), empty, t32).size == 1);
  CHECK(layout_of(ct_scalar(Scalar::Short), empty, t32).size == 2);
  CHECK(layout_of(ct_scalar(Scalar::Int), empty, t32).size == 4);
  CHECK(layout_of(ct_scalar(Scalar::Long), empty, t32).size == 4);
  CHECK(layout_of(ct_scalar(Scalar::Long), empty, t64).size == 8);
  CHECK(layout_of(ct_ptr(ct_scalar(Scalar::Void)), empty, t32).size == 4);
  CHECK(layout_of(ct_ptr(ct_scalar(Scalar::Void)), empty, t64).size == 8);
  CHECK(layout_of(ct_ptr(ct_scalar(Scalar::Void)), empty, t64).align == 8);
}

TEST_CASE("the tree struct lands on 0/4/8 with size 12 on a 32-bit target") {
  CDeclTable table = tree_table();
  CLayout l = layout_of_struct(*table.find_struct("tree"), table, t32);
  CHECK(l.size == 12);
  CHECK(l.align == 4);
  CHECK(l.field_offsets == std::vector<uint64_t>{0, 4, 8});

  CLayout l64 = layout_of_struct(*table.find_struct("tree"), table, t64);
  CHECK(l64.size == 24);
  CHECK(l64.align == 8);
  CHECK(l64.field_offsets == std::vector<uint64_t>{0, 8, 16});
}

TEST_CASE("padding rules: char then int, and a mixed 64-bit case") {
  CDeclTable empty;
  CStructDef ci{"ci", {{"c", ct_scalar(Scalar::Char)}, {"i", ct_scalar(Scalar::Int)}}};
  CLayout l = layout_of_struct(ci, empty, t32);
  CHECK(l.field_offsets == std::vector<uint64_t>{0, 4});
  CHECK(l.size == 8);
  CHECK(l.align == 4);

  CStructDef mixed{"m",
                   {{"a", ct_scalar(Scalar::Char)},
                    {"b", ct_scalar(Scalar::Short)},
                    {"c", ct_scalar(Scalar::Char)},
                    {"d", ct_scalar(Scalar::Long)}}};
  CLayout lm = layout_of_struct(mixed, empty, t64);
  CHECK(lm.field_offsets == std::vector<uint64_t>{0, 2, 4, 8});
  CHECK(lm.size == 16);
  CHECK(lm.align == 8);

  // trailing padding comes from the widest field
  CStructDef tail{"t", {{"d", ct_scalar(Scalar::Long)}, {"c", ct_scalar(Scalar::Char)}}};
  CHECK(layout_of_struct(tail, empty, t64).size == 16);
}

TEST_CASE("typedef chains resolve to the same layout") {
  CDeclTable table = tree_table();
  CLayout direct = layout_of(ct_named("tree"), table, t32);
  CLayout via_node = layout_of(ct_named("tree_node"), table, t32);
  CHECK(direct.size == via_node.size);
  CHECK(direct.align == via_node.align);

  CLayout ptr = layout_of(ct_named("tree_ptr"), table, t32);
  CHECK(ptr.size == 4);

  // nested struct by value
  CDeclTable nested = tree_table();
  nested.structs["wrap"] = CStructDef{
      "wrap", {{"c", ct_scalar(Scalar::Char)}, {"t", ct_named("tree")}}};
  CLayout lw = layout_of_struct(*nested.find_struct("wrap"), nested, t32);
  CHECK(lw.field_offsets == std::vector<uint64_t>{0, 4});
  CHECK(lw.size == 16);
}

TEST_CASE("promote_param widens integers and flattens pointers") {
  CDeclTable table = tree_table();
  CHECK(type_equal(promote_param(ct_scalar(Scalar::Char), table, t32), ty_int(32)));
  CHECK(type_equal(promote_param(ct_scalar(Scalar::Short), table, t32), ty_int(32)));
  CHECK(type_equal(promote_param(ct_scalar(Scalar::Int), table, t32), ty_int(32)));
  CHECK(type_equal(promote_param(ct_scalar(Scalar::Long), table, t64), ty_int(64)));
  CHECK(promote_param(ct_named("tree_ptr"), table, t32)->tag == IRType::Tag::AddrData);

  IRTypeRef by_value = promote_param(ct_named("tree"), table, t32);
  REQUIRE(by_value->tag == IRType::Tag::StructParam);
  CHECK(by_value->layout->size == 12);
}

TEST_CASE("to_ir_struct produces well-formed IR with matching offsets") {
  CDeclTable table = tree_table();
  IRTypeRef ir = to_ir_struct(*table.find_struct("tree"), table, t32);
  REQUIRE(ir->tag == IRType::Tag::StructLayout);
  CHECK(well_formed(ir, t32).empty());
  CLayout l = layout_of_struct(*table.find_struct("tree"), table, t32);
  REQUIRE(ir->fields.size() == l.field_offsets.size());
  for (size_t i = 0; i < ir->fields.size(); i++)
    CHECK(ir->fields[i].offset == l.field_offsets[i]);
  CHECK(ir->size == l.size);
}

// Independent oracle: place each field at the first address >= cursor that
// its alignment accepts, probing one byte at a time.  Any mismatch against
// the arithmetic version is a bug in one of them.
namespace {

struct OracleResult {
  uint64_t size, align;
  std::vector<uint64_t> offsets;
};

OracleResult brute_force(const CStructDef& s, const CDeclTable& table,
                         const TargetConfig& target) {
  OracleResult r{0, 1, {}};
  uint64_t cursor = 0;
  for (const auto& f : s.fields) {
    CLayout fl = layout_of(f.type, table, target);
    uint64_t off = cursor;
    while (off % fl.align != 0) off++;
    r.offsets.push_back(off);
    cursor = off + fl.size;
    if (fl.align > r.align) r.align = fl.align;
  }
  r.size = cursor;
  while (r.size % r.align != 0) r.size++;
  if (r.size == 0) r.size = r.align;
  return r;
}

}  // namespace

TEST_CASE("randomized structs agree with the byte-probing oracle") {
  std::mt19937 rng(7);
  const Scalar scalars[] = {Scalar::Char, Scalar::UChar, Scalar::Short,
                            Scalar::UShort, Scalar::Int, Scalar::UInt,
                            Scalar::Long, Scalar::ULong};
  CDeclTable table;
  for (const TargetConfig& target : {t32, t64}) {
    for (int trial = 0; trial < 500; trial++) {
      CStructDef s{"s", {}};
      int n = 1 + static_cast<int>(rng() % 8);
      for (int i = 0; i < n; i++) {
        CTypeRef t = rng() % 5 == 0 ? ct_ptr(ct_scalar(Scalar::Void))
                                    : ct_scalar(scalars[rng() % 8]);
        s.fields.push_back({"f" + std::to_string(i), t});
      }
      CLayout got = layout_of_struct(s, table, target);
      OracleResult want = brute_force(s, table, target);
      CHECK(got.size == want.size);
      CHECK(got.align == want.align);
      CHECK(got.field_offsets == want.offsets);
    }
  }
}
