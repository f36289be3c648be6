#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <string>

#include "mbx/mbx_format.hpp"

using namespace mbx;

namespace {

const TargetConfig t32 = target_ilp32();

MbiDocument parse_ok(const std::string& text, const std::string& name = "Test") {
  ParseResult pr = parse_mbx(text, "<test>", t32, name);
  for (const auto& d : pr.diags) INFO(d.render());
  REQUIRE(pr.ok());
  return pr.doc;
}

const char* kLengthModule = R"(
module Std {
  typedef char = enum(0,255)
  typedef string = ptr(struct 8:4 (0: int, 4: ptr(vector(1, char))))

  val length : String -> Int =
    fun len (s : string, _ : exn_handler) {
      let n : int = s#0
      return n
    }
}
)";

}  // namespace

TEST_CASE("typedef lines parse to structural types") {
  MbiDocument doc = parse_ok(kLengthModule);
  CHECK(doc.module.name == "Std");
  REQUIRE(doc.module.typedefs.size() == 2);
  CHECK(doc.module.typedefs[0].name == "char");
  CHECK(type_equal(doc.module.typedefs[0].type, ty_enum(0, 255)));
  CHECK(type_equal(doc.module.typedefs[1].type, string_ptr_type(t32)));

  REQUIRE(doc.module.fun_bindings.size() == 1);
  const FunBinding& fb = doc.module.fun_bindings[0];
  CHECK(fb.name == "length");
  CHECK(fb.hl_type == "String -> Int");
  CHECK(fb.def.self_name == "len");
  REQUIRE(fb.def.params.size() == 2);
  CHECK(type_equal(fb.def.params[0].type, string_ptr_type(t32)));
}

TEST_CASE("type binding forms: abstract, prim, alias") {
  MbiDocument doc = parse_ok(R"(
module M {
  type Struct_tree
  type Def_tree_node = Struct_tree
  type Count = prim int
}
)");
  REQUIRE(doc.module.type_bindings.size() == 3);
  CHECK(doc.module.type_bindings[0].name == "Struct_tree");
  CHECK(!doc.module.type_bindings[0].is_alias);
  CHECK(doc.module.type_bindings[0].type->tag == IRType::Tag::Void);
  CHECK(doc.module.type_bindings[1].is_alias);
  CHECK(doc.module.type_bindings[1].alias_of == "Struct_tree");
  CHECK(type_equal(doc.module.type_bindings[2].type, ty_int(32)));
}

TEST_CASE("normalization binds every intermediate, literals included") {
  MbiDocument doc = parse_ok(R"(
module M {
  val f : String -> Int =
    fun f (s : lvalue, _ : exn_handler) {
      return I32Add(s#0, 1)
    }
}
)");
  MbiDocument norm = normalize(doc);
  const FunDef& def = norm.module.fun_bindings[0].def;
  CHECK(is_normal(def));
  CHECK(binding_count(def.body) == 3);

  TermPtr want = mk_let_select("n", ex_var("s"), 0,
                 mk_let_lit("one", Literal::make_int(1),
                 mk_let_prim("t", PrimOp::I32Add, {ex_var("n"), ex_var("one")},
                 mk_return({ex_var("t")}))));
  CHECK(alpha_eq(def.body, want));

  // idempotent
  CHECK(document_equal(normalize(norm), norm));
}

TEST_CASE("stackalloc lists desugar to nested bindings") {
  MbiDocument doc = parse_ok(R"(
module M {
  external int gettimeofday (addr(data), addr(data))
  val f : () -> Int =
    fun f (_ : exn_handler) {
      stackalloc tm[8:4], tz[8:4]
      let res = ccall gettimeofday (tm, tz)
      return res
    }
}
)");
  const TermPtr& body = doc.module.fun_bindings[0].def.body;
  REQUIRE(body->tag == Term::Tag::LetStackAlloc);
  CHECK(body->alloc_size == 8);
  CHECK(body->alloc_align == 4);
  REQUIRE(body->body->tag == Term::Tag::LetStackAlloc);
  CHECK(body->body->vars[0] != body->vars[0]);
}

TEST_CASE("call statement forms") {
  MbiDocument doc = parse_ok(R"(
module M {
  external void free (addr(data))
  val helper : () -> () =
    fun helper (_ : exn_handler) {
      return
    }
  val f : (Int) -> (Int, Int) =
    fun f (x : int, eh : exn_handler) {
      helper(eh)
      ccall free(x)
      let (a, b) = g(x, eh)
      return (a, b)
    }
}
)");
  const TermPtr& body = doc.module.fun_bindings[1].def.body;
  REQUIRE(body->tag == Term::Tag::LetCall);      // bare call, no destinations
  CHECK(body->vars.empty());
  CHECK(body->callee == "helper");
  REQUIRE(body->body->tag == Term::Tag::LetCCall);  // bare ccall binds a dummy
  REQUIRE(body->body->body->tag == Term::Tag::LetCall);
  CHECK(body->body->body->vars == std::vector<std::string>{"a", "b"});
  CHECK(body->body->body->callee == "g");
}

TEST_CASE("let-alias substitutes instead of binding") {
  MbiDocument doc = parse_ok(R"(
module M {
  val f : (Int) -> Int =
    fun f (x : int, _ : exn_handler) {
      let y = x
      let r = I32Add(y, y)
      return r
    }
}
)");
  const TermPtr& body = doc.module.fun_bindings[0].def.body;
  REQUIRE(body->tag == Term::Tag::LetPrim);  // no binding for y
  CHECK(body->args[0]->name == "x");
  CHECK(body->args[1]->name == "x");
}

TEST_CASE("module wrapper and default module names") {
  MbiDocument wrapped = parse_ok("module Tree { val f : () -> () = fun f (_ : exn_handler) { return } }");
  CHECK(wrapped.module.name == "Tree");
  CHECK(wrapped.module.fun_bindings[0].name == "f");

  ParseResult bare = parse_mbx("val g : () -> () = fun g (_ : exn_handler) { return }",
                               "<test>", t32, "Fallback");
  REQUIRE(bare.ok());
  CHECK(bare.doc.module.name == "Fallback");

  MbiDocument dotted = parse_ok(R"(
module Outer {
  module Inner {
    val f : () -> () = fun f (_ : exn_handler) { return }
  }
}
)");
  CHECK(dotted.module.name == "Outer");
  CHECK(dotted.module.fun_bindings[0].name == "Inner.f");
}

TEST_CASE("parse errors carry locations") {
  ParseResult pr = parse_mbx("module M {\n  val f : X =\n    fun f () { return }\n",
                             "bad.mbx", t32);
  CHECK(!pr.ok());
  bool located = false;
  for (const auto& d : pr.diags)
    if (d.span.file == "bad.mbx" && d.span.line > 0) located = true;
  CHECK(located);

  CHECK(!parse_mbx("module M { val f : T = fun f (x : notatype) { return } }",
                   "<t>", t32).ok());
  CHECK(!parse_mbx("module M { val f : T = fun f (_ : exn_handler) { let x = NoSuchOp(y) return x } }",
                   "<t>", t32).ok());
}

TEST_CASE("print/parse round trip is the identity") {
  const char* sources[] = {
      kLengthModule,
      R"(
module Std {
  typedef char = enum(0,255)
  typedef string = ptr(struct 8:4 (0: int, 4: ptr(vector(1, char))))
  external addr(data) getenv (addr(data))
  external addr(data) MOBY_AllocCString (addr(data))

  val getenv : String -> Option(String) =
    fun getenv (str : string, _ : exn_handler) {
      let c_str = str#1
      let c_res = ccall getenv (c_str)
      if AdrEq (c_res, nil) then {
        return 0
      } else {
        let res_str = ccall MOBY_AllocCString(c_res)
        let res = alloc (res_str)
        return (res)
      }
    }
}
)",
      R"(
module M {
  val f : (Int, Int) -> Int =
    fun f (a : int, b : int, _ : exn_handler) {
      let big = I32Lt(b, a)
      if big then { return a } else { return b }
    }
  val g : () -> () =
    fun g (_ : exn_handler) {
      let s = "hi\n\"quoted\""
      stackalloc buf[16:8]
      let x = AdrLoadI32(buf)
      return
    }
}
)",
  };
  for (const char* src : sources) {
    MbiDocument doc = normalize(parse_ok(src));
    MbiDocument again = normalize(parse_ok(print_mbx(doc), doc.module.name));
    CHECK(document_equal(doc, again));
  }
}

TEST_CASE("MBI container round trip and double serialization") {
  MbiDocument doc = normalize(parse_ok(kLengthModule));
  SerializeResult s1 = serialize_mbi(doc);
  REQUIRE(s1.ok());
  SerializeResult s2 = serialize_mbi(doc);
  CHECK(s1.bytes == s2.bytes);

  ParseResult back = parse_mbi(s1.bytes, "Std");
  REQUIRE(back.ok());
  CHECK(document_equal(back.doc, doc));
  CHECK(back.doc.target == doc.target);

  // serialize(parse(serialize(doc))) is byte-identical as well
  SerializeResult s3 = serialize_mbi(back.doc);
  REQUIRE(s3.ok());
  CHECK(s3.bytes == s1.bytes);
}

TEST_CASE("MBI rejects damage with a diagnostic, never a crash") {
  MbiDocument doc = normalize(parse_ok(kLengthModule));
  std::vector<uint8_t> good = serialize_mbi(doc).bytes;

  auto expect_error = [&](std::vector<uint8_t> bytes, const std::string& needle) {
    ParseResult pr = parse_mbi(bytes, "x");
    REQUIRE(!pr.ok());
    bool found = false;
    for (const auto& d : pr.diags)
      if (d.message.find(needle) != std::string::npos) found = true;
    INFO("wanted '" << needle << "'");
    CHECK(found);
  };

  std::vector<uint8_t> magic = good;
  magic[0] = 'X';
  expect_error(magic, "magic");

  std::vector<uint8_t> version = good;
  version[3] = '9';
  expect_error(version, "version");

  std::vector<uint8_t> flipped = good;
  flipped[14] ^= 0x40;  // inside the payload
  expect_error(flipped, "checksum");

  std::vector<uint8_t> truncated(good.begin(), good.end() - 7);
  expect_error(truncated, "length");

  expect_error(std::vector<uint8_t>{'M', 'B'}, "short");

  // every prefix parses without crashing
  for (size_t n = 0; n <= good.size(); n += 3) {
    std::vector<uint8_t> prefix(good.begin(), good.begin() + n);
    parse_mbi(prefix, "p");
  }
}
