#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>
#include <string>

#include "mbx/idl_gen.hpp"
#include "mbx/interp.hpp"
#include "mbx/mbx_format.hpp"
#include "mbx/typecheck.hpp"

using namespace mbx;

namespace {

const TargetConfig t32 = target_ilp32();

const char* kGetenvIdl = R"(
typedef [unique,string] char *StringOpt;

StringOpt getenv ([in,string] char *name);
)";

const char* kTimeIdl = R"(
typedef struct {
    long  tv_sec;
    long  tv_usec;
} timeval;

typedef struct {
    int  tz_minuteswest;
    int  tz_dsttime;
} timezone;

int gettimeofday (
    [ref, out] timeval *t,
    [ref, out] timezone *tz);
)";

idl::IdlUnit parse_ok(const std::string& text) {
  idl::IdlParseResult pr = idl::parse_idl(text, "<idl>");
  for (const auto& d : pr.diags) INFO(d.render());
  REQUIRE(pr.ok());
  return pr.unit;
}

MbiDocument stubs_for(const std::string& text, const std::string& module) {
  idl::GenResult g = idl::gen_stubs(parse_ok(text), module, t32);
  for (const auto& d : g.diags) INFO(d.render());
  REQUIRE(g.ok());
  return g.doc;
}

MbiDocument load(const std::string& text) {
  ParseResult pr = parse_mbx(text, "<test>", t32, "Test");
  for (const auto& d : pr.diags) INFO(d.render());
  REQUIRE(pr.ok());
  return normalize(pr.doc);
}

const FunDef& fun_named(const MbiDocument& doc, const std::string& name) {
  for (const auto& fb : doc.module.fun_bindings) {
    if (fb.name == name) return fb.def;
  }
  REQUIRE_MESSAGE(false, "no function " << name);
  static FunDef dummy;
  return dummy;
}

bool mentions(const DiagnosticList& diags, const std::string& needle) {
  for (const auto& d : diags)
    if (d.message.find(needle) != std::string::npos) return true;
  return false;
}

RuntimeValue word(int64_t v) { return RuntimeValue::make_word(v); }
RuntimeValue addr(uint64_t a) { return RuntimeValue::make_addr(a); }

}  // namespace

TEST_CASE("signatures: option-string results and out-parameter tuples") {
  CHECK(idl::gen_signature(parse_ok(kGetenvIdl)) ==
        "val getenv : String -> Option(String)\n");
  CHECK(idl::gen_signature(parse_ok(kTimeIdl)) ==
        "datatype Timeval { TIMEVAL of (Int, Int) }\n"
        "datatype Timezone { TIMEZONE of (Int, Int) }\n"
        "\n"
        "val gettimeofday : () -> (Int, Timeval, Timezone)\n");
}

TEST_CASE("the getenv stub has the reference shape") {
  MbiDocument gen = stubs_for(kGetenvIdl, "Std");
  // the reference body, written out by hand
  MbiDocument want = load(R"(
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
)");
  const FunDef& got = fun_named(gen, "getenv");
  INFO(print_mbx(gen));
  CHECK(alpha_eq(got, fun_named(want, "getenv")));

  // the declared high-level type rides along
  bool found = false;
  for (const auto& fb : gen.module.fun_bindings) {
    if (fb.name == "getenv") {
      CHECK(fb.hl_type == "String -> Option(String)");
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("the gettimeofday stub has the reference shape") {
  MbiDocument gen = stubs_for(kTimeIdl, "Std");
  MbiDocument want = load(R"(
module Std {
  external int gettimeofday (addr(data), addr(data))

  val gettimeofday : () -> (Int, Timeval, Timezone) =
    fun gettimeofday (_ : exn_handler) {
      stackalloc tm[8:4], tz[8:4]
      let res = ccall gettimeofday (tm, tz)
      let tm2 = alloc(AdrLoadI32(tm), AdrLoadI32(AdrAdd(tm, 4)))
      let tz2 = alloc(AdrLoadI32(tz), AdrLoadI32(AdrAdd(tz, 4)))
      return (res, tm2, tz2)
    }
}
)");
  INFO(print_mbx(gen));
  CHECK(alpha_eq(fun_named(gen, "gettimeofday"), fun_named(want, "gettimeofday")));

  // struct declarations came through in order
  idl::IdlUnit unit = parse_ok(kTimeIdl);
  REQUIRE(unit.struct_order.size() == 2);
  CHECK(unit.struct_order[0] == "timeval");
  CHECK(unit.struct_order[1] == "timezone");
}

TEST_CASE("malformed declarations are reported") {
  auto parse_diags = [](const std::string& text) {
    return idl::parse_idl(text, "<idl>").diags;
  };
  CHECK(mentions(parse_diags("int f ([inout] int x);"), "unknown attribute inout"));
  CHECK(mentions(parse_diags("int f (int x);"), "needs a direction attribute"));
  CHECK(mentions(parse_diags("int f ([out] int x);"),
                 "out parameter 'x' must be a pointer"));

  auto gen_diags = [](const std::string& text) {
    idl::IdlParseResult pr = idl::parse_idl(text, "<idl>");
    REQUIRE(pr.ok());
    return idl::gen_stubs(pr.unit, "Std", t32).diags;
  };
  CHECK(mentions(gen_diags("int f ([in] int *x, [out] int *x2);\n"
                           "int g ([in, out] int *y);"),
                 "in/out parameter 'y' is not supported"));
  CHECK(mentions(gen_diags("typedef struct { int a; } pair;\n"
                           "pair f ([in] int x);"),
                 "unsupported result type for 'f'"));
  CHECK(mentions(gen_diags("int f ([in, string] int *x);"),
                 "string parameter 'x' must be char*"));
}

namespace {

// Shared setup: generated stubs checked together with a driver module.
struct EndToEnd {
  MbiDocument stubs;
  MbiDocument driver;
  DiagnosticList diags;
  CheckedProgram prog;
  ForeignRegistry reg;

  EndToEnd(const std::string& idl_text, const std::string& driver_text)
      : stubs(stubs_for(idl_text, "Std")), driver(load(driver_text)) {
    prog = check_program({&stubs, &driver}, diags);
    for (const auto& d : diags) INFO(d.render());
    REQUIRE(!has_errors(diags));
    register_builtin_world(reg);
  }
};

}  // namespace

TEST_CASE("getenv stubs run against the simulated environment") {
  EndToEnd e(kGetenvIdl, R"(
module App {
  typedef char = enum(0,255)
  typedef string = ptr(struct 8:4 (0: int, 4: ptr(vector(1, char))))

  val valueLen : (String) -> Int =
    fun valueLen (s : string, eh : exn_handler) {
      let o = Std.getenv(s, eh)
      let missing = AdrEq(o, nil)
      if missing then {
        let m = I32Sub(0, 1)
        return m
      } else {
        let str = o#0
        let n = str#0
        return n
      }
    }

  val lastByte : (String) -> Int =
    fun lastByte (s : string, eh : exn_handler) {
      let o = Std.getenv(s, eh)
      let str = o#0
      let n = str#0
      let d = str#1
      let at = I32Sub(n, 1)
      let p = AdrAdd(d, at)
      let b = AdrLoadU8(p)
      return b
    }
}
)");
  e.reg.world.env["HOME"] = "/usr/home/moby";
  e.reg.world.env["EMPTY"] = "";
  Interp ip(e.prog, e.reg);

  auto run1 = [&](const std::string& fun, const std::string& arg) {
    RunResult r = ip.run(fun, {addr(ip.materialize_string(arg)), addr(0)});
    REQUIRE(r.ok);
    return r.values[0].word;
  };
  CHECK(run1("valueLen", "HOME") == 14);
  CHECK(run1("valueLen", "EMPTY") == 0);      // set-but-empty is Some ""
  CHECK(run1("valueLen", "MISSING") == -1);   // unset is None
  CHECK(run1("lastByte", "HOME") == 'y');
}

TEST_CASE("gettimeofday stubs copy the out buffers into fresh objects") {
  EndToEnd e(kTimeIdl, R"(
module App {
  val probe : () -> Int =
    fun probe (eh : exn_handler) {
      let (res, tm, tz) = Std.gettimeofday(eh)
      let sec = tm#0
      let usec = tm#1
      let mw = tz#0
      let dst = tz#1
      let aliased = AdrEq(tm, tz)
      return (res, sec, usec, mw, dst, aliased)
    }
}
)");
  e.reg.world.clock_sec = 41;
  e.reg.world.clock_usec = 999999;
  Interp ip(e.prog, e.reg);

  RunResult r1 = ip.run("probe", {addr(0)});
  REQUIRE(r1.ok);
  CHECK(r1.values == std::vector<RuntimeValue>{word(0), word(41), word(999999),
                                               word(0), word(0), word(0)});
  // the clock advances one microsecond per call and carries into seconds
  RunResult r2 = ip.run("probe", {addr(0)});
  REQUIRE(r2.ok);
  CHECK(r2.values == std::vector<RuntimeValue>{word(0), word(42), word(0),
                                               word(0), word(0), word(0)});
}

TEST_CASE("randomized environment lookups agree with the oracle") {
  EndToEnd e(kGetenvIdl, R"(
module App {
  typedef char = enum(0,255)
  typedef string = ptr(struct 8:4 (0: int, 4: ptr(vector(1, char))))

  val valueLen : (String) -> Int =
    fun valueLen (s : string, eh : exn_handler) {
      let o = Std.getenv(s, eh)
      let missing = AdrEq(o, nil)
      if missing then {
        let m = I32Sub(0, 1)
        return m
      } else {
        let str = o#0
        let n = str#0
        return n
      }
    }
}
)");
  std::mt19937 rng(99);
  const std::string alphabet =
      "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_/.:- ";
  for (int i = 0; i < 30; i++) {
    if (i % 2 == 0) {
      std::string value;
      size_t len = rng() % 13;
      for (size_t k = 0; k < len; k++) value += alphabet[rng() % alphabet.size()];
      e.reg.world.env["V" + std::to_string(i)] = value;
    }
  }
  Interp ip(e.prog, e.reg);
  for (int i = 0; i < 30; i++) {
    std::string name = "V" + std::to_string(i);
    RunResult r = ip.run("valueLen", {addr(ip.materialize_string(name)), addr(0)});
    REQUIRE(r.ok);
    auto it = e.reg.world.env.find(name);
    int64_t expect = it == e.reg.world.env.end()
                         ? -1
                         : static_cast<int64_t>(it->second.size());
    CHECK(r.values[0].word == expect);
  }
}
