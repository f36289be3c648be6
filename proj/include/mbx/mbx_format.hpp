#pragma once

// MBX is the human-readable module syntax; MBI is the deterministic binary
// container used for cross-module exchange.  See docs/formats.md for the
// grammar and the container layout.

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "mbx/diagnostics.hpp"
#include "mbx/ir.hpp"

namespace mbx {

struct ParseResult {
  MbiDocument doc;
  DiagnosticList diags;
  bool ok() const { return !has_errors(diags); }
};

// Parses MBX text into a document.  `default_name` names the module when the
// source has no `module N { ... }` wrapper (typically the file stem).
ParseResult parse_mbx(const std::string& text, const std::string& filename,
                      const TargetConfig& target,
                      const std::string& default_name = "Main");

// Rewrites every function body into A-normal form: each intermediate result,
// literals included, gets a fresh let binding.  Idempotent.
MbiDocument normalize(const MbiDocument& doc);
FunDef normalize_fun(const FunDef& f, NameSupply& supply);

// Pretty-prints a document back to MBX syntax.
std::string print_mbx(const MbiDocument& doc);
std::string print_term(const TermPtr& t, int indent = 0);

// Structural document equality (spans ignored, annotations ignored).
bool document_equal(const MbiDocument& a, const MbiDocument& b);

// ---------------------------------------------------------------------------
// MBI container

struct SerializeResult {
  std::vector<uint8_t> bytes;
  DiagnosticList diags;
  bool ok() const { return !has_errors(diags); }
};

// Requires a normalized document; serialization is canonical, so equal
// documents produce identical bytes.
SerializeResult serialize_mbi(const MbiDocument& doc);

// Inverse of serialize_mbi.  Rejects bad magic, version mismatch, length
// overruns, and checksum failures with a diagnostic.
ParseResult parse_mbi(const std::vector<uint8_t>& bytes, const std::string& name);

uint32_t crc32(const uint8_t* data, size_t len);

}  // namespace mbx
