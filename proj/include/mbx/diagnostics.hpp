#pragma once

#include <sstream>
#include <string>
#include <vector>

namespace mbx {

struct SourceSpan {
  std::string file;
  int line = 0;        // 1-based; 0 means "no location"
  int col = 0;
  int end_line = 0;
  int end_col = 0;

  bool valid() const { return line > 0; }
};

enum class Severity { Error, Warning, Note };

struct Diagnostic {
  Severity severity = Severity::Error;
  std::string message;
  SourceSpan span;

  // Rendered as "file:line:col: severity: message".
  std::string render() const {
    std::ostringstream os;
    if (span.valid()) {
      os << (span.file.empty() ? "<input>" : span.file) << ":" << span.line
         << ":" << span.col << ": ";
    }
    switch (severity) {
      case Severity::Error: os << "error: "; break;
      case Severity::Warning: os << "warning: "; break;
      case Severity::Note: os << "note: "; break;
    }
    os << message;
    return os.str();
  }
};

using DiagnosticList = std::vector<Diagnostic>;

inline bool has_errors(const DiagnosticList& diags) {
  for (const auto& d : diags) {
    if (d.severity == Severity::Error) return true;
  }
  return false;
}

inline std::string render_all(const DiagnosticList& diags) {
  std::string out;
  for (const auto& d : diags) {
    out += d.render();
    out += '\n';
  }
  return out;
}

}  // namespace mbx
