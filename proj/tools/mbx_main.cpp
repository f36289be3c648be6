// mbx: command-line driver for the toolchain.  Subcommands cover the whole
// pipeline: check, normalize, inline, run, layout, idl, charon, bench.
//
// Exit codes: 0 success, 1 diagnostics or trap, 2 usage error.

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "mbx/bench.hpp"
#include "mbx/charon_gen.hpp"
#include "mbx/idl_gen.hpp"
#include "mbx/interp.hpp"
#include "mbx/layout.hpp"
#include "mbx/mbx_format.hpp"
#include "mbx/optimizer.hpp"
#include "mbx/typecheck.hpp"

namespace {

using namespace mbx;

TargetConfig target_for(int bits) {
  return bits == 64 ? target_lp64() : target_ilp32();
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Module name for a file without an explicit `module N { ... }` wrapper:
// the stem with its first letter capitalized ("time.idl" -> "Time").
std::string module_name_for(const std::string& path) {
  std::string stem = std::filesystem::path(path).stem().string();
  if (stem.empty()) return "Main";
  stem[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(stem[0])));
  return stem;
}

std::optional<std::string> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

bool write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return false;
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  return bool(out);
}

bool write_file(const std::string& path, const std::vector<uint8_t>& data) {
  return write_file(path,
                    std::string(reinterpret_cast<const char*>(data.data()),
                                data.size()));
}

void emit_diags(const DiagnosticList& diags) {
  for (const auto& d : diags) std::cerr << d.render() << "\n";
}

// Loads either surface syntax (.mbx) or the binary container (.mbi) and
// normalizes the result.  Returns null on errors (already reported).
std::shared_ptr<MbiDocument> load_document(const std::string& path,
                                           const TargetConfig& target) {
  auto text = read_file(path);
  if (!text) {
    std::cerr << "error: cannot read '" << path << "'\n";
    return nullptr;
  }
  ParseResult pr;
  if (ends_with(path, ".mbi")) {
    std::vector<uint8_t> bytes(text->begin(), text->end());
    pr = parse_mbi(bytes, module_name_for(path));
  } else {
    pr = parse_mbx(*text, path, target, module_name_for(path));
  }
  emit_diags(pr.diags);
  if (!pr.ok()) return nullptr;
  return std::make_shared<MbiDocument>(normalize(pr.doc));
}

bool load_all(const std::vector<std::string>& paths, const TargetConfig& target,
              std::vector<std::shared_ptr<MbiDocument>>& store) {
  for (const auto& p : paths) {
    auto doc = load_document(p, target);
    if (!doc) return false;
    store.push_back(doc);
  }
  return true;
}

std::vector<const MbiDocument*> doc_ptrs(
    const std::vector<std::shared_ptr<MbiDocument>>& store) {
  std::vector<const MbiDocument*> out;
  for (const auto& d : store) out.push_back(d.get());
  return out;
}

void print_stats(std::ostream& os, const ExecStats& s) {
  os << "ccalls=" << s.ccalls << "\n"
     << "heap_allocs=" << s.heap_allocs << "\n"
     << "loads=" << s.loads << "\n"
     << "stack_allocs=" << s.stack_allocs << "\n"
     << "steps=" << s.steps << "\n"
     << "stores=" << s.stores << "\n";
}

// ---------------------------------------------------------------------------
// Result rendering for `run`, driven by the entry's high-level annotation.

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

// Result part of an annotation: the text after its last top-level "->".
std::string result_part(const std::string& hl) {
  int depth = 0;
  size_t last = std::string::npos;
  for (size_t i = 0; i + 1 < hl.size(); i++) {
    char c = hl[i];
    if (c == '(') depth++;
    else if (c == ')') depth--;
    else if (depth == 0 && c == '-' && hl[i + 1] == '>') last = i;
  }
  return trim(last == std::string::npos ? hl : hl.substr(last + 2));
}

std::vector<std::string> split_tuple(const std::string& t) {
  std::vector<std::string> parts;
  if (t.size() < 2 || t.front() != '(' || t.back() != ')') return parts;
  std::string inner = t.substr(1, t.size() - 2);
  int depth = 0;
  std::string cur;
  for (char c : inner) {
    if (c == '(') depth++;
    if (c == ')') depth--;
    if (c == ',' && depth == 0) {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty()) parts.push_back(trim(cur));
  return parts;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (unsigned char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default:
        if (c >= 0x20 && c < 0x7f) {
          out += static_cast<char>(c);
        } else {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\x%02x", c);
          out += buf;
        }
    }
  }
  out += "\"";
  return out;
}

struct Renderer {
  Interp& interp;

  std::optional<RuntimeValue> load_field(uint64_t addr, size_t i) {
    const auto* blk = interp.memory().block_at(addr);
    if (!blk || i >= blk->fields.size()) return std::nullopt;
    const auto& f = blk->fields[i];
    try {
      uint64_t raw =
          interp.memory().load(blk->start + f.offset, f.width, f.sign_extend);
      return f.is_addr ? RuntimeValue::make_addr(raw)
                       : RuntimeValue::make_word(static_cast<int64_t>(raw));
    } catch (const TrapException&) {
      return std::nullopt;
    }
  }

  std::string read_string_object(uint64_t addr) {
    try {
      auto& mem = interp.memory();
      unsigned wb = static_cast<unsigned>(interp.target().word_bytes());
      int64_t len = static_cast<int64_t>(mem.load(addr, 4, true));
      uint64_t data = mem.load(addr + wb, wb, false);
      std::string s;
      for (int64_t i = 0; i < len; i++)
        s += static_cast<char>(mem.load(data + static_cast<uint64_t>(i), 1, false));
      return s;
    } catch (const TrapException&) {
      return "<unreadable>";
    }
  }

  std::string generic(const RuntimeValue& v) {
    if (!v.is_addr) return std::to_string(v.word);
    if (v.addr == 0) return "nil";
    const auto* blk = interp.memory().block_at(v.addr);
    if (blk && !blk->fields.empty() && v.addr == blk->start) {
      std::string out = "(";
      for (size_t i = 0; i < blk->fields.size(); i++) {
        if (i) out += ", ";
        auto f = load_field(v.addr, i);
        out += f ? generic(*f) : "?";
      }
      return out + ")";
    }
    std::ostringstream os;
    os << "0x" << std::hex << v.addr;
    return os.str();
  }

  std::string render(const std::string& type, const RuntimeValue& v) {
    std::string t = trim(type);
    if (t.empty() || t == "()") return "()";
    if (t == "String") {
      if (!v.is_addr || v.addr == 0) return "nil";
      return quote(read_string_object(v.addr));
    }
    if (t.rfind("Option(", 0) == 0 && t.back() == ')') {
      std::string inner = t.substr(7, t.size() - 8);
      if ((!v.is_addr && v.word == 0) || (v.is_addr && v.addr == 0))
        return "None";
      if (v.is_addr) {
        if (auto f = load_field(v.addr, 0)) return "Some " + render(inner, *f);
      }
      return "Some " + generic(v);
    }
    if (t == "Bool") return v.word != 0 ? "true" : "false";
    if (!t.empty() && t.front() == '(') {
      auto parts = split_tuple(t);
      // a tuple annotation against a single heap value: a constructor cell
      if (v.is_addr) {
        const auto* blk = interp.memory().block_at(v.addr);
        if (blk && blk->fields.size() == parts.size()) {
          std::string out = "(";
          for (size_t i = 0; i < parts.size(); i++) {
            if (i) out += ", ";
            auto f = load_field(v.addr, i);
            out += f ? render(parts[i], *f) : "?";
          }
          return out + ")";
        }
      }
      return generic(v);
    }
    if (t == "Int" || t == "SInt" || t == "UInt" || t == "Long" ||
        t == "SLong" || t == "ULong" || t == "Short" || t == "Char")
      return std::to_string(v.word);
    return generic(v);
  }

  std::string render_result(const std::string& hl,
                            const std::vector<RuntimeValue>& vals) {
    std::string res = result_part(hl);
    if (vals.empty()) return "()";
    if (vals.size() == 1) return render(res, vals[0]);
    auto parts = split_tuple(res);
    std::string out = "(";
    for (size_t i = 0; i < vals.size(); i++) {
      if (i) out += ", ";
      out += render(i < parts.size() ? parts[i] : "", vals[i]);
    }
    return out + ")";
  }
};

// ---------------------------------------------------------------------------
// Subcommand bodies

int cmd_check(const std::vector<std::string>& files,
              const std::vector<std::string>& imports, int bits) {
  TargetConfig target = target_for(bits);
  std::vector<std::shared_ptr<MbiDocument>> store;
  if (!load_all(imports, target, store)) return 1;
  size_t first_input = store.size();
  if (!load_all(files, target, store)) return 1;

  DiagnosticList diags;
  check_program(doc_ptrs(store), diags);
  for (size_t i = first_input; i < store.size(); i++) {
    auto lint = escape_lint(*store[i]);
    diags.insert(diags.end(), lint.begin(), lint.end());
  }
  emit_diags(diags);
  return has_errors(diags) ? 1 : 0;
}

int cmd_normalize(const std::string& file, const std::string& out, int bits) {
  auto doc = load_document(file, target_for(bits));
  if (!doc) return 1;
  std::string text = print_mbx(*doc);
  if (out.empty()) {
    std::cout << text;
    return 0;
  }
  if (!write_file(out, text)) {
    std::cerr << "error: cannot write '" << out << "'\n";
    return 1;
  }
  return 0;
}

int cmd_inline(const std::string& file, const std::vector<std::string>& imports,
               const std::string& out, const std::string& mbi_out,
               int max_size, int max_depth, bool no_simplify, int bits) {
  TargetConfig target = target_for(bits);
  std::vector<std::shared_ptr<MbiDocument>> store;
  if (!load_all(imports, target, store)) return 1;
  auto doc = load_document(file, target);
  if (!doc) return 1;

  std::vector<const MbiDocument*> env_docs = doc_ptrs(store);
  std::vector<const MbiDocument*> all = env_docs;
  all.push_back(doc.get());
  DiagnosticList diags;
  check_program(all, diags);
  emit_diags(diags);
  if (has_errors(diags)) return 1;

  TypeEnv env{target, env_docs};
  InlinePolicy policy;
  policy.max_body_size = max_size;
  policy.max_depth = max_depth;
  MbiDocument opt = no_simplify ? inline_module(env, *doc, policy)
                                : optimize(env, *doc, policy);

  if (!mbi_out.empty()) {
    auto ser = serialize_mbi(opt);
    emit_diags(ser.diags);
    if (!ser.ok()) return 1;
    if (!write_file(mbi_out, ser.bytes)) {
      std::cerr << "error: cannot write '" << mbi_out << "'\n";
      return 1;
    }
  }
  std::string text = print_mbx(opt);
  if (out.empty()) {
    if (mbi_out.empty()) std::cout << text;
  } else if (!write_file(out, text)) {
    std::cerr << "error: cannot write '" << out << "'\n";
    return 1;
  }
  return 0;
}

int cmd_run(const std::string& file, const std::vector<std::string>& imports,
            const std::string& entry, const std::vector<std::string>& args,
            const std::vector<std::string>& env_kvs, uint32_t seed,
            const std::string& clock, bool stats, uint64_t budget, int bits) {
  TargetConfig target = target_for(bits);
  std::vector<std::shared_ptr<MbiDocument>> store;
  if (!load_all(imports, target, store)) return 1;
  auto doc = load_document(file, target);
  if (!doc) return 1;
  store.push_back(doc);

  DiagnosticList diags;
  CheckedProgram prog = check_program(doc_ptrs(store), diags);
  emit_diags(diags);
  if (has_errors(diags)) return 1;

  const ProgramFun* entry_fun = prog.resolve_name(entry);
  if (!entry_fun) {
    std::cerr << "error: no function named '" << entry << "'\n";
    return 1;
  }

  ForeignRegistry reg;
  register_builtin_world(reg);
  reg.world.rand_state = seed;
  for (const auto& kv : env_kvs) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      std::cerr << "error: --env expects K=V, got '" << kv << "'\n";
      return 2;
    }
    reg.world.env[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  if (!clock.empty()) {
    long long s = 0, u = 0;
    if (std::sscanf(clock.c_str(), "%lld:%lld", &s, &u) < 1) {
      std::cerr << "error: --clock expects S:U, got '" << clock << "'\n";
      return 2;
    }
    reg.world.clock_sec = s;
    reg.world.clock_usec = u;
  }

  RunOptions opts;
  opts.step_budget = budget;
  Interp interp(prog, reg, opts);

  const auto& params = entry_fun->binding->def.params;
  if (args.size() > params.size()) {
    std::cerr << "error: entry takes " << params.size() << " argument"
              << (params.size() == 1 ? "" : "s") << ", got " << args.size()
              << "\n";
    return 2;
  }
  std::vector<RuntimeValue> argv;
  for (const auto& a : args) {
    if (a == "nil") {
      argv.push_back(RuntimeValue::make_addr(0));
    } else if (a.rfind("str:", 0) == 0) {
      argv.push_back(RuntimeValue::make_addr(interp.materialize_string(a.substr(4))));
    } else {
      try {
        size_t pos = 0;
        int64_t v = std::stoll(a, &pos, 0);
        if (pos != a.size()) throw std::invalid_argument(a);
        argv.push_back(RuntimeValue::make_word(v));
      } catch (const std::exception&) {
        std::cerr << "error: bad argument '" << a
                  << "' (expected an integer, nil, or str:<text>)\n";
        return 2;
      }
    }
  }
  // unsupplied parameters default by shape: addresses get nil, words get 0
  for (size_t i = argv.size(); i < params.size(); i++) {
    const IRTypeRef& pt = params[i].type;
    bool addr_like = pt && (pt->tag == IRType::Tag::AddrData ||
                            pt->tag == IRType::Tag::Ptr ||
                            pt->tag == IRType::Tag::Vector ||
                            pt->tag == IRType::Tag::StructLayout);
    argv.push_back(addr_like ? RuntimeValue::make_addr(0)
                             : RuntimeValue::make_word(0));
  }

  RunResult res = interp.run(entry, argv);
  if (!res.ok) {
    std::cerr << "trap: " << trap_kind_name(res.trap.kind) << ": "
              << res.trap.message << "\n";
    return 1;
  }
  Renderer r{interp};
  std::cout << r.render_result(entry_fun->binding->hl_type, res.values) << "\n";
  if (stats) print_stats(std::cout, res.stats);
  return 0;
}

int cmd_layout(const std::string& file, int bits) {
  auto text = read_file(file);
  if (!text) {
    std::cerr << "error: cannot read '" << file << "'\n";
    return 1;
  }
  auto pr = charon::parse_header(*text, file);
  emit_diags(pr.diags);
  if (!pr.ok()) return 1;

  TargetConfig target = target_for(bits);
  for (const auto& tag : pr.unit.struct_order) {
    const auto* def = pr.unit.table.find_struct(tag);
    if (!def) continue;
    auto lay = layout_of_struct(*def, pr.unit.table, target);
    std::cout << "struct " << tag << ": size " << lay.size << " align "
              << lay.align << "\n";
    for (size_t i = 0; i < def->fields.size(); i++)
      std::cout << "  " << def->fields[i].name << ": offset "
                << lay.field_offsets[i] << "\n";
  }
  return 0;
}

int cmd_idl(const std::string& file, std::string module,
            const std::string& sig_out, const std::string& mbi_out,
            const std::string& mbx_out, int bits) {
  auto text = read_file(file);
  if (!text) {
    std::cerr << "error: cannot read '" << file << "'\n";
    return 1;
  }
  auto pr = idl::parse_idl(*text, file);
  emit_diags(pr.diags);
  if (!pr.ok()) return 1;
  if (module.empty()) module = module_name_for(file);

  std::string sig = idl::gen_signature(pr.unit);
  auto gen = idl::gen_stubs(pr.unit, module, target_for(bits));
  emit_diags(gen.diags);
  if (!gen.ok()) return 1;

  if (!sig_out.empty() && !write_file(sig_out, sig)) {
    std::cerr << "error: cannot write '" << sig_out << "'\n";
    return 1;
  }
  if (!mbi_out.empty()) {
    auto ser = serialize_mbi(gen.doc);
    emit_diags(ser.diags);
    if (!ser.ok() || !write_file(mbi_out, ser.bytes)) {
      std::cerr << "error: cannot write '" << mbi_out << "'\n";
      return 1;
    }
  }
  if (!mbx_out.empty() && !write_file(mbx_out, print_mbx(gen.doc))) {
    std::cerr << "error: cannot write '" << mbx_out << "'\n";
    return 1;
  }
  if (sig_out.empty() && mbi_out.empty() && mbx_out.empty()) std::cout << sig;
  return 0;
}

int cmd_charon(const std::string& file, std::string module,
               const std::string& sig_out, const std::string& mbi_out,
               const std::string& mbx_out, bool emit_stdlib,
               const std::string& out, int bits) {
  if (emit_stdlib) {
    std::string src = charon::c_interface_source();
    if (out.empty()) {
      std::cout << src;
      return 0;
    }
    if (!write_file(out, src)) {
      std::cerr << "error: cannot write '" << out << "'\n";
      return 1;
    }
    return 0;
  }
  if (file.empty()) {
    std::cerr << "error: charon needs a header file (or --emit-stdlib)\n";
    return 2;
  }
  auto text = read_file(file);
  if (!text) {
    std::cerr << "error: cannot read '" << file << "'\n";
    return 1;
  }
  auto pr = charon::parse_header(*text, file);
  emit_diags(pr.diags);
  if (!pr.ok()) return 1;
  if (module.empty()) module = module_name_for(file);

  std::string sig = charon::gen_interface(pr.unit);
  auto gen = charon::gen_impl(pr.unit, module, target_for(bits));
  emit_diags(gen.diags);
  if (!gen.ok()) return 1;

  if (!sig_out.empty() && !write_file(sig_out, sig)) {
    std::cerr << "error: cannot write '" << sig_out << "'\n";
    return 1;
  }
  if (!mbi_out.empty()) {
    auto ser = serialize_mbi(gen.doc);
    emit_diags(ser.diags);
    if (!ser.ok() || !write_file(mbi_out, ser.bytes)) {
      std::cerr << "error: cannot write '" << mbi_out << "'\n";
      return 1;
    }
  }
  if (!mbx_out.empty() && !write_file(mbx_out, print_mbx(gen.doc))) {
    std::cerr << "error: cannot write '" << mbx_out << "'\n";
    return 1;
  }
  if (sig_out.empty() && mbi_out.empty() && mbx_out.empty()) std::cout << sig;
  return 0;
}

int cmd_bench_tree(int depth, int iters, uint32_t seed, bool no_inline,
                   bool stats, int bits) {
  auto bundle = bench::build_tree_bench(target_for(bits), !no_inline);
  emit_diags(bundle.diags);
  if (!bundle.ok()) return 1;
  auto res = bench::run_tree_bench(bundle, depth, iters, seed);
  if (!res.ok) {
    std::cerr << "trap: " << trap_kind_name(res.trap.kind) << ": "
              << res.trap.message << "\n";
    return 1;
  }
  (void)stats;
  std::cout << "ccalls=" << res.stats.ccalls << "\n"
            << "cheap_leaked=" << res.cheap_leaked << "\n"
            << "heap_allocs=" << res.stats.heap_allocs << "\n"
            << "loads=" << res.stats.loads << "\n"
            << "max_label=" << res.max_label << "\n"
            << "stack_allocs=" << res.stats.stack_allocs << "\n"
            << "steps=" << res.stats.steps << "\n"
            << "stores=" << res.stats.stores << "\n";
  return 0;
}

int cmd_bench_tod(int calls, const std::string& clock, bool no_inline,
                  bool stats, int bits) {
  long long s = 0, u = 0;
  if (!clock.empty() && std::sscanf(clock.c_str(), "%lld:%lld", &s, &u) < 1) {
    std::cerr << "error: --clock expects S:U, got '" << clock << "'\n";
    return 2;
  }
  auto bundle = bench::build_tod_bench(target_for(bits), !no_inline);
  emit_diags(bundle.diags);
  if (!bundle.ok()) return 1;
  auto res = bench::run_tod_bench(bundle, calls, s, u);
  if (!res.ok) {
    std::cerr << "trap: " << trap_kind_name(res.trap.kind) << ": "
              << res.trap.message << "\n";
    return 1;
  }
  (void)stats;
  std::cout << "ccalls=" << res.stats.ccalls << "\n"
            << "heap_allocs=" << res.stats.heap_allocs << "\n"
            << "loads=" << res.stats.loads << "\n"
            << "ret=" << res.ret << "\n"
            << "sec=" << res.sec << "\n"
            << "stack_allocs=" << res.stats.stack_allocs << "\n"
            << "steps=" << res.stats.steps << "\n"
            << "stores=" << res.stats.stores << "\n"
            << "usec=" << res.usec << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mbx: module toolchain (check, normalize, inline, run, layout, "
               "idl, charon, bench)"};
  app.require_subcommand(1);

  int bits = 32;
  app.add_option("--target", bits, "target word size in bits")
      ->check(CLI::IsMember({32, 64}))
      ->capture_default_str();

  int rc = 0;

  // check
  std::vector<std::string> check_files, check_imports;
  auto* check = app.add_subcommand("check", "parse, typecheck, and lint");
  check->fallthrough();
  check->add_option("files", check_files, "input modules (.mbx or .mbi)")
      ->required();
  check->add_option("--import", check_imports, "environment modules");
  check->callback([&] { rc = cmd_check(check_files, check_imports, bits); });

  // normalize
  std::string norm_file, norm_out;
  auto* norm = app.add_subcommand("normalize", "emit A-normal form");
  norm->fallthrough();
  norm->add_option("file", norm_file, "input module")->required();
  norm->add_option("-o,--out", norm_out, "output path (default stdout)");
  norm->callback([&] { rc = cmd_normalize(norm_file, norm_out, bits); });

  // inline
  std::string inl_file, inl_out, inl_mbi;
  std::vector<std::string> inl_imports;
  int inl_max_size = 20, inl_max_depth = 4;
  bool inl_no_simplify = false;
  auto* inl = app.add_subcommand("inline", "inline and simplify a module");
  inl->fallthrough();
  inl->add_option("file", inl_file, "input module")->required();
  inl->add_option("--import", inl_imports, "environment modules");
  inl->add_option("-o,--out", inl_out, "output path (default stdout)");
  inl->add_option("--mbi", inl_mbi, "also write the binary container here");
  inl->add_option("--max-size", inl_max_size, "max callee size in bindings")
      ->capture_default_str();
  inl->add_option("--max-depth", inl_max_depth, "max inlining depth")
      ->capture_default_str();
  inl->add_flag("--no-simplify", inl_no_simplify, "skip the simplifier");
  inl->callback([&] {
    rc = cmd_inline(inl_file, inl_imports, inl_out, inl_mbi, inl_max_size,
                    inl_max_depth, inl_no_simplify, bits);
  });

  // run
  std::string run_file, run_entry, run_clock;
  std::vector<std::string> run_imports, run_args, run_env;
  uint32_t run_seed = 1;
  bool run_stats = false;
  uint64_t run_budget = 100000000;
  auto* run = app.add_subcommand("run", "interpret an entry point");
  run->fallthrough();
  run->add_option("file", run_file, "input module")->required();
  run->add_option("--import", run_imports, "environment modules");
  run->add_option("--entry", run_entry, "entry function")->required();
  run->add_option("--args", run_args,
                  "entry arguments (integer, nil, or str:<text>)");
  run->add_option("--env", run_env, "simulated environment entries K=V");
  run->add_option("--seed", run_seed, "PRNG seed")->capture_default_str();
  run->add_option("--clock", run_clock, "simulated clock S:U");
  run->add_flag("--stats", run_stats, "print execution counters");
  run->add_option("--step-budget", run_budget, "trap after this many steps")
      ->capture_default_str();
  run->callback([&] {
    rc = cmd_run(run_file, run_imports, run_entry, run_args, run_env, run_seed,
                 run_clock, run_stats, run_budget, bits);
  });

  // layout
  std::string lay_file;
  auto* lay = app.add_subcommand("layout", "print C struct layouts");
  lay->fallthrough();
  lay->add_option("header", lay_file, "C header file")->required();
  lay->callback([&] { rc = cmd_layout(lay_file, bits); });

  // idl
  std::string idl_file, idl_module, idl_sig, idl_mbi, idl_mbx;
  auto* idl_cmd = app.add_subcommand("idl", "generate marshaling stubs");
  idl_cmd->fallthrough();
  idl_cmd->add_option("file", idl_file, "IDL specification")->required();
  idl_cmd->add_option("--module", idl_module, "module name (default: file stem)");
  idl_cmd->add_option("--sig", idl_sig, "write the high-level signature here");
  idl_cmd->add_option("--mbi", idl_mbi, "write the binary module here");
  idl_cmd->add_option("--mbx", idl_mbx, "write readable module text here");
  idl_cmd->callback([&] {
    rc = cmd_idl(idl_file, idl_module, idl_sig, idl_mbi, idl_mbx, bits);
  });

  // charon
  std::string ch_file, ch_module, ch_sig, ch_mbi, ch_mbx, ch_out;
  bool ch_stdlib = false;
  auto* ch = app.add_subcommand("charon", "embed a C header");
  ch->fallthrough();
  ch->add_option("header", ch_file, "C header file");
  ch->add_option("--module", ch_module, "module name (default: file stem)");
  ch->add_option("--sig", ch_sig, "write the high-level interface here");
  ch->add_option("--mbi", ch_mbi, "write the binary module here");
  ch->add_option("--mbx", ch_mbx, "write readable module text here");
  ch->add_flag("--emit-stdlib", ch_stdlib, "emit the C-interface library source");
  ch->add_option("-o,--out", ch_out, "output path for --emit-stdlib");
  ch->callback([&] {
    rc = cmd_charon(ch_file, ch_module, ch_sig, ch_mbi, ch_mbx, ch_stdlib,
                    ch_out, bits);
  });

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "deterministic benchmarks");
  bench_cmd->require_subcommand(1);
  bench_cmd->fallthrough();

  int tree_depth = 4, tree_iters = 1;
  uint32_t tree_seed = 1;
  bool tree_no_inline = false, tree_stats = false;
  auto* tree = bench_cmd->add_subcommand("tree", "build/traverse/free a C tree");
  tree->fallthrough();
  tree->add_option("--depth", tree_depth, "tree depth")->capture_default_str();
  tree->add_option("--iters", tree_iters, "iterations")->capture_default_str();
  tree->add_option("--seed", tree_seed, "PRNG seed")->capture_default_str();
  tree->add_flag("--no-inline", tree_no_inline, "run without inlining");
  tree->add_flag("--stats", tree_stats, "accepted for symmetry; always printed");
  tree->callback([&] {
    rc = cmd_bench_tree(tree_depth, tree_iters, tree_seed, tree_no_inline,
                        tree_stats, bits);
  });

  int tod_calls = 1;
  std::string tod_clock;
  bool tod_no_inline = false, tod_stats = false;
  auto* tod = bench_cmd->add_subcommand("tod", "gettimeofday loop");
  tod->fallthrough();
  tod->add_option("--calls", tod_calls, "number of calls")->capture_default_str();
  tod->add_option("--clock", tod_clock, "starting clock S:U");
  tod->add_flag("--no-inline", tod_no_inline, "run without inlining");
  tod->add_flag("--stats", tod_stats, "accepted for symmetry; always printed");
  tod->callback([&] {
    rc = cmd_bench_tod(tod_calls, tod_clock, tod_no_inline, tod_stats, bits);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  return rc;
}
