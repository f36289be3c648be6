#include <cctype>
#include <cstdlib>
#include <map>

#include "mbx/mbx_format.hpp"

// MBX reader: a hand-rolled lexer plus recursive-descent parser.  Parse
// errors are collected as diagnostics with source spans; the parser bails
// out of the enclosing declaration and resynchronizes where it can.

namespace mbx {
namespace {

struct Token {
  enum class Kind { Ident, Int, Str, Punct, End };
  Kind kind = Kind::End;
  std::string text;
  int64_t ival = 0;
  size_t offset = 0;
  int line = 1, col = 1;
};

struct Lexer {
  const std::string& src;
  std::string file;
  DiagnosticList& diags;
  std::vector<Token> tokens;

  Lexer(const std::string& s, std::string f, DiagnosticList& d)
      : src(s), file(std::move(f)), diags(d) {}

  void error_at(int line, int col, const std::string& msg) {
    diags.push_back({Severity::Error, msg, {file, line, col, line, col}});
  }

  void run() {
    size_t i = 0;
    int line = 1, col = 1;
    auto advance = [&](size_t n) {
      for (size_t k = 0; k < n; k++) {
        if (src[i + k] == '\n') {
          line++;
          col = 1;
        } else {
          col++;
        }
      }
      i += n;
    };
    while (i < src.size()) {
      char c = src[i];
      if (isspace(static_cast<unsigned char>(c))) {
        advance(1);
        continue;
      }
      if (c == '/' && i + 1 < src.size() && src[i + 1] == '/') {
        while (i < src.size() && src[i] != '\n') advance(1);
        continue;
      }
      Token t;
      t.offset = i;
      t.line = line;
      t.col = col;
      if (isalpha(static_cast<unsigned char>(c)) || c == '_') {
        size_t j = i;
        while (j < src.size() &&
               (isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_' ||
                src[j] == '.')) {
          j++;
        }
        t.kind = Token::Kind::Ident;
        t.text = src.substr(i, j - i);
        advance(j - i);
      } else if (isdigit(static_cast<unsigned char>(c)) ||
                 (c == '-' && i + 1 < src.size() &&
                  isdigit(static_cast<unsigned char>(src[i + 1])))) {
        size_t j = i + (c == '-' ? 1 : 0);
        while (j < src.size() && isdigit(static_cast<unsigned char>(src[j]))) j++;
        t.kind = Token::Kind::Int;
        t.text = src.substr(i, j - i);
        t.ival = std::strtoll(t.text.c_str(), nullptr, 10);
        advance(j - i);
      } else if (c == '"') {
        std::string out;
        size_t j = i + 1;
        bool closed = false;
        while (j < src.size()) {
          char d = src[j];
          if (d == '"') {
            closed = true;
            j++;
            break;
          }
          if (d == '\\' && j + 1 < src.size()) {
            char e = src[j + 1];
            switch (e) {
              case 'n': out += '\n'; break;
              case 't': out += '\t'; break;
              case 'r': out += '\r'; break;
              case '0': out += '\0'; break;
              case '\\': out += '\\'; break;
              case '"': out += '"'; break;
              default: out += e; break;
            }
            j += 2;
            continue;
          }
          out += d;
          j++;
        }
        if (!closed) error_at(line, col, "unterminated string literal");
        t.kind = Token::Kind::Str;
        t.text = std::move(out);
        advance(j - i);
      } else if (c == '-' && i + 1 < src.size() && src[i + 1] == '>') {
        t.kind = Token::Kind::Punct;
        t.text = "->";
        advance(2);
      } else if (std::string("(){}[]:,=#").find(c) != std::string::npos) {
        t.kind = Token::Kind::Punct;
        t.text = std::string(1, c);
        advance(1);
      } else {
        error_at(line, col, std::string("stray character '") + c + "'");
        advance(1);
        continue;
      }
      tokens.push_back(std::move(t));
    }
    Token end;
    end.kind = Token::Kind::End;
    end.offset = src.size();
    end.line = line;
    end.col = col;
    tokens.push_back(std::move(end));
  }
};

// Type constructor keywords; a bare identifier that is none of these is a
// typedef reference.
bool is_type_keyword(const std::string& s) {
  return s == "int" || s == "int8" || s == "int16" || s == "int32" ||
         s == "int64" || s == "void" || s == "enum" || s == "addr" ||
         s == "ptr" || s == "vector" || s == "struct" || s == "cfun" ||
         s == "sparam";
}

struct Parser {
  const std::string& src;
  std::string file;
  TargetConfig target;
  DiagnosticList& diags;
  std::vector<Token> toks;
  size_t pos = 0;

  // typedef scope; seeded with the built-in address aliases
  std::map<std::string, IRTypeRef> typedefs;

  Parser(const std::string& s, std::string f, const TargetConfig& tc,
         DiagnosticList& d)
      : src(s), file(std::move(f)), target(tc), diags(d) {
    typedefs["exn_handler"] = ty_addr();
    typedefs["lvalue"] = ty_addr();
  }

  const Token& peek(size_t k = 0) const {
    size_t i = pos + k;
    return i < toks.size() ? toks[i] : toks.back();
  }
  const Token& cur() const { return peek(0); }
  Token take() { return toks[pos < toks.size() - 1 ? pos++ : pos]; }

  SourceSpan span_here() const {
    const Token& t = cur();
    return {file, t.line, t.col, t.line, t.col + static_cast<int>(t.text.size())};
  }

  void error(const std::string& msg) {
    diags.push_back({Severity::Error, msg, span_here()});
  }

  bool at_punct(const std::string& p) const {
    return cur().kind == Token::Kind::Punct && cur().text == p;
  }
  bool at_ident(const std::string& s) const {
    return cur().kind == Token::Kind::Ident && cur().text == s;
  }

  bool eat_punct(const std::string& p) {
    if (at_punct(p)) {
      take();
      return true;
    }
    return false;
  }

  bool expect_punct(const std::string& p) {
    if (eat_punct(p)) return true;
    error("expected '" + p + "' but found '" + cur().text + "'");
    return false;
  }

  bool eat_ident(const std::string& s) {
    if (at_ident(s)) {
      take();
      return true;
    }
    return false;
  }

  std::string expect_ident(const char* what) {
    if (cur().kind == Token::Kind::Ident) return take().text;
    error(std::string("expected ") + what + " but found '" + cur().text + "'");
    return "";
  }

  int64_t expect_int(const char* what) {
    if (cur().kind == Token::Kind::Int) return take().ival;
    error(std::string("expected ") + what + " but found '" + cur().text + "'");
    return 0;
  }

  // -------------------------------------------------------------------------
  // Types

  IRTypeRef parse_type() {
    SourceSpan sp = span_here();
    if (cur().kind != Token::Kind::Ident) {
      error("expected a type but found '" + cur().text + "'");
      take();
      return ty_void();
    }
    std::string head = take().text;
    if (head == "int" || head == "int32") return ty_int(32);
    if (head == "int8") return ty_int(8);
    if (head == "int16") return ty_int(16);
    if (head == "int64") return ty_int(64);
    if (head == "void") return ty_void();
    if (head == "enum") {
      expect_punct("(");
      int64_t lo = expect_int("enum lower bound");
      expect_punct(",");
      int64_t hi = expect_int("enum upper bound");
      expect_punct(")");
      if (lo > hi) {
        diags.push_back({Severity::Error, "empty enum range", sp});
      }
      return ty_enum(lo, hi);
    }
    if (head == "addr") {
      // The argument is descriptive only; addr(data) and addr(struct_tree)
      // both denote the untyped data address type.
      expect_punct("(");
      if (cur().kind == Token::Kind::Ident && !is_type_keyword(cur().text) &&
          !typedefs.count(cur().text)) {
        take();  // opaque tag such as `data`
      } else {
        parse_type();
      }
      expect_punct(")");
      return ty_addr();
    }
    if (head == "ptr") {
      expect_punct("(");
      IRTypeRef t = parse_type();
      expect_punct(")");
      return ty_ptr(std::move(t));
    }
    if (head == "vector") {
      expect_punct("(");
      int64_t esize = expect_int("element size");
      expect_punct(",");
      IRTypeRef elem = parse_type();
      std::optional<uint64_t> count;
      if (eat_punct(",")) count = static_cast<uint64_t>(expect_int("element count"));
      expect_punct(")");
      auto actual = byte_size(elem, target);
      if (actual && *actual != static_cast<uint64_t>(esize)) {
        diags.push_back({Severity::Error,
                         "vector element size " + std::to_string(esize) +
                             " does not match element type size " +
                             std::to_string(*actual),
                         sp});
      }
      return ty_vector(count, std::move(elem));
    }
    if (head == "struct") {
      uint64_t size = static_cast<uint64_t>(expect_int("struct size"));
      expect_punct(":");
      uint64_t align = static_cast<uint64_t>(expect_int("struct alignment"));
      expect_punct("(");
      std::vector<StructField> fields;
      if (!at_punct(")")) {
        do {
          StructField f;
          f.offset = static_cast<uint64_t>(expect_int("field offset"));
          expect_punct(":");
          f.type = parse_type();
          fields.push_back(std::move(f));
        } while (eat_punct(","));
      }
      expect_punct(")");
      return ty_struct(size, align, std::move(fields));
    }
    if (head == "cfun") {
      expect_punct("(");
      expect_punct("(");
      std::vector<IRTypeRef> params;
      if (!at_punct(")")) {
        do {
          params.push_back(parse_type());
        } while (eat_punct(","));
      }
      expect_punct(")");
      expect_punct("->");
      IRTypeRef result = parse_type();
      expect_punct(")");
      return ty_cfun(std::move(params), std::move(result));
    }
    if (head == "sparam") {
      expect_punct("(");
      IRTypeRef t = parse_type();
      expect_punct(")");
      return ty_struct_param(std::move(t));
    }
    auto it = typedefs.find(head);
    if (it != typedefs.end()) return it->second;
    diags.push_back(
        {Severity::Error, "unknown type constructor '" + head + "'", sp});
    return ty_void();
  }

  // -------------------------------------------------------------------------
  // Expressions

  bool at_expr_start() const {
    return cur().kind == Token::Kind::Int || cur().kind == Token::Kind::Str ||
           cur().kind == Token::Kind::Ident || at_punct("(");
  }

  ExprPtr parse_expr() {
    ExprPtr e = parse_primary();
    while (at_punct("#")) {
      SourceSpan sp = span_here();
      take();
      int idx = static_cast<int>(expect_int("field index"));
      e = ex_select(std::move(e), idx, sp);
    }
    return e;
  }

  std::vector<ExprPtr> parse_arg_list() {
    std::vector<ExprPtr> args;
    expect_punct("(");
    if (!at_punct(")")) {
      do {
        args.push_back(parse_expr());
      } while (eat_punct(","));
    }
    expect_punct(")");
    return args;
  }

  ExprPtr parse_primary() {
    SourceSpan sp = span_here();
    if (cur().kind == Token::Kind::Int) {
      return ex_lit(Literal::make_int(take().ival), sp);
    }
    if (cur().kind == Token::Kind::Str) {
      return ex_lit(Literal::make_str(take().text), sp);
    }
    if (at_punct("(")) {
      take();
      ExprPtr e = parse_expr();
      expect_punct(")");
      return e;
    }
    if (cur().kind != Token::Kind::Ident) {
      error("expected an expression but found '" + cur().text + "'");
      take();
      return ex_lit(Literal::make_int(0), sp);
    }
    std::string name = take().text;
    if (name == "nil") return ex_lit(Literal::make_nil(), sp);
    if (name == "alloc") return ex_alloc(parse_arg_list(), sp);
    if (name == "ccall") {
      std::string callee = expect_ident("C function name");
      return ex_ccall(std::move(callee), parse_arg_list(), sp);
    }
    if (at_punct("(")) {
      if (auto op = primop_by_name(name)) {
        return ex_prim(*op, parse_arg_list(), sp);
      }
      return ex_call(std::move(name), parse_arg_list(), sp);
    }
    return resolve_var(std::move(name), sp);
  }

  // let-alias substitution: `let x = y` binds x as a pure alias for y
  std::map<std::string, std::string> aliases;

  ExprPtr resolve_var(std::string name, SourceSpan sp) {
    auto it = aliases.find(name);
    if (it != aliases.end()) name = it->second;
    return ex_var(std::move(name), sp);
  }

  // -------------------------------------------------------------------------
  // Statements

  int unused_counter = 0;

  // `_` binders get internal names no source identifier can collide with
  // (the lexer never produces '$')
  std::string binder_name(std::string raw) {
    if (raw == "_") return "$u" + std::to_string(unused_counter++);
    return raw;
  }

  TermPtr parse_block() {
    expect_punct("{");
    TermPtr t = parse_stmts();
    expect_punct("}");
    return t;
  }

  TermPtr parse_branch() {
    if (at_punct("{")) return parse_block();
    return parse_stmts_single_tail();
  }

  // A non-braced branch holds exactly one tail statement.
  TermPtr parse_stmts_single_tail() {
    if (at_ident("return") || at_ident("if")) return parse_stmts();
    error("branch without braces must be a return or if");
    return mk_return({}, span_here());
  }

  TermPtr parse_stmts() {
    SourceSpan sp = span_here();
    if (at_ident("return")) {
      take();
      std::vector<ExprPtr> vals;
      if (at_punct("(")) {
        take();
        if (!at_punct(")")) {
          do {
            vals.push_back(parse_expr());
          } while (eat_punct(","));
        }
        expect_punct(")");
        // `return (x)` is a single parenthesized value
        while (at_punct("#")) {
          take();
          int idx = static_cast<int>(expect_int("field index"));
          if (vals.size() == 1) vals[0] = ex_select(vals[0], idx, sp);
        }
      } else if (at_expr_start()) {
        vals.push_back(parse_expr());
      }
      return mk_return(std::move(vals), sp);
    }
    if (at_ident("if")) {
      take();
      ExprPtr cond = parse_expr();
      if (!eat_ident("then")) error("expected 'then'");
      TermPtr then_branch = parse_branch();
      if (!eat_ident("else")) error("expected 'else'");
      TermPtr else_branch = parse_branch();
      return mk_if(std::move(cond), std::move(then_branch), std::move(else_branch), sp);
    }
    if (at_ident("stackalloc")) {
      take();
      // stackalloc a[8:4], b[8:4]  desugars to nested allocations
      struct Slot {
        std::string name;
        uint64_t size, align;
        SourceSpan sp;
      };
      std::vector<Slot> slots;
      do {
        Slot s;
        s.sp = span_here();
        s.name = binder_name(expect_ident("stack slot name"));
        expect_punct("[");
        s.size = static_cast<uint64_t>(expect_int("stack slot size"));
        expect_punct(":");
        s.align = static_cast<uint64_t>(expect_int("stack slot alignment"));
        expect_punct("]");
        if (s.align == 0 || (s.align & (s.align - 1)) != 0) {
          diags.push_back({Severity::Error, "stack slot alignment must be a power of two", s.sp});
        }
        slots.push_back(std::move(s));
      } while (eat_punct(","));
      TermPtr body = parse_stmts();
      for (auto it = slots.rbegin(); it != slots.rend(); ++it) {
        body = mk_stack_alloc(it->name, it->size, it->align, std::move(body), it->sp);
      }
      return body;
    }
    if (at_ident("let")) {
      take();
      std::vector<std::string> vars;
      bool tuple = false;
      if (at_punct("(")) {
        tuple = true;
        take();
        do {
          vars.push_back(binder_name(expect_ident("binding name")));
        } while (eat_punct(","));
        expect_punct(")");
      } else {
        vars.push_back(binder_name(expect_ident("binding name")));
      }
      std::optional<IRTypeRef> note;
      if (eat_punct(":")) note = parse_type();
      expect_punct("=");
      ExprPtr rhs = parse_expr();
      if (tuple || (rhs->tag == Expr::Tag::Call)) {
        if (rhs->tag != Expr::Tag::Call) {
          error("tuple binding requires a direct call on the right-hand side");
          return mk_return({}, sp);
        }
        Expr call = *rhs;
        TermPtr body = parse_stmts();
        return mk_let_call(std::move(vars), call.name, call.args, std::move(body), sp);
      }
      std::string v = vars[0];
      switch (rhs->tag) {
        case Expr::Tag::Var:
          // pure alias; substitute in the rest of the block
          aliases[v] = rhs->name;
          return parse_stmts();
        case Expr::Tag::Lit: {
          TermPtr body = parse_stmts();
          return mk_let_lit(v, rhs->lit, std::move(body), sp, note);
        }
        case Expr::Tag::Prim: {
          Expr prim = *rhs;
          TermPtr body = parse_stmts();
          return mk_let_prim(v, prim.op, prim.args, std::move(body), sp, note);
        }
        case Expr::Tag::Select: {
          Expr sel = *rhs;
          TermPtr body = parse_stmts();
          return mk_let_select(v, sel.args[0], sel.index, std::move(body), sp, note);
        }
        case Expr::Tag::Alloc: {
          Expr al = *rhs;
          TermPtr body = parse_stmts();
          return mk_let_alloc(v, al.args, std::move(body), sp, note);
        }
        case Expr::Tag::CCall: {
          Expr cc = *rhs;
          TermPtr body = parse_stmts();
          return mk_let_ccall(v, cc.name, cc.args, std::move(body), sp, note);
        }
        case Expr::Tag::Call:
          break;  // handled above
      }
      error("malformed let binding");
      return mk_return({}, sp);
    }
    // bare call statement: f(args) or ccall f(args)
    if (at_ident("ccall")) {
      take();
      std::string callee = expect_ident("C function name");
      std::vector<ExprPtr> args = parse_arg_list();
      TermPtr body = parse_stmts();
      return mk_let_ccall(binder_name("_"), std::move(callee), std::move(args),
                          std::move(body), sp);
    }
    if (cur().kind == Token::Kind::Ident && peek(1).kind == Token::Kind::Punct &&
        peek(1).text == "(") {
      std::string callee = take().text;
      std::vector<ExprPtr> args = parse_arg_list();
      TermPtr body = parse_stmts();
      return mk_let_call({}, std::move(callee), std::move(args), std::move(body), sp);
    }
    error("expected a statement but found '" + cur().text + "'");
    take();
    return mk_return({}, sp);
  }

  // -------------------------------------------------------------------------
  // Declarations

  // Raw source slice between two token offsets, trimmed (for the opaque
  // high-level type annotation on vals).
  std::string raw_between(size_t from_tok, size_t to_tok) {
    size_t a = toks[from_tok].offset;
    size_t b = toks[to_tok].offset;
    std::string s = src.substr(a, b - a);
    size_t lo = s.find_first_not_of(" \t\r\n");
    size_t hi = s.find_last_not_of(" \t\r\n");
    if (lo == std::string::npos) return "";
    std::string out = s.substr(lo, hi - lo + 1);
    // collapse internal whitespace runs to single spaces
    std::string flat;
    bool in_ws = false;
    for (char c : out) {
      if (isspace(static_cast<unsigned char>(c))) {
        in_ws = true;
        continue;
      }
      if (in_ws && !flat.empty()) flat += ' ';
      in_ws = false;
      flat += c;
    }
    return flat;
  }

  void parse_decls(ModuleInterface& m, const std::string& prefix) {
    while (cur().kind != Token::Kind::End && !at_punct("}")) {
      if (!parse_decl(m, prefix)) {
        // resynchronize: skip to something that can start a declaration
        while (cur().kind != Token::Kind::End && !at_punct("}") &&
               !at_ident("typedef") && !at_ident("type") &&
               !at_ident("external") && !at_ident("extern") &&
               !at_ident("val") && !at_ident("module")) {
          take();
        }
      }
    }
  }

  bool parse_decl(ModuleInterface& m, const std::string& prefix) {
    SourceSpan sp = span_here();
    if (eat_ident("typedef")) {
      TypeDef td;
      td.span = sp;
      td.name = expect_ident("typedef name");
      expect_punct("=");
      td.type = parse_type();
      if (typedefs.count(td.name)) {
        diags.push_back({Severity::Error, "duplicate typedef '" + td.name + "'", sp});
        return false;
      }
      typedefs[td.name] = td.type;
      m.typedefs.push_back(std::move(td));
      return true;
    }
    if (eat_ident("type")) {
      TypeBinding tb;
      tb.span = sp;
      tb.name = expect_ident("type name");
      if (eat_punct("=")) {
        if (eat_ident("prim")) {
          tb.is_alias = false;
          tb.type = parse_type();
        } else {
          tb.is_alias = true;
          tb.alias_of = expect_ident("aliased type name");
        }
      } else {
        // abstract: `type Struct_tree` with no right-hand side
        tb.is_alias = false;
        tb.type = ty_void();
      }
      for (const auto& other : m.type_bindings) {
        if (other.name == tb.name) {
          diags.push_back({Severity::Error, "duplicate type '" + tb.name + "'", sp});
          return false;
        }
      }
      m.type_bindings.push_back(std::move(tb));
      return true;
    }
    if (at_ident("external") || at_ident("extern")) {
      take();
      ExternalDecl ed;
      ed.span = sp;
      IRTypeRef result = parse_type();
      ed.name = expect_ident("external name");
      std::vector<IRTypeRef> params;
      expect_punct("(");
      if (!at_punct(")")) {
        do {
          params.push_back(parse_type());
        } while (eat_punct(","));
      }
      expect_punct(")");
      if (m.find_external(ed.name)) {
        diags.push_back({Severity::Error, "duplicate external '" + ed.name + "'", sp});
        return false;
      }
      ed.signature = ty_cfun(std::move(params), std::move(result));
      m.externals.push_back(std::move(ed));
      return true;
    }
    if (eat_ident("module")) {
      std::string name = expect_ident("module name");
      expect_punct("{");
      parse_decls(m, prefix.empty() ? name : prefix + "." + name);
      expect_punct("}");
      return true;
    }
    if (eat_ident("val")) {
      FunBinding fb;
      fb.span = sp;
      fb.name = expect_ident("binding name");
      if (!prefix.empty()) fb.name = prefix + "." + fb.name;
      expect_punct(":");
      size_t hl_start = pos;
      // the annotation runs to the '=' that introduces the fun
      while (cur().kind != Token::Kind::End &&
             !(at_punct("=") && peek(1).kind == Token::Kind::Ident &&
               peek(1).text == "fun")) {
        take();
      }
      fb.hl_type = raw_between(hl_start, pos);
      expect_punct("=");
      if (!eat_ident("fun")) {
        error("expected 'fun'");
        return false;
      }
      fb.def.span = sp;
      fb.def.self_name = expect_ident("function self name");
      expect_punct("(");
      aliases.clear();
      unused_counter = 0;
      if (!at_punct(")")) {
        do {
          Param p;
          p.span = span_here();
          p.name = binder_name(expect_ident("parameter name"));
          expect_punct(":");
          p.type = parse_type();
          fb.def.params.push_back(std::move(p));
        } while (eat_punct(","));
      }
      expect_punct(")");
      fb.def.body = parse_block();
      if (m.find_fun(fb.name)) {
        diags.push_back({Severity::Error, "duplicate binding '" + fb.name + "'", sp});
        return false;
      }
      m.fun_bindings.push_back(std::move(fb));
      return true;
    }
    error("expected a declaration but found '" + cur().text + "'");
    take();
    return false;
  }
};

}  // namespace

ParseResult parse_mbx(const std::string& text, const std::string& filename,
                      const TargetConfig& target, const std::string& default_name) {
  ParseResult res;
  res.doc.target = target;
  Lexer lex(text, filename, res.diags);
  lex.run();
  if (has_errors(res.diags)) return res;

  Parser p(text, filename, target, res.diags);
  p.toks = std::move(lex.tokens);

  if (p.at_ident("module")) {
    p.take();
    res.doc.module.name = p.expect_ident("module name");
    p.expect_punct("{");
    p.parse_decls(res.doc.module, "");
    p.expect_punct("}");
  } else {
    res.doc.module.name = default_name;
    p.parse_decls(res.doc.module, "");
  }
  if (p.cur().kind != Token::Kind::End) {
    p.error("unexpected trailing input");
  }

  // every function must be well scoped even before typechecking
  for (const auto& fb : res.doc.module.fun_bindings) {
    for (auto d : validate_scopes(fb.def)) res.diags.push_back(std::move(d));
  }
  return res;
}

}  // namespace mbx
