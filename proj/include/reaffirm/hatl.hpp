#pragma once

// HATL: the transformation language for resiliency patterns.
//
// A script is a sequence of statements:
//
//   # comment
//   name = receiver.method(arg, ...)     assignment of a call result
//   name = receiver.field                assignment of a field read
//   receiver.method(arg, ...)            call for effect
//   formode m = <model>.Mode { ... }     loop over modes
//   fortran t = <model>.Trans { ... }    loop over transitions
//
// Arguments are string literals, numbers or dotted references. The
// interpreter edits a private copy of the input model; any failure discards
// that copy, so callers never observe a partial transformation.

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "reaffirm/error.hpp"
#include "reaffirm/model.hpp"

namespace reaffirm::hatl {

struct SourceLoc {
  std::size_t line = 1;
  std::size_t column = 1;
  friend bool operator==(const SourceLoc&, const SourceLoc&) = default;
};

// ---------------------------------------------------------------------------
// Syntax tree

struct Ref {
  std::vector<std::string> path;
  friend bool operator==(const Ref&, const Ref&) = default;
};

struct StringLit {
  std::string text;
  friend bool operator==(const StringLit&, const StringLit&) = default;
};

struct Arg {
  std::variant<StringLit, double, Ref> value;
  SourceLoc loc;
  friend bool operator==(const Arg& a, const Arg& b) { return a.value == b.value; }
};

/// A dotted reference, optionally applied to an argument list.
struct CallOrRef {
  Ref target;
  bool is_call = false;
  std::vector<Arg> args;
  friend bool operator==(const CallOrRef&, const CallOrRef&) = default;
};

struct Statement;

struct Assignment {
  std::string lhs;
  CallOrRef rhs;
  friend bool operator==(const Assignment&, const Assignment&) = default;
};

enum class LoopKind { Mode, Trans };

struct Loop {
  LoopKind kind = LoopKind::Mode;
  std::string var;
  Ref collection;  // the model reference; the `.Mode` / `.Trans` field is implied by `kind`
  std::vector<Statement> body;
  friend bool operator==(const Loop&, const Loop&) = default;
};

struct MethodCall {
  CallOrRef call;
  friend bool operator==(const MethodCall&, const MethodCall&) = default;
};

struct Statement {
  std::variant<Assignment, Loop, MethodCall> node;
  SourceLoc loc;
  friend bool operator==(const Statement& a, const Statement& b) { return a.node == b.node; }
};

struct Script {
  std::vector<Statement> statements;
  friend bool operator==(const Script&, const Script&) = default;
};

inline constexpr std::size_t kMaxRefDepth = 3;

// ---------------------------------------------------------------------------
// Lexing and parsing

namespace detail {

enum class Tok { Ident, String, Number, Symbol, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  double number = 0.0;
  SourceLoc loc;
};

inline std::vector<Token> lex(std::string_view src) {
  std::vector<Token> out;
  std::size_t line = 1;
  std::size_t col = 1;
  std::size_t i = 0;
  auto bump = [&] {
    if (src[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
    ++i;
  };
  while (i < src.size()) {
    const char c = src[i];
    if (std::isspace(static_cast<unsigned char>(c)) || c == ';') {
      bump();
      continue;
    }
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') bump();
      continue;
    }
    Token t;
    t.loc = {line, col};
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (i < src.size() && (std::isalnum(static_cast<unsigned char>(src[i])) || src[i] == '_')) {
        t.text += src[i];
        bump();
      }
      t.kind = Tok::Ident;
    } else if (c == '"') {
      bump();
      bool closed = false;
      while (i < src.size()) {
        if (src[i] == '"') {
          bump();
          closed = true;
          break;
        }
        if (src[i] == '\n') break;
        if (src[i] == '\\' && i + 1 < src.size()) {
          bump();
          const char e = src[i];
          t.text += e == 'n' ? '\n' : e == 't' ? '\t' : e;
          bump();
          continue;
        }
        t.text += src[i];
        bump();
      }
      if (!closed) throw ParseError("unterminated string literal", t.loc.line, t.loc.column);
      t.kind = Tok::String;
    } else if (std::isdigit(static_cast<unsigned char>(c)) ||
               ((c == '-' || c == '.') && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      std::string num;
      num += c;
      bump();
      while (i < src.size() && (std::isdigit(static_cast<unsigned char>(src[i])) || src[i] == '.' || src[i] == 'e' ||
                                src[i] == 'E' ||
                                ((src[i] == '-' || src[i] == '+') && (num.back() == 'e' || num.back() == 'E')))) {
        num += src[i];
        bump();
      }
      std::size_t used = 0;
      try {
        t.number = std::stod(num, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != num.size()) throw ParseError("malformed number '" + num + "'", t.loc.line, t.loc.column);
      t.text = num;
      t.kind = Tok::Number;
    } else if (std::string_view("=.(),{}").find(c) != std::string_view::npos) {
      t.kind = Tok::Symbol;
      t.text = std::string(1, c);
      bump();
    } else {
      throw ParseError(std::string("unexpected character '") + c + "'", line, col);
    }
    out.push_back(std::move(t));
  }
  Token end;
  end.kind = Tok::End;
  end.loc = {line, col};
  out.push_back(end);
  return out;
}

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  Script parse_script() {
    Script s;
    while (peek().kind != Tok::End) s.statements.push_back(parse_statement());
    return s;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  const Token& next() {
    const Token& t = peek();
    if (pos_ < toks_.size() - 1) ++pos_;
    return t;
  }
  bool is_symbol(char c, std::size_t ahead = 0) const {
    const Token& t = peek(ahead);
    return t.kind == Tok::Symbol && t.text[0] == c;
  }

  [[noreturn]] void fail(const std::string& expected) const {
    const Token& t = peek();
    std::string found;
    switch (t.kind) {
      case Tok::End: found = "end of input"; break;
      case Tok::String: found = "string \"" + t.text + "\""; break;
      default: found = "'" + t.text + "'";
    }
    throw ParseError("expected " + expected + ", found " + found, t.loc.line, t.loc.column);
  }

  void expect(char c) {
    if (!is_symbol(c)) fail(std::string("'") + c + "'");
    next();
  }

  std::string expect_ident(const char* what) {
    if (peek().kind != Tok::Ident) fail(what);
    return next().text;
  }

  Statement parse_statement() {
    Statement st;
    st.loc = peek().loc;
    if (peek().kind == Tok::Ident && (peek().text == "formode" || peek().text == "fortran")) {
      st.node = parse_loop();
      return st;
    }
    if (peek().kind != Tok::Ident) fail("a statement");
    if (is_symbol('=', 1)) {
      Assignment a;
      a.lhs = next().text;
      next();
      a.rhs = parse_call_or_ref();
      st.node = std::move(a);
      return st;
    }
    MethodCall mc;
    mc.call = parse_call_or_ref();
    if (!mc.call.is_call) {
      throw ParseError("a bare reference is not a statement; expected a call or an assignment", st.loc.line,
                       st.loc.column);
    }
    st.node = std::move(mc);
    return st;
  }

  Loop parse_loop() {
    Loop loop;
    const std::string keyword = next().text;
    loop.kind = keyword == "formode" ? LoopKind::Mode : LoopKind::Trans;
    const char* field = loop.kind == LoopKind::Mode ? "Mode" : "Trans";
    loop.var = expect_ident("a loop variable name");
    expect('=');
    const SourceLoc ref_loc = peek().loc;
    Ref ref = parse_ref();
    if (ref.path.size() < 2 || ref.path.back() != field) {
      throw ParseError(keyword + " iterates over '<model>." + field + "'", ref_loc.line, ref_loc.column);
    }
    ref.path.pop_back();
    loop.collection = std::move(ref);
    expect('{');
    while (!is_symbol('}')) {
      if (peek().kind == Tok::End) fail("'}' to close the " + keyword + " block");
      loop.body.push_back(parse_statement());
    }
    next();
    return loop;
  }

  Ref parse_ref() {
    const SourceLoc start = peek().loc;
    Ref r;
    r.path.push_back(expect_ident("a name"));
    while (is_symbol('.')) {
      next();
      r.path.push_back(expect_ident("a field or method name after '.'"));
    }
    if (r.path.size() > kMaxRefDepth) {
      throw ParseError("dotted reference '" + join(r.path) + "' is deeper than " + std::to_string(kMaxRefDepth),
                       start.line, start.column);
    }
    return r;
  }

  CallOrRef parse_call_or_ref() {
    CallOrRef c;
    c.target = parse_ref();
    if (is_symbol('(')) {
      next();
      c.is_call = true;
      if (!is_symbol(')')) {
        for (;;) {
          c.args.push_back(parse_arg());
          if (is_symbol(',')) {
            next();
            continue;
          }
          break;
        }
      }
      expect(')');
    }
    return c;
  }

  Arg parse_arg() {
    Arg a;
    a.loc = peek().loc;
    switch (peek().kind) {
      case Tok::String: a.value = StringLit{next().text}; break;
      case Tok::Number: a.value = next().number; break;
      case Tok::Ident: a.value = parse_ref(); break;
      default: fail("an argument (string, number or reference)");
    }
    return a;
  }

  static std::string join(const std::vector<std::string>& path) {
    std::string s;
    for (std::size_t i = 0; i < path.size(); ++i) s += (i ? "." : "") + path[i];
    return s;
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

inline std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') {
      out += '\\';
      out += c;
    } else if (c == '\n') {
      out += "\\n";
    } else if (c == '\t') {
      out += "\\t";
    } else {
      out += c;
    }
  }
  return out + "\"";
}

inline std::string ref_text(const Ref& r) {
  std::string s;
  for (std::size_t i = 0; i < r.path.size(); ++i) s += (i ? "." : "") + r.path[i];
  return s;
}

inline std::string call_text(const CallOrRef& c) {
  std::string s = ref_text(c.target);
  if (!c.is_call) return s;
  s += "(";
  for (std::size_t i = 0; i < c.args.size(); ++i) {
    if (i) s += ", ";
    const auto& v = c.args[i].value;
    if (const auto* str = std::get_if<StringLit>(&v)) {
      s += quote(str->text);
    } else if (const auto* num = std::get_if<double>(&v)) {
      s += format_number(*num);
    } else {
      s += ref_text(std::get<Ref>(v));
    }
  }
  return s + ")";
}

inline void print_block(std::ostringstream& os, const std::vector<Statement>& body, int indent) {
  const std::string pad(static_cast<std::size_t>(indent) * 4, ' ');
  for (const auto& st : body) {
    if (const auto* a = std::get_if<Assignment>(&st.node)) {
      os << pad << a->lhs << " = " << call_text(a->rhs) << "\n";
    } else if (const auto* mc = std::get_if<MethodCall>(&st.node)) {
      os << pad << call_text(mc->call) << "\n";
    } else {
      const auto& loop = std::get<Loop>(st.node);
      os << pad << (loop.kind == LoopKind::Mode ? "formode " : "fortran ") << loop.var << " = "
         << ref_text(loop.collection) << (loop.kind == LoopKind::Mode ? ".Mode" : ".Trans") << " {\n";
      print_block(os, loop.body, indent + 1);
      os << pad << "}\n";
    }
  }
}

}  // namespace detail

inline Script parse_script(std::string_view text) {
  detail::Parser p(detail::lex(text));
  return p.parse_script();
}

inline std::string serialize_script(const Script& s) {
  std::ostringstream os;
  detail::print_block(os, s.statements, 0);
  return os.str();
}

// ---------------------------------------------------------------------------
// Runtime values and builtins

enum class ValueKind { Model, Mode, Transition, Flow, Guard, String, Number, ModeSet, TransitionSet };

inline const char* to_string(ValueKind k) {
  switch (k) {
    case ValueKind::Model: return "model";
    case ValueKind::Mode: return "mode";
    case ValueKind::Transition: return "transition";
    case ValueKind::Flow: return "flow";
    case ValueKind::Guard: return "guard";
    case ValueKind::String: return "string";
    case ValueKind::Number: return "number";
    case ValueKind::ModeSet: return "set of modes";
    case ValueKind::TransitionSet: return "set of transitions";
  }
  return "?";
}

struct ModelHandle {
  int model = 0;
};
struct ModeHandle {
  int model = 0;
  int id = 0;
};
struct TransitionHandle {
  int model = 0;
  int id = 0;
};
struct FlowRef {
  int model = 0;
  int mode = 0;
};
struct GuardRef {
  int model = 0;
  int transition = 0;
};
struct StringVal {
  std::string text;
};
struct NumberVal {
  double value = 0.0;
};

using RuntimeValue = std::variant<ModelHandle, ModeHandle, TransitionHandle, FlowRef, GuardRef, StringVal, NumberVal>;

inline ValueKind kind_of(const RuntimeValue& v) {
  static constexpr ValueKind kinds[] = {ValueKind::Model, ValueKind::Mode,   ValueKind::Transition, ValueKind::Flow,
                                        ValueKind::Guard, ValueKind::String, ValueKind::Number};
  return kinds[v.index()];
}

/// What an argument position accepts.
enum class ArgKind {
  Mode,        // a mode handle
  Text,        // expression text: string, number, or a guard reference
  Identifier,  // a variable name given as a string
  Scope,       // flow, guard, or a whole model
  Connective,  // "&&" or "||"
};

inline const char* to_string(ArgKind k) {
  switch (k) {
    case ArgKind::Mode: return "mode";
    case ArgKind::Text: return "expression text";
    case ArgKind::Identifier: return "variable name";
    case ArgKind::Scope: return "flow, guard or model";
    case ArgKind::Connective: return "connective \"&&\" or \"||\"";
  }
  return "?";
}

class Interpreter;

struct Builtin {
  std::string name;
  /// nullopt: any receiver.
  std::optional<ValueKind> receiver;
  /// Field reads take no argument list.
  bool is_field = false;
  std::vector<ArgKind> args;
  std::optional<ValueKind> result;
  std::function<std::optional<RuntimeValue>(Interpreter&, const RuntimeValue&, const std::vector<RuntimeValue>&)>
      apply;

  std::size_t arity() const { return args.size(); }
};

class BuiltinTable {
 public:
  void add(Builtin b) { entries_.push_back(std::move(b)); }

  /// First entry with this name, regardless of receiver.
  const Builtin* lookup(std::string_view name) const {
    // "t.guard" style lookups name a field on a receiver variable.
    if (const auto dot = name.rfind('.'); dot != std::string_view::npos) {
      const std::string_view field = name.substr(dot + 1);
      for (const auto& b : entries_) {
        if (b.is_field && b.name == field) return &b;
      }
      return nullptr;
    }
    for (const auto& b : entries_) {
      if (b.name == name) return &b;
    }
    return nullptr;
  }

  const Builtin* lookup(std::string_view name, ValueKind receiver, bool field) const {
    for (const auto& b : entries_) {
      if (b.name == name && b.is_field == field && (!b.receiver || *b.receiver == receiver)) return &b;
    }
    return nullptr;
  }

  const std::vector<Builtin>& entries() const { return entries_; }

 private:
  std::vector<Builtin> entries_;
};

class HatlError : public std::runtime_error {
 public:
  HatlError(const std::string& message, SourceLoc loc)
      : std::runtime_error("line " + std::to_string(loc.line) + ", column " + std::to_string(loc.column) + ": " +
                           message),
        loc_(loc) {}

  SourceLoc location() const noexcept { return loc_; }
  /// The input model is never modified, so every error leaves it intact.
  bool rolled_back() const noexcept { return true; }

 private:
  SourceLoc loc_;
};

BuiltinTable builtin_table();

// ---------------------------------------------------------------------------
// Interpreter

class Interpreter {
 public:
  Interpreter(const HybridModel& input, const BuiltinTable& table) : table_(table) { models_.push_back(input); }

  HybridModel run(const Script& script) {
    scopes_.clear();
    scopes_.emplace_back();
    scopes_.back()["model"] = ModelHandle{0};
    exec_block(script.statements);
    const auto diags = validate(models_[0]);
    if (!diags.empty()) {
      std::string msg = "the transformed model is invalid: " + diags.front().path + ": " + diags.front().message;
      if (diags.size() > 1) msg += " (and " + std::to_string(diags.size() - 1) + " more)";
      throw HatlError(msg, last_loc_);
    }
    return std::move(models_[0]);
  }

  // ---- services for builtins ----------------------------------------------

  HybridModel& model_of(int index) { return models_.at(static_cast<std::size_t>(index)); }

  HybridModel& writable(int index) {
    if (index != 0) fail("model snapshots created by copyModel are read-only");
    return models_[0];
  }

  int snapshot(int index) {
    models_.push_back(models_.at(static_cast<std::size_t>(index)));
    return static_cast<int>(models_.size()) - 1;
  }

  const Mode& live_mode(const ModeHandle& h) {
    const Mode* m = model_of(h.model).find_mode(h.id);
    if (!m) fail("mode handle #" + std::to_string(h.id) + " no longer refers to a mode of the model");
    return *m;
  }

  const Transition& live_transition(const TransitionHandle& h) {
    const Transition* t = model_of(h.model).find_transition(h.id);
    if (!t) fail("transition handle #" + std::to_string(h.id) + " no longer refers to a transition of the model");
    return *t;
  }

  /// Mode id `h.id` as seen from `model` (mode ids are shared by snapshots).
  int mode_in(int model, const ModeHandle& h) {
    live_mode(h);
    if (!model_of(model).find_mode(h.id)) {
      fail("mode '" + live_mode(h).name + "' does not exist in the receiving model");
    }
    return h.id;
  }

  std::string text_of(const RuntimeValue& v) {
    if (const auto* s = std::get_if<StringVal>(&v)) return s->text;
    if (const auto* n = std::get_if<NumberVal>(&v)) return format_number(n->value);
    const auto& g = std::get<GuardRef>(v);
    return to_string(live_transition(TransitionHandle{g.model, g.transition}).guard);
  }

  std::string describe(const RuntimeValue& v) {
    return std::visit(
        [&](const auto& x) -> std::string {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, ModelHandle>) {
            return x.model == 0 ? "model" : "model snapshot";
          } else if constexpr (std::is_same_v<T, ModeHandle>) {
            const Mode* m = model_of(x.model).find_mode(x.id);
            return m ? "mode '" + m->name + "'" : "stale mode #" + std::to_string(x.id);
          } else if constexpr (std::is_same_v<T, TransitionHandle>) {
            return "transition #" + std::to_string(x.id);
          } else if constexpr (std::is_same_v<T, FlowRef>) {
            const Mode* m = model_of(x.model).find_mode(x.mode);
            return "flow of mode '" + (m ? m->name : std::to_string(x.mode)) + "'";
          } else if constexpr (std::is_same_v<T, GuardRef>) {
            return "guard of transition #" + std::to_string(x.transition);
          } else if constexpr (std::is_same_v<T, StringVal>) {
            return "string \"" + x.text + "\"";
          } else {
            return "number " + format_number(x.value);
          }
        },
        v);
  }

  [[noreturn]] void fail(const std::string& msg) const { throw HatlError(msg, current_); }

 private:
  using Scope = std::map<std::string, RuntimeValue>;

  void exec_block(const std::vector<Statement>& body) {
    for (const auto& st : body) exec(st);
  }

  void exec(const Statement& st) {
    current_ = st.loc;
    last_loc_ = st.loc;
    try {
      if (const auto* a = std::get_if<Assignment>(&st.node)) {
        auto v = eval(a->rhs);
        if (!v) fail("'" + detail::call_text(a->rhs) + "' produces no value to assign to '" + a->lhs + "'");
        assign(a->lhs, std::move(*v));
      } else if (const auto* mc = std::get_if<MethodCall>(&st.node)) {
        eval(mc->call);
      } else {
        exec_loop(std::get<Loop>(st.node));
      }
    } catch (const HatlError&) {
      throw;
    } catch (const ModelError& e) {
      throw HatlError(std::string(reaffirm::to_string(e.kind())) + ": " + e.what(), st.loc);
    }
  }

  void exec_loop(const Loop& loop) {
    const SourceLoc loc = current_;
    const RuntimeValue coll = resolve(loop.collection);
    const auto* mh = std::get_if<ModelHandle>(&coll);
    if (!mh) {
      fail(std::string(loop.kind == LoopKind::Mode ? "formode" : "fortran") + " expects a model before '." +
           (loop.kind == LoopKind::Mode ? "Mode" : "Trans") + "', got " + describe(coll));
    }
    const int model = mh->model;
    // Snapshot of ids at loop entry, ascending.
    std::vector<int> ids;
    if (loop.kind == LoopKind::Mode) {
      for (const auto& m : model_of(model).modes) ids.push_back(m.id);
    } else {
      for (const auto& t : model_of(model).transitions) ids.push_back(t.id);
    }
    std::sort(ids.begin(), ids.end());
    for (int id : ids) {
      const bool live = loop.kind == LoopKind::Mode ? model_of(model).find_mode(id) != nullptr
                                                    : model_of(model).find_transition(id) != nullptr;
      if (!live) continue;
      scopes_.emplace_back();
      if (loop.kind == LoopKind::Mode) {
        scopes_.back()[loop.var] = ModeHandle{model, id};
      } else {
        scopes_.back()[loop.var] = TransitionHandle{model, id};
      }
      exec_block(loop.body);
      scopes_.pop_back();
      current_ = loc;
    }
  }

  void assign(const std::string& name, RuntimeValue v) {
    for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it) {
      if (auto f = it->find(name); f != it->end()) {
        f->second = std::move(v);
        return;
      }
    }
    scopes_.back()[name] = std::move(v);
  }

  const RuntimeValue& lookup(const std::string& name) {
    for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it) {
      if (auto f = it->find(name); f != it->end()) return f->second;
    }
    fail("unknown name '" + name + "'");
  }

  RuntimeValue read_field(const RuntimeValue& recv, const std::string& field) {
    const Builtin* b = table_.lookup(field, kind_of(recv), true);
    if (!b) {
      if (field == "Mode" || field == "Trans") {
        fail("'." + field + "' can only be used as the collection of a " +
             (field == "Mode" ? "formode" : "fortran") + " loop");
      }
      fail(describe(recv) + " has no field '" + field + "'");
    }
    auto v = b->apply(*this, recv, {});
    return std::move(*v);
  }

  RuntimeValue resolve(const Ref& ref) {
    RuntimeValue v = lookup(ref.path.front());
    for (std::size_t i = 1; i < ref.path.size(); ++i) v = read_field(v, ref.path[i]);
    return v;
  }

  RuntimeValue eval_arg(const Arg& a) {
    if (const auto* s = std::get_if<StringLit>(&a.value)) return StringVal{s->text};
    if (const auto* n = std::get_if<double>(&a.value)) return NumberVal{*n};
    return resolve(std::get<Ref>(a.value));
  }

  std::optional<RuntimeValue> eval(const CallOrRef& c) {
    if (!c.is_call) return resolve(c.target);
    const std::string& method = c.target.path.back();
    if (c.target.path.size() < 2) {
      fail("'" + method + "' must be called on a receiver, e.g. model." + method + "(...)");
    }
    Ref recv_ref = c.target;
    recv_ref.path.pop_back();
    const RuntimeValue recv = resolve(recv_ref);
    const Builtin* b = table_.lookup(method, kind_of(recv), false);
    if (!b) {
      const Builtin* any = table_.lookup(method);
      if (!any || any->is_field) fail("unknown method '" + method + "'");
      fail("'" + method + "' is a method of a " + to_string(*any->receiver) + ", but " +
           detail::ref_text(recv_ref) + " is a " + describe(recv));
    }
    if (c.args.size() != b->arity()) {
      std::string expected;
      for (std::size_t i = 0; i < b->args.size(); ++i) expected += (i ? ", " : "") + std::string(to_string(b->args[i]));
      fail("'" + method + "' on " + describe(recv) + " expects " + std::to_string(b->arity()) + " argument" +
           (b->arity() == 1 ? "" : "s") + (expected.empty() ? "" : " (" + expected + ")") + ", got " +
           std::to_string(c.args.size()));
    }
    std::vector<RuntimeValue> args;
    for (std::size_t i = 0; i < c.args.size(); ++i) {
      current_ = c.args[i].loc;
      RuntimeValue v = eval_arg(c.args[i]);
      check_arg(method, i, b->args[i], v);
      args.push_back(std::move(v));
    }
    return b->apply(*this, recv, args);
  }

  void check_arg(const std::string& method, std::size_t index, ArgKind expected, const RuntimeValue& v) {
    const ValueKind k = kind_of(v);
    bool ok = false;
    switch (expected) {
      case ArgKind::Mode: ok = k == ValueKind::Mode; break;
      case ArgKind::Text: ok = k == ValueKind::String || k == ValueKind::Number || k == ValueKind::Guard; break;
      case ArgKind::Identifier: ok = k == ValueKind::String; break;
      case ArgKind::Scope: ok = k == ValueKind::Flow || k == ValueKind::Guard || k == ValueKind::Model; break;
      case ArgKind::Connective: {
        const auto* s = std::get_if<StringVal>(&v);
        ok = s && (s->text == "&&" || s->text == "||");
        break;
      }
    }
    if (!ok) {
      fail("argument " + std::to_string(index + 1) + " of '" + method + "' must be a " + to_string(expected) +
           ", got " + describe(v));
    }
  }

  std::vector<HybridModel> models_;
  std::vector<Scope> scopes_;
  const BuiltinTable& table_;
  SourceLoc current_;
  SourceLoc last_loc_;
};

/// The method and field inventory of the language.
inline BuiltinTable builtin_table() {
  BuiltinTable t;
  using Args = std::vector<RuntimeValue>;
  auto model_idx = [](const RuntimeValue& r) { return std::get<ModelHandle>(r).model; };

  t.add({"Mode", ValueKind::Model, true, {}, ValueKind::ModeSet, nullptr});
  t.add({"Trans", ValueKind::Model, true, {}, ValueKind::TransitionSet, nullptr});
  t.add({"source", ValueKind::Transition, true, {}, ValueKind::Mode,
         [](Interpreter& in, const RuntimeValue& r, const Args&) -> std::optional<RuntimeValue> {
           const auto& h = std::get<TransitionHandle>(r);
           return ModeHandle{h.model, in.live_transition(h).source};
         }});
  t.add({"destination", ValueKind::Transition, true, {}, ValueKind::Mode,
         [](Interpreter& in, const RuntimeValue& r, const Args&) -> std::optional<RuntimeValue> {
           const auto& h = std::get<TransitionHandle>(r);
           return ModeHandle{h.model, in.live_transition(h).destination};
         }});
  t.add({"guard", ValueKind::Transition, true, {}, ValueKind::Guard,
         [](Interpreter& in, const RuntimeValue& r, const Args&) -> std::optional<RuntimeValue> {
           const auto& h = std::get<TransitionHandle>(r);
           in.live_transition(h);
           return GuardRef{h.model, h.id};
         }});
  t.add({"flow", ValueKind::Mode, true, {}, ValueKind::Flow,
         [](Interpreter& in, const RuntimeValue& r, const Args&) -> std::optional<RuntimeValue> {
           const auto& h = std::get<ModeHandle>(r);
           in.live_mode(h);
           return FlowRef{h.model, h.id};
         }});

  t.add({"copyModel", ValueKind::Model, false, {}, ValueKind::Model,
         [=](Interpreter& in, const RuntimeValue& r, const Args&) -> std::optional<RuntimeValue> {
           return ModelHandle{in.snapshot(model_idx(r))};
         }});
  t.add({"addParam", ValueKind::Model, false, {ArgKind::Identifier}, std::nullopt,
         [=](Interpreter& in, const RuntimeValue& r, const Args& a) -> std::optional<RuntimeValue> {
           in.writable(model_idx(r)).add_param(std::get<StringVal>(a[0]).text);
           return std::nullopt;
         }});
  t.add({"addLocalVar", ValueKind::Model, false, {ArgKind::Identifier}, std::nullopt,
         [=](Interpreter& in, const RuntimeValue& r, const Args& a) -> std::optional<RuntimeValue> {
           in.writable(model_idx(r)).add_local_var(std::get<StringVal>(a[0]).text);
           return std::nullopt;
         }});
  t.add({"addMode", ValueKind::Model, false, {ArgKind::Mode}, ValueKind::Mode,
         [=](Interpreter& in, const RuntimeValue& r, const Args& a) -> std::optional<RuntimeValue> {
           const int m = model_idx(r);
           const int src = in.mode_in(m, std::get<ModeHandle>(a[0]));
           return ModeHandle{m, in.writable(m).add_mode_copy(src)};
         }});
  t.add({"getCopyMode", ValueKind::Model, false, {ArgKind::Mode}, ValueKind::Mode,
         [=](Interpreter& in, const RuntimeValue& r, const Args& a) -> std::optional<RuntimeValue> {
           const int m = model_idx(r);
           const auto& h = std::get<ModeHandle>(a[0]);
           in.live_mode(h);
           return ModeHandle{m, in.model_of(m).get_copy_mode(h.id).id};
         }});
  t.add({"addTransition", ValueKind::Model, false, {ArgKind::Mode, ArgKind::Mode, ArgKind::Text}, ValueKind::Transition,
         [=](Interpreter& in, const RuntimeValue& r, const Args& a) -> std::optional<RuntimeValue> {
           const int m = model_idx(r);
           const int src = in.mode_in(m, std::get<ModeHandle>(a[0]));
           const int dst = in.mode_in(m, std::get<ModeHandle>(a[1]));
           const std::string guard = in.text_of(a[2]);
           return TransitionHandle{m, in.writable(m).add_transition(src, dst, guard)};
         }});
  t.add({"replace", std::nullopt, false, {ArgKind::Scope, ArgKind::Identifier, ArgKind::Text}, ValueKind::Number,
         [](Interpreter& in, const RuntimeValue&, const Args& a) -> std::optional<RuntimeValue> {
           ReplaceScope scope = WholeModel{};
           int m = 0;
           if (const auto* f = std::get_if<FlowRef>(&a[0])) {
             in.live_mode(ModeHandle{f->model, f->mode});
             scope = FlowOf{f->mode};
             m = f->model;
           } else if (const auto* g = std::get_if<GuardRef>(&a[0])) {
             in.live_transition(TransitionHandle{g->model, g->transition});
             scope = GuardOf{g->transition};
             m = g->model;
           } else {
             m = std::get<ModelHandle>(a[0]).model;
           }
           const int n = in.writable(m).replace(scope, std::get<StringVal>(a[1]).text, in.text_of(a[2]));
           return NumberVal{static_cast<double>(n)};
         }});
  t.add({"addFlow", ValueKind::Mode, false, {ArgKind::Text}, std::nullopt,
         [](Interpreter& in, const RuntimeValue& r, const Args& a) -> std::optional<RuntimeValue> {
           const auto& h = std::get<ModeHandle>(r);
           in.live_mode(h);
           in.writable(h.model).add_flow(h.id, in.text_of(a[0]));
           return std::nullopt;
         }});
  t.add({"addGuardLabel", ValueKind::Transition, false, {ArgKind::Connective, ArgKind::Text}, std::nullopt,
         [](Interpreter& in, const RuntimeValue& r, const Args& a) -> std::optional<RuntimeValue> {
           const auto& h = std::get<TransitionHandle>(r);
           in.live_transition(h);
           in.writable(h.model).add_guard_label(h.id, std::get<StringVal>(a[0]).text, in.text_of(a[1]));
           return std::nullopt;
         }});
  t.add({"addResetLabel", ValueKind::Transition, false, {ArgKind::Text}, std::nullopt,
         [](Interpreter& in, const RuntimeValue& r, const Args& a) -> std::optional<RuntimeValue> {
           const auto& h = std::get<TransitionHandle>(r);
           in.live_transition(h);
           in.writable(h.model).add_reset_label(h.id, in.text_of(a[0]));
           return std::nullopt;
         }});
  return t;
}

/// Applies `script` to a private copy of `model`. Throws HatlError; `model`
/// itself is never touched.
inline HybridModel interpret(const Script& script, const HybridModel& model, const BuiltinTable& table) {
  Interpreter in(model, table);
  return in.run(script);
}

inline HybridModel interpret(const Script& script, const HybridModel& model) {
  static const BuiltinTable table = builtin_table();
  return interpret(script, model, table);
}

/// Parses and applies; syntax errors surface as HatlError as well.
inline HybridModel transform(std::string_view script_text, const HybridModel& model) {
  Script s;
  try {
    s = parse_script(script_text);
  } catch (const ParseError& e) {
    throw HatlError("syntax error: " + e.detail(), SourceLoc{e.line(), e.column()});
  }
  return interpret(s, model);
}

}  // namespace reaffirm::hatl
