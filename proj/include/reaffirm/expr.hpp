#pragma once

// Expression language shared by flows, guards, resets, invariants and STL
// atoms.
//
// Grammar (lowest to highest precedence):
//
//   or      := and  ( ("||" | "or")  and )*
//   and     := not  ( ("&&" | "and") not )*
//   not     := ("!" | "not") not | cmp
//   cmp     := add  ( ("<" | "<=" | ">" | ">=" | "==" | "!=") add )?
//   add     := mul  ( ("+" | "-") mul )*
//   mul     := unary ( ("*" | "/") unary )*
//   unary   := "-" unary | primary
//   primary := number | "true" | "false" | ident | ident "(" args ")" | "(" or ")"
//
// Function calls: abs, sin, cos, sqrt (one argument), min, max (two).
// Expressions are immutable values; sharing subtrees between copies is safe.

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "reaffirm/error.hpp"
#include "reaffirm/lexer.hpp"

namespace reaffirm {

enum class UnaryOp { Neg, Not, Abs, Sin, Cos, Sqrt };
enum class BinaryOp { Add, Sub, Mul, Div, Min, Max, Lt, Le, Gt, Ge, Eq, Ne, And, Or };
enum class ExprKind { Number, Boolean, Variable, Unary, Binary };
enum class ExprType { Numeric, Boolean };

class Expr {
 public:
  /// The literal `true`; the default invariant.
  Expr() : Expr(boolean(true)) {}

  static Expr number(double v) {
    auto n = std::make_shared<Node>();
    n->kind = ExprKind::Number;
    n->value = v;
    return Expr(std::move(n));
  }
  static Expr boolean(bool b) {
    auto n = std::make_shared<Node>();
    n->kind = ExprKind::Boolean;
    n->value = b ? 1.0 : 0.0;
    return Expr(std::move(n));
  }
  static Expr variable(std::string name) {
    auto n = std::make_shared<Node>();
    n->kind = ExprKind::Variable;
    n->name = std::move(name);
    return Expr(std::move(n));
  }
  static Expr unary(UnaryOp op, Expr operand) {
    auto n = std::make_shared<Node>();
    n->kind = ExprKind::Unary;
    n->uop = op;
    n->children = {std::move(operand.node_), nullptr};
    return Expr(std::move(n));
  }
  static Expr binary(BinaryOp op, Expr lhs, Expr rhs) {
    auto n = std::make_shared<Node>();
    n->kind = ExprKind::Binary;
    n->bop = op;
    n->children = {std::move(lhs.node_), std::move(rhs.node_)};
    return Expr(std::move(n));
  }

  ExprKind kind() const { return node_->kind; }
  double number() const { return node_->value; }
  bool boolean() const { return node_->value != 0.0; }
  const std::string& name() const { return node_->name; }
  UnaryOp unary_op() const { return node_->uop; }
  BinaryOp binary_op() const { return node_->bop; }
  Expr operand() const { return Expr(node_->children[0]); }
  Expr lhs() const { return Expr(node_->children[0]); }
  Expr rhs() const { return Expr(node_->children[1]); }

  bool is_true_literal() const { return kind() == ExprKind::Boolean && boolean(); }

  friend bool operator==(const Expr& a, const Expr& b) { return equal(a.node_.get(), b.node_.get()); }
  friend bool operator!=(const Expr& a, const Expr& b) { return !(a == b); }

 private:
  struct Node {
    ExprKind kind = ExprKind::Number;
    double value = 0.0;
    std::string name;
    UnaryOp uop = UnaryOp::Neg;
    BinaryOp bop = BinaryOp::Add;
    std::array<std::shared_ptr<const Node>, 2> children;
  };

  explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

  static bool equal(const Node* a, const Node* b) {
    if (a == b) return true;
    if (a->kind != b->kind) return false;
    switch (a->kind) {
      case ExprKind::Number:
        // Bitwise-style comparison so that round-trips are checked exactly.
        return a->value == b->value && std::signbit(a->value) == std::signbit(b->value);
      case ExprKind::Boolean: return a->value == b->value;
      case ExprKind::Variable: return a->name == b->name;
      case ExprKind::Unary: return a->uop == b->uop && equal(a->children[0].get(), b->children[0].get());
      case ExprKind::Binary:
        return a->bop == b->bop && equal(a->children[0].get(), b->children[0].get()) &&
               equal(a->children[1].get(), b->children[1].get());
    }
    return false;
  }

  std::shared_ptr<const Node> node_;
};

// ---------------------------------------------------------------------------
// Printing

inline std::string format_number(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

inline const char* symbol(UnaryOp op) {
  switch (op) {
    case UnaryOp::Neg: return "-";
    case UnaryOp::Not: return "!";
    case UnaryOp::Abs: return "abs";
    case UnaryOp::Sin: return "sin";
    case UnaryOp::Cos: return "cos";
    case UnaryOp::Sqrt: return "sqrt";
  }
  return "?";
}

inline const char* symbol(BinaryOp op) {
  switch (op) {
    case BinaryOp::Add: return "+";
    case BinaryOp::Sub: return "-";
    case BinaryOp::Mul: return "*";
    case BinaryOp::Div: return "/";
    case BinaryOp::Min: return "min";
    case BinaryOp::Max: return "max";
    case BinaryOp::Lt: return "<";
    case BinaryOp::Le: return "<=";
    case BinaryOp::Gt: return ">";
    case BinaryOp::Ge: return ">=";
    case BinaryOp::Eq: return "==";
    case BinaryOp::Ne: return "!=";
    case BinaryOp::And: return "&&";
    case BinaryOp::Or: return "||";
  }
  return "?";
}

/// Canonical, fully parenthesized text. parse_expr(to_string(e)) == e.
inline std::string to_string(const Expr& e) {
  switch (e.kind()) {
    case ExprKind::Number: {
      const std::string s = format_number(e.number());
      return std::signbit(e.number()) ? "(" + s + ")" : s;
    }
    case ExprKind::Boolean: return e.boolean() ? "true" : "false";
    case ExprKind::Variable: return e.name();
    case ExprKind::Unary:
      switch (e.unary_op()) {
        case UnaryOp::Neg: return "(-" + to_string(e.operand()) + ")";
        case UnaryOp::Not: return "(!" + to_string(e.operand()) + ")";
        default: return std::string(symbol(e.unary_op())) + "(" + to_string(e.operand()) + ")";
      }
    case ExprKind::Binary:
      if (e.binary_op() == BinaryOp::Min || e.binary_op() == BinaryOp::Max) {
        return std::string(symbol(e.binary_op())) + "(" + to_string(e.lhs()) + ", " + to_string(e.rhs()) + ")";
      }
      return "(" + to_string(e.lhs()) + " " + symbol(e.binary_op()) + " " + to_string(e.rhs()) + ")";
  }
  return {};
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

class ExprParser {
 public:
  explicit ExprParser(TokenCursor& cur) : cur_(cur) {}

  Expr parse_or() {
    Expr lhs = parse_and();
    while (cur_.is_symbol("||") || cur_.is_word("or")) {
      cur_.next();
      lhs = Expr::binary(BinaryOp::Or, lhs, parse_and());
    }
    return lhs;
  }

  Expr parse_and() {
    Expr lhs = parse_not();
    while (cur_.is_symbol("&&") || cur_.is_word("and")) {
      cur_.next();
      lhs = Expr::binary(BinaryOp::And, lhs, parse_not());
    }
    return lhs;
  }

  Expr parse_not() {
    if (cur_.is_symbol("!") || cur_.is_word("not")) {
      cur_.next();
      return Expr::unary(UnaryOp::Not, parse_not());
    }
    return parse_comparison();
  }

  Expr parse_comparison() {
    Expr lhs = parse_additive();
    static constexpr std::pair<std::string_view, BinaryOp> ops[] = {
        {"<", BinaryOp::Lt}, {"<=", BinaryOp::Le}, {">", BinaryOp::Gt},
        {">=", BinaryOp::Ge}, {"==", BinaryOp::Eq}, {"!=", BinaryOp::Ne}};
    for (const auto& [text, op] : ops) {
      if (cur_.is_symbol(text)) {
        cur_.next();
        return Expr::binary(op, lhs, parse_additive());
      }
    }
    return lhs;
  }

  Expr parse_additive() {
    Expr lhs = parse_multiplicative();
    for (;;) {
      if (cur_.accept_symbol("+")) {
        lhs = Expr::binary(BinaryOp::Add, lhs, parse_multiplicative());
      } else if (cur_.accept_symbol("-")) {
        lhs = Expr::binary(BinaryOp::Sub, lhs, parse_multiplicative());
      } else {
        return lhs;
      }
    }
  }

  Expr parse_multiplicative() {
    Expr lhs = parse_unary();
    for (;;) {
      if (cur_.accept_symbol("*")) {
        lhs = Expr::binary(BinaryOp::Mul, lhs, parse_unary());
      } else if (cur_.accept_symbol("/")) {
        lhs = Expr::binary(BinaryOp::Div, lhs, parse_unary());
      } else {
        return lhs;
      }
    }
  }

  Expr parse_unary() {
    if (cur_.accept_symbol("-")) {
      Expr operand = parse_unary();
      // Negative literals fold so that printing and re-parsing is stable.
      if (operand.kind() == ExprKind::Number) return Expr::number(-operand.number());
      return Expr::unary(UnaryOp::Neg, operand);
    }
    return parse_primary();
  }

  Expr parse_primary() {
    const Token& t = cur_.peek();
    if (t.kind == TokenKind::Number) {
      cur_.next();
      return Expr::number(t.number);
    }
    if (t.kind == TokenKind::Identifier) {
      if (t.text == "true" || t.text == "false") {
        cur_.next();
        return Expr::boolean(t.text == "true");
      }
      if (is_reserved(t.text)) cur_.fail("expected an operand");
      const std::string name = t.text;
      cur_.next();
      if (cur_.accept_symbol("(")) return parse_call(name, t);
      return Expr::variable(name);
    }
    if (cur_.accept_symbol("(")) {
      Expr inner = parse_or();
      cur_.expect_symbol(")");
      return inner;
    }
    cur_.fail("expected an operand");
  }

  static bool is_reserved(std::string_view word) {
    return word == "and" || word == "or" || word == "not";
  }

 private:
  Expr parse_call(const std::string& name, const Token& at) {
    static constexpr std::pair<std::string_view, UnaryOp> unary_fns[] = {
        {"abs", UnaryOp::Abs}, {"sin", UnaryOp::Sin}, {"cos", UnaryOp::Cos}, {"sqrt", UnaryOp::Sqrt}};
    for (const auto& [fn, op] : unary_fns) {
      if (name == fn) {
        Expr arg = parse_or();
        cur_.expect_symbol(")");
        return Expr::unary(op, arg);
      }
    }
    if (name == "min" || name == "max") {
      Expr a = parse_or();
      cur_.expect_symbol(",");
      Expr b = parse_or();
      cur_.expect_symbol(")");
      return Expr::binary(name == "min" ? BinaryOp::Min : BinaryOp::Max, a, b);
    }
    throw ParseError("unknown function '" + name + "'", at.line, at.column);
  }

  TokenCursor& cur_;
};

}  // namespace detail

inline Expr parse_expr(std::string_view text) {
  detail::TokenCursor cur(detail::tokenize(text));
  detail::ExprParser parser(cur);
  Expr e = parser.parse_or();
  if (!cur.at_end()) cur.fail("unexpected trailing input");
  return e;
}

// ---------------------------------------------------------------------------
// Analysis

/// Returns the type of `e`, or nullopt when an operator receives a child of
/// the wrong type. `why` receives a description of the first mismatch.
inline std::optional<ExprType> type_of(const Expr& e, std::string* why = nullptr) {
  auto mismatch = [&](const std::string& msg) -> std::optional<ExprType> {
    if (why && why->empty()) *why = msg;
    return std::nullopt;
  };
  switch (e.kind()) {
    case ExprKind::Number:
    case ExprKind::Variable: return ExprType::Numeric;
    case ExprKind::Boolean: return ExprType::Boolean;
    case ExprKind::Unary: {
      const auto t = type_of(e.operand(), why);
      if (!t) return std::nullopt;
      if (e.unary_op() == UnaryOp::Not) {
        if (*t != ExprType::Boolean) return mismatch("'!' expects a boolean operand in " + to_string(e));
        return ExprType::Boolean;
      }
      if (*t != ExprType::Numeric) {
        return mismatch(std::string("'") + symbol(e.unary_op()) + "' expects a numeric operand in " + to_string(e));
      }
      return ExprType::Numeric;
    }
    case ExprKind::Binary: {
      const auto l = type_of(e.lhs(), why);
      const auto r = type_of(e.rhs(), why);
      if (!l || !r) return std::nullopt;
      switch (e.binary_op()) {
        case BinaryOp::And:
        case BinaryOp::Or:
          if (*l != ExprType::Boolean || *r != ExprType::Boolean) {
            return mismatch(std::string("'") + symbol(e.binary_op()) + "' expects boolean operands in " +
                            to_string(e));
          }
          return ExprType::Boolean;
        case BinaryOp::Lt:
        case BinaryOp::Le:
        case BinaryOp::Gt:
        case BinaryOp::Ge:
        case BinaryOp::Eq:
        case BinaryOp::Ne:
          if (*l != ExprType::Numeric || *r != ExprType::Numeric) {
            return mismatch(std::string("'") + symbol(e.binary_op()) + "' expects numeric operands in " +
                            to_string(e));
          }
          return ExprType::Boolean;
        default:
          if (*l != ExprType::Numeric || *r != ExprType::Numeric) {
            return mismatch(std::string("'") + symbol(e.binary_op()) + "' expects numeric operands in " +
                            to_string(e));
          }
          return ExprType::Numeric;
      }
    }
  }
  return std::nullopt;
}

inline void collect_variables(const Expr& e, std::set<std::string>& out) {
  switch (e.kind()) {
    case ExprKind::Variable: out.insert(e.name()); break;
    case ExprKind::Unary: collect_variables(e.operand(), out); break;
    case ExprKind::Binary:
      collect_variables(e.lhs(), out);
      collect_variables(e.rhs(), out);
      break;
    default: break;
  }
}

inline std::set<std::string> variables_of(const Expr& e) {
  std::set<std::string> out;
  collect_variables(e, out);
  return out;
}

inline bool references(const Expr& e, std::string_view name) {
  switch (e.kind()) {
    case ExprKind::Variable: return e.name() == name;
    case ExprKind::Unary: return references(e.operand(), name);
    case ExprKind::Binary: return references(e.lhs(), name) || references(e.rhs(), name);
    default: return false;
  }
}

/// Replaces every reference to `name` by `replacement`. The replacement is
/// inserted as a subtree and never rescanned, so `x -> 2*x` terminates.
inline Expr substitute(const Expr& e, std::string_view name, const Expr& replacement, int& count) {
  switch (e.kind()) {
    case ExprKind::Variable:
      if (e.name() == name) {
        ++count;
        return replacement;
      }
      return e;
    case ExprKind::Unary: {
      const int before = count;
      Expr op = substitute(e.operand(), name, replacement, count);
      return count == before ? e : Expr::unary(e.unary_op(), op);
    }
    case ExprKind::Binary: {
      const int before = count;
      Expr l = substitute(e.lhs(), name, replacement, count);
      Expr r = substitute(e.rhs(), name, replacement, count);
      return count == before ? e : Expr::binary(e.binary_op(), l, r);
    }
    default: return e;
  }
}

inline Expr substitute(const Expr& e, std::string_view name, const Expr& replacement) {
  int count = 0;
  return substitute(e, name, replacement, count);
}

// ---------------------------------------------------------------------------
// Evaluation

inline double apply(UnaryOp op, double x) {
  switch (op) {
    case UnaryOp::Neg: return -x;
    case UnaryOp::Not: return x != 0.0 ? 0.0 : 1.0;
    case UnaryOp::Abs: return std::fabs(x);
    case UnaryOp::Sin: return std::sin(x);
    case UnaryOp::Cos: return std::cos(x);
    case UnaryOp::Sqrt: return std::sqrt(x);
  }
  return 0.0;
}

inline double apply(BinaryOp op, double a, double b) {
  switch (op) {
    case BinaryOp::Add: return a + b;
    case BinaryOp::Sub: return a - b;
    case BinaryOp::Mul: return a * b;
    case BinaryOp::Div: return a / b;
    case BinaryOp::Min: return std::fmin(a, b);
    case BinaryOp::Max: return std::fmax(a, b);
    case BinaryOp::Lt: return a < b ? 1.0 : 0.0;
    case BinaryOp::Le: return a <= b ? 1.0 : 0.0;
    case BinaryOp::Gt: return a > b ? 1.0 : 0.0;
    case BinaryOp::Ge: return a >= b ? 1.0 : 0.0;
    case BinaryOp::Eq: return a == b ? 1.0 : 0.0;
    case BinaryOp::Ne: return a != b ? 1.0 : 0.0;
    case BinaryOp::And: return (a != 0.0 && b != 0.0) ? 1.0 : 0.0;
    case BinaryOp::Or: return (a != 0.0 || b != 0.0) ? 1.0 : 0.0;
  }
  return 0.0;
}

using Lookup = std::function<double(const std::string&)>;

/// Tree-walking evaluation; booleans are 0/1. Used for one-off evaluation
/// and as the reference for the compiled form.
inline double evaluate(const Expr& e, const Lookup& lookup) {
  switch (e.kind()) {
    case ExprKind::Number:
    case ExprKind::Boolean: return e.number();
    case ExprKind::Variable: return lookup(e.name());
    case ExprKind::Unary: return apply(e.unary_op(), evaluate(e.operand(), lookup));
    case ExprKind::Binary: return apply(e.binary_op(), evaluate(e.lhs(), lookup), evaluate(e.rhs(), lookup));
  }
  return 0.0;
}

/// Stack-machine form of an expression over a flat slot array. Variables
/// that resolve to a constant are folded at compile time.
class CompiledExpr {
 public:
  /// Slot resolution result: either an index into the slot array or a constant.
  struct Binding {
    int slot = -1;
    double constant = 0.0;
  };
  using Resolver = std::function<Binding(const std::string&)>;

  CompiledExpr() = default;

  CompiledExpr(const Expr& e, const Resolver& resolve) {
    emit(e, resolve);
    int depth = 0;
    for (const auto& ins : code_) {
      depth += ins.op == Op::Const || ins.op == Op::Load ? 1 : ins.op == Op::Binary ? -1 : 0;
      max_depth_ = std::max(max_depth_, depth);
    }
  }

  bool is_constant() const { return code_.size() == 1 && code_[0].op == Op::Const; }
  double constant_value() const { return code_.front().value; }

  double eval(const double* slots) const {
    if (max_depth_ <= kInlineDepth) {
      std::array<double, kInlineDepth> stack;
      return run(slots, stack.data());
    }
    std::vector<double> stack(static_cast<std::size_t>(max_depth_));
    return run(slots, stack.data());
  }

 private:
  static constexpr int kInlineDepth = 32;
  enum class Op : std::uint8_t { Const, Load, Unary, Binary };
  struct Instr {
    Op op;
    std::uint8_t sub;
    int slot;
    double value;
  };

  double run(const double* slots, double* stack) const {
    int sp = -1;
    for (const auto& ins : code_) {
      switch (ins.op) {
        case Op::Const: stack[++sp] = ins.value; break;
        case Op::Load: stack[++sp] = slots[ins.slot]; break;
        case Op::Unary: stack[sp] = apply(static_cast<UnaryOp>(ins.sub), stack[sp]); break;
        case Op::Binary:
          --sp;
          stack[sp] = apply(static_cast<BinaryOp>(ins.sub), stack[sp], stack[sp + 1]);
          break;
      }
    }
    return stack[0];
  }

  void emit(const Expr& e, const Resolver& resolve) {
    switch (e.kind()) {
      case ExprKind::Number:
      case ExprKind::Boolean: code_.push_back({Op::Const, 0, -1, e.number()}); break;
      case ExprKind::Variable: {
        const Binding b = resolve(e.name());
        if (b.slot >= 0) {
          code_.push_back({Op::Load, 0, b.slot, 0.0});
        } else {
          code_.push_back({Op::Const, 0, -1, b.constant});
        }
        break;
      }
      case ExprKind::Unary: {
        emit(e.operand(), resolve);
        if (code_.back().op == Op::Const) {
          code_.back().value = apply(e.unary_op(), code_.back().value);
        } else {
          code_.push_back({Op::Unary, static_cast<std::uint8_t>(e.unary_op()), -1, 0.0});
        }
        break;
      }
      case ExprKind::Binary: {
        const std::size_t start = code_.size();
        emit(e.lhs(), resolve);
        const bool lhs_const = code_.size() == start + 1 && code_.back().op == Op::Const;
        const std::size_t mid = code_.size();
        emit(e.rhs(), resolve);
        const bool rhs_const = code_.size() == mid + 1 && code_.back().op == Op::Const;
        if (lhs_const && rhs_const) {
          const double v = apply(e.binary_op(), code_[start].value, code_[mid].value);
          code_.resize(start);
          code_.push_back({Op::Const, 0, -1, v});
        } else {
          code_.push_back({Op::Binary, static_cast<std::uint8_t>(e.binary_op()), -1, 0.0});
        }
        break;
      }
    }
  }

  std::vector<Instr> code_;
  int max_depth_ = 0;
};

}  // namespace reaffirm
