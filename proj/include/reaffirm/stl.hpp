#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "reaffirm/error.hpp"
#include "reaffirm/expr.hpp"
#include "reaffirm/lexer.hpp"
#include "reaffirm/sim.hpp"

namespace reaffirm::stl {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Kind { Atom, Not, And, Or, Implies, Globally, Eventually };

class Formula;
using FormulaPtr = std::shared_ptr<const Formula>;

/// Immutable STL syntax tree. Atoms hold a numeric margin: the atom holds
/// where the margin is positive.
class Formula {
 public:
  static FormulaPtr atom(Expr margin) {
    auto f = std::make_shared<Formula>(Kind::Atom);
    f->margin_ = std::move(margin);
    return f;
  }
  static FormulaPtr negation(FormulaPtr child) {
    auto f = std::make_shared<Formula>(Kind::Not);
    f->children_ = {std::move(child)};
    return f;
  }
  static FormulaPtr binary(Kind kind, FormulaPtr lhs, FormulaPtr rhs) {
    if (kind != Kind::And && kind != Kind::Or && kind != Kind::Implies) {
      throw std::invalid_argument("not a binary connective");
    }
    auto f = std::make_shared<Formula>(kind);
    f->children_ = {std::move(lhs), std::move(rhs)};
    return f;
  }
  static FormulaPtr temporal(Kind kind, double a, double b, FormulaPtr child) {
    if (kind != Kind::Globally && kind != Kind::Eventually) throw std::invalid_argument("not a temporal operator");
    if (!(a >= 0.0) || !(b >= a) || std::isinf(a)) throw std::invalid_argument("interval must satisfy 0 <= a <= b");
    auto f = std::make_shared<Formula>(kind);
    f->a_ = a;
    f->b_ = b;
    f->children_ = {std::move(child)};
    return f;
  }

  explicit Formula(Kind kind) : kind_(kind) {}

  Kind kind() const { return kind_; }
  const Expr& margin() const { return margin_; }
  const Formula& child(std::size_t i = 0) const { return *children_.at(i); }
  const FormulaPtr& child_ptr(std::size_t i = 0) const { return children_.at(i); }
  std::size_t arity() const { return children_.size(); }
  double lower() const { return a_; }
  double upper() const { return b_; }

 private:
  Kind kind_;
  Expr margin_ = Expr::number(0.0);
  std::vector<FormulaPtr> children_;
  double a_ = 0.0;
  double b_ = 0.0;
};

inline std::string to_string(const Formula& f) {
  switch (f.kind()) {
    case Kind::Atom: return "(" + reaffirm::to_string(f.margin()) + " > 0)";
    case Kind::Not: return "not " + to_string(f.child());
    case Kind::And: return "(" + to_string(f.child(0)) + " and " + to_string(f.child(1)) + ")";
    case Kind::Or: return "(" + to_string(f.child(0)) + " or " + to_string(f.child(1)) + ")";
    case Kind::Implies: return "(" + to_string(f.child(0)) + " => " + to_string(f.child(1)) + ")";
    case Kind::Globally:
    case Kind::Eventually: {
      const std::string hi = std::isinf(f.upper()) ? "inf" : format_number(f.upper());
      return std::string(f.kind() == Kind::Globally ? "G" : "F") + "[" + format_number(f.lower()) + "," + hi +
             "] " + to_string(f.child());
    }
  }
  return "";
}

/// Time needed beyond the evaluation instant. Unbounded windows only need
/// their lower bound since they are cut at the end of the trace.
inline double required_horizon(const Formula& f) {
  switch (f.kind()) {
    case Kind::Atom: return 0.0;
    case Kind::Not: return required_horizon(f.child());
    case Kind::And:
    case Kind::Or:
    case Kind::Implies: return std::max(required_horizon(f.child(0)), required_horizon(f.child(1)));
    case Kind::Globally:
    case Kind::Eventually:
      return (std::isinf(f.upper()) ? f.lower() : f.upper()) + required_horizon(f.child());
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

using reaffirm::detail::ExprParser;
using reaffirm::detail::TokenCursor;
using reaffirm::detail::TokenKind;

/// Turns `lhs op rhs` into a signed margin.
inline Expr comparison_margin(BinaryOp op, const Expr& lhs, const Expr& rhs) {
  switch (op) {
    case BinaryOp::Gt:
    case BinaryOp::Ge: return Expr::binary(BinaryOp::Sub, lhs, rhs);
    case BinaryOp::Lt:
    case BinaryOp::Le: return Expr::binary(BinaryOp::Sub, rhs, lhs);
    case BinaryOp::Eq:
      return Expr::unary(UnaryOp::Neg, Expr::unary(UnaryOp::Abs, Expr::binary(BinaryOp::Sub, lhs, rhs)));
    case BinaryOp::Ne: return Expr::unary(UnaryOp::Abs, Expr::binary(BinaryOp::Sub, lhs, rhs));
    default: break;
  }
  throw std::invalid_argument("not a comparison");
}

class Parser {
 public:
  explicit Parser(TokenCursor& cur) : cur_(cur) {}

  FormulaPtr parse_implies() {
    FormulaPtr lhs = parse_or();
    if (cur_.accept_symbol("=>") || cur_.accept_symbol("->")) {
      return Formula::binary(Kind::Implies, lhs, parse_implies());
    }
    return lhs;
  }

 private:
  FormulaPtr parse_or() {
    FormulaPtr lhs = parse_and();
    while (cur_.is_symbol("||") || cur_.is_word("or")) {
      cur_.next();
      lhs = Formula::binary(Kind::Or, lhs, parse_and());
    }
    return lhs;
  }

  FormulaPtr parse_and() {
    FormulaPtr lhs = parse_unary();
    while (cur_.is_symbol("&&") || cur_.is_word("and")) {
      cur_.next();
      lhs = Formula::binary(Kind::And, lhs, parse_unary());
    }
    return lhs;
  }

  FormulaPtr parse_unary() {
    if (cur_.is_word("not") || (cur_.is_symbol("!") && !cur_.is_symbol("=", 1))) {
      cur_.next();
      return Formula::negation(parse_unary());
    }
    if ((cur_.is_word("G") || cur_.is_word("F")) && cur_.is_symbol("[", 1)) {
      const Kind kind = cur_.peek().text == "G" ? Kind::Globally : Kind::Eventually;
      cur_.next();
      cur_.next();
      const double a = parse_bound(false);
      cur_.expect_symbol(",");
      const double b = parse_bound(true);
      if (b < a) cur_.fail("interval upper bound is below the lower bound");
      cur_.expect_symbol("]");
      return Formula::temporal(kind, a, b, parse_unary());
    }
    return parse_primary();
  }

  double parse_bound(bool allow_inf) {
    const auto& t = cur_.peek();
    if (t.kind == TokenKind::Number) {
      cur_.next();
      return t.number;
    }
    if (allow_inf && cur_.is_word("inf")) {
      cur_.next();
      return kInf;
    }
    if (t.kind == TokenKind::Identifier) cur_.fail("time bounds must be numeric");
    cur_.fail("expected a time bound");
  }

  static bool continues_expression(const TokenCursor& cur) {
    static constexpr std::string_view ops[] = {"+", "-", "*", "/", "<", "<=", ">", ">=", "==", "!="};
    for (auto op : ops) {
      if (cur.is_symbol(op)) return true;
    }
    return false;
  }

  // A parenthesis opens either a sub-formula or an arithmetic group such as
  // `(a + b) > c`; try the former and fall back when an operator follows.
  FormulaPtr parse_primary() {
    if (cur_.is_symbol("(")) {
      const std::size_t start = cur_.position();
      try {
        cur_.next();
        FormulaPtr inner = parse_implies();
        cur_.expect_symbol(")");
        if (!continues_expression(cur_)) return inner;
      } catch (const ParseError&) {
      }
      cur_.rewind(start);
    }
    return parse_atom();
  }

  FormulaPtr parse_atom() {
    ExprParser expr(cur_);
    Expr lhs = expr.parse_additive();
    static constexpr std::pair<std::string_view, BinaryOp> ops[] = {
        {"<", BinaryOp::Lt}, {"<=", BinaryOp::Le}, {">", BinaryOp::Gt},
        {">=", BinaryOp::Ge}, {"==", BinaryOp::Eq}, {"!=", BinaryOp::Ne}};
    for (const auto& [text, op] : ops) {
      if (cur_.is_symbol(text)) {
        cur_.next();
        return Formula::atom(comparison_margin(op, lhs, expr.parse_additive()));
      }
    }
    if (lhs.kind() == ExprKind::Binary) {
      switch (lhs.binary_op()) {
        case BinaryOp::Lt:
        case BinaryOp::Le:
        case BinaryOp::Gt:
        case BinaryOp::Ge:
        case BinaryOp::Eq:
        case BinaryOp::Ne: return Formula::atom(comparison_margin(lhs.binary_op(), lhs.lhs(), lhs.rhs()));
        default: break;
      }
    }
    return Formula::atom(lhs);
  }

  TokenCursor& cur_;
};

}  // namespace detail

/// Parses one formula. Time bounds must be numeric literals or `inf`.
inline FormulaPtr parse_stl(std::string_view text) {
  reaffirm::detail::TokenCursor cur(reaffirm::detail::tokenize(text));
  if (cur.at_end()) cur.fail("expected a formula");
  detail::Parser parser(cur);
  FormulaPtr f = parser.parse_implies();
  if (!cur.at_end()) cur.fail("unexpected trailing input");
  return f;
}

/// Replaces whole-word identifiers with numbers, e.g. a horizon `T`.
inline std::string substitute_constants(std::string_view text, const std::map<std::string, double>& constants) {
  std::string out;
  std::size_t i = 0;
  auto word_char = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  while (i < text.size()) {
    const char c = text[i];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < text.size() && word_char(text[j])) ++j;
      const std::string word(text.substr(i, j - i));
      const auto it = constants.find(word);
      out += it == constants.end() ? word : format_number(it->second);
      i = j;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      // Skip numeric literals whole so exponents like 1e3 are not split.
      std::size_t j = i;
      while (j < text.size() && (word_char(text[j]) || text[j] == '.' ||
                                 ((text[j] == '+' || text[j] == '-') && (text[j - 1] == 'e' || text[j - 1] == 'E')))) {
        ++j;
      }
      out += text.substr(i, j - i);
      i = j;
    } else {
      out += c;
      ++i;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Robustness

enum class Verdict { Satisfied, Violated };

inline const char* to_string(Verdict v) { return v == Verdict::Satisfied ? "Satisfied" : "Violated"; }

struct Robustness {
  double value = 0.0;
  Verdict verdict = Verdict::Violated;
};

inline Verdict verdict_of(double rho) { return rho > 0.0 ? Verdict::Satisfied : Verdict::Violated; }

enum class StlErrorKind { HorizonTooShort, UnknownSignal, EmptyTrace };

class StlError : public std::runtime_error {
 public:
  StlError(StlErrorKind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  StlErrorKind kind() const noexcept { return kind_; }

 private:
  StlErrorKind kind_;
};

namespace detail {

/// Linear interpolation of a sampled signal at s, with s inside the sample range.
inline double interpolate(const std::vector<double>& times, const std::vector<double>& v, double s) {
  const auto it = std::upper_bound(times.begin(), times.end(), s);
  if (it == times.begin()) return v.front();
  if (it == times.end()) return v.back();
  const std::size_t i1 = static_cast<std::size_t>(it - times.begin());
  const std::size_t i0 = i1 - 1;
  const double t0 = times[i0];
  const double t1 = times[i1];
  if (s == t0 || t1 == t0) return v[i0];
  const double alpha = (s - t0) / (t1 - t0);
  return v[i0] + (v[i1] - v[i0]) * alpha;
}

/// Windowed min (G) or max (F) of a sampled signal, evaluated at every
/// sample time with a monotonic deque.
inline std::vector<double> sliding(const std::vector<double>& times, const std::vector<double>& v, double a,
                                   double b, bool take_min) {
  const std::size_t n = times.size();
  const double end = times.back();
  auto better = [take_min](double x, double y) { return take_min ? x <= y : x >= y; };
  auto pick = [take_min](double x, double y) { return take_min ? std::min(x, y) : std::max(x, y); };
  std::vector<double> out(n);
  std::deque<std::size_t> window;
  std::size_t next = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double lo = std::min(times[k] + a, end);
    const double hi = std::min(times[k] + b, end);
    while (next < n && times[next] <= hi) {
      while (!window.empty() && better(v[next], v[window.back()])) window.pop_back();
      window.push_back(next);
      ++next;
    }
    while (!window.empty() && times[window.front()] < lo) window.pop_front();
    double r = pick(interpolate(times, v, lo), interpolate(times, v, hi));
    if (!window.empty()) r = pick(r, v[window.front()]);
    out[k] = r;
  }
  return out;
}

inline std::vector<double> atom_signal(const Trace& trace, const Expr& margin) {
  const CompiledExpr code(margin, [&](const std::string& name) {
    CompiledExpr::Binding b;
    if (const auto col = trace.column(name)) {
      b.slot = static_cast<int>(*col);
      return b;
    }
    if (const auto it = trace.params.find(name); it != trace.params.end()) {
      b.constant = it->second;
      return b;
    }
    throw StlError(StlErrorKind::UnknownSignal, "formula references '" + name + "', which is not in the trace");
  });
  std::vector<double> out(trace.size());
  for (std::size_t k = 0; k < trace.size(); ++k) out[k] = code.eval(trace.row(k));
  return out;
}

inline std::vector<double> signal(const Trace& trace, const Formula& f) {
  switch (f.kind()) {
    case Kind::Atom: return atom_signal(trace, f.margin());
    case Kind::Not: {
      auto v = signal(trace, f.child());
      for (auto& x : v) x = -x;
      return v;
    }
    case Kind::And:
    case Kind::Or:
    case Kind::Implies: {
      auto lhs = signal(trace, f.child(0));
      const auto rhs = signal(trace, f.child(1));
      for (std::size_t k = 0; k < lhs.size(); ++k) {
        if (f.kind() == Kind::And) {
          lhs[k] = std::min(lhs[k], rhs[k]);
        } else if (f.kind() == Kind::Or) {
          lhs[k] = std::max(lhs[k], rhs[k]);
        } else {
          lhs[k] = std::max(-lhs[k], rhs[k]);
        }
      }
      return lhs;
    }
    case Kind::Globally:
    case Kind::Eventually:
      return sliding(trace.times, signal(trace, f.child()), f.lower(), f.upper(), f.kind() == Kind::Globally);
  }
  return {};
}

}  // namespace detail

/// Robustness of f at every sample time of the trace. Windows reaching past
/// the last sample are cut there.
inline std::vector<double> robustness_signal(const Trace& trace, const Formula& f) {
  if (trace.size() == 0) throw StlError(StlErrorKind::EmptyTrace, "cannot monitor an empty trace");
  return detail::signal(trace, f);
}

/// Robustness at the first sample of the trace.
inline Robustness robustness(const Trace& trace, const Formula& f) {
  if (trace.size() == 0) throw StlError(StlErrorKind::EmptyTrace, "cannot monitor an empty trace");
  const double span = trace.times.back() - trace.times.front();
  const double need = required_horizon(f);
  if (need > span + 1e-9 * std::max(1.0, span)) {
    throw StlError(StlErrorKind::HorizonTooShort, "formula needs a horizon of " + format_number(need) +
                                                      " but the trace covers " + format_number(span));
  }
  const double rho = detail::signal(trace, f).front();
  return {rho, verdict_of(rho)};
}

}  // namespace reaffirm::stl
