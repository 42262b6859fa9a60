#pragma once

// Hybrid-automaton data model and the structural edits used by resiliency
// patterns.

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "reaffirm/error.hpp"
#include "reaffirm/expr.hpp"

namespace reaffirm {

enum class VarKind { State, Param, Input, Local };

inline const char* to_string(VarKind k) {
  switch (k) {
    case VarKind::State: return "state";
    case VarKind::Param: return "param";
    case VarKind::Input: return "input";
    case VarKind::Local: return "local";
  }
  return "?";
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Unset (inputs, unbound params), an interval (states) or a fixed value.
using VarInit = std::variant<std::monostate, Interval, double>;

struct Variable {
  std::string name;
  VarKind kind = VarKind::State;
  VarInit init;
  /// State only: when non-empty, `init` is an offset interval relative to
  /// the sampled initial value of the named state.
  std::string relative_to;

  friend bool operator==(const Variable&, const Variable&) = default;
};

struct Mode {
  int id = 0;
  std::string name;
  Expr invariant;
  std::map<std::string, Expr> flow;
  std::optional<int> copy_of;

  friend bool operator==(const Mode&, const Mode&) = default;
};

struct Transition {
  int id = 0;
  int source = 0;
  int destination = 0;
  Expr guard;
  std::map<std::string, Expr> reset;
  int priority = 1;

  friend bool operator==(const Transition&, const Transition&) = default;
};

struct Diagnostic {
  std::string path;
  std::string message;
};

/// Where `replace` substitutes.
struct FlowOf {
  int mode;
};
struct GuardOf {
  int transition;
};
struct WholeModel {};
using ReplaceScope = std::variant<FlowOf, GuardOf, WholeModel>;

inline bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

class HybridModel {
 public:
  std::string name;
  std::vector<Variable> variables;
  std::vector<Mode> modes;
  std::vector<Transition> transitions;
  int initial_mode = 0;

  // ---- lookup ------------------------------------------------------------

  const Variable* find_variable(std::string_view var) const {
    for (const auto& v : variables) {
      if (v.name == var) return &v;
    }
    return nullptr;
  }
  Variable* find_variable(std::string_view var) {
    return const_cast<Variable*>(std::as_const(*this).find_variable(var));
  }
  const Mode* find_mode(int id) const {
    for (const auto& m : modes) {
      if (m.id == id) return &m;
    }
    return nullptr;
  }
  Mode* find_mode(int id) { return const_cast<Mode*>(std::as_const(*this).find_mode(id)); }
  const Transition* find_transition(int id) const {
    for (const auto& t : transitions) {
      if (t.id == id) return &t;
    }
    return nullptr;
  }
  Transition* find_transition(int id) {
    return const_cast<Transition*>(std::as_const(*this).find_transition(id));
  }

  const Mode& mode(int id) const {
    if (const Mode* m = find_mode(id)) return *m;
    throw ModelError(ErrorKind::UnknownElement, "no mode with id " + std::to_string(id));
  }
  Mode& mode(int id) { return const_cast<Mode&>(std::as_const(*this).mode(id)); }
  const Transition& transition(int id) const {
    if (const Transition* t = find_transition(id)) return *t;
    throw ModelError(ErrorKind::UnknownElement, "no transition with id " + std::to_string(id));
  }
  Transition& transition(int id) { return const_cast<Transition&>(std::as_const(*this).transition(id)); }

  const Mode* find_mode_by_name(std::string_view n) const {
    for (const auto& m : modes) {
      if (m.name == n) return &m;
    }
    return nullptr;
  }

  std::vector<std::string> names_of_kind(VarKind kind) const {
    std::vector<std::string> out;
    for (const auto& v : variables) {
      if (v.kind == kind) out.push_back(v.name);
    }
    return out;
  }

  /// Outgoing transitions of `mode_id`, highest priority (lowest number) first.
  std::vector<const Transition*> outgoing(int mode_id) const {
    std::vector<const Transition*> out;
    for (const auto& t : transitions) {
      if (t.source == mode_id) out.push_back(&t);
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const Transition* a, const Transition* b) { return a->priority < b->priority; });
    return out;
  }

  int next_mode_id() const { return next_mode_id_; }
  int next_transition_id() const { return next_transition_id_; }

  /// Recomputes the fresh-id counters from the current elements. Called by
  /// builders and the deserializer after populating modes/transitions.
  void sync_ids() {
    next_mode_id_ = 1;
    for (const auto& m : modes) next_mode_id_ = std::max(next_mode_id_, m.id + 1);
    next_transition_id_ = 1;
    for (const auto& t : transitions) next_transition_id_ = std::max(next_transition_id_, t.id + 1);
  }

  // ---- construction helpers ---------------------------------------------

  int add_mode(std::string mode_name, std::map<std::string, Expr> flow, Expr invariant = Expr()) {
    Mode m;
    m.id = next_mode_id_++;
    m.name = std::move(mode_name);
    m.flow = std::move(flow);
    m.invariant = std::move(invariant);
    modes.push_back(std::move(m));
    return modes.back().id;
  }

  int add_transition(int src, int dst, Expr guard, std::map<std::string, Expr> reset, int priority) {
    Transition t;
    t.id = next_transition_id_++;
    t.source = src;
    t.destination = dst;
    t.guard = std::move(guard);
    t.reset = std::move(reset);
    t.priority = priority;
    transitions.push_back(std::move(t));
    return transitions.back().id;
  }

  // ---- edit operations ---------------------------------------------------

  HybridModel copy_model() const { return *this; }

  Variable& add_param(const std::string& var) {
    declare(var, VarKind::Param, std::monostate{});
    return variables.back();
  }

  Variable& add_local_var(const std::string& var) {
    declare(var, VarKind::Local, 0.0);
    return variables.back();
  }

  /// Duplicates mode `source_id` (flow and invariant, no transitions) and
  /// returns the id of the copy.
  int add_mode_copy(int source_id) {
    const Mode original = mode(source_id);
    int k = 1;
    for (const auto& m : modes) {
      if (m.copy_of == source_id) ++k;
    }
    std::string copy_name = original.name + "_copy" + std::to_string(k);
    while (find_mode_by_name(copy_name)) copy_name = original.name + "_copy" + std::to_string(++k);
    Mode copy = original;
    copy.id = next_mode_id_++;
    copy.name = std::move(copy_name);
    copy.copy_of = source_id;
    modes.push_back(std::move(copy));
    return modes.back().id;
  }

  const Mode& get_copy_mode(int source_id) const {
    const Mode* found = nullptr;
    int count = 0;
    for (const auto& m : modes) {
      if (m.copy_of == source_id) {
        found = &m;
        ++count;
      }
    }
    if (count == 0) {
      throw ModelError(ErrorKind::NoCopy, "mode " + describe_mode(source_id) + " has no copy");
    }
    if (count > 1) {
      throw ModelError(ErrorKind::Ambiguous,
                       "mode " + describe_mode(source_id) + " has " + std::to_string(count) + " copies");
    }
    return *found;
  }

  /// Adds a transition with an empty reset at the lowest priority of `src`.
  int add_transition(int src, int dst, std::string_view guard_text) {
    mode(src);
    mode(dst);
    Expr guard = parse_checked(guard_text, ExprType::Boolean, "guard");
    int max_priority = 0;
    for (const auto& t : transitions) {
      if (t.source == src) max_priority = std::max(max_priority, t.priority);
    }
    return add_transition(src, dst, std::move(guard), {}, max_priority + 1);
  }

  /// Substitutes `new_text` for variable `old` within `scope`; returns the
  /// number of substituted references.
  int replace(const ReplaceScope& scope, std::string_view old, std::string_view new_text) {
    if (!find_variable(old)) {
      throw ModelError(ErrorKind::UnresolvedName, "'" + std::string(old) + "' is not a declared variable");
    }
    const Expr repl = parse_checked(new_text, ExprType::Numeric, "replacement");
    int count = 0;
    auto in_map = [&](std::map<std::string, Expr>& m) {
      for (auto& [_, e] : m) e = substitute(e, old, repl, count);
    };
    if (const auto* f = std::get_if<FlowOf>(&scope)) {
      in_map(mode(f->mode).flow);
    } else if (const auto* g = std::get_if<GuardOf>(&scope)) {
      Transition& t = transition(g->transition);
      t.guard = substitute(t.guard, old, repl, count);
    } else {
      for (auto& m : modes) {
        in_map(m.flow);
        m.invariant = substitute(m.invariant, old, repl, count);
      }
      for (auto& t : transitions) {
        t.guard = substitute(t.guard, old, repl, count);
        in_map(t.reset);
      }
    }
    return count;
  }

  /// `decl` has the form "<var>_dot = <expr>".
  void add_flow(int mode_id, std::string_view decl) {
    Mode& m = mode(mode_id);
    auto [lhs, rhs] = split_assignment(decl);
    constexpr std::string_view suffix = "_dot";
    if (lhs.size() <= suffix.size() || lhs.substr(lhs.size() - suffix.size()) != suffix) {
      throw ParseError("flow declaration must have the form '<var>_dot = <expr>'", 1, 1);
    }
    const std::string var(lhs.substr(0, lhs.size() - suffix.size()));
    require_integrated(var, "flow");
    Expr e = parse_checked(rhs, ExprType::Numeric, "flow");
    if (m.flow.count(var)) {
      throw ModelError(ErrorKind::DuplicateFlow, "mode '" + m.name + "' already has a flow for '" + var + "'");
    }
    m.flow.emplace(var, std::move(e));
  }

  /// Conjoins (`&&`) or disjoins (`||`) `clause` onto the guard at top level.
  void add_guard_label(int transition_id, std::string_view connective, std::string_view clause) {
    Transition& t = transition(transition_id);
    BinaryOp op;
    if (connective == "&&" || connective == "and") {
      op = BinaryOp::And;
    } else if (connective == "||" || connective == "or") {
      op = BinaryOp::Or;
    } else {
      throw ParseError("connective must be '&&' or '||', got '" + std::string(connective) + "'", 1, 1);
    }
    Expr c = parse_checked(clause, ExprType::Boolean, "guard clause");
    t.guard = Expr::binary(op, t.guard, c);
  }

  /// `decl` has the form "<var> = <expr>"; the expression reads the pre-state.
  void add_reset_label(int transition_id, std::string_view decl) {
    Transition& t = transition(transition_id);
    auto [lhs, rhs] = split_assignment(decl);
    const std::string var(lhs);
    require_integrated(var, "reset");
    Expr e = parse_checked(rhs, ExprType::Numeric, "reset");
    if (t.reset.count(var)) {
      throw ModelError(ErrorKind::DuplicateReset,
                       "transition " + std::to_string(t.id) + " already resets '" + var + "'");
    }
    t.reset.emplace(var, std::move(e));
  }

  /// Parses `text`, checks its type and that every name is declared.
  Expr parse_checked(std::string_view text, ExprType expected, std::string_view what) const {
    Expr e = parse_expr(text);
    for (const auto& v : variables_of(e)) {
      if (!find_variable(v)) {
        throw ModelError(ErrorKind::UnresolvedName,
                         std::string(what) + " '" + std::string(text) + "' references undeclared '" + v + "'");
      }
    }
    std::string why;
    const auto t = type_of(e, &why);
    if (!t) throw ModelError(ErrorKind::Type, std::string(what) + ": " + why);
    if (*t != expected) {
      throw ModelError(ErrorKind::Type, std::string(what) + " '" + std::string(text) + "' must be " +
                                            (expected == ExprType::Boolean ? "boolean" : "numeric"));
    }
    return e;
  }

  std::string describe_mode(int id) const {
    const Mode* m = find_mode(id);
    return m ? "'" + m->name + "' (id " + std::to_string(id) + ")" : "#" + std::to_string(id);
  }

  friend bool operator==(const HybridModel& a, const HybridModel& b) {
    return a.name == b.name && a.variables == b.variables && a.modes == b.modes &&
           a.transitions == b.transitions && a.initial_mode == b.initial_mode;
  }

 private:
  void declare(const std::string& var, VarKind kind, VarInit init) {
    if (!is_identifier(var)) {
      throw ModelError(ErrorKind::Parse, "'" + var + "' is not a valid identifier");
    }
    if (find_variable(var)) {
      throw ModelError(ErrorKind::DuplicateName, "variable '" + var + "' is already declared");
    }
    variables.push_back(Variable{var, kind, std::move(init), {}});
  }

  void require_integrated(const std::string& var, std::string_view what) const {
    const Variable* v = find_variable(var);
    if (!v) throw ModelError(ErrorKind::UnresolvedName, std::string(what) + " target '" + var + "' is undeclared");
    if (v->kind != VarKind::State && v->kind != VarKind::Local) {
      throw ModelError(ErrorKind::Type, std::string(what) + " target '" + var + "' must be a state or local variable");
    }
  }

  static std::pair<std::string_view, std::string_view> split_assignment(std::string_view decl) {
    const auto trim = [](std::string_view s) {
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
      return s;
    };
    const auto eq = decl.find('=');
    if (eq == std::string_view::npos || (eq + 1 < decl.size() && decl[eq + 1] == '=')) {
      throw ParseError("expected '<name> = <expr>'", 1, 1);
    }
    const auto lhs = trim(decl.substr(0, eq));
    const auto rhs = trim(decl.substr(eq + 1));
    if (!is_identifier(lhs)) throw ParseError("expected a variable name before '='", 1, 1);
    if (rhs.empty()) throw ParseError("expected an expression after '='", 1, eq + 2);
    return {lhs, rhs};
  }

  int next_mode_id_ = 1;
  int next_transition_id_ = 1;
};

// ---------------------------------------------------------------------------
// Validation

inline std::vector<Diagnostic> validate(const HybridModel& model) {
  std::vector<Diagnostic> out;
  auto report = [&](std::string path, std::string msg) { out.push_back({std::move(path), std::move(msg)}); };

  std::set<std::string> seen;
  for (std::size_t i = 0; i < model.variables.size(); ++i) {
    const Variable& v = model.variables[i];
    const std::string path = "variables[" + v.name + "]";
    if (!is_identifier(v.name)) report(path, "invalid identifier '" + v.name + "'");
    if (!seen.insert(v.name).second) report(path, "duplicate variable name '" + v.name + "'");
    switch (v.kind) {
      case VarKind::State:
        if (const auto* iv = std::get_if<Interval>(&v.init)) {
          if (!(iv->lo <= iv->hi)) report(path + ".init", "interval lower bound exceeds upper bound");
        } else {
          report(path + ".init", "state variable needs an initial interval");
        }
        if (!v.relative_to.empty()) {
          const Variable* base = model.find_variable(v.relative_to);
          if (!base || base->kind != VarKind::State || !base->relative_to.empty()) {
            report(path + ".relative_to", "'" + v.relative_to + "' must be an absolute state variable");
          }
        }
        break;
      case VarKind::Param:
        if (std::holds_alternative<Interval>(v.init)) report(path + ".init", "parameter takes a single value");
        break;
      case VarKind::Local:
        if (!std::holds_alternative<double>(v.init)) report(path + ".init", "local variable needs a value");
        break;
      case VarKind::Input:
        if (!std::holds_alternative<std::monostate>(v.init)) {
          report(path + ".init", "input variables are bound to signals, not values");
        }
        break;
    }
    if (v.kind != VarKind::State && !v.relative_to.empty()) {
      report(path + ".relative_to", "only state variables may have a relative init");
    }
  }

  auto check_expr = [&](const std::string& path, const Expr& e, ExprType expected) {
    for (const auto& name : variables_of(e)) {
      if (!model.find_variable(name)) report(path, "unresolved reference '" + name + "'");
    }
    std::string why;
    const auto t = type_of(e, &why);
    if (!t) {
      report(path, why);
    } else if (*t != expected) {
      report(path, std::string("expected a ") + (expected == ExprType::Boolean ? "boolean" : "numeric") +
                       " expression, got " + to_string(e));
    }
  };
  auto check_targets = [&](const std::string& path, const std::map<std::string, Expr>& m) {
    for (const auto& [var, e] : m) {
      const Variable* v = model.find_variable(var);
      if (!v) {
        report(path + "[" + var + "]", "unresolved target '" + var + "'");
      } else if (v->kind != VarKind::State && v->kind != VarKind::Local) {
        report(path + "[" + var + "]", "'" + var + "' is not a state or local variable");
      }
      check_expr(path + "[" + var + "]", e, ExprType::Numeric);
    }
  };

  std::set<int> mode_ids;
  std::set<std::string> mode_names;
  for (const auto& m : model.modes) {
    const std::string path = "modes[id=" + std::to_string(m.id) + "]";
    if (!mode_ids.insert(m.id).second) report(path, "duplicate mode id");
    if (!mode_names.insert(m.name).second) report(path, "duplicate mode name '" + m.name + "'");
    if (!is_identifier(m.name)) report(path, "invalid mode name '" + m.name + "'");
    check_expr(path + ".invariant", m.invariant, ExprType::Boolean);
    check_targets(path + ".flow", m.flow);
    for (const auto& v : model.variables) {
      if (v.kind == VarKind::State && !m.flow.count(v.name)) {
        report(path + ".flow", "missing derivative for state '" + v.name + "'");
      }
    }
    if (m.copy_of && !model.find_mode(*m.copy_of)) {
      report(path + ".copy_of", "refers to missing mode " + std::to_string(*m.copy_of));
    }
  }

  std::set<int> transition_ids;
  std::map<int, std::set<int>> priorities;
  for (const auto& t : model.transitions) {
    const std::string path = "transitions[id=" + std::to_string(t.id) + "]";
    if (!transition_ids.insert(t.id).second) report(path, "duplicate transition id");
    if (!model.find_mode(t.source)) report(path + ".source", "refers to missing mode " + std::to_string(t.source));
    if (!model.find_mode(t.destination)) {
      report(path + ".destination", "refers to missing mode " + std::to_string(t.destination));
    }
    if (t.priority < 1) report(path + ".priority", "priority must be a positive integer");
    if (!priorities[t.source].insert(t.priority).second) {
      report(path + ".priority", "duplicate priority " + std::to_string(t.priority) + " among transitions of mode " +
                                     std::to_string(t.source));
    }
    check_expr(path + ".guard", t.guard, ExprType::Boolean);
    check_targets(path + ".reset", t.reset);
  }

  if (!model.find_mode(model.initial_mode)) {
    report("initial_mode", "refers to missing mode " + std::to_string(model.initial_mode));
  }
  return out;
}

}  // namespace reaffirm
