#pragma once

// Bundled case studies: adaptive cruise control under GPS spoofing and a
// single-machine infinite-bus power system under a sliding-mode switching
// attack, plus the resiliency-pattern scripts applied to them.

#include <map>
#include <string>
#include <vector>

#include "reaffirm/error.hpp"
#include "reaffirm/model.hpp"
#include "reaffirm/model_io.hpp"
#include "reaffirm/signal.hpp"

namespace reaffirm::cases {

namespace detail {

inline std::map<std::string, Expr> flows(std::initializer_list<std::pair<const char*, const char*>> items) {
  std::map<std::string, Expr> out;
  for (const auto& [k, v] : items) out.emplace(k, parse_expr(v));
  return out;
}

inline void declare(HybridModel& m, std::string name, VarKind kind, VarInit init, std::string relative_to = {}) {
  m.variables.push_back(Variable{std::move(name), kind, std::move(init), std::move(relative_to)});
}

}  // namespace detail

// ---------------------------------------------------------------------------
// ACC

/// Two-mode cruise controller. Speed is estimated from the average of GPS
/// and encoder readings, distance from radar.
inline HybridModel build_acc() {
  using detail::declare;
  HybridModel m;
  m.name = "acc";
  declare(m, "d", VarKind::State, Interval{90.0, 100.0});
  declare(m, "v", VarKind::State, Interval{25.0, 30.0});
  // |d(0) - e_d(0)| <= 10 and |v(0) - e_v(0)| <= 5 as offsets.
  declare(m, "e_d", VarKind::State, Interval{-10.0, 10.0}, "d");
  declare(m, "e_v", VarKind::State, Interval{-5.0, 5.0}, "v");
  declare(m, "ngps", VarKind::Input, std::monostate{});
  declare(m, "nenc", VarKind::Input, std::monostate{});
  declare(m, "nrad", VarKind::Input, std::monostate{});
  declare(m, "v_l", VarKind::Param, 20.0);

  const char* estimator_v = "5 * ((v + ngps + v + nenc) / 2 - e_v)";
  const char* estimator_d = "5 * (d + nrad - e_d)";
  const int speed = m.add_mode("speed_control", detail::flows({{"d", "v_l - v"},
                                                                {"v", "0.5 * (30 - e_v)"},
                                                                {"e_d", estimator_d},
                                                                {"e_v", estimator_v}}));
  const int spacing =
      m.add_mode("spacing_control", detail::flows({{"d", "v_l - v"},
                                                   {"v", "max(-5, min(3, e_d - (15 + 1.5 * e_v)))"},
                                                   {"e_d", estimator_d},
                                                   {"e_v", estimator_v}}));
  m.add_transition(speed, spacing, parse_expr("e_d < 10 + 2 * e_v"), {}, 1);
  m.add_transition(spacing, speed, parse_expr("e_d >= 10 + 2 * e_v"), {}, 1);
  m.initial_mode = speed;
  return m;
}

inline constexpr double kAccHorizon = 50.0;
inline constexpr double kAccStep = 0.01;
inline constexpr const char* kAccSpec = "G[0,inf] (d > 5 + v)";

/// Nominal sensor noise: all three sensors within +-0.05.
inline std::vector<InputSignal> acc_nominal_signals(std::uint64_t seed = 0, double dwell = kAccHorizon) {
  return {
      {"ngps", signals::RandomPiecewise{-0.05, 0.05, dwell, seed * 3 + 0}},
      {"nenc", signals::RandomPiecewise{-0.05, 0.05, dwell, seed * 3 + 1}},
      {"nrad", signals::RandomPiecewise{-0.05, 0.05, dwell, seed * 3 + 2}},
  };
}

/// GPS spoofing: |ngps| <= 50, constant over the run.
inline std::vector<InputSignal> acc_attack_signals(std::uint64_t seed = 0, double dwell = kAccHorizon) {
  return {
      {"ngps", signals::RandomPiecewise{-50.0, 50.0, dwell, seed * 3 + 0}},
      {"nenc", signals::RandomPiecewise{-0.05, 0.05, dwell, seed * 3 + 1}},
      {"nrad", signals::RandomPiecewise{-0.05, 0.05, dwell, seed * 3 + 2}},
  };
}

// ---------------------------------------------------------------------------
// SMIB

/// M inertia, D damping, P_M mechanical power, EEB the electrical coupling
/// E1 * Einf * B1inf, P_L the breaker-switched local load.
struct SmibParams {
  double M = 0.2;
  double D = 0.05;
  double P_M = 1.5;
  double EEB = 2.5;
  double P_L = 0.2;
};

/// Swing equation with a breaker-switched local load. The `load` local is
/// the breaker status; the plant follows it through its two modes.
inline HybridModel build_smib(const SmibParams& p = {}) {
  using detail::declare;
  HybridModel m;
  m.name = "smib";
  declare(m, "delta", VarKind::State, Interval{0.0, 1.1198});
  declare(m, "omega", VarKind::State, Interval{0.0, 1.0});
  declare(m, "load", VarKind::Local, 1.0);
  declare(m, "M", VarKind::Param, p.M);
  declare(m, "D", VarKind::Param, p.D);
  declare(m, "P_M", VarKind::Param, p.P_M);
  declare(m, "EEB", VarKind::Param, p.EEB);
  declare(m, "P_L", VarKind::Param, p.P_L);
  const int on = m.add_mode("load_connected",
                            detail::flows({{"delta", "omega"},
                                           {"omega", "(P_M - EEB * sin(delta) - D * omega - P_L) / M"}}));
  const int off = m.add_mode("load_disconnected",
                             detail::flows({{"delta", "omega"}, {"omega", "(P_M - EEB * sin(delta) - D * omega) / M"}}));
  m.add_transition(on, off, parse_expr("load < 0.5"), {}, 1);
  m.add_transition(off, on, parse_expr("load > 0.5"), {}, 1);
  m.initial_mode = on;
  return m;
}

inline constexpr double kSmibHorizon = 10.0;
inline constexpr double kSmibStep = 1e-3;
inline constexpr const char* kSmibSpec =
    "G[0,T] ((delta >= 0) and (delta <= 3.5) and (omega >= -2) and (omega <= 3))";

struct AttackerParams {
  double surface = 0.2;
  double disconnect_at = 2.5;
  /// Open the breaker below the surface instead of above it.
  bool trip_below = false;
};

/// Breaker attacker: opens the breaker when delta + omega rises above the
/// surface and closes it when it falls below, until `disconnect_at`, after
/// which the breaker stays open.
inline HybridModel build_sliding_mode_attacker(const AttackerParams& a = {}) {
  using detail::declare;
  HybridModel m;
  m.name = "sliding_mode_attacker";
  declare(m, "delta", VarKind::Input, std::monostate{});
  declare(m, "omega", VarKind::Input, std::monostate{});
  declare(m, "load", VarKind::Local, 1.0);
  declare(m, "timer", VarKind::Local, 0.0);
  const std::string s = format_number(a.surface);
  const std::string t_end = format_number(a.disconnect_at);
  const int closed = m.add_mode("breaker_closed", detail::flows({{"timer", "1"}}));
  const int open = m.add_mode("breaker_open", detail::flows({{"timer", "1"}}));
  std::map<std::string, Expr> trip{{"load", Expr::number(0.0)}};
  std::map<std::string, Expr> close{{"load", Expr::number(1.0)}};
  m.add_transition(closed, open, parse_expr("timer >= " + t_end), trip, 1);
  const char* trip_cmp = a.trip_below ? " < " : " > ";
  const char* close_cmp = a.trip_below ? " > " : " < ";
  m.add_transition(closed, open, parse_expr("delta + omega" + std::string(trip_cmp) + s), trip, 2);
  m.add_transition(open, closed, parse_expr("delta + omega" + std::string(close_cmp) + s + " && timer < " + t_end),
                   close, 1);
  m.initial_mode = closed;
  return m;
}

/// Flat product of two automata that communicate through shared variables.
/// A variable declared as an input on one side and integrated on the other
/// becomes integrated. For each mode pair, `a`'s outgoing transitions take
/// priority over `b`'s.
inline HybridModel compose(const HybridModel& a, const HybridModel& b, const std::string& name) {
  HybridModel m;
  m.name = name;
  m.variables = a.variables;
  for (const auto& v : b.variables) {
    Variable* mine = m.find_variable(v.name);
    if (!mine) {
      m.variables.push_back(v);
      continue;
    }
    if (mine->kind == v.kind) {
      if (mine->init != v.init) {
        throw ModelError(ErrorKind::DuplicateName, "shared variable '" + v.name + "' has conflicting inits");
      }
    } else if (mine->kind == VarKind::Input && (v.kind == VarKind::State || v.kind == VarKind::Local)) {
      *mine = v;
    } else if (!(v.kind == VarKind::Input && (mine->kind == VarKind::State || mine->kind == VarKind::Local))) {
      throw ModelError(ErrorKind::DuplicateName, "shared variable '" + v.name + "' has conflicting kinds");
    }
  }
  std::map<std::pair<int, int>, int> id;
  for (const auto& ma : a.modes) {
    for (const auto& mb : b.modes) {
      auto flow = ma.flow;
      for (const auto& [var, e] : mb.flow) {
        if (!flow.emplace(var, e).second) {
          throw ModelError(ErrorKind::DuplicateFlow, "both components define a flow for '" + var + "'");
        }
      }
      Expr inv = ma.invariant;
      if (!mb.invariant.is_true_literal()) {
        inv = inv.is_true_literal() ? mb.invariant : Expr::binary(BinaryOp::And, inv, mb.invariant);
      }
      id[{ma.id, mb.id}] = m.add_mode(ma.name + "_" + mb.name, std::move(flow), std::move(inv));
    }
  }
  for (const auto& ma : a.modes) {
    for (const auto& mb : b.modes) {
      const int src = id.at({ma.id, mb.id});
      int priority = 0;
      for (const Transition* t : a.outgoing(ma.id)) {
        m.add_transition(src, id.at({t->destination, mb.id}), t->guard, t->reset, ++priority);
      }
      for (const Transition* t : b.outgoing(mb.id)) {
        m.add_transition(src, id.at({ma.id, t->destination}), t->guard, t->reset, ++priority);
      }
    }
  }
  m.initial_mode = id.at({a.initial_mode, b.initial_mode});
  return m;
}

inline HybridModel build_smib_attacked(const SmibParams& p = {}, const AttackerParams& a = {}) {
  return compose(build_smib(p), build_sliding_mode_attacker(a), "smib_attacked");
}

// ---------------------------------------------------------------------------
// Resiliency patterns

inline constexpr const char* kPattern1 = R"(# original model is retrieved from command line arguments
model_copy = model.copyModel() # make a model copy
# start a transformation
model.addParam("theta") # add new parameter theta
formode m = model.Mode {
		m_copy = model.addMode(m)
		m.replace(m_copy.flow,"ngps","nenc")
		model.addTransition(m,m_copy,"abs(ngps-nenc)>theta")
}
fortran t = model_copy.Trans {
		# get source and destination modes of transition t
		src = t.source
		dst = t.destination
		# retrieve copies of source and destination modes
		src_copy = model.getCopyMode(src)
		dst_copy = model.getCopyMode(dst)
		model.addTransition(src_copy,dst_copy,t.guard)
}
# end of the transformation
)";

inline constexpr const char* kPattern2 = R"(# pattern 1 plus a switch back once the sensors agree again
model_copy = model.copyModel()
model.addParam("theta")
model.addParam("epsilon")
formode m = model.Mode {
    m_copy = model.addMode(m)
    m.replace(m_copy.flow, "ngps", "nenc")
    model.addTransition(m, m_copy, "abs(ngps-nenc)>theta")
    model.addTransition(m_copy, m, "abs(ngps-nenc)<theta-epsilon")
}
fortran t = model_copy.Trans {
    src = t.source
    dst = t.destination
    src_copy = model.getCopyMode(src)
    dst_copy = model.getCopyMode(dst)
    model.addTransition(src_copy, dst_copy, t.guard)
}
)";

inline constexpr const char* kPattern3 = R"(# start a transformation
model.addParam("theta") # add a new parameter theta
formode m = model.Mode {
    m.replace(m.flow,"ngps", "2*theta*ngps")
    m.replace(m.flow,"nenc", "2*(1-theta)*nenc")
}
# end of the transformation
)";

inline constexpr const char* kDwell = R"(# start a transformation
model.addParam("theta") # add a new parameter theta
model.addLocalVar("clock") # add a clock variable
formode m = model.Mode {
    m.addFlow("clock_dot = 1")
}
fortran t = model.Trans {
		# a transition only triggers after theta seconds
    t.addGuardLabel("&&","clock > theta")
		# reset a clock after each transition
    t.addResetLabel("clock = 0")
}
# end of the transformation
)";

inline std::map<std::string, std::string> pattern_scripts() {
  return {{"pattern1", kPattern1}, {"pattern2", kPattern2}, {"pattern3", kPattern3}, {"dwell", kDwell}};
}

// ---------------------------------------------------------------------------
// Shipped files

/// Attack dwell used by the shipped ACC scenario: ten 5 s windows.
inline constexpr double kAccAttackDwell = 5.0;

/// Relative path -> content of every bundled case-study file.
inline std::map<std::string, std::string> assets() {
  return {
      {"acc/acc.model.json", serialize(build_acc())},
      {"acc/acc.stl", std::string(kAccSpec) + "\n"},
      {"acc/acc_nominal.signals.json", serialize_signals(acc_nominal_signals())},
      {"acc/acc_attack.signals.json", serialize_signals(acc_attack_signals(0, kAccAttackDwell))},
      {"acc/pattern1.hatl", kPattern1},
      {"acc/pattern2.hatl", kPattern2},
      {"acc/pattern3.hatl", kPattern3},
      {"smib/smib.model.json", serialize(build_smib())},
      {"smib/smib_attacked.model.json", serialize(build_smib_attacked())},
      {"smib/smib.stl", std::string(kSmibSpec) + "\n"},
      {"smib/dwell.hatl", kDwell},
  };
}

}  // namespace reaffirm::cases
