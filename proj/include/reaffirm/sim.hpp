#pragma once

// Simulation of hybrid models: fixed-step RK4 inside a mode, bisection to
// localize guard crossings, urgent prioritized jumps.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reaffirm/expr.hpp"
#include "reaffirm/model.hpp"
#include "reaffirm/rng.hpp"
#include "reaffirm/signal.hpp"

namespace reaffirm {

using Assignment = std::map<std::string, double>;

struct SimConfig {
  double horizon = 10.0;
  double step = 1e-3;
  double event_tol = 1e-6;
  /// Jumps allowed within one integration step before declaring Zeno.
  int max_jumps = 100;
  std::uint64_t seed = 0;
  /// Hard cap on the number of jumps in a whole run.
  std::size_t max_events = 1'000'000;
};

enum class SimErrorKind { UnboundParam, UnboundInput, InitOutOfRange, ZenoDetected, InvariantViolated, NumericOverflow, BadConfig };

inline const char* to_string(SimErrorKind k) {
  switch (k) {
    case SimErrorKind::UnboundParam: return "UnboundParam";
    case SimErrorKind::UnboundInput: return "UnboundInput";
    case SimErrorKind::InitOutOfRange: return "InitOutOfRange";
    case SimErrorKind::ZenoDetected: return "ZenoDetected";
    case SimErrorKind::InvariantViolated: return "InvariantViolated";
    case SimErrorKind::NumericOverflow: return "NumericOverflow";
    case SimErrorKind::BadConfig: return "BadConfig";
  }
  return "?";
}

class SimError : public std::runtime_error {
 public:
  SimError(SimErrorKind kind, const std::string& msg, double time = 0.0, int mode = 0)
      : std::runtime_error(msg), kind_(kind), time_(time), mode_(mode) {}
  SimErrorKind kind() const noexcept { return kind_; }
  double time() const noexcept { return time_; }
  int mode() const noexcept { return mode_; }

  /// Errors that say the model misbehaved, as opposed to a misuse of the API.
  bool is_behavioral() const noexcept {
    return kind_ == SimErrorKind::ZenoDetected || kind_ == SimErrorKind::InvariantViolated ||
           kind_ == SimErrorKind::NumericOverflow;
  }

 private:
  SimErrorKind kind_;
  double time_;
  int mode_;
};

/// Sampled execution. Row k holds the integrated variables (states, then
/// locals, in declaration order) followed by the inputs.
struct Trace {
  std::vector<std::string> columns;
  std::size_t n_integrated = 0;
  std::vector<double> times;
  std::vector<int> modes;
  std::vector<double> data;
  /// Params the run was bound with; STL atoms may reference them.
  Assignment params;

  std::size_t size() const { return times.size(); }
  std::size_t width() const { return columns.size(); }
  double at(std::size_t k, std::size_t col) const { return data[k * columns.size() + col]; }
  const double* row(std::size_t k) const { return data.data() + k * columns.size(); }

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] == name) return i;
    }
    return std::nullopt;
  }

  std::vector<double> series(std::string_view name) const {
    const auto c = column(name);
    if (!c) throw std::out_of_range("trace has no column '" + std::string(name) + "'");
    std::vector<double> out(size());
    for (std::size_t k = 0; k < size(); ++k) out[k] = at(k, *c);
    return out;
  }

  friend bool operator==(const Trace&, const Trace&) = default;
};

/// Variables integrated by the simulator: states then locals.
inline std::vector<const Variable*> integrated_variables(const HybridModel& model) {
  std::vector<const Variable*> out;
  for (const auto& v : model.variables) {
    if (v.kind == VarKind::State) out.push_back(&v);
  }
  for (const auto& v : model.variables) {
    if (v.kind == VarKind::Local) out.push_back(&v);
  }
  return out;
}

/// States whose init interval is sampled, absolute ones first so that
/// relative intervals can refer to them.
inline std::vector<const Variable*> init_dimensions(const HybridModel& model) {
  std::vector<const Variable*> out;
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& v : model.variables) {
      if (v.kind != VarKind::State || !std::holds_alternative<Interval>(v.init)) continue;
      if (v.relative_to.empty() == (pass == 0)) out.push_back(&v);
    }
  }
  return out;
}

/// Maps a point of the unit cube (one coordinate per init dimension) to an
/// initial assignment. Locals take their fixed init.
inline Assignment init_from_unit(const HybridModel& model, const std::vector<double>& u) {
  Assignment a;
  const auto dims = init_dimensions(model);
  for (std::size_t i = 0; i < dims.size(); ++i) {
    const Variable& v = *dims[i];
    const Interval iv = std::get<Interval>(v.init);
    const double x = std::clamp(i < u.size() ? u[i] : 0.5, 0.0, 1.0);
    double value = iv.lo + (iv.hi - iv.lo) * x;
    if (!v.relative_to.empty()) value += a.at(v.relative_to);
    a[v.name] = value;
  }
  for (const auto& v : model.variables) {
    if (v.kind == VarKind::State && std::holds_alternative<double>(v.init)) a[v.name] = std::get<double>(v.init);
    if (v.kind == VarKind::Local) a[v.name] = std::holds_alternative<double>(v.init) ? std::get<double>(v.init) : 0.0;
  }
  return a;
}

/// Uniform sample of the init box; deterministic in `seed`.
inline Assignment sample_init(const HybridModel& model, std::uint64_t seed) {
  CounterRng rng(derive_seed(seed, 0x1417));
  std::vector<double> u(init_dimensions(model).size());
  for (auto& x : u) x = rng.uniform();
  return init_from_unit(model, u);
}

/// A model prepared for repeated simulation with fixed parameter values.
class Simulator {
 public:
  Simulator(const HybridModel& model, const Assignment& params) : model_(model) {
    for (const auto& v : model.variables) {
      if (v.kind != VarKind::Param) continue;
      if (const auto it = params.find(v.name); it != params.end()) {
        params_[v.name] = it->second;
      } else if (const auto* x = std::get_if<double>(&v.init)) {
        params_[v.name] = *x;
      } else {
        throw SimError(SimErrorKind::UnboundParam, "parameter '" + v.name + "' has no value");
      }
    }
    for (const auto& [name, _] : params) {
      const Variable* v = model.find_variable(name);
      if (!v || v->kind != VarKind::Param) {
        throw SimError(SimErrorKind::UnboundParam, "'" + name + "' is not a parameter of the model");
      }
    }
    for (const auto* v : integrated_variables(model)) {
      slot_[v->name] = static_cast<int>(columns_.size());
      columns_.push_back(v->name);
    }
    n_x_ = columns_.size();
    for (const auto& v : model.variables) {
      if (v.kind == VarKind::Input) {
        slot_[v.name] = static_cast<int>(columns_.size());
        columns_.push_back(v.name);
        inputs_.push_back(v.name);
      }
    }
    const auto resolve = [this](const std::string& name) -> CompiledExpr::Binding {
      if (const auto it = slot_.find(name); it != slot_.end()) return {it->second, 0.0};
      return {-1, params_.at(name)};
    };
    for (const auto& m : model.modes) {
      CompiledMode cm;
      cm.id = m.id;
      cm.invariant = CompiledExpr(m.invariant, resolve);
      cm.always_valid = m.invariant.is_true_literal();
      for (std::size_t i = 0; i < n_x_; ++i) {
        const auto it = m.flow.find(columns_[i]);
        cm.flow.push_back(it == m.flow.end() ? CompiledExpr(Expr::number(0.0), resolve) : CompiledExpr(it->second, resolve));
      }
      for (const Transition* t : model.outgoing(m.id)) {
        CompiledTransition ct;
        ct.destination = index_of_mode(t->destination);
        ct.guard = CompiledExpr(t->guard, resolve);
        for (const auto& [var, e] : t->reset) ct.reset.emplace_back(slot_.at(var), CompiledExpr(e, resolve));
        cm.out.push_back(std::move(ct));
      }
      modes_.push_back(std::move(cm));
    }
    // Destination indices were resolved against model.modes order.
    initial_ = index_of_mode(model.initial_mode);
  }

  const std::vector<std::string>& columns() const { return columns_; }
  const Assignment& params() const { return params_; }

  Trace run(const std::vector<InputSignal>& inputs, const Assignment& init, const SimConfig& cfg) const {
    check_config(cfg);
    std::vector<const SignalKind*> sig(inputs_.size(), nullptr);
    for (const auto& s : inputs) {
      const auto it = std::find(inputs_.begin(), inputs_.end(), s.var);
      if (it == inputs_.end()) {
        throw SimError(SimErrorKind::UnboundInput, "signal bound to '" + s.var + "', which is not an input");
      }
      auto& slot = sig[static_cast<std::size_t>(it - inputs_.begin())];
      if (slot) throw SimError(SimErrorKind::UnboundInput, "input '" + s.var + "' is bound twice");
      slot = &s.kind;
    }
    for (std::size_t i = 0; i < sig.size(); ++i) {
      if (!sig[i]) throw SimError(SimErrorKind::UnboundInput, "input '" + inputs_[i] + "' has no signal");
    }

    Run r(*this, cfg, sig);
    r.slots.assign(columns_.size(), 0.0);
    set_initial(init, r.slots);
    return r.execute(initial_);
  }

 private:
  struct CompiledTransition {
    std::size_t destination = 0;
    CompiledExpr guard;
    std::vector<std::pair<int, CompiledExpr>> reset;
  };
  struct CompiledMode {
    int id = 0;
    bool always_valid = true;
    CompiledExpr invariant;
    std::vector<CompiledExpr> flow;
    std::vector<CompiledTransition> out;
  };

  std::size_t index_of_mode(int id) const {
    for (std::size_t i = 0; i < model_.modes.size(); ++i) {
      if (model_.modes[i].id == id) return i;
    }
    throw SimError(SimErrorKind::BadConfig, "unknown mode id " + std::to_string(id));
  }

  static void check_config(const SimConfig& cfg) {
    if (!(cfg.step > 0.0) || !(cfg.horizon >= cfg.step)) {
      throw SimError(SimErrorKind::BadConfig, "need 0 < h <= T");
    }
    if (!(cfg.event_tol > 0.0) || !(cfg.event_tol < cfg.step)) {
      throw SimError(SimErrorKind::BadConfig, "need 0 < event tolerance < h");
    }
    if (cfg.max_jumps < 1) throw SimError(SimErrorKind::BadConfig, "need max_jumps >= 1");
  }

  void set_initial(const Assignment& init, std::vector<double>& slots) const {
    constexpr double tol = 1e-9;
    for (std::size_t i = 0; i < n_x_; ++i) {
      const Variable& v = *model_.find_variable(columns_[i]);
      const auto it = init.find(v.name);
      if (it == init.end()) {
        if (v.kind == VarKind::Local || std::holds_alternative<double>(v.init)) {
          slots[i] = std::holds_alternative<double>(v.init) ? std::get<double>(v.init) : 0.0;
          continue;
        }
        throw SimError(SimErrorKind::InitOutOfRange, "no initial value for '" + v.name + "'");
      }
      slots[i] = it->second;
    }
    for (std::size_t i = 0; i < n_x_; ++i) {
      const Variable& v = *model_.find_variable(columns_[i]);
      const auto* iv = std::get_if<Interval>(&v.init);
      if (v.kind != VarKind::State || !iv) continue;
      double x = slots[i];
      if (!v.relative_to.empty()) x -= slots[static_cast<std::size_t>(slot_.at(v.relative_to))];
      const double scale = tol * std::max(1.0, std::max(std::abs(iv->lo), std::abs(iv->hi)));
      if (x < iv->lo - scale || x > iv->hi + scale) {
        throw SimError(SimErrorKind::InitOutOfRange, "initial value of '" + v.name + "' is outside its interval");
      }
    }
  }

  /// State of one run.
  struct Run {
    const Simulator& sim;
    const SimConfig& cfg;
    const std::vector<const SignalKind*>& sig;
    std::vector<double> slots;
    Trace trace;
    std::size_t total_jumps = 0;
    double burst_start = -1.0;
    int burst_jumps = 0;
    std::vector<double> k1, k2, k3, k4, tmp;

    Run(const Simulator& s, const SimConfig& c, const std::vector<const SignalKind*>& g) : sim(s), cfg(c), sig(g) {}

    void sample_inputs(double t) {
      for (std::size_t i = 0; i < sig.size(); ++i) slots[sim.n_x_ + i] = sample_signal(*sig[i], t);
    }

    void derivative(const CompiledMode& m, const std::vector<double>& s, std::vector<double>& out) const {
      for (std::size_t i = 0; i < sim.n_x_; ++i) out[i] = m.flow[i].eval(s.data());
    }

    /// One RK4 step of length dt from `slots`, inputs held.
    void rk4(const CompiledMode& m, double dt, std::vector<double>& result) {
      const std::size_t n = sim.n_x_;
      k1.resize(n);
      k2.resize(n);
      k3.resize(n);
      k4.resize(n);
      tmp = slots;
      derivative(m, slots, k1);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = slots[i] + 0.5 * dt * k1[i];
      derivative(m, tmp, k2);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = slots[i] + 0.5 * dt * k2[i];
      derivative(m, tmp, k3);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = slots[i] + dt * k3[i];
      derivative(m, tmp, k4);
      result = slots;
      for (std::size_t i = 0; i < n; ++i) result[i] = slots[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }

    static bool any_guard(const CompiledMode& m, const std::vector<double>& s) {
      for (const auto& t : m.out) {
        if (t.guard.eval(s.data()) != 0.0) return true;
      }
      return false;
    }

    void check_finite(double t, const CompiledMode& m, const std::vector<double>& s) const {
      for (std::size_t i = 0; i < sim.n_x_; ++i) {
        if (!std::isfinite(s[i]) || std::abs(s[i]) > 1e12) {
          throw SimError(SimErrorKind::NumericOverflow,
                         "'" + sim.columns_[i] + "' diverged at t=" + format_number(t), t, m.id);
        }
      }
    }

    /// Takes enabled transitions at time t until none is enabled.
    std::size_t settle(std::size_t mode, double t) {
      std::vector<double> next;
      for (;;) {
        const CompiledMode& m = sim.modes_[mode];
        const CompiledTransition* taken = nullptr;
        for (const auto& tr : m.out) {
          if (tr.guard.eval(slots.data()) != 0.0) {
            taken = &tr;
            break;
          }
        }
        if (!taken) break;
        if (burst_start < 0.0 || t - burst_start > cfg.step) {
          burst_start = t;
          burst_jumps = 0;
        }
        if (++burst_jumps > cfg.max_jumps || ++total_jumps > cfg.max_events) {
          throw SimError(SimErrorKind::ZenoDetected,
                         "more than " + std::to_string(cfg.max_jumps) + " jumps near t=" + format_number(t), t, m.id);
        }
        next = slots;
        for (const auto& [slot, e] : taken->reset) next[static_cast<std::size_t>(slot)] = e.eval(slots.data());
        slots.swap(next);
        mode = taken->destination;
      }
      const CompiledMode& m = sim.modes_[mode];
      if (!m.always_valid && m.invariant.eval(slots.data()) == 0.0) {
        throw SimError(SimErrorKind::InvariantViolated,
                       "invariant of mode '" + sim.model_.modes[mode].name + "' violated at t=" + format_number(t), t,
                       m.id);
      }
      return mode;
    }

    void record(double t, std::size_t mode) {
      trace.times.push_back(t);
      trace.modes.push_back(sim.modes_[mode].id);
      trace.data.insert(trace.data.end(), slots.begin(), slots.end());
    }

    Trace execute(std::size_t mode) {
      trace.columns = sim.columns_;
      trace.n_integrated = sim.n_x_;
      trace.params = sim.params_;
      const double h = cfg.step;
      const auto n_steps = static_cast<std::size_t>(std::llround(cfg.horizon / h));
      const double horizon = cfg.horizon;
      trace.times.reserve(n_steps + 1);
      trace.data.reserve((n_steps + 1) * slots.size());

      double t = 0.0;
      sample_inputs(t);
      check_finite(t, sim.modes_[mode], slots);
      mode = settle(mode, t);
      record(t, mode);

      std::vector<double> end, probe;
      std::size_t k = 0;
      while (k < n_steps) {
        const double t_next = k + 1 == n_steps ? horizon : static_cast<double>(k + 1) * h;
        const double dt = t_next - t;
        const CompiledMode& m = sim.modes_[mode];
        rk4(m, dt, end);
        check_finite(t_next, m, end);
        if (!any_guard(m, end)) {
          slots.swap(end);
          t = t_next;
          ++k;
          sample_inputs(t);
          mode = settle(mode, t);
          record(t, mode);
          continue;
        }
        // Earliest crossing in (t, t_next]: guards are false at lo, true at hi.
        double lo = 0.0;
        double hi = dt;
        std::vector<double> at_hi = end;
        while (hi - lo > cfg.event_tol) {
          const double mid = 0.5 * (lo + hi);
          rk4(m, mid, probe);
          if (any_guard(m, probe)) {
            hi = mid;
            at_hi = probe;
          } else {
            lo = mid;
          }
        }
        if (lo > 0.0) {
          std::vector<double> before;
          rk4(m, lo, before);
          const std::vector<double> saved = slots;
          slots.swap(before);
          record(t + lo, mode);
          slots = saved;
        }
        slots.swap(at_hi);
        if (t_next - (t + hi) <= cfg.event_tol) {
          t = t_next;
          ++k;
        } else {
          t += hi;
        }
        sample_inputs(t);
        mode = settle(mode, t);
        record(t, mode);
      }
      return std::move(trace);
    }
  };

  HybridModel model_;
  Assignment params_;
  std::map<std::string, int> slot_;
  std::vector<std::string> columns_;
  std::vector<std::string> inputs_;
  std::size_t n_x_ = 0;
  std::vector<CompiledMode> modes_;
  std::size_t initial_ = 0;
};

inline Trace simulate(const HybridModel& model, const std::vector<InputSignal>& inputs, const Assignment& init,
                      const Assignment& params, const SimConfig& cfg) {
  return Simulator(model, params).run(inputs, init, cfg);
}

// ---------------------------------------------------------------------------
// Export

inline std::string trace_to_csv(const Trace& tr) {
  std::string out = "t,mode";
  for (const auto& c : tr.columns) out += "," + c;
  out += "\n";
  char buf[40];
  for (std::size_t k = 0; k < tr.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g", tr.times[k]);
    out += buf;
    out += "," + std::to_string(tr.modes[k]);
    for (std::size_t c = 0; c < tr.width(); ++c) {
      std::snprintf(buf, sizeof buf, ",%.17g", tr.at(k, c));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

/// Series for external plotting: {"t": [...], "mode": [...], "series": {"x": [...]}}.
inline nlohmann::ordered_json trace_plot_json(const Trace& tr) {
  nlohmann::ordered_json j;
  j["t"] = tr.times;
  j["mode"] = tr.modes;
  nlohmann::ordered_json series = nlohmann::ordered_json::object();
  for (std::size_t c = 0; c < tr.width(); ++c) {
    std::vector<double> s(tr.size());
    for (std::size_t k = 0; k < tr.size(); ++k) s[k] = tr.at(k, c);
    series[tr.columns[c]] = std::move(s);
  }
  j["series"] = std::move(series);
  return j;
}

}  // namespace reaffirm
