#pragma once

// Fixtures and independent oracles shared by the unit tests and the
// acceptance runner.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "reaffirm/reaffirm.hpp"

namespace reaffirm::testing {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline Variable var(std::string name, VarKind kind, VarInit init, std::string rel = {}) {
  return Variable{std::move(name), kind, std::move(init), std::move(rel)};
}

/// x' = rate * x with x(0) = x0.
inline HybridModel exponential(double rate_init = -1.0, bool rate_is_param = false) {
  HybridModel m;
  m.name = "exponential";
  m.variables.push_back(var("x", VarKind::State, Interval{1.0, 1.0}));
  if (rate_is_param) {
    m.variables.push_back(var("theta", VarKind::Param, std::monostate{}));
    m.initial_mode = m.add_mode("run", {{"x", parse_expr("theta * x")}});
  } else {
    m.initial_mode = m.add_mode("run", {{"x", parse_expr(format_number(rate_init) + " * x")}});
  }
  return m;
}

/// x' = 1 from x(0) = 0; switches to a frozen mode once `guard` holds.
inline HybridModel ramp_switch(const char* guard = "x >= 1") {
  HybridModel m;
  m.name = "ramp";
  m.variables.push_back(var("x", VarKind::State, Interval{0.0, 0.0}));
  const int a = m.add_mode("rising", {{"x", parse_expr("1")}});
  const int b = m.add_mode("held", {{"x", parse_expr("0")}});
  m.add_transition(a, b, parse_expr(guard), {}, 1);
  m.initial_mode = a;
  return m;
}

/// Threshold fixture: x rises at rate 1 and stops once x > theta, so
/// G[0,2](x < 1) fails exactly when theta >= 1.
inline HybridModel threshold_model() {
  HybridModel m;
  m.name = "threshold";
  m.variables.push_back(var("x", VarKind::State, Interval{0.0, 0.5}));
  m.variables.push_back(var("theta", VarKind::Param, std::monostate{}));
  const int a = m.add_mode("rising", {{"x", parse_expr("1")}});
  const int b = m.add_mode("safe", {{"x", parse_expr("0")}});
  m.add_transition(a, b, parse_expr("x > theta"), {}, 1);
  m.initial_mode = a;
  return m;
}

inline constexpr const char* kThresholdSpec = "G[0,2] (x < 1)";

inline synth::SynthProblem threshold_problem(std::uint64_t seed) {
  synth::SynthProblem pb;
  pb.model = threshold_model();
  pb.spec = stl::parse_stl(kThresholdSpec);
  pb.mined = {{"theta", 0.0, 2.0, synth::Monotonicity::Decreasing}};
  pb.sim.horizon = 2.0;
  pb.sim.step = 1e-2;
  pb.sim.event_tol = 1e-9;
  pb.budget.max_evals = 40;
  pb.budget.validation = 20;
  pb.seed = seed;
  return pb;
}

/// Bisection tolerance of the threshold problem: 2^-k of the range width.
inline double threshold_tolerance(const synth::SynthProblem& pb) {
  return std::ldexp(pb.mined.front().hi - pb.mined.front().lo, -static_cast<int>(pb.budget.bisection_probes));
}

// ---------------------------------------------------------------------------
// Reference STL evaluator: direct recursion at one time point, windows
// scanned linearly. Shares nothing with the library's sliding-window code.

struct SampledSignal {
  std::vector<double> t;
  std::vector<double> v;
  double at(double s) const {
    if (s <= t.front()) return v.front();
    if (s >= t.back()) return v.back();
    std::size_t i = 1;
    while (t[i] < s) ++i;
    if (t[i] == s) return v[i];
    const double a = (s - t[i - 1]) / (t[i] - t[i - 1]);
    return v[i - 1] + (v[i] - v[i - 1]) * a;
  }
};

/// Robustness signal of f over the sample times of `trace`, computed by
/// scanning every window point by point.
inline std::vector<double> naive_robustness(const Trace& trace, const stl::Formula& f) {
  const auto& times = trace.times;
  const std::size_t n = times.size();
  std::vector<double> out(n);
  switch (f.kind()) {
    case stl::Kind::Atom: {
      for (std::size_t k = 0; k < n; ++k) {
        out[k] = evaluate(f.margin(), [&](const std::string& name) {
          if (auto c = trace.column(name)) return trace.at(k, *c);
          return trace.params.at(name);
        });
      }
      return out;
    }
    case stl::Kind::Not: {
      const auto c = naive_robustness(trace, f.child());
      for (std::size_t k = 0; k < n; ++k) out[k] = -c[k];
      return out;
    }
    case stl::Kind::And:
    case stl::Kind::Or:
    case stl::Kind::Implies: {
      const auto a = naive_robustness(trace, f.child(0));
      const auto b = naive_robustness(trace, f.child(1));
      for (std::size_t k = 0; k < n; ++k) {
        if (f.kind() == stl::Kind::And) out[k] = std::min(a[k], b[k]);
        if (f.kind() == stl::Kind::Or) out[k] = std::max(a[k], b[k]);
        if (f.kind() == stl::Kind::Implies) out[k] = std::max(-a[k], b[k]);
      }
      return out;
    }
    case stl::Kind::Globally:
    case stl::Kind::Eventually: {
      const SampledSignal c{times, naive_robustness(trace, f.child())};
      const bool g = f.kind() == stl::Kind::Globally;
      const double end = times.back();
      for (std::size_t k = 0; k < n; ++k) {
        const double lo = std::min(times[k] + f.lower(), end);
        const double hi = std::min(times[k] + f.upper(), end);
        double r = g ? std::min(c.at(lo), c.at(hi)) : std::max(c.at(lo), c.at(hi));
        for (std::size_t i = 0; i < n; ++i) {
          if (times[i] >= lo && times[i] <= hi) r = g ? std::min(r, c.v[i]) : std::max(r, c.v[i]);
        }
        out[k] = r;
      }
      return out;
    }
  }
  return out;
}

/// Trace resampled `factor` times more finely by linear interpolation.
inline Trace refine(const Trace& tr, std::size_t factor) {
  Trace out;
  out.columns = tr.columns;
  out.n_integrated = tr.n_integrated;
  out.params = tr.params;
  for (std::size_t k = 0; k + 1 < tr.size(); ++k) {
    for (std::size_t j = 0; j < factor; ++j) {
      const double a = static_cast<double>(j) / static_cast<double>(factor);
      out.times.push_back(tr.times[k] + (tr.times[k + 1] - tr.times[k]) * a);
      out.modes.push_back(tr.modes[k]);
      for (std::size_t c = 0; c < tr.width(); ++c) {
        out.data.push_back(tr.at(k, c) + (tr.at(k + 1, c) - tr.at(k, c)) * a);
      }
    }
  }
  out.times.push_back(tr.times.back());
  out.modes.push_back(tr.modes.back());
  for (std::size_t c = 0; c < tr.width(); ++c) out.data.push_back(tr.at(tr.size() - 1, c));
  return out;
}

/// Boolean satisfaction at the first sample, by direct recursion.
inline bool naive_satisfied(const Trace& trace, const stl::Formula& f) {
  return naive_robustness(trace, f).front() > 0.0;
}

/// Random two-signal trace on [0, horizon] with irregular sample spacing.
inline Trace random_trace(CounterRng& rng, std::size_t n, double horizon) {
  Trace tr;
  tr.columns = {"x", "y"};
  tr.n_integrated = 2;
  std::vector<double> ts{0.0, horizon};
  for (std::size_t i = 2; i < n; ++i) ts.push_back(rng.uniform(0.0, horizon));
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  for (double t : ts) {
    tr.times.push_back(t);
    tr.modes.push_back(1);
    tr.data.push_back(rng.uniform(-2.0, 2.0));
    tr.data.push_back(rng.uniform(-2.0, 2.0));
  }
  return tr;
}

/// Random formula of the given depth over linear atoms in x and y.
inline stl::FormulaPtr random_formula(CounterRng& rng, int depth, double budget) {
  using stl::Formula;
  using stl::Kind;
  if (depth == 0) {
    const double c = std::round(rng.uniform(-1.5, 1.5) * 100.0) / 100.0;
    const char* lhs[] = {"x", "y", "x - y", "0.5 * x + y"};
    const std::string text = std::string(lhs[rng.next_u64() % 4]) + (rng.uniform() < 0.5 ? " > " : " < ") +
                             format_number(c);
    return stl::parse_stl(text);
  }
  switch (rng.next_u64() % 5) {
    case 0: return Formula::negation(random_formula(rng, depth - 1, budget));
    case 1: return Formula::binary(Kind::And, random_formula(rng, depth - 1, budget), random_formula(rng, depth - 1, budget));
    case 2: return Formula::binary(Kind::Or, random_formula(rng, depth - 1, budget), random_formula(rng, depth - 1, budget));
    default: {
      const double a = std::round(rng.uniform(0.0, budget / 3.0) * 100.0) / 100.0;
      const double b = std::round(rng.uniform(a, budget / 2.0) * 100.0) / 100.0;
      const Kind k = rng.uniform() < 0.5 ? Kind::Globally : Kind::Eventually;
      return Formula::temporal(k, a, b, random_formula(rng, depth - 1, budget - b));
    }
  }
}

/// Largest slope of any atom signal between consecutive samples.
inline double atom_lipschitz(const Trace& tr, const stl::Formula& f) {
  if (f.kind() == stl::Kind::Atom) {
    const auto v = naive_robustness(tr, f);
    double l = 0.0;
    for (std::size_t k = 0; k + 1 < v.size(); ++k) {
      l = std::max(l, std::abs(v[k + 1] - v[k]) / (tr.times[k + 1] - tr.times[k]));
    }
    return l;
  }
  double l = 0.0;
  for (std::size_t i = 0; i < f.arity(); ++i) l = std::max(l, atom_lipschitz(tr, f.child(i)));
  return l;
}

inline int temporal_depth(const stl::Formula& f) {
  int d = 0;
  for (std::size_t i = 0; i < f.arity(); ++i) d = std::max(d, temporal_depth(f.child(i)));
  return d + (f.kind() == stl::Kind::Globally || f.kind() == stl::Kind::Eventually ? 1 : 0);
}

inline double max_spacing(const Trace& tr) {
  double d = 0.0;
  for (std::size_t k = 0; k + 1 < tr.size(); ++k) d = std::max(d, tr.times[k + 1] - tr.times[k]);
  return d;
}

/// Sup-norm distance between sample-based robustness and its value on a
/// finer grid: every temporal operator reads its child through linear
/// interpolation, which is off by at most L * spacing / 2 for an
/// L-Lipschitz signal, and min, max and negation do not amplify errors.
inline double interpolation_bound(const Trace& coarse, const stl::Formula& f, std::size_t factor) {
  const double l = atom_lipschitz(coarse, f);
  const double h = max_spacing(coarse);
  return temporal_depth(f) * l * (h + h / static_cast<double>(factor)) / 2.0;
}

/// HATL scripts that each fail at parse or run time.
inline std::vector<std::string> malformed_scripts() {
  return {
      "formode m = model.Mode {\n",
      "formode m = model.Mode {\n  m.replace(m.flow)\n}\n",
      "model.nosuch(\"x\")\n",
      "model.addParam(\"v\")\n",
      "model.addParam(\"theta\")\nmodel.addParam(\"theta\")\n",
      "model.addParam(\"theta\")\nformode m = model.Mode {\n  model.addTransition(m, m, \"abs(ngps-nenc)>\")\n}\n",
      "formode m = model.Mode {\n  c = model.getCopyMode(m)\n}\n",
      "x = undefined_name.copyModel()\n",
      "copy = model.copyModel()\ncopy.addParam(\"theta\")\n",
      "fortran t = model.Mode {\n}\n",
      "model.addLocalVar(\"clock\")\nformode m = model.Mode {\n  m.addFlow(\"clock_dot = 1\")\n  m.addFlow(\"clock_dot = 2\")\n}\n",
      "model.addParam(\"theta\")\nfortran t = model.Trans {\n  t.addGuardLabel(\"xor\", \"v > theta\")\n}\n",
      "model.addParam(\"theta\")\nformode m = model.Mode {\n  m.replace(m.flow, \"ngps\", \"2*\")\n}\n",
      "formode m = model.Mode {\n  model.addTransition(m, m)\n}\n",
      "model.addParam(42)\n",
      "model.addLocalVar(\"clock\")\nformode m = model.Mode {\n  c = model.addMode(m)\n}\nfortran t = model.Trans {\n  t.addResetLabel(\"clock = 0\")\n  t.addResetLabel(\"clock = 1\")\n}\n",
  };
}

// ---------------------------------------------------------------------------
// Case-study repair problems, set up the way the CLI sets them up.

inline synth::SynthProblem acc_problem(const std::string& script, double lo, double hi, synth::Monotonicity mono,
                                       std::uint64_t seed, unsigned workers = 0) {
  synth::SynthProblem pb;
  pb.model = hatl::transform(script, cases::build_acc());
  pb.spec = stl::parse_stl(cases::kAccSpec);
  pb.mined = {{"theta", lo, hi, mono}};
  pb.inputs = cases::acc_attack_signals(0, cases::kAccAttackDwell);
  pb.sim.horizon = cases::kAccHorizon;
  pb.sim.step = cases::kAccStep;
  pb.seed = seed;
  pb.workers = workers ? workers : std::max(1u, std::thread::hardware_concurrency());
  return pb;
}

inline stl::FormulaPtr smib_spec() {
  return stl::parse_stl(stl::substitute_constants(cases::kSmibSpec, {{"T", cases::kSmibHorizon}}));
}

inline synth::SynthProblem smib_problem(std::uint64_t seed, unsigned workers = 0) {
  synth::SynthProblem pb;
  pb.model = hatl::transform(cases::kDwell, cases::build_smib_attacked());
  pb.spec = smib_spec();
  pb.mined = {{"theta", 0.0, 0.3, synth::Monotonicity::Increasing}};
  pb.sim.horizon = cases::kSmibHorizon;
  pb.sim.step = cases::kSmibStep;
  pb.seed = seed;
  pb.workers = workers ? workers : std::max(1u, std::thread::hardware_concurrency());
  return pb;
}

/// Robustness of `runs` random executions: init sampled from the box and
/// signals reseeded per run. Returns the smallest value seen.
inline double min_robustness(const HybridModel& model, const stl::Formula& spec, const SimConfig& cfg,
                             std::size_t runs, const std::function<std::vector<InputSignal>(std::uint64_t)>& inputs,
                             unsigned workers = 0) {
  const unsigned w = workers ? workers : std::max(1u, std::thread::hardware_concurrency());
  const auto rho = parallel_map(runs, w, [&](std::size_t i) {
    const Trace tr = simulate(model, inputs(i), sample_init(model, 1000 + i), {}, cfg);
    return stl::robustness(tr, spec).value;
  });
  return *std::min_element(rho.begin(), rho.end());
}

}  // namespace reaffirm::testing
