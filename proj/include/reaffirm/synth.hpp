#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "reaffirm/cmaes.hpp"
#include "reaffirm/model.hpp"
#include "reaffirm/parallel.hpp"
#include "reaffirm/rng.hpp"
#include "reaffirm/signal.hpp"
#include "reaffirm/sim.hpp"
#include "reaffirm/stl.hpp"

namespace reaffirm::synth {

enum class Monotonicity { Increasing, Decreasing };

inline const char* to_string(Monotonicity m) { return m == Monotonicity::Increasing ? "inc" : "dec"; }

struct ParamDim {
  std::string name;
  double lo = 0.0;
  double hi = 0.0;
};

/// What falsification may vary: free parameters, the init box of the model,
/// and the per-window values of random piecewise inputs. Other signal kinds
/// stay fixed.
struct SearchSpace {
  std::vector<ParamDim> params;
  bool vary_init = true;
  std::vector<InputSignal> inputs;
};

/// One concrete point of a search space.
struct Candidate {
  Assignment params;
  Assignment init;
  std::vector<InputSignal> inputs;
};

inline std::size_t window_count(double horizon, double dwell) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(horizon / dwell - 1e-9)));
}

/// Unit-cube coordinates of a search space.
class Encoding {
 public:
  Encoding(const HybridModel& model, const SearchSpace& space, double horizon) : model_(&model), space_(space) {
    for (const auto& p : space.params) {
      if (!(p.lo <= p.hi)) throw std::invalid_argument("empty range for parameter '" + p.name + "'");
      names_.push_back(p.name);
    }
    if (space.vary_init) {
      n_init_ = init_dimensions(model).size();
      for (const auto* v : init_dimensions(model)) names_.push_back("init." + v->name);
    }
    for (std::size_t s = 0; s < space.inputs.size(); ++s) {
      const auto* r = std::get_if<signals::RandomPiecewise>(&space.inputs[s].kind);
      if (!r) continue;
      const std::size_t w = window_count(horizon, r->dwell);
      windows_.push_back({s, w});
      for (std::size_t k = 0; k < w; ++k) names_.push_back(space.inputs[s].var + "[" + std::to_string(k) + "]");
    }
  }

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  Candidate decode(const std::vector<double>& u) const {
    if (u.size() != size()) throw std::invalid_argument("point has the wrong dimension");
    Candidate c;
    std::size_t i = 0;
    for (const auto& p : space_.params) c.params[p.name] = p.lo + (p.hi - p.lo) * u[i++];
    if (space_.vary_init) {
      c.init = init_from_unit(*model_, std::vector<double>(u.begin() + static_cast<std::ptrdiff_t>(i),
                                                           u.begin() + static_cast<std::ptrdiff_t>(i + n_init_)));
      i += n_init_;
    } else {
      c.init = init_from_unit(*model_, {});
    }
    c.inputs = space_.inputs;
    for (const auto& [s, count] : windows_) {
      const auto r = std::get<signals::RandomPiecewise>(space_.inputs[s].kind);
      signals::Piecewise pw{r.dwell, {}};
      for (std::size_t k = 0; k < count; ++k) pw.values.push_back(r.lo + (r.hi - r.lo) * u[i++]);
      c.inputs[s].kind = pw;
    }
    return c;
  }

 private:
  struct Windows {
    std::size_t signal;
    std::size_t count;
  };
  const HybridModel* model_;
  SearchSpace space_;
  std::vector<std::string> names_;
  std::size_t n_init_ = 0;
  std::vector<Windows> windows_;
};

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Robustness of one candidate. Runs that end in Zeno behavior, an invariant
/// violation or numeric blow-up are counterexamples of unbounded severity.
inline double evaluate(const HybridModel& model, const Assignment& fixed, const stl::Formula& spec,
                       const Candidate& c, const SimConfig& cfg, Trace* keep = nullptr) {
  Assignment params = fixed;
  for (const auto& [k, v] : c.params) params[k] = v;
  try {
    Trace tr = Simulator(model, params).run(c.inputs, c.init, cfg);
    const double rho = stl::robustness(tr, spec).value;
    if (keep) *keep = std::move(tr);
    return rho;
  } catch (const SimError& e) {
    if (e.is_behavioral()) return kNegInf;
    throw;
  }
}

// ---------------------------------------------------------------------------
// Falsification

struct FalsifyOptions {
  SimConfig sim;
  std::size_t max_evals = 200;
  double wall_time_s = 30.0;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  CmaesOptions cmaes;
  /// Evaluate the box corners before the optimizer when they are few.
  bool seed_corners = true;
};

struct Witness {
  std::vector<double> point;
  Candidate candidate;
  double rho = std::numeric_limits<double>::infinity();
  Trace trace;
};

struct FalsificationResult {
  bool found = false;
  Witness witness;
  std::size_t evals = 0;
  std::size_t restarts = 0;
  bool timed_out = false;
};

/// Minimizes robustness over the space with CMA-ES, after checking the box
/// corners when they are few. Stops after the first batch containing a
/// violation (rho < 0) and reports its lowest point;
/// otherwise reports the minimum seen. The wall-clock cap is only checked
/// between generations.
inline FalsificationResult falsify(const HybridModel& model, const Assignment& fixed, const stl::Formula& spec,
                                   const SearchSpace& space, const FalsifyOptions& opt) {
  const Encoding enc(model, space, opt.sim.horizon);
  if (opt.max_evals == 0) throw std::invalid_argument("falsification needs a budget of at least one evaluation");
  FalsificationResult res;
  bool have = false;
  auto consider = [&](const std::vector<double>& point, double rho) {
    if (!have || rho < res.witness.rho) {
      res.witness.point = point;
      res.witness.rho = rho;
      have = true;
    }
  };
  auto run_batch = [&](const std::vector<std::vector<double>>& points) {
    auto values = parallel_map(points.size(), opt.workers, [&](std::size_t i) {
      return evaluate(model, fixed, spec, enc.decode(points[i]), opt.sim);
    });
    for (std::size_t i = 0; i < points.size(); ++i) {
      ++res.evals;
      consider(points[i], values[i]);
    }
    return values;
  };

  const std::size_t n = enc.size();
  if (n == 0) {
    run_batch({std::vector<double>{}});
  } else {
    const auto start = std::chrono::steady_clock::now();
    // Small spaces get their corners checked first; violations often sit
    // on the boundary of the init box where the optimizer's clamping stalls.
    if (opt.seed_corners && n < 16 && (std::size_t{1} << n) * 4 <= opt.max_evals) {
      std::vector<std::vector<double>> corners(std::size_t{1} << n, std::vector<double>(n));
      for (std::size_t c = 0; c < corners.size(); ++c) {
        for (std::size_t i = 0; i < n; ++i) corners[c][i] = (c >> i) & 1u ? 1.0 : 0.0;
      }
      run_batch(corners);
    }
    Cmaes es(n, derive_seed(opt.seed, 0xC3A), opt.cmaes);
    while (res.witness.rho >= 0.0 && res.evals < opt.max_evals) {
      std::vector<std::vector<double>> points = es.ask();
      const std::size_t left = opt.max_evals - res.evals;
      if (points.size() > left) points.resize(left);
      const auto values = run_batch(points);
      if (res.witness.rho < 0.0) break;
      if (values.size() < es.population()) break;
      es.tell(values);
      const std::chrono::duration<double> spent = std::chrono::steady_clock::now() - start;
      if (opt.wall_time_s > 0.0 && spent.count() > opt.wall_time_s) {
        res.timed_out = true;
        break;
      }
    }
    res.restarts = es.restarts();
  }

  res.found = res.witness.rho < 0.0;
  res.witness.candidate = enc.decode(res.witness.point);
  if (std::isfinite(res.witness.rho)) {
    evaluate(model, fixed, spec, res.witness.candidate, opt.sim, &res.witness.trace);
  } else {
    // Re-run up to the failure so callers can see what happened.
    try {
      Assignment params = fixed;
      for (const auto& [k, v] : res.witness.candidate.params) params[k] = v;
      res.witness.trace = Simulator(model, params).run(res.witness.candidate.inputs, res.witness.candidate.init, opt.sim);
    } catch (const SimError&) {
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Synthesis

struct MinedParam {
  std::string name;
  double lo = 0.0;
  double hi = 0.0;
  Monotonicity mono = Monotonicity::Increasing;
};

struct SynthBudget {
  std::size_t max_evals = 200;
  double wall_time_s = 30.0;
  std::size_t rounds = 5;
  std::size_t bisection_probes = 20;
  std::size_t validation = 500;
};

struct SynthProblem {
  HybridModel model;
  stl::FormulaPtr spec;
  std::vector<MinedParam> mined;
  /// Values for params that are neither mined nor bound in the model.
  Assignment fixed;
  bool vary_init = true;
  std::vector<InputSignal> inputs;
  SimConfig sim;
  SynthBudget budget;
  std::uint64_t seed = 0;
  unsigned workers = 1;
};

enum class SynthStatus { Success, Failure };

inline const char* to_string(SynthStatus s) { return s == SynthStatus::Success ? "Success" : "Failure"; }

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const Range&, const Range&) = default;
};

struct Round {
  std::map<std::string, Range> range_before;
  bool found = false;
  Assignment counterexample;
  Assignment init;
  double rho = 0.0;
  std::size_t evals = 0;
};

struct Probe {
  std::string param;
  double value = 0.0;
  bool found = false;
  double rho = 0.0;
};

struct Validation {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  double min_rho = std::numeric_limits<double>::infinity();
  std::size_t failures = 0;
  bool passed = false;
};

struct SynthResult {
  SynthStatus status = SynthStatus::Failure;
  /// Tightest value found safe by falsification, per mined param.
  Assignment boundary;
  /// Boundary moved 1% of the original range width towards the safe side.
  Assignment best;
  std::map<std::string, Range> final_ranges;
  std::vector<Round> rounds;
  std::vector<Probe> probes;
  Validation validation;
  std::size_t evals = 0;
  std::string reason;
  std::string recommendation;
};

namespace detail {

inline std::string range_text(const Range& r) {
  return "[" + format_number(r.lo) + ", " + format_number(r.hi) + "]";
}

inline std::string ranges_text(const std::vector<MinedParam>& mined) {
  std::string out;
  for (const auto& m : mined) {
    if (!out.empty()) out += ", ";
    out += m.name + " in " + range_text({m.lo, m.hi});
  }
  return out;
}

}  // namespace detail

/// Samples of the validation run i: fresh init and fresh random input seeds.
inline Candidate validation_candidate(const HybridModel& model, const std::vector<InputSignal>& inputs,
                                      const Assignment& params, std::uint64_t seed, std::size_t i) {
  const std::uint64_t base = derive_seed(seed, i);
  Candidate c;
  c.params = params;
  c.init = sample_init(model, derive_seed(base, 0));
  c.inputs = inputs;
  for (std::size_t k = 0; k < c.inputs.size(); ++k) {
    if (auto* r = std::get_if<signals::RandomPiecewise>(&c.inputs[k].kind)) r->seed = derive_seed(base, k + 1);
  }
  return c;
}

/// Simulates n random (init, input) samples at fixed params.
inline Validation validate_params(const HybridModel& model, const Assignment& fixed, const stl::Formula& spec,
                                  const std::vector<InputSignal>& inputs, const Assignment& params, const SimConfig& cfg,
                                  std::size_t n, std::uint64_t seed, unsigned workers) {
  Validation v;
  v.n = n;
  v.seed = seed;
  const auto rhos = parallel_map(n, workers, [&](std::size_t i) {
    return evaluate(model, fixed, spec, validation_candidate(model, inputs, params, seed, i), cfg);
  });
  for (double r : rhos) {
    v.min_rho = std::min(v.min_rho, r);
    if (!(r > 0.0)) ++v.failures;
  }
  v.passed = v.failures == 0;
  return v;
}

/// Counterexample-guided range shrinking, bisection towards the tight safe
/// boundary, then validation on random samples.
inline SynthResult synthesize(const SynthProblem& pb) {
  if (!pb.spec) throw std::invalid_argument("synthesis needs a specification");
  if (pb.mined.empty()) throw std::invalid_argument("synthesis needs at least one mined parameter");
  for (const auto& m : pb.mined) {
    const Variable* v = pb.model.find_variable(m.name);
    if (!v || v->kind != VarKind::Param) throw std::invalid_argument("'" + m.name + "' is not a parameter of the model");
    if (!(m.lo <= m.hi)) throw std::invalid_argument("empty range for '" + m.name + "'");
  }

  SynthResult res;
  std::map<std::string, Range> ranges;
  std::map<std::string, bool> lo_unsafe;  // the unsafe end is a known counterexample
  for (const auto& m : pb.mined) {
    ranges[m.name] = {m.lo, m.hi};
    lo_unsafe[m.name] = false;
  }
  std::uint64_t stream = 0;
  auto options = [&] {
    FalsifyOptions o;
    o.sim = pb.sim;
    o.max_evals = pb.budget.max_evals;
    o.wall_time_s = pb.budget.wall_time_s;
    o.workers = pb.workers;
    o.seed = derive_seed(pb.seed, ++stream);
    return o;
  };
  auto fail = [&](std::string reason) {
    res.status = SynthStatus::Failure;
    res.reason = std::move(reason);
    res.recommendation = "No validated safe value was found for " + detail::ranges_text(pb.mined) +
                         ". Search a different parameter range or try another resiliency pattern.";
    res.final_ranges = ranges;
    return res;
  };
  auto safe_end = [&](const MinedParam& m) {
    const Range& r = ranges.at(m.name);
    return m.mono == Monotonicity::Increasing ? r.hi : r.lo;
  };

  // Rounds: falsify with mined params free, discard the side of the worst witness.
  for (std::size_t round = 0; round < pb.budget.rounds; ++round) {
    SearchSpace space{{}, pb.vary_init, pb.inputs};
    for (const auto& m : pb.mined) space.params.push_back({m.name, ranges[m.name].lo, ranges[m.name].hi});
    const auto f = falsify(pb.model, pb.fixed, *pb.spec, space, options());
    res.evals += f.evals;
    Round r;
    r.range_before = ranges;
    r.found = f.found;
    r.rho = f.witness.rho;
    r.evals = f.evals;
    r.init = f.witness.candidate.init;
    for (const auto& m : pb.mined) r.counterexample[m.name] = f.witness.candidate.params.at(m.name);
    res.rounds.push_back(r);
    if (!f.found) break;
    for (const auto& m : pb.mined) {
      const double c = r.counterexample.at(m.name);
      Range& range = ranges[m.name];
      if (m.mono == Monotonicity::Increasing) {
        range.lo = std::max(range.lo, c);
      } else {
        range.hi = std::min(range.hi, c);
      }
      lo_unsafe[m.name] = true;
      if (range.hi - range.lo <= 0.0) {
        return fail("the range of '" + m.name + "' became empty after a counterexample at " + format_number(c));
      }
    }
  }

  // Bisection per mined param with the others held at their safe ends.
  Assignment current;
  for (const auto& m : pb.mined) current[m.name] = safe_end(m);
  auto probe = [&](const std::string& name, double value) {
    Assignment fixed = pb.fixed;
    for (const auto& [k, v] : current) fixed[k] = v;
    fixed[name] = value;
    const auto f = falsify(pb.model, fixed, *pb.spec, SearchSpace{{}, pb.vary_init, pb.inputs}, options());
    res.evals += f.evals;
    res.probes.push_back({name, value, f.found, f.witness.rho});
    return f.found;
  };
  for (const auto& m : pb.mined) {
    Range& range = ranges[m.name];
    const bool inc = m.mono == Monotonicity::Increasing;
    double safe = inc ? range.hi : range.lo;
    double unsafe = inc ? range.lo : range.hi;
    if (probe(m.name, safe)) {
      return fail("'" + m.name + "' = " + format_number(safe) + ", the safest value left in its range, is falsified");
    }
    bool bisect = unsafe != safe;
    if (bisect && !lo_unsafe[m.name]) {
      // Nothing known about the far end yet; it may already be safe.
      if (!probe(m.name, unsafe)) {
        safe = unsafe;
        bisect = false;
      }
    }
    for (std::size_t k = 0; bisect && k < pb.budget.bisection_probes; ++k) {
      const double mid = 0.5 * (safe + unsafe);
      if (mid == safe || mid == unsafe) break;
      if (probe(m.name, mid)) {
        unsafe = mid;
      } else {
        safe = mid;
      }
    }
    range = inc ? Range{unsafe, safe} : Range{safe, unsafe};
    res.boundary[m.name] = safe;
    const double margin = 0.01 * (m.hi - m.lo);
    const double best = inc ? std::min(m.hi, safe + margin) : std::max(m.lo, safe - margin);
    res.best[m.name] = best;
    current[m.name] = best;
  }
  res.final_ranges = ranges;

  res.validation = validate_params(pb.model, pb.fixed, *pb.spec, pb.inputs, res.best, pb.sim, pb.budget.validation,
                                   derive_seed(pb.seed, 0x5A11DA7E), pb.workers);
  res.evals += res.validation.n;
  if (!res.validation.passed) {
    return fail(std::to_string(res.validation.failures) + " of " + std::to_string(res.validation.n) +
                " validation runs violate the specification");
  }
  res.status = SynthStatus::Success;
  return res;
}

/// Model with the synthesized values bound as param inits.
inline HybridModel bind_params(HybridModel model, const Assignment& values) {
  for (auto& v : model.variables) {
    if (v.kind != VarKind::Param) continue;
    if (const auto it = values.find(v.name); it != values.end()) v.init = it->second;
  }
  return model;
}

// ---------------------------------------------------------------------------
// Report

namespace detail {

inline nlohmann::ordered_json number_json(double x) {
  if (std::isfinite(x)) return x;
  return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
}

inline nlohmann::ordered_json assignment_json(const Assignment& a) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : a) j[k] = number_json(v);
  return j;
}

inline nlohmann::ordered_json ranges_json(const std::map<std::string, Range>& ranges) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, r] : ranges) j[k] = {number_json(r.lo), number_json(r.hi)};
  return j;
}

}  // namespace detail

/// Deterministic report; wall-clock timings are kept out of it.
inline nlohmann::ordered_json report_json(const SynthResult& r) {
  using detail::assignment_json;
  using detail::number_json;
  nlohmann::ordered_json j;
  j["status"] = to_string(r.status);
  j["best_params"] = assignment_json(r.best);
  j["boundary"] = assignment_json(r.boundary);
  j["final_ranges"] = detail::ranges_json(r.final_ranges);
  auto rounds = nlohmann::ordered_json::array();
  for (const auto& round : r.rounds) {
    nlohmann::ordered_json o;
    o["range_before"] = detail::ranges_json(round.range_before);
    o["found"] = round.found;
    o["counterexample"] = assignment_json(round.counterexample);
    o["init"] = assignment_json(round.init);
    o["rho"] = number_json(round.rho);
    o["evals"] = round.evals;
    rounds.push_back(o);
  }
  j["rounds"] = rounds;
  auto probes = nlohmann::ordered_json::array();
  for (const auto& p : r.probes) {
    probes.push_back({{"param", p.param}, {"value", number_json(p.value)}, {"found", p.found}, {"rho", number_json(p.rho)}});
  }
  j["probes"] = probes;
  j["validation"] = {{"n", r.validation.n},
                     {"seed", r.validation.seed},
                     {"min_rho", number_json(r.validation.min_rho)},
                     {"failures", r.validation.failures},
                     {"passed", r.validation.passed}};
  j["evals"] = r.evals;
  if (r.status == SynthStatus::Failure) {
    j["reason"] = r.reason;
    j["recommendation"] = r.recommendation;
  }
  return j;
}

}  // namespace reaffirm::synth
