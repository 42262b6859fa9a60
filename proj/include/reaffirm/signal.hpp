#pragma once

// Input signal generators and the JSON signal-file format.

#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "reaffirm/error.hpp"
#include "reaffirm/expr.hpp"
#include "reaffirm/rng.hpp"

namespace reaffirm {

namespace signals {

struct Constant {
  double value = 0.0;
};
struct Step {
  double t0 = 0.0;
  double v0 = 0.0;
  double v1 = 0.0;
};
struct Ramp {
  double slope = 0.0;
  double v0 = 0.0;
};
struct Pulse {
  double period = 1.0;
  double duty = 0.5;
  double lo = 0.0;
  double hi = 1.0;
};
struct Sinusoid {
  double amp = 1.0;
  double freq = 1.0;
  double phase = 0.0;
  double offset = 0.0;
};
/// One uniform draw from [lo, hi] per dwell window, keyed on (seed, window).
struct RandomPiecewise {
  double lo = 0.0;
  double hi = 0.0;
  double dwell = 1.0;
  std::uint64_t seed = 0;
};
/// Explicit per-window values; the last value is held past the end.
struct Piecewise {
  double dwell = 1.0;
  std::vector<double> values;
};

}  // namespace signals

using SignalKind = std::variant<signals::Constant, signals::Step, signals::Ramp, signals::Pulse, signals::Sinusoid,
                                signals::RandomPiecewise, signals::Piecewise>;

struct InputSignal {
  std::string var;
  SignalKind kind;
};

inline std::size_t window_index(double t, double dwell) {
  const double k = std::floor(t / dwell);
  return k <= 0.0 ? 0 : static_cast<std::size_t>(k);
}

inline double random_window_value(const signals::RandomPiecewise& s, std::size_t window) {
  return s.lo + (s.hi - s.lo) * unit_double(splitmix64(derive_seed(s.seed, window)));
}

inline double sample_signal(const SignalKind& kind, double t) {
  using namespace signals;
  return std::visit(
      [t](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Constant>) {
          return s.value;
        } else if constexpr (std::is_same_v<T, Step>) {
          return t < s.t0 ? s.v0 : s.v1;
        } else if constexpr (std::is_same_v<T, Ramp>) {
          return s.v0 + s.slope * t;
        } else if constexpr (std::is_same_v<T, Pulse>) {
          const double phase = std::fmod(t, s.period) / s.period;
          return phase < s.duty ? s.hi : s.lo;
        } else if constexpr (std::is_same_v<T, Sinusoid>) {
          return s.amp * std::sin(2.0 * std::numbers::pi * s.freq * t + s.phase) + s.offset;
        } else if constexpr (std::is_same_v<T, RandomPiecewise>) {
          return random_window_value(s, window_index(t, s.dwell));
        } else {
          if (s.values.empty()) return 0.0;
          return s.values[std::min(window_index(t, s.dwell), s.values.size() - 1)];
        }
      },
      kind);
}

inline double sample_signal(const InputSignal& sig, double t) { return sample_signal(sig.kind, t); }

// ---------------------------------------------------------------------------
// JSON: [{"var": "ngps", "kind": "random", "lo": -50, "hi": 50, "dwell": 50, "seed": 1}, ...]

inline nlohmann::ordered_json to_json(const InputSignal& sig) {
  using namespace signals;
  nlohmann::ordered_json j;
  j["var"] = sig.var;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Constant>) {
          j["kind"] = "constant";
          j["value"] = s.value;
        } else if constexpr (std::is_same_v<T, Step>) {
          j["kind"] = "step";
          j["t0"] = s.t0;
          j["v0"] = s.v0;
          j["v1"] = s.v1;
        } else if constexpr (std::is_same_v<T, Ramp>) {
          j["kind"] = "ramp";
          j["slope"] = s.slope;
          j["v0"] = s.v0;
        } else if constexpr (std::is_same_v<T, Pulse>) {
          j["kind"] = "pulse";
          j["period"] = s.period;
          j["duty"] = s.duty;
          j["lo"] = s.lo;
          j["hi"] = s.hi;
        } else if constexpr (std::is_same_v<T, Sinusoid>) {
          j["kind"] = "sinusoid";
          j["amp"] = s.amp;
          j["freq"] = s.freq;
          j["phase"] = s.phase;
          j["offset"] = s.offset;
        } else if constexpr (std::is_same_v<T, RandomPiecewise>) {
          j["kind"] = "random";
          j["lo"] = s.lo;
          j["hi"] = s.hi;
          j["dwell"] = s.dwell;
          j["seed"] = s.seed;
        } else {
          j["kind"] = "piecewise";
          j["dwell"] = s.dwell;
          j["values"] = s.values;
        }
      },
      sig.kind);
  return j;
}

inline std::string serialize_signals(const std::vector<InputSignal>& sigs) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& s : sigs) arr.push_back(to_json(s));
  return arr.dump(2) + "\n";
}

namespace detail {

inline double num_field(const nlohmann::json& j, const char* key, const std::string& path) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_number()) throw FormatError(path + ": missing numeric field \"" + key + "\"");
  return it->get<double>();
}

inline double num_field(const nlohmann::json& j, const char* key, double fallback) {
  const auto it = j.find(key);
  return it != j.end() && it->is_number() ? it->get<double>() : fallback;
}

}  // namespace detail

inline InputSignal signal_from_json(const nlohmann::json& j, const std::string& path) {
  using namespace signals;
  using detail::num_field;
  if (!j.is_object()) throw FormatError(path + ": expected an object");
  const auto var = j.find("var");
  const auto kind = j.find("kind");
  if (var == j.end() || !var->is_string()) throw FormatError(path + ": missing \"var\"");
  if (kind == j.end() || !kind->is_string()) throw FormatError(path + ": missing \"kind\"");
  InputSignal sig;
  sig.var = var->get<std::string>();
  const std::string k = kind->get<std::string>();
  if (k == "constant") {
    sig.kind = Constant{num_field(j, "value", path)};
  } else if (k == "step") {
    sig.kind = Step{num_field(j, "t0", path), num_field(j, "v0", path), num_field(j, "v1", path)};
  } else if (k == "ramp") {
    sig.kind = Ramp{num_field(j, "slope", path), num_field(j, "v0", 0.0)};
  } else if (k == "pulse") {
    Pulse p{num_field(j, "period", path), num_field(j, "duty", 0.5), num_field(j, "lo", 0.0), num_field(j, "hi", 1.0)};
    if (!(p.period > 0.0)) throw FormatError(path + ": pulse period must be positive");
    sig.kind = p;
  } else if (k == "sinusoid") {
    sig.kind = Sinusoid{num_field(j, "amp", 1.0), num_field(j, "freq", path), num_field(j, "phase", 0.0),
                        num_field(j, "offset", 0.0)};
  } else if (k == "random") {
    RandomPiecewise r{num_field(j, "lo", path), num_field(j, "hi", path), num_field(j, "dwell", path), 0};
    if (const auto s = j.find("seed"); s != j.end()) {
      if (!s->is_number_unsigned() && !s->is_number_integer()) throw FormatError(path + ".seed: expected an integer");
      r.seed = s->get<std::uint64_t>();
    }
    if (r.lo > r.hi) throw FormatError(path + ": lo > hi");
    if (!(r.dwell > 0.0)) throw FormatError(path + ": dwell must be positive");
    sig.kind = r;
  } else if (k == "piecewise") {
    Piecewise p{num_field(j, "dwell", path), {}};
    const auto v = j.find("values");
    if (v == j.end() || !v->is_array()) throw FormatError(path + ": missing \"values\" array");
    for (const auto& x : *v) {
      if (!x.is_number()) throw FormatError(path + ".values: expected numbers");
      p.values.push_back(x.get<double>());
    }
    if (!(p.dwell > 0.0)) throw FormatError(path + ": dwell must be positive");
    sig.kind = std::move(p);
  } else {
    throw FormatError(path + ".kind: unknown signal kind \"" + k + "\"");
  }
  return sig;
}

inline std::vector<InputSignal> parse_signals(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(e.what());
  }
  if (!j.is_array()) throw FormatError("signal file: expected a JSON array");
  std::vector<InputSignal> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(signal_from_json(j[i], "signals[" + std::to_string(i) + "]"));
  return out;
}

}  // namespace reaffirm
