// reaffirm: validate, transform, simulate and repair hybrid models.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "reaffirm/reaffirm.hpp"

namespace fs = std::filesystem;
using namespace reaffirm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitFormat = 2;
constexpr int kExitSynthFailure = 3;

/// Writes next to the target and renames, so readers never see a partial file.
void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

std::uint64_t effective_seed(std::uint64_t flag) {
  if (const char* env = std::getenv("REAFFIRM_SEED"); env && *env) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw std::runtime_error(std::string("REAFFIRM_SEED is not an unsigned integer: '") + env + "'");
    }
  }
  return flag;
}

/// "name=value" pairs.
std::map<std::string, double> parse_bindings(const std::vector<std::string>& items, const char* flag) {
  std::map<std::string, double> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw std::runtime_error(std::string(flag) + " expects name=value, got '" + item + "'");
    }
    try {
      std::size_t used = 0;
      const std::string text = item.substr(eq + 1);
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      out[item.substr(0, eq)] = v;
    } catch (const std::logic_error&) {
      throw std::runtime_error(std::string(flag) + " has a non-numeric value in '" + item + "'");
    }
  }
  return out;
}

/// "name:lo:hi:inc|dec".
synth::MinedParam parse_mined(const std::string& item) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= item.size(); ++i) {
    if (i == item.size() || item[i] == ':') {
      parts.push_back(item.substr(start, i - start));
      start = i + 1;
    }
  }
  if (parts.size() != 4) throw std::runtime_error("--param expects name:lo:hi:inc|dec, got '" + item + "'");
  synth::MinedParam p;
  p.name = parts[0];
  try {
    p.lo = std::stod(parts[1]);
    p.hi = std::stod(parts[2]);
  } catch (const std::logic_error&) {
    throw std::runtime_error("--param has a non-numeric bound in '" + item + "'");
  }
  if (parts[3] == "inc") {
    p.mono = synth::Monotonicity::Increasing;
  } else if (parts[3] == "dec") {
    p.mono = synth::Monotonicity::Decreasing;
  } else {
    throw std::runtime_error("--param monotonicity must be 'inc' or 'dec', got '" + parts[3] + "'");
  }
  if (!(p.lo <= p.hi)) throw std::runtime_error("--param range is empty in '" + item + "'");
  return p;
}

std::vector<InputSignal> load_signals(const std::string& path) {
  if (path.empty()) return {};
  return parse_signals(read_text_file(path));
}

void print_diagnostics(const std::vector<Diagnostic>& diags) {
  for (const auto& d : diags) std::cerr << d.path << ": " << d.message << "\n";
}

HybridModel load_valid_model(const std::string& path) {
  HybridModel m = load_model(path);
  const auto diags = validate(m);
  if (!diags.empty()) {
    print_diagnostics(diags);
    throw std::runtime_error("'" + path + "' is not a valid model");
  }
  return m;
}

// ---------------------------------------------------------------------------

int cmd_validate(const std::string& path) {
  const HybridModel m = load_model(path);
  const auto diags = validate(m);
  if (diags.empty()) {
    std::cout << path << ": ok (" << m.modes.size() << " modes, " << m.transitions.size() << " transitions)\n";
    return kExitOk;
  }
  print_diagnostics(diags);
  return kExitError;
}

int cmd_transform(const std::string& model_path, const std::string& script_path, const std::string& out_path) {
  const HybridModel m = load_valid_model(model_path);
  const std::string script = read_text_file(script_path);
  HybridModel out;
  try {
    out = hatl::transform(script, m);
  } catch (const hatl::HatlError& e) {
    std::cerr << script_path << ":" << e.what() << "\nno changes were written\n";
    return kExitError;
  }
  write_atomic(out_path, serialize(out));
  std::cout << "wrote " << out_path << " (" << out.modes.size() << " modes, " << out.transitions.size()
            << " transitions)\n";
  return kExitOk;
}

struct SimArgs {
  std::string model;
  std::string signals;
  std::uint64_t seed = 0;
  double horizon = 10.0;
  double step = 1e-3;
  double event_tol = 1e-6;
  int max_jumps = 100;
  std::string out = "trace.csv";
  std::vector<std::string> params;
  std::vector<std::string> init;
};

fs::path plot_path_for(const fs::path& csv) {
  fs::path p = csv;
  p.replace_extension(".plot.json");
  return p;
}

int cmd_simulate(const SimArgs& a) {
  const HybridModel m = load_valid_model(a.model);
  const std::uint64_t seed = effective_seed(a.seed);
  std::vector<InputSignal> inputs = load_signals(a.signals);
  // The seed picks the initial state and re-keys random signals.
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (auto* r = std::get_if<signals::RandomPiecewise>(&inputs[k].kind)) r->seed = derive_seed(r->seed, seed);
  }
  Assignment init = sample_init(m, seed);
  for (const auto& [k, v] : parse_bindings(a.init, "--init")) init[k] = v;
  SimConfig cfg;
  cfg.horizon = a.horizon;
  cfg.step = a.step;
  cfg.event_tol = a.event_tol;
  cfg.max_jumps = a.max_jumps;
  cfg.seed = seed;
  Trace tr;
  try {
    tr = simulate(m, inputs, init, parse_bindings(a.params, "--param"), cfg);
  } catch (const SimError& e) {
    std::cerr << "simulation failed: " << e.what() << "\n";
    return kExitError;
  }
  write_atomic(a.out, trace_to_csv(tr));
  const fs::path plot = plot_path_for(a.out);
  write_atomic(plot, trace_plot_json(tr).dump() + "\n");
  std::cout << "wrote " << a.out << " and " << plot.string() << " (" << tr.size() << " samples)\n";
  return kExitOk;
}

struct RepairArgs {
  std::string model;
  std::string script;
  std::string spec;
  std::vector<std::string> params;
  std::vector<std::string> fixed;
  std::vector<std::string> consts;
  std::string attack;
  double horizon = 10.0;
  double step = 1e-3;
  double dwell = 0.0;
  std::size_t evals = 200;
  double time_cap = 30.0;
  std::size_t rounds = 5;
  std::size_t probes = 20;
  std::size_t validation = 500;
  std::uint64_t seed = 0;
  unsigned workers = 0;
  std::string out = "repair_out";
};

int cmd_repair(const RepairArgs& a) {
  const HybridModel original = load_valid_model(a.model);
  const std::uint64_t seed = effective_seed(a.seed);
  const auto t0 = std::chrono::steady_clock::now();
  HybridModel model;
  try {
    model = hatl::transform(read_text_file(a.script), original);
  } catch (const hatl::HatlError& e) {
    std::cerr << a.script << ":" << e.what() << "\n";
    return kExitError;
  }
  const auto t1 = std::chrono::steady_clock::now();

  std::map<std::string, double> consts{{"T", a.horizon}};
  for (const auto& [k, v] : parse_bindings(a.consts, "--const")) consts[k] = v;
  const std::string spec_text = stl::substitute_constants(read_text_file(a.spec), consts);

  synth::SynthProblem pb;
  pb.model = model;
  pb.spec = stl::parse_stl(spec_text);
  for (const auto& p : a.params) pb.mined.push_back(parse_mined(p));
  if (pb.mined.empty()) throw std::runtime_error("repair needs at least one --param");
  pb.fixed = parse_bindings(a.fixed, "--fix");
  pb.inputs = load_signals(a.attack);
  const double dwell = a.dwell > 0.0 ? a.dwell : 0.0;
  if (dwell > 0.0) {
    for (auto& s : pb.inputs) {
      if (auto* r = std::get_if<signals::RandomPiecewise>(&s.kind)) r->dwell = dwell;
    }
  }
  pb.sim.horizon = a.horizon;
  pb.sim.step = a.step;
  pb.budget = {a.evals, a.time_cap, a.rounds, a.probes, a.validation};
  pb.seed = seed;
  pb.workers = a.workers ? a.workers : default_workers();

  const synth::SynthResult res = synth::synthesize(pb);
  const auto t2 = std::chrono::steady_clock::now();

  nlohmann::ordered_json report;
  report["model"] = original.name;
  report["script"] = fs::path(a.script).filename().string();
  report["spec"] = spec_text;
  auto mined = nlohmann::ordered_json::array();
  for (const auto& p : pb.mined) mined.push_back({{"name", p.name}, {"lo", p.lo}, {"hi", p.hi}, {"mono", to_string(p.mono)}});
  report["params"] = mined;
  report["seed"] = seed;
  const auto body = synth::report_json(res);
  for (const auto& [k, v] : body.items()) report[k] = v;

  nlohmann::ordered_json timing;
  timing["transform_s"] = std::chrono::duration<double>(t1 - t0).count();
  timing["synthesis_s"] = std::chrono::duration<double>(t2 - t1).count();
  timing["wall_time_s"] = std::chrono::duration<double>(t2 - t0).count();

  fs::create_directories(a.out);
  const fs::path dir(a.out);
  if (res.status == synth::SynthStatus::Success) {
    write_atomic(dir / "repaired.model.json", serialize(synth::bind_params(model, res.best)));
  }
  write_atomic(dir / "report.json", report.dump(2) + "\n");
  write_atomic(dir / "timing.json", timing.dump(2) + "\n");

  if (res.status == synth::SynthStatus::Success) {
    std::cout << "Success:";
    for (const auto& [k, v] : res.best) std::cout << " " << k << " = " << format_number(v);
    std::cout << " (validated on " << res.validation.n << " runs, min rho " << format_number(res.validation.min_rho)
              << ")\nwrote " << (dir / "repaired.model.json").string() << "\n";
    return kExitOk;
  }
  std::cout << "Failure: " << res.reason << "\n" << res.recommendation << "\n";
  return kExitSynthFailure;
}

int cmd_export_cases(const std::string& dir) {
  for (const auto& [rel, content] : cases::assets()) {
    const fs::path path = fs::path(dir) / rel;
    fs::create_directories(path.parent_path());
    write_atomic(path, content);
    std::cout << path.string() << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Apply resiliency patterns to hybrid models and synthesize safe parameters"};
  app.require_subcommand(1);
  // `--h` is the step size, so help is long-form only.
  app.set_help_flag("--help", "Print this help message and exit");

  std::string validate_path;
  auto* validate_cmd = app.add_subcommand("validate", "Check a model file; exit 0 if valid, 1 on diagnostics, 2 on format errors");
  validate_cmd->add_option("model", validate_path, "Model JSON file")->required();

  std::string t_model, t_script, t_out;
  auto* transform_cmd = app.add_subcommand("transform", "Apply a pattern script; nothing is written on error");
  transform_cmd->add_option("model", t_model, "Model JSON file")->required();
  transform_cmd->add_option("script", t_script, "Pattern script (.hatl)")->required();
  transform_cmd->add_option("out", t_out, "Output model JSON file")->required();

  SimArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Simulate a model and write a CSV trace plus plot data");
  sim_cmd->add_option("model", sim.model, "Model JSON file")->required();
  sim_cmd->add_option("signals", sim.signals, "Input signal JSON file");
  sim_cmd->add_option("--seed", sim.seed, "Seed for the initial state and random signals (REAFFIRM_SEED overrides)");
  sim_cmd->add_option("--T", sim.horizon, "Horizon in seconds")->capture_default_str();
  sim_cmd->add_option("--h", sim.step, "Integration step in seconds")->capture_default_str();
  sim_cmd->add_option("--event-tol", sim.event_tol, "Event localization tolerance")->capture_default_str();
  sim_cmd->add_option("--max-jumps", sim.max_jumps, "Jumps allowed within one step")->capture_default_str();
  sim_cmd->add_option("--out", sim.out, "CSV output; plot data goes next to it as .plot.json")->capture_default_str();
  sim_cmd->add_option("--param", sim.params, "Parameter value name=value (repeatable)");
  sim_cmd->add_option("--init", sim.init, "Initial value name=value overriding the sample (repeatable)");

  RepairArgs rep;
  auto* repair_cmd = app.add_subcommand(
      "repair", "Transform, synthesize parameters and write the repaired model; exit 3 when synthesis fails");
  repair_cmd->add_option("model", rep.model, "Model JSON file")->required();
  repair_cmd->add_option("script", rep.script, "Pattern script (.hatl)")->required();
  repair_cmd->add_option("spec", rep.spec, "STL specification file (.stl)")->required();
  repair_cmd->add_option("--param", rep.params, "Mined parameter name:lo:hi:inc|dec (repeatable)")->required();
  repair_cmd->add_option("--fix", rep.fixed, "Fixed parameter value name=value (repeatable)");
  repair_cmd->add_option("--const", rep.consts, "Constant substituted into the spec, name=value (T defaults to --T)");
  repair_cmd->add_option("--attack", rep.attack, "Input signal JSON file describing the attack");
  repair_cmd->add_option("--T", rep.horizon, "Horizon in seconds")->capture_default_str();
  repair_cmd->add_option("--h", rep.step, "Integration step in seconds")->capture_default_str();
  repair_cmd->add_option("--dwell", rep.dwell, "Override the dwell of random input signals");
  repair_cmd->add_option("--budget-evals", rep.evals, "Evaluations per falsification run")->capture_default_str();
  repair_cmd->add_option("--budget-time", rep.time_cap, "Wall-clock cap per falsification run in seconds")->capture_default_str();
  repair_cmd->add_option("--rounds", rep.rounds, "Counterexample rounds")->capture_default_str();
  repair_cmd->add_option("--probes", rep.probes, "Bisection probes per parameter")->capture_default_str();
  repair_cmd->add_option("--validation", rep.validation, "Random validation runs")->capture_default_str();
  repair_cmd->add_option("--seed", rep.seed, "Seed (REAFFIRM_SEED overrides)")->capture_default_str();
  repair_cmd->add_option("--workers", rep.workers, "Worker threads (default: all cores)");
  repair_cmd->add_option("--out", rep.out, "Output directory")->capture_default_str();

  std::string export_dir;
  auto* export_cmd = app.add_subcommand("export-cases", "Write the bundled case-study models, specs, signals and scripts");
  export_cmd->add_option("dir", export_dir, "Target directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate_cmd) return cmd_validate(validate_path);
    if (*transform_cmd) return cmd_transform(t_model, t_script, t_out);
    if (*sim_cmd) return cmd_simulate(sim);
    if (*repair_cmd) return cmd_repair(rep);
    if (*export_cmd) return cmd_export_cases(export_dir);
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
