#pragma once

// JSON model files. Expressions are stored as canonical source text.

#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "reaffirm/error.hpp"
#include "reaffirm/model.hpp"

namespace reaffirm {

using ordered_json = nlohmann::ordered_json;

namespace detail {

inline ordered_json exprs_to_json(const std::map<std::string, Expr>& m) {
  ordered_json j = ordered_json::object();
  for (const auto& [k, e] : m) j[k] = to_string(e);
  return j;
}

inline std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t offset) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

template <typename J>
const J& require(const J& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) throw FormatError(path + ": expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) throw FormatError(path + ": missing \"" + key + "\"");
  return *it;
}

template <typename J>
int require_int(const J& obj, const char* key, const std::string& path) {
  const J& v = require(obj, key, path);
  if (!v.is_number_integer()) throw FormatError(path + "." + key + ": expected an integer");
  return v.template get<int>();
}

template <typename J>
std::string require_string(const J& obj, const char* key, const std::string& path) {
  const J& v = require(obj, key, path);
  if (!v.is_string()) throw FormatError(path + "." + key + ": expected a string");
  return v.template get<std::string>();
}

inline Expr parse_field(const std::string& text, const std::string& path) {
  try {
    return parse_expr(text);
  } catch (const ParseError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

template <typename J>
std::map<std::string, Expr> parse_expr_map(const J& obj, const std::string& path) {
  if (!obj.is_object()) throw FormatError(path + ": expected an object");
  std::map<std::string, Expr> out;
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!it.value().is_string()) throw FormatError(path + "." + it.key() + ": expected an expression string");
    out.emplace(it.key(), parse_field(it.value().template get<std::string>(), path + "." + it.key()));
  }
  return out;
}

}  // namespace detail

inline ordered_json to_json(const HybridModel& model) {
  ordered_json j;
  j["name"] = model.name;
  ordered_json vars = ordered_json::array();
  for (const auto& v : model.variables) {
    ordered_json jv;
    jv["name"] = v.name;
    jv["kind"] = to_string(v.kind);
    if (const auto* iv = std::get_if<Interval>(&v.init)) {
      jv["init"] = {iv->lo, iv->hi};
    } else if (const auto* x = std::get_if<double>(&v.init)) {
      jv["init"] = *x;
    } else {
      jv["init"] = nullptr;
    }
    if (!v.relative_to.empty()) jv["relative_to"] = v.relative_to;
    vars.push_back(std::move(jv));
  }
  j["variables"] = std::move(vars);
  ordered_json modes = ordered_json::array();
  for (const auto& m : model.modes) {
    ordered_json jm;
    jm["id"] = m.id;
    jm["name"] = m.name;
    jm["invariant"] = to_string(m.invariant);
    jm["flow"] = detail::exprs_to_json(m.flow);
    jm["copy_of"] = m.copy_of ? ordered_json(*m.copy_of) : ordered_json(nullptr);
    modes.push_back(std::move(jm));
  }
  j["modes"] = std::move(modes);
  ordered_json trans = ordered_json::array();
  for (const auto& t : model.transitions) {
    ordered_json jt;
    jt["id"] = t.id;
    jt["source"] = t.source;
    jt["destination"] = t.destination;
    jt["guard"] = to_string(t.guard);
    jt["reset"] = detail::exprs_to_json(t.reset);
    jt["priority"] = t.priority;
    trans.push_back(std::move(jt));
  }
  j["transitions"] = std::move(trans);
  j["initial_mode"] = model.initial_mode;
  return j;
}

inline std::string serialize(const HybridModel& model) { return to_json(model).dump(2) + "\n"; }

inline HybridModel from_json(const ordered_json& j) {
  using detail::require;
  HybridModel model;
  model.name = detail::require_string(j, "name", "model");

  const auto& vars = require(j, "variables", "model");
  if (!vars.is_array()) throw FormatError("model.variables: expected an array");
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const std::string path = "variables[" + std::to_string(i) + "]";
    const auto& jv = vars[i];
    Variable v;
    v.name = detail::require_string(jv, "name", path);
    const std::string kind = detail::require_string(jv, "kind", path);
    if (kind == "state") {
      v.kind = VarKind::State;
    } else if (kind == "param") {
      v.kind = VarKind::Param;
    } else if (kind == "input") {
      v.kind = VarKind::Input;
    } else if (kind == "local") {
      v.kind = VarKind::Local;
    } else {
      throw FormatError(path + ".kind: unknown kind \"" + kind + "\"");
    }
    const auto& init = require(jv, "init", path);
    if (init.is_null()) {
      v.init = std::monostate{};
    } else if (init.is_number()) {
      v.init = init.get<double>();
    } else if (init.is_array() && init.size() == 2 && init[0].is_number() && init[1].is_number()) {
      v.init = Interval{init[0].get<double>(), init[1].get<double>()};
    } else {
      throw FormatError(path + ".init: expected null, a number or [lo, hi]");
    }
    if (const auto it = jv.find("relative_to"); it != jv.end()) {
      if (!it->is_string()) throw FormatError(path + ".relative_to: expected a string");
      v.relative_to = it->get<std::string>();
    }
    model.variables.push_back(std::move(v));
  }

  const auto& modes = require(j, "modes", "model");
  if (!modes.is_array()) throw FormatError("model.modes: expected an array");
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const std::string path = "modes[" + std::to_string(i) + "]";
    const auto& jm = modes[i];
    Mode m;
    m.id = detail::require_int(jm, "id", path);
    m.name = detail::require_string(jm, "name", path);
    m.invariant = detail::parse_field(detail::require_string(jm, "invariant", path), path + ".invariant");
    m.flow = detail::parse_expr_map(require(jm, "flow", path), path + ".flow");
    const auto& copy = require(jm, "copy_of", path);
    if (copy.is_number_integer()) {
      m.copy_of = copy.get<int>();
    } else if (!copy.is_null()) {
      throw FormatError(path + ".copy_of: expected an integer or null");
    }
    model.modes.push_back(std::move(m));
  }

  const auto& trans = require(j, "transitions", "model");
  if (!trans.is_array()) throw FormatError("model.transitions: expected an array");
  for (std::size_t i = 0; i < trans.size(); ++i) {
    const std::string path = "transitions[" + std::to_string(i) + "]";
    const auto& jt = trans[i];
    Transition t;
    t.id = detail::require_int(jt, "id", path);
    t.source = detail::require_int(jt, "source", path);
    t.destination = detail::require_int(jt, "destination", path);
    t.guard = detail::parse_field(detail::require_string(jt, "guard", path), path + ".guard");
    t.reset = detail::parse_expr_map(require(jt, "reset", path), path + ".reset");
    t.priority = detail::require_int(jt, "priority", path);
    model.transitions.push_back(std::move(t));
  }

  model.initial_mode = detail::require_int(j, "initial_mode", "model");
  model.sync_ids();
  return model;
}

inline HybridModel deserialize(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, col] = detail::line_column(text, e.byte > 0 ? e.byte - 1 : 0);
    std::string msg = e.what();
    if (const auto p = msg.find("syntax error"); p != std::string::npos) msg = msg.substr(p);
    throw FormatError(msg, line, col);
  }
  try {
    return from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(e.what());
  }
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline HybridModel load_model(const std::string& path) { return deserialize(read_text_file(path)); }

}  // namespace reaffirm
