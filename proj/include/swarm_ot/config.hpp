// Copyright 2026 The swarm-ot Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Experiment configuration: flat "section.key = value" text with '#'
// comments. Every key has a default except mode, which may instead come
// from the command line.

#ifndef SWARM_OT_CONFIG_HPP
#define SWARM_OT_CONFIG_HPP

#include <algorithm>
#include <array>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "swarm_ot/agent_transport.hpp"
#include "swarm_ot/geometry.hpp"
#include "swarm_ot/grid_pde.hpp"

namespace swarm_ot {

class ConfigError : public std::runtime_error {
 public:
  /// line 0 means the value did not come from a config file line.
  ConfigError(const std::string& key, std::size_t line, const std::string& what)
      : std::runtime_error(where(key, line) + what), key_(key), line_(line) {}

  const std::string& key() const { return key_; }
  std::size_t line() const { return line_; }

 private:
  static std::string where(const std::string& key, std::size_t line) {
    std::string out = line > 0 ? "config line " + std::to_string(line) + ": " : "config: ";
    if (!key.empty()) out += key + ": ";
    return out;
  }
  std::string key_;
  std::size_t line_;
};

enum class RunMode { kAgents, kAgentsFixedDual, kPde };

inline std::string_view mode_name(RunMode m) {
  switch (m) {
    case RunMode::kAgents: return "agents";
    case RunMode::kAgentsFixedDual: return "agents_fixed_dual";
    case RunMode::kPde: return "pde";
  }
  return "?";
}

struct TargetSpec {
  std::string kind = "gaussian_mixture";  // or "pgm"
  bool random_means = true;
  std::vector<Point> means;
  std::vector<std::array<double, 4>> covariances{{2.0, 0.0, 0.0, 2.0}};
  std::vector<double> weights{1.0};
  std::string pgm_path;
};

struct ExperimentConfig {
  std::optional<RunMode> mode;
  std::uint64_t seed = 0;

  std::size_t agent_count = 30;
  std::string agent_init = "uniform";  // or "box"
  std::optional<Domain> init_box;
  TransportConfig transport;

  double xi = 1.0;
  Point domain_lo{0.0, 0.0};
  Point domain_hi{1.0, 1.0};
  TargetSpec target;
  std::size_t quadrature = 256;

  std::size_t grid_nx = 50;
  std::size_t grid_ny = 50;
  double grid_cost = 1.0;
  double pde_dt = 1e-3;
  double pde_horizon = 10.0;
  CoupledMode pde_mode = CoupledMode::kOnTheFlyPd;
  std::size_t pde_inner_iters = 1;
  double pde_fixed_dual = 1.0;
  std::string pde_init = "random";  // or "target"
  double pde_lambda0 = 0.0;
  double pde_steady_tol = 1e-8;

  std::size_t oracle_seeds = 10;
  std::size_t oracle_nodes = 20;
  double oracle_tau = 0.05;
  std::size_t oracle_max_iters = 10'000'000;
  double oracle_stationarity_tol = 1e-8;
  double oracle_feasibility_tol = 1e-7;

  std::string output_dir = "out";
  std::size_t snapshot_every = 0;

  /// Line each key was set on, for error messages raised after parsing.
  std::map<std::string, std::size_t> origin;

  Domain domain() const { return Domain(domain_lo, domain_hi); }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// Numbers separated by whitespace and/or commas.
inline std::vector<std::string_view> tokens(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == ',')) ++i;
    const std::size_t b = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != ',') ++i;
    if (i > b) out.push_back(s.substr(b, i - b));
  }
  return out;
}

struct ValueReader {
  const std::string& key;
  std::size_t line;

  [[noreturn]] void fail(const std::string& what) const { throw ConfigError(key, line, what); }

  double number(std::string_view v) const {
    double out = 0.0;
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end || v.empty()) fail("expected a number, got '" + std::string(v) + "'");
    if (!std::isfinite(out)) fail("value must be finite");
    return out;
  }

  std::uint64_t unsigned_integer(std::string_view v) const {
    std::uint64_t out = 0;
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end || v.empty()) {
      fail("expected a nonnegative integer, got '" + std::string(v) + "'");
    }
    return out;
  }

  std::size_t count(std::string_view v) const { return static_cast<std::size_t>(unsigned_integer(v)); }

  bool boolean(std::string_view v) const {
    if (v == "true") return true;
    if (v == "false") return false;
    fail("expected true or false, got '" + std::string(v) + "'");
  }

  std::vector<double> numbers(std::string_view v, std::size_t expected) const {
    const auto parts = tokens(v);
    if (parts.size() != expected) {
      fail("expected " + std::to_string(expected) + " numbers, got " + std::to_string(parts.size()));
    }
    std::vector<double> out;
    for (auto p : parts) out.push_back(number(p));
    return out;
  }

  Point point(std::string_view v) const {
    const auto n = numbers(v, 2);
    return {n[0], n[1]};
  }

  std::string word(std::string_view v, std::initializer_list<std::string_view> allowed) const {
    for (auto a : allowed) {
      if (v == a) return std::string(v);
    }
    std::string list;
    for (auto a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
    fail("expected one of " + list + ", got '" + std::string(v) + "'");
  }
};

using Setter = std::function<void(ExperimentConfig&, std::string_view, const ValueReader&)>;

inline const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> t;
    t["mode"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) {
      const auto w = r.word(v, {"agents", "agents_fixed_dual", "pde"});
      c.mode = w == "agents" ? RunMode::kAgents : w == "pde" ? RunMode::kPde : RunMode::kAgentsFixedDual;
    };
    t["seed"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) { c.seed = r.unsigned_integer(v); };

    t["agents.count"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) { c.agent_count = r.count(v); };
    t["agents.init"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) {
      c.agent_init = r.word(v, {"uniform", "box"});
    };
    t["agents.init_box"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) {
      const auto n = r.numbers(v, 4);
      try {
        c.init_box = Domain({n[0], n[1]}, {n[2], n[3]});
      } catch (const std::exception& e) {
        r.fail(e.what());
      }
    };

    t["transport.eps"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) { c.transport.eps = r.number(v); };
    t["transport.tau"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) { c.transport.tau = r.number(v); };
    t["transport.inner_iters"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) {
      c.transport.inner_iters = r.count(v);
    };
    t["transport.rounds"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) { c.transport.rounds = r.count(v); };
    t["transport.fixed_dual"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) {
      c.transport.fixed_dual = r.number(v);
    };
    t["transport.grad_tol"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) {
      c.transport.grad_tol = r.number(v);
    };
    t["transport.comm_radius"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) {
      c.transport.comm_radius = v == "inf" ? std::numeric_limits<double>::infinity() : r.number(v);
    };

    t["metric.xi"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) { c.xi = r.number(v); };
    t["domain.lo"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) {
      c.domain_lo = r.point(v);
    };
    t["domain.hi"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) {
      c.domain_hi = r.point(v);
    };

    t["target.kind"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) {
      c.target.kind = r.word(v, {"gaussian_mixture", "pgm"});
    };
    t["target.means"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) {
      c.target.means.clear();
      c.target.random_means = v == "random";
      if (c.target.random_means) return;
      for (auto part : split(v, ';')) c.target.means.push_back(r.point(part));
    };
    t["target.covariances"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) {
      c.target.covariances.clear();
      for (auto part : split(v, ';')) {
        const auto n = r.numbers(part, 4);
        c.target.covariances.push_back({n[0], n[1], n[2], n[3]});
      }
    };
    t["target.weights"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) {
      std::string list(v);
      std::replace(list.begin(), list.end(), ';', ' ');
      c.target.weights.clear();
      for (auto part : tokens(list)) c.target.weights.push_back(r.number(part));
    };
    t["target.pgm_path"] = [](ExperimentConfig& c, std::string_view v, const ValueReader&) {
      c.target.pgm_path = std::string(v);
    };
    t["quadrature.resolution"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) {
      c.quadrature = r.count(v);
    };

    t["grid.nx"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) { c.grid_nx = r.count(v); };
    t["grid.ny"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) { c.grid_ny = r.count(v); };
    t["grid.cost"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) { c.grid_cost = r.number(v); };
    t["pde.dt"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) { c.pde_dt = r.number(v); };
    t["pde.horizon"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) { c.pde_horizon = r.number(v); };
    t["pde.mode"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) {
      c.pde_mode = parse_coupled_mode(r.word(v, {"on_the_fly_pd", "on_the_fly_fixed", "inner_steady_state"}));
    };
    t["pde.inner_iters"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) {
      c.pde_inner_iters = r.count(v);
    };
    t["pde.fixed_dual"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) { c.pde_fixed_dual = r.number(v); };
    t["pde.init"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) {
      c.pde_init = r.word(v, {"random", "target"});
    };
    t["pde.lambda0"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) { c.pde_lambda0 = r.number(v); };
    t["pde.steady_tol"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) {
      c.pde_steady_tol = r.number(v);
    };

    t["oracle.seeds"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) { c.oracle_seeds = r.count(v); };
    t["oracle.nodes"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) { c.oracle_nodes = r.count(v); };
    t["oracle.tau"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) { c.oracle_tau = r.number(v); };
    t["oracle.max_iters"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) {
      c.oracle_max_iters = r.count(v);
    };
    t["oracle.stationarity_tol"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) {
      c.oracle_stationarity_tol = r.number(v);
    };
    t["oracle.feasibility_tol"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) {
      c.oracle_feasibility_tol = r.number(v);
    };

    t["output.dir"] = [](ExperimentConfig& c, std::string_view v, const ValueReader&) { c.output_dir = std::string(v); };
    t["output.snapshot_every"] = [](ExperimentConfig& c, std::string_view v, const ValueReader& r) {
      c.snapshot_every = r.count(v);
    };
    return t;
  }();
  return table;
}

}  // namespace detail

/// Sets one key. line is used for error messages only.
inline void set_config_value(ExperimentConfig& cfg, const std::string& key, std::string_view value,
                             std::size_t line = 0) {
  const auto& table = detail::setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError(key, line, "unknown key");
  const std::string_view v = detail::trim(value);
  const detail::ValueReader reader{key, line};
  if (v.empty()) reader.fail("missing value");
  it->second(cfg, v, reader);
  cfg.origin[key] = line;
}

/// Applies a command-line "key=value" override.
inline void apply_override(ExperimentConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("", 0, "override '" + std::string(assignment) + "' is not of the form key=value");
  }
  set_config_value(cfg, std::string(detail::trim(assignment.substr(0, eq))), assignment.substr(eq + 1));
}

/// Checks ranges and cross-key consistency; errors name the offending key.
inline void validate(const ExperimentConfig& cfg) {
  auto fail = [&](const std::string& key, const std::string& what) {
    const auto it = cfg.origin.find(key);
    throw ConfigError(key, it == cfg.origin.end() ? 0 : it->second, what);
  };
  auto positive = [&](const std::string& key, double v) {
    if (!(v > 0.0)) fail(key, "must be positive");
  };
  if (!cfg.mode) fail("mode", "missing required key (set it in the config or via the subcommand)");

  if (cfg.agent_count < 2) fail("agents.count", "need at least two agents");
  if (cfg.agent_init == "box" && !cfg.init_box) fail("agents.init_box", "required when agents.init = box");
  positive("transport.eps", cfg.transport.eps);
  positive("transport.tau", cfg.transport.tau);
  positive("transport.grad_tol", cfg.transport.grad_tol);
  positive("transport.comm_radius", cfg.transport.comm_radius);
  if (cfg.transport.fixed_dual) positive("transport.fixed_dual", *cfg.transport.fixed_dual);
  if (cfg.mode == RunMode::kAgentsFixedDual && !cfg.transport.fixed_dual) {
    fail("transport.fixed_dual", "required when mode = agents_fixed_dual");
  }

  positive("metric.xi", cfg.xi);
  if (!(cfg.domain_hi.x > cfg.domain_lo.x) || !(cfg.domain_hi.y > cfg.domain_lo.y)) {
    fail(cfg.origin.count("domain.hi") ? "domain.hi" : "domain.lo", "domain must have positive width and height");
  }

  const auto& t = cfg.target;
  if (t.kind == "pgm") {
    if (t.pgm_path.empty()) fail("target.pgm_path", "required when target.kind = pgm");
  } else {
    const std::size_t k = t.random_means ? std::max<std::size_t>(1, std::max(t.covariances.size(), t.weights.size()))
                                         : t.means.size();
    if (k == 0) fail("target.means", "need at least one component");
    if (t.covariances.size() != 1 && t.covariances.size() != k) {
      fail("target.covariances", "expected 1 or " + std::to_string(k) + " matrices");
    }
    if (t.weights.size() != 1 && t.weights.size() != k) {
      fail("target.weights", "expected 1 or " + std::to_string(k) + " weights");
    }
    for (const auto& s : t.covariances) {
      const double det = s[0] * s[3] - s[1] * s[2];
      if (!(s[0] > 0.0) || !(det > 0.0) || s[1] != s[2]) fail("target.covariances", "matrices must be symmetric positive definite");
    }
    for (double w : t.weights) {
      if (!(w > 0.0)) fail("target.weights", "weights must be positive");
    }
  }
  if (cfg.init_box) {
    const Domain d = cfg.domain();
    if (!d.contains(cfg.init_box->lo()) || !d.contains(cfg.init_box->hi())) {
      fail("agents.init_box", "must lie inside the domain");
    }
  }
  if (cfg.quadrature < 2) fail("quadrature.resolution", "must be at least 2");

  if (cfg.grid_nx < 2) fail("grid.nx", "must be at least 2");
  if (cfg.grid_ny < 2) fail("grid.ny", "must be at least 2");
  positive("grid.cost", cfg.grid_cost);
  positive("pde.dt", cfg.pde_dt);
  if (!(cfg.pde_horizon >= 0.0)) fail("pde.horizon", "must be nonnegative");
  if (cfg.pde_mode != CoupledMode::kInnerSteadyState && cfg.pde_inner_iters < 1) {
    fail("pde.inner_iters", "must be at least 1 in on-the-fly modes");
  }
  positive("pde.fixed_dual", cfg.pde_fixed_dual);
  if (!(cfg.pde_lambda0 >= 0.0)) fail("pde.lambda0", "must be nonnegative");
  positive("pde.steady_tol", cfg.pde_steady_tol);

  if (cfg.oracle_nodes < 2) fail("oracle.nodes", "need at least two nodes");
  positive("oracle.tau", cfg.oracle_tau);
  positive("oracle.stationarity_tol", cfg.oracle_stationarity_tol);
  positive("oracle.feasibility_tol", cfg.oracle_feasibility_tol);
  if (cfg.output_dir.empty()) fail("output.dir", "must not be empty");
}

/// Parses config text. default_mode fills in mode when the text has none.
inline ExperimentConfig load_config(std::string_view text, std::optional<RunMode> default_mode = {},
                                    bool check = true) {
  ExperimentConfig cfg;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("", line_no, "expected 'key = value'");
    const std::string key(detail::trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError("", line_no, "missing key before '='");
    if (cfg.origin.count(key)) throw ConfigError(key, line_no, "duplicate key");
    set_config_value(cfg, key, line.substr(eq + 1), line_no);
  }
  if (!cfg.mode) cfg.mode = default_mode;
  if (check) validate(cfg);
  return cfg;
}

}  // namespace swarm_ot

#endif  // SWARM_OT_CONFIG_HPP
