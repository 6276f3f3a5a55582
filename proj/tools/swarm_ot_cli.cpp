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

// swarm-ot <agents|pde|oracle-check|fig N> [--config PATH] [--seed U64]
//          [--out DIR] [--threads K] [--set key=value]...

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "swarm_ot/config.hpp"
#include "swarm_ot/harness.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  unsigned threads = 1;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config_path, "Config file (flat 'section.key = value' lines)")
      ->check(CLI::ExistingFile);
  sub->add_option("--seed", f.seed, "Override the config seed");
  sub->add_option("--out", f.out_dir, "Output directory (default: output.dir)");
  sub->add_option("--threads", f.threads, "Worker threads; results do not depend on it")
      ->check(CLI::Range(1u, 1024u));
  sub->add_option("--set", f.overrides, "Override a config key, e.g. --set transport.eps=0.01");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed on-the-fly optimal transport of agent swarms and its grid PDE limit"};
  app.require_subcommand(1);
  CommonFlags flags;
  int figure = 0;

  auto* agents = app.add_subcommand("agents", "Run the multi-agent transport");
  auto* pde = app.add_subcommand("pde", "Run the grid density dynamics");
  auto* oracle = app.add_subcommand("oracle-check", "Compare the primal-dual solver with exact min-cost flow");
  auto* fig = app.add_subcommand("fig", "Write the data behind figure N (2..6)");
  fig->add_option("N", figure, "Figure number")->required()->check(CLI::Range(2, 6));
  for (auto* sub : {agents, pde, oracle, fig}) add_common(sub, flags);

  CLI11_PARSE(app, argc, argv);

  using swarm_ot::Command;
  Command cmd = Command::kAgents;
  if (pde->parsed()) cmd = Command::kPde;
  if (oracle->parsed()) cmd = Command::kOracleCheck;
  if (fig->parsed()) cmd = Command::kFigure;

  swarm_ot::ExperimentConfig cfg;
  swarm_ot::RunOptions opt;
  try {
    if (!flags.config_path.empty()) {
      cfg = swarm_ot::load_config(read_file(flags.config_path), std::nullopt, /*check=*/false);
      opt.config_dir = std::filesystem::path(flags.config_path).parent_path();
      if (opt.config_dir.empty()) opt.config_dir = ".";
    }
    for (const auto& o : flags.overrides) swarm_ot::apply_override(cfg, o);
    if (flags.seed) cfg.seed = *flags.seed;
  } catch (const std::exception& e) {
    std::cerr << "swarm-ot: " << e.what() << '\n';
    return 1;
  }
  opt.out_dir = flags.out_dir.empty() ? std::filesystem::path(cfg.output_dir) : std::filesystem::path(flags.out_dir);
  opt.threads = flags.threads;
  return swarm_ot::run(cmd, cfg, opt, std::cout, std::cerr, figure);
}
