#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cdsgd/cli.hpp"

using namespace cdsgd;

namespace {

struct CommonFlags {
  std::optional<std::string> config;
  std::optional<std::string> out;
  std::optional<std::string> seed;
  std::optional<std::string> algo;
  std::optional<std::string> k;
  std::optional<std::string> alpha;
  std::optional<std::string> workers;
  std::optional<std::string> transport;
  std::vector<std::string> set;

  void add_to(CLI::App* app, bool with_config) {
    if (with_config) app->add_option("--config", config, "config file (key = value lines)");
    app->add_option("--out", out, "output directory");
    app->add_option("--seed", seed, "run seed");
    app->add_option("--algo", algo, "ssgd | lusgd | bitsgd | cdsgd");
    app->add_option("--k", k, "full-precision correction period");
    app->add_option("--alpha", alpha, "quantization threshold");
    app->add_option("--workers", workers, "number of workers");
    app->add_option("--transport", transport, "inprocess | socket");
    app->add_option("--set", set, "extra key=value override (repeatable)");
  }

  cli::Overrides overrides() const {
    cli::Overrides o;
    for (const auto& s : set) o.push_back(cli::split_assignment(s));
    auto put = [&](const char* key, const std::optional<std::string>& v) {
      if (v) o.emplace_back(key, *v);
    };
    put("out", out);
    put("seed", seed);
    put("algo", algo);
    put("k", k);
    put("alpha", alpha);
    put("workers", workers);
    put("transport", transport);
    return o;
  }
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (ch != ' ') {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CD-SGD parameter-server simulator and cost model"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  cli::TrainOptions train_opts;
  std::optional<std::string> baseline;
  auto* train = app.add_subcommand("train", "run one training job");
  train_flags.add_to(train, true);
  train->add_option("--baseline", baseline, "previous run directory to overlay");
  train->add_option("--listen", train_opts.listen, "serve external workers on ADDR (host:port)");
  train->add_option("--connect", train_opts.connect, "run one worker against ADDR");
  train->add_option("--worker-id", train_opts.worker_id, "worker id with --connect");

  cost::CostParams params;
  std::uint64_t horizon = 0;
  std::optional<std::string> cost_out;
  auto* costmodel = app.add_subcommand("costmodel", "closed-form iteration times");
  costmodel->add_option("--tau", params.tau, "computation time")->required();
  costmodel->add_option("--phi", params.phi, "full-precision communication time")->required();
  costmodel->add_option("--psi", params.psi, "compressed communication time")->required();
  costmodel->add_option("--delta", params.delta, "compression time")->required();
  costmodel->add_option("--k", params.k, "correction period")->default_val(5);
  costmodel->add_option("--horizon", horizon, "iterations to tabulate (default k)");
  costmodel->add_option("--out", cost_out, "directory for timeline.csv");

  std::size_t bench_n = 16384, bench_reps = 200;
  auto* bench = app.add_subcommand("bench-codec", "2-bit codec throughput");
  bench->add_option("--n", bench_n, "elements per payload")->capture_default_str();
  bench->add_option("--reps", bench_reps, "repetitions")->capture_default_str();

  CommonFlags compare_flags;
  std::vector<std::string> compare_configs;
  std::string algos_csv, seeds_csv = "1,2,3";
  auto* compare = app.add_subcommand("compare", "run configs over a seed list");
  compare_flags.add_to(compare, false);
  compare->add_option("--config", compare_configs, "config file (repeatable)");
  compare->add_option("--algos", algos_csv, "expand each config over these algorithms");
  compare->add_option("--seeds", seeds_csv, "comma-separated seeds")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      std::optional<std::filesystem::path> path;
      if (train_flags.config) path = *train_flags.config;
      const auto cfg = cli::parse_config(path, train_flags.overrides());
      if (baseline) train_opts.baseline = *baseline;
      return cli::cmd_train(cfg, train_opts, std::cout, std::cerr);
    }
    if (costmodel->parsed()) {
      std::optional<std::filesystem::path> dir;
      if (cost_out) dir = *cost_out;
      return cli::cmd_costmodel(params, horizon, dir, std::cout, std::cerr);
    }
    if (bench->parsed()) return cli::cmd_bench_codec(bench_n, bench_reps, std::cout, std::cerr);
    if (compare->parsed()) {
      std::vector<std::optional<std::filesystem::path>> paths;
      for (const auto& c : compare_configs) paths.emplace_back(c);
      if (paths.empty()) paths.emplace_back(std::nullopt);
      const auto algos = split_list(algos_csv);
      std::vector<cli::ExperimentConfig> configs;
      for (const auto& p : paths) {
        if (algos.empty()) {
          configs.push_back(cli::parse_config(p, compare_flags.overrides()));
          continue;
        }
        for (const auto& a : algos) {
          auto o = compare_flags.overrides();
          o.emplace_back("algo", a);
          configs.push_back(cli::parse_config(p, o));
        }
      }
      std::vector<std::uint64_t> seeds;
      for (const auto& s : split_list(seeds_csv)) seeds.push_back(std::stoull(s));
      return cli::cmd_compare(configs, seeds, configs.front().out, std::cout, std::cerr);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
