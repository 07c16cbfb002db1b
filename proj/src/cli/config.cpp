#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "cdsgd/cli.hpp"
#include "cdsgd/format.hpp"

namespace cdsgd::cli {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_unsigned(const std::string& key, const std::string& v) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a finite number, got '" + v + "'");
  }
  return out;
}

bool parse_flag(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

struct Field {
  const char* name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class T>
Field uint_field(const char* name, T ExperimentConfig::*member) {
  return {name, [=](ExperimentConfig& c, const std::string& v) {
            c.*member = parse_unsigned<T>(name, v);
          },
          [=](const ExperimentConfig& c) { return std::to_string(c.*member); }};
}

template <class T>
Field hp_uint_field(const char* name, T HyperParams::*member) {
  return {name, [=](ExperimentConfig& c, const std::string& v) {
            c.hp.*member = parse_unsigned<T>(name, v);
          },
          [=](const ExperimentConfig& c) { return std::to_string(c.hp.*member); }};
}

Field hp_real_field(const char* name, double HyperParams::*member) {
  return {name, [=](ExperimentConfig& c, const std::string& v) {
            c.hp.*member = parse_real(name, v);
          },
          [=](const ExperimentConfig& c) { return format_double(c.hp.*member); }};
}

Field real_field(const char* name, double ExperimentConfig::*member) {
  return {name, [=](ExperimentConfig& c, const std::string& v) {
            c.*member = parse_real(name, v);
          },
          [=](const ExperimentConfig& c) { return format_double(c.*member); }};
}

TransportKind parse_transport(const std::string& v) {
  if (v == "inprocess") return TransportKind::in_process;
  if (v == "socket") return TransportKind::socket;
  throw ConfigError("transport: expected inprocess or socket, got '" + v + "'");
}

Scheduler parse_scheduler(const std::string& v) {
  if (v == "lockstep") return Scheduler::lock_step;
  if (v == "threaded") return Scheduler::threaded;
  throw ConfigError("scheduler: expected lockstep or threaded, got '" + v + "'");
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"algo", [](ExperimentConfig& c, const std::string& v) { c.hp.algo = parse_algorithm(v); },
       [](const ExperimentConfig& c) { return std::string(to_string(c.hp.algo)); }},
      hp_uint_field("workers", &HyperParams::workers),
      hp_uint_field("k", &HyperParams::k),
      hp_real_field("alpha", &HyperParams::alpha),
      hp_real_field("eta_global", &HyperParams::eta_global),
      hp_real_field("eta_local", &HyperParams::eta_local),
      hp_uint_field("warmup_n", &HyperParams::warmup_n),
      hp_uint_field("batch_size", &HyperParams::batch_size),
      hp_uint_field("epochs", &HyperParams::epochs),
      hp_uint_field("iterations", &HyperParams::iterations),
      hp_uint_field("seed", &HyperParams::seed),
      {"model", [](ExperimentConfig& c, const std::string& v) { c.model = parse_model_kind(v); },
       [](const ExperimentConfig& c) { return std::string(to_string(c.model)); }},
      uint_field("input_dim", &ExperimentConfig::input_dim),
      uint_field("hidden_dim", &ExperimentConfig::hidden_dim),
      uint_field("classes", &ExperimentConfig::classes),
      {"dataset", [](ExperimentConfig& c, const std::string& v) { c.dataset = v; },
       [](const ExperimentConfig& c) { return c.dataset; }},
      uint_field("n_examples", &ExperimentConfig::n_examples),
      uint_field("n_test", &ExperimentConfig::n_test),
      real_field("noise", &ExperimentConfig::noise),
      real_field("spread", &ExperimentConfig::spread),
      uint_field("data_seed", &ExperimentConfig::data_seed),
      {"transport",
       [](ExperimentConfig& c, const std::string& v) { c.transport = parse_transport(v); },
       [](const ExperimentConfig& c) { return std::string(to_string(c.transport)); }},
      {"scheduler",
       [](ExperimentConfig& c, const std::string& v) { c.scheduler = parse_scheduler(v); },
       [](const ExperimentConfig& c) { return std::string(to_string(c.scheduler)); }},
      {"record_timing",
       [](ExperimentConfig& c, const std::string& v) {
         c.record_timing = parse_flag("record_timing", v);
       },
       [](const ExperimentConfig& c) { return std::string(c.record_timing ? "true" : "false"); }},
      {"out", [](ExperimentConfig& c, const std::string& v) { c.out = v; },
       [](const ExperimentConfig& c) { return c.out; }},
  };
  return table;
}

void assign(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.name) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void ExperimentConfig::validate() const {
  hp.validate();
  if (input_dim < 1) throw ConfigError("input_dim must be ≥ 1");
  if (model != ModelKind::linear_regression && classes < 2) {
    throw ConfigError("classes must be ≥ 2");
  }
  if (model == ModelKind::mlp_1hidden && hidden_dim < 1) {
    throw ConfigError("hidden_dim must be ≥ 1");
  }
  if (dataset.empty()) throw ConfigError("dataset must be 'synthetic' or a CSV path");
  if (dataset == "synthetic" && n_examples < hp.workers) {
    throw ConfigError("n_examples must be ≥ workers");
  }
  if (!(noise >= 0.0)) throw ConfigError("noise must be ≥ 0");
  if (!(spread > 0.0)) throw ConfigError("spread must be > 0");
  if (out.empty()) throw ConfigError("out must name a directory");
}

std::pair<std::string, std::string> split_assignment(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + s + "'");
  return {trim(std::string_view(s).substr(0, eq)), trim(std::string_view(s).substr(eq + 1))};
}

ExperimentConfig parse_config_text(const std::string& text, const Overrides& overrides,
                                   const std::string& origin) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      auto [key, value] = split_assignment(line);
      assign(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  for (const auto& [key, value] : overrides) assign(cfg, key, value);
  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config(const std::optional<std::filesystem::path>& path,
                              const Overrides& overrides) {
  if (!path) return parse_config_text("", overrides);
  std::ifstream in(*path);
  if (!in) throw ConfigError("cannot open config " + path->string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), overrides, path->string());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) {
    out += f.name;
    out += " = ";
    out += f.get(cfg);
    out += '\n';
  }
  return out;
}

TrainingSetup build_setup(const ExperimentConfig& cfg) {
  cfg.validate();
  ModelDims dims;
  dims.input = cfg.input_dim;
  switch (cfg.model) {
    case ModelKind::linear_regression: dims.output = 1; break;
    case ModelKind::logistic_regression: dims.output = cfg.classes; break;
    case ModelKind::mlp_1hidden:
      dims.hidden = cfg.hidden_dim;
      dims.output = cfg.classes;
      break;
  }
  Model model(cfg.model, dims);

  Dataset all;
  if (cfg.dataset == "synthetic") {
    SyntheticSpec spec;
    spec.kind = cfg.model;
    spec.n_examples = cfg.n_examples + cfg.n_test;
    spec.dims = dims;
    spec.noise = cfg.noise;
    spec.seed = cfg.data_seed;
    spec.spread = cfg.spread;
    all = generate_synthetic(spec).data;
  } else {
    all = load_csv(cfg.dataset);
    if (all.cols != cfg.input_dim) {
      throw ConfigError("dataset " + cfg.dataset + " has " + std::to_string(all.cols) +
                        " features but input_dim is " + std::to_string(cfg.input_dim));
    }
    if (model.is_classifier()) {
      for (double t : all.targets) {
        if (t < 0 || t >= static_cast<double>(cfg.classes) || t != std::floor(t)) {
          throw ConfigError("dataset " + cfg.dataset + " has label " + format_double(t) +
                            " outside 0.." + std::to_string(cfg.classes - 1));
        }
      }
    }
  }

  std::optional<Dataset> test;
  Dataset train;
  if (cfg.n_test > 0) {
    auto [tr, te] = split_train_test(all, cfg.n_test);
    train = std::move(tr);
    test = std::move(te);
  } else {
    train = std::move(all);
  }
  if (train.rows < cfg.hp.workers) {
    throw ConfigError("training split has " + std::to_string(train.rows) + " rows for " +
                      std::to_string(cfg.hp.workers) + " workers");
  }
  WeightVector initial = model.init_weights(derive_seed(cfg.hp.seed, 0x1417));
  return TrainingSetup{std::move(model), std::move(train), std::move(test), cfg.hp,
                       std::move(initial)};
}

}  // namespace cdsgd::cli
