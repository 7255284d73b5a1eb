// probe: command-line front end for the pcorrupt library.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pcorrupt.hpp"

using namespace pcorrupt;
using json = nlohmann::json;
using Real = float;

namespace {

// Flat JSON object -> CLI11 config items for the selected verb. Arrays become
// multi-value inputs. Explicit flags win because CLI11 skips config values
// for options already given on the command line.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(std::vector<std::string> parents) : parents_(std::move(parents)) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override {
    throw CLI::ConfigError("writing JSON config is not supported");
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw CLI::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConfigError("config must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      CLI::ConfigItem item;
      item.parents = parents_;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw CLI::ConfigError("config values must be scalars or arrays of scalars");
  }

  std::vector<std::string> parents_;
};

struct ModelOpts {
  std::string arch = "mlp";
  std::vector<std::size_t> layers{2, 16, 16, 2};
  std::string activation = "tanh";
  std::string norm = "none";
  std::string loss = "cross-entropy";
  std::optional<std::uint64_t> model_seed;

  ModelSpec spec(std::uint64_t seed) const {
    ModelSpec s;
    s.architecture = architecture_from_string(arch);
    s.layer_sizes = layers;
    s.activation = activation_from_string(activation);
    s.normalization = normalization_from_string(norm);
    s.loss = loss_from_string(loss);
    s.seed = model_seed.value_or(seed);
    s.validate();
    return s;
  }
};

struct DataOpts {
  std::string kind = "two-moons";
  std::vector<std::string> paths;
  std::size_t points = 1000;
  double noise = 0.1;
  double split = 0.8;
  std::optional<std::uint64_t> data_seed;

  Dataset<Real> load(std::uint64_t seed) const {
    DatasetSource src;
    src.kind = dataset_kind_from_string(kind);
    src.paths = paths;
    src.points = points;
    src.noise = noise;
    src.split_fraction = split;
    src.seed = data_seed.value_or(seed);
    return load_dataset<Real>(src);
  }
};

struct OutOpts {
  std::string format = "csv";
  std::string out;

  void write(const std::string& text) const {
    if (out.empty() || out == "-") {
      std::fwrite(text.data(), 1, text.size(), stdout);
      std::fflush(stdout);
    } else {
      write_text(out, text);
    }
  }
};

void add_seed(CLI::App* sub, std::uint64_t& seed) {
  sub->add_option("--seed", seed, "Seed for every random stream (env PROBE_SEED)")->envname("PROBE_SEED");
}

void add_model(CLI::App* sub, ModelOpts& m) {
  sub->add_option("--arch", m.arch, "mlp | convnet-small | linear-softmax");
  sub->add_option("--layers", m.layers, "Layer sizes")->expected(2, 16);
  sub->add_option("--activation", m.activation, "tanh | relu | softplus");
  sub->add_option("--norm", m.norm, "none | per-layer-scale-bias");
  sub->add_option("--loss", m.loss, "cross-entropy | mse");
  sub->add_option("--model-seed", m.model_seed, "Initialisation seed (default: --seed)");
}

void add_data(CLI::App* sub, DataOpts& d) {
  sub->add_option("--data", d.kind, "two-moons | spiral | xor | idx-pair | csv");
  sub->add_option("--data-path", d.paths, "Input files (idx-pair: images labels; csv: file)")->expected(1, 2);
  sub->add_option("--points", d.points, "Synthetic dataset size");
  sub->add_option("--noise", d.noise, "Synthetic dataset noise");
  sub->add_option("--split", d.split, "Train fraction");
  sub->add_option("--data-seed", d.data_seed, "Dataset and split seed (default: --seed)");
}

void add_out(CLI::App* sub, OutOpts& o, bool svg) {
  sub->add_option("--format", o.format, svg ? "csv | json | svg" : "csv | json");
  sub->add_option("--out", o.out, "Output path (default stdout)");
}

// Model and parameters from a checkpoint, or a freshly initialised model.
struct Loaded {
  ModelSpec spec;
  std::shared_ptr<const Network<Real>> model;
  FlatParams<Real> params;
};

Loaded load_or_init(const std::string& checkpoint, const ModelOpts& m, std::uint64_t seed) {
  Loaded l;
  if (!checkpoint.empty()) {
    auto ck = load_checkpoint(checkpoint);
    l.spec = ck.spec;
    l.model = std::make_shared<const Network<Real>>(ck.spec);
    l.params = std::move(ck.params);
  } else {
    l.spec = m.spec(seed);
    auto built = build_model<Real>(l.spec);
    l.model = built.model;
    l.params = std::move(built.params);
  }
  return l;
}

const Batch<Real>& pick_split(const Dataset<Real>& d, const std::string& which) {
  if (which == "train") return d.train;
  if (which == "eval") return d.eval;
  throw ValidationError("split must be train or eval, got '" + which + "'");
}

json estimate_json(const IndicatorEstimate& e) {
  return {{"delta_loss", e.delta_loss},
          {"first_order", e.first_order},
          {"ratio", e.ratio},
          {"base_loss", e.base_loss},
          {"p", norm_string(e.constraint.p)},
          {"epsilon", e.constraint.epsilon},
          {"n", e.constraint.n},
          {"nonzeros", e.corruption.nonzeros()},
          {"provenance", to_string(e.corruption.provenance)}};
}

std::vector<std::string> verb_path(int argc, char** argv) {
  static const std::vector<std::string> verbs{"train",    "acrt-train",       "corrupt",    "mc-random",
                                              "scan",     "robustness-table", "checkpoint", "theory"};
  std::vector<std::string> path;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (path.empty() && std::find(verbs.begin(), verbs.end(), a) != verbs.end()) {
      path.push_back(a);
    } else if (path.size() == 1 && (path[0] == "theory" || path[0] == "checkpoint") && a.rfind("-", 0) != 0) {
      path.push_back(a);
      break;
    } else if (!path.empty()) {
      break;
    }
  }
  return path;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parameter corruption probing and corruption-resistant training"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "JSON file of option values for the chosen verb");
  app.config_formatter(std::make_shared<JsonConfig>(verb_path(argc, argv)));
  app.allow_config_extras(CLI::config_extras_mode::error);

  std::uint64_t seed = 0;
  ModelOpts mopt;
  DataOpts dopt;
  OutOpts oopt;
  std::string checkpoint, log_path, grad_split = "train";
  AcrtConfig cfg;
  std::string variant = "direct-lstar", optimizer = "sgd-momentum", p_str = "2";
  double alpha = kDefaultAlpha;
  std::optional<double> lambda;

  auto add_training = [&](CLI::App* sub) {
    sub->add_option("--optimizer", optimizer, "sgd-momentum | adam-lite");
    sub->add_option("--lr", cfg.learning_rate, "Learning rate");
    sub->add_option("--momentum", cfg.momentum, "SGD momentum");
    sub->add_option("--epochs", cfg.epochs, "Epochs");
    sub->add_option("--batch-size", cfg.batch_size, "Minibatch size");
    sub->add_option("--out", checkpoint, "Checkpoint to write")->required();
    sub->add_option("--log", log_path, "Per-epoch JSON lines (default stdout)");
  };

  auto* train_cmd = app.add_subcommand("train", "Plain training; writes a checkpoint");
  add_seed(train_cmd, seed);
  add_model(train_cmd, mopt);
  add_data(train_cmd, dopt);
  add_training(train_cmd);

  auto* acrt_cmd = app.add_subcommand("acrt-train", "Corruption-resistant training; writes a checkpoint");
  add_seed(acrt_cmd, seed);
  add_model(acrt_cmd, mopt);
  add_data(acrt_cmd, dopt);
  add_training(acrt_cmd);
  acrt_cmd->add_option("--variant", variant, "direct-lstar | grad-reg | baseline");
  acrt_cmd->add_option("--alpha", alpha, "Mixing weight of the corrupted loss");
  acrt_cmd->add_option("--lambda", lambda, "Gradient-norm weight (default alpha * eps)");
  acrt_cmd->add_option("--p", p_str, "Virtual corruption norm (number or inf)");
  acrt_cmd->add_option("--eps", cfg.epsilon, "Virtual corruption radius")->required();
  acrt_cmd->add_option("--n", cfg.n, "Virtual corruption count (0: all)");
  acrt_cmd->add_option("--warmup", cfg.warmup_epochs, "Plain epochs before the robust objective");
  acrt_cmd->add_option("--hvp-delta", cfg.hvp_delta, "Gradient difference step for grad-reg");

  double eps = 1e-3;
  std::size_t n = 0;
  std::string mode = "gradient", corrupt_out;
  auto* corrupt_cmd = app.add_subcommand("corrupt", "Apply one corruption and report the loss change");
  add_seed(corrupt_cmd, seed);
  add_model(corrupt_cmd, mopt);
  add_data(corrupt_cmd, dopt);
  corrupt_cmd->add_option("--checkpoint", checkpoint, "Input checkpoint");
  corrupt_cmd->add_option("--mode", mode, "gradient | random");
  corrupt_cmd->add_option("--p", p_str, "Norm (number or inf)");
  corrupt_cmd->add_option("--eps", eps, "Radius");
  corrupt_cmd->add_option("--n", n, "Maximum corrupted count (0: all)");
  corrupt_cmd->add_option("--grad-split", grad_split, "train | eval");
  corrupt_cmd->add_option("--write", corrupt_out, "Write the corrupted parameters as a checkpoint");

  std::size_t trials = 1000;
  unsigned jobs = 1;
  auto* mc_cmd = app.add_subcommand("mc-random", "Monte-Carlo random corruption statistics");
  add_seed(mc_cmd, seed);
  add_model(mc_cmd, mopt);
  add_data(mc_cmd, dopt);
  add_out(mc_cmd, oopt, false);
  mc_cmd->add_option("--checkpoint", checkpoint, "Input checkpoint");
  mc_cmd->add_option("--p", p_str, "Norm (number or inf)");
  mc_cmd->add_option("--eps", eps, "Radius");
  mc_cmd->add_option("--n", n, "Maximum corrupted count (0: all)");
  mc_cmd->add_option("--trials", trials, "Trials");
  mc_cmd->add_option("--jobs", jobs, "Worker threads");
  mc_cmd->add_option("--grad-split", grad_split, "Split the loss is measured on (train | eval)");

  std::string axis = "kind";
  std::vector<double> eps_list{1e-3, 1e-2, 1e-1};
  std::optional<double> svg_min, svg_max;
  auto* scan_cmd = app.add_subcommand("scan", "Per-group vulnerability scan");
  add_seed(scan_cmd, seed);
  add_model(scan_cmd, mopt);
  add_data(scan_cmd, dopt);
  add_out(scan_cmd, oopt, true);
  scan_cmd->add_option("--checkpoint", checkpoint, "Input checkpoint");
  scan_cmd->add_option("--axis", axis, "kind | layer");
  scan_cmd->add_option("--eps", eps_list, "Radii");
  scan_cmd->add_option("--p", p_str, "Norm (number or inf)");
  scan_cmd->add_option("--n", n, "Maximum corrupted count per group (0: whole group)");
  scan_cmd->add_option("--grad-split", grad_split, "train | eval");
  scan_cmd->add_option("--svg-min", svg_min, "Fixed lower bound of the colour ramp");
  scan_cmd->add_option("--svg-max", svg_max, "Fixed upper bound of the colour ramp");

  std::string baseline_ck, acrt_ck;
  std::string table_split = "eval";
  auto* table_cmd = app.add_subcommand("robustness-table", "Post-corruption metric for two checkpoints");
  add_seed(table_cmd, seed);
  add_data(table_cmd, dopt);
  add_out(table_cmd, oopt, false);
  table_cmd->add_option("--baseline", baseline_ck, "Baseline checkpoint")->required();
  table_cmd->add_option("--acrt", acrt_ck, "Robust checkpoint")->required();
  table_cmd->add_option("--eps", eps_list, "Radii, strictly increasing");
  table_cmd->add_option("--p", p_str, "Norm (number or inf)");
  table_cmd->add_option("--n", n, "Maximum corrupted count (0: all)");
  table_cmd->add_option("--grad-split", table_split, "train | eval");

  std::string inspect_path;
  auto* ck_cmd = app.add_subcommand("checkpoint", "Checkpoint utilities");
  ck_cmd->require_subcommand(1);
  auto* inspect_cmd = ck_cmd->add_subcommand("inspect", "Print header and payload summary");
  add_seed(inspect_cmd, seed);
  inspect_cmd->add_option("path", inspect_path, "Checkpoint file")->required();

  std::size_t k_dim = 3;
  std::vector<double> xs{0.5};
  double L = 1.0, G = 1.0;
  std::size_t bound_n = 1;
  auto* theory_cmd = app.add_subcommand("theory", "Closed-form theory quantities");
  theory_cmd->require_subcommand(1);
  auto* cdf_cmd = theory_cmd->add_subcommand("eta-cdf", "CDF of eta");
  auto* pdf_cmd = theory_cmd->add_subcommand("eta-density", "Density of eta");
  for (auto* sub : {cdf_cmd, pdf_cmd}) {
    add_seed(sub, seed);
    sub->add_option("--k", k_dim, "Dimension")->required();
    sub->add_option("--x", xs, "Points in [0, 1]");
  }
  auto* bound_cmd = theory_cmd->add_subcommand("bound", "Error bound of the gradient estimate");
  add_seed(bound_cmd, seed);
  bound_cmd->add_option("--p", p_str, "Norm (number or inf)");
  bound_cmd->add_option("--n", bound_n, "Corrupted count")->required();
  bound_cmd->add_option("--k", k_dim, "Parameter count")->required();
  bound_cmd->add_option("--eps", eps, "Radius");
  bound_cmd->add_option("--L", L, "Smoothness constant");
  bound_cmd->add_option("--G", G, "Gradient L2 norm");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const double p = parse_norm(p_str);
    auto emit_log = [&](std::ostream& os) {
      return [&os, &cfg](const EpochLog& e) { os << to_json_line(e, cfg).dump() << '\n' << std::flush; };
    };

    if (*train_cmd || *acrt_cmd) {
      cfg.seed = seed;
      cfg.optimizer = optimizer_from_string(optimizer);
      cfg.p = p;
      if (*acrt_cmd) {
        cfg.variant = acrt_variant_from_string(variant);
        cfg.alpha = alpha;
        cfg.lambda = lambda.value_or(alpha * cfg.epsilon);
      }
      const auto spec = mopt.spec(seed);
      const auto data = dopt.load(seed);
      std::ofstream log_file;
      if (!log_path.empty()) {
        log_file.open(log_path);
        if (!log_file) throw IoError("cannot open '" + log_path + "' for writing");
      }
      std::ostream& log = log_path.empty() ? std::cout : log_file;
      auto result = train(spec, data, cfg, emit_log(log));
      save_checkpoint(checkpoint, spec, result.params);
      return 0;
    }

    if (*corrupt_cmd) {
      auto l = load_or_init(checkpoint, mopt, seed);
      const auto data = dopt.load(seed);
      const auto& split = pick_split(data, grad_split);
      const std::size_t k = l.params.size();
      const auto c = make_constraint(p, eps, n == 0 ? k : std::min(n, k), full_mask(k));
      IndicatorEstimate est;
      if (mode == "gradient") {
        est = estimate_indicator_gradient(*l.model, l.params, split, c);
      } else if (mode == "random") {
        CounterRng rng(seed);
        est.constraint = c;
        est.base_loss = eval_loss(*l.model, l.params, split);
        est.corruption = random_corruption(c, rng);
        const auto g = eval_grad(*l.model, l.params, split);
        est.first_order = est.corruption.dot(std::vector<double>(g.grad.begin(), g.grad.end()));
        est.delta_loss = loss_change(*l.model, std::span<const Real>(l.params.values), est.corruption, split, est.base_loss);
        est.ratio = est.delta_loss / est.first_order;
      } else {
        throw ValidationError("mode must be gradient or random, got '" + mode + "'");
      }
      auto j = estimate_json(est);
      const auto corrupted = apply_corruption(l.params, est.corruption);
      j["metric_before"] = default_metric(*l.model, l.params, data.eval).value;
      j["metric_after"] = default_metric(*l.model, corrupted, data.eval).value;
      std::cout << j.dump(2) << '\n';
      if (!corrupt_out.empty()) save_checkpoint(corrupt_out, l.spec, corrupted);
      return 0;
    }

    if (*mc_cmd) {
      auto l = load_or_init(checkpoint, mopt, seed);
      const auto data = dopt.load(seed);
      const std::size_t k = l.params.size();
      const auto c = make_constraint(p, eps, n == 0 ? k : std::min(n, k), full_mask(k));
      const auto summary = estimate_indicator_montecarlo(*l.model, l.params, pick_split(data, grad_split), c, trials,
                                                         CounterRng(seed), jobs);
      oopt.write(render(summary, report_format_from_string(oopt.format)));
      return 0;
    }

    if (*scan_cmd) {
      auto l = load_or_init(checkpoint, mopt, seed);
      const auto data = dopt.load(seed);
      const auto report = scan(*l.model, l.params, pick_split(data, grad_split), data.eval,
                               group_axis_from_string(axis), eps_list, p, n);
      oopt.write(render(report, report_format_from_string(oopt.format), HeatmapBounds{svg_min, svg_max}));
      return 0;
    }

    if (*table_cmd) {
      const auto a = load_checkpoint(baseline_ck);
      const auto b = load_checkpoint(acrt_ck);
      if (!(a.spec == b.spec)) throw IncompatibleParamsError("checkpoints hold different model specs");
      const Network<Real> model(a.spec);
      const auto data = dopt.load(seed);
      const auto rows = robustness_table(model, std::span<const Real>(a.params.values),
                                         std::span<const Real>(b.params.values), pick_split(data, table_split),
                                         data.eval, eps_list, p, n);
      oopt.write(render(rows, report_format_from_string(oopt.format)));
      return 0;
    }

    if (*inspect_cmd) {
      std::cout << inspect_checkpoint(inspect_path).dump(2) << '\n';
      return 0;
    }

    if (*cdf_cmd || *pdf_cmd) {
      std::printf("x,%s\n", *cdf_cmd ? "cdf" : "density");
      for (double x : xs) {
        const double v = *cdf_cmd ? eta_cdf(x, k_dim) : eta_density(x, k_dim);
        std::printf("%s,%s\n", fmt_real(x).c_str(), fmt_real(v).c_str());
      }
      return 0;
    }

    if (*bound_cmd) {
      const auto b = error_bound({p, bound_n, k_dim, eps, L, G});
      json j{{"excess", b.excess},   {"order_term", b.order_term}, {"g_exponent", b.g_exponent},
             {"beta_p", b.beta_p},   {"beta_q", b.beta_q}};
      std::cout << j.dump(2) << '\n';
      return 0;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
