#include "contractive/run_config.hpp"

#include <chrono>
#include <iomanip>
#include <sstream>

#include "contractive/serialization.hpp"

namespace contractive {

using nlohmann::json;

json default_run_config() {
  return json::parse(R"({
    "task": {
      "dataset": "mnist",
      "data_root": "",
      "mode": "row",
      "permutation_seed": null,
      "downsample": 1,
      "limit_train": 0,
      "limit_test": 0
    },
    "architecture": {
      "variant": "sparse",
      "p": 4,
      "n_sub": 16,
      "g": 1.0,
      "init": {
        "density": 0.4,
        "pre_scalar": 0.4,
        "post_scalar": 1.0,
        "max_tries": 100000,
        "pattern": "exact"
      },
      "feedback": "lower",
      "feedback_density": 1.0,
      "control_mode": false,
      "tau": 1.0,
      "alpha": 1.0,
      "activation": "relu"
    },
    "training": {
      "epochs": 10,
      "batch": 128,
      "lr": 0.001,
      "wd": 1e-05,
      "schedule": [[90, 0.1], [140, 0.1]],
      "clip": 0.0,
      "seed": 0
    },
    "io": {
      "out": "run",
      "checkpoint": "model.ckpt",
      "log": "train_log.csv"
    }
  })");
}

namespace {

bool same_kind(const json& schema, const json& value) {
  if (schema.is_number()) return value.is_number();
  return schema.type() == value.type();
}

void overlay(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& [key, value] : user.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + here + "'");
    json& slot = base[key];
    if (here == "task.permutation_seed") {
      if (!value.is_null() && !value.is_number_integer()) {
        throw ConfigError(here + ": expected null or an integer");
      }
      slot = value;
    } else if (slot.is_object()) {
      overlay(slot, value, here);
    } else if (!same_kind(slot, value)) {
      throw ConfigError(here + ": expected " + std::string(slot.type_name()) + ", got " +
                        value.type_name());
    } else {
      slot = value;
    }
  }
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

void check_ranges(const json& c) {
  const auto& t = c["task"];
  require(t["dataset"] == "mnist" || t["dataset"] == "cifar10",
          "task.dataset: expected \"mnist\" or \"cifar10\"");
  require(t["mode"] == "pixel" || t["mode"] == "row", "task.mode: expected \"pixel\" or \"row\"");
  require(t["downsample"].is_number_integer() && t["downsample"].get<int>() >= 1,
          "task.downsample: integer >= 1");
  require(t["limit_train"].get<long>() >= 0 && t["limit_test"].get<long>() >= 0,
          "task.limit_*: must be >= 0");
  const auto& a = c["architecture"];
  require(a["variant"] == "sparse" || a["variant"] == "svd",
          "architecture.variant: expected \"sparse\" or \"svd\"");
  require(a["p"].is_number_integer() && a["p"].get<int>() >= 1, "architecture.p: integer >= 1");
  require(a["n_sub"].is_number_integer() && a["n_sub"].get<int>() >= 1,
          "architecture.n_sub: integer >= 1");
  require(a["feedback"] == "lower" || a["feedback"] == "all",
          "architecture.feedback: expected \"lower\" or \"all\"");
  require(a["activation"] == "relu" || a["activation"] == "tanh",
          "architecture.activation: expected \"relu\" or \"tanh\"");
  const auto& tr = c["training"];
  require(tr["epochs"].is_number_integer() && tr["epochs"].get<int>() >= 0,
          "training.epochs: integer >= 0");
  require(tr["batch"].is_number_integer() && tr["batch"].get<int>() >= 1,
          "training.batch: integer >= 1");
  require(tr["seed"].is_number_integer(), "training.seed: integer");
  for (const auto& e : tr["schedule"]) {
    require(e.is_array() && e.size() == 2 && e[0].is_number_integer() && e[1].is_number(),
            "training.schedule: expected [[epoch, multiplier], ...]");
  }
  // The remaining checks live in the typed validators.
  architecture_from_config(c).validate();
  sparse_init_from_config(c).validate();
}

}  // namespace

json resolve_run_config(const json& user) {
  json cfg = default_run_config();
  overlay(cfg, user.is_null() ? json::object() : user, "");
  try {
    check_ranges(cfg);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

json overlay_on_defaults(const json& defaults, const json& user) {
  json cfg = defaults;
  overlay(cfg, user.is_null() ? json::object() : user, "");
  return cfg;
}

json load_run_config(const std::filesystem::path& path) {
  try {
    return resolve_run_config(json::parse(read_text_file(path)));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
}

void set_config_value(json& cfg, const std::string& dotted, const std::string& value) {
  json patch;
  try {
    patch = json::parse(value);
  } catch (const json::parse_error&) {
    patch = value;
  }
  std::vector<std::string> parts;
  std::stringstream ss(dotted);
  for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);
  json nested = patch;
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) nested = json{{*it, nested}};
  json user = cfg;
  user.merge_patch(nested);
  // merge_patch drops nulls; restore an explicit null seed.
  if (dotted == "task.permutation_seed" && patch.is_null()) user["task"]["permutation_seed"] = nullptr;
  cfg = resolve_run_config(user);
}

SparseInitConfig sparse_init_from_config(const json& cfg) {
  const auto& a = cfg.at("architecture");
  const auto& i = a.at("init");
  SparseInitConfig s;
  s.n = a.at("n_sub").get<Eigen::Index>();
  s.density = i.at("density").get<double>();
  s.pre_scalar = i.at("pre_scalar").get<double>();
  s.post_scalar = i.at("post_scalar").get<double>();
  s.max_tries = i.at("max_tries").get<std::size_t>();
  s.pattern = sparse_pattern_from_string(i.at("pattern").get<std::string>());
  s.seed = cfg.at("training").at("seed").get<std::uint64_t>();
  return s;
}

ArchitectureSpec architecture_from_config(const json& cfg) {
  const auto& a = cfg.at("architecture");
  ArchitectureSpec s;
  s.variant = variant_from_string(a.at("variant").get<std::string>());
  s.p = a.at("p").get<int>();
  s.n_sub = a.at("n_sub").get<Eigen::Index>();
  s.g = a.at("g").get<double>();
  s.init = sparse_init_from_config(cfg);
  s.feedback_density = a.at("feedback_density").get<double>();
  s.mode = a.at("control_mode").get<bool>()
               ? FeedbackMode::Control
               : feedback_mode_from_string(a.at("feedback").get<std::string>());
  s.tau = a.at("tau").get<double>();
  s.alpha = a.at("alpha").get<double>();
  s.activation = a.at("activation") == "tanh" ? Activation::Tanh : Activation::ReLU;
  const auto& t = cfg.at("task");
  const bool cifar = t.at("dataset") == "cifar10";
  const int side = (cifar ? 32 : 28) / t.at("downsample").get<int>();
  const int channels = cifar ? 3 : 1;
  s.in_dim = t.at("mode") == "pixel" ? channels : side * channels;
  s.out_dim = 10;
  return s;
}

OptimizerSpec optimizer_from_config(const json& cfg) {
  const auto& t = cfg.at("training");
  OptimizerSpec o;
  o.lr = t.at("lr").get<double>();
  o.weight_decay = t.at("wd").get<double>();
  o.schedule = t.at("schedule").get<std::vector<std::pair<int, double>>>();
  o.clip_norm = t.at("clip").get<double>();
  return o;
}

SequenceConfig sequence_from_config(const json& cfg) {
  const auto& t = cfg.at("task");
  SequenceConfig s;
  s.mode = sequence_mode_from_string(t.at("mode").get<std::string>());
  if (!t.at("permutation_seed").is_null()) {
    s.permutation_seed = t.at("permutation_seed").get<std::uint64_t>();
  }
  s.downsample = t.at("downsample").get<int>();
  return s;
}

SequenceSet load_task_split(const json& cfg, Split split) {
  const auto& t = cfg.at("task");
  std::filesystem::path root = t.at("data_root").get<std::string>();
  if (root.empty()) {
    const auto env = data_root_from_env();
    if (!env) throw DataError("no dataset root: set task.data_root or CONTRACTIVENETS_DATA");
    root = *env;
  }
  const bool cifar = t.at("dataset") == "cifar10";
  Dataset ds = cifar ? load_cifar10(root / "cifar-10-batches-bin", split)
                     : load_mnist(root / "mnist", split);
  const auto limit = t.at(split == Split::Train ? "limit_train" : "limit_test").get<std::size_t>();
  if (limit > 0) ds = ds.head(limit);
  return sequentialize(ds, sequence_from_config(cfg));
}

std::string training_log_header() {
  return "epoch,lr,train_loss,train_acc,test_acc,skew_residual,wall_seconds";
}

std::string training_log_line(const EpochRecord& r) {
  std::ostringstream os;
  os << std::setprecision(10) << r.epoch << ',' << r.lr << ',' << r.train_loss << ','
     << r.train_accuracy << ',' << r.test_accuracy << ',' << r.skew_residual << ','
     << std::setprecision(4) << r.wall_seconds;
  return os.str();
}

RunResult run_training(const json& cfg, const SequenceSet& train, const SequenceSet& test,
                       const std::function<void(const EpochRecord&, const Model&)>& on_epoch) {
  const auto seed = cfg.at("training").at("seed").get<std::uint64_t>();
  RunResult run;
  run.model = initialize_model(architecture_from_config(cfg), optimizer_from_config(cfg), seed);
  const auto epochs = cfg.at("training").at("epochs").get<int>();
  const auto batch = cfg.at("training").at("batch").get<std::size_t>();
  if (train.dim != run.model.tmpl.net.in_dim()) {
    throw ConfigError("dataset step dimension " + std::to_string(train.dim) +
                      " does not match the input layer (" +
                      std::to_string(run.model.tmpl.net.in_dim()) + ")");
  }
  const auto start = std::chrono::steady_clock::now();
  for (int e = 0; e < epochs; ++e) {
    const EpochMetrics m = train_epoch(run.model.state, run.model.tmpl, train, batch, seed);
    EpochRecord r;
    r.epoch = run.model.state.epoch;
    r.lr = m.lr;
    r.train_loss = m.train_loss;
    r.train_accuracy = m.train_accuracy;
    r.test_accuracy = evaluate(run.model.state, run.model.tmpl, test).accuracy;
    r.skew_residual = m.skew_residual;
    r.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    run.history.push_back(r);
    if (on_epoch) on_epoch(r, run.model);
  }
  return run;
}

}  // namespace contractive
