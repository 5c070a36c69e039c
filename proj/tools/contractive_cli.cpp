// contractive: certify, sample, compose, simulate, train, eval.
#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>

#include "contractive/composition.hpp"
#include "contractive/run_config.hpp"
#include "contractive/samplers.hpp"
#include "contractive/serialization.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace contractive;

namespace {

enum Exit { kOk = 0, kUsage = 1, kRejected = 2, kInvariant = 3 };

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 1;
  bool print_effective = false;
  std::vector<std::string> sets;
};

// Overlays --config, then --set key=value pairs, then command flags.
json resolve(const json& defaults, const Globals& g, const json& flags,
             const std::function<json(const json&)>& finish) {
  json doc = defaults;
  if (!g.config.empty()) doc = overlay_on_defaults(doc, json::parse(read_text_file(g.config)));
  for (const auto& kv : g.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    json value;
    try {
      value = json::parse(kv.substr(eq + 1));
    } catch (const json::parse_error&) {
      value = kv.substr(eq + 1);
    }
    json patch = value;
    std::stringstream ss(kv.substr(0, eq));
    std::vector<std::string> parts;
    for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
    doc = overlay_on_defaults(doc, patch);
  }
  doc = overlay_on_defaults(doc, flags);
  return finish ? finish(doc) : doc;
}

bool maybe_print(const Globals& g, const json& cfg) {
  if (!g.print_effective) return false;
  std::cout << cfg.dump(2) << "\n";
  return true;
}

fs::path out_dir(const Globals& g, const std::string& fallback) {
  fs::path dir = g.out.empty() ? fs::path(fallback) : fs::path(g.out);
  fs::create_directories(dir);
  return dir;
}

// ---- certify -------------------------------------------------------------

struct CertifyArgs {
  std::string matrix;
  std::optional<double> g;
  std::string theorem;
  std::string metric_diag;
};

json certify_defaults() {
  return json{{"matrix", ""},          {"g", 1.0}, {"theorem", "auto"}, {"metric_diag", ""},
              {"validate_samples", 2000}, {"seed", 0}};
}

int cmd_certify(const Globals& g, const CertifyArgs& a) {
  json flags = json::object();
  if (!a.matrix.empty()) flags["matrix"] = a.matrix;
  if (a.g) flags["g"] = *a.g;
  if (!a.theorem.empty()) flags["theorem"] = a.theorem;
  if (!a.metric_diag.empty()) flags["metric_diag"] = a.metric_diag;
  if (g.seed) flags["seed"] = *g.seed;
  const json cfg = resolve(certify_defaults(), g, flags, {});
  if (maybe_print(g, cfg)) return kOk;
  if (cfg["matrix"] == "") throw ConfigError("certify: no matrix file given");
  const Matrix w = read_matrix_file(cfg["matrix"].get<std::string>());
  require_square(w, "certify");
  const double slope = cfg["g"].get<double>();
  const std::string which = cfg["theorem"];
  const Eigen::Index n = w.rows();

  std::vector<std::pair<std::string, std::string>> rejections;
  std::optional<Certificate> cert;
  auto attempt = [&](const std::string& name, const std::function<CertifyResult()>& run) {
    if (cert || (which != "auto" && which != name)) return;
    CertifyResult r = run();
    if (r) {
      cert = std::move(*r.certificate);
    } else {
      rejections.emplace_back(name, r.reason);
    }
  };
  const bool symmetric = (w - w.transpose()).norm() <= 1e-10 * (1.0 + w.norm());
  const bool lower = w.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().isZero(0.0);
  const bool upper = w.triangularView<Eigen::StrictlyLower>().toDenseMatrix().isZero(0.0);
  if (symmetric || which == "symmetric") {
    attempt("symmetric", [&] { return certify_symmetric(w, slope); });
  }
  if (lower || upper || which == "triangular") {
    attempt("triangular", [&] { return certify_triangular(w, slope); });
  }
  attempt("abs", [&] { return certify_abs(w, slope); });
  if (cfg["metric_diag"] != "" || which == "svd") {
    attempt("svd", [&] {
      if (cfg["metric_diag"] == "") return CertifyResult::reject("needs --metric-diag");
      const Matrix p = read_matrix_file(cfg["metric_diag"].get<std::string>());
      return certify_svd_condition(w, slope, DiagonalMatrix(Eigen::Map<const Vector>(p.data(), p.size())));
    });
  }
  std::optional<FeasibilityResult> search;
  if (!cert && n <= 4 && (which == "auto" || which == "search")) {
    search = constant_metric_feasible(w, slope, DSet::box_vertices(n, slope));
    if (search->feasible) {
      Certificate c;
      c.theorem = Theorem::Search;
      c.W = w;
      c.g = slope;
      c.metric = search->metric;
      c.margin = -search->best_score;
      c.notes = "constant metric from grid/pattern search over the vertices of [0,g]^n";
      cert = std::move(c);
    } else {
      rejections.emplace_back("search", "no constant metric found");
    }
  }

  const fs::path dir = out_dir(g, ".");
  if (!cert) {
    json report{{"certified", false}, {"n", n}, {"g", slope}};
    for (const auto& [name, why] : rejections) report["rejections"][name] = why;
    if (search) {
      report["constant_metric_search"] = {{"feasible", false},
                                          {"best_score", search->best_score},
                                          {"candidates_evaluated", search->candidates_evaluated}};
    }
    write_text_file(dir / "rejection.json", report.dump(2) + "\n");
    std::cout << report.dump(2) << "\n";
    return kRejected;
  }
  const ValidationReport v =
      validate_certificate(*cert, cfg["validate_samples"].get<std::size_t>(), cfg["seed"].get<std::uint64_t>());
  if (!v.valid()) {
    std::cerr << "internal error: certificate failed validation (worst margin " << v.worst_margin
              << ")\n";
    return kInvariant;
  }
  write_certificate(dir / "certificate.json", *cert);
  std::cout << json{{"certified", true},
                    {"theorem_id", std::string(to_string(cert->theorem))},
                    {"margin", cert->margin},
                    {"validation_worst", v.worst_margin},
                    {"file", (dir / "certificate.json").string()}}
                   .dump(2)
            << "\n";
  return kOk;
}

// ---- sample --------------------------------------------------------------

json sample_defaults() {
  return json{{"n", 32},           {"density", 0.033}, {"pre_scalar", 30.0}, {"post_scalar", 0.2},
              {"max_tries", 100000}, {"seed", 0},       {"count", 1},         {"trials", 2000},
              {"pattern", "exact"}};
}

int cmd_sample(const Globals& g, const json& flags_in) {
  json flags = flags_in;
  if (g.seed) flags["seed"] = *g.seed;
  const json cfg = resolve(sample_defaults(), g, flags, {});
  if (maybe_print(g, cfg)) return kOk;
  SparseInitConfig s;
  s.n = cfg["n"].get<Eigen::Index>();
  s.density = cfg["density"].get<double>();
  s.pre_scalar = cfg["pre_scalar"].get<double>();
  s.post_scalar = cfg["post_scalar"].get<double>();
  s.max_tries = cfg["max_tries"].get<std::size_t>();
  s.seed = cfg["seed"].get<std::uint64_t>();
  s.pattern = sparse_pattern_from_string(cfg["pattern"].get<std::string>());
  s.validate();
  const fs::path dir = out_dir(g, ".");
  json report{{"config", cfg}};
  for (int k = 0; k < cfg["count"].get<int>(); ++k) {
    Rng rng = Rng::stream(s.seed, static_cast<std::uint64_t>(k));
    const SparseSample sample = sample_sparse_subnet(s, rng);
    const fs::path file = dir / ("subnet_" + std::to_string(k) + ".json");
    write_certificate(file, sample.cert);
    report["subnets"].push_back({{"file", file.string()}, {"tries", sample.tries}});
  }
  const auto trials = cfg["trials"].get<std::size_t>();
  if (trials > 0) {
    report["acceptance_rate"] =
        estimate_acceptance_rate(s.n, s.density, s.pre_scalar, trials, s.seed, s.pattern);
    report["acceptance_trials"] = trials;
  }
  write_text_file(dir / "sample_report.json", report.dump(2) + "\n");
  std::cout << report.dump(2) << "\n";
  return kOk;
}

// ---- compose -------------------------------------------------------------

int cmd_compose(const Globals& g, const std::vector<std::string>& certs, double b_scale) {
  json flags = json::object();
  if (g.seed) flags["training"]["seed"] = *g.seed;
  json defaults = default_run_config();
  defaults["compose"] = {{"certificates", json::array()}, {"b_scale", 1.0}};
  if (!certs.empty()) flags["compose"]["certificates"] = certs;
  if (!std::isnan(b_scale)) flags["compose"]["b_scale"] = b_scale;
  const json cfg = resolve(defaults, g, flags, [](json doc) {
    json compose = doc["compose"];
    doc.erase("compose");
    doc = resolve_run_config(doc);
    doc["compose"] = compose;
    return doc;
  });
  if (maybe_print(g, cfg)) return kOk;
  json run = cfg;
  run.erase("compose");
  const auto seed = run["training"]["seed"].get<std::uint64_t>();
  Model model;
  if (cfg["compose"]["certificates"].empty()) {
    model = initialize_model(architecture_from_config(run), optimizer_from_config(run), seed);
  } else {
    // Explicit subnetworks: random B with the given scale, identity-free I/O layers.
    std::vector<SubnetworkSpec> subs;
    for (const auto& f : cfg["compose"]["certificates"]) {
      const Certificate c = read_certificate(f.get<std::string>());
      const ValidationReport v = validate_certificate(c, 500, seed);
      if (!v.valid()) {
        std::cerr << f << ": certificate does not validate (worst margin " << v.worst_margin << ")\n";
        return kRejected;
      }
      subs.push_back(SubnetworkSpec::from_certificate(c));
    }
    const ArchitectureSpec arch = architecture_from_config(run);
    const int p = static_cast<int>(subs.size());
    InterconnectionMask mask = InterconnectionMask::all_pairs(p);
    if (arch.feedback_density < 1.0) {
      mask = apply_feedback_density(mask, p, arch.feedback_density, seed);
    }
    const Eigen::Index n = block_offsets(subs).back();
    Rng rng(seed);
    Matrix b(n, n);
    const double scale = cfg["compose"]["b_scale"].get<double>();
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) b(i, j) = scale * rng.normal();
    }
    Matrix in_w(n, arch.in_dim);
    for (Eigen::Index j = 0; j < in_w.cols(); ++j) {
      for (Eigen::Index i = 0; i < n; ++i) in_w(i, j) = rng.uniform(-1.0, 1.0);
    }
    Matrix out_w(arch.out_dim, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < out_w.rows(); ++i) out_w(i, j) = rng.uniform(-1.0, 1.0);
    }
    // Zero B outside the trainable blocks so the checkpoint round-trips.
    const auto off = block_offsets(subs);
    Matrix masked = Matrix::Zero(n, n);
    for (const auto& [i, j] : mask.trainable_blocks) {
      masked.block(off[i], off[j], subs[i].size(), subs[j].size()) =
          b.block(off[i], off[j], subs[i].size(), subs[j].size());
      if (arch.mode != FeedbackMode::LowerTriangular) {
        masked.block(off[j], off[i], subs[j].size(), subs[i].size()) =
            b.block(off[j], off[i], subs[j].size(), subs[i].size());
      }
    }
    model.tmpl.net = ComposedNetwork::compose(std::move(subs), masked, mask, arch.mode, in_w,
                                              Vector::Zero(n), out_w, Vector::Zero(arch.out_dim),
                                              arch.tau);
    model.tmpl.activation = arch.activation;
    model.tmpl.alpha = arch.alpha;
    std::vector<Eigen::Index> sizes;
    for (const auto& s : model.tmpl.net.subnets) sizes.push_back(s.size());
    model.state.layout = make_layout(sizes, mask, arch.mode, arch.in_dim, arch.out_dim, false);
    load_params(model.state, model.tmpl.net);
    model.state.adam_m = Vector::Zero(model.state.layout.total);
    model.state.adam_v = Vector::Zero(model.state.layout.total);
    model.state.optimizer = optimizer_from_config(run);
    model.state.lr = model.state.optimizer.lr;
    model.state.w_checksum = weight_checksum(model.tmpl.net.w_tilde());
  }
  const ComposedNetwork net = materialize(model.state, model.tmpl);
  const InterconnectionReport rep = verify_interconnection(net.L, net.metric);
  Rng drng(seed ^ 0xD5EEDULL);
  double worst = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < 100; ++k) {
    Vector d(net.n_total());
    for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = drng.uniform(0.0, net.subnets.front().g);
    worst = std::max(worst, composed_jacobian_margin(net, d));
  }
  const fs::path dir = out_dir(g, run["io"]["out"].get<std::string>());
  save_checkpoint(dir / "network.ckpt", model.tmpl, model.state, json{{"config", cfg}});
  const json report{{"checkpoint", (dir / "network.ckpt").string()},
                    {"n_total", net.n_total()},
                    {"p", net.p()},
                    {"mode", std::string(to_string(net.mode))},
                    {"skew_residual", rep.relative_residual()},
                    {"interconnection_ok", rep.ok},
                    {"worst_jacobian_eig_100_draws", worst},
                    {"trainable_parameters", model.state.layout.total}};
  write_text_file(dir / "compose_report.json", report.dump(2) + "\n");
  std::cout << report.dump(2) << "\n";
  if (net.mode != FeedbackMode::Control && (!rep.ok || !(worst < 0.0))) return kInvariant;
  return kOk;
}

// ---- simulate ------------------------------------------------------------

json simulate_defaults() {
  return json{{"checkpoint", ""},
              {"horizon", 40.0},
              {"dt", 0.01},
              {"method", "euler"},
              {"input", {{"kind", "constant"}, {"amplitude", 0.5}, {"frequency", 0.1}}},
              {"perturbation", 1.0},
              {"seed", 0}};
}

int cmd_simulate(const Globals& g, const json& flags_in) {
  json flags = flags_in;
  if (g.seed) flags["seed"] = *g.seed;
  const json cfg = resolve(simulate_defaults(), g, flags, {});
  if (maybe_print(g, cfg)) return kOk;
  if (cfg["checkpoint"] == "") throw ConfigError("simulate: no checkpoint given");
  const Checkpoint ck = load_checkpoint(cfg["checkpoint"].get<std::string>());
  const ComposedNetwork net = materialize(ck.state, ck.tmpl);
  const RecurrentSystem sys = net.system(ck.tmpl.activation);
  const double dt = cfg["dt"].get<double>();
  const auto steps = static_cast<std::size_t>(std::llround(cfg["horizon"].get<double>() / dt));
  const std::string kind = cfg["input"]["kind"];
  const double amp = cfg["input"]["amplitude"].get<double>();
  const double freq = cfg["input"]["frequency"].get<double>();
  if (kind != "constant" && kind != "sine" && kind != "zero") {
    throw ConfigError("input.kind: expected constant, sine or zero");
  }
  // Raw input of in_dim channels through the input layer, shared by both runs.
  const InputSequence u = InputSequence::sampled(
      [&](double t) {
        Vector raw = Vector::Zero(net.in_dim());
        if (kind == "constant") raw.setConstant(amp);
        if (kind == "sine") {
          for (Eigen::Index i = 0; i < raw.size(); ++i) {
            raw(i) = amp * std::sin(6.283185307179586 * freq * t + static_cast<double>(i));
          }
        }
        return net.drive(raw);
      },
      steps, dt);
  Rng rng(cfg["seed"].get<std::uint64_t>());
  const double pert = cfg["perturbation"].get<double>();
  Vector xa(net.n_total());
  Vector xb(net.n_total());
  for (Eigen::Index i = 0; i < xa.size(); ++i) {
    xa(i) = pert * rng.normal();
    xb(i) = pert * rng.normal();
  }
  const Integrator method = cfg["method"] == "rk4" ? Integrator::RK4 : Integrator::Euler;
  const Trajectory ta = simulate(xa, u, sys, method);
  const Trajectory tb = simulate(xb, u, sys, method);
  const fs::path dir = out_dir(g, ".");
  write_trajectory_csv(dir / "trajectory_a.csv", ta);
  write_trajectory_csv(dir / "trajectory_b.csv", tb);
  {
    std::ofstream os(dir / "distance.csv");
    os.precision(17);
    os << "t,distance\n";
    const std::vector<double> dist = metric_distance(ta, tb, net.metric);
    for (std::size_t k = 0; k < ta.times.size(); ++k) os << ta.times[k] << ',' << dist[k] << '\n';
  }
  const RateFit fit = contraction_rate(ta, tb, net.metric);
  const json report{{"rate", fit.rate},
                    {"r2", fit.r2},
                    {"fit_points", fit.points},
                    {"window", {fit.window_start, fit.window_end}},
                    {"tau", net.tau},
                    {"steps", steps}};
  write_text_file(dir / "contraction.json", report.dump(2) + "\n");
  std::cout << report.dump(2) << "\n";
  return kOk;
}

// ---- train / eval --------------------------------------------------------

json resolve_run(const Globals& g) {
  json flags = json::object();
  if (g.seed) flags["training"]["seed"] = *g.seed;
  if (!g.out.empty()) flags["io"]["out"] = g.out;
  return resolve(default_run_config(), g, flags, resolve_run_config);
}

int cmd_train(const Globals& g) {
  const json cfg = resolve_run(g);
  if (maybe_print(g, cfg)) return kOk;
  const SequenceSet train = load_task_split(cfg, Split::Train);
  const SequenceSet test = load_task_split(cfg, Split::Test);
  const fs::path dir = cfg["io"]["out"].get<std::string>();
  fs::create_directories(dir);
  write_text_file(dir / "effective_config.json", cfg.dump(2) + "\n");
  const fs::path log_path = dir / cfg["io"]["log"].get<std::string>();
  const bool fresh = !fs::exists(log_path);
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw FormatError("cannot open log " + log_path.string());
  if (fresh) log << training_log_header() << "\n";
  const fs::path ckpt = dir / cfg["io"]["checkpoint"].get<std::string>();
  std::cout << training_log_header() << std::endl;
  const RunResult run = run_training(cfg, train, test, [&](const EpochRecord& r, const Model& m) {
    log << training_log_line(r) << std::endl;
    std::cout << training_log_line(r) << std::endl;
    save_checkpoint(ckpt, m.tmpl, m.state, json{{"config", cfg}});
  });
  if (run.history.empty()) save_checkpoint(ckpt, run.model.tmpl, run.model.state, json{{"config", cfg}});
  return kOk;
}

int cmd_eval(const Globals& g, const std::string& checkpoint) {
  json cfg = resolve_run(g);
  if (maybe_print(g, cfg)) return kOk;
  const Checkpoint ck = load_checkpoint(checkpoint);
  const SequenceSet test = load_task_split(cfg, Split::Test);
  if (test.dim != ck.tmpl.net.in_dim()) {
    throw ConfigError("checkpoint expects input dimension " + std::to_string(ck.tmpl.net.in_dim()) +
                      " but the configured task produces " + std::to_string(test.dim));
  }
  const EvalMetrics m = evaluate(ck.state, ck.tmpl, test);
  std::cout << json{{"accuracy", m.accuracy}, {"loss", m.loss}, {"examples", test.size()}}.dump(2)
            << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contracting networks of networks: certify, compose, simulate, train"};
  app.set_version_flag("--version", library_version());
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "RNG seed (overrides the config)");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--set", g.sets, "Config override key=value (dotted keys)");
  app.add_flag("--print-effective-config", g.print_effective,
               "Print the resolved config and exit");
  app.fallthrough();

  auto* certify = app.add_subcommand("certify", "Certify a weight matrix");
  CertifyArgs ca;
  certify->add_option("matrix", ca.matrix, "Matrix file (CSV or JSON)");
  certify->add_option("--g", ca.g, "Activation slope bound");
  certify->add_option("--theorem", ca.theorem, "abs|symmetric|triangular|svd|search|auto");
  certify->add_option("--metric-diag", ca.metric_diag, "Diagonal P for the svd condition");

  auto* sample = app.add_subcommand("sample", "Rejection-sample sparse subnetworks");
  std::optional<long> s_n, s_tries, s_count, s_trials;
  std::optional<double> s_density, s_pre, s_post;
  sample->add_option("--n", s_n);
  sample->add_option("--density", s_density);
  sample->add_option("--pre-scalar", s_pre);
  sample->add_option("--post-scalar", s_post);
  sample->add_option("--max-tries", s_tries);
  std::optional<std::string> s_pattern;
  sample->add_option("--pattern", s_pattern, "exact|bernoulli placement of nonzeros");
  sample->add_option("--count", s_count, "Number of subnetworks");
  sample->add_option("--trials", s_trials, "Draws for the acceptance-rate estimate (0 = skip)");

  auto* compose = app.add_subcommand("compose", "Compose a network and save a checkpoint");
  std::vector<std::string> certs;
  double b_scale = std::nan("");
  compose->add_option("--cert", certs, "Subnetwork certificate (repeatable)");
  compose->add_option("--b-scale", b_scale, "Std of random B entries (with --cert)");

  auto* sim = app.add_subcommand("simulate", "Paired trajectories and contraction rate");
  std::string sim_ckpt, sim_method, sim_input;
  std::optional<double> sim_dt, sim_horizon, sim_pert, sim_amp, sim_freq;
  sim->add_option("checkpoint", sim_ckpt);
  sim->add_option("--dt", sim_dt);
  sim->add_option("--horizon", sim_horizon, "Length in units of tau");
  sim->add_option("--method", sim_method, "euler|rk4");
  sim->add_option("--input", sim_input, "constant|sine|zero");
  sim->add_option("--amplitude", sim_amp);
  sim->add_option("--frequency", sim_freq);
  sim->add_option("--perturbation", sim_pert, "Std of the initial states");

  auto* train = app.add_subcommand("train", "Train a composed network");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the configured test split");
  std::string eval_ckpt;
  eval->add_option("checkpoint", eval_ckpt)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  Eigen::setNbThreads(g.threads);

  try {
    if (certify->parsed()) return cmd_certify(g, ca);
    if (sample->parsed()) {
      json f = json::object();
      if (s_n) f["n"] = *s_n;
      if (s_density) f["density"] = *s_density;
      if (s_pre) f["pre_scalar"] = *s_pre;
      if (s_post) f["post_scalar"] = *s_post;
      if (s_tries) f["max_tries"] = *s_tries;
      if (s_pattern) f["pattern"] = *s_pattern;
      if (s_count) f["count"] = *s_count;
      if (s_trials) f["trials"] = *s_trials;
      return cmd_sample(g, f);
    }
    if (compose->parsed()) return cmd_compose(g, certs, b_scale);
    if (sim->parsed()) {
      json f = json::object();
      if (!sim_ckpt.empty()) f["checkpoint"] = sim_ckpt;
      if (sim_dt) f["dt"] = *sim_dt;
      if (sim_horizon) f["horizon"] = *sim_horizon;
      if (!sim_method.empty()) f["method"] = sim_method;
      if (!sim_input.empty()) f["input"]["kind"] = sim_input;
      if (sim_amp) f["input"]["amplitude"] = *sim_amp;
      if (sim_freq) f["input"]["frequency"] = *sim_freq;
      if (sim_pert) f["perturbation"] = *sim_pert;
      return cmd_simulate(g, f);
    }
    if (train->parsed()) return cmd_train(g);
    if (eval->parsed()) return cmd_eval(g, eval_ckpt);
  } catch (const InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return kInvariant;
  } catch (const NonFiniteError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kInvariant;
  } catch (const SamplingExhausted& e) {
    std::cerr << e.what() << "\n";
    return kRejected;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
