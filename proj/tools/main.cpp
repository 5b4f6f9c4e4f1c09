// bimmsbm command-line front end: fit, simulate, select-k, predict, gof.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bimmsbm/eval.hpp"
#include "bimmsbm/io.hpp"
#include "bimmsbm/simulate.hpp"

#ifndef BIMMSBM_VERSION
#define BIMMSBM_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bimmsbm;

namespace {

struct NetworkArgs {
  std::string edges, x1, x2, dyadic;
  double holdout = 0.0;

  void add(CLI::App* cmd, bool required) {
    auto* e = cmd->add_option("--edges", edges, "edge list CSV (family1_id,family2_id)");
    auto* a = cmd->add_option("--x1", x1, "family-1 node file (id + monadic covariates)");
    auto* b = cmd->add_option("--x2", x2, "family-2 node file (id + monadic covariates)");
    if (required) {
      e->required();
      a->required();
      b->required();
    }
    cmd->add_option("--dyadic", dyadic, "dyadic covariate CSV");
  }
  bool given() const { return !edges.empty(); }
  NetworkPaths paths() const {
    NetworkPaths p{edges, x1, x2, std::nullopt};
    if (!dyadic.empty()) p.dyadic = dyadic;
    return p;
  }
};

/// Outputs of one command; every file is written atomically and digested
/// for the manifest.
class RunRecorder {
 public:
  RunRecorder(std::string command, fs::path out_dir)
      : command_(std::move(command)), out_dir_(std::move(out_dir)), start_(std::chrono::system_clock::now()) {
    fs::create_directories(out_dir_);
  }

  void input(const std::string& path) {
    if (!path.empty()) inputs_[path] = io::sha256_file(path);
  }
  void write(const std::string& name, std::string_view content) {
    const auto path = out_dir_ / name;
    io::write_file_atomic(path, content);
    outputs_[path.string()] = io::sha256_file(path);
  }
  void finish(const json& config, std::uint64_t seed) {
    const auto end = std::chrono::system_clock::now();
    json m;
    m["command"] = command_;
    m["config"] = config;
    m["seed"] = seed;
    m["software_version"] = BIMMSBM_VERSION;
    m["inputs"] = inputs_;
    m["outputs"] = outputs_;
    m["wall_clock"] = {{"started", timestamp(start_)},
                       {"elapsed_seconds", std::chrono::duration<double>(end - start_).count()}};
    io::write_file_atomic(out_dir_ / "manifest.json", m.dump(2) + "\n");
  }

 private:
  static std::string timestamp(std::chrono::system_clock::time_point t) {
    const auto tt = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }

  std::string command_;
  fs::path out_dir_;
  std::chrono::system_clock::time_point start_;
  std::map<std::string, std::string> inputs_, outputs_;
};

struct FitArgs {
  std::size_t k1 = 0, k2 = 0;
  FitConfig config;
  bool no_se = false;

  void add(CLI::App* cmd, bool need_k) {
    if (need_k) {
      cmd->add_option("--k1", k1, "family-1 group count")->required()->check(CLI::PositiveNumber);
      cmd->add_option("--k2", k2, "family-2 group count")->required()->check(CLI::PositiveNumber);
    }
    cmd->add_option("--seed", config.seed, "master seed");
    cmd->add_option("--tau", config.tau, "step-size delay");
    cmd->add_option("--kappa", config.kappa, "step-size forgetting rate in (0.5, 1]");
    cmd->add_option("--m-sets", config.m_sets, "number of non-link sets per node");
    cmd->add_option("--max-iter", config.max_iter, "iteration cap");
    cmd->add_option("--tol", config.conv_tol, "relative lower-bound change for convergence");
    cmd->add_flag("--batch", config.batch_mode, "full sweeps instead of subsampling");
    cmd->add_option("--threads", config.threads, "worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--se-samples", config.se_samples, "Poisson-binomial draws for standard errors");
  }
  json to_json() const {
    return {{"k1", config.k1},
            {"k2", config.k2},
            {"seed", config.seed},
            {"tau", config.tau},
            {"kappa", config.kappa},
            {"m_sets", config.m_sets},
            {"max_iter", config.max_iter},
            {"conv_tol", config.conv_tol},
            {"elbo_window", config.elbo_window},
            {"batch_mode", config.batch_mode},
            {"se_samples", config.se_samples},
            {"compute_se", config.compute_se},
            {"learn_rate", config.learn_rate},
            {"init_restarts", config.init_restarts},
            {"threads", config.threads}};
  }
};

json se_json(const SEResult& se) {
  const auto vec = [](const Vector& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(std::isfinite(v(i)) ? json(v(i)) : json(nullptr));
    return a;
  };
  const auto mat = [&](const Matrix& m) {
    json a = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vec(m.row(r).transpose()));
    return a;
  };
  return {{"gamma", vec(se.se_gamma)}, {"beta1", mat(se.se_beta1)}, {"beta2", mat(se.se_beta2)},
          {"gamma_ok", se.gamma_ok},   {"beta1_ok", se.beta1_ok},   {"beta2_ok", se.beta2_ok}};
}

struct LoadedFit {
  json doc;
  FittedModel model;
  std::vector<std::string> ids1, ids2, d_names;
};

LoadedFit load_fit(const std::string& path) {
  LoadedFit f;
  try {
    f.doc = json::parse(io::read_file(path));
    f.model.params = params_from_json(f.doc.at("params"));
    const auto& m = f.doc.at("memberships");
    f.ids1 = m.at("family1").at("ids").get<std::vector<std::string>>();
    f.ids2 = m.at("family2").at("ids").get<std::vector<std::string>>();
    f.model.pi_hat = matrix_from_json(m.at("family1").at("values"));
    f.model.psi_hat = matrix_from_json(m.at("family2").at("values"));
    f.d_names = f.doc.at("covariates").at("dyadic").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ValidationError("malformed fit file " + path + ": " + e.what());
  }
  if (static_cast<std::size_t>(f.model.pi_hat.rows()) != f.ids1.size() ||
      static_cast<std::size_t>(f.model.psi_hat.rows()) != f.ids2.size())
    throw ValidationError("fit file memberships do not match node ids");
  return f;
}

std::vector<std::size_t> parse_range(const std::string& s, const char* flag) {
  std::vector<std::size_t> out;
  const auto num = [&](const std::string& t) -> std::size_t {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(t, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != t.size() || t.empty() || v == 0)
      throw ValidationError(std::string(flag) + ": expected a positive integer, range a..b or list, got '" + s + "'");
    return v;
  };
  if (const auto dots = s.find(".."); dots != std::string::npos) {
    const auto a = num(s.substr(0, dots)), b = num(s.substr(dots + 2));
    if (b < a) throw ValidationError(std::string(flag) + ": empty range '" + s + "'");
    for (auto k = a; k <= b; ++k) out.push_back(k);
    return out;
  }
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(num(tok));
  if (out.empty()) throw ValidationError(std::string(flag) + ": empty list");
  return out;
}

// ---------------------------------------------------------------------------

int cmd_fit(NetworkArgs& na, FitArgs& fa, const std::string& out_dir) {
  fa.config.k1 = fa.k1;
  fa.config.k2 = fa.k2;
  fa.config.compute_se = !fa.no_se;
  fa.config.validate();
  RunRecorder rec("fit", out_dir);
  for (const auto* p : {&na.edges, &na.x1, &na.x2, &na.dyadic}) rec.input(*p);

  auto net = load_network(na.paths());
  if (na.holdout > 0.0) net = split_holdout(net, na.holdout, derive_seed(fa.config.seed, "holdout"));
  const auto priors = PriorSpec::defaults(fa.k1, fa.k2);
  spdlog::info("fitting K1={} K2={} on {}x{} network ({} edges)", fa.k1, fa.k2, net.n1(), net.n2(),
               net.edges().edge_count());
  const auto res = fit(net, fa.config, priors);

  json doc;
  doc["config"] = fa.to_json();
  doc["inputs"] = {{"edges", na.edges}, {"x1", na.x1}, {"x2", na.x2}, {"dyadic", na.dyadic}};
  doc["covariates"] = {{"family1", net.x_names()}, {"family2", net.w_names()}, {"dyadic", net.d_names()}};
  doc["params"] = to_json(res.params, res.priors);
  doc["se"] = res.se ? se_json(*res.se) : json(nullptr);
  doc["memberships"] = {{"family1", {{"ids", net.ids1()}, {"values", matrix_to_json(res.pi_hat)}}},
                        {"family2", {{"ids", net.ids2()}, {"values", matrix_to_json(res.psi_hat)}}}};
  doc["iterations"] = res.iterations;
  doc["converged"] = res.converged;
  doc["elbo"] = res.elbo_trace.empty() ? json(nullptr) : json(res.elbo_trace.back());
  if (net.has_holdout()) {
    const auto held = net.holdout_dyads();
    std::vector<int> labels;
    for (const auto& d : held) labels.push_back(net.y(d.p, d.q));
    doc["holdout"] = {{"fraction", na.holdout}, {"dyads", held.size()}};
    try {
      doc["holdout"]["auroc"] = auroc(predict_edges(net, FittedModel::from(res), held), labels);
    } catch (const ValidationError& e) {
      doc["holdout"]["auroc"] = nullptr;
      spdlog::warn("holdout AUROC unavailable: {}", e.what());
    }
  }
  if (!res.converged) spdlog::warn("stopped at max-iter {} before convergence", fa.config.max_iter);

  std::string trace = "iteration,elbo\n";
  for (std::size_t i = 0; i < res.elbo_trace.size(); ++i)
    trace += std::to_string(i + 1) + "," + io::format_double(res.elbo_trace[i]) + "\n";

  rec.write("fit.json", doc.dump(2) + "\n");
  rec.write("memberships_family1.csv", memberships_csv(net.ids1(), res.pi_hat));
  rec.write("memberships_family2.csv", memberships_csv(net.ids2(), res.psi_hat));
  rec.write("elbo_trace.csv", trace);
  auto cfg = fa.to_json();
  cfg["holdout"] = na.holdout;
  rec.finish(cfg, fa.config.seed);
  return 0;
}

struct SimArgs {
  std::string scenario_name, size = "small", params_path;
  std::size_t n1 = 0, n2 = 0;
  std::uint64_t seed = 0;
  double monadic_sd = 1.5, dyadic_sd = 1.0;
};

int cmd_simulate(const SimArgs& sa, const std::string& out_dir) {
  if (sa.scenario_name.empty() == sa.params_path.empty())
    throw ValidationError("simulate needs exactly one of --scenario or --params");
  RunRecorder rec("simulate", out_dir);
  SimulatedNetwork sim;
  json cfg = {{"seed", sa.seed}};
  if (!sa.scenario_name.empty()) {
    const auto spec = scenario(sa.scenario_name, sa.size);
    sim = simulate_network(spec, sa.seed);
    cfg["scenario"] = sa.scenario_name;
    cfg["size"] = sa.size;
  } else {
    if (sa.n1 == 0 || sa.n2 == 0) throw ValidationError("--params requires --n1 and --n2");
    rec.input(sa.params_path);
    json j;
    try {
      j = json::parse(io::read_file(sa.params_path));
    } catch (const json::exception& e) {
      throw ValidationError("cannot parse " + sa.params_path + ": " + e.what());
    }
    const auto params = params_from_json(j.contains("params") ? j["params"] : j);
    sim = simulate_network(params, sa.n1, sa.n2, sa.seed, sa.monadic_sd, sa.dyadic_sd);
    cfg["params"] = sa.params_path;
    cfg["n1"] = sa.n1;
    cfg["n2"] = sa.n2;
    cfg["monadic_sd"] = sa.monadic_sd;
    cfg["dyadic_sd"] = sa.dyadic_sd;
  }
  // save_network writes in place; stage into a scratch directory, then copy
  // atomically so the manifest digests the final files.
  const fs::path out(out_dir);
  const auto stage = out / ".stage";
  fs::create_directories(stage);
  NetworkPaths paths{stage / "edges.csv", stage / "family1.csv", stage / "family2.csv", std::nullopt};
  if (sim.net.jd() > 0) paths.dyadic = stage / "dyadic.csv";
  save_network(sim.net, paths);
  for (const auto& p : {paths.edges, paths.family1, paths.family2}) rec.write(p.filename(), io::read_file(p));
  if (paths.dyadic) rec.write("dyadic.csv", io::read_file(*paths.dyadic));
  fs::remove_all(stage);
  rec.write("truth.json", truth_to_json(sim.truth, sa.scenario_name).dump(2) + "\n");
  rec.finish(cfg, sa.seed);
  return 0;
}

int cmd_select_k(NetworkArgs& na, FitArgs& fa, const std::string& k1s, const std::string& k2s,
                 const std::string& out_dir) {
  const auto r1 = parse_range(k1s, "--k1");
  const auto r2 = parse_range(k2s, "--k2");
  const double frac = na.holdout > 0.0 ? na.holdout : 0.2;
  fa.config.compute_se = false;
  fa.config.validate();
  RunRecorder rec("select-k", out_dir);
  for (const auto* p : {&na.edges, &na.x1, &na.x2, &na.dyadic}) rec.input(*p);
  const auto net = load_network(na.paths());
  const auto res = select_k(net, r1, r2, fa.config, nullptr, frac);
  for (const auto& c : res.cells)
    if (!c.error.empty()) spdlog::error("K1={} K2={} failed: {}", c.k1, c.k2, c.error);
  rec.write("select_k.csv", grid_csv(res));
  auto cfg = fa.to_json();
  cfg["k1_range"] = r1;
  cfg["k2_range"] = r2;
  cfg["holdout"] = frac;
  rec.finish(cfg, fa.config.seed);
  if (res.best_k1 == 0) {
    std::cerr << "select-k: every cell failed\n";
    return 2;
  }
  std::cout << "K1=" << res.best_k1 << " K2=" << res.best_k2 << "\n";
  return 0;
}

int cmd_predict(const std::string& fit_path, const std::string& dyads_path, const std::string& out_dir) {
  RunRecorder rec("predict", out_dir);
  rec.input(fit_path);
  rec.input(dyads_path);
  const auto f = load_fit(fit_path);
  const auto table = load_dyad_table(dyads_path, f.ids1, f.ids2);
  if (table.d_names != f.d_names) throw ValidationError("dyad file covariates do not match the fitted model");
  std::string out = "family1_id,family2_id,score\n";
  for (std::size_t i = 0; i < table.dyads.size(); ++i) {
    const auto& d = table.dyads[i];
    const double s = predict_score(f.model, d.p, d.q, table.d.at(static_cast<std::uint32_t>(i), 0));
    out += io::csv_escape(table.ids1[i]) + "," + io::csv_escape(table.ids2[i]) + "," + io::format_double(s) + "\n";
  }
  rec.write("predictions.csv", out);
  rec.finish({{"fit", fit_path}, {"dyads", dyads_path}}, 0);
  return 0;
}

int cmd_gof(NetworkArgs& na, const std::string& fit_path, std::size_t replicates, std::uint64_t seed,
            std::size_t threads, const std::string& out_dir) {
  if (replicates == 0) throw ValidationError("--replicates must be positive");
  RunRecorder rec("gof", out_dir);
  rec.input(fit_path);
  const auto f = load_fit(fit_path);
  if (!na.given()) {
    const auto& in = f.doc.at("inputs");
    na.edges = in.value("edges", "");
    na.x1 = in.value("x1", "");
    na.x2 = in.value("x2", "");
    na.dyadic = in.value("dyadic", "");
    if (na.edges.empty() || na.x1.empty() || na.x2.empty())
      throw ValidationError("fit file records no input network; pass --edges --x1 --x2");
  }
  for (const auto* p : {&na.edges, &na.x1, &na.x2, &na.dyadic}) rec.input(*p);
  const auto net = load_network(na.paths());
  if (net.ids1() != f.ids1 || net.ids2() != f.ids2) throw ValidationError("network nodes differ from the fitted model");
  const auto rep = gof(net, f.model, replicates, seed, threads);
  rec.write("gof_degree.csv", distribution_csv({&rep.degree1, &rep.degree2}));
  rec.write("gof_shared_partners.csv", distribution_csv({&rep.shared1, &rep.shared2}));
  rec.write("gof_geodesics.csv", distribution_csv({&rep.geodesics}));
  for (const auto* t : {&rep.degree1, &rep.degree2, &rep.shared1, &rep.shared2, &rep.geodesics})
    std::cout << t->statistic << " " << t->family << ": 90% band coverage " << t->coverage(0.9) << "\n";
  rec.finish({{"fit", fit_path}, {"replicates", replicates}, {"threads", threads}}, seed);
  return 0;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("bimmsbm");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* lvl = std::getenv("BIMMSBM_LOG")) spdlog::set_level(spdlog::level::from_str(lvl));
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Bipartite mixed-membership stochastic blockmodel"};
  app.set_version_flag("--version", BIMMSBM_VERSION);
  app.require_subcommand(1);

  std::string out_dir = ".";
  NetworkArgs na;
  FitArgs fa;

  auto* fit_cmd = app.add_subcommand("fit", "fit the model to a network");
  na.add(fit_cmd, true);
  fa.add(fit_cmd, true);
  fit_cmd->add_option("--holdout", na.holdout, "fraction of dyads held out and scored")
      ->check(CLI::Range(0.0, 1.0));
  fit_cmd->add_flag("--no-se", fa.no_se, "skip standard errors");
  fit_cmd->add_option("--out-dir", out_dir, "output directory");

  SimArgs sa;
  auto* sim_cmd = app.add_subcommand("simulate", "draw a network from a scenario or fitted parameters");
  sim_cmd->add_option("--scenario", sa.scenario_name, "easy, medium or hard");
  sim_cmd->add_option("--size", sa.size, "small or large");
  sim_cmd->add_option("--params", sa.params_path, "parameter or fit JSON");
  sim_cmd->add_option("--n1", sa.n1, "family-1 size (with --params)");
  sim_cmd->add_option("--n2", sa.n2, "family-2 size (with --params)");
  sim_cmd->add_option("--seed", sa.seed, "seed");
  sim_cmd->add_option("--out-dir", out_dir, "output directory");

  FitArgs ka;
  NetworkArgs kn;
  std::string k1s, k2s;
  auto* sel_cmd = app.add_subcommand("select-k", "choose group counts by held-out AUROC");
  kn.add(sel_cmd, true);
  ka.add(sel_cmd, false);
  sel_cmd->add_option("--k1", k1s, "family-1 range (a..b or list)")->required();
  sel_cmd->add_option("--k2", k2s, "family-2 range (a..b or list)")->required();
  sel_cmd->add_option("--holdout", kn.holdout, "held-out fraction (default 0.2)")->check(CLI::Range(0.0, 1.0));
  sel_cmd->add_option("--out-dir", out_dir, "output directory");

  std::string fit_path, dyads_path;
  auto* pred_cmd = app.add_subcommand("predict", "score dyads with a fitted model");
  pred_cmd->add_option("--fit", fit_path, "fit.json")->required();
  pred_cmd->add_option("--dyads", dyads_path, "dyad CSV")->required();
  pred_cmd->add_option("--out-dir", out_dir, "output directory");

  NetworkArgs gn;
  std::size_t replicates = 100, gthreads = 1;
  std::uint64_t gseed = 0;
  auto* gof_cmd = app.add_subcommand("gof", "posterior-predictive goodness of fit");
  gof_cmd->add_option("--fit", fit_path, "fit.json")->required();
  gof_cmd->add_option("--replicates", replicates, "replicate networks");
  gof_cmd->add_option("--seed", gseed, "seed");
  gof_cmd->add_option("--threads", gthreads, "worker threads")->check(CLI::PositiveNumber);
  gn.add(gof_cmd, false);
  gof_cmd->add_option("--out-dir", out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*fit_cmd) return cmd_fit(na, fa, out_dir);
    if (*sim_cmd) return cmd_simulate(sa, out_dir);
    if (*sel_cmd) return cmd_select_k(kn, ka, k1s, k2s, out_dir);
    if (*pred_cmd) return cmd_predict(fit_path, dyads_path, out_dir);
    if (*gof_cmd) return cmd_gof(gn, fit_path, replicates, gseed, gthreads, out_dir);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
