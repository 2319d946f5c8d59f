#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "swlab/swlab.hpp"

namespace {

struct CommonOpts {
  std::vector<long> n, d, p, batch;
  std::vector<double> alpha, noise;
  long trials = 0, max_iters = 0, record_every = 0;
  double tol = 0.0, conv_metric = 0.0;
  long p_psi = 0, resamples = 0, oracle_samples = 0;
  long clt_p = 0;
  int ladder_min = 0, ladder_max = 0;
  std::uint64_t seed = 0;
  std::string out, format, dataset, algorithm, spec_file;
  bool plot = false, audit = false;

  CLI::Option* n_opt = nullptr;
  CLI::Option* d_opt = nullptr;
  CLI::Option* p_opt = nullptr;
  CLI::Option* alpha_opt = nullptr;
  CLI::Option* noise_opt = nullptr;
  CLI::Option* batch_opt = nullptr;
  CLI::Option* trials_opt = nullptr;
  CLI::Option* max_iters_opt = nullptr;
  CLI::Option* record_opt = nullptr;
  CLI::Option* tol_opt = nullptr;
  CLI::Option* conv_opt = nullptr;
  CLI::Option* p_psi_opt = nullptr;
  CLI::Option* resamples_opt = nullptr;
  CLI::Option* oracle_opt = nullptr;
  CLI::Option* clt_p_opt = nullptr;
  CLI::Option* ladder_min_opt = nullptr;
  CLI::Option* ladder_max_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* out_opt = nullptr;
  CLI::Option* format_opt = nullptr;
  CLI::Option* dataset_opt = nullptr;
  CLI::Option* algorithm_opt = nullptr;
  CLI::Option* spec_opt = nullptr;
};

void add_common_options(CLI::App* sub, CommonOpts& o) {
  o.n_opt = sub->add_option("--n", o.n, "points per support (repeatable)");
  o.d_opt = sub->add_option("--d", o.d, "dimension (repeatable)");
  o.p_opt = sub->add_option("--p", o.p, "projections (repeatable)");
  o.alpha_opt = sub->add_option("--alpha", o.alpha, "step size (repeatable)");
  o.noise_opt = sub->add_option("--noise", o.noise, "noise level (repeatable)");
  o.batch_opt = sub->add_option("--batch", o.batch, "batch size (repeatable)");
  o.trials_opt = sub->add_option("--trials", o.trials, "trials per grid point");
  o.max_iters_opt = sub->add_option("--max-iters", o.max_iters, "iteration cap");
  o.record_opt = sub->add_option("--record-every", o.record_every,
                                 "recording stride");
  o.tol_opt = sub->add_option("--tol", o.tol,
                              "solver stopping tolerance (negative disables)");
  o.conv_opt = sub->add_option("--conv-metric", o.conv_metric,
                               "(1/d) W2^2 convergence threshold");
  o.p_psi_opt = sub->add_option("--p-psi", o.p_psi,
                                "projections for the fixed-point estimate");
  o.resamples_opt = sub->add_option("--resamples", o.resamples,
                                    "clt resample count");
  o.clt_p_opt = sub->add_option("--clt-p", o.clt_p, "clt projections");
  o.oracle_opt = sub->add_option("--oracle-samples", o.oracle_samples,
                                 "clt variance oracle sample count");
  o.ladder_min_opt = sub->add_option("--ladder-min", o.ladder_min,
                                     "log2 of the smallest ladder p");
  o.ladder_max_opt = sub->add_option("--ladder-max", o.ladder_max,
                                     "log2 of the largest ladder p");
  o.seed_opt = sub->add_option("--seed", o.seed, "base seed");
  o.out_opt = sub->add_option("--out", o.out, "output path (default stdout)");
  o.format_opt = sub->add_option("--format", o.format, "csv | json")
                     ->check(CLI::IsMember({"csv", "json"}));
  o.dataset_opt = sub->add_option("--dataset", o.dataset,
                                  "trajectory dataset: spiral | two-point")
                      ->check(CLI::IsMember({"spiral", "two-point"}));
  o.algorithm_opt = sub->add_option("--algorithm", o.algorithm,
                                    "trajectory solver: bcd | sgd")
                        ->check(CLI::IsMember({"bcd", "sgd"}));
  o.spec_opt = sub->add_option("--spec", o.spec_file,
                               "JSON experiment spec file");
  sub->add_flag("--plot", o.plot, "also write an SVG plot");
  sub->add_flag("--audit", o.audit, "self-audit the aggregate rows");
}

swlab::ExperimentSpec build_spec(swlab::ExperimentKind kind,
                                 const CommonOpts& o) {
  swlab::ExperimentSpec spec;
  if (o.spec_opt->count() > 0) {
    std::ifstream in(o.spec_file);
    if (!in) throw swlab::IoError("cannot open spec file: " + o.spec_file);
    nlohmann::json j;
    in >> j;
    if (!j.contains("kind")) j["kind"] = swlab::kind_name(kind);
    spec = swlab::spec_from_json(j);
  } else {
    spec = swlab::default_spec(kind);
  }
  spec.kind = kind;
  auto to_idx = [](const std::vector<long>& v) {
    return std::vector<Eigen::Index>(v.begin(), v.end());
  };
  if (o.n_opt->count()) spec.n_values = to_idx(o.n);
  if (o.d_opt->count()) spec.d_values = to_idx(o.d);
  if (o.p_opt->count()) spec.p_values = to_idx(o.p);
  if (o.alpha_opt->count()) spec.alpha_values = o.alpha;
  if (o.noise_opt->count()) spec.noise_values = o.noise;
  if (o.batch_opt->count()) spec.batch_values = o.batch;
  if (o.trials_opt->count()) spec.trials = o.trials;
  if (o.max_iters_opt->count()) spec.max_iters = o.max_iters;
  if (o.record_opt->count()) spec.record_every = o.record_every;
  if (o.tol_opt->count()) spec.tol = o.tol;
  if (o.conv_opt->count()) spec.conv_metric = o.conv_metric;
  if (o.p_psi_opt->count()) spec.p_psi = o.p_psi;
  if (o.resamples_opt->count()) spec.clt_resamples = o.resamples;
  if (o.clt_p_opt->count()) spec.clt_p = o.clt_p;
  if (o.oracle_opt->count()) spec.clt_oracle_samples = o.oracle_samples;
  if (o.ladder_min_opt->count()) spec.ladder_min_log2 = o.ladder_min;
  if (o.ladder_max_opt->count()) spec.ladder_max_log2 = o.ladder_max;
  if (o.seed_opt->count()) spec.base_seed = o.seed;
  if (o.out_opt->count()) spec.out = o.out;
  if (o.format_opt->count()) spec.format = o.format;
  if (o.dataset_opt->count()) spec.dataset = o.dataset;
  if (o.algorithm_opt->count()) spec.algorithm = o.algorithm;
  spec.plot = o.plot;
  spec.audit = o.audit;
  if (spec.trials < 1) throw std::invalid_argument("trials must be >= 1");
  return spec;
}

int run_ot(const std::string& alpha_path, const std::string& beta_path,
           const std::string& cost_path, const std::string& out_path) {
  auto open = [](const std::string& path) {
    std::ifstream in(path);
    if (!in) throw swlab::IoError("cannot open: " + path);
    return in;
  };
  auto alpha_in = open(alpha_path);
  auto beta_in = open(beta_path);
  auto cost_in = open(cost_path);
  const swlab::WeightVector alpha = swlab::weights_from_csv(alpha_in);
  const swlab::WeightVector beta = swlab::weights_from_csv(beta_in);
  const swlab::CostMatrix cost = swlab::cost_matrix_from_csv(cost_in);
  const auto res = swlab::kantorovich_exact(alpha, beta, cost);
  const std::string body = swlab::kantorovich_to_json(res).dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << body;
  } else {
    swlab::write_text_file(out_path, body);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sliced-Wasserstein energy laboratory"};
  app.require_subcommand(1);

  struct Command {
    swlab::ExperimentKind kind;
    const char* description;
  };
  const std::vector<Command> commands = {
      {swlab::ExperimentKind::kTrajectory, "record 2D solver trajectories"},
      {swlab::ExperimentKind::kBcdPhase,
       "final Wasserstein errors of BCD sweeps over p"},
      {swlab::ExperimentKind::kCvProba,
       "empirical BCD convergence probability over p"},
      {swlab::ExperimentKind::kSgdError,
       "Wasserstein error along SGD iterations"},
      {swlab::ExperimentKind::kUniformConvergence,
       "sup-error of the fixed-axes energy over a support grid"},
      {swlab::ExperimentKind::kClt,
       "distribution of the scaled Monte-Carlo energy error"},
      {swlab::ExperimentKind::kFixedPoint,
       "fixed-point residual of BCD terminal points over p"},
      {swlab::ExperimentKind::kScaling,
       "iterations-to-convergence scaling with dimension"},
  };

  std::vector<std::pair<CLI::App*, std::unique_ptr<CommonOpts>>> subs;
  for (const auto& cmd : commands) {
    auto opts = std::make_unique<CommonOpts>();
    CLI::App* sub = app.add_subcommand(swlab::kind_name(cmd.kind),
                                       cmd.description);
    add_common_options(sub, *opts);
    subs.emplace_back(sub, std::move(opts));
  }

  std::string ot_alpha, ot_beta, ot_cost, ot_out;
  CLI::App* ot = app.add_subcommand(
      "ot", "exact Kantorovich solve with dual certificate");
  ot->add_option("--alpha", ot_alpha, "weights csv")->required();
  ot->add_option("--beta", ot_beta, "weights csv")->required();
  ot->add_option("--cost", ot_cost, "cost matrix csv")->required();
  ot->add_option("--out", ot_out, "output json path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (ot->parsed()) {
      return run_ot(ot_alpha, ot_beta, ot_cost, ot_out);
    }
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (subs[i].first->parsed()) {
        const swlab::ExperimentSpec spec =
            build_spec(commands[i].kind, *subs[i].second);
        const bool audit_ok = swlab::write_experiment(spec);
        if (!audit_ok) {
          std::cerr << "self-audit failed\n";
          return 3;
        }
        return 0;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
