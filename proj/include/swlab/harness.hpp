#pragma once

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "swlab/experiments.hpp"

namespace swlab {

namespace detail {

struct GridPoint {
  Eigen::Index n = 0;
  Eigen::Index d = 0;
  Eigen::Index p = 0;
  double alpha = 0.0;
  double noise = 0.0;
  long batch = 1;
};

inline std::vector<GridPoint> cartesian_grid(const ExperimentSpec& spec,
                                             bool with_p, bool with_alpha) {
  std::vector<GridPoint> grid;
  for (Eigen::Index n : spec.n_values) {
    for (Eigen::Index d : spec.d_values) {
      const std::vector<Eigen::Index> ps =
          with_p ? spec.p_values : std::vector<Eigen::Index>{0};
      for (Eigen::Index p : ps) {
        const std::vector<double> alphas =
            with_alpha ? spec.alpha_values : std::vector<double>{0.0};
        for (double alpha : alphas) {
          const std::vector<double> noises =
              with_alpha ? spec.noise_values : std::vector<double>{0.0};
          for (double noise : noises) {
            const std::vector<long> batches =
                with_alpha ? spec.batch_values : std::vector<long>{1};
            for (long batch : batches) {
              grid.push_back({n, d, p, alpha, noise, batch});
            }
          }
        }
      }
    }
  }
  return grid;
}

inline std::string flag(bool b) { return b ? "1" : "0"; }

// ---- raw row builders per kind ----

inline Table raw_bcd_phase(const ExperimentSpec& spec) {
  Table t;
  t.header = {"kind", "n", "d", "p", "trial", "seed", "stat", "converged",
              "final_w2_over_d", "iters", "boundary", "error"};
  const auto grid = cartesian_grid(spec, true, false);
  const std::size_t jobs = grid.size() * static_cast<std::size_t>(spec.trials);
  struct Out {
    bool converged = false;
    double w2 = 0.0;
    long iters = 0;
    bool boundary = false;
    std::string error;
  };
  std::vector<Out> results(jobs);
  parallel_for(jobs, [&](std::size_t i) {
    const auto& g = grid[i / static_cast<std::size_t>(spec.trials)];
    const std::uint64_t seed = spec.base_seed + i;
    Out& out = results[i];
    try {
      Rng zr(mix_seed(seed, kStreamData));
      const Support z = gaussian_support(g.n, g.d, zr);
      Rng yr(mix_seed(seed, kStreamInit));
      const Support y0 = uniform01_support(g.n, g.d, yr);
      const DirectionSet dirs =
          sample_sphere(g.d, g.p, mix_seed(seed, kStreamAxes));
      BCDConfig cfg;
      cfg.max_iters = spec.max_iters;
      cfg.tol = spec.tol;
      cfg.record_every = spec.max_iters;
      const Trajectory traj = bcd_run(z, dirs, y0, cfg);
      out.w2 = traj.w2_series.back();
      out.converged = out.w2 < spec.conv_metric;
      out.iters = traj.iters;
      out.boundary = traj.terminal_boundary;
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  });
  for (std::size_t i = 0; i < jobs; ++i) {
    const auto& g = grid[i / static_cast<std::size_t>(spec.trials)];
    const long trial = static_cast<long>(i % static_cast<std::size_t>(spec.trials));
    const Out& out = results[i];
    t.rows.push_back({kind_name(spec.kind), std::to_string(g.n),
                      std::to_string(g.d), std::to_string(g.p),
                      std::to_string(trial), std::to_string(spec.base_seed + i),
                      "trial", out.error.empty() ? flag(out.converged) : "",
                      out.error.empty() ? format_double(out.w2) : "",
                      std::to_string(out.iters), flag(out.boundary),
                      out.error});
  }
  return t;
}

inline Table raw_sgd_error(const ExperimentSpec& spec) {
  Table t;
  t.header = {"kind", "n", "d", "alpha", "noise", "batch", "trial", "seed",
              "stat", "t", "w2_over_d", "diverged", "error"};
  const auto grid = cartesian_grid(spec, false, true);
  const std::size_t jobs = grid.size() * static_cast<std::size_t>(spec.trials);
  struct Out {
    std::vector<long> steps;
    std::vector<double> w2;
    bool diverged = false;
    std::string error;
  };
  std::vector<Out> results(jobs);
  parallel_for(jobs, [&](std::size_t i) {
    const auto& g = grid[i / static_cast<std::size_t>(spec.trials)];
    const std::uint64_t seed = spec.base_seed + i;
    Out& out = results[i];
    try {
      Rng zr(mix_seed(seed, kStreamData));
      const Support z = gaussian_support(g.n, g.d, zr);
      Rng yr(mix_seed(seed, kStreamInit));
      const Support y0 = uniform01_support(g.n, g.d, yr);
      SGDConfig cfg;
      cfg.alpha0 = g.alpha;
      cfg.noise_level = g.noise;
      cfg.batch_size = g.batch;
      cfg.conv_threshold = spec.tol;
      cfg.max_iters = spec.max_iters;
      cfg.record_every = spec.record_every;
      cfg.seed = mix_seed(seed, kStreamSolver);
      cfg.energy_eval_projections = 0;
      const Trajectory traj = sgd_run(z, cfg, y0);
      out.steps = traj.steps;
      out.w2 = traj.w2_series;
      out.diverged = traj.diverged;
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  });
  for (std::size_t i = 0; i < jobs; ++i) {
    const auto& g = grid[i / static_cast<std::size_t>(spec.trials)];
    const long trial = static_cast<long>(i % static_cast<std::size_t>(spec.trials));
    const Out& out = results[i];
    if (!out.error.empty()) {
      t.rows.push_back({kind_name(spec.kind), std::to_string(g.n),
                        std::to_string(g.d), format_double(g.alpha),
                        format_double(g.noise), std::to_string(g.batch),
                        std::to_string(trial),
                        std::to_string(spec.base_seed + i), "trial", "0", "",
                        "0", out.error});
      continue;
    }
    for (std::size_t r = 0; r < out.steps.size(); ++r) {
      const bool last = r + 1 == out.steps.size();
      t.rows.push_back({kind_name(spec.kind), std::to_string(g.n),
                        std::to_string(g.d), format_double(g.alpha),
                        format_double(g.noise), std::to_string(g.batch),
                        std::to_string(trial),
                        std::to_string(spec.base_seed + i), "trial",
                        std::to_string(out.steps[r]),
                        format_double(out.w2[r]),
                        flag(last && out.diverged), ""});
    }
  }
  return t;
}

inline Table raw_uniform_convergence(const ExperimentSpec& spec) {
  Table t;
  t.header = {"kind", "n", "d", "p", "trial", "seed", "stat", "sup_err",
              "sqrtp_sup_err"};
  const Support z = two_point_dataset();
  std::vector<Support> grid_supports;
  std::vector<double> oracle;
  for (double u : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
    for (double v : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
      grid_supports.push_back(symmetric_pair(u, v));
      oracle.push_back(closed_form_energy_sym2d(u, v));
    }
  }
  std::vector<int> ladder;
  for (int k = spec.ladder_min_log2; k <= spec.ladder_max_log2; ++k) {
    ladder.push_back(k);
  }
  const std::size_t jobs =
      static_cast<std::size_t>(spec.trials) * ladder.size();
  std::vector<double> sup_errs(jobs);
  parallel_for(jobs, [&](std::size_t i) {
    const auto trial = static_cast<long>(i / ladder.size());
    const int k = ladder[i % ladder.size()];
    const std::uint64_t seed = spec.base_seed + static_cast<std::uint64_t>(trial);
    const auto p = static_cast<Eigen::Index>(1L << k);
    const DirectionSet dirs =
        sample_sphere(2, p, mix_seed(seed, static_cast<std::uint64_t>(k)));
    double sup = 0.0;
    for (std::size_t s = 0; s < grid_supports.size(); ++s) {
      sup = std::max(sup,
                     std::abs(energy_p(grid_supports[s], z, dirs) - oracle[s]));
    }
    sup_errs[i] = sup;
  });
  for (std::size_t i = 0; i < jobs; ++i) {
    const auto trial = static_cast<long>(i / ladder.size());
    const int k = ladder[i % ladder.size()];
    const long p = 1L << k;
    t.rows.push_back(
        {kind_name(spec.kind), "2", "2", std::to_string(p),
         std::to_string(trial),
         std::to_string(spec.base_seed + static_cast<std::uint64_t>(trial)),
         "trial", format_double(sup_errs[i]),
         format_double(std::sqrt(static_cast<double>(p)) * sup_errs[i])});
  }
  return t;
}

inline Table raw_clt(const ExperimentSpec& spec) {
  Table t;
  t.header = {"kind", "u", "v", "p", "trial", "seed", "stat", "value"};
  const Support z = two_point_dataset();
  const Support y = symmetric_pair(spec.clt_u, spec.clt_v);
  const double oracle_energy = closed_form_energy_sym2d(spec.clt_u, spec.clt_v);
  const double sqrt_p = std::sqrt(static_cast<double>(spec.clt_p));

  const std::size_t jobs = static_cast<std::size_t>(spec.clt_resamples);
  std::vector<double> samples(jobs);
  parallel_for(jobs, [&](std::size_t r) {
    const std::uint64_t seed = spec.base_seed + r;
    const DirectionSet dirs =
        sample_sphere(2, spec.clt_p, mix_seed(seed, kStreamDirs));
    samples[r] = sqrt_p * (energy_p(y, z, dirs) - oracle_energy);
  });
  for (std::size_t r = 0; r < jobs; ++r) {
    t.rows.push_back({kind_name(spec.kind), format_double(spec.clt_u),
                      format_double(spec.clt_v), std::to_string(spec.clt_p),
                      std::to_string(static_cast<long>(r)),
                      std::to_string(spec.base_seed + r), "sample",
                      format_double(samples[r])});
  }

  // independent high-p variance oracle for Var_theta w_theta(Y)
  {
    const DirectionSet dirs = sample_sphere(
        2, spec.clt_oracle_samples, mix_seed(spec.base_seed, 0x0bacau));
    std::vector<double> vals;
    detail::slice_values(y, z, dirs.axes, vals);
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var /= static_cast<double>(vals.size() - 1);
    t.rows.push_back({kind_name(spec.kind), format_double(spec.clt_u),
                      format_double(spec.clt_v), std::to_string(spec.clt_p),
                      "-1", std::to_string(spec.base_seed), "oracle_var",
                      format_double(var)});
  }
  // asymptotic two-sided KS critical value at level 0.01
  const double critical =
      1.628 / std::sqrt(static_cast<double>(spec.clt_resamples));
  t.rows.push_back({kind_name(spec.kind), format_double(spec.clt_u),
                    format_double(spec.clt_v), std::to_string(spec.clt_p),
                    "-1", std::to_string(spec.base_seed), "ks_critical",
                    format_double(critical)});
  return t;
}

inline Table raw_fixed_point(const ExperimentSpec& spec) {
  Table t;
  t.header = {"kind", "n", "d", "p", "p_psi", "trial", "seed", "stat",
              "cz_bar", "residual", "converged", "boundary", "excluded",
              "required_p", "error"};
  const auto grid = cartesian_grid(spec, true, false);
  const std::size_t jobs = grid.size() * static_cast<std::size_t>(spec.trials);
  struct Out {
    double cz_bar = 0.0;
    double residual = 0.0;
    bool converged = false;
    bool boundary = false;
    bool excluded = true;
    std::string error;
  };
  std::vector<Out> results(jobs);
  parallel_for(jobs, [&](std::size_t i) {
    const auto& g = grid[i / static_cast<std::size_t>(spec.trials)];
    const std::uint64_t seed = spec.base_seed + i;
    Out& out = results[i];
    try {
      Rng zr(mix_seed(seed, kStreamData));
      const Support z = gaussian_support(g.n, g.d, zr);
      out.cz_bar = max_row_norm(z);
      Rng yr(mix_seed(seed, kStreamInit));
      const Support y0 = uniform01_support(g.n, g.d, yr);
      const DirectionSet dirs =
          sample_sphere(g.d, g.p, mix_seed(seed, kStreamAxes));
      BCDConfig cfg;
      cfg.max_iters = spec.max_iters;
      cfg.tol = spec.tol;
      cfg.record_every = spec.max_iters;
      const Trajectory traj = bcd_run(z, dirs, y0, cfg);
      out.converged = traj.converged;
      out.boundary = traj.terminal_boundary;
      bool stable = false;
      if (out.converged && !out.boundary) {
        const Configuration cfg_term = configuration_of(traj.terminal, z, dirs);
        stable = is_stable_cell(cfg_term, z, dirs).stable;
      }
      out.excluded = !(out.converged && !out.boundary && stable);
      out.residual = fixed_point_residual(traj.terminal, z, spec.p_psi,
                                          mix_seed(seed, kStreamPsi));
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  });
  for (std::size_t i = 0; i < jobs; ++i) {
    const auto& g = grid[i / static_cast<std::size_t>(spec.trials)];
    const long trial = static_cast<long>(i % static_cast<std::size_t>(spec.trials));
    const Out& out = results[i];
    t.rows.push_back({kind_name(spec.kind), std::to_string(g.n),
                      std::to_string(g.d), std::to_string(g.p),
                      std::to_string(spec.p_psi), std::to_string(trial),
                      std::to_string(spec.base_seed + i), "trial",
                      out.error.empty() ? format_double(out.cz_bar) : "",
                      out.error.empty() ? format_double(out.residual) : "",
                      flag(out.converged), flag(out.boundary),
                      flag(out.excluded), "", out.error});
  }
  return t;
}

inline Table raw_scaling(const ExperimentSpec& spec) {
  Table t;
  t.header = {"kind", "n", "d", "alpha", "trial", "seed",
              "stat", "iters_to_conv", "converged", "exponent", "error"};
  std::vector<detail::GridPoint> grid;
  for (Eigen::Index n : spec.n_values) {
    for (double alpha : spec.alpha_values) {
      for (Eigen::Index d : spec.d_values) {
        grid.push_back({n, d, 0, alpha, 0.0, 1});
      }
    }
  }
  const std::size_t jobs = grid.size() * static_cast<std::size_t>(spec.trials);
  struct Out {
    long iters = 0;
    bool converged = false;
    std::string error;
  };
  std::vector<Out> results(jobs);
  parallel_for(jobs, [&](std::size_t i) {
    const auto& g = grid[i / static_cast<std::size_t>(spec.trials)];
    const std::uint64_t seed = spec.base_seed + i;
    Out& out = results[i];
    try {
      Rng zr(mix_seed(seed, kStreamData));
      const Support z = gaussian_support(g.n, g.d, zr);
      Rng yr(mix_seed(seed, kStreamInit));
      const Support y0 = uniform01_support(g.n, g.d, yr);
      SGDConfig cfg;
      cfg.alpha0 = g.alpha;
      cfg.conv_threshold = spec.tol;
      cfg.max_iters = spec.max_iters;
      cfg.record_every = spec.record_every;
      cfg.seed = mix_seed(seed, kStreamSolver);
      cfg.energy_eval_projections = 0;
      cfg.stop_below_w2 = spec.conv_metric;
      const Trajectory traj = sgd_run(z, cfg, y0);
      for (std::size_t r = 0; r < traj.steps.size(); ++r) {
        if (traj.w2_series[r] < spec.conv_metric) {
          out.converged = true;
          out.iters = traj.steps[r];
          break;
        }
      }
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  });
  for (std::size_t i = 0; i < jobs; ++i) {
    const auto& g = grid[i / static_cast<std::size_t>(spec.trials)];
    const long trial = static_cast<long>(i % static_cast<std::size_t>(spec.trials));
    const Out& out = results[i];
    t.rows.push_back({kind_name(spec.kind), std::to_string(g.n),
                      std::to_string(g.d), format_double(g.alpha),
                      std::to_string(trial), std::to_string(spec.base_seed + i),
                      "trial",
                      out.converged ? std::to_string(out.iters) : "",
                      flag(out.converged), "", out.error});
  }
  return t;
}

inline Table raw_trajectory(const ExperimentSpec& spec) {
  Table t;
  t.header = {"kind", "dataset", "algorithm", "n", "d", "p", "alpha",
              "noise", "trial", "seed", "stat", "t", "point", "x0", "x1"};
  Support z = spec.dataset == "two-point" ? two_point_dataset()
                                          : spiral_dataset();
  const Eigen::Index n = z.n();
  const std::size_t jobs = static_cast<std::size_t>(spec.trials);
  std::vector<Trajectory> trajs(jobs);
  parallel_for(jobs, [&](std::size_t i) {
    const std::uint64_t seed = spec.base_seed + i;
    Rng yr(mix_seed(seed, kStreamInit));
    const Support y0 = gaussian_support(n, 2, yr);
    if (spec.algorithm == "sgd") {
      SGDConfig cfg;
      cfg.alpha0 = spec.alpha_values[0];
      cfg.noise_level = spec.noise_values[0];
      cfg.conv_threshold = spec.tol;
      cfg.max_iters = spec.max_iters;
      cfg.record_every = spec.record_every;
      cfg.seed = mix_seed(seed, kStreamSolver);
      cfg.energy_eval_projections = 0;
      trajs[i] = sgd_run(z, cfg, y0);
    } else {
      const DirectionSet dirs =
          sample_sphere(2, spec.p_values[0], mix_seed(seed, kStreamAxes));
      BCDConfig cfg;
      cfg.max_iters = spec.max_iters;
      cfg.tol = spec.tol;
      cfg.record_every = spec.record_every;
      trajs[i] = bcd_run(z, dirs, y0, cfg);
    }
  });
  const bool sgd = spec.algorithm == "sgd";
  for (std::size_t i = 0; i < jobs; ++i) {
    for (std::size_t r = 0; r < trajs[i].steps.size(); ++r) {
      const auto& pts = trajs[i].iterates[r].points();
      for (Eigen::Index k = 0; k < n; ++k) {
        t.rows.push_back(
            {kind_name(spec.kind), spec.dataset, spec.algorithm,
             std::to_string(n), "2",
             sgd ? "0" : std::to_string(spec.p_values[0]),
             sgd ? format_double(spec.alpha_values[0]) : "0",
             sgd ? format_double(spec.noise_values[0]) : "0",
             std::to_string(static_cast<long>(i)),
             std::to_string(spec.base_seed + i), "trial",
             std::to_string(trajs[i].steps[r]), std::to_string(k),
             format_double(pts(k, 0)), format_double(pts(k, 1))});
      }
    }
  }
  return t;
}

}  // namespace detail

inline Table run_raw(const ExperimentSpec& spec) {
  switch (spec.kind) {
    case ExperimentKind::kBcdPhase:
    case ExperimentKind::kCvProba:
      return detail::raw_bcd_phase(spec);
    case ExperimentKind::kSgdError:
      return detail::raw_sgd_error(spec);
    case ExperimentKind::kUniformConvergence:
      return detail::raw_uniform_convergence(spec);
    case ExperimentKind::kClt:
      return detail::raw_clt(spec);
    case ExperimentKind::kFixedPoint:
      return detail::raw_fixed_point(spec);
    case ExperimentKind::kScaling:
      return detail::raw_scaling(spec);
    case ExperimentKind::kTrajectory:
      return detail::raw_trajectory(spec);
  }
  throw std::invalid_argument("run_raw: unknown kind");
}

// Derivative plot of the aggregate curve; the CSV stays authoritative.
inline std::string plot_experiment(const ExperimentSpec& spec, const Table& t) {
  std::vector<SvgSeries> series;
  auto curve = [&](const std::string& stat, const std::string& xcol,
                   const std::string& ycol, bool log_x, bool log_y,
                   const std::vector<std::string>& group_cols) {
    const auto rows = detail::rows_with_stat(t, {stat});
    for (const auto& [key, grp] :
         detail::group_rows(t, group_cols, rows)) {
      SvgSeries s;
      s.color = svg_palette(series.size());
      std::vector<std::pair<double, double>> pts;
      const auto xc = static_cast<std::size_t>(t.col(xcol));
      const auto yc = static_cast<std::size_t>(t.col(ycol));
      for (const auto* row : grp) {
        pts.emplace_back(detail::parse_double((*row)[xc]),
                         detail::parse_double((*row)[yc]));
      }
      std::sort(pts.begin(), pts.end());
      for (const auto& [x, y] : pts) {
        s.x.push_back(x);
        s.y.push_back(y);
      }
      series.push_back(std::move(s));
    }
    return svg_line_plot(series, kind_name(spec.kind), log_x, log_y);
  };
  switch (spec.kind) {
    case ExperimentKind::kBcdPhase:
    case ExperimentKind::kCvProba:
      return curve("conv_frac", "p", "converged", true, false, {"n", "d"});
    case ExperimentKind::kSgdError:
      return curve("median", "t", "w2_over_d", false, true,
                   {"n", "d", "alpha", "noise", "batch"});
    case ExperimentKind::kUniformConvergence:
      return curve("median", "p", "sup_err", true, true, {"n", "d"});
    case ExperimentKind::kFixedPoint:
      return curve("median", "p", "residual", true, true, {"n", "d"});
    case ExperimentKind::kScaling:
      return curve("median_iters", "d", "iters_to_conv", true, true,
                   {"n", "alpha"});
    case ExperimentKind::kClt: {
      const auto rows = detail::rows_with_stat(t, {"sample"});
      auto vals = detail::column_values(t, rows, "value");
      std::sort(vals.begin(), vals.end());
      SvgSeries s;
      for (std::size_t i = 0; i < vals.size(); ++i) {
        s.x.push_back(static_cast<double>(i));
        s.y.push_back(vals[i]);
      }
      return svg_line_plot({s}, "clt samples (sorted)", false, false);
    }
    case ExperimentKind::kTrajectory: {
      const auto rows = detail::rows_with_stat(t, {"trial"});
      for (const auto& [key, grp] :
           detail::group_rows(t, {"trial", "point"}, rows)) {
        SvgSeries s;
        s.color = svg_palette(series.size());
        const auto xc = static_cast<std::size_t>(t.col("x0"));
        const auto yc = static_cast<std::size_t>(t.col("x1"));
        for (const auto* row : grp) {
          s.x.push_back(detail::parse_double((*row)[xc]));
          s.y.push_back(detail::parse_double((*row)[yc]));
        }
        series.push_back(std::move(s));
      }
      return svg_line_plot(series, "trajectories", false, false);
    }
  }
  return {};
}

struct ExperimentResult {
  Table table;
  std::string body;  // exactly what gets written (csv or json)
  std::optional<std::string> svg;
  bool audit_ok = true;
};

inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
  ExperimentResult res;
  res.table = run_raw(spec);
  append_derived_rows(spec, res.table);
  if (spec.format == "json") {
    res.body = res.table.to_json().dump(2) + "\n";
  } else {
    res.body = res.table.to_csv();
  }
  if (spec.audit) res.audit_ok = audit_table(spec, res.table);
  if (spec.plot) res.svg = plot_experiment(spec, res.table);
  return res;
}

// Runs the sweep and writes results to spec.out (stdout when empty). Returns
// false only when the self-audit was requested and failed.
inline bool write_experiment(const ExperimentSpec& spec) {
  const ExperimentResult res = run_experiment(spec);
  if (spec.out.empty()) {
    std::cout << res.body;
  } else {
    write_text_file(spec.out, res.body);
  }
  if (res.svg) {
    const std::string path = spec.out.empty() ? "plot.svg" : spec.out + ".svg";
    write_text_file(path, *res.svg);
  }
  return res.audit_ok;
}

}  // namespace swlab
