#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "swlab/cells.hpp"
#include "swlab/directions.hpp"
#include "swlab/energy.hpp"
#include "swlab/errors.hpp"
#include "swlab/io.hpp"
#include "swlab/rng.hpp"
#include "swlab/solvers.hpp"
#include "swlab/support.hpp"
#include "swlab/svg.hpp"
#include "swlab/thread_pool.hpp"

namespace swlab {

enum class ExperimentKind {
  kTrajectory,
  kBcdPhase,
  kCvProba,
  kSgdError,
  kUniformConvergence,
  kClt,
  kFixedPoint,
  kScaling,
};

inline const char* kind_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::kTrajectory: return "trajectory";
    case ExperimentKind::kBcdPhase: return "bcd-phase";
    case ExperimentKind::kCvProba: return "cv-proba";
    case ExperimentKind::kSgdError: return "sgd-error";
    case ExperimentKind::kUniformConvergence: return "uniform-convergence";
    case ExperimentKind::kClt: return "clt";
    case ExperimentKind::kFixedPoint: return "fixed-point";
    case ExperimentKind::kScaling: return "scaling";
  }
  return "unknown";
}

inline ExperimentKind parse_kind(const std::string& name) {
  for (ExperimentKind k :
       {ExperimentKind::kTrajectory, ExperimentKind::kBcdPhase,
        ExperimentKind::kCvProba, ExperimentKind::kSgdError,
        ExperimentKind::kUniformConvergence, ExperimentKind::kClt,
        ExperimentKind::kFixedPoint, ExperimentKind::kScaling}) {
    if (name == kind_name(k)) return k;
  }
  throw std::invalid_argument("unknown experiment kind: " + name);
}

// Full parameter set of a sweep. Fields irrelevant to a kind are ignored by
// its runner; defaults come from default_spec().
struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::kBcdPhase;
  std::vector<Eigen::Index> n_values{10};
  std::vector<Eigen::Index> d_values{10};
  std::vector<Eigen::Index> p_values{64};
  std::vector<double> alpha_values{5.0};
  std::vector<double> noise_values{0.0};
  std::vector<long> batch_values{1};
  long trials = 10;
  long max_iters = 1000;
  double tol = 1e-5;          // BCD epsilon / SGD beta (negative disables)
  double conv_metric = 1e-5;  // threshold on the (1/d) W2^2 error
  long record_every = 100;
  Eigen::Index p_psi = 100000;
  long clt_resamples = 2000;
  Eigen::Index clt_p = 512;
  long clt_oracle_samples = 1000000;
  double clt_u = 1.0;
  double clt_v = 1.0;
  int ladder_min_log2 = 8;
  int ladder_max_log2 = 16;
  double req_eps = 0.5;  // epsilon/eta echoed in fixed-point reports
  double req_eta = 0.1;
  std::string dataset = "spiral";  // trajectory: spiral | two-point
  std::string algorithm = "bcd";   // trajectory: bcd | sgd
  std::uint64_t base_seed = 0;
  std::string out;
  std::string format = "csv";
  bool plot = false;
  bool audit = false;
};

inline ExperimentSpec default_spec(ExperimentKind kind) {
  ExperimentSpec spec;
  spec.kind = kind;
  switch (kind) {
    case ExperimentKind::kBcdPhase:
    case ExperimentKind::kCvProba:
      spec.n_values = {10};
      spec.d_values = {10};
      spec.p_values = {30, 100, 300, 1000, 2000};
      spec.trials = 20;
      spec.max_iters = 1000;
      spec.tol = 1e-5;
      break;
    case ExperimentKind::kSgdError:
      spec.n_values = {10};
      spec.d_values = {5};
      spec.alpha_values = {5.0};
      spec.noise_values = {0.0};
      spec.trials = 10;
      spec.max_iters = 100000;
      spec.tol = -1.0;  // always run to max_iters
      spec.record_every = 100;
      break;
    case ExperimentKind::kUniformConvergence:
      spec.trials = 50;
      break;
    case ExperimentKind::kClt:
      spec.trials = 2000;
      break;
    case ExperimentKind::kFixedPoint:
      spec.n_values = {5};
      spec.d_values = {3};
      spec.p_values = {16, 64, 256, 1024, 4096};
      spec.trials = 10;
      spec.max_iters = 2000;
      spec.tol = 1e-9;
      break;
    case ExperimentKind::kScaling:
      spec.n_values = {10};
      spec.d_values = {4, 8, 16};
      spec.alpha_values = {5.0};
      spec.trials = 5;
      spec.max_iters = 300000;
      spec.tol = -1.0;
      spec.record_every = 50;
      break;
    case ExperimentKind::kTrajectory:
      spec.trials = 4;
      spec.p_values = {30};
      spec.alpha_values = {0.3};
      spec.max_iters = 500;
      spec.tol = 1e-5;
      spec.record_every = 1;
      break;
  }
  return spec;
}

inline ExperimentSpec spec_from_json(const nlohmann::json& j) {
  ExperimentSpec spec = default_spec(parse_kind(j.at("kind").get<std::string>()));
  auto get_idx_list = [&](const char* key, std::vector<Eigen::Index>& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::vector<Eigen::Index>>();
  };
  get_idx_list("n", spec.n_values);
  get_idx_list("d", spec.d_values);
  get_idx_list("p", spec.p_values);
  if (j.contains("alpha")) spec.alpha_values = j.at("alpha").get<std::vector<double>>();
  if (j.contains("noise")) spec.noise_values = j.at("noise").get<std::vector<double>>();
  if (j.contains("batch")) spec.batch_values = j.at("batch").get<std::vector<long>>();
  if (j.contains("trials")) spec.trials = j.at("trials").get<long>();
  if (j.contains("max_iters")) spec.max_iters = j.at("max_iters").get<long>();
  if (j.contains("tol")) spec.tol = j.at("tol").get<double>();
  if (j.contains("conv_metric")) spec.conv_metric = j.at("conv_metric").get<double>();
  if (j.contains("record_every")) spec.record_every = j.at("record_every").get<long>();
  if (j.contains("p_psi")) spec.p_psi = j.at("p_psi").get<Eigen::Index>();
  if (j.contains("clt_resamples")) spec.clt_resamples = j.at("clt_resamples").get<long>();
  if (j.contains("clt_p")) spec.clt_p = j.at("clt_p").get<Eigen::Index>();
  if (j.contains("clt_oracle_samples")) spec.clt_oracle_samples = j.at("clt_oracle_samples").get<long>();
  if (j.contains("clt_u")) spec.clt_u = j.at("clt_u").get<double>();
  if (j.contains("clt_v")) spec.clt_v = j.at("clt_v").get<double>();
  if (j.contains("ladder_min_log2")) spec.ladder_min_log2 = j.at("ladder_min_log2").get<int>();
  if (j.contains("ladder_max_log2")) spec.ladder_max_log2 = j.at("ladder_max_log2").get<int>();
  if (j.contains("req_eps")) spec.req_eps = j.at("req_eps").get<double>();
  if (j.contains("req_eta")) spec.req_eta = j.at("req_eta").get<double>();
  if (j.contains("dataset")) spec.dataset = j.at("dataset").get<std::string>();
  if (j.contains("algorithm")) spec.algorithm = j.at("algorithm").get<std::string>();
  if (j.contains("seed")) spec.base_seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("out")) spec.out = j.at("out").get<std::string>();
  if (j.contains("format")) spec.format = j.at("format").get<std::string>();
  if (j.contains("plot")) spec.plot = j.at("plot").get<bool>();
  if (j.contains("audit")) spec.audit = j.at("audit").get<bool>();
  if (spec.trials < 1) throw std::invalid_argument("spec: trials >= 1");
  return spec;
}

// ---- Result tables -------------------------------------------------------

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  Eigen::Index col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<Eigen::Index>(i);
    }
    throw std::invalid_argument("table: no column " + name);
  }

  std::string to_csv() const {
    std::ostringstream out;
    for (std::size_t i = 0; i < header.size(); ++i) {
      out << (i ? "," : "") << header[i];
    }
    out << "\n";
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        out << (i ? "," : "") << row[i];
      }
      out << "\n";
    }
    return out.str();
  }

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& row : rows) {
      nlohmann::json obj;
      for (std::size_t i = 0; i < header.size(); ++i) obj[header[i]] = row[i];
      arr.push_back(std::move(obj));
    }
    return arr;
  }

  static Table from_csv(const std::string& body) {
    Table t;
    std::istringstream in(body);
    std::string line;
    if (!std::getline(in, line)) throw IoError("table csv: empty");
    t.header = detail::split_csv_line(line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto fields = detail::split_csv_line(line);
      if (fields.size() != t.header.size()) throw IoError("table csv: ragged row");
      t.rows.push_back(std::move(fields));
    }
    return t;
  }
};

namespace detail {

inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - std::floor(pos);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

inline double standard_normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

// Two-sided KS statistic of the samples against the standard normal after
// standardizing by the sample mean and standard deviation.
inline double ks_statistic_vs_fitted_normal(std::vector<double> samples) {
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= n;
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  var /= (n - 1.0);
  const double sd = std::sqrt(var);
  for (double& s : samples) s = (s - mean) / sd;
  std::sort(samples.begin(), samples.end());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double cdf = standard_normal_cdf(samples[i]);
    const double hi = static_cast<double>(i + 1) / n - cdf;
    const double lo = cdf - static_cast<double>(i) / n;
    d = std::max({d, hi, lo});
  }
  return d;
}

inline Support gaussian_support(Eigen::Index n, Eigen::Index d, Rng& rng) {
  Eigen::MatrixXd pts(n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < d; ++c) pts(r, c) = rng.gaussian();
  }
  return Support(pts);
}

inline Support uniform01_support(Eigen::Index n, Eigen::Index d, Rng& rng) {
  Eigen::MatrixXd pts(n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < d; ++c) pts(r, c) = rng.uniform();
  }
  return Support(pts);
}

}  // namespace detail

// Two-point symmetric configuration Y = ((u,v), (-u,-v)).
inline Support symmetric_pair(double u, double v) {
  Eigen::MatrixXd pts(2, 2);
  pts << u, v, -u, -v;
  return Support(pts);
}

// Fixed planar targets used by the 2D studies.
inline Support two_point_dataset() {
  Eigen::MatrixXd pts(2, 2);
  pts << 0.0, -1.0, 0.0, 1.0;
  return Support(pts);
}

inline Support spiral_dataset(Eigen::Index n = 10) {
  Eigen::MatrixXd pts(n, 2);
  constexpr double kPi = 3.14159265358979323846;
  for (Eigen::Index k = 1; k <= n; ++k) {
    const double radius = 2.0 * static_cast<double>(k) / static_cast<double>(n);
    const double angle = 2.0 * static_cast<double>(k) * kPi / static_cast<double>(n);
    pts(k - 1, 0) = radius * std::cos(angle);
    pts(k - 1, 1) = radius * std::sin(angle);
  }
  return Support(pts);
}

namespace detail {

// Seed streams per trial: data, initial position, axes, solver, psi.
enum : std::uint64_t {
  kStreamData = 1,
  kStreamInit = 2,
  kStreamAxes = 3,
  kStreamSolver = 4,
  kStreamPsi = 5,
  kStreamDirs = 6,
};

struct GroupKey {
  std::vector<std::string> values;
  bool operator<(const GroupKey& other) const { return values < other.values; }
  bool operator==(const GroupKey& other) const { return values == other.values; }
};

// Groups rows by the given columns, preserving first-appearance order. The
// returned pointers refer into `rows`, which must stay alive and unmodified;
// derive functions therefore work on copies of the raw rows, never on
// t.rows, which they append to.
inline std::vector<std::pair<GroupKey, std::vector<const std::vector<std::string>*>>>
group_rows(const Table& t, const std::vector<std::string>& by,
           const std::vector<std::vector<std::string>>& rows) {
  std::vector<Eigen::Index> idx;
  idx.reserve(by.size());
  for (const auto& name : by) idx.push_back(t.col(name));
  std::vector<std::pair<GroupKey, std::vector<const std::vector<std::string>*>>> out;
  std::map<GroupKey, std::size_t> where;
  for (const auto& row : rows) {
    GroupKey key;
    for (Eigen::Index i : idx) key.values.push_back(row[static_cast<std::size_t>(i)]);
    auto it = where.find(key);
    if (it == where.end()) {
      where.emplace(key, out.size());
      out.emplace_back(key, std::vector<const std::vector<std::string>*>{&row});
    } else {
      out[it->second].second.push_back(&row);
    }
  }
  return out;
}

// Copies of the rows whose stat label is in `stats`.
inline std::vector<std::vector<std::string>> rows_with_stat(
    const Table& t, const std::vector<std::string>& stats) {
  const auto stat_col = static_cast<std::size_t>(t.col("stat"));
  std::vector<std::vector<std::string>> out;
  for (const auto& row : t.rows) {
    for (const auto& s : stats) {
      if (row[stat_col] == s) {
        out.push_back(row);
        break;
      }
    }
  }
  return out;
}

inline std::vector<double> column_values(
    const Table& t, const std::vector<const std::vector<std::string>*>& rows,
    const std::string& col) {
  const auto c = static_cast<std::size_t>(t.col(col));
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto* row : rows) out.push_back(parse_double((*row)[c]));
  return out;
}

inline std::vector<double> column_values(
    const Table& t, const std::vector<std::vector<std::string>>& rows,
    const std::string& col) {
  const auto c = static_cast<std::size_t>(t.col(col));
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& row : rows) out.push_back(parse_double(row[c]));
  return out;
}

}  // namespace detail

// ---- Derived (aggregate) rows --------------------------------------------

// Stat labels of rows recomputable from the raw rows; everything else in the
// `stat` column is raw input.
inline std::vector<std::string> derived_stats(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kBcdPhase:
    case ExperimentKind::kCvProba:
      return {"conv_frac", "q30", "median", "q70", "error_count"};
    case ExperimentKind::kSgdError:
      return {"error_count", "plateau", "q30", "median", "q70",
              "plateau_q30", "plateau_median", "plateau_q70"};
    case ExperimentKind::kUniformConvergence:
      return {"q30", "median", "q70"};
    case ExperimentKind::kClt:
      return {"sample_var", "var_ratio", "ks_stat", "ks_pass"};
    case ExperimentKind::kFixedPoint:
      return {"median", "excluded_count", "required_p"};
    case ExperimentKind::kScaling:
      return {"median_iters", "non_converged", "fit_exponent"};
    case ExperimentKind::kTrajectory:
      return {};
  }
  return {};
}

namespace detail {

inline std::vector<std::string> blank_row(const Table& t) {
  return std::vector<std::string>(t.header.size());
}

inline void set(std::vector<std::string>& row, const Table& t,
                const std::string& col, const std::string& value) {
  row[static_cast<std::size_t>(t.col(col))] = value;
}

inline void copy_key(std::vector<std::string>& row, const Table& t,
                     const std::vector<std::string>& by, const GroupKey& key) {
  for (std::size_t i = 0; i < by.size(); ++i) set(row, t, by[i], key.values[i]);
}

inline void append_quantile_rows(Table& t, const std::vector<std::string>& by,
                                 const GroupKey& key,
                                 const std::vector<std::string>& cols,
                                 const std::vector<std::vector<double>>& vals,
                                 const std::string& kind_label) {
  const std::vector<std::pair<std::string, double>> quants = {
      {"q30", 0.30}, {"median", 0.50}, {"q70", 0.70}};
  for (const auto& [stat, q] : quants) {
    auto row = blank_row(t);
    set(row, t, "kind", kind_label);
    copy_key(row, t, by, key);
    set(row, t, "stat", stat);
    set(row, t, "trial", "-1");
    for (std::size_t c = 0; c < cols.size(); ++c) {
      set(row, t, cols[c], format_double(quantile(vals[c], q)));
    }
    t.rows.push_back(std::move(row));
  }
}

inline void derive_bcd_phase(const ExperimentSpec& spec, Table& t) {
  const auto raw = rows_with_stat(t, {"trial"});
  const std::vector<std::string> by{"n", "d", "p"};
  const auto err_col = static_cast<std::size_t>(t.col("error"));
  for (const auto& [key, rows] : group_rows(t, by, raw)) {
    std::vector<const std::vector<std::string>*> ok;
    long errors = 0;
    for (const auto* r : rows) {
      if ((*r)[err_col].empty()) ok.push_back(r); else ++errors;
    }
    double frac = 0.0;
    for (double c : column_values(t, ok, "converged")) frac += c;
    if (!ok.empty()) frac /= static_cast<double>(ok.size());
    auto row = blank_row(t);
    set(row, t, "kind", kind_name(spec.kind));
    copy_key(row, t, by, key);
    set(row, t, "stat", "conv_frac");
    set(row, t, "trial", "-1");
    set(row, t, "converged", format_double(frac));
    t.rows.push_back(std::move(row));
    append_quantile_rows(t, by, key, {"final_w2_over_d"},
                         {column_values(t, ok, "final_w2_over_d")},
                         kind_name(spec.kind));
    auto err_row = blank_row(t);
    set(err_row, t, "kind", kind_name(spec.kind));
    copy_key(err_row, t, by, key);
    set(err_row, t, "stat", "error_count");
    set(err_row, t, "trial", "-1");
    set(err_row, t, "error", std::to_string(errors));
    t.rows.push_back(std::move(err_row));
  }
}

inline void derive_sgd_error(const ExperimentSpec& spec, Table& t) {
  auto raw = rows_with_stat(t, {"trial"});
  const std::vector<std::string> grid{"n", "d", "alpha", "noise", "batch"};
  const std::string label = kind_name(spec.kind);
  {
    const auto err_col = static_cast<std::size_t>(t.col("error"));
    long errors = 0;
    std::vector<std::vector<std::string>> ok;
    for (auto& row : raw) {
      if (row[err_col].empty()) ok.push_back(std::move(row)); else ++errors;
    }
    raw = std::move(ok);
    auto err_row = blank_row(t);
    set(err_row, t, "kind", label);
    set(err_row, t, "stat", "error_count");
    set(err_row, t, "trial", "-1");
    set(err_row, t, "error", std::to_string(errors));
    t.rows.push_back(std::move(err_row));
  }

  // plateau per trial: mean of the last decile of recorded errors
  std::vector<std::vector<std::string>> plateau_rows;
  {
    std::vector<std::string> by = grid;
    by.push_back("trial");
    by.push_back("seed");
    for (const auto& [key, rows] : group_rows(t, by, raw)) {
      std::vector<std::pair<double, double>> tw;  // (t, w2)
      bool diverged = false;
      const auto t_col = static_cast<std::size_t>(t.col("t"));
      const auto w_col = static_cast<std::size_t>(t.col("w2_over_d"));
      const auto dv_col = static_cast<std::size_t>(t.col("diverged"));
      for (const auto* r : rows) {
        tw.emplace_back(parse_double((*r)[t_col]), parse_double((*r)[w_col]));
        diverged = diverged || (*r)[dv_col] == "1";
      }
      std::sort(tw.begin(), tw.end());
      const std::size_t count = tw.size();
      const std::size_t tail = std::max<std::size_t>(1, count / 10);
      double acc = 0.0;
      for (std::size_t i = count - tail; i < count; ++i) acc += tw[i].second;
      acc /= static_cast<double>(tail);
      auto row = blank_row(t);
      set(row, t, "kind", label);
      copy_key(row, t, by, key);
      set(row, t, "stat", "plateau");
      set(row, t, "t", "-1");
      set(row, t, "w2_over_d", format_double(acc));
      set(row, t, "diverged", diverged ? "1" : "0");
      plateau_rows.push_back(row);
      t.rows.push_back(std::move(row));
    }
  }

  // quantiles across trials at each recorded step
  {
    std::vector<std::string> by = grid;
    by.push_back("t");
    for (const auto& [key, rows] : group_rows(t, by, raw)) {
      append_quantile_rows(t, by, key, {"w2_over_d"},
                           {column_values(t, rows, "w2_over_d")}, label);
    }
  }

  // quantiles of the per-trial plateaus
  {
    for (const auto& [key, rows] : group_rows(t, grid, plateau_rows)) {
      const auto vals = column_values(t, rows, "w2_over_d");
      for (const auto& [stat, q] : std::vector<std::pair<std::string, double>>{
               {"plateau_q30", 0.30},
               {"plateau_median", 0.50},
               {"plateau_q70", 0.70}}) {
        auto row = blank_row(t);
        set(row, t, "kind", label);
        copy_key(row, t, grid, key);
        set(row, t, "stat", stat);
        set(row, t, "trial", "-1");
        set(row, t, "t", "-1");
        set(row, t, "w2_over_d", format_double(quantile(vals, q)));
        t.rows.push_back(std::move(row));
      }
    }
  }
}

inline void derive_uniform_convergence(const ExperimentSpec& spec, Table& t) {
  const auto raw = rows_with_stat(t, {"trial"});
  const std::vector<std::string> by{"n", "d", "p"};
  for (const auto& [key, rows] : group_rows(t, by, raw)) {
    append_quantile_rows(t, by, key, {"sup_err", "sqrtp_sup_err"},
                         {column_values(t, rows, "sup_err"),
                          column_values(t, rows, "sqrtp_sup_err")},
                         kind_name(spec.kind));
  }
}

inline void derive_clt(const ExperimentSpec& spec, Table& t) {
  const auto samples_rows = rows_with_stat(t, {"sample"});
  const auto values = column_values(t, samples_rows, "value");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= (n - 1.0);

  const auto oracle_rows = rows_with_stat(t, {"oracle_var"});
  const auto crit_rows = rows_with_stat(t, {"ks_critical"});
  const double oracle = column_values(t, oracle_rows, "value").at(0);
  const double critical = column_values(t, crit_rows, "value").at(0);
  const double ks = ks_statistic_vs_fitted_normal(values);

  auto push = [&](const std::string& stat, double value) {
    auto row = blank_row(t);
    set(row, t, "kind", kind_name(spec.kind));
    set(row, t, "u", format_double(spec.clt_u));
    set(row, t, "v", format_double(spec.clt_v));
    set(row, t, "p", std::to_string(spec.clt_p));
    set(row, t, "trial", "-1");
    set(row, t, "stat", stat);
    set(row, t, "value", format_double(value));
    t.rows.push_back(std::move(row));
  };
  push("sample_var", var);
  push("var_ratio", var / oracle);
  push("ks_stat", ks);
  push("ks_pass", ks < critical ? 1.0 : 0.0);
}

inline void derive_fixed_point(const ExperimentSpec& spec, Table& t) {
  const auto raw = rows_with_stat(t, {"trial"});
  const std::vector<std::string> by{"n", "d", "p", "p_psi"};
  const auto err_col = static_cast<std::size_t>(t.col("error"));
  const auto excl_col = static_cast<std::size_t>(t.col("excluded"));
  for (const auto& [key, rows] : group_rows(t, by, raw)) {
    std::vector<const std::vector<std::string>*> kept;
    long excluded = 0;
    for (const auto* r : rows) {
      if (!(*r)[err_col].empty() || (*r)[excl_col] == "1") {
        ++excluded;
      } else {
        kept.push_back(r);
      }
    }
    auto med = blank_row(t);
    set(med, t, "kind", kind_name(spec.kind));
    copy_key(med, t, by, key);
    set(med, t, "stat", "median");
    set(med, t, "trial", "-1");
    set(med, t, "residual",
        format_double(quantile(column_values(t, kept, "residual"), 0.5)));
    t.rows.push_back(std::move(med));

    auto exc = blank_row(t);
    set(exc, t, "kind", kind_name(spec.kind));
    copy_key(exc, t, by, key);
    set(exc, t, "stat", "excluded_count");
    set(exc, t, "trial", "-1");
    set(exc, t, "excluded", std::to_string(excluded));
    t.rows.push_back(std::move(exc));

    // worst-case projection bound echoed next to the empirical ladder
    std::vector<const std::vector<std::string>*> with_data;
    for (const auto* r : rows) {
      if ((*r)[err_col].empty()) with_data.push_back(r);
    }
    if (with_data.empty()) continue;  // nothing to size the bound from
    const double cz_med = quantile(column_values(t, with_data, "cz_bar"), 0.5);
    const auto n_val = static_cast<Eigen::Index>(parse_double(key.values[0]));
    const auto d_val = static_cast<Eigen::Index>(parse_double(key.values[1]));
    auto req = blank_row(t);
    set(req, t, "kind", kind_name(spec.kind));
    copy_key(req, t, by, key);
    set(req, t, "stat", "required_p");
    set(req, t, "trial", "-1");
    set(req, t, "required_p",
        std::to_string(required_p(spec.req_eps, spec.req_eta, n_val, d_val,
                                  cz_med)));
    t.rows.push_back(std::move(req));
  }
}

inline void derive_scaling(const ExperimentSpec& spec, Table& t) {
  const auto raw = rows_with_stat(t, {"trial"});
  const std::vector<std::string> by{"n", "alpha", "d"};
  const auto conv_col = static_cast<std::size_t>(t.col("converged"));
  struct MedianPoint { double d; double med; };
  std::map<GroupKey, std::vector<MedianPoint>> fit_points;
  std::vector<GroupKey> fit_order;
  for (const auto& [key, rows] : group_rows(t, by, raw)) {
    std::vector<const std::vector<std::string>*> conv;
    long non_conv = 0;
    for (const auto* r : rows) {
      if ((*r)[conv_col] == "1") conv.push_back(r); else ++non_conv;
    }
    const double med = quantile(column_values(t, conv, "iters_to_conv"), 0.5);
    auto med_row = blank_row(t);
    set(med_row, t, "kind", kind_name(spec.kind));
    copy_key(med_row, t, by, key);
    set(med_row, t, "stat", "median_iters");
    set(med_row, t, "trial", "-1");
    set(med_row, t, "iters_to_conv", format_double(med));
    t.rows.push_back(std::move(med_row));

    auto nc_row = blank_row(t);
    set(nc_row, t, "kind", kind_name(spec.kind));
    copy_key(nc_row, t, by, key);
    set(nc_row, t, "stat", "non_converged");
    set(nc_row, t, "trial", "-1");
    set(nc_row, t, "converged", std::to_string(non_conv));
    t.rows.push_back(std::move(nc_row));

    GroupKey fit_key{{key.values[0], key.values[1]}};
    if (!conv.empty()) {
      if (fit_points.find(fit_key) == fit_points.end()) {
        fit_order.push_back(fit_key);
      }
      fit_points[fit_key].push_back({parse_double(key.values[2]), med});
    }
  }
  // least-squares slope of log(median iterations) against log(d)
  for (const auto& key : fit_order) {
    const auto& pts = fit_points[key];
    if (pts.size() < 2) continue;
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (const auto& pt : pts) {
      const double lx = std::log(pt.d);
      const double ly = std::log(pt.med);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
    }
    const double count = static_cast<double>(pts.size());
    const double slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
    auto row = blank_row(t);
    set(row, t, "kind", kind_name(spec.kind));
    set(row, t, "n", key.values[0]);
    set(row, t, "alpha", key.values[1]);
    set(row, t, "stat", "fit_exponent");
    set(row, t, "trial", "-1");
    set(row, t, "exponent", format_double(slope));
    t.rows.push_back(std::move(row));
  }
}

}  // namespace detail

// Appends every derived row for the kind; also the audit recomputation path.
inline void append_derived_rows(const ExperimentSpec& spec, Table& t) {
  switch (spec.kind) {
    case ExperimentKind::kBcdPhase:
    case ExperimentKind::kCvProba:
      detail::derive_bcd_phase(spec, t);
      break;
    case ExperimentKind::kSgdError:
      detail::derive_sgd_error(spec, t);
      break;
    case ExperimentKind::kUniformConvergence:
      detail::derive_uniform_convergence(spec, t);
      break;
    case ExperimentKind::kClt:
      detail::derive_clt(spec, t);
      break;
    case ExperimentKind::kFixedPoint:
      detail::derive_fixed_point(spec, t);
      break;
    case ExperimentKind::kScaling:
      detail::derive_scaling(spec, t);
      break;
    case ExperimentKind::kTrajectory:
      break;
  }
}

// Recomputes the derived rows from the raw rows of a written table and
// checks they match exactly.
inline bool audit_table(const ExperimentSpec& spec, const Table& written) {
  const auto derived = derived_stats(spec.kind);
  auto is_derived = [&](const std::vector<std::string>& row) {
    const auto stat = row[static_cast<std::size_t>(written.col("stat"))];
    return std::find(derived.begin(), derived.end(), stat) != derived.end();
  };
  Table raw;
  raw.header = written.header;
  std::vector<std::vector<std::string>> expected;
  for (const auto& row : written.rows) {
    if (is_derived(row)) {
      expected.push_back(row);
    } else {
      raw.rows.push_back(row);
    }
  }
  const std::size_t raw_count = raw.rows.size();
  append_derived_rows(spec, raw);
  const std::vector<std::vector<std::string>> recomputed(
      raw.rows.begin() + static_cast<std::ptrdiff_t>(raw_count),
      raw.rows.end());
  return recomputed == expected;
}

}  // namespace swlab
