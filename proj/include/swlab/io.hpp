#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "swlab/cells.hpp"
#include "swlab/energy.hpp"
#include "swlab/errors.hpp"
#include "swlab/exact_ot.hpp"
#include "swlab/solvers.hpp"
#include "swlab/support.hpp"

namespace swlab {

// Shortest exact decimal representation of a double; stable across runs.
inline std::string format_double(double v) {
  char buf[40];
  if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 1e15) {
    std::snprintf(buf, sizeof(buf), "%.0f", v);
    return buf;
  }
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  // trim to the shortest form that round-trips
  for (int prec = 1; prec < 17; ++prec) {
    char probe[40];
    std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
    if (std::strtod(probe, nullptr) == v) return probe;
  }
  return buf;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline double parse_double(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw IoError("trailing characters in number: " + s);
    return v;
  } catch (const std::invalid_argument&) {
    throw IoError("cannot parse number: '" + s + "'");
  }
}

}  // namespace detail

// ---- Support: CSV (header x0,...,x{d-1}) and JSON {"n","d","points"} ----

inline void support_to_csv(const Support& s, std::ostream& out) {
  for (Eigen::Index c = 0; c < s.dim(); ++c) {
    out << (c ? "," : "") << "x" << c;
  }
  out << "\n";
  for (Eigen::Index r = 0; r < s.n(); ++r) {
    for (Eigen::Index c = 0; c < s.dim(); ++c) {
      out << (c ? "," : "") << format_double(s.points()(r, c));
    }
    out << "\n";
  }
}

inline Support support_from_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("support csv: empty input");
  const auto header = detail::split_csv_line(line);
  const auto d = static_cast<Eigen::Index>(header.size());
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (static_cast<Eigen::Index>(fields.size()) != d) {
      throw IoError("support csv: ragged row");
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) row.push_back(detail::parse_double(f));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("support csv: no data rows");
  Eigen::MatrixXd pts(static_cast<Eigen::Index>(rows.size()), d);
  for (Eigen::Index r = 0; r < pts.rows(); ++r) {
    for (Eigen::Index c = 0; c < d; ++c) {
      pts(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
  }
  return Support(pts);
}

inline nlohmann::json support_to_json(const Support& s) {
  nlohmann::json pts = nlohmann::json::array();
  for (Eigen::Index r = 0; r < s.n(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < s.dim(); ++c) row.push_back(s.points()(r, c));
    pts.push_back(std::move(row));
  }
  return nlohmann::json{{"n", s.n()}, {"d", s.dim()}, {"points", pts}};
}

inline Support support_from_json(const nlohmann::json& j) {
  const auto n = j.at("n").get<Eigen::Index>();
  const auto d = j.at("d").get<Eigen::Index>();
  const auto& pts = j.at("points");
  if (static_cast<Eigen::Index>(pts.size()) != n) {
    throw IoError("support json: row count mismatch");
  }
  Eigen::MatrixXd m(n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = pts.at(static_cast<std::size_t>(r));
    if (static_cast<Eigen::Index>(row.size()) != d) {
      throw IoError("support json: column count mismatch");
    }
    for (Eigen::Index c = 0; c < d; ++c) {
      m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
  }
  return Support(m);
}

// ---- Estimates, configurations, OT results ----

inline nlohmann::json energy_estimate_to_json(const EnergyEstimate& e) {
  return nlohmann::json{{"value", e.value},
                        {"std_error", e.std_error},
                        {"p", e.p_used},
                        {"seed", e.seed}};
}

// Permutations serialized as 0-based index arrays, one per slice.
inline nlohmann::json configuration_to_json(const Configuration& cfg) {
  nlohmann::json perms = nlohmann::json::array();
  for (const auto& perm : cfg.perms) {
    perms.push_back(perm);
  }
  return nlohmann::json{{"perms", perms}, {"boundary", cfg.boundary}};
}

inline WeightVector weights_from_csv(std::istream& in) {
  std::vector<double> vals;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    for (const auto& f : detail::split_csv_line(line)) {
      if (!f.empty()) vals.push_back(detail::parse_double(f));
    }
  }
  if (vals.empty()) throw IoError("weights csv: empty");
  Eigen::VectorXd w(static_cast<Eigen::Index>(vals.size()));
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    w(i) = vals[static_cast<std::size_t>(i)];
  }
  return WeightVector(w);
}

inline CostMatrix cost_matrix_from_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    std::vector<double> row;
    for (const auto& f : fields) row.push_back(detail::parse_double(f));
    if (!rows.empty() && rows.front().size() != row.size()) {
      throw IoError("cost csv: ragged row");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("cost csv: empty");
  CostMatrix c(static_cast<Eigen::Index>(rows.size()),
               static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index r = 0; r < c.rows(); ++r) {
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      c(r, j) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)];
    }
  }
  return c;
}

inline nlohmann::json kantorovich_to_json(const KantorovichResult& res) {
  nlohmann::json plan = nlohmann::json::array();
  for (Eigen::Index r = 0; r < res.plan.pi.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < res.plan.pi.cols(); ++c) {
      row.push_back(res.plan.pi(r, c));
    }
    plan.push_back(std::move(row));
  }
  std::vector<double> f(res.dual_f.data(), res.dual_f.data() + res.dual_f.size());
  std::vector<double> g(res.dual_g.data(), res.dual_g.data() + res.dual_g.size());
  return nlohmann::json{
      {"cost", res.cost}, {"plan", plan}, {"dual_f", f}, {"dual_g", g}};
}

// ---- Trajectories ----

inline void trajectory_to_csv(const Trajectory& traj, const SGDConfig* sgd_cfg,
                              std::ostream& out) {
  out << "t,energy,w2_over_d,step,noise_level\n";
  for (std::size_t i = 0; i < traj.steps.size(); ++i) {
    const long t = traj.steps[i];
    const double step = sgd_cfg ? sgd_cfg->step(t) : 0.0;
    const double noise = sgd_cfg ? sgd_cfg->noise_level : 0.0;
    out << t << "," << format_double(traj.energy_series[i]) << ","
        << format_double(traj.w2_series[i]) << "," << format_double(step)
        << "," << format_double(noise) << "\n";
  }
}

inline nlohmann::json trajectory_sidecar_json(const Trajectory& traj,
                                              const nlohmann::json& config) {
  return nlohmann::json{{"config", config},
                        {"terminal", support_to_json(traj.terminal)},
                        {"converged", traj.converged},
                        {"diverged", traj.diverged},
                        {"terminal_boundary", traj.terminal_boundary},
                        {"iters", traj.iters},
                        {"max_row_norm", traj.max_row_norm_seen},
                        {"terminal_assignment", traj.terminal_assignment},
                        {"warnings", traj.warnings}};
}

// ---- Cell reports ----

// Enumerates every configuration (guarded) and reports stability, the energy
// at the cell minimizer and the boundary flag.
inline void write_cell_report_csv(const Support& z, const DirectionSet& dirs,
                                  std::ostream& out, double guard = 1e6) {
  out << "config_id,stable,energy_at_min,boundary_flag\n";
  long id = 0;
  detail::for_each_configuration(
      z.n(), dirs.p(), guard, [&](const Configuration& cfg) {
        const CellQuadratic q = quadratic_coeffs(cfg, z, dirs);
        const StableCellResult res = is_stable_cell(cfg, z, dirs);
        const double energy = eval_quadratic(q, res.minimizer);
        out << id++ << "," << (res.stable ? 1 : 0) << ","
            << format_double(energy) << "," << (res.boundary ? 1 : 0) << "\n";
      });
}

inline void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << body;
  if (!out) throw IoError("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace swlab
