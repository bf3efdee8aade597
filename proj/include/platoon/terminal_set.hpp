#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "platoon/errors.hpp"

namespace platoon::control {

// Constraint-admissible invariant polytope {z : H z <= h} for z+ = F z.
// `nc` is the determination index: rows cover powers F^0 .. F^nc.
struct TerminalSet {
  Eigen::MatrixXd H;
  Eigen::VectorXd h;
  int nc = 0;

  bool contains(const Eigen::VectorXd& z, double tol = 1e-9) const {
    return H.rows() == 0 || ((H * z - h).array() <= tol).all();
  }
};

namespace detail {

// Exact maximum of c'z over the box [lo, hi]: each coordinate picks its
// favorable corner.
inline double box_row_max(const Eigen::RowVectorXd& c,
                          const Eigen::VectorXd& lo,
                          const Eigen::VectorXd& hi) {
  double m = 0.0;
  for (Eigen::Index j = 0; j < c.size(); ++j) {
    m += c(j) >= 0.0 ? c(j) * hi(j) : c(j) * lo(j);
  }
  return m;
}

}  // namespace detail

// Builds the maximal constraint-admissible invariant set for the stable
// closed loop z+ = F z inside
//   { z : z_lo <= z <= z_hi,  u_lo <= K z <= u_hi }.
//
// Rows are stacked for powers i = 0, 1, ... The iteration stops at the first
// power whose rows already hold everywhere on the state box; because the
// power-0 rows confine the set to that box, the one-step check is exact (any
// z in the set has F z satisfying all retained rows, hence F z stays in the
// set). The state box must be bounded on every axis or the construction
// cannot close. Infinite input bounds simply drop the input rows.
inline TerminalSet build_terminal_set(const Eigen::MatrixXd& F,
                                      const Eigen::MatrixXd& K,
                                      const Eigen::VectorXd& u_lo,
                                      const Eigen::VectorXd& u_hi,
                                      const Eigen::VectorXd& z_lo,
                                      const Eigen::VectorXd& z_hi,
                                      int max_power = 500) {
  const Eigen::Index n = F.rows();
  if (F.cols() != n || z_lo.size() != n || z_hi.size() != n) {
    throw ConfigError("build_terminal_set: dimension mismatch");
  }
  const Eigen::Index m = K.rows();
  if (m > 0 && (K.cols() != n || u_lo.size() != m || u_hi.size() != m)) {
    throw ConfigError("build_terminal_set: input dimension mismatch");
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!std::isfinite(z_lo(j)) || !std::isfinite(z_hi(j)) ||
        !(z_lo(j) < 0.0) || !(z_hi(j) > 0.0)) {
      throw ConfigError(
          "build_terminal_set: state box must be bounded with 0 interior");
    }
  }

  // One power's worth of template rows: +/- input rows, then +/- state rows,
  // skipping infinite bounds.
  std::vector<Eigen::RowVectorXd> base_rows;
  std::vector<double> base_bounds;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (std::isfinite(u_hi(i))) {
      base_rows.push_back(K.row(i));
      base_bounds.push_back(u_hi(i));
    }
    if (std::isfinite(u_lo(i))) {
      base_rows.push_back(-K.row(i));
      base_bounds.push_back(-u_lo(i));
    }
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(n);
    e(j) = 1.0;
    base_rows.push_back(e);
    base_bounds.push_back(z_hi(j));
    base_rows.push_back(-e);
    base_bounds.push_back(-z_lo(j));
  }
  const std::size_t rows_per_power = base_rows.size();

  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> bounds;
  Eigen::MatrixXd Fi = Eigen::MatrixXd::Identity(n, n);  // F^i
  int nc = -1;
  for (int power = 0; power <= max_power + 1; ++power) {
    // Candidate rows at this power.
    bool redundant = true;
    std::vector<Eigen::RowVectorXd> cand(rows_per_power);
    for (std::size_t r = 0; r < rows_per_power; ++r) {
      cand[r] = base_rows[r] * Fi;
      if (detail::box_row_max(cand[r], z_lo, z_hi) > base_bounds[r] + 1e-12) {
        redundant = false;
      }
    }
    if (power > 0 && redundant) {
      nc = power - 1;
      break;
    }
    for (std::size_t r = 0; r < rows_per_power; ++r) {
      rows.push_back(cand[r]);
      bounds.push_back(base_bounds[r]);
    }
    Fi = (Fi * F).eval();
  }
  if (nc < 0) {
    throw NumericError("build_terminal_set: not determined within " +
                       std::to_string(max_power) + " powers");
  }

  TerminalSet out;
  out.nc = nc;
  out.H.resize(static_cast<Eigen::Index>(rows.size()), n);
  out.h.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.H.row(static_cast<Eigen::Index>(r)) = rows[r];
    out.h(static_cast<Eigen::Index>(r)) = bounds[r];
  }
  return out;
}

}  // namespace platoon::control
