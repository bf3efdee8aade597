#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>
#include <vector>

#include "platoon/errors.hpp"

namespace platoon::control {

struct QpOptions {
  double feas_tol = 1e-9;
  int max_iterations = 0;  // 0 -> derived from problem size
};

struct QpResult {
  Eigen::VectorXd x;
  Eigen::VectorXd lambda;   // one multiplier per row, >= 0, nonzero on active
  bool feasible = true;
  int iterations = 0;
  double kkt_residual = 0.0;
  std::vector<int> active;  // row indices of the final active set
};

// Dual active-set method (Goldfarb-Idnani) for the strictly convex QP
//   min 1/2 x'Hx + g'x   s.t.   M x <= m.
// Starts at the unconstrained minimum and adds the most violated row each
// outer step (ties broken toward the lowest index, so the path is
// deterministic). An unbounded dual step proves primal infeasibility, which
// is reported via `feasible` rather than an exception.
inline QpResult solve_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
                         const Eigen::MatrixXd& M, const Eigen::VectorXd& m,
                         const QpOptions& opts = {}) {
  const Eigen::Index n = H.rows();
  const Eigen::Index rows = M.rows();
  if (H.cols() != n || g.size() != n || (rows > 0 && M.cols() != n) ||
      m.size() != rows) {
    throw ConfigError("solve_qp: dimension mismatch");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(H);
  if (llt.info() != Eigen::Success) {
    throw NumericError("solve_qp: Hessian not positive definite");
  }

  QpResult res;
  res.x = llt.solve(-g);
  res.lambda = Eigen::VectorXd::Zero(rows);
  if (rows == 0) return res;

  std::vector<int> active;           // row indices
  Eigen::VectorXd u(0);              // multipliers of active rows
  const int max_iter = opts.max_iterations > 0
                           ? opts.max_iterations
                           : static_cast<int>(50 * rows + 100);
  const double inf = std::numeric_limits<double>::infinity();

  auto solve_directions = [&](int p, Eigen::VectorXd& z, Eigen::VectorXd& r) {
    // Normal of row p in >= convention is -M_p'.
    const Eigen::VectorXd nplus = -M.row(p).transpose();
    const Eigen::Index q = static_cast<Eigen::Index>(active.size());
    const Eigen::VectorXd Hin = llt.solve(nplus);
    if (q == 0) {
      z = Hin;
      r.resize(0);
      return;
    }
    Eigen::MatrixXd N(n, q);
    for (Eigen::Index j = 0; j < q; ++j) {
      N.col(j) = -M.row(active[static_cast<std::size_t>(j)]).transpose();
    }
    const Eigen::MatrixXd HiN = llt.solve(N);
    const Eigen::MatrixXd A = N.transpose() * HiN;
    const Eigen::LDLT<Eigen::MatrixXd> Aldlt(A);
    r = Aldlt.solve(N.transpose() * Hin);
    z = Hin - HiN * r;
  };

  int it = 0;
  while (true) {
    if (++it > max_iter) {
      throw NumericError("solve_qp: iteration limit reached");
    }
    // Most violated inactive row.
    int p = -1;
    double worst = opts.feas_tol;
    for (Eigen::Index i = 0; i < rows; ++i) {
      bool is_active = false;
      for (int a : active) {
        if (a == i) { is_active = true; break; }
      }
      if (is_active) continue;
      const double v = M.row(i).dot(res.x) - m(i);
      if (v > worst) {
        worst = v;
        p = static_cast<int>(i);
      }
    }
    if (p < 0) break;  // primal feasible -> optimal

    // Inner loop: take (possibly partial) steps toward satisfying row p.
    double up = 0.0;  // multiplier being built for row p
    while (true) {
      if (++it > max_iter) {
        throw NumericError("solve_qp: iteration limit reached");
      }
      Eigen::VectorXd z, r;
      solve_directions(p, z, r);
      const Eigen::VectorXd nplus = -M.row(p).transpose();
      const double ztn = z.dot(nplus);
      const double sp = nplus.dot(res.x) + m(p);  // >= form slack, < 0 here

      double t1 = inf;
      int blocking = -1;
      for (Eigen::Index j = 0; j < r.size(); ++j) {
        if (r(j) > 1e-14) {
          const double ratio = u(j) / r(j);
          if (ratio < t1 - 1e-15) {
            t1 = ratio;
            blocking = static_cast<int>(j);
          }
        }
      }
      const bool z_zero = ztn <= 1e-14;
      const double t2 = z_zero ? inf : -sp / ztn;
      const double t = std::min(t1, t2);

      if (t == inf) {
        res.feasible = false;  // dual unbounded -> no feasible point
        res.iterations = it;
        res.lambda.setZero();
        return res;
      }

      if (!z_zero) res.x += t * z;
      for (Eigen::Index j = 0; j < r.size(); ++j) u(j) -= t * r(j);
      up += t;

      if (t == t2 && !z_zero) {
        // Row p satisfied exactly: add to the active set.
        active.push_back(p);
        Eigen::VectorXd unew(u.size() + 1);
        unew.head(u.size()) = u;
        unew(u.size()) = up;
        u = unew;
        break;
      }
      // Partial step: drop the blocking row and retry p.
      active.erase(active.begin() + blocking);
      Eigen::VectorXd unew(u.size() - 1);
      Eigen::Index w = 0;
      for (Eigen::Index j = 0; j < u.size(); ++j) {
        if (static_cast<int>(j) != blocking) unew(w++) = u(j);
      }
      u = unew;
    }
  }

  res.iterations = it;
  for (std::size_t j = 0; j < active.size(); ++j) {
    res.lambda(active[j]) = u(static_cast<Eigen::Index>(j));
  }
  res.active = active;

  // KKT residual: stationarity, primal/dual feasibility, complementarity.
  double kkt = (H * res.x + g + M.transpose() * res.lambda)
                   .cwiseAbs()
                   .maxCoeff();
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double s = M.row(i).dot(res.x) - m(i);
    kkt = std::max(kkt, s);                            // primal violation
    kkt = std::max(kkt, -res.lambda(i));               // dual violation
    kkt = std::max(kkt, std::abs(res.lambda(i) * s));  // complementarity
  }
  res.kkt_residual = kkt;
  return res;
}

}  // namespace platoon::control
