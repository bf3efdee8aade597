#pragma once

// Independent reference implementations the test suite checks the library
// against. Everything here is written the slow, obvious way on purpose; none
// of it shares code with the implementations under test.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "platoon/geometry.hpp"
#include "platoon/nn.hpp"

namespace oracles {

// Fraction of rectangle `r` covered by `region`, estimated by counting cell
// centers of a g x g grid laid over `r`. Both rectangles are axis-aligned,
// so the 2-D count factorizes into two 1-D counts; the error per axis is at
// most one cell, giving roughly 2/g overall.
inline double grid_ratio(const platoon::cutin::Rect& r,
                         const platoon::cutin::Rect& region, int g = 2000) {
  auto axis_fraction = [g](double lo, double hi, double rlo, double rhi) {
    const double step = (hi - lo) / g;
    int inside = 0;
    for (int i = 0; i < g; ++i) {
      const double c = lo + (i + 0.5) * step;
      if (c >= rlo && c <= rhi) ++inside;
    }
    return static_cast<double>(inside) / g;
  };
  if (r.width() <= 0.0 || r.height() <= 0.0) return 0.0;
  return axis_fraction(r.x_lo, r.x_hi, region.x_lo, region.x_hi) *
         axis_fraction(r.y_lo, r.y_hi, region.y_lo, region.y_hi);
}

struct QpEnumResult {
  bool feasible = false;
  Eigen::VectorXd x;
  double cost = 0.0;
};

// Strictly convex QP min 1/2 x'Hx + g'x s.t. Mx <= m by exhaustive active-set
// enumeration: for every subset A of rows (smallest first), solve the
// equality-constrained KKT system and accept the first solution that is
// primal feasible with nonnegative multipliers. Strict convexity makes any
// KKT point the unique global optimum, so the first hit is the answer.
inline QpEnumResult solve_qp_enumeration(const Eigen::MatrixXd& H,
                                         const Eigen::VectorXd& g,
                                         const Eigen::MatrixXd& M,
                                         const Eigen::VectorXd& m,
                                         double tol = 1e-7) {
  const Eigen::Index n = H.rows();
  const Eigen::Index rows = M.rows();
  QpEnumResult out;

  auto try_subset = [&](const std::vector<int>& active) -> bool {
    const Eigen::Index q = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + q, n + q);
    Eigen::VectorXd rhs(n + q);
    kkt.topLeftCorner(n, n) = H;
    rhs.head(n) = -g;
    for (Eigen::Index j = 0; j < q; ++j) {
      kkt.block(0, n + j, n, 1) = M.row(active[j]).transpose();
      kkt.block(n + j, 0, 1, n) = M.row(active[j]);
      rhs(n + j) = m(active[j]);
    }
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    if (!lu.isInvertible()) return false;  // degenerate subset
    const Eigen::VectorXd sol = lu.solve(rhs);
    const Eigen::VectorXd x = sol.head(n);
    const Eigen::VectorXd lam = sol.tail(q);
    if ((lam.array() < -tol).any()) return false;
    if (rows > 0 && ((M * x - m).array() > tol).any()) return false;
    out.feasible = true;
    out.x = x;
    out.cost = 0.5 * x.dot(H * x) + g.dot(x);
    return true;
  };

  std::vector<int> active;
  if (try_subset(active)) return out;
  for (Eigen::Index size = 1; size <= std::min(n, rows); ++size) {
    std::vector<int> idx(static_cast<std::size_t>(size));
    for (Eigen::Index j = 0; j < size; ++j) idx[static_cast<std::size_t>(j)] =
        static_cast<int>(j);
    while (true) {
      if (try_subset(idx)) return out;
      // Next combination in lexicographic order.
      int j = static_cast<int>(size) - 1;
      while (j >= 0 &&
             idx[static_cast<std::size_t>(j)] ==
                 static_cast<int>(rows) - static_cast<int>(size) + j) {
        --j;
      }
      if (j < 0) break;
      ++idx[static_cast<std::size_t>(j)];
      for (int k = j + 1; k < static_cast<int>(size); ++k) {
        idx[static_cast<std::size_t>(k)] =
            idx[static_cast<std::size_t>(k - 1)] + 1;
      }
    }
  }
  return out;  // no KKT point over any subset: infeasible
}

// Cost of running x+ = F x for `steps` steps, accumulating x'Qcl x. With
// Qcl = Q + K'RK this is the truncated infinite-horizon tail cost that the
// terminal weight must reproduce.
inline double simulated_tail_cost(const Eigen::MatrixXd& F,
                                  const Eigen::MatrixXd& Qcl,
                                  const Eigen::VectorXd& x0, int steps) {
  double acc = 0.0;
  Eigen::VectorXd x = x0;
  for (int k = 0; k < steps; ++k) {
    acc += x.dot(Qcl * x);
    x = F * x;
  }
  return acc;
}

// ---- numeric gradients ----

namespace detail {

// Applies fn to every trainable parameter of the net in a fixed order.
template <typename Fn>
void for_each_param(platoon::predictor::DelayLineNet& net,
                    platoon::predictor::Gradients& slot, Fn&& fn) {
  for (Eigen::Index i = 0; i < net.W1.size(); ++i) {
    fn(net.W1.data()[i], slot.W1.data()[i]);
  }
  for (Eigen::Index i = 0; i < net.b1.size(); ++i) {
    fn(net.b1.data()[i], slot.b1.data()[i]);
  }
  for (Eigen::Index i = 0; i < net.Wr.size(); ++i) {
    fn(net.Wr.data()[i], slot.Wr.data()[i]);
  }
  for (Eigen::Index i = 0; i < net.W2.size(); ++i) {
    fn(net.W2.data()[i], slot.W2.data()[i]);
  }
  fn(net.b2, slot.b2);
}

}  // namespace detail

// Central-difference gradient of an arbitrary scalar loss of the net.
template <typename LossFn>
platoon::predictor::Gradients numeric_gradients(
    const platoon::predictor::DelayLineNet& net, LossFn&& loss,
    double eps = 1e-6) {
  platoon::predictor::DelayLineNet work = net;
  platoon::predictor::Gradients g;
  g.setZero(work);
  detail::for_each_param(work, g, [&](double& p, double& gslot) {
    const double orig = p;
    p = orig + eps;
    const double lp = loss(work);
    p = orig - eps;
    const double lm = loss(work);
    p = orig;
    gslot = (lp - lm) / (2.0 * eps);
  });
  return g;
}

// Hidden state at the start of every truncated-BPTT window, computed with
// the given (unperturbed) weights. Freezing these values turns the truncated
// gradient into the exact gradient of a well-defined loss, which a central
// difference can then check.
inline std::vector<std::vector<Eigen::VectorXd>> window_carries(
    const platoon::predictor::DelayLineNet& net,
    const platoon::predictor::SequenceDataset& d, int window) {
  std::vector<std::vector<Eigen::VectorXd>> out;
  for (const auto& U : d.U) {
    std::vector<Eigen::VectorXd> seg;
    Eigen::VectorXd h = Eigen::VectorXd::Zero(net.hidden);
    for (Eigen::Index t = 0; t < U.cols(); ++t) {
      if (t % window == 0) seg.push_back(h);
      h = (net.W1 * U.col(t) + net.Wr * h + net.b1).array().tanh();
    }
    out.push_back(std::move(seg));
  }
  return out;
}

// Mean squared error where each window restarts from its frozen carry. With
// window >= every segment length this is exactly mse(); otherwise it is the
// loss whose exact gradient truncated BPTT computes.
inline double frozen_window_loss(
    const platoon::predictor::DelayLineNet& net,
    const platoon::predictor::SequenceDataset& d, int window,
    const std::vector<std::vector<Eigen::VectorXd>>& carries) {
  double acc = 0.0;
  Eigen::Index total = 0;
  for (std::size_t s = 0; s < d.U.size(); ++s) {
    const Eigen::MatrixXd& U = d.U[s];
    const Eigen::RowVectorXd& y = d.y[s];
    Eigen::VectorXd h;
    for (Eigen::Index t = 0; t < U.cols(); ++t) {
      if (t % window == 0) {
        h = carries[s][static_cast<std::size_t>(t / window)];
      }
      h = (net.W1 * U.col(t) + net.Wr * h + net.b1).array().tanh();
      const double e = net.W2.dot(h) + net.b2 - y(t);
      acc += e * e;
      ++total;
    }
  }
  return acc / static_cast<double>(total);
}

// Worst relative disagreement between an analytic and a numeric gradient,
// scaled by the largest gradient magnitude so near-zero entries do not blow
// the ratio up.
inline double gradient_rel_error(const platoon::predictor::Gradients& a,
                                 const platoon::predictor::Gradients& b) {
  double scale = std::abs(a.b2);
  double diff = std::abs(a.b2 - b.b2);
  auto acc = [&](const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    if (x.size() == 0) return;
    scale = std::max({scale, x.cwiseAbs().maxCoeff(), y.cwiseAbs().maxCoeff()});
    diff = std::max(diff, (x - y).cwiseAbs().maxCoeff());
  };
  acc(a.W1, b.W1);
  acc(a.b1, b.b1);
  acc(a.Wr, b.Wr);
  acc(a.W2, b.W2);
  return diff / std::max(scale, 1e-10);
}

}  // namespace oracles
