#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <string>

#include "platoon/errors.hpp"

namespace platoon::control {

struct DareResult {
  Eigen::MatrixXd P;  // stabilizing fixed point
  Eigen::MatrixXd K;  // feedback gain, u = K x
  int iterations = 0;
};

// Fixed-point iteration of the Riccati difference equation
//   P <- A'PA - A'PB (R + B'PB)^{-1} B'PA + Q
// started at P = Q. Converges to the stabilizing solution whenever (A, B) is
// stabilizable and (A, Q^1/2) is detectable; a hard iteration cap turns a
// non-convergent instance into an error instead of a hang.
inline DareResult solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                             const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                             double tol = 1e-12, int max_iter = 10000) {
  const auto n = A.rows();
  const auto m = B.cols();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n ||
      R.rows() != m || R.cols() != m) {
    throw ConfigError("solve_dare: dimension mismatch");
  }
  Eigen::MatrixXd P = Q;
  for (int it = 1; it <= max_iter; ++it) {
    const Eigen::MatrixXd BtP = B.transpose() * P;
    const Eigen::MatrixXd S = R + BtP * B;
    const Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success) {
      throw NumericError("solve_dare: R + B'PB not positive definite");
    }
    const Eigen::MatrixXd Knext = -llt.solve(BtP * A);
    const Eigen::MatrixXd Pnext =
        A.transpose() * P * A + A.transpose() * P * B * Knext + Q;
    const double diff = (Pnext - P).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, P.cwiseAbs().maxCoeff());
    P = 0.5 * (Pnext + Pnext.transpose());
    if (diff <= tol * scale) {
      DareResult out;
      out.P = P;
      out.K = Knext;
      out.iterations = it;
      return out;
    }
  }
  throw NumericError("solve_dare: no convergence in " +
                     std::to_string(max_iter) + " iterations");
}

// Solves P = F'PF + Q for stable F by doubling:
//   P_0 = Q, P_{j+1} = P_j + F_j' P_j F_j, F_{j+1} = F_j^2.
// Terminates when the increment is negligible; errors out if F is not
// (numerically) Schur stable.
inline Eigen::MatrixXd solve_discrete_lyapunov(const Eigen::MatrixXd& F,
                                               const Eigen::MatrixXd& Q,
                                               double tol = 1e-14,
                                               int max_doublings = 100) {
  const auto n = F.rows();
  if (F.cols() != n || Q.rows() != n || Q.cols() != n) {
    throw ConfigError("solve_discrete_lyapunov: dimension mismatch");
  }
  Eigen::MatrixXd P = Q;
  Eigen::MatrixXd Fk = F;
  for (int j = 0; j < max_doublings; ++j) {
    const Eigen::MatrixXd inc = Fk.transpose() * P * Fk;
    P += inc;
    P = 0.5 * (P + P.transpose()).eval();
    const double scale = std::max(1.0, P.cwiseAbs().maxCoeff());
    if (inc.cwiseAbs().maxCoeff() <= tol * scale &&
        Fk.cwiseAbs().maxCoeff() < 1e-8) {
      return P;
    }
    Fk = (Fk * Fk).eval();
  }
  throw NumericError(
      "solve_discrete_lyapunov: no convergence (is F Schur stable?)");
}

inline double spectral_radius(const Eigen::MatrixXd& F) {
  return F.eigenvalues().cwiseAbs().maxCoeff();
}

struct TerminalDesign {
  Eigen::MatrixXd K;     // terminal controller u = K x
  Eigen::MatrixXd Qbar;  // terminal weight: exact infinite-horizon tail cost
  Eigen::MatrixXd F;     // closed loop A + B K
};

// Dual-mode terminal ingredients: LQR gain plus the weight Qbar satisfying
//   Qbar = F' Qbar F + Q + K'RK,  F = A + BK,
// so x'Qbar x equals the cost-to-go of running u = Kx forever. Qbar is
// computed twice (Riccati fixed point and Lyapunov doubling) and the two
// routes are required to agree.
inline TerminalDesign terminal_design(const Eigen::MatrixXd& A,
                                      const Eigen::MatrixXd& B,
                                      const Eigen::MatrixXd& Q,
                                      const Eigen::MatrixXd& R) {
  const DareResult dare = solve_dare(A, B, Q, R);
  TerminalDesign out;
  out.K = dare.K;
  out.F = A + B * dare.K;
  const double rho = spectral_radius(out.F);
  if (rho >= 1.0) {
    throw NumericError("terminal_design: closed loop not stable (rho = " +
                       std::to_string(rho) + ")");
  }
  const Eigen::MatrixXd Qcl = Q + out.K.transpose() * R * out.K;
  out.Qbar = solve_discrete_lyapunov(out.F, Qcl);
  const double gap = (out.Qbar - dare.P).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, dare.P.cwiseAbs().maxCoeff());
  if (gap > 1e-6 * scale) {
    throw NumericError(
        "terminal_design: Riccati and Lyapunov solutions disagree");
  }
  return out;
}

}  // namespace platoon::control
