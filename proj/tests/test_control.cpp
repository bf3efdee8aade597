#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "platoon/mpc.hpp"
#include "platoon/qp.hpp"
#include "platoon/random.hpp"
#include "platoon/riccati.hpp"
#include "platoon/terminal_set.hpp"
#include "support/oracles.hpp"

using namespace platoon;
using namespace platoon::control;

namespace {

MpcProblem default_problem(int horizon = 20) {
  VehicleParams p;
  CostWeights w;
  MpcConfig cfg;
  cfg.horizon = horizon;
  return build_mpc_problem(p, w, cfg);
}

// The exact augmented model the problem was condensed from; closing the loop
// with it makes the disturbance-free feasibility/stability claims testable.
Eigen::Vector4d plant_step(const MpcProblem& prob, const Eigen::Vector4d& z,
                           double u_next) {
  const double w = u_next - z(3);
  return prob.At * z + prob.Bt * w;
}

}  // namespace

TEST_CASE("spacing error and the stochastic gap discount") {
  VehicleParams p;  // h 0.7, L 5, d0 5, alpha 4
  CHECK(spacing_error(33.9, 27.0, p) == Catch::Approx(0.0).margin(1e-12));
  CHECK(spacing_error(35.9, 27.0, p) == Catch::Approx(2.0));
  CHECK(spacing_error(33.9, 20.0, p) == Catch::Approx(4.9));

  // pc discounts the gap: the same physical gap reads as a deficit.
  const double discounted = spacing_error(33.9, 27.0, p, 1.0);
  CHECK(discounted < -10.0);
  const double divisor = 2.0 - std::exp(-p.alpha);
  CHECK(discounted == Catch::Approx(33.9 / divisor - 33.9));
}

TEST_CASE("spacing floor is the margin-shifted collision boundary") {
  VehicleParams p;
  CHECK(spacing_floor(27.0, p) == Catch::Approx(-26.9));
  CHECK(spacing_floor(0.0, p) == Catch::Approx(-8.0));
  // delta >= floor exactly when gap >= margin.
  const double floor = spacing_floor(27.0, p);
  const double gap_at_floor = (floor + p.headway * 27.0 + p.length +
                               p.standstill);
  CHECK(gap_at_floor == Catch::Approx(p.margin));
}

TEST_CASE("discretization matrices at the reference parameters") {
  VehicleParams p;  // ts 0.1, headway 0.7, engine_lag 0.5
  const Discretization d = discretize(p);
  Eigen::Matrix3d A_want;
  A_want << 1.0, 0.1, -0.07,
            0.0, 1.0, -0.1,
            0.0, 0.0, 0.8;
  CHECK((d.A - A_want).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(d.B(0) == 0.0);
  CHECK(d.B(1) == 0.0);
  CHECK(d.B(2) == Catch::Approx(0.2));
  CHECK(d.G(1) == Catch::Approx(0.1));

  VehicleParams flipped = p;
  flipped.throttle_sign_positive = false;
  CHECK(discretize(flipped).B(2) == Catch::Approx(-0.2));

  VehicleParams bad = p;
  bad.ts = 0.0;
  CHECK_THROWS_AS(discretize(bad), ConfigError);
}

TEST_CASE("scalar Riccati fixed point matches the closed form") {
  // P = P - P^2/(r+P) + q reduces to P^2 - qP - qr = 0.
  Eigen::MatrixXd A(1, 1), B(1, 1), Q(1, 1), R(1, 1);
  A << 1.0; B << 1.0; Q << 0.25; R << 4.0;
  const DareResult res = solve_dare(A, B, Q, R);
  const double P_want = 0.5 * (0.25 + std::sqrt(0.0625 + 4.0));
  CHECK(res.P(0, 0) == Catch::Approx(P_want).epsilon(1e-10));
  CHECK(res.K(0, 0) == Catch::Approx(-P_want / (4.0 + P_want)).epsilon(1e-9));
  CHECK(std::abs(1.0 + res.K(0, 0)) < 1.0);  // stabilizing
}

TEST_CASE("Lyapunov doubling solves P = F'PF + Q") {
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    Eigen::MatrixXd F(3, 3);
    for (Eigen::Index j = 0; j < F.size(); ++j) {
      F.data()[j] = rng.uniform(-0.5, 0.5);
    }
    Eigen::MatrixXd W(3, 3);
    for (Eigen::Index j = 0; j < W.size(); ++j) {
      W.data()[j] = rng.uniform(-1.0, 1.0);
    }
    const Eigen::MatrixXd Q = W * W.transpose() +
                              Eigen::MatrixXd::Identity(3, 3);
    const Eigen::MatrixXd P = solve_discrete_lyapunov(F, Q);
    const double resid =
        (P - F.transpose() * P * F - Q).cwiseAbs().maxCoeff();
    CHECK(resid < 1e-9 * P.cwiseAbs().maxCoeff());
  }
  // Unstable F cannot close.
  CHECK_THROWS_AS(
      solve_discrete_lyapunov(Eigen::MatrixXd::Identity(2, 2) * 1.1,
                              Eigen::MatrixXd::Identity(2, 2)),
      NumericError);
}

TEST_CASE("terminal weight equals the simulated infinite-horizon tail cost") {
  Rng rng(7);
  int done = 0;
  while (done < 20) {
    Eigen::MatrixXd A(3, 3), B(3, 1);
    for (Eigen::Index j = 0; j < A.size(); ++j) {
      A.data()[j] = rng.uniform(-1.0, 1.0);
    }
    for (Eigen::Index j = 0; j < B.size(); ++j) {
      B.data()[j] = rng.uniform(-1.0, 1.0);
    }
    const Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(3, 3);
    Eigen::MatrixXd R(1, 1);
    R << rng.uniform(0.1, 2.0);
    TerminalDesign td;
    try {
      td = terminal_design(A, B, Q, R);
    } catch (const NumericError&) {
      continue;  // not stabilizable (or too slow), resample
    }
    if (spectral_radius(td.F) > 0.95) continue;
    const Eigen::MatrixXd Qcl = Q + td.K.transpose() * R * td.K;
    Eigen::VectorXd x0(3);
    for (int j = 0; j < 3; ++j) x0(j) = rng.uniform(-2.0, 2.0);
    const double want = oracles::simulated_tail_cost(td.F, Qcl, x0, 500);
    const double got = x0.dot(td.Qbar * x0);
    CHECK(got == Catch::Approx(want).epsilon(1e-6));
    ++done;
  }
}

TEST_CASE("terminal set is invariant and constraint admissible") {
  const MpcProblem prob = default_problem();
  const TerminalSet& omega = prob.omega;
  REQUIRE(omega.H.rows() > 0);
  CHECK(omega.nc >= 0);
  CHECK(omega.contains(Eigen::Vector4d::Zero()));

  const Eigen::Matrix4d F = prob.At + prob.Bt * prob.K;
  Rng rng(9);
  const VehicleParams& p = prob.params;
  const Eigen::Vector4d z_lo(prob.delta_lo, p.dv_min, p.a_min, p.u_min);
  const Eigen::Vector4d z_hi(-prob.delta_lo, p.dv_max, p.a_max, p.u_max);
  int inside = 0;
  for (int i = 0; i < 2000; ++i) {
    Eigen::Vector4d z;
    for (int j = 0; j < 4; ++j) z(j) = rng.uniform(z_lo(j), z_hi(j));
    if (!omega.contains(z)) continue;
    ++inside;
    // One step of the terminal feedback stays inside and within the box.
    const Eigen::Vector4d zn = F * z;
    CHECK(omega.contains(zn, 1e-7));
    for (int j = 0; j < 4; ++j) {
      CHECK(zn(j) >= z_lo(j) - 1e-7);
      CHECK(zn(j) <= z_hi(j) + 1e-7);
    }
  }
  CHECK(inside > 50);  // the sampler actually exercised the set
}

TEST_CASE("terminal set construction handles the degenerate cases") {
  // Contractive diagonal loop: the box itself is already invariant, so the
  // determination index is zero and the rows are exactly the box rows.
  const Eigen::MatrixXd F = 0.5 * Eigen::MatrixXd::Identity(4, 4);
  const Eigen::VectorXd lo = Eigen::VectorXd::Constant(4, -1.0);
  const Eigen::VectorXd hi = Eigen::VectorXd::Constant(4, 1.0);
  const TerminalSet s =
      build_terminal_set(F, Eigen::MatrixXd::Zero(0, 4), Eigen::VectorXd(0),
                         Eigen::VectorXd(0), lo, hi);
  CHECK(s.nc == 0);
  CHECK(s.H.rows() == 8);
  CHECK(s.contains(Eigen::Vector4d(1.0, 1.0, 1.0, 1.0)));
  CHECK_FALSE(s.contains(Eigen::Vector4d(1.01, 0.0, 0.0, 0.0)));

  // The state box must be bounded with zero in its interior.
  Eigen::VectorXd bad_lo = lo;
  bad_lo(2) = 0.0;
  CHECK_THROWS_AS(
      build_terminal_set(F, Eigen::MatrixXd::Zero(0, 4), Eigen::VectorXd(0),
                         Eigen::VectorXd(0), bad_lo, hi),
      ConfigError);
}

TEST_CASE("dual active-set QP basics") {
  SECTION("unconstrained minimum") {
    Eigen::MatrixXd H(2, 2);
    H << 2.0, 0.0, 0.0, 4.0;
    Eigen::VectorXd g(2);
    g << -2.0, 4.0;
    const QpResult r = solve_qp(H, g, Eigen::MatrixXd(0, 2),
                                Eigen::VectorXd(0));
    CHECK(r.feasible);
    CHECK(r.x(0) == Catch::Approx(1.0));
    CHECK(r.x(1) == Catch::Approx(-1.0));
  }
  SECTION("single active bound with multiplier") {
    Eigen::MatrixXd H(1, 1);
    H << 1.0;
    Eigen::VectorXd g(1);
    g << 0.0;
    Eigen::MatrixXd M(1, 1);
    M << 1.0;
    Eigen::VectorXd m(1);
    m << -1.0;  // x <= -1
    const QpResult r = solve_qp(H, g, M, m);
    REQUIRE(r.feasible);
    CHECK(r.x(0) == Catch::Approx(-1.0));
    CHECK(r.lambda(0) == Catch::Approx(1.0));
    CHECK(r.kkt_residual < 1e-9);
  }
  SECTION("duplicated rows do not break the solve") {
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(2, 2);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(2);
    Eigen::MatrixXd M(2, 2);
    M << 1.0, 0.0, 1.0, 0.0;
    Eigen::VectorXd m(2);
    m << -1.0, -1.0;
    const QpResult r = solve_qp(H, g, M, m);
    REQUIRE(r.feasible);
    CHECK(r.x(0) == Catch::Approx(-1.0));
    CHECK(r.x(1) == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("infeasibility is reported, not thrown") {
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(1, 1);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(1);
    Eigen::MatrixXd M(2, 1);
    M << 1.0, -1.0;
    Eigen::VectorXd m(2);
    m << -1.0, -2.0;  // x <= -1 and x >= 2
    const QpResult r = solve_qp(H, g, M, m);
    CHECK_FALSE(r.feasible);
  }
  SECTION("indefinite Hessian is a numeric error") {
    Eigen::MatrixXd H(2, 2);
    H << 1.0, 0.0, 0.0, -1.0;
    CHECK_THROWS_AS(solve_qp(H, Eigen::VectorXd::Zero(2),
                             Eigen::MatrixXd(0, 2), Eigen::VectorXd(0)),
                    NumericError);
  }
  SECTION("dimension mismatch is a config error") {
    CHECK_THROWS_AS(solve_qp(Eigen::MatrixXd::Identity(2, 2),
                             Eigen::VectorXd::Zero(3), Eigen::MatrixXd(0, 2),
                             Eigen::VectorXd(0)),
                    ConfigError);
  }
}

TEST_CASE("QP solver agrees with exhaustive active-set enumeration") {
  Rng rng(13);
  int feasible_seen = 0;
  int infeasible_seen = 0;
  for (int i = 0; i < 150; ++i) {
    const int n = 2 + static_cast<int>(rng.index(3));
    const int rows = 2 + static_cast<int>(rng.index(7));
    Eigen::MatrixXd W(n, n);
    for (Eigen::Index j = 0; j < W.size(); ++j) {
      W.data()[j] = rng.uniform(-1.0, 1.0);
    }
    const Eigen::MatrixXd H =
        W * W.transpose() + Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd g(n), xf(n);
    for (int j = 0; j < n; ++j) {
      g(j) = rng.uniform(-2.0, 2.0);
      xf(j) = rng.uniform(-1.0, 1.0);
    }
    Eigen::MatrixXd M(rows, n);
    for (Eigen::Index j = 0; j < M.size(); ++j) {
      M.data()[j] = rng.uniform(-1.0, 1.0);
    }
    // Slacks straddle zero so some instances are tight or infeasible.
    Eigen::VectorXd m = M * xf;
    for (int j = 0; j < rows; ++j) m(j) += rng.uniform(-0.8, 1.2);

    const QpResult got = solve_qp(H, g, M, m);
    const oracles::QpEnumResult want =
        oracles::solve_qp_enumeration(H, g, M, m);
    REQUIRE(got.feasible == want.feasible);
    if (!got.feasible) {
      ++infeasible_seen;
      continue;
    }
    ++feasible_seen;
    const double got_cost = 0.5 * got.x.dot(H * got.x) + g.dot(got.x);
    CHECK(got_cost == Catch::Approx(want.cost).margin(1e-7));
    CHECK((got.x - want.x).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(got.kkt_residual < 1e-6);
  }
  CHECK(feasible_seen > 50);
  CHECK(infeasible_seen > 3);
}

TEST_CASE("horizon problem dimensions and cached rows") {
  const MpcProblem prob = default_problem(8);
  const int N = 8;
  CHECK(prob.Hqp.rows() == N);
  CHECK(prob.Sx.rows() == 4 * N);
  CHECK(prob.floor_rows.size() == static_cast<std::size_t>(N));
  // One floor row per step plus dv/a/u boxes on the interior steps, then the
  // terminal rows.
  CHECK(prob.Mrows.rows() ==
        N + 6 * (N - 1) + prob.omega.H.rows());
  CHECK(prob.Mrows_r.rows() == 5 * N);
  CHECK(prob.delta_lo == Catch::Approx(-26.9));
  // Hessian is symmetric positive definite.
  CHECK((prob.Hqp - prob.Hqp.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(Eigen::LLT<Eigen::MatrixXd>(prob.Hqp).info() == Eigen::Success);

  CHECK_THROWS_AS(build_mpc_problem(VehicleParams{}, CostWeights{},
                                    MpcConfig{1, 27.0}),
                  ConfigError);
  CostWeights zero_effort;
  zero_effort.effort = 0.0;
  CHECK_THROWS_AS(build_mpc_problem(VehicleParams{}, zero_effort,
                                    MpcConfig{}),
                  ConfigError);
}

TEST_CASE("equilibrium start stays at rest with zero cost") {
  const MpcProblem prob = default_problem();
  const ControllerOutput out = solve_mpc(prob, Eigen::Vector4d::Zero(), {});
  REQUIRE(out.feasible);
  CHECK(out.cost == Catch::Approx(0.0).margin(1e-9));
  CHECK(out.plan_u.cwiseAbs().maxCoeff() < 1e-9);
  CHECK(out.kkt < 1e-9);
}

TEST_CASE("preview tail extension holds the last value") {
  const MpcProblem prob = default_problem();
  const Eigen::Vector4d z0(1.0, -0.5, 0.2, 0.1);
  const ControllerOutput a = solve_mpc(prob, z0, {-1.0});
  std::vector<double> full(20, -1.0);
  const ControllerOutput b = solve_mpc(prob, z0, full);
  REQUIRE(a.feasible);
  REQUIRE(b.feasible);
  CHECK((a.plan_u - b.plan_u).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.cost == b.cost);
}

TEST_CASE("horizon solution matches enumeration on short horizons") {
  VehicleParams p;
  CostWeights w;
  MpcConfig cfg;
  cfg.horizon = 5;
  const MpcProblem prob = build_mpc_problem(p, w, cfg);
  Rng rng(17);
  int checked = 0;
  while (checked < 8) {
    Eigen::Vector4d z0(rng.uniform(-4.0, 4.0), rng.uniform(-3.0, 3.0),
                       rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    const std::vector<double> preview = {rng.uniform(-0.5, 0.5)};
    const ControllerOutput got = solve_mpc(prob, z0, preview);
    if (!got.feasible) continue;
    ++checked;

    // Reassemble the condensed QP exactly as solve_mpc does.
    Eigen::VectorXd D = Eigen::VectorXd::Constant(5, preview[0]);
    const Eigen::VectorXd g = prob.Gx * z0 + prob.Gd * D;
    const Eigen::VectorXd m = prob.c0 - prob.CSx * z0 - prob.CSd * D;
    const oracles::QpEnumResult want =
        oracles::solve_qp_enumeration(prob.Hqp, g, prob.Mrows, m);
    REQUIRE(want.feasible);
    const Eigen::VectorXd Z = prob.Sx * z0 + prob.Su * want.x + prob.Sd * D;
    CHECK(std::abs(Z(3) - got.plan_u(0)) < 1e-5);
    const double zbar_cost =
        (prob.Sx * z0 + prob.Sd * D).dot(prob.Qblk * (prob.Sx * z0 +
                                                      prob.Sd * D));
    const double want_cost = 0.5 * want.x.dot(prob.Hqp * want.x) +
                             g.dot(want.x) + zbar_cost + z0.dot(prob.Qt * z0);
    CHECK(got.cost == Catch::Approx(want_cost).margin(1e-4));
  }
}

TEST_CASE("constraint relief drops the certificate rows, never the safety rows") {
  const MpcProblem prob = default_problem();
  // Speed difference far outside its box: the full problem cannot pull it
  // back within one step, the relieved one does not have to.
  const Eigen::Vector4d z0(0.0, 20.0, 0.0, 0.0);
  const ControllerOutput out = solve_mpc(prob, z0, {});
  CHECK_FALSE(out.feasible);
  CHECK(out.relieved);
  REQUIRE(out.plan_u.size() == 20);
  // The relieved plan still honors the physical input limits.
  CHECK(out.plan_u.maxCoeff() <= prob.params.u_max + 1e-9);
  CHECK(out.plan_u.minCoeff() >= prob.params.u_min - 1e-9);
}

TEST_CASE("impossible spacing floor defeats both constraint sets") {
  const MpcProblem prob = default_problem();
  const ControllerOutput out =
      solve_mpc(prob, Eigen::Vector4d::Zero(), {}, 15.0);
  CHECK_FALSE(out.feasible);
  CHECK_FALSE(out.relieved);
}

TEST_CASE("active floor tracks an intruder inside the gap") {
  const MpcProblem prob = default_problem();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK(active_floor(27.0, nan, prob) == Catch::Approx(prob.delta_lo));
  // Intruder 12 m behind the predecessor at 27 m/s: floor rises to
  // -(0.7*27 + 5 + 5) + 2 + 12 = -14.9.
  CHECK(active_floor(27.0, 12.0, prob) == Catch::Approx(-14.9));
  // Far-away offsets can only tighten, never relax below the design floor.
  CHECK(active_floor(27.0, 0.0, prob) == Catch::Approx(prob.delta_lo));
  CHECK(active_floor(5.0, 0.0, prob) > prob.delta_lo);
}

TEST_CASE("supervisor names the operating mode") {
  const MpcProblem prob = default_problem();
  FollowerState s;
  s.gap = 33.9;
  s.speed = 27.0;
  s.dv = 0.0;

  CHECK(supervise(s, std::numeric_limits<double>::quiet_NaN(), true,
                  prob).mode == ControlMode::kNominal);
  CHECK(supervise(s, 12.0, true, prob).mode == ControlMode::kCutinActive);

  // Infeasible with a nominal physical gap: the discounted reference decides
  // the fallback direction.
  CHECK(supervise(s, 12.0, false, prob, 0.0).mode ==
        ControlMode::kFallbackAccel);
  CHECK(supervise(s, 12.0, false, prob, 1.0).mode ==
        ControlMode::kFallbackBrake);
}

TEST_CASE("fallback direction weighs the projected gap") {
  CHECK(fallback_mode(-1.0, 0.0) == ControlMode::kFallbackBrake);
  CHECK(fallback_mode(1.0, 0.0) == ControlMode::kFallbackAccel);
  // Opening fast enough flips a current deficit to acceleration.
  CHECK(fallback_mode(-1.0, 1.0) == ControlMode::kFallbackAccel);
  // Closing fast flips a current surplus to braking.
  CHECK(fallback_mode(1.0, -1.0) == ControlMode::kFallbackBrake);
}

TEST_CASE("reference hold re-anchors on drift and on all-clear") {
  TtsisState st;
  TtsisResult r = ttsis_step(st, 0.2);
  CHECK(r.reset);
  CHECK(r.pc_effective == 0.2);

  r = ttsis_step(st, 0.22);  // within the guard band
  CHECK_FALSE(r.reset);
  CHECK(r.pc_effective == 0.2);

  r = ttsis_step(st, 0.27);  // drifted past the guard
  CHECK(r.reset);
  CHECK(r.pc_effective == 0.27);

  r = ttsis_step(st, 0.0);  // exact zero releases the hold regardless
  CHECK(r.reset);
  CHECK(r.pc_effective == 0.0);

  r = ttsis_step(st, 0.0);
  CHECK_FALSE(r.reset);

  // A zero first sample initializes without the all-clear firing forever.
  TtsisState st2;
  r = ttsis_step(st2, 0.0);
  CHECK(r.reset);
  r = ttsis_step(st2, 0.0);
  CHECK_FALSE(r.reset);
}

TEST_CASE("controller discounts the gap only in stochastic mode") {
  ControllerConfig cfg;
  FollowerState s;
  s.gap = 33.9;
  s.speed = 27.0;

  cfg.stochastic = false;
  CaccController conv(cfg);
  const ControllerOutput oc = conv.step(s, 0.8, {});
  CHECK(oc.delta == Catch::Approx(oc.delta_phys));
  CHECK(oc.pc_effective == 0.0);

  cfg.stochastic = true;
  CaccController smpc(cfg);
  const ControllerOutput os = smpc.step(s, 0.8, {});
  CHECK(os.pc_effective == 0.8);
  CHECK(os.delta < os.delta_phys - 5.0);
  CHECK(os.reset);  // first cycle anchors the hold
}

TEST_CASE("fallback direction honors the stochastic reference") {
  // Same physical state, both controllers forced into fallback by an
  // unreachable floor. The conventional one reads a healthy gap and
  // accelerates; the stochastic one reads the discounted gap and brakes.
  ControllerConfig cfg;
  FollowerState s;
  s.gap = 33.9;
  s.speed = 27.0;

  cfg.stochastic = false;
  CaccController conv(cfg);
  const ControllerOutput oc = conv.step(s, 1.0, {}, 45.0);
  REQUIRE(oc.fallback);
  CHECK(oc.mode == ControlMode::kFallbackAccel);
  CHECK(oc.u == Catch::Approx(cfg.vehicle.u_max));

  cfg.stochastic = true;
  CaccController smpc(cfg);
  const ControllerOutput os = smpc.step(s, 1.0, {}, 45.0);
  REQUIRE(os.fallback);
  CHECK(os.braking);
  CHECK(os.u == Catch::Approx(cfg.vehicle.u_min));
}

TEST_CASE("controller output is deterministic and clamped") {
  ControllerConfig cfg;
  CaccController a(cfg), b(cfg);
  FollowerState s;
  s.gap = 30.0;
  s.dv = -2.0;
  s.a = 0.5;
  s.speed = 28.0;
  for (int k = 0; k < 5; ++k) {
    const ControllerOutput oa = a.step(s, 0.3, {-0.2});
    const ControllerOutput ob = b.step(s, 0.3, {-0.2});
    CHECK(oa.u == ob.u);
    CHECK(oa.cost == ob.cost);
    CHECK(oa.u >= cfg.vehicle.u_min);
    CHECK(oa.u <= cfg.vehicle.u_max);
    s.gap += 0.1;
  }
}

TEST_CASE("closed loop keeps the full problem feasible") {
  const MpcProblem prob = default_problem();
  Rng rng(19);
  int starts = 0;
  while (starts < 20) {
    Eigen::Vector4d z(rng.uniform(-8.0, 8.0), rng.uniform(-4.0, 4.0),
                      rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 1.5));
    ControllerOutput out = solve_mpc(prob, z, {});
    if (!out.feasible) continue;
    ++starts;
    for (int k = 0; k < 100; ++k) {
      z = plant_step(prob, z, out.plan_u(0));
      out = solve_mpc(prob, z, {});
      REQUIRE(out.feasible);
    }
  }
}

TEST_CASE("closed loop converges with a non-increasing optimal cost") {
  const MpcProblem prob = default_problem();
  Rng rng(23);
  int starts = 0;
  while (starts < 5) {
    Eigen::Vector4d z(rng.uniform(-6.0, 6.0), rng.uniform(-3.0, 3.0),
                      rng.uniform(-1.5, 1.5), rng.uniform(-1.0, 1.0));
    ControllerOutput out = solve_mpc(prob, z, {});
    if (!out.feasible) continue;
    ++starts;
    double v_prev = out.cost;
    for (int k = 0; k < 400; ++k) {
      z = plant_step(prob, z, out.plan_u(0));
      out = solve_mpc(prob, z, {});
      REQUIRE(out.feasible);
      CHECK(out.cost <= v_prev + 1e-8 * std::max(1.0, std::abs(v_prev)));
      v_prev = out.cost;
    }
    CHECK(z.cwiseAbs().maxCoeff() < 1e-3);
  }
}
