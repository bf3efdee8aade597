#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "platoon/errors.hpp"
#include "platoon/qp.hpp"
#include "platoon/riccati.hpp"
#include "platoon/terminal_set.hpp"

namespace platoon::control {

// Longitudinal CACC parameters shared by controller and plant model.
struct VehicleParams {
  double headway = 0.7;      // s, time headway h
  double standstill = 5.0;   // m, gap kept at zero speed
  double margin = 2.0;       // m, clearance kept above the collision boundary
  double engine_lag = 0.5;   // s, first-order driveline time constant
  double ts = 0.1;           // s, control period
  double length = 5.0;       // m, preceding vehicle length
  double u_min = -10.0;      // m/s^2
  double u_max = 2.0;        // m/s^2
  double dv_min = -15.0;     // m/s, bounds on speed difference to predecessor
  double dv_max = 15.0;
  double a_min = -10.0;      // m/s^2, acceleration state bounds
  double a_max = 3.0;
  // Cut-in probability sensitivity. At pc = 1 any alpha >~ 4 commands close
  // to the doubled gap (e^-4 < 2%); what alpha really sets is the onset
  // slope. A cliff-like value turns the first sliver of probability into a
  // full half-gap reference jump, and the over-braking that follows leaves a
  // speed deficit whose rebound overshoot exceeds the conventional
  // controller's worst error. A graded value keeps the commanded gap roughly
  // proportional to the evidence.
  double alpha = 4.0;
  // Sign of the throttle-to-acceleration path in the discrete model. The
  // continuous-time lag dynamics give +ts/engine_lag; the flipped variant is
  // kept selectable for compatibility with conventions that fold the sign
  // into the input.
  bool throttle_sign_positive = true;
};

struct CostWeights {
  double spacing = 1.0;   // on spacing error
  double closing = 0.5;   // on speed difference
  double effort = 0.1;    // on input increments
};

struct MpcConfig {
  int horizon = 20;
  double design_speed = 27.0;  // m/s, sets the static spacing-error box
};

// Measured follower quantities at one control instant. gap is the bumper
// reference distance x_prev - x_host (same reference point on both bodies);
// dv = v_prev - v_host.
struct FollowerState {
  double gap = 0.0;
  double dv = 0.0;
  double a = 0.0;
  double speed = 0.0;
};

// Spacing error against the constant-time-headway policy. With pc > 0 the
// measured gap is discounted by 1/(2 - exp(-alpha*pc)), which walks the
// reference from the true predecessor gap (pc = 0) toward half of it
// (pc -> 1, large alpha): the controller behaves as if the cutting-in
// vehicle were already halfway claimed the gap.
inline double spacing_error(double gap, double speed, const VehicleParams& p,
                            double pc = 0.0) {
  const double divisor = 2.0 - std::exp(-p.alpha * pc);
  return gap / divisor - p.headway * speed - p.length - p.standstill;
}

// Spacing error at the collision boundary plus the safety margin: the
// smallest spacing error the supervisor tolerates at a given speed.
// delta >= floor is equivalent to gap >= margin.
inline double spacing_floor(double speed, const VehicleParams& p) {
  return -(p.headway * speed + p.length + p.standstill) + p.margin;
}

struct Discretization {
  Eigen::Matrix3d A;
  Eigen::Vector3d B;
  Eigen::Vector3d G;
};

// Euler discretization of the spacing-error dynamics with state
// [delta, dv, a], input u (commanded acceleration) and disturbance d
// (predecessor acceleration).
inline Discretization discretize(const VehicleParams& p) {
  if (p.ts <= 0.0 || p.engine_lag <= 0.0) {
    throw ConfigError("discretize: ts and engine_lag must be positive");
  }
  const double ts = p.ts;
  Discretization d;
  d.A << 1.0, ts, -p.headway * ts,
         0.0, 1.0, -ts,
         0.0, 0.0, 1.0 - ts / p.engine_lag;
  const double bsign = p.throttle_sign_positive ? 1.0 : -1.0;
  d.B << 0.0, 0.0, bsign * ts / p.engine_lag;
  d.G << 0.0, ts, 0.0;
  return d;
}

// Everything solve_mpc needs per cycle, assembled once. The decision
// variable is the input-increment sequence w[0..N-1] on the augmented state
// z = [delta, dv, a, u_prev]; the condensed matrices below are cached so a
// cycle only forms a gradient and a bound vector.
struct MpcProblem {
  VehicleParams params;
  CostWeights weights;
  int horizon = 20;
  double delta_lo = 0.0;  // design-speed spacing-error floor baked into c0
  std::vector<Eigen::Index> floor_rows;  // rows carrying the spacing floor

  Eigen::Matrix4d At;
  Eigen::Vector4d Bt;
  Eigen::Vector4d Gt;
  Eigen::Matrix4d Qt;
  double Rt = 0.1;
  Eigen::Matrix4d Qbar;
  Eigen::RowVector4d K;
  TerminalSet omega;

  Eigen::MatrixXd Sx, Su, Sd;  // stacked prediction of z[1..N]
  Eigen::MatrixXd Qblk;
  Eigen::MatrixXd Hqp;         // 2 (Su' Qblk Su + R I)
  Eigen::MatrixXd Gx, Gd;      // gradient = Gx z0 + Gd D
  Eigen::MatrixXd Mrows;       // constraint rows on w
  Eigen::MatrixXd CSx, CSd;    // bound vector = c0 - CSx z0 - CSd D
  Eigen::VectorXd c0;

  // Relieved constraint set: spacing floor plus the physical input and
  // acceleration limits only. Used when the full problem (terminal set and
  // speed-difference box included) admits no plan; those extra rows exist for
  // the stability certificate, not for safety, so they are the ones a
  // supervisor may drop while a feasible safe plan still exists.
  std::vector<Eigen::Index> floor_rows_relieved;
  Eigen::MatrixXd Mrows_r;
  Eigen::MatrixXd CSx_r, CSd_r;
  Eigen::VectorXd c0_r;
};

inline MpcProblem build_mpc_problem(const VehicleParams& p,
                                    const CostWeights& w,
                                    const MpcConfig& cfg) {
  if (cfg.horizon < 2) throw ConfigError("build_mpc_problem: horizon < 2");
  if (w.effort <= 0.0) {
    throw ConfigError("build_mpc_problem: effort weight must be positive");
  }
  const int N = cfg.horizon;
  const Discretization d = discretize(p);

  MpcProblem prob;
  prob.params = p;
  prob.weights = w;
  prob.horizon = N;

  prob.At.setZero();
  prob.At.topLeftCorner<3, 3>() = d.A;
  prob.At.topRightCorner<3, 1>() = d.B;
  prob.At(3, 3) = 1.0;
  prob.Bt << d.B, 1.0;
  prob.Gt << d.G, 0.0;
  prob.Qt.setZero();
  prob.Qt(0, 0) = w.spacing;
  prob.Qt(1, 1) = w.closing;
  prob.Rt = w.effort;

  {
    Eigen::MatrixXd R1(1, 1);
    R1(0, 0) = prob.Rt;
    const TerminalDesign td =
        terminal_design(prob.At, prob.Bt, prob.Qt, R1);
    prob.K = td.K;
    prob.Qbar = td.Qbar;

    // Invariant set for the LQR-closed loop inside the static design box.
    prob.delta_lo = spacing_floor(cfg.design_speed, p);
    const double delta_hi =
        p.headway * cfg.design_speed + p.length + p.standstill;
    Eigen::Vector4d z_lo(prob.delta_lo, p.dv_min, p.a_min, p.u_min);
    Eigen::Vector4d z_hi(delta_hi, p.dv_max, p.a_max, p.u_max);
    // The increment w = K z is unbounded, so only state rows are needed; the
    // physical input bound rides along as the fourth state axis.
    prob.omega = build_terminal_set(
        td.F, Eigen::MatrixXd::Zero(0, 4), Eigen::VectorXd(0),
        Eigen::VectorXd(0), z_lo, z_hi);
  }

  // Stacked prediction over z[1..N].
  const int nz = 4;
  prob.Sx.setZero(nz * N, nz);
  prob.Su.setZero(nz * N, N);
  prob.Sd.setZero(nz * N, N);
  std::vector<Eigen::Matrix4d> powers(static_cast<std::size_t>(N + 1));
  powers[0].setIdentity();
  for (int i = 1; i <= N; ++i) powers[static_cast<std::size_t>(i)] =
      prob.At * powers[static_cast<std::size_t>(i - 1)];
  for (int i = 1; i <= N; ++i) {
    prob.Sx.block(nz * (i - 1), 0, nz, nz) =
        powers[static_cast<std::size_t>(i)];
    for (int j = 0; j < i; ++j) {
      const Eigen::Matrix4d& Ap = powers[static_cast<std::size_t>(i - 1 - j)];
      prob.Su.block(nz * (i - 1), j, nz, 1) = Ap * prob.Bt;
      prob.Sd.block(nz * (i - 1), j, nz, 1) = Ap * prob.Gt;
    }
  }

  prob.Qblk.setZero(nz * N, nz * N);
  for (int i = 1; i < N; ++i) {
    prob.Qblk.block(nz * (i - 1), nz * (i - 1), nz, nz) = prob.Qt;
  }
  prob.Qblk.bottomRightCorner(nz, nz) = prob.Qbar;

  prob.Hqp = 2.0 * (prob.Su.transpose() * prob.Qblk * prob.Su +
                    prob.Rt * Eigen::MatrixXd::Identity(N, N));
  prob.Hqp = 0.5 * (prob.Hqp + prob.Hqp.transpose()).eval();
  prob.Gx = 2.0 * prob.Su.transpose() * prob.Qblk * prob.Sx;
  prob.Gd = 2.0 * prob.Su.transpose() * prob.Qblk * prob.Sd;

  // Path rows on z[1..N]: spacing floor, dv box, a box, input box (the
  // fourth state carries u[i-1]); terminal rows on z[N]. The floor rows are
  // indexed so a cycle with a raised (tightened) floor only rewrites their
  // bound entries. A second, relieved row set drops the dv box and the
  // terminal rows but keeps the floor and the physical limits.
  std::vector<Eigen::RowVectorXd> rows, rows_r;
  std::vector<double> cvals, cvals_r;
  auto make_state_row = [&](int i, const Eigen::RowVector4d& e) {
    Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(nz * N);
    r.segment(nz * (i - 1), nz) = e;
    return r;
  };
  for (int i = 1; i <= N; ++i) {
    const Eigen::RowVectorXd floor_row =
        make_state_row(i, Eigen::RowVector4d(-1, 0, 0, 0));
    prob.floor_rows.push_back(static_cast<Eigen::Index>(rows.size()));
    rows.push_back(floor_row);
    cvals.push_back(-prob.delta_lo);
    prob.floor_rows_relieved.push_back(static_cast<Eigen::Index>(rows_r.size()));
    rows_r.push_back(floor_row);
    cvals_r.push_back(-prob.delta_lo);

    auto push_both = [&](const Eigen::RowVector4d& e, double bound,
                         bool full_set) {
      if (full_set) {
        rows.push_back(make_state_row(i, e));
        cvals.push_back(bound);
      }
      rows_r.push_back(make_state_row(i, e));
      cvals_r.push_back(bound);
    };
    // z[N] keeps only the floor row in the full set; the rest is omega.
    const bool full = i < N;
    if (full) {
      rows.push_back(make_state_row(i, Eigen::RowVector4d(0, 1, 0, 0)));
      cvals.push_back(p.dv_max);
      rows.push_back(make_state_row(i, Eigen::RowVector4d(0, -1, 0, 0)));
      cvals.push_back(-p.dv_min);
    }
    push_both(Eigen::RowVector4d(0, 0, 1, 0), p.a_max, full);
    push_both(Eigen::RowVector4d(0, 0, -1, 0), -p.a_min, full);
    push_both(Eigen::RowVector4d(0, 0, 0, 1), p.u_max, full);
    push_both(Eigen::RowVector4d(0, 0, 0, -1), -p.u_min, full);
  }
  for (Eigen::Index r = 0; r < prob.omega.H.rows(); ++r) {
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(nz * N);
    row.segment(nz * (N - 1), nz) = prob.omega.H.row(r);
    rows.push_back(row);
    cvals.push_back(prob.omega.h(r));
  }

  auto condense = [&](const std::vector<Eigen::RowVectorXd>& rset,
                      const std::vector<double>& cset, Eigen::MatrixXd& M,
                      Eigen::MatrixXd& CSx, Eigen::MatrixXd& CSd,
                      Eigen::VectorXd& c0) {
    Eigen::MatrixXd C(static_cast<Eigen::Index>(rset.size()), nz * N);
    c0.resize(static_cast<Eigen::Index>(rset.size()));
    for (std::size_t r = 0; r < rset.size(); ++r) {
      C.row(static_cast<Eigen::Index>(r)) = rset[r];
      c0(static_cast<Eigen::Index>(r)) = cset[r];
    }
    M = C * prob.Su;
    CSx = C * prob.Sx;
    CSd = C * prob.Sd;
  };
  condense(rows, cvals, prob.Mrows, prob.CSx, prob.CSd, prob.c0);
  condense(rows_r, cvals_r, prob.Mrows_r, prob.CSx_r, prob.CSd_r, prob.c0_r);
  return prob;
}

enum class ControlMode {
  kNominal,        // plain constraint set, QP feasible
  kCutinActive,    // tightened spacing floor in force, QP feasible
  kFallbackBrake,  // QP infeasible, holding u_min
  kFallbackAccel,  // QP infeasible, holding u_max
};

inline const char* mode_name(ControlMode m) {
  switch (m) {
    case ControlMode::kNominal: return "nominal";
    case ControlMode::kCutinActive: return "cutin_active";
    case ControlMode::kFallbackBrake: return "fallback_brake";
    case ControlMode::kFallbackAccel: return "fallback_accel";
  }
  return "?";
}

struct ControllerOutput {
  double u = 0.0;          // applied command after supervision
  double u_mpc = 0.0;      // raw horizon-optimal command (or fallback value)
  ControlMode mode = ControlMode::kNominal;
  bool feasible = true;    // full (stability-certified) QP feasible this cycle
  bool relieved = false;   // plan came from the relieved constraint set
  bool fallback = false;   // fallback command engaged this cycle
  bool braking = false;    // fallback is the braking direction
  bool reset = false;      // reference re-anchored to a new pc this cycle
  double pc_effective = 0.0;
  double delta = 0.0;       // spacing error fed to the QP
  double delta_phys = 0.0;  // deterministic spacing error vs predecessor
  double floor = 0.0;       // spacing-error lower bound used this cycle
  double cost = 0.0;
  double kkt = 0.0;
  int qp_iterations = 0;
  Eigen::VectorXd plan_u;   // physical inputs u[0..N-1]
  Eigen::MatrixXd plan_z;   // 4 x (N+1) predicted augmented states
};

// Solves one horizon problem from augmented state z0 = [delta, dv, a,
// u_prev]. accel_preview supplies known/predicted predecessor accelerations
// d[0..]; missing tail entries hold the last given value (empty -> zeros).
// floor overrides the spacing-error lower bound on every horizon step when it
// exceeds the design floor baked into the cached rows. When the full problem
// admits no plan, the relieved row set is tried before giving up: a safe plan
// without the stability certificate beats no plan.
inline ControllerOutput solve_mpc(const MpcProblem& prob,
                                  const Eigen::Vector4d& z0,
                                  const std::vector<double>& accel_preview,
                                  double floor = -std::numeric_limits<double>::infinity()) {
  const int N = prob.horizon;
  Eigen::VectorXd D(N);
  for (int i = 0; i < N; ++i) {
    if (accel_preview.empty()) {
      D(i) = 0.0;
    } else if (i < static_cast<int>(accel_preview.size())) {
      D(i) = accel_preview[static_cast<std::size_t>(i)];
    } else {
      D(i) = accel_preview.back();
    }
  }

  const Eigen::VectorXd g = prob.Gx * z0 + prob.Gd * D;

  auto attempt = [&](const Eigen::MatrixXd& M, const Eigen::MatrixXd& CSx,
                     const Eigen::MatrixXd& CSd, const Eigen::VectorXd& c0,
                     const std::vector<Eigen::Index>& frows) {
    Eigen::VectorXd c = c0;
    if (floor > prob.delta_lo) {
      for (Eigen::Index r : frows) c(r) = -floor;
    }
    const Eigen::VectorXd m = c - CSx * z0 - CSd * D;
    return solve_qp(prob.Hqp, g, M, m);
  };

  QpResult qp = attempt(prob.Mrows, prob.CSx, prob.CSd, prob.c0,
                        prob.floor_rows);
  ControllerOutput out;
  out.feasible = qp.feasible;
  out.delta = z0(0);
  if (!qp.feasible) {
    qp = attempt(prob.Mrows_r, prob.CSx_r, prob.CSd_r, prob.c0_r,
                 prob.floor_rows_relieved);
    out.relieved = qp.feasible;
  }
  out.kkt = qp.kkt_residual;
  out.qp_iterations = qp.iterations;
  if (!qp.feasible) return out;

  const Eigen::VectorXd Z = prob.Sx * z0 + prob.Su * qp.x + prob.Sd * D;
  out.plan_u.resize(N);
  out.plan_z.resize(4, N + 1);
  out.plan_z.col(0) = z0;
  for (int i = 1; i <= N; ++i) {
    out.plan_z.col(i) = Z.segment(4 * (i - 1), 4);
    out.plan_u(i - 1) = Z(4 * (i - 1) + 3);
  }
  out.u_mpc = out.plan_u(0);

  const Eigen::VectorXd zbar = prob.Sx * z0 + prob.Sd * D;
  out.cost = (0.5 * qp.x.dot(prob.Hqp * qp.x) + g.dot(qp.x)) +
             zbar.dot(prob.Qblk * zbar) + z0.dot(prob.Qt * z0);
  return out;
}

// Constraint supervision. The active spacing-error floor is the design-box
// value unless a road vehicle is being tracked inside the gap; then the floor
// rises by the predecessor-to-intruder distance, which is equivalent to
// demanding the host stay at least `margin` behind the intruder itself.
// rv_offset = x_pred - x_rv (non-negative while the intruder is in the gap);
// pass NaN when nothing is tracked.
inline double active_floor(double speed, double rv_offset,
                           const MpcProblem& prob) {
  const VehicleParams& p = prob.params;
  if (!std::isfinite(rv_offset)) return prob.delta_lo;
  return std::max(prob.delta_lo, spacing_floor(speed, p) + rv_offset);
}

// Fallback command when no admissible plan exists even under the relieved
// constraint set: maximum braking while the spacing deficit dominates (the
// gap, projected a short time ahead at the current closing speed, is still
// short), maximum acceleration when the speed deficit dominates (the
// predecessor is running away and only speed recovery restores feasibility).
// Held cycle by cycle until some plan is admissible again.
inline constexpr double kFallbackLookahead = 1.5;  // s

inline ControlMode fallback_mode(double delta_phys, double dv) {
  if (delta_phys + kFallbackLookahead * dv < 0.0) {
    return ControlMode::kFallbackBrake;
  }
  return ControlMode::kFallbackAccel;
}

// The two supervision rules in one step: pick the constraint set for the
// cycle and name the operating mode once plan feasibility is known.
struct Supervision {
  double floor = 0.0;
  ControlMode mode = ControlMode::kNominal;
};

inline Supervision supervise(const FollowerState& s, double rv_offset,
                             bool plan_feasible, const MpcProblem& prob,
                             double pc_effective = 0.0) {
  Supervision out;
  out.floor = active_floor(s.speed, rv_offset, prob);
  if (!plan_feasible) {
    out.mode = fallback_mode(
        spacing_error(s.gap, s.speed, prob.params, pc_effective), s.dv);
  } else if (out.floor > prob.delta_lo) {
    out.mode = ControlMode::kCutinActive;
  }
  return out;
}

// Re-anchoring rule for the stochastic spacing reference: the controller
// keeps using the cut-in probability captured at the last reset until the
// live value drifts more than `guard` away from it, then re-anchors. This
// bounds how often the reference jumps while also bounding the size of each
// jump.
struct TtsisState {
  double pc_held = 0.0;
  bool initialized = false;
};

struct TtsisResult {
  double pc_effective = 0.0;
  bool reset = false;
};

inline TtsisResult ttsis_step(TtsisState& st, double pc_now,
                              double guard = 0.05) {
  TtsisResult out;
  if (!st.initialized) {
    st.initialized = true;
    st.pc_held = pc_now;
    out.reset = true;
  } else if (std::abs(pc_now - st.pc_held) > guard ||
             (pc_now == 0.0 && st.pc_held != 0.0)) {
    // The second clause is the all-clear: an exact zero from the estimator
    // releases a small held value that would otherwise discount the spacing
    // reference indefinitely.
    st.pc_held = pc_now;
    out.reset = true;
  }
  out.pc_effective = st.pc_held;
  return out;
}

struct ControllerConfig {
  VehicleParams vehicle;
  CostWeights weights;
  MpcConfig mpc;
  double ttsis_guard = 0.05;
  bool stochastic = true;  // false -> ignore pc entirely (plain MPC)
};

// One follower's control stack: TTSIS pc hold, stochastic spacing reference,
// horizon QP, fallback and supervisor, input memory.
class CaccController {
 public:
  explicit CaccController(const ControllerConfig& cfg)
      : cfg_(cfg), prob_(build_mpc_problem(cfg.vehicle, cfg.weights,
                                           cfg.mpc)) {}

  const MpcProblem& problem() const { return prob_; }
  double u_prev() const { return u_prev_; }

  // rv_offset: distance from the current predecessor back to a tracked road
  // vehicle inside the gap (x_pred - x_rv); NaN when none is tracked.
  ControllerOutput step(const FollowerState& s, double pc_raw,
                        const std::vector<double>& accel_preview,
                        double rv_offset =
                            std::numeric_limits<double>::quiet_NaN()) {
    const VehicleParams& p = cfg_.vehicle;
    double pc_eff = 0.0;
    bool reset = false;
    if (cfg_.stochastic) {
      const TtsisResult t = ttsis_step(ttsis_, pc_raw, cfg_.ttsis_guard);
      pc_eff = t.pc_effective;
      reset = t.reset;
    }

    const double delta_ctrl = spacing_error(s.gap, s.speed, p, pc_eff);
    const double delta_phys = spacing_error(s.gap, s.speed, p, 0.0);
    const double floor = active_floor(s.speed, rv_offset, prob_);
    const Eigen::Vector4d z0(delta_ctrl, s.dv, s.a, u_prev_);

    ControllerOutput out = solve_mpc(prob_, z0, accel_preview, floor);
    out.reset = reset;
    out.pc_effective = pc_eff;
    out.delta_phys = delta_phys;
    out.floor = floor;

    if (out.feasible || out.relieved) {
      out.mode = floor > prob_.delta_lo ? ControlMode::kCutinActive
                                        : ControlMode::kNominal;
      out.u = std::clamp(out.u_mpc, p.u_min, p.u_max);
    } else {
      // Direction from the spacing error the plan was asked to regulate:
      // a stochastic reference jump must read as a closing gap even while
      // the physical gap is still nominal.
      out.mode = fallback_mode(delta_ctrl, s.dv);
      out.fallback = true;
      out.braking = out.mode == ControlMode::kFallbackBrake;
      out.u = out.braking ? p.u_min : p.u_max;
      out.u_mpc = out.u;
    }
    u_prev_ = out.u;
    return out;
  }

 private:
  ControllerConfig cfg_;
  MpcProblem prob_;
  TtsisState ttsis_;
  double u_prev_ = 0.0;
};

}  // namespace platoon::control
