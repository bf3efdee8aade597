#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "platoon/cutin.hpp"
#include "platoon/errors.hpp"
#include "platoon/lane_change.hpp"
#include "platoon/mpc.hpp"
#include "platoon/predictor.hpp"
#include "platoon/random.hpp"
#include "platoon/scenario.hpp"

namespace platoon::sim {

// Plant update shared by every longitudinal vehicle: forward Euler with a
// first-order driveline lag, matching the controller's internal model
// exactly (the update order keeps delta+ = delta + ts*dv - h*ts*a).
struct LongitudinalState {
  double x = 0.0;
  double v = 0.0;
  double a = 0.0;
};

inline LongitudinalState longitudinal_step(const LongitudinalState& s,
                                           double u, double ts,
                                           double engine_lag) {
  LongitudinalState out;
  out.x = s.x + ts * s.v;
  out.v = std::max(0.0, s.v + ts * s.a);
  out.a = s.a + ts / engine_lag * (u - s.a);
  return out;
}

namespace detail {

struct InterfererPath {
  GeneratedTrace trace;
  bool present = false;
};

inline InterfererPath make_interferer(const ScenarioConfig& sc,
                                      double follower1_x0, double gap_eq) {
  InterfererPath out;
  if (!sc.with_interferer) return out;
  LaneChangeSpec spec;
  spec.speed = sc.cruise_speed + sc.interferer_speed_offset;
  spec.width = sc.lane_width;
  spec.duration = sc.maneuver_duration;
  spec.pre_time = sc.maneuver_start;
  spec.post_time =
      std::max(1.0, sc.duration - sc.maneuver_start - sc.maneuver_duration) +
      1.0;
  spec.dt = sc.dt;
  spec.direction = -sc.interferer_side;  // toward the platoon lane
  spec.y0 = sc.interferer_side * sc.lane_width;
  spec.x0 = follower1_x0 + sc.gap_fraction * gap_eq;
  spec.body_len = sc.interferer_len;
  spec.body_width = sc.interferer_width;
  Rng rng(derive_seed(sc.seed, 0x494e5446ULL));
  out.trace = generate_lane_change(spec, rng);
  out.present = true;
  return out;
}

}  // namespace detail

// Runs one closed-loop scenario. `bundle` supplies the cut-in prediction for
// follower 1 and may be null (no prediction: pc stays 0, which turns the
// stochastic controller into the plain one). Pairing rule: two calls with
// the same ScenarioConfig see byte-identical interferer motion regardless of
// the controller flavor.
inline ScenarioResult run_scenario(const ScenarioConfig& sc,
                                   const control::ControllerConfig& ctrl_cfg,
                                   const predictor::PredictorBundle* bundle) {
  if (sc.followers < 1) throw ConfigError("run_scenario: followers < 1");
  if (sc.dt <= 0.0 || sc.duration <= sc.dt) {
    throw ConfigError("run_scenario: bad duration/dt");
  }
  const control::VehicleParams& vp = ctrl_cfg.vehicle;
  const double gap_eq =
      vp.headway * sc.cruise_speed + vp.length + vp.standstill;
  const int K = static_cast<int>(std::round(sc.duration / sc.dt));

  ScenarioResult res;
  res.config = sc;
  res.stochastic = ctrl_cfg.stochastic;

  // Equilibrium platoon start.
  LongitudinalState leader{0.0, sc.cruise_speed, 0.0};
  std::vector<LongitudinalState> fol(
      static_cast<std::size_t>(sc.followers));
  for (int i = 0; i < sc.followers; ++i) {
    fol[static_cast<std::size_t>(i)] = LongitudinalState{
        leader.x - gap_eq * (i + 1), sc.cruise_speed, 0.0};
  }
  const detail::InterfererPath ip =
      detail::make_interferer(sc, fol[0].x, gap_eq);

  std::vector<control::CaccController> ctrl;
  ctrl.reserve(static_cast<std::size_t>(sc.followers));
  for (int i = 0; i < sc.followers; ++i) ctrl.emplace_back(ctrl_cfg);

  res.followers.resize(static_cast<std::size_t>(sc.followers));
  cutin::BadSet bad;
  bad.headway = vp.headway;
  bad.standstill = vp.standstill;
  bad.lane_width = sc.lane_width;

  bool switched = false;  // interferer latched as follower 1's predecessor
  ScenarioMetrics& m = res.metrics;
  m.min_clear_gap_f1 = 1e9;
  // Follower 1 planned speeds from the previous cycle (index i = i steps
  // ahead); drives the host's future pose under the bad set. Empty until the
  // first feasible solve, then the best available estimate.
  std::vector<double> f1_plan_v;

  for (int k = 0; k < K; ++k) {
    const double t = k * sc.dt;
    res.t.push_back(t);
    res.leader_x.push_back(leader.x);
    res.leader_v.push_back(leader.v);
    res.leader_a.push_back(leader.a);

    // Interferer truth this cycle.
    LongitudinalState int_state;
    double int_y = 0.0;
    bool int_in_lane = false;
    if (ip.present) {
      const std::size_t ki =
          std::min<std::size_t>(static_cast<std::size_t>(k),
                                ip.trace.truth.size() - 1);
      const KinematicVehicle& iv = ip.trace.truth[ki];
      int_state = LongitudinalState{iv.x, iv.speed * std::cos(iv.heading),
                                    0.0};
      int_y = iv.y;
      int_in_lane = std::abs(int_y) < 0.5 * sc.lane_width;
      if (int_in_lane && !switched) {
        switched = true;
        if (m.crossing_time < 0.0) m.crossing_time = t;
      }
      res.int_x.push_back(int_state.x);
      res.int_y.push_back(int_y);
      res.int_v.push_back(int_state.v);
      res.int_in_lane.push_back(int_in_lane ? 1 : 0);
    }

    // Cut-in probability for follower 1 (prediction runs while the
    // interferer is still a neighbor-lane vehicle).
    double pc_raw = 0.0;
    if (ip.present && bundle != nullptr && !switched) {
      const std::size_t hist_end = static_cast<std::size_t>(k) + 1;
      const std::size_t hist_lo =
          hist_end > static_cast<std::size_t>(bundle->config.history_window)
              ? hist_end -
                    static_cast<std::size_t>(bundle->config.history_window)
              : 0;
      const std::vector<signals::TraceRecord> hist(
          ip.trace.records.begin() + static_cast<std::ptrdiff_t>(hist_lo),
          ip.trace.records.begin() + static_cast<std::ptrdiff_t>(hist_end));
      const predictor::PredictionFan fan = predictor::predict(*bundle, hist);
      if (fan.valid) {
        std::vector<cutin::Rect> pred, badr;
        double host_x = fol[0].x;
        for (std::size_t j = 0; j < fan.x.size(); ++j) {
          // The overlap works on the calibrated confidence rectangle itself;
          // its floor keeps the area positive. Folding the body outline in
          // would leave the rectangle clipping the lane band even while the
          // vehicle holds the adjacent lane's center, which reads as a
          // standing false alarm at cruise.
          pred.push_back(cutin::rect_from_center(fan.x[j], fan.y[j],
                                                 fan.half_x[j],
                                                 fan.half_y[j]));
          // Host pose from the controller's own plan when one exists,
          // constant speed otherwise.
          const double host_v = j + 1 < f1_plan_v.size()
                                    ? f1_plan_v[j + 1]
                                    : fol[0].v;
          host_x += host_v * sc.dt;
          badr.push_back(cutin::bad_set_rect(bad, host_x, 0.0, host_v));
        }
        const cutin::CutinProbability cp = cutin::compute_pc(pred, badr);
        pc_raw = cp.pc;
      }
    }
    if (pc_raw >= 0.5 && m.detection_time < 0.0) m.detection_time = t;
    m.pc_peak = std::max(m.pc_peak, pc_raw);

    // Control all followers on current states, then integrate.
    std::vector<double> u_cmd(static_cast<std::size_t>(sc.followers));
    for (int i = 0; i < sc.followers; ++i) {
      const std::size_t si = static_cast<std::size_t>(i);
      LongitudinalState pred_state =
          i == 0 ? leader : fol[si - 1];
      if (i == 0 && switched) pred_state = int_state;

      control::FollowerState fs;
      fs.gap = pred_state.x - fol[si].x;
      fs.dv = pred_state.v - fol[si].v;
      fs.a = fol[si].a;
      fs.speed = fol[si].v;
      const double pc_i = i == 0 ? pc_raw : 0.0;
      // Spacing-floor tightening: follower 1 tracks the interferer while it
      // threatens the gap (prediction running, pc > 0) and keeps the
      // tightened bound once it has merged and become the predecessor.
      double rv_offset = std::numeric_limits<double>::quiet_NaN();
      if (i == 0 && ip.present) {
        if (switched) {
          rv_offset = 0.0;
        } else if (ctrl_cfg.stochastic && pc_i > 0.0) {
          rv_offset = std::max(0.0, pred_state.x - int_state.x);
        }
      }
      const control::ControllerOutput out =
          ctrl[si].step(fs, pc_i, {pred_state.a}, rv_offset);
      u_cmd[si] = out.u;
      if (i == 0) {
        f1_plan_v.clear();
        if (out.feasible || out.relieved) {
          for (Eigen::Index c = 0; c < out.plan_z.cols(); ++c) {
            f1_plan_v.push_back(pred_state.v - out.plan_z(1, c));
          }
        }
      }

      FollowerTrack& log = res.followers[si];
      log.x.push_back(fol[si].x);
      log.v.push_back(fol[si].v);
      log.a.push_back(fol[si].a);
      log.u.push_back(out.u);
      log.delta_phys.push_back(out.delta_phys);
      log.delta_ctrl.push_back(out.delta);
      log.pc.push_back(out.pc_effective);
      log.feasible.push_back(out.feasible ? 1 : 0);
      log.fallback.push_back(out.fallback ? 1 : 0);
      log.braking.push_back(out.braking ? 1 : 0);
      log.reset.push_back(out.reset ? 1 : 0);

      m.max_kkt = std::max(m.max_kkt, out.kkt);
      if (!out.feasible) ++m.infeasible_cycles;
      if (out.fallback) ++m.fallback_cycles;
      if (out.braking) ++m.braking_cycles;
      if (out.reset && ctrl_cfg.stochastic) ++m.reference_resets;
      const double abs_d = std::abs(out.delta_phys);
      m.max_abs_delta_all = std::max(m.max_abs_delta_all, abs_d);
      if (i == 0) {
        m.max_abs_delta_f1 = std::max(m.max_abs_delta_f1, abs_d);
        const double clear = fs.gap - vp.length;
        m.min_clear_gap_f1 = std::min(m.min_clear_gap_f1, clear);
        if (clear <= 0.0) m.collision = true;
      }
    }

    leader = longitudinal_step(leader, 0.0, sc.dt, vp.engine_lag);
    for (int i = 0; i < sc.followers; ++i) {
      const std::size_t si = static_cast<std::size_t>(i);
      fol[si] = longitudinal_step(fol[si], u_cmd[si], sc.dt, vp.engine_lag);
    }
  }

  // Input-increment roughness for follower 1.
  {
    const auto& u = res.followers[0].u;
    double acc = 0.0;
    for (std::size_t k = 1; k < u.size(); ++k) {
      const double du = u[k] - u[k - 1];
      acc += du * du;
    }
    m.rms_du_f1 = u.size() > 1
                      ? std::sqrt(acc / static_cast<double>(u.size() - 1))
                      : 0.0;
  }
  if (m.detection_time >= 0.0 && m.crossing_time >= 0.0) {
    m.detection_lead = m.crossing_time - m.detection_time;
  }
  return res;
}

struct PairedResult {
  ScenarioResult stochastic;
  ScenarioResult conventional;
  double delta_ratio = 0.0;  // max |spacing error| ratio, f1
};

// Runs the same scenario with the stochastic controller and the plain one.
// Both runs see the identical interferer; only the spacing reference logic
// differs.
inline PairedResult run_paired(const ScenarioConfig& sc,
                               const control::ControllerConfig& base,
                               const predictor::PredictorBundle* bundle) {
  control::ControllerConfig cs = base;
  cs.stochastic = true;
  control::ControllerConfig cc = base;
  cc.stochastic = false;

  PairedResult out;
  out.stochastic = run_scenario(sc, cs, bundle);
  out.conventional = run_scenario(sc, cc, bundle);
  const double denom = out.conventional.metrics.max_abs_delta_f1;
  out.delta_ratio =
      denom > 0.0 ? out.stochastic.metrics.max_abs_delta_f1 / denom : 0.0;
  return out;
}

}  // namespace platoon::sim
