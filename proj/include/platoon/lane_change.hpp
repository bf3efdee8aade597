#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "platoon/errors.hpp"
#include "platoon/kinematics.hpp"
#include "platoon/random.hpp"
#include "platoon/trace.hpp"

namespace platoon::sim {

// Comfort cap on lateral acceleration; bounds how fast a lane change of a
// given width may be driven.
inline constexpr double kMaxLateralAccel = 1.96;

// Design margin used when sizing the turn-in pulse against the comfort cap.
inline constexpr double kLateralAccelDesign = 1.90;

// Lane-change lateral profile: two half-sine acceleration pulses. The
// turn-in pulse is shorter and stronger than the alignment pulse, which is
// how drivers actually initiate a lane change (assertive entry, gradual
// settling); a symmetric minimum-jerk profile spreads the steering so thin
// that at highway speeds the maneuver barely registers above the signal
// dead bands. turn_in ∈ (0, 0.5] is the turn-in fraction of the duration.
struct LaneProfile {
  double width = 3.7;      // m, signed displacement
  double duration = 5.5;   // s
  double turn_in = 0.3;    // fraction of duration spent in the entry pulse

  // Entry-pulse length honoring the comfort cap: peak accel of the entry
  // pulse is pi*|W| / (D * T1), so T1 has a duration-dependent floor.
  double t_entry() const {
    const double floor_s =
        std::numbers::pi * std::abs(width) / (kLateralAccelDesign * duration);
    return std::clamp(std::max(turn_in * duration, floor_s), 1e-6,
                      0.5 * duration);
  }

  // Lateral displacement, velocity and acceleration at maneuver time
  // t' ∈ [0, duration].
  void eval(double tp, double* y, double* vy, double* ay) const {
    const double T1 = t_entry();
    const double T2 = duration - T1;
    const double V = 2.0 * width / duration;  // peak lateral speed
    if (tp <= 0.0) {
      *y = 0.0; *vy = 0.0; *ay = 0.0;
    } else if (tp < T1) {
      const double w = std::numbers::pi / T1;
      *ay = 0.5 * V * w * std::sin(w * tp);
      *vy = 0.5 * V * (1.0 - std::cos(w * tp));
      *y = 0.5 * V * (tp - std::sin(w * tp) / w);
    } else if (tp < duration) {
      const double s = tp - T1;
      const double w = std::numbers::pi / T2;
      *ay = -0.5 * V * w * std::sin(w * s);
      *vy = 0.5 * V * (1.0 + std::cos(w * s));
      *y = 0.5 * V * T1 + 0.5 * V * (s + std::sin(w * s) / w);
    } else {
      *y = width; *vy = 0.0; *ay = 0.0;
    }
  }

  double peak_accel() const {
    const double T1 = t_entry();
    return std::numbers::pi * std::abs(width) / (duration * T1);
  }
};

// Fastest comfortable lane change: the symmetric two-pulse profile peaks at
// 2*pi*W/D^2, so the cap fixes the minimum duration.
inline double min_lane_change_duration(double width) {
  return std::sqrt(2.0 * std::numbers::pi * std::abs(width) /
                   kMaxLateralAccel);
}

// Label of the maneuver progress, as a fraction of the total duration.
enum class ManeuverPhase { kIntention, kPreparation, kTransition, kCompletion };

inline ManeuverPhase phase_of(double tau) {
  if (tau < 0.15) return ManeuverPhase::kIntention;
  if (tau < 0.30) return ManeuverPhase::kPreparation;
  if (tau < 0.70) return ManeuverPhase::kTransition;
  return ManeuverPhase::kCompletion;
}

inline const char* phase_name(ManeuverPhase p) {
  switch (p) {
    case ManeuverPhase::kIntention: return "intention";
    case ManeuverPhase::kPreparation: return "preparation";
    case ManeuverPhase::kTransition: return "transition";
    case ManeuverPhase::kCompletion: return "completion";
  }
  return "?";
}

// Measurement noise levels applied to the recorded channels (the underlying
// motion stays clean). Units match the trace columns.
struct SensorNoise {
  double pos = 0.015;       // m
  double speed = 0.05;      // m/s
  double heading = 0.002;   // rad
  double swa = 0.3;         // deg
  double yaw_rate = 0.002;  // rad/s
  double accel = 0.05;      // m/s^2
};

struct LaneChangeSpec {
  double speed = 27.0;        // m/s, held through the maneuver
  double width = 3.7;         // m, lateral displacement
  double duration = 5.5;      // s, maneuver time
  double pre_time = 3.0;      // s of straight driving before
  double post_time = 3.0;     // s after
  double dt = 0.1;            // s
  int direction = +1;         // +1 toward +y, -1 toward -y
  double x0 = 0.0;
  double y0 = 0.0;
  double steering_ratio = 24.0;
  double wheelbase = 2.9;
  double body_len = 4.5;
  double body_width = 1.8;
  double steer_noise = 0.0005;  // rad, actuation noise on the road wheel
  double turn_in = 0.3;         // entry-pulse fraction, see LaneProfile
  // Driver micro-corrections: an Ornstein-Uhlenbeck wander on the steering
  // command. Real steering constantly hunts around the intended profile;
  // without it the dead-band smoothing reduces a whole maneuver to a couple
  // of steps and leaves nothing to learn from.
  double dither_std = 0.00105;  // rad, road-wheel (about 1.2 deg at the wheel)
  double dither_tau = 0.45;     // s, correction time constant
  SensorNoise noise;
};

struct StraightSpec {
  double speed = 27.0;
  double duration = 12.0;
  double dt = 0.1;
  double x0 = 0.0;
  double y0 = 0.0;
  double steering_ratio = 24.0;
  double wheelbase = 2.9;
  double body_len = 4.5;
  double body_width = 1.8;
  double steer_noise = 0.0005;
  double dither_std = 0.00105;
  double dither_tau = 0.45;
  SensorNoise noise;
};

// Curve driving synthesized in the lane frame of a curved road: the vehicle
// holds lane center (y stays near zero) while heading, yaw rate and steering
// carry the sustained curvature signature. x is distance along the lane.
struct CurveSpec {
  double speed = 27.0;
  double duration = 12.0;
  double dt = 0.1;
  double radius = 800.0;  // m, signed (+ left)
  double x0 = 0.0;
  double steering_ratio = 24.0;
  double wheelbase = 2.9;
  double body_len = 4.5;
  double body_width = 1.8;
  double dither_std = 0.00105;
  double dither_tau = 0.45;
  SensorNoise noise;
};

// Generator output: the noisy recording fed to learning/prediction plus the
// noise-free motion for use as simulation ground truth.
struct GeneratedTrace {
  std::vector<signals::TraceRecord> records;
  std::vector<KinematicVehicle> truth;
  std::vector<double> steer;  // road-wheel angle actually applied, rad
  double maneuver_start = 0.0;
  double maneuver_end = 0.0;
};

namespace detail {

// Mean-reverting steering wander; discretized exactly for the sample step.
class OuDither {
 public:
  OuDither(double std_dev, double tau, double dt)
      : decay_(std::exp(-dt / tau)),
        drive_(std_dev * std::sqrt(1.0 - decay_ * decay_)) {}

  double step(Rng& rng) {
    state_ = decay_ * state_ + drive_ * rng.normal();
    return state_;
  }

 private:
  double decay_;
  double drive_;
  double state_ = 0.0;
};

inline signals::TraceRecord record_sample(double t, const KinematicVehicle& v,
                                          double steer, double ax_true,
                                          double steering_ratio,
                                          const SensorNoise& nz, Rng& rng) {
  constexpr double kRad2Deg = 180.0 / std::numbers::pi;
  const double yaw = yaw_rate_of(v, steer);
  signals::TraceRecord r;
  r.t = t;
  r.x = v.x + nz.pos * rng.normal();
  r.y = v.y + nz.pos * rng.normal();
  r.elev = 0.01 * rng.normal();
  r.speed = v.speed + nz.speed * rng.normal();
  r.heading = v.heading + nz.heading * rng.normal();
  r.swa = steer * steering_ratio * kRad2Deg + nz.swa * rng.normal();
  r.yaw_rate = yaw + nz.yaw_rate * rng.normal();
  r.ax = ax_true + nz.accel * rng.normal();
  r.ay = v.speed * yaw + nz.accel * rng.normal();
  r.az = nz.accel * rng.normal();
  r.len = v.length;
  r.width = v.width;
  return r;
}

}  // namespace detail

// Simulates a single lane change: two-pulse lateral reference tracked with
// feedforward steering plus a gentle position/heading feedback, constant
// speed. The recorded channels carry sensor noise; the returned truth does
// not.
inline GeneratedTrace generate_lane_change(const LaneChangeSpec& spec,
                                           Rng& rng) {
  if (spec.speed <= 1.0) {
    throw ConfigError("generate_lane_change: speed too low");
  }
  if (spec.duration < min_lane_change_duration(spec.width)) {
    throw ConfigError(
        "generate_lane_change: duration " + std::to_string(spec.duration) +
        " s is below the comfort minimum " +
        std::to_string(min_lane_change_duration(spec.width)) + " s");
  }
  const double ky = 0.02;   // rad per m of lateral error
  const double kth = 0.5;   // rad per rad of heading error
  const double t_end = spec.pre_time + spec.duration + spec.post_time;
  const int steps = static_cast<int>(std::round(t_end / spec.dt));

  GeneratedTrace out;
  out.maneuver_start = spec.pre_time;
  out.maneuver_end = spec.pre_time + spec.duration;
  KinematicVehicle v;
  v.x = spec.x0;
  v.y = spec.y0;
  v.heading = 0.0;
  v.speed = spec.speed;
  v.wheelbase = spec.wheelbase;
  v.length = spec.body_len;
  v.width = spec.body_width;

  LaneProfile prof;
  prof.width = spec.direction * spec.width;
  prof.duration = spec.duration;
  prof.turn_in = spec.turn_in;
  detail::OuDither dither(spec.dither_std, spec.dither_tau, spec.dt);
  for (int k = 0; k <= steps; ++k) {
    const double t = k * spec.dt;

    double dy_d, vy_d, ay_d;
    prof.eval(t - spec.pre_time, &dy_d, &vy_d, &ay_d);
    const double y_d = spec.y0 + dy_d;
    const double sin_th = std::clamp(vy_d / v.speed, -0.99, 0.99);
    const double theta_d = std::asin(sin_th);
    const double dtheta_d = ay_d / (v.speed * std::cos(theta_d));

    double steer = std::atan(v.wheelbase * dtheta_d / v.speed);
    steer += ky * (y_d - v.y) + kth * (theta_d - v.heading);
    steer += dither.step(rng) + spec.steer_noise * rng.normal();
    steer = std::clamp(steer, -0.5, 0.5);

    out.records.push_back(detail::record_sample(
        t, v, steer, 0.0, spec.steering_ratio, spec.noise, rng));
    out.truth.push_back(v);
    out.steer.push_back(steer);
    v = kinematic_step(v, 0.0, steer, spec.dt);
  }
  return out;
}

// Straight lane keeping: only actuation noise and a lane-centering feedback.
inline GeneratedTrace generate_straight(const StraightSpec& spec, Rng& rng) {
  const double ky = 0.02;
  const double kth = 0.5;
  const int steps = static_cast<int>(std::round(spec.duration / spec.dt));

  GeneratedTrace out;
  KinematicVehicle v;
  v.x = spec.x0;
  v.y = spec.y0;
  v.speed = spec.speed;
  v.wheelbase = spec.wheelbase;
  v.length = spec.body_len;
  v.width = spec.body_width;

  detail::OuDither dither(spec.dither_std, spec.dither_tau, spec.dt);
  for (int k = 0; k <= steps; ++k) {
    const double t = k * spec.dt;
    double steer = ky * (spec.y0 - v.y) + kth * (0.0 - v.heading);
    steer += dither.step(rng) + spec.steer_noise * rng.normal();
    steer = std::clamp(steer, -0.5, 0.5);
    out.records.push_back(detail::record_sample(
        t, v, steer, 0.0, spec.steering_ratio, spec.noise, rng));
    out.truth.push_back(v);
    out.steer.push_back(steer);
    v = kinematic_step(v, 0.0, steer, spec.dt);
  }
  return out;
}

inline GeneratedTrace generate_curved(const CurveSpec& spec, Rng& rng) {
  if (std::abs(spec.radius) < 50.0) {
    throw ConfigError("generate_curved: radius too tight");
  }
  const double ay = spec.speed * spec.speed / std::abs(spec.radius);
  if (ay > kMaxLateralAccel * 1.5) {
    throw ConfigError("generate_curved: curve too tight for the speed");
  }
  const int steps = static_cast<int>(std::round(spec.duration / spec.dt));
  const double steer_ss = std::atan(spec.wheelbase / spec.radius);
  const double yaw_ss = spec.speed / spec.radius;

  GeneratedTrace out;
  KinematicVehicle v;
  v.x = spec.x0;
  v.speed = spec.speed;
  v.wheelbase = spec.wheelbase;
  v.length = spec.body_len;
  v.width = spec.body_width;

  detail::OuDither dither(spec.dither_std, spec.dither_tau, spec.dt);
  for (int k = 0; k <= steps; ++k) {
    const double t = k * spec.dt;
    v.x = spec.x0 + spec.speed * t;  // arc length along the lane
    v.y = 0.0;
    v.heading = yaw_ss * t;  // accumulated global heading
    // Lane is held by construction; the correction wander shows up in the
    // steering and yaw-rate records only.
    const double steer = steer_ss + dither.step(rng);
    out.records.push_back(detail::record_sample(
        t, v, steer, 0.0, spec.steering_ratio, spec.noise, rng));
    KinematicVehicle truth = v;
    truth.y = 0.0;
    out.truth.push_back(truth);
    out.steer.push_back(steer);
  }
  return out;
}

// Synthetic training corpus: randomized lane changes plus straight and
// curved-road drives (the latter teach the lateral model that sustained
// curvature is not a lane change). Maneuver sharpness is drawn so the
// steering signature survives the measurement dead bands at highway speed.
struct CorpusConfig {
  int lane_changes = 90;
  int straights = 30;
  int curves = 30;
  double dt = 0.1;
  double speed_lo = 24.0;
  double speed_hi = 29.0;
  double duration_lo = 3.5;   // s, lane-change time
  double duration_hi = 5.6;
  double lane_width = 3.7;
  double radius_lo = 500.0;   // m, curve radius magnitude
  double radius_hi = 1200.0;
  std::uint64_t seed = 1;
};

struct CorpusTrace {
  std::string name;
  GeneratedTrace trace;
};

inline std::vector<CorpusTrace> generate_corpus(const CorpusConfig& cfg) {
  std::vector<CorpusTrace> out;
  out.reserve(static_cast<std::size_t>(cfg.lane_changes + cfg.straights +
                                       cfg.curves));
  for (int i = 0; i < cfg.lane_changes; ++i) {
    Rng rng(derive_seed(cfg.seed, 0x4c430000ULL + static_cast<unsigned>(i)));
    LaneChangeSpec spec;
    spec.speed = rng.uniform(cfg.speed_lo, cfg.speed_hi);
    spec.width = cfg.lane_width;
    spec.duration = rng.uniform(cfg.duration_lo, cfg.duration_hi);
    spec.pre_time = rng.uniform(2.5, 4.0);
    spec.post_time = rng.uniform(2.5, 4.0);
    spec.dt = cfg.dt;
    spec.direction = (i % 2 == 0) ? +1 : -1;
    spec.turn_in = rng.uniform(0.3, 0.5);
    out.push_back({"lane_change_" + std::to_string(i),
                   generate_lane_change(spec, rng)});
  }
  for (int i = 0; i < cfg.straights; ++i) {
    Rng rng(derive_seed(cfg.seed, 0x53540000ULL + static_cast<unsigned>(i)));
    StraightSpec spec;
    spec.speed = rng.uniform(cfg.speed_lo, cfg.speed_hi);
    spec.duration = 12.0;
    spec.dt = cfg.dt;
    out.push_back({"straight_" + std::to_string(i),
                   generate_straight(spec, rng)});
  }
  for (int i = 0; i < cfg.curves; ++i) {
    Rng rng(derive_seed(cfg.seed, 0x43560000ULL + static_cast<unsigned>(i)));
    CurveSpec spec;
    spec.speed = rng.uniform(cfg.speed_lo, cfg.speed_hi);
    spec.duration = 12.0;
    spec.dt = cfg.dt;
    const double mag = rng.uniform(cfg.radius_lo, cfg.radius_hi);
    spec.radius = (i % 2 == 0) ? mag : -mag;
    out.push_back({"curve_" + std::to_string(i),
                   generate_curved(spec, rng)});
  }
  return out;
}

}  // namespace platoon::sim
