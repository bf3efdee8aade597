#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "platoon/errors.hpp"

namespace platoon::sim {

// Cut-in scenario on a straight two-lane road. The platoon (leader plus
// `followers` CACC vehicles) cruises in the lane centered at y = 0; the
// interferer starts in the adjacent lane and performs one lane change into
// the platoon lane, aimed at the gap ahead of follower 1.
struct ScenarioConfig {
  double duration = 30.0;
  double dt = 0.1;
  int followers = 1;  // the cut-in experiment concerns the first follower
  double cruise_speed = 27.0;
  double lane_width = 3.7;

  bool with_interferer = true;
  double maneuver_start = 10.0;
  double maneuver_duration = 5.5;
  double gap_fraction = 0.5;  // initial position inside follower 1's gap
  double interferer_speed_offset = 0.0;
  int interferer_side = -1;  // -1: starts right of the platoon lane, +1: left
  double interferer_len = 4.5;
  double interferer_width = 1.8;

  std::uint64_t seed = 1;
};

struct FollowerTrack {
  std::vector<double> x, v, a, u;
  std::vector<double> delta_phys, delta_ctrl, pc;
  std::vector<std::uint8_t> feasible, fallback, braking, reset;
};

struct ScenarioMetrics {
  double max_abs_delta_f1 = 0.0;   // physical spacing error, follower 1
  double max_abs_delta_all = 0.0;
  double min_clear_gap_f1 = 0.0;
  double pc_peak = 0.0;
  double detection_time = -1.0;    // first t with pc >= 0.5
  double crossing_time = -1.0;     // interferer center enters platoon lane
  double detection_lead = -1.0;    // crossing_time - detection_time
  double rms_du_f1 = 0.0;          // input-increment RMS, follower 1
  double max_kkt = 0.0;
  int fallback_cycles = 0;
  int braking_cycles = 0;
  int reference_resets = 0;
  int infeasible_cycles = 0;
  bool collision = false;
};

struct ScenarioResult {
  ScenarioConfig config;
  bool stochastic = false;
  std::vector<double> t;
  std::vector<double> leader_x, leader_v, leader_a;
  std::vector<FollowerTrack> followers;
  std::vector<double> int_x, int_y, int_v;   // interferer truth
  std::vector<std::uint8_t> int_in_lane;
  ScenarioMetrics metrics;
};

inline nlohmann::json metrics_to_json(const ScenarioMetrics& m) {
  return nlohmann::json{
      {"max_abs_delta_f1", m.max_abs_delta_f1},
      {"max_abs_delta_all", m.max_abs_delta_all},
      {"min_clear_gap_f1", m.min_clear_gap_f1},
      {"pc_peak", m.pc_peak},
      {"detection_time", m.detection_time},
      {"crossing_time", m.crossing_time},
      {"detection_lead", m.detection_lead},
      {"rms_du_f1", m.rms_du_f1},
      {"max_kkt", m.max_kkt},
      {"fallback_cycles", m.fallback_cycles},
      {"braking_cycles", m.braking_cycles},
      {"reference_resets", m.reference_resets},
      {"infeasible_cycles", m.infeasible_cycles},
      {"collision", m.collision},
  };
}

inline nlohmann::json scenario_to_json(const ScenarioConfig& c) {
  return nlohmann::json{
      {"duration", c.duration},
      {"dt", c.dt},
      {"followers", c.followers},
      {"cruise_speed", c.cruise_speed},
      {"lane_width", c.lane_width},
      {"with_interferer", c.with_interferer},
      {"maneuver_start", c.maneuver_start},
      {"maneuver_duration", c.maneuver_duration},
      {"gap_fraction", c.gap_fraction},
      {"interferer_speed_offset", c.interferer_speed_offset},
      {"interferer_side", c.interferer_side},
      {"interferer_len", c.interferer_len},
      {"interferer_width", c.interferer_width},
      {"seed", c.seed},
  };
}

inline void scenario_from_json(const nlohmann::json& j, ScenarioConfig& c) {
  c.duration = j.value("duration", c.duration);
  c.dt = j.value("dt", c.dt);
  c.followers = j.value("followers", c.followers);
  c.cruise_speed = j.value("cruise_speed", c.cruise_speed);
  c.lane_width = j.value("lane_width", c.lane_width);
  c.with_interferer = j.value("with_interferer", c.with_interferer);
  c.maneuver_start = j.value("maneuver_start", c.maneuver_start);
  c.maneuver_duration = j.value("maneuver_duration", c.maneuver_duration);
  c.gap_fraction = j.value("gap_fraction", c.gap_fraction);
  c.interferer_speed_offset =
      j.value("interferer_speed_offset", c.interferer_speed_offset);
  c.interferer_side = j.value("interferer_side", c.interferer_side);
  c.interferer_len = j.value("interferer_len", c.interferer_len);
  c.interferer_width = j.value("interferer_width", c.interferer_width);
  c.seed = j.value("seed", c.seed);
}

// Long-format per-cycle log, one row per vehicle per cycle. Flags are 0/1;
// channels that do not apply to a vehicle are written as 0.
inline constexpr const char* kRunCsvHeader =
    "t, veh, x, y, v, a, u, delta_phys, delta_ctrl, pc, feasible, fallback, "
    "braking, reset";

inline void write_run_csv(std::ostream& out, const ScenarioResult& r) {
  out << kRunCsvHeader << '\n';
  char buf[512];
  auto row = [&](const char* veh, double x, double y, double v, double a,
                 double u, double dp, double dc, double pc, int fe, int fb,
                 int br, int rs, double t) {
    std::snprintf(buf, sizeof buf,
                  "%.6f, %s, %.6f, %.6f, %.6f, %.6f, %.6f, %.6f, %.6f, %.6f, "
                  "%d, %d, %d, %d\n",
                  t, veh, x, y, v, a, u, dp, dc, pc, fe, fb, br, rs);
    out << buf;
  };
  for (std::size_t k = 0; k < r.t.size(); ++k) {
    const double t = r.t[k];
    row("leader", r.leader_x[k], 0.0, r.leader_v[k], r.leader_a[k], 0.0, 0.0,
        0.0, 0.0, 1, 0, 0, 0, t);
    for (std::size_t i = 0; i < r.followers.size(); ++i) {
      const FollowerTrack& f = r.followers[i];
      const std::string name = "f" + std::to_string(i + 1);
      row(name.c_str(), f.x[k], 0.0, f.v[k], f.a[k], f.u[k], f.delta_phys[k],
          f.delta_ctrl[k], f.pc[k], f.feasible[k], f.fallback[k],
          f.braking[k], f.reset[k], t);
    }
    if (!r.int_x.empty()) {
      row("interferer", r.int_x[k], r.int_y[k], r.int_v[k], 0.0, 0.0, 0.0,
          0.0, 0.0, 1, 0, 0, static_cast<int>(r.int_in_lane[k]), t);
    }
  }
}

inline void write_run_csv(const std::string& path, const ScenarioResult& r) {
  std::ofstream out(path);
  if (!out) throw FormatError("run csv: cannot open '" + path + "'");
  write_run_csv(out, r);
}

}  // namespace platoon::sim
