#pragma once

#include <algorithm>
#include <cmath>

#include "platoon/errors.hpp"

namespace platoon::sim {

// Kinematic bicycle state in the road frame. x points along the road, y to
// the left, heading is measured from the x axis. speed is the velocity along
// the heading and never goes negative.
struct KinematicVehicle {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double speed = 0.0;
  double wheelbase = 2.7;  // m
  double length = 4.5;     // m, body dimensions carried for geometry
  double width = 1.8;      // m
};

// One RK4 step of the kinematic bicycle with inputs held constant:
//   x' = v cos(theta), y' = v sin(theta),
//   theta' = v/wheelbase * tan(steer), v' = accel.
// steer is the road-wheel angle in radians.
inline KinematicVehicle kinematic_step(const KinematicVehicle& v, double accel,
                                       double steer, double dt) {
  if (dt <= 0.0) throw ConfigError("kinematic_step: dt must be positive");
  const double tan_steer = std::tan(steer);
  const double inv_wb = 1.0 / v.wheelbase;

  struct Deriv {
    double dx, dy, dtheta, dv;
  };
  auto f = [&](double /*x*/, double /*y*/, double theta,
               double speed) -> Deriv {
    return Deriv{speed * std::cos(theta), speed * std::sin(theta),
                 speed * inv_wb * tan_steer, accel};
  };

  const Deriv k1 = f(v.x, v.y, v.heading, v.speed);
  const Deriv k2 = f(v.x + 0.5 * dt * k1.dx, v.y + 0.5 * dt * k1.dy,
                     v.heading + 0.5 * dt * k1.dtheta,
                     v.speed + 0.5 * dt * k1.dv);
  const Deriv k3 = f(v.x + 0.5 * dt * k2.dx, v.y + 0.5 * dt * k2.dy,
                     v.heading + 0.5 * dt * k2.dtheta,
                     v.speed + 0.5 * dt * k2.dv);
  const Deriv k4 = f(v.x + dt * k3.dx, v.y + dt * k3.dy,
                     v.heading + dt * k3.dtheta, v.speed + dt * k3.dv);

  KinematicVehicle out = v;
  out.x += dt / 6.0 * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx);
  out.y += dt / 6.0 * (k1.dy + 2.0 * k2.dy + 2.0 * k3.dy + k4.dy);
  out.heading +=
      dt / 6.0 * (k1.dtheta + 2.0 * k2.dtheta + 2.0 * k3.dtheta + k4.dtheta);
  out.speed += dt / 6.0 * (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv);
  out.speed = std::max(0.0, out.speed);
  return out;
}

// Instantaneous yaw rate implied by the bicycle geometry.
inline double yaw_rate_of(const KinematicVehicle& v, double steer) {
  return v.speed / v.wheelbase * std::tan(steer);
}

}  // namespace platoon::sim
