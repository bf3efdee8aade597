#pragma once

#include <cstddef>
#include <vector>

#include "platoon/errors.hpp"
#include "platoon/geometry.hpp"

namespace platoon::cutin {

// Safety-critical region ahead of the host: a rectangle the length of the
// desired spacing (headway distance plus standstill gap) and one lane wide,
// anchored at the host front bumper and centered on the host lane.
struct BadSet {
  double headway = 0.7;     // s
  double standstill = 5.0;  // m
  double lane_width = 3.7;  // m

  double length(double host_speed) const {
    return headway * host_speed + standstill;
  }
};

inline Rect bad_set_rect(const BadSet& b, double host_front_x,
                         double lane_center_y, double host_speed) {
  const double len = b.length(host_speed);
  return Rect{host_front_x, host_front_x + len,
              lane_center_y - 0.5 * b.lane_width,
              lane_center_y + 0.5 * b.lane_width};
}

// One future step of the cut-in evaluation: where the remote vehicle is
// predicted to be (an uncertainty-inflated rectangle) and how much of that
// rectangle falls inside the bad set at the same instant.
struct CutinStep {
  Rect predicted;
  Rect bad;
  double ratio = 0.0;
};

struct CutinProbability {
  double pc = 0.0;      // max of per-step ratios
  int argmax = -1;      // 0-based step index attaining pc, -1 if no steps
  std::vector<CutinStep> steps;
};

// Evaluates the per-step overlap ratios and takes their maximum over the
// prediction window. `predicted` and `bad` must be the same length: entry k
// describes instant k+1 cycles ahead.
inline CutinProbability compute_pc(const std::vector<Rect>& predicted,
                                   const std::vector<Rect>& bad) {
  if (predicted.size() != bad.size()) {
    throw SchemaError("compute_pc: predicted and bad-set windows differ in "
                      "length");
  }
  CutinProbability out;
  out.steps.reserve(predicted.size());
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    CutinStep step;
    step.predicted = predicted[k];
    step.bad = bad[k];
    step.ratio = rect_intersection_ratio(predicted[k], bad[k]);
    if (step.ratio > out.pc) {
      out.pc = step.ratio;
      out.argmax = static_cast<int>(k);
    }
    out.steps.push_back(step);
  }
  if (out.argmax < 0 && !out.steps.empty()) out.argmax = 0;
  return out;
}

}  // namespace platoon::cutin
