#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "platoon/errors.hpp"
#include "platoon/trace.hpp"

namespace platoon::signals {

// Preprocessing advances strictly through these stages. Every transform
// checks the stage of its input so a series can never skip a step or run a
// step twice.
enum class Stage { kRaw, kSmoothed, kNormalized, kDifferenced };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::kRaw: return "raw";
    case Stage::kSmoothed: return "smoothed";
    case Stage::kNormalized: return "normalized";
    case Stage::kDifferenced: return "differenced";
  }
  return "?";
}

// Channels extractable from a TraceRecord (time excluded; len/width are
// vehicle metadata, not signals).
enum class SignalKind {
  kX,
  kY,
  kElev,
  kSpeed,
  kHeading,
  kSwa,
  kYawRate,
  kAccelLong,
  kAccelLat,
  kAccelVert
};

inline const char* signal_name(SignalKind k) {
  switch (k) {
    case SignalKind::kX: return "x";
    case SignalKind::kY: return "y";
    case SignalKind::kElev: return "elev";
    case SignalKind::kSpeed: return "speed";
    case SignalKind::kHeading: return "heading";
    case SignalKind::kSwa: return "swa";
    case SignalKind::kYawRate: return "yaw_rate";
    case SignalKind::kAccelLong: return "ax";
    case SignalKind::kAccelLat: return "ay";
    case SignalKind::kAccelVert: return "az";
  }
  return "?";
}

struct NormBounds {
  double lo = 0.0;
  double hi = 0.0;
};

// A single named channel at a known pipeline stage. `bounds` is meaningful
// from kNormalized onward and records the min/max used for scaling.
struct SignalSeries {
  std::string name;
  double dt = 0.1;
  Stage stage = Stage::kRaw;
  std::vector<double> values;
  NormBounds bounds;
};

inline SignalSeries extract_channel(const std::vector<TraceRecord>& segment,
                                    SignalKind kind) {
  if (segment.size() < 2) {
    throw InsufficientDataError("extract_channel: segment needs >= 2 samples");
  }
  SignalSeries s;
  s.name = signal_name(kind);
  s.dt = segment[1].t - segment[0].t;
  s.stage = Stage::kRaw;
  s.values.reserve(segment.size());
  for (const TraceRecord& r : segment) {
    switch (kind) {
      case SignalKind::kX: s.values.push_back(r.x); break;
      case SignalKind::kY: s.values.push_back(r.y); break;
      case SignalKind::kElev: s.values.push_back(r.elev); break;
      case SignalKind::kSpeed: s.values.push_back(r.speed); break;
      case SignalKind::kHeading: s.values.push_back(r.heading); break;
      case SignalKind::kSwa: s.values.push_back(r.swa); break;
      case SignalKind::kYawRate: s.values.push_back(r.yaw_rate); break;
      case SignalKind::kAccelLong: s.values.push_back(r.ax); break;
      case SignalKind::kAccelLat: s.values.push_back(r.ay); break;
      case SignalKind::kAccelVert: s.values.push_back(r.az); break;
    }
  }
  return s;
}

// Sensor-specific dead-band widths. Channels listed at 0 pass through
// smoothing unchanged (position-like signals whose noise the models must
// see). swa is in degrees, the rest in SI units.
inline double default_smooth_threshold(SignalKind kind) {
  switch (kind) {
    case SignalKind::kSwa: return 3.0;
    case SignalKind::kHeading: return 0.1;
    case SignalKind::kSpeed: return 0.1;
    case SignalKind::kAccelLong: return 0.1;
    case SignalKind::kYawRate: return 0.1;
    default: return 0.0;
  }
}

namespace detail {

inline void require_stage(const SignalSeries& s, Stage expected,
                          const char* op) {
  if (s.stage != expected) {
    throw SchemaError(std::string(op) + ": series '" + s.name +
                      "' is at stage " + stage_name(s.stage) + ", expected " +
                      stage_name(expected));
  }
}

}  // namespace detail

// Dead-band hold: the output repeats its held value until the input moves
// more than `threshold` away from it, then snaps to the input. threshold <= 0
// passes the signal through unchanged. Either way the stage advances.
inline SignalSeries smooth(const SignalSeries& s, double threshold) {
  detail::require_stage(s, Stage::kRaw, "smooth");
  SignalSeries out = s;
  out.stage = Stage::kSmoothed;
  if (threshold <= 0.0 || s.values.size() < 2) return out;
  double held = s.values.front();
  for (std::size_t k = 1; k < out.values.size(); ++k) {
    if (std::abs(s.values[k] - held) >= threshold) held = s.values[k];
    out.values[k] = held;
  }
  return out;
}

// Affine map of [lo, hi] onto [-1, +1]. With clamp set, out-of-range inputs
// (unseen at fit time) are limited to [-1.05, +1.05] so a single outlier
// cannot blow up downstream model inputs.
inline SignalSeries normalize(const SignalSeries& s, NormBounds bounds,
                              bool clamp = false) {
  detail::require_stage(s, Stage::kSmoothed, "normalize");
  if (!(bounds.hi > bounds.lo)) {
    throw ConfigError("normalize: bounds must satisfy hi > lo for '" + s.name +
                      "'");
  }
  SignalSeries out = s;
  out.stage = Stage::kNormalized;
  out.bounds = bounds;
  const double scale = 2.0 / (bounds.hi - bounds.lo);
  for (double& v : out.values) {
    v = (v - bounds.lo) * scale - 1.0;
    if (clamp) v = std::clamp(v, -1.05, 1.05);
  }
  return out;
}

inline SignalSeries denormalize(const SignalSeries& s) {
  detail::require_stage(s, Stage::kNormalized, "denormalize");
  SignalSeries out = s;
  out.stage = Stage::kSmoothed;
  const double half_span = 0.5 * (s.bounds.hi - s.bounds.lo);
  for (double& v : out.values) {
    v = s.bounds.lo + (v + 1.0) * half_span;
  }
  return out;
}

inline double denormalize_value(double v, NormBounds bounds) {
  return bounds.lo + (v + 1.0) * 0.5 * (bounds.hi - bounds.lo);
}

inline double normalize_value(double v, NormBounds bounds, bool clamp = false) {
  double out = (v - bounds.lo) * 2.0 / (bounds.hi - bounds.lo) - 1.0;
  if (clamp) out = std::clamp(out, -1.05, 1.05);
  return out;
}

// First difference, one sample shorter than the input.
inline SignalSeries difference(const SignalSeries& s) {
  detail::require_stage(s, Stage::kNormalized, "difference");
  if (s.values.size() < 2) {
    throw InsufficientDataError("difference: series '" + s.name +
                                "' needs >= 2 samples");
  }
  SignalSeries out;
  out.name = s.name;
  out.dt = s.dt;
  out.stage = Stage::kDifferenced;
  out.bounds = s.bounds;
  out.values.resize(s.values.size() - 1);
  for (std::size_t k = 0; k + 1 < s.values.size(); ++k) {
    out.values[k] = s.values[k + 1] - s.values[k];
  }
  return out;
}

// Cumulative sum anchored at `anchor`, inverse of difference: the result has
// one more sample than the input and starts at the anchor value.
inline SignalSeries reconstruct(const SignalSeries& s, double anchor) {
  detail::require_stage(s, Stage::kDifferenced, "reconstruct");
  SignalSeries out;
  out.name = s.name;
  out.dt = s.dt;
  out.stage = Stage::kNormalized;
  out.bounds = s.bounds;
  out.values.resize(s.values.size() + 1);
  out.values[0] = anchor;
  for (std::size_t k = 0; k < s.values.size(); ++k) {
    out.values[k + 1] = out.values[k] + s.values[k];
  }
  return out;
}

// Min/max over a set of series (used to freeze normalization bounds on a
// training corpus). Padding widens the range slightly so values at the edge
// of the corpus do not map exactly onto +/-1.
inline NormBounds fit_bounds(const std::vector<const SignalSeries*>& series,
                             double pad_fraction = 0.0) {
  bool any = false;
  NormBounds b{0.0, 0.0};
  for (const SignalSeries* s : series) {
    for (double v : s->values) {
      if (!any) {
        b.lo = b.hi = v;
        any = true;
      } else {
        b.lo = std::min(b.lo, v);
        b.hi = std::max(b.hi, v);
      }
    }
  }
  if (!any) throw InsufficientDataError("fit_bounds: no samples");
  if (b.hi - b.lo < 1e-12) {
    // Flat channel: open up a unit window so normalize stays well-defined.
    b.lo -= 0.5;
    b.hi += 0.5;
  }
  const double pad = pad_fraction * (b.hi - b.lo);
  b.lo -= pad;
  b.hi += pad;
  return b;
}

}  // namespace platoon::signals
