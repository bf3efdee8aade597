#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "platoon/errors.hpp"
#include "platoon/nn.hpp"
#include "platoon/random.hpp"
#include "platoon/series.hpp"
#include "platoon/trace.hpp"

namespace platoon::predictor {

struct PredictorConfig {
  int delays = 15;
  int hidden = 20;
  int steps = 10;          // prediction horizon in samples
  double dt = 0.1;
  int history_window = 46;  // rolling record window kept per remote vehicle

  std::string long_target = "x";
  std::string lat_target = "y";
  std::vector<std::string> nar_channels = {"speed", "ax", "yaw_rate",
                                           "heading", "swa"};
  std::vector<std::string> narx_exo = {"speed", "ax", "yaw_rate", "heading"};
  std::vector<std::string> rnn_exo = {"swa", "yaw_rate", "heading"};

  double bounds_pad = 0.05;     // fractional widening of fitted bounds
  double calib_quantile = 0.90;
  double calib_floor = 0.05;    // m, lower limit on uncertainty half-widths
  int calib_stride = 2;         // anchor subsampling during calibration

  TrainingConfig nar_train{2000, 0.5, 0.9, 10, 15, 1};
  TrainingConfig narx_train{2000, 0.5, 0.9, 10, 15, 1};
  // The recurrent net improves slowly but steadily at this rate; a short
  // patience window trips on momentum overshoot long before convergence.
  TrainingConfig rnn_train{4000, 0.05, 0.9, 50, 15, 1};
};

// A recorded drive: one file's worth of gap-free segments.
struct Trace {
  std::string name;
  std::vector<std::vector<signals::TraceRecord>> segments;
};

struct PredictorBundle {
  PredictorConfig config;
  std::map<std::string, signals::NormBounds> bounds;
  std::map<std::string, DelayLineNet> nets;  // keyed nar_<ch>, narx_long, rnn_lat
  std::vector<double> q_long;  // per-step |error| quantiles, meters
  std::vector<double> q_lat;
  bool calibrated = false;
};

struct TrainSummary {
  std::map<std::string, TrainReport> reports;
};

// Future motion of one remote vehicle with per-step uncertainty
// half-widths, everything in road-frame meters.
struct PredictionFan {
  bool valid = false;
  std::vector<double> x;       // steps entries: instants +1..+steps
  std::vector<double> y;
  std::vector<double> half_x;  // calibration half-widths (no body size)
  std::vector<double> half_y;
  double body_len = 0.0;
  double body_width = 0.0;
};

namespace detail {

inline signals::SignalKind kind_from_name(const std::string& name) {
  using signals::SignalKind;
  static const std::map<std::string, SignalKind> table = {
      {"x", SignalKind::kX},           {"y", SignalKind::kY},
      {"elev", SignalKind::kElev},     {"speed", SignalKind::kSpeed},
      {"heading", SignalKind::kHeading}, {"swa", SignalKind::kSwa},
      {"yaw_rate", SignalKind::kYawRate}, {"ax", SignalKind::kAccelLong},
      {"ay", SignalKind::kAccelLat},   {"az", SignalKind::kAccelVert}};
  const auto it = table.find(name);
  if (it == table.end()) throw FormatError("unknown channel '" + name + "'");
  return it->second;
}

inline std::vector<std::string> required_channels(const PredictorConfig& cfg) {
  std::vector<std::string> out = {cfg.long_target, cfg.lat_target};
  auto add = [&out](const std::vector<std::string>& v) {
    for (const auto& c : v) {
      if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
    }
  };
  add(cfg.nar_channels);
  add(cfg.narx_exo);
  add(cfg.rnn_exo);
  return out;
}

// Position channels are normalized relative to the segment's first sample.
// The models only ever consume differences, which a translation leaves
// untouched, and anchoring keeps arbitrarily long drives inside the fitted
// normalization range (an absolute coordinate would run off it).
inline bool anchored_channel(signals::SignalKind kind) {
  return kind == signals::SignalKind::kX || kind == signals::SignalKind::kY;
}

inline void anchor_series(signals::SignalSeries& s) {
  if (s.values.empty()) return;
  const double a = s.values.front();
  for (double& v : s.values) v -= a;
}

// One segment taken through smooth -> normalize -> difference for every
// channel the bundle uses. last_value keeps the final smoothed physical
// sample per channel so predictions can be re-anchored to meters.
struct PipelineSegment {
  std::map<std::string, std::vector<double>> diffs;
  std::map<std::string, double> last_value;
  int n_diffs = 0;
};

inline PipelineSegment run_pipeline(
    const std::vector<signals::TraceRecord>& segment,
    const PredictorConfig& cfg,
    const std::map<std::string, signals::NormBounds>& bounds, bool clamp) {
  PipelineSegment out;
  for (const std::string& name : required_channels(cfg)) {
    const auto kind = kind_from_name(name);
    const auto bit = bounds.find(name);
    if (bit == bounds.end()) {
      throw SchemaError("pipeline: no normalization bounds for '" + name +
                        "'");
    }
    auto series = signals::extract_channel(segment, kind);
    series = signals::smooth(series, signals::default_smooth_threshold(kind));
    out.last_value[name] = series.values.back();
    if (anchored_channel(kind)) anchor_series(series);
    series = signals::normalize(series, bit->second, clamp);
    series = signals::difference(series);
    out.diffs[name] = series.values;
    out.n_diffs = static_cast<int>(series.values.size());
  }
  return out;
}

inline double denorm_diff(double d, signals::NormBounds b) {
  return d * 0.5 * (b.hi - b.lo);
}

// Window of `delays` values ending at index `end` inclusive, oldest first.
inline void copy_window_ending_at(const std::vector<double>& v, int end,
                                  int delays, double* dst) {
  for (int i = 0; i < delays; ++i) dst[i] = v[static_cast<std::size_t>(
      end - delays + 1 + i)];
}

}  // namespace detail

// Fits per-channel normalization bounds over every segment of the training
// traces.
inline std::map<std::string, signals::NormBounds> fit_channel_bounds(
    const std::vector<Trace>& traces, const PredictorConfig& cfg) {
  std::map<std::string, signals::NormBounds> out;
  for (const std::string& name : detail::required_channels(cfg)) {
    const auto kind = detail::kind_from_name(name);
    std::vector<signals::SignalSeries> smoothed;
    std::vector<const signals::SignalSeries*> ptrs;
    for (const Trace& tr : traces) {
      for (const auto& seg : tr.segments) {
        if (seg.size() < 2) continue;
        auto series = signals::extract_channel(seg, kind);
        series = signals::smooth(series,
                                 signals::default_smooth_threshold(kind));
        if (detail::anchored_channel(kind)) detail::anchor_series(series);
        smoothed.push_back(std::move(series));
      }
    }
    for (const auto& s : smoothed) ptrs.push_back(&s);
    out[name] = signals::fit_bounds(ptrs, cfg.bounds_pad);
  }
  return out;
}

// Deterministic trace-level split: shuffle indices with the seed, then cut
// 70/15/15. Every part gets at least one trace when possible.
struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

inline SplitIndices split_traces(std::size_t n, std::uint64_t seed) {
  if (n < 3) {
    throw InsufficientDataError("split_traces: need at least 3 traces");
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, 0x53504c4954ULL));
  rng.shuffle(idx);
  std::size_t n_train = static_cast<std::size_t>(std::round(0.70 * n));
  std::size_t n_val = static_cast<std::size_t>(std::round(0.15 * n));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 2);
  n_val = std::clamp<std::size_t>(n_val, 1, n - n_train - 1);
  SplitIndices s;
  s.train.assign(idx.begin(), idx.begin() + n_train);
  s.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
  s.test.assign(idx.begin() + n_train + n_val, idx.end());
  return s;
}

// Stratified variant: traces sharing a group label are split 70/15/15
// independently, so val and test carry the same maneuver mix as train.
// Calibration quantiles transfer to the test split only when the two are
// exchangeable; with a handful of traces per split, an unstratified draw can
// skew the maneuver share enough to push coverage out of band.
inline SplitIndices split_traces(const std::vector<std::string>& groups,
                                 std::uint64_t seed) {
  const std::size_t n = groups.size();
  if (n < 3) {
    throw InsufficientDataError("split_traces: need at least 3 traces");
  }
  std::map<std::string, std::vector<std::size_t>> by_group;
  for (std::size_t i = 0; i < n; ++i) by_group[groups[i]].push_back(i);
  SplitIndices s;
  Rng rng(derive_seed(seed, 0x53504c4954ULL));
  for (auto& [g, idx] : by_group) {
    rng.shuffle(idx);
    const std::size_t m = idx.size();
    std::size_t n_train = static_cast<std::size_t>(std::round(0.70 * m));
    std::size_t n_val = static_cast<std::size_t>(std::round(0.15 * m));
    if (m >= 3) {
      n_train = std::clamp<std::size_t>(n_train, 1, m - 2);
      n_val = std::clamp<std::size_t>(n_val, 1, m - n_train - 1);
    } else {
      n_train = m;  // tiny group: keep it all for training
      n_val = 0;
    }
    s.train.insert(s.train.end(), idx.begin(), idx.begin() + n_train);
    s.val.insert(s.val.end(), idx.begin() + n_train,
                 idx.begin() + n_train + n_val);
    s.test.insert(s.test.end(), idx.begin() + n_train + n_val, idx.end());
  }
  return s;
}

// Group label for stratification: the trace name minus a trailing _<number>
// counter, so "lane_change_17" and "lane_change_3" land in one stratum.
inline std::string trace_group(const std::string& name) {
  const auto pos = name.find_last_of('_');
  if (pos != std::string::npos && pos + 1 < name.size() &&
      std::all_of(name.begin() + static_cast<std::ptrdiff_t>(pos) + 1,
                  name.end(), [](unsigned char c) { return std::isdigit(c); })) {
    return name.substr(0, pos);
  }
  return name;
}

// Dataset builders. The layouts here are the single source of truth for the
// input wiring and are mirrored exactly by the iterated predictors below:
//  - nar:  inputs d[k-D..k-1], target d[k];
//  - narx: inputs d_t[k-D..k-1] then per exo channel d_c[k-D+1..k]
//          (exo windows end at the predicted instant), target d_t[k];
//  - rnn:  step input at t is the concatenation of d_c[t-D+1..t] per exo
//          channel, step target d_y[t], sequences starting at t = D-1.
inline Dataset build_nar_dataset(
    const std::vector<detail::PipelineSegment>& segs,
    const std::string& channel, int delays) {
  std::vector<Eigen::Index> counts;
  Eigen::Index total = 0;
  for (const auto& s : segs) {
    const Eigen::Index c =
        std::max(0, s.n_diffs - delays);
    counts.push_back(c);
    total += c;
  }
  Dataset d;
  d.X.resize(delays, total);
  d.y.resize(total);
  Eigen::Index col = 0;
  for (const auto& s : segs) {
    const auto& v = s.diffs.at(channel);
    for (int k = delays; k < s.n_diffs; ++k) {
      detail::copy_window_ending_at(v, k - 1, delays, d.X.col(col).data());
      d.y(col) = v[static_cast<std::size_t>(k)];
      ++col;
    }
  }
  return d;
}

inline Dataset build_narx_dataset(
    const std::vector<detail::PipelineSegment>& segs,
    const std::string& target, const std::vector<std::string>& exo,
    int delays) {
  const int in = delays * (1 + static_cast<int>(exo.size()));
  Eigen::Index total = 0;
  for (const auto& s : segs) total += std::max(0, s.n_diffs - delays);
  Dataset d;
  d.X.resize(in, total);
  d.y.resize(total);
  Eigen::Index col = 0;
  for (const auto& s : segs) {
    const auto& vt = s.diffs.at(target);
    for (int k = delays; k < s.n_diffs; ++k) {
      double* dst = d.X.col(col).data();
      detail::copy_window_ending_at(vt, k - 1, delays, dst);
      dst += delays;
      for (const auto& c : exo) {
        detail::copy_window_ending_at(s.diffs.at(c), k, delays, dst);
        dst += delays;
      }
      d.y(col) = vt[static_cast<std::size_t>(k)];
      ++col;
    }
  }
  return d;
}

inline SequenceDataset build_rnn_sequences(
    const std::vector<detail::PipelineSegment>& segs,
    const std::string& target, const std::vector<std::string>& exo,
    int delays) {
  const int in = delays * static_cast<int>(exo.size());
  SequenceDataset d;
  for (const auto& s : segs) {
    const int T = s.n_diffs - delays + 1;
    if (T <= 0) continue;
    Eigen::MatrixXd U(in, T);
    Eigen::RowVectorXd y(T);
    const auto& vy = s.diffs.at(target);
    for (int j = 0; j < T; ++j) {
      const int t = delays - 1 + j;
      double* dst = U.col(j).data();
      for (const auto& c : exo) {
        detail::copy_window_ending_at(s.diffs.at(c), t, delays, dst);
        dst += delays;
      }
      y(j) = vy[static_cast<std::size_t>(t)];
    }
    d.U.push_back(std::move(U));
    d.y.push_back(std::move(y));
  }
  return d;
}

namespace detail {

inline std::vector<PipelineSegment> prepare_traces(
    const std::vector<Trace>& traces, const PredictorConfig& cfg,
    const std::map<std::string, signals::NormBounds>& bounds, bool clamp,
    int min_records) {
  std::vector<PipelineSegment> out;
  for (const Trace& tr : traces) {
    for (const auto& seg : tr.segments) {
      if (static_cast<int>(seg.size()) < min_records) continue;
      out.push_back(run_pipeline(seg, cfg, bounds, clamp));
    }
  }
  return out;
}

}  // namespace detail

// Trains the whole net family: one autoregressive forecaster per exogenous
// channel, the longitudinal combiner, and the recurrent lateral net. Each
// net's seed derives from the root seed and the net's name, so results do
// not depend on scheduling; `jobs` only controls thread-level parallelism.
inline PredictorBundle train_bundle(const std::vector<Trace>& train_traces,
                                    const std::vector<Trace>& val_traces,
                                    const PredictorConfig& cfg,
                                    std::uint64_t seed, int jobs = 1,
                                    TrainSummary* summary = nullptr) {
  if (jobs < 1) jobs = 1;
  PredictorBundle bundle;
  bundle.config = cfg;
  bundle.bounds = fit_channel_bounds(train_traces, cfg);

  const int min_records = cfg.delays + 2;
  const auto train_segs = detail::prepare_traces(
      train_traces, cfg, bundle.bounds, false, min_records);
  const auto val_segs = detail::prepare_traces(
      val_traces, cfg, bundle.bounds, true, min_records);
  if (train_segs.empty() || val_segs.empty()) {
    throw InsufficientDataError("train_bundle: empty train or val corpus");
  }

  struct Job {
    std::string key;
    DelayLineNet net;
    TrainingConfig tcfg;
    Dataset train_d, val_d;            // feedforward kinds
    SequenceDataset train_s, val_s;    // rnn
    TrainReport report;
  };
  std::vector<Job> jobs_list;

  for (const auto& ch : cfg.nar_channels) {
    Job j;
    j.key = "nar_" + ch;
    j.net.kind = NetKind::kNar;
    j.net.delays = cfg.delays;
    j.net.hidden = cfg.hidden;
    j.net.target = ch;
    j.tcfg = cfg.nar_train;
    j.train_d = build_nar_dataset(train_segs, ch, cfg.delays);
    j.val_d = build_nar_dataset(val_segs, ch, cfg.delays);
    jobs_list.push_back(std::move(j));
  }
  {
    Job j;
    j.key = "narx_long";
    j.net.kind = NetKind::kNarx;
    j.net.delays = cfg.delays;
    j.net.hidden = cfg.hidden;
    j.net.target = cfg.long_target;
    j.net.exo = cfg.narx_exo;
    j.tcfg = cfg.narx_train;
    j.train_d = build_narx_dataset(train_segs, cfg.long_target, cfg.narx_exo,
                                   cfg.delays);
    j.val_d = build_narx_dataset(val_segs, cfg.long_target, cfg.narx_exo,
                                 cfg.delays);
    jobs_list.push_back(std::move(j));
  }
  {
    Job j;
    j.key = "rnn_lat";
    j.net.kind = NetKind::kRnn;
    j.net.delays = cfg.delays;
    j.net.hidden = cfg.hidden;
    j.net.target = cfg.lat_target;
    j.net.exo = cfg.rnn_exo;
    j.tcfg = cfg.rnn_train;
    j.train_s = build_rnn_sequences(train_segs, cfg.lat_target, cfg.rnn_exo,
                                    cfg.delays);
    j.val_s = build_rnn_sequences(val_segs, cfg.lat_target, cfg.rnn_exo,
                                  cfg.delays);
    jobs_list.push_back(std::move(j));
  }

  // Seeds keyed by name, not by position in the work queue.
  for (auto& j : jobs_list) {
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : j.key) h = (h ^ static_cast<unsigned char>(c)) *
                             1099511628211ULL;
    j.tcfg.seed = derive_seed(seed, h);
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs_list.size()) return;
      Job& j = jobs_list[i];
      if (j.net.kind == NetKind::kRnn) {
        j.report = train(j.net, j.train_s, j.val_s, j.tcfg);
      } else {
        j.report = train(j.net, j.train_d, j.val_d, j.tcfg);
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    const int n_threads = std::min<int>(jobs,
                                        static_cast<int>(jobs_list.size()));
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (auto& j : jobs_list) {
    if (summary != nullptr) summary->reports[j.key] = j.report;
    bundle.nets[j.key] = std::move(j.net);
  }
  bundle.q_long.assign(static_cast<std::size_t>(cfg.steps), cfg.calib_floor);
  bundle.q_lat.assign(static_cast<std::size_t>(cfg.steps), cfg.calib_floor);
  return bundle;
}

namespace detail {

// Shared iterated-prediction core: returns future differenced-normalized
// values for every needed channel plus the reconstructed physical fan.
struct RolledPrediction {
  std::map<std::string, std::vector<double>> future_diffs;  // exo + targets
  PredictionFan fan;
};

inline RolledPrediction roll_prediction(
    const PredictorBundle& bundle,
    const std::vector<signals::TraceRecord>& history) {
  const PredictorConfig& cfg = bundle.config;
  RolledPrediction out;
  if (static_cast<int>(history.size()) < cfg.delays + 2) return out;

  std::vector<signals::TraceRecord> window = history;
  if (static_cast<int>(window.size()) > cfg.history_window) {
    window.erase(window.begin(),
                 window.end() - cfg.history_window);
  }
  const PipelineSegment seg = run_pipeline(window, cfg, bundle.bounds, true);
  const int D = cfg.delays;
  const int S = cfg.steps;
  const int nd = seg.n_diffs;

  // Exogenous forecasts, one autoregressive net per channel.
  std::map<std::string, std::vector<double>> ext;  // history ++ future
  for (const auto& ch : cfg.nar_channels) {
    const DelayLineNet& net = bundle.nets.at("nar_" + ch);
    std::vector<double> v = seg.diffs.at(ch);
    Eigen::MatrixXd xin(D, 1);
    for (int j = 0; j < S; ++j) {
      copy_window_ending_at(v, static_cast<int>(v.size()) - 1, D,
                            xin.col(0).data());
      v.push_back(forward(net, xin)(0));
    }
    ext[ch] = std::move(v);
  }
  // Channels used as exo but not forecast hold their last value's diff at 0.
  for (const auto& ch : required_channels(cfg)) {
    if (ext.find(ch) == ext.end()) {
      std::vector<double> v = seg.diffs.at(ch);
      v.resize(static_cast<std::size_t>(nd + S), 0.0);
      ext[ch] = std::move(v);
    }
  }

  // Longitudinal combiner, iterated with exo windows ending at the
  // predicted instant.
  {
    const DelayLineNet& net = bundle.nets.at("narx_long");
    std::vector<double> vt = seg.diffs.at(cfg.long_target);
    Eigen::MatrixXd xin(net.input_size(), 1);
    for (int j = 1; j <= S; ++j) {
      double* dst = xin.col(0).data();
      copy_window_ending_at(vt, static_cast<int>(vt.size()) - 1, D, dst);
      dst += D;
      for (const auto& c : net.exo) {
        copy_window_ending_at(ext.at(c), nd - 1 + j, D, dst);
        dst += D;
      }
      vt.push_back(forward(net, xin)(0));
    }
    out.future_diffs[cfg.long_target] =
        std::vector<double>(vt.end() - S, vt.end());
  }

  // Lateral recurrent net: burn in the hidden state on the history, then
  // continue over the forecast exo inputs.
  {
    const DelayLineNet& net = bundle.nets.at("rnn_lat");
    const int in = net.input_size();
    const int t0 = D - 1;
    Eigen::VectorXd h = Eigen::VectorXd::Zero(net.hidden);
    if (nd - 1 >= t0) {
      Eigen::MatrixXd U(in, nd - t0);
      for (int t = t0; t < nd; ++t) {
        double* dst = U.col(t - t0).data();
        for (const auto& c : net.exo) {
          copy_window_ending_at(seg.diffs.at(c), t, D, dst);
          dst += D;
        }
      }
      forward_sequence(net, U, h, &h);
    }
    Eigen::MatrixXd U(in, S);
    for (int j = 1; j <= S; ++j) {
      double* dst = U.col(j - 1).data();
      for (const auto& c : net.exo) {
        copy_window_ending_at(ext.at(c), nd - 1 + j, D, dst);
        dst += D;
      }
    }
    const Eigen::RowVectorXd yhat = forward_sequence(net, U, h);
    out.future_diffs[cfg.lat_target].assign(yhat.data(), yhat.data() + S);
  }

  for (const auto& ch : cfg.nar_channels) {
    out.future_diffs[ch] =
        std::vector<double>(ext.at(ch).end() - S, ext.at(ch).end());
  }

  // Physical fan.
  out.fan.valid = true;
  out.fan.body_len = window.back().len;
  out.fan.body_width = window.back().width;
  const auto& bx = bundle.bounds.at(cfg.long_target);
  const auto& by = bundle.bounds.at(cfg.lat_target);
  double xacc = seg.last_value.at(cfg.long_target);
  double yacc = seg.last_value.at(cfg.lat_target);
  for (int j = 0; j < S; ++j) {
    xacc += denorm_diff(out.future_diffs.at(cfg.long_target)[
        static_cast<std::size_t>(j)], bx);
    yacc += denorm_diff(out.future_diffs.at(cfg.lat_target)[
        static_cast<std::size_t>(j)], by);
    out.fan.x.push_back(xacc);
    out.fan.y.push_back(yacc);
  }
  out.fan.half_x.assign(bundle.q_long.begin(), bundle.q_long.end());
  out.fan.half_y.assign(bundle.q_lat.begin(), bundle.q_lat.end());
  return out;
}

}  // namespace detail

// Forecasts the exogenous input channels over the horizon; returned values
// are physical units, reconstructed from the predicted differences.
inline std::map<std::string, std::vector<double>> predict_inputs(
    const PredictorBundle& bundle,
    const std::vector<signals::TraceRecord>& history) {
  const auto rolled = detail::roll_prediction(bundle, history);
  std::map<std::string, std::vector<double>> out;
  if (!rolled.fan.valid) return out;
  // last_value re-derivation mirrors roll_prediction's window handling.
  std::vector<signals::TraceRecord> window = history;
  if (static_cast<int>(window.size()) > bundle.config.history_window) {
    window.erase(window.begin(), window.end() - bundle.config.history_window);
  }
  const auto seg =
      detail::run_pipeline(window, bundle.config, bundle.bounds, true);
  for (const auto& ch : bundle.config.nar_channels) {
    const auto& b = bundle.bounds.at(ch);
    double acc = seg.last_value.at(ch);
    std::vector<double> vals;
    for (double d : rolled.future_diffs.at(ch)) {
      acc += detail::denorm_diff(d, b);
      vals.push_back(acc);
    }
    out[ch] = std::move(vals);
  }
  return out;
}

inline std::vector<double> predict_longitudinal(
    const PredictorBundle& bundle,
    const std::vector<signals::TraceRecord>& history) {
  const auto rolled = detail::roll_prediction(bundle, history);
  return rolled.fan.valid ? rolled.fan.x : std::vector<double>{};
}

inline std::vector<double> predict_lateral(
    const PredictorBundle& bundle,
    const std::vector<signals::TraceRecord>& history) {
  const auto rolled = detail::roll_prediction(bundle, history);
  return rolled.fan.valid ? rolled.fan.y : std::vector<double>{};
}

inline PredictionFan predict(const PredictorBundle& bundle,
                             const std::vector<signals::TraceRecord>& history) {
  return detail::roll_prediction(bundle, history).fan;
}

namespace detail {

// Collects per-step absolute prediction errors (meters, both axes) over all
// admissible anchors of the given traces.
inline void collect_errors(
    const PredictorBundle& bundle, const std::vector<Trace>& traces,
    std::vector<std::vector<double>>& err_long,
    std::vector<std::vector<double>>& err_lat) {
  const PredictorConfig& cfg = bundle.config;
  const int S = cfg.steps;
  const int min_hist = cfg.delays + 2;
  err_long.assign(static_cast<std::size_t>(S), {});
  err_lat.assign(static_cast<std::size_t>(S), {});
  const int stride = std::max(1, cfg.calib_stride);

  for (const Trace& tr : traces) {
    for (const auto& seg : tr.segments) {
      const int n = static_cast<int>(seg.size());
      for (int k = min_hist - 1; k + S < n; k += stride) {
        const int lo = std::max(0, k + 1 - cfg.history_window);
        const std::vector<signals::TraceRecord> hist(
            seg.begin() + lo, seg.begin() + k + 1);
        const PredictionFan fan = predict(bundle, hist);
        if (!fan.valid) continue;
        for (int j = 0; j < S; ++j) {
          const auto& truth = seg[static_cast<std::size_t>(k + 1 + j)];
          err_long[static_cast<std::size_t>(j)].push_back(
              std::abs(fan.x[static_cast<std::size_t>(j)] - truth.x));
          err_lat[static_cast<std::size_t>(j)].push_back(
              std::abs(fan.y[static_cast<std::size_t>(j)] - truth.y));
        }
      }
    }
  }
}

inline double nearest_rank_quantile(std::vector<double>& v, double q) {
  if (v.empty()) throw InsufficientDataError("quantile: no samples");
  std::sort(v.begin(), v.end());
  const std::size_t idx = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(v.size()))) - 1;
  return v[std::min(idx, v.size() - 1)];
}

}  // namespace detail

// Freezes per-step uncertainty half-widths from held-out traces: the
// configured |error| quantile per step and axis, forced non-decreasing in
// the step index and floored.
inline void calibrate(PredictorBundle& bundle,
                      const std::vector<Trace>& val_traces) {
  std::vector<std::vector<double>> el, ea;
  detail::collect_errors(bundle, val_traces, el, ea);
  const PredictorConfig& cfg = bundle.config;
  bundle.q_long.clear();
  bundle.q_lat.clear();
  double run_l = cfg.calib_floor;
  double run_a = cfg.calib_floor;
  for (int j = 0; j < cfg.steps; ++j) {
    run_l = std::max(run_l, detail::nearest_rank_quantile(
        el[static_cast<std::size_t>(j)], cfg.calib_quantile));
    run_a = std::max(run_a, detail::nearest_rank_quantile(
        ea[static_cast<std::size_t>(j)], cfg.calib_quantile));
    bundle.q_long.push_back(run_l);
    bundle.q_lat.push_back(run_a);
  }
  bundle.calibrated = true;
}

// Empirical per-axis coverage of the calibrated fan on unseen traces: for
// each axis, the fraction of (anchor, step) pairs where the true position
// falls inside the interval. A well-calibrated 90% band should land near
// 0.9 on both.
struct Coverage {
  double longitudinal = 0.0;
  double lateral = 0.0;
};

inline Coverage coverage(const PredictorBundle& bundle,
                         const std::vector<Trace>& test_traces) {
  if (!bundle.calibrated) throw SchemaError("coverage: bundle not calibrated");
  std::vector<std::vector<double>> el, ea;
  detail::collect_errors(bundle, test_traces, el, ea);
  std::size_t hit_l = 0, hit_a = 0;
  std::size_t total = 0;
  for (int j = 0; j < bundle.config.steps; ++j) {
    const auto& l = el[static_cast<std::size_t>(j)];
    const auto& a = ea[static_cast<std::size_t>(j)];
    for (std::size_t i = 0; i < l.size(); ++i) {
      ++total;
      if (l[i] <= bundle.q_long[static_cast<std::size_t>(j)]) ++hit_l;
      if (a[i] <= bundle.q_lat[static_cast<std::size_t>(j)]) ++hit_a;
    }
  }
  if (total == 0) throw InsufficientDataError("coverage: no test anchors");
  Coverage c;
  c.longitudinal = static_cast<double>(hit_l) / static_cast<double>(total);
  c.lateral = static_cast<double>(hit_a) / static_cast<double>(total);
  return c;
}

// Per-step root-mean-square prediction error in meters over all admissible
// anchors of the given traces.
struct StepErrors {
  std::vector<double> longitudinal, lateral;
};

inline StepErrors per_step_rmse(const PredictorBundle& bundle,
                                const std::vector<Trace>& traces) {
  std::vector<std::vector<double>> el, ea;
  detail::collect_errors(bundle, traces, el, ea);
  auto rms = [](const std::vector<double>& v) {
    if (v.empty()) throw InsufficientDataError("per_step_rmse: no anchors");
    double acc = 0.0;
    for (double e : v) acc += e * e;
    return std::sqrt(acc / static_cast<double>(v.size()));
  };
  StepErrors out;
  for (int j = 0; j < bundle.config.steps; ++j) {
    out.longitudinal.push_back(rms(el[static_cast<std::size_t>(j)]));
    out.lateral.push_back(rms(ea[static_cast<std::size_t>(j)]));
  }
  return out;
}

// ---- model (de)serialization ----

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return {};
  const Eigen::Index cols = static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw FormatError("model: ragged matrix");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
  }
  return m;
}

}  // namespace detail

inline nlohmann::json bundle_to_json(const PredictorBundle& bundle) {
  nlohmann::json j;
  j["format"] = "platoon-smpc-model";
  j["version"] = 1;
  const PredictorConfig& c = bundle.config;
  j["config"] = {
      {"delays", c.delays},
      {"hidden", c.hidden},
      {"steps", c.steps},
      {"dt", c.dt},
      {"history_window", c.history_window},
      {"long_target", c.long_target},
      {"lat_target", c.lat_target},
      {"nar_channels", c.nar_channels},
      {"narx_exo", c.narx_exo},
      {"rnn_exo", c.rnn_exo},
      {"bounds_pad", c.bounds_pad},
      {"calib_quantile", c.calib_quantile},
      {"calib_floor", c.calib_floor},
      {"calib_stride", c.calib_stride},
  };
  for (const auto& [name, b] : bundle.bounds) {
    j["bounds"][name] = {b.lo, b.hi};
  }
  for (const auto& [key, net] : bundle.nets) {
    nlohmann::json nj;
    nj["kind"] = net_kind_name(net.kind);
    nj["delays"] = net.delays;
    nj["hidden"] = net.hidden;
    nj["target"] = net.target;
    nj["exo"] = net.exo;
    nj["W1"] = detail::matrix_to_json(net.W1);
    nj["b1"] = detail::matrix_to_json(net.b1);
    if (net.Wr.size() > 0) nj["Wr"] = detail::matrix_to_json(net.Wr);
    nj["W2"] = detail::matrix_to_json(net.W2);
    nj["b2"] = net.b2;
    j["nets"][key] = std::move(nj);
  }
  j["calibration"] = {
      {"calibrated", bundle.calibrated},
      {"q_long", bundle.q_long},
      {"q_lat", bundle.q_lat},
  };
  return j;
}

inline PredictorBundle bundle_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "platoon-smpc-model") {
    throw FormatError("model: unrecognized format tag");
  }
  PredictorBundle b;
  const auto& c = j.at("config");
  b.config.delays = c.at("delays").get<int>();
  b.config.hidden = c.at("hidden").get<int>();
  b.config.steps = c.at("steps").get<int>();
  b.config.dt = c.at("dt").get<double>();
  b.config.history_window = c.at("history_window").get<int>();
  b.config.long_target = c.at("long_target").get<std::string>();
  b.config.lat_target = c.at("lat_target").get<std::string>();
  b.config.nar_channels =
      c.at("nar_channels").get<std::vector<std::string>>();
  b.config.narx_exo = c.at("narx_exo").get<std::vector<std::string>>();
  b.config.rnn_exo = c.at("rnn_exo").get<std::vector<std::string>>();
  b.config.bounds_pad = c.at("bounds_pad").get<double>();
  b.config.calib_quantile = c.at("calib_quantile").get<double>();
  b.config.calib_floor = c.at("calib_floor").get<double>();
  b.config.calib_stride = c.at("calib_stride").get<int>();
  for (const auto& [name, arr] : j.at("bounds").items()) {
    b.bounds[name] = signals::NormBounds{arr.at(0).get<double>(),
                                         arr.at(1).get<double>()};
  }
  for (const auto& [key, nj] : j.at("nets").items()) {
    DelayLineNet net;
    net.kind = net_kind_from(nj.at("kind").get<std::string>());
    net.delays = nj.at("delays").get<int>();
    net.hidden = nj.at("hidden").get<int>();
    net.target = nj.at("target").get<std::string>();
    net.exo = nj.at("exo").get<std::vector<std::string>>();
    net.W1 = detail::matrix_from_json(nj.at("W1"));
    net.b1 = detail::matrix_from_json(nj.at("b1"));
    if (nj.contains("Wr")) net.Wr = detail::matrix_from_json(nj.at("Wr"));
    net.W2 = detail::matrix_from_json(nj.at("W2"));
    net.b2 = nj.at("b2").get<double>();
    if (net.W1.rows() != net.hidden || net.W1.cols() != net.input_size()) {
      throw SchemaError("model: net '" + key + "' has inconsistent shapes");
    }
    b.nets[key] = std::move(net);
  }
  const auto& cal = j.at("calibration");
  b.calibrated = cal.at("calibrated").get<bool>();
  b.q_long = cal.at("q_long").get<std::vector<double>>();
  b.q_lat = cal.at("q_lat").get<std::vector<double>>();
  return b;
}

}  // namespace platoon::predictor
