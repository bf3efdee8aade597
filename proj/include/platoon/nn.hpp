#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "platoon/errors.hpp"
#include "platoon/random.hpp"

namespace platoon::predictor {

enum class NetKind { kNar, kNarx, kRnn };

inline const char* net_kind_name(NetKind k) {
  switch (k) {
    case NetKind::kNar: return "nar";
    case NetKind::kNarx: return "narx";
    case NetKind::kRnn: return "rnn";
  }
  return "?";
}

inline NetKind net_kind_from(const std::string& s) {
  if (s == "nar") return NetKind::kNar;
  if (s == "narx") return NetKind::kNarx;
  if (s == "rnn") return NetKind::kRnn;
  throw FormatError("unknown net kind '" + s + "'");
}

// One-hidden-layer tanh network over tapped delay lines, in three wirings:
//  - nar:  inputs are `delays` past values of the target channel;
//  - narx: target delay line plus one `delays`-wide line per exogenous
//          channel (exo lines end at the prediction instant);
//  - rnn:  inputs are the exogenous delay lines only, with an additional
//          hidden-to-hidden recurrence (Elman).
// All signals are expected at the differenced-normalized stage.
struct DelayLineNet {
  NetKind kind = NetKind::kNar;
  int delays = 15;
  int hidden = 20;
  std::string target;
  std::vector<std::string> exo;

  Eigen::MatrixXd W1;     // hidden x input
  Eigen::VectorXd b1;     // hidden
  Eigen::MatrixXd Wr;     // hidden x hidden (rnn only, else 0x0)
  Eigen::RowVectorXd W2;  // 1 x hidden
  double b2 = 0.0;

  int input_size() const {
    switch (kind) {
      case NetKind::kNar: return delays;
      case NetKind::kNarx:
        return delays * (1 + static_cast<int>(exo.size()));
      case NetKind::kRnn: return delays * static_cast<int>(exo.size());
    }
    return 0;
  }

  // Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
  void init(Rng& rng) {
    const int in = input_size();
    if (in <= 0 || hidden <= 0) {
      throw ConfigError("DelayLineNet::init: empty layer");
    }
    const double r1 = 1.0 / std::sqrt(static_cast<double>(in));
    W1.resize(hidden, in);
    for (Eigen::Index i = 0; i < W1.size(); ++i) {
      W1.data()[i] = rng.uniform(-r1, r1);
    }
    b1 = Eigen::VectorXd::Zero(hidden);
    if (kind == NetKind::kRnn) {
      // Identity-dominant recurrence: each unit starts as a leaky integrator
      // of its input projection, with small cross-coupling for timescale
      // diversity. The lateral-position task is integration of sparse
      // steering increments; a contractive random reservoir forgets them
      // before they matter, and gradient descent through a 15-step BPTT
      // window cannot discover integration on its own.
      Wr = 0.95 * Eigen::MatrixXd::Identity(hidden, hidden);
      for (Eigen::Index i = 0; i < Wr.size(); ++i) {
        Wr.data()[i] += rng.uniform(-0.06, 0.06);
      }
    } else {
      Wr.resize(0, 0);
    }
    const double r2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    W2.resize(hidden);
    for (Eigen::Index i = 0; i < W2.size(); ++i) {
      W2.data()[i] = rng.uniform(-r2, r2);
    }
    b2 = 0.0;
  }
};

// Feedforward batch: columns of X are samples.
inline Eigen::RowVectorXd forward(const DelayLineNet& net,
                                  const Eigen::MatrixXd& X) {
  if (net.kind == NetKind::kRnn) {
    throw ConfigError("forward: use forward_sequence for rnn nets");
  }
  const Eigen::MatrixXd H =
      ((net.W1 * X).colwise() + net.b1).array().tanh().matrix();
  return (net.W2 * H).array() + net.b2;
}

// Recurrent forward over one sequence; columns of U are time steps. h0 is
// the incoming hidden state (zero at a segment start). h_out returns the
// final hidden state so callers can continue the sequence.
inline Eigen::RowVectorXd forward_sequence(const DelayLineNet& net,
                                           const Eigen::MatrixXd& U,
                                           const Eigen::VectorXd& h0,
                                           Eigen::VectorXd* h_out = nullptr) {
  if (net.kind != NetKind::kRnn) {
    throw ConfigError("forward_sequence: net is not recurrent");
  }
  const Eigen::Index T = U.cols();
  Eigen::VectorXd h = h0;
  Eigen::RowVectorXd y(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    h = (net.W1 * U.col(t) + net.Wr * h + net.b1).array().tanh();
    y(t) = net.W2.dot(h) + net.b2;
  }
  if (h_out != nullptr) *h_out = h;
  return y;
}

struct Dataset {
  Eigen::MatrixXd X;     // input x samples
  Eigen::RowVectorXd y;  // 1 x samples

  Eigen::Index size() const { return X.cols(); }
};

struct SequenceDataset {
  std::vector<Eigen::MatrixXd> U;      // per segment: input x T
  std::vector<Eigen::RowVectorXd> y;   // per segment: 1 x T

  Eigen::Index total_steps() const {
    Eigen::Index n = 0;
    for (const auto& s : y) n += s.size();
    return n;
  }
};

inline double mse(const DelayLineNet& net, const Dataset& d) {
  if (d.size() == 0) throw InsufficientDataError("mse: empty dataset");
  const Eigen::RowVectorXd e = forward(net, d.X) - d.y;
  return e.squaredNorm() / static_cast<double>(d.size());
}

inline double mse(const DelayLineNet& net, const SequenceDataset& d) {
  const Eigen::Index total = d.total_steps();
  if (total == 0) throw InsufficientDataError("mse: empty dataset");
  double acc = 0.0;
  for (std::size_t s = 0; s < d.U.size(); ++s) {
    const Eigen::RowVectorXd yhat =
        forward_sequence(net, d.U[s], Eigen::VectorXd::Zero(net.hidden));
    acc += (yhat - d.y[s]).squaredNorm();
  }
  return acc / static_cast<double>(total);
}

// Gradient of the dataset MSE with respect to all weights.
struct Gradients {
  Eigen::MatrixXd W1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd Wr;
  Eigen::RowVectorXd W2;
  double b2 = 0.0;

  void setZero(const DelayLineNet& net) {
    W1 = Eigen::MatrixXd::Zero(net.W1.rows(), net.W1.cols());
    b1 = Eigen::VectorXd::Zero(net.b1.size());
    Wr = Eigen::MatrixXd::Zero(net.Wr.rows(), net.Wr.cols());
    W2 = Eigen::RowVectorXd::Zero(net.W2.size());
    b2 = 0.0;
  }
};

inline Gradients gradients(const DelayLineNet& net, const Dataset& d) {
  const Eigen::Index S = d.size();
  if (S == 0) throw InsufficientDataError("gradients: empty dataset");
  const Eigen::MatrixXd H =
      ((net.W1 * d.X).colwise() + net.b1).array().tanh().matrix();
  const Eigen::RowVectorXd yhat = (net.W2 * H).array() + net.b2;
  const Eigen::RowVectorXd dy =
      (yhat - d.y) * (2.0 / static_cast<double>(S));
  Gradients g;
  g.setZero(net);
  g.W2 = dy * H.transpose();
  g.b2 = dy.sum();
  const Eigen::MatrixXd dz =
      (net.W2.transpose() * dy).cwiseProduct(
          (1.0 - H.array().square()).matrix());
  g.W1 = dz * d.X.transpose();
  g.b1 = dz.rowwise().sum();
  return g;
}

// Truncated-BPTT gradient: each segment is cut into windows of at most
// `window` steps; the hidden state flows forward across cuts but gradients
// do not flow back through them. Loss normalization matches mse().
inline Gradients gradients(const DelayLineNet& net, const SequenceDataset& d,
                           int window) {
  const Eigen::Index total = d.total_steps();
  if (total == 0) throw InsufficientDataError("gradients: empty dataset");
  if (window < 1) throw ConfigError("gradients: window must be >= 1");
  Gradients g;
  g.setZero(net);
  const double scale = 2.0 / static_cast<double>(total);

  for (std::size_t s = 0; s < d.U.size(); ++s) {
    const Eigen::MatrixXd& U = d.U[s];
    const Eigen::RowVectorXd& y = d.y[s];
    const Eigen::Index T = U.cols();
    Eigen::VectorXd h_carry = Eigen::VectorXd::Zero(net.hidden);

    for (Eigen::Index w0 = 0; w0 < T; w0 += window) {
      const Eigen::Index wlen = std::min<Eigen::Index>(window, T - w0);
      // Forward through the window, keeping every hidden state.
      Eigen::MatrixXd H(net.hidden, wlen);
      Eigen::VectorXd h = h_carry;
      for (Eigen::Index t = 0; t < wlen; ++t) {
        h = (net.W1 * U.col(w0 + t) + net.Wr * h + net.b1).array().tanh();
        H.col(t) = h;
      }
      // Backward within the window.
      Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(net.hidden);
      for (Eigen::Index t = wlen - 1; t >= 0; --t) {
        const double e = net.W2.dot(H.col(t)) + net.b2 - y(w0 + t);
        const double dy = scale * e;
        g.W2 += dy * H.col(t).transpose();
        g.b2 += dy;
        Eigen::VectorXd dh = net.W2.transpose() * dy + dh_next;
        const Eigen::VectorXd dz =
            dh.cwiseProduct((1.0 - H.col(t).array().square()).matrix());
        g.W1 += dz * U.col(w0 + t).transpose();
        g.b1 += dz;
        const Eigen::VectorXd h_prev =
            t == 0 ? h_carry : Eigen::VectorXd(H.col(t - 1));
        g.Wr += dz * h_prev.transpose();
        dh_next = net.Wr.transpose() * dz;
      }
      h_carry = H.col(wlen - 1);
    }
  }
  return g;
}

struct TrainingConfig {
  int max_epochs = 3000;
  double learning_rate = 0.5;
  double momentum = 0.9;
  int patience = 10;    // consecutive epochs of rising validation error
  int bptt_window = 15;
  std::uint64_t seed = 1;
};

struct TrainReport {
  int epochs = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;  // at the restored best weights
  bool early_stopped = false;
};

namespace detail {

struct Momentum {
  Eigen::MatrixXd W1, Wr;
  Eigen::VectorXd b1;
  Eigen::RowVectorXd W2;
  double b2 = 0.0;
};

inline void apply_update(DelayLineNet& net, detail::Momentum& v,
                         const Gradients& g, const TrainingConfig& cfg) {
  const double lr = cfg.learning_rate;
  const double mu = cfg.momentum;
  v.W1 = mu * v.W1 - lr * g.W1;
  v.b1 = mu * v.b1 - lr * g.b1;
  v.W2 = mu * v.W2 - lr * g.W2;
  v.b2 = mu * v.b2 - lr * g.b2;
  net.W1 += v.W1;
  net.b1 += v.b1;
  net.W2 += v.W2;
  net.b2 += v.b2;
  if (net.Wr.size() > 0) {
    v.Wr = mu * v.Wr - lr * g.Wr;
    net.Wr += v.Wr;
  }
}

inline Momentum zero_momentum(const DelayLineNet& net) {
  Momentum v;
  v.W1 = Eigen::MatrixXd::Zero(net.W1.rows(), net.W1.cols());
  v.b1 = Eigen::VectorXd::Zero(net.b1.size());
  v.Wr = Eigen::MatrixXd::Zero(net.Wr.rows(), net.Wr.cols());
  v.W2 = Eigen::RowVectorXd::Zero(net.W2.size());
  return v;
}

struct Snapshot {
  Eigen::MatrixXd W1, Wr;
  Eigen::VectorXd b1;
  Eigen::RowVectorXd W2;
  double b2 = 0.0;

  void take(const DelayLineNet& net) {
    W1 = net.W1; b1 = net.b1; Wr = net.Wr; W2 = net.W2; b2 = net.b2;
  }
  void restore(DelayLineNet& net) const {
    net.W1 = W1; net.b1 = b1; net.Wr = Wr; net.W2 = W2; net.b2 = b2;
  }
};

}  // namespace detail

// Full-batch gradient descent with momentum and best-weight early stopping:
// training halts once the validation error has risen for `patience`
// consecutive epochs, and the weights at the best validation epoch are
// restored. Works for both dataset flavors via the two overloads below.
template <typename TrainData, typename ValData, typename GradFn>
inline TrainReport train_loop(DelayLineNet& net, const TrainData& train,
                              const ValData& val, const TrainingConfig& cfg,
                              GradFn&& grad_fn) {
  detail::Momentum vel = detail::zero_momentum(net);
  detail::Snapshot best;
  best.take(net);
  double best_val = mse(net, val);
  double prev_val = best_val;
  int rising = 0;
  TrainReport rep;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const Gradients g = grad_fn(net, train);
    detail::apply_update(net, vel, g, cfg);
    rep.epochs = epoch;
    const double v = mse(net, val);
    if (v < best_val) {
      best_val = v;
      best.take(net);
    }
    rising = v > prev_val ? rising + 1 : 0;
    prev_val = v;
    if (rising >= cfg.patience) {
      rep.early_stopped = true;
      break;
    }
  }
  best.restore(net);
  rep.train_mse = mse(net, train);
  rep.val_mse = best_val;
  return rep;
}

inline TrainReport train(DelayLineNet& net, const Dataset& train_set,
                         const Dataset& val_set, const TrainingConfig& cfg) {
  Rng rng(cfg.seed);
  net.init(rng);
  return train_loop(net, train_set, val_set, cfg,
                    [](const DelayLineNet& n, const Dataset& d) {
                      return gradients(n, d);
                    });
}

inline TrainReport train(DelayLineNet& net, const SequenceDataset& train_set,
                         const SequenceDataset& val_set,
                         const TrainingConfig& cfg) {
  Rng rng(cfg.seed);
  net.init(rng);
  return train_loop(net, train_set, val_set, cfg,
                    [&cfg](const DelayLineNet& n, const SequenceDataset& d) {
                      return gradients(n, d, cfg.bptt_window);
                    });
}

}  // namespace platoon::predictor
