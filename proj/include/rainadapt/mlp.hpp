#pragma once

// Feed-forward regressor with two relu hidden layers and a linear output
// node, hand-written backpropagation, adaptive-moment updates, source
// training and weighted joint source+target adaptation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "rainadapt/common.hpp"
#include "rainadapt/dataset.hpp"

namespace rainadapt {

struct MlpSpec {
  std::size_t input_dim = kFeatureDim;
  std::array<std::size_t, 2> hidden_dims = {64, 32};
  std::uint64_t seed = 0;
};

inline void validate_mlp_spec(const MlpSpec& spec) {
  if (spec.input_dim < 1) throw ConfigError("input_dim must be >= 1");
  if (spec.hidden_dims[0] < 1 || spec.hidden_dims[1] < 1)
    throw ConfigError("hidden dims must be >= 1");
}

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 200;
  std::size_t patience = 20;
  std::uint64_t seed = 0;
};

inline void validate_train_config(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (cfg.patience > cfg.max_epochs)
    throw ConfigError("patience must not exceed max_epochs");
}

struct AdaptationConfig {
  double lambda1 = 0.5;  // weight on the source-batch loss
  double lambda2 = 0.5;  // weight on the target-batch loss
  TrainConfig train;
  bool warm_start = true;  // false re-initializes parameters (ablation)
};

inline void validate_adaptation_config(const AdaptationConfig& cfg) {
  if (cfg.lambda1 < 0.0 || cfg.lambda2 < 0.0)
    throw ConfigError("lambda weights must be non-negative");
  if (!(cfg.lambda1 + cfg.lambda2 > 0.0))
    throw ConfigError("lambda1 + lambda2 must be positive");
  validate_train_config(cfg.train);
}

// Per-layer gradient (or parameter delta); shapes mirror the model's.
struct MlpGradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
};

struct AdamState {
  std::vector<Matrix> m_w, v_w;
  std::vector<std::vector<double>> m_b, v_b;
  std::uint64_t step = 0;
};

struct Mlp {
  MlpSpec spec;
  std::vector<Matrix> weights;              // (h1 x in), (h2 x h1), (1 x h2)
  std::vector<std::vector<double>> biases;  // h1, h2, 1
  AdamState opt;

  void reset_optimizer() {
    opt = AdamState{};
    opt.m_w.clear();
    opt.v_w.clear();
    opt.m_b.clear();
    opt.v_b.clear();
    for (const auto& w : weights) {
      opt.m_w.emplace_back(w.rows(), w.cols());
      opt.v_w.emplace_back(w.rows(), w.cols());
    }
    for (const auto& b : biases) {
      opt.m_b.emplace_back(b.size(), 0.0);
      opt.v_b.emplace_back(b.size(), 0.0);
    }
  }
};

// Seeded scaled-uniform initialization with bound sqrt(6/fan_in); zero biases.
inline Mlp init_mlp(const MlpSpec& spec) {
  validate_mlp_spec(spec);
  Mlp m;
  m.spec = spec;
  const std::size_t dims[4] = {spec.input_dim, spec.hidden_dims[0],
                               spec.hidden_dims[1], 1};
  std::mt19937_64 rng(spec.seed);
  for (int layer = 0; layer < 3; ++layer) {
    const std::size_t fan_in = dims[layer];
    const std::size_t fan_out = dims[layer + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    Matrix w(fan_out, fan_in);
    for (std::size_t i = 0; i < fan_out; ++i)
      for (std::size_t j = 0; j < fan_in; ++j) w(i, j) = uniform(rng);
    m.weights.push_back(std::move(w));
    m.biases.emplace_back(fan_out, 0.0);
  }
  m.reset_optimizer();
  return m;
}

namespace detail {

inline double relu(double z) { return z > 0.0 ? z : 0.0; }

struct ForwardPass {
  Matrix z1, a1;  // batch x h1
  Matrix z2, a2;  // batch x h2
  std::vector<double> pred;
};

inline ForwardPass forward_pass(const Mlp& m, const Matrix& x) {
  const std::size_t n = x.rows();
  const std::size_t h1 = m.spec.hidden_dims[0];
  const std::size_t h2 = m.spec.hidden_dims[1];
  ForwardPass fp;
  fp.z1 = Matrix(n, h1);
  fp.a1 = Matrix(n, h1);
  fp.z2 = Matrix(n, h2);
  fp.a2 = Matrix(n, h2);
  fp.pred.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < h1; ++j) {
      double s = m.biases[0][j];
      for (std::size_t k = 0; k < m.spec.input_dim; ++k)
        s += m.weights[0](j, k) * x(i, k);
      fp.z1(i, j) = s;
      fp.a1(i, j) = relu(s);
    }
    for (std::size_t j = 0; j < h2; ++j) {
      double s = m.biases[1][j];
      for (std::size_t k = 0; k < h1; ++k)
        s += m.weights[1](j, k) * fp.a1(i, k);
      fp.z2(i, j) = s;
      fp.a2(i, j) = relu(s);
    }
    double s = m.biases[2][0];
    for (std::size_t k = 0; k < h2; ++k) s += m.weights[2](0, k) * fp.a2(i, k);
    fp.pred[i] = s;
  }
  return fp;
}

}  // namespace detail

inline double forward(const Mlp& m, std::span<const double> x) {
  if (x.size() != m.spec.input_dim)
    throw DimensionMismatch("forward: input has " + std::to_string(x.size()) +
                            " entries, model expects " +
                            std::to_string(m.spec.input_dim));
  Matrix row(1, x.size());
  std::copy(x.begin(), x.end(), row.data().begin());
  return detail::forward_pass(m, row).pred[0];
}

inline std::vector<double> forward_batch(const Mlp& m, const Matrix& x) {
  if (x.cols() != m.spec.input_dim)
    throw DimensionMismatch("forward_batch: feature dim mismatch");
  return detail::forward_pass(m, x).pred;
}

inline double mse_loss(std::span<const double> pred,
                       std::span<const double> truth) {
  if (pred.size() != truth.size())
    throw DimensionMismatch("mse_loss: length mismatch");
  if (pred.empty()) throw EmptyInput("mse_loss: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

struct BackwardResult {
  MlpGradients grads;
  double loss = 0.0;
};

// Exact analytic gradient of mse_loss over the batch.
inline BackwardResult backward(const Mlp& m, const Matrix& x,
                               std::span<const double> y) {
  if (x.cols() != m.spec.input_dim)
    throw DimensionMismatch("backward: feature dim mismatch");
  if (x.rows() != y.size())
    throw DimensionMismatch("backward: batch row count mismatch");
  if (x.rows() == 0) throw EmptyInput("backward: empty batch");

  const std::size_t n = x.rows();
  const std::size_t h1 = m.spec.hidden_dims[0];
  const std::size_t h2 = m.spec.hidden_dims[1];
  const auto fp = detail::forward_pass(m, x);

  BackwardResult out;
  out.grads.weights = {Matrix(h1, m.spec.input_dim), Matrix(h2, h1),
                       Matrix(1, h2)};
  out.grads.biases = {std::vector<double>(h1, 0.0),
                      std::vector<double>(h2, 0.0),
                      std::vector<double>(1, 0.0)};

  std::vector<double> dz2(h2), dz1(h1);
  for (std::size_t i = 0; i < n; ++i) {
    const double residual = fp.pred[i] - y[i];
    out.loss += residual * residual;
    const double dpred = 2.0 * residual / static_cast<double>(n);

    // output layer
    out.grads.biases[2][0] += dpred;
    for (std::size_t k = 0; k < h2; ++k)
      out.grads.weights[2](0, k) += dpred * fp.a2(i, k);

    // second hidden layer
    for (std::size_t j = 0; j < h2; ++j)
      dz2[j] = fp.z2(i, j) > 0.0 ? dpred * m.weights[2](0, j) : 0.0;
    for (std::size_t j = 0; j < h2; ++j) {
      if (dz2[j] == 0.0) continue;
      out.grads.biases[1][j] += dz2[j];
      for (std::size_t k = 0; k < h1; ++k)
        out.grads.weights[1](j, k) += dz2[j] * fp.a1(i, k);
    }

    // first hidden layer
    for (std::size_t j = 0; j < h1; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < h2; ++k)
        s += dz2[k] * m.weights[1](k, j);
      dz1[j] = fp.z1(i, j) > 0.0 ? s : 0.0;
    }
    for (std::size_t j = 0; j < h1; ++j) {
      if (dz1[j] == 0.0) continue;
      out.grads.biases[0][j] += dz1[j];
      for (std::size_t k = 0; k < m.spec.input_dim; ++k)
        out.grads.weights[0](j, k) += dz1[j] * x(i, k);
    }
  }
  out.loss /= static_cast<double>(n);
  return out;
}

// lambda1 * a + lambda2 * b, elementwise: the combined adaptation gradient.
inline MlpGradients combine_gradients(double lambda1, const MlpGradients& a,
                                      double lambda2, const MlpGradients& b) {
  MlpGradients out = a;
  for (std::size_t l = 0; l < out.weights.size(); ++l) {
    auto& w = out.weights[l].data();
    const auto& wb = b.weights[l].data();
    for (std::size_t i = 0; i < w.size(); ++i)
      w[i] = lambda1 * w[i] + lambda2 * wb[i];
    for (std::size_t i = 0; i < out.biases[l].size(); ++i)
      out.biases[l][i] =
          lambda1 * out.biases[l][i] + lambda2 * b.biases[l][i];
  }
  return out;
}

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

// Bias-corrected adaptive-moment update, in place.
inline void optimizer_step(Mlp& m, const MlpGradients& grads,
                           const TrainConfig& cfg) {
  for (const auto& w : grads.weights)
    for (double g : w.data())
      if (!std::isfinite(g)) throw NonFiniteGradient("non-finite weight gradient");
  for (const auto& b : grads.biases)
    for (double g : b)
      if (!std::isfinite(g)) throw NonFiniteGradient("non-finite bias gradient");

  auto& opt = m.opt;
  opt.step += 1;
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(opt.step));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(opt.step));

  auto update = [&](double& param, double& mom, double& vel, double g) {
    mom = kAdamBeta1 * mom + (1.0 - kAdamBeta1) * g;
    vel = kAdamBeta2 * vel + (1.0 - kAdamBeta2) * g * g;
    const double m_hat = mom / c1;
    const double v_hat = vel / c2;
    param -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + kAdamEps);
    if (!std::isfinite(param))
      throw NumericError("parameter became non-finite");
  };

  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    auto& w = m.weights[l].data();
    const auto& g = grads.weights[l].data();
    if (w.size() != g.size())
      throw DimensionMismatch("optimizer_step: gradient shape mismatch");
    auto& mom = opt.m_w[l].data();
    auto& vel = opt.v_w[l].data();
    for (std::size_t i = 0; i < w.size(); ++i)
      update(w[i], mom[i], vel[i], g[i]);

    auto& b = m.biases[l];
    const auto& gb = grads.biases[l];
    if (b.size() != gb.size())
      throw DimensionMismatch("optimizer_step: bias gradient shape mismatch");
    for (std::size_t i = 0; i < b.size(); ++i)
      update(b[i], opt.m_b[l][i], opt.v_b[l][i], gb[i]);
  }
}

// Loss trace of one epoch: source/target components, their weighted total,
// and the held-out loss steering early stopping.
struct EpochLoss {
  double source = 0.0;
  double target = 0.0;
  double total = 0.0;
  double validation = 0.0;

  bool operator==(const EpochLoss&) const = default;
};

struct TrainReport {
  std::vector<EpochLoss> trace;
  std::size_t best_epoch = 0;
  double final_validation = std::numeric_limits<double>::infinity();
};

namespace detail {

// Shuffles [0, n) once per epoch and cuts consecutive batches.
inline std::vector<std::vector<std::size_t>> epoch_batches(
    std::size_t n, std::size_t batch_size, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(start + batch_size, n);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

// Endless shuffled pass over [0, n); reshuffles when exhausted. Used for the
// target stream during adaptation, where batch counts follow the source.
class CyclicSampler {
 public:
  CyclicSampler(std::size_t n, std::uint64_t seed) : rng_(seed), order_(n) {
    std::iota(order_.begin(), order_.end(), 0);
    std::shuffle(order_.begin(), order_.end(), rng_);
  }

  std::vector<std::size_t> next(std::size_t count) {
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
      if (cursor_ == order_.size()) {
        std::shuffle(order_.begin(), order_.end(), rng_);
        cursor_ = 0;
      }
      out.push_back(order_[cursor_++]);
    }
    return out;
  }

 private:
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

inline Matrix gather_rows(const Matrix& src,
                          std::span<const std::size_t> rows) {
  Matrix out(rows.size(), src.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < src.cols(); ++c) out(i, c) = src(rows[i], c);
  return out;
}

inline std::vector<double> gather(const std::vector<double>& src,
                                  std::span<const std::size_t> rows) {
  std::vector<double> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = src[rows[i]];
  return out;
}

struct ParamSnapshot {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
};

inline ParamSnapshot snapshot(const Mlp& m) { return {m.weights, m.biases}; }

inline void restore(Mlp& m, const ParamSnapshot& s) {
  m.weights = s.weights;
  m.biases = s.biases;
}

}  // namespace detail

// Both seeds below are stream-derived so that adaptation with lambda2 = 0 and
// an equal seed walks the exact same source-batch schedule as train_source.
inline constexpr std::uint64_t kSourceStream = 0;
inline constexpr std::uint64_t kTargetStream = 1;

// Mini-batch training under the mean-square-error objective with early
// stopping on validation loss; returns the parameters of the best epoch.
inline std::pair<Mlp, TrainReport> train_source(Mlp m, const Dataset& train,
                                                const Dataset& val,
                                                const TrainConfig& cfg) {
  validate_train_config(cfg);
  if (train.n() == 0 || val.n() == 0)
    throw EmptyInput("train_source: empty dataset");
  if (train.feature_dim() != m.spec.input_dim ||
      val.feature_dim() != m.spec.input_dim)
    throw DimensionMismatch("train_source: feature dim mismatch");

  m.reset_optimizer();
  TrainReport report;
  std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, kSourceStream));

  double best_val = std::numeric_limits<double>::infinity();
  auto best = detail::snapshot(m);
  std::size_t stale = 0;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto batches =
        detail::epoch_batches(train.n(), cfg.batch_size, shuffle_rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (const auto& batch : batches) {
      const Matrix xb = detail::gather_rows(train.features(), batch);
      const auto yb = detail::gather(train.targets(), batch);
      auto bw = backward(m, xb, yb);
      optimizer_step(m, bw.grads, cfg);
      loss_sum += bw.loss * static_cast<double>(batch.size());
      seen += batch.size();
    }
    const double train_loss = loss_sum / static_cast<double>(seen);
    const double val_loss = mse_loss(forward_batch(m, val.features()),
                                     val.targets());
    report.trace.push_back({train_loss, 0.0, train_loss, val_loss});

    if (val_loss < best_val) {
      best_val = val_loss;
      best = detail::snapshot(m);
      report.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }

  detail::restore(m, best);
  report.final_validation = best_val;
  return {std::move(m), std::move(report)};
}

// Joint adaptation: each step pairs one source batch with one target batch
// and descends lambda1 * L_src + lambda2 * L_tgt. Early stopping watches the
// target adaptation-split loss.
inline std::pair<Mlp, TrainReport> adapt(Mlp m, const Dataset& src_train,
                                         const Dataset& tgt_adapt,
                                         const AdaptationConfig& cfg) {
  validate_adaptation_config(cfg);
  if (src_train.n() == 0 || tgt_adapt.n() == 0)
    throw EmptyInput("adapt: empty dataset");
  if (src_train.feature_dim() != m.spec.input_dim ||
      tgt_adapt.feature_dim() != m.spec.input_dim)
    throw DimensionMismatch("adapt: feature dim mismatch");

  if (!cfg.warm_start) m = init_mlp(m.spec);
  m.reset_optimizer();

  TrainReport report;
  std::mt19937_64 src_rng(mix_seed(cfg.train.seed, kSourceStream));
  detail::CyclicSampler tgt_sampler(tgt_adapt.n(),
                                    mix_seed(cfg.train.seed, kTargetStream));

  double best_val = std::numeric_limits<double>::infinity();
  auto best = detail::snapshot(m);
  std::size_t stale = 0;

  for (std::size_t epoch = 0; epoch < cfg.train.max_epochs; ++epoch) {
    const auto src_batches =
        detail::epoch_batches(src_train.n(), cfg.train.batch_size, src_rng);
    double src_sum = 0.0, tgt_sum = 0.0;
    for (const auto& src_batch : src_batches) {
      const Matrix xs = detail::gather_rows(src_train.features(), src_batch);
      const auto ys = detail::gather(src_train.targets(), src_batch);
      const auto tgt_batch = tgt_sampler.next(cfg.train.batch_size);
      const Matrix xt = detail::gather_rows(tgt_adapt.features(), tgt_batch);
      const auto yt = detail::gather(tgt_adapt.targets(), tgt_batch);

      auto bws = backward(m, xs, ys);
      auto bwt = backward(m, xt, yt);
      const auto combined =
          combine_gradients(cfg.lambda1, bws.grads, cfg.lambda2, bwt.grads);
      optimizer_step(m, combined, cfg.train);
      src_sum += bws.loss;
      tgt_sum += bwt.loss;
    }
    const double n_batches = static_cast<double>(src_batches.size());
    const double l_src = src_sum / n_batches;
    const double l_tgt = tgt_sum / n_batches;
    const double l_total = cfg.lambda1 * l_src + cfg.lambda2 * l_tgt;
    const double val_loss = mse_loss(forward_batch(m, tgt_adapt.features()),
                                     tgt_adapt.targets());
    report.trace.push_back({l_src, l_tgt, l_total, val_loss});

    if (val_loss < best_val) {
      best_val = val_loss;
      best = detail::snapshot(m);
      report.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.train.patience) {
      break;
    }
  }

  detail::restore(m, best);
  report.final_validation = best_val;
  return {std::move(m), std::move(report)};
}

}  // namespace rainadapt
