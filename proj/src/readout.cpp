#include "nrc/readout.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include <Eigen/SVD>

#include "nrc/binary_io.hpp"
#include "nrc/error.hpp"
#include "nrc/rng.hpp"

namespace nrc::readout {

namespace {

constexpr std::uint32_t kFormatVersion = 1;

void check_labels(std::span<const std::uint8_t> labels, Eigen::Index samples,
                  std::size_t classes) {
  if (static_cast<Eigen::Index>(labels.size()) != samples) {
    throw DataError("readout: " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(samples) + " state columns");
  }
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t] >= classes) {
      throw DataError("readout: label " + std::to_string(labels[t]) + " at index " +
                      std::to_string(t) + " is outside [0, " + std::to_string(classes) + ")");
    }
  }
}

// Column-wise softmax of `logits`, in place.
void softmax_columns(Eigen::MatrixXd& logits) {
  for (Eigen::Index t = 0; t < logits.cols(); ++t) {
    auto col = logits.col(t);
    col.array() -= col.maxCoeff();
    col = col.array().exp().matrix();
    col /= col.sum();
  }
}

}  // namespace

std::string to_string(ReadoutKind kind) {
  return kind == ReadoutKind::kLinear ? "linear" : "logistic";
}

ReadoutKind parse_readout_kind(const std::string& text) {
  if (text == "linear") return ReadoutKind::kLinear;
  if (text == "logistic") return ReadoutKind::kLogistic;
  throw UsageError("unknown readout kind '" + text + "' (valid: linear, logistic)");
}

Eigen::VectorXd ReadoutModel::scores(const Eigen::VectorXd& state) const {
  if (static_cast<std::size_t>(state.size()) != neurons()) {
    throw DataError("readout: state has " + std::to_string(state.size()) +
                    " entries, model expects " + std::to_string(neurons()));
  }
  if (kind == ReadoutKind::kLinear) return weights * state;
  Eigen::MatrixXd logits = weights * state + bias;
  softmax_columns(logits);
  return logits.col(0);
}

std::vector<std::uint8_t> ReadoutModel::serialize() const {
  io::ByteWriter out;
  out.put_tag("NROM");
  out.put_u32(kFormatVersion);
  out.put_u8(static_cast<std::uint8_t>(kind));
  out.put_u32(static_cast<std::uint32_t>(classes()));
  out.put_u32(static_cast<std::uint32_t>(neurons()));
  for (Eigen::Index k = 0; k < weights.rows(); ++k) {
    for (Eigen::Index i = 0; i < weights.cols(); ++i) out.put_f64(weights(k, i));
  }
  for (Eigen::Index k = 0; k < bias.size(); ++k) out.put_f64(bias[k]);
  return out.take();
}

ReadoutModel ReadoutModel::deserialize(std::span<const std::uint8_t> bytes) {
  io::ByteReader in(bytes, "model file");
  in.expect_tag("NROM");
  const std::uint32_t version = in.u32();
  if (version != kFormatVersion) {
    throw DataError("model file: unsupported version " + std::to_string(version));
  }
  const std::uint8_t kind = in.u8();
  if (kind > 1) throw DataError("model file: unknown readout kind " + std::to_string(kind));
  const std::uint32_t k = in.u32();
  const std::uint32_t n = in.u32();
  if (k < 2) throw DataError("model file: need at least 2 classes, found " + std::to_string(k));
  const std::uint64_t payload = (std::uint64_t{k} * n + k) * 8;
  if (payload != in.remaining()) {
    throw DataError("model file: expected " + std::to_string(payload) +
                    " payload bytes, found " + std::to_string(in.remaining()));
  }
  ReadoutModel m;
  m.kind = static_cast<ReadoutKind>(kind);
  m.weights.resize(k, n);
  for (Eigen::Index r = 0; r < m.weights.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.weights.cols(); ++c) m.weights(r, c) = in.f64();
  }
  m.bias.resize(k);
  for (Eigen::Index r = 0; r < m.bias.size(); ++r) m.bias[r] = in.f64();
  in.expect_end();
  if (!m.weights.allFinite() || !m.bias.allFinite()) {
    throw DataError("model file: non-finite weights");
  }
  return m;
}

LinearFit train_linear(const Eigen::MatrixXd& states, const Eigen::MatrixXd& targets) {
  const Eigen::Index n = states.rows();
  const Eigen::Index t = states.cols();
  if (t < 1 || n < 1) throw DataError("train_linear: empty state matrix");
  if (targets.cols() != t) {
    throw DataError("train_linear: " + std::to_string(targets.cols()) + " target columns for " +
                    std::to_string(t) + " state columns");
  }
  if (targets.rows() < 2) throw DataError("train_linear: need at least 2 output classes");
  if (!states.allFinite()) throw DataError("train_linear: non-finite state matrix");

  Eigen::JacobiSVD<Eigen::MatrixXd, Eigen::ColPivHouseholderQRPreconditioner> svd(
      states, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const double s_max = s.size() > 0 ? s[0] : 0.0;
  const double cutoff =
      static_cast<double>(std::max(n, t)) * s_max * std::numeric_limits<double>::epsilon();

  Eigen::Index rank = 0;
  while (rank < s.size() && s[rank] > 0.0 && s[rank] >= cutoff) ++rank;

  LinearFit fit;
  fit.model.kind = ReadoutKind::kLinear;
  fit.model.bias = Eigen::VectorXd::Zero(targets.rows());
  fit.rank = rank;
  fit.rank_deficient = rank < std::min(n, t);
  if (rank == 0) {
    fit.model.weights = Eigen::MatrixXd::Zero(targets.rows(), n);
    return fit;
  }
  // W = V * Vs_r * diag(1/s_r) * U_r^T
  Eigen::MatrixXd projected = targets * svd.matrixV().leftCols(rank);
  projected = projected * s.head(rank).cwiseInverse().asDiagonal();
  fit.model.weights = projected * svd.matrixU().leftCols(rank).transpose();
  return fit;
}

void LogisticHyperparams::validate() const {
  if (!(learning_rate > 0.0)) throw UsageError("logistic: learning rate must be positive");
  if (epochs < 1) throw UsageError("logistic: epochs must be at least 1");
  if (!(l2_lambda >= 0.0)) throw UsageError("logistic: l2_lambda must be non-negative");
  if (batch_size < 1) throw UsageError("logistic: batch size must be at least 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw UsageError("logistic: momentum must lie in [0, 1)");
  }
}

LossGradient logistic_loss_gradient(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                                    const Eigen::MatrixXd& states,
                                    std::span<const std::uint8_t> labels, double l2_lambda) {
  const auto classes = static_cast<std::size_t>(weights.rows());
  check_labels(labels, states.cols(), classes);
  if (states.cols() == 0) throw DataError("logistic: no samples");
  const double inv_t = 1.0 / static_cast<double>(states.cols());

  Eigen::MatrixXd probs = (weights * states).colwise() + bias;
  double loss = 0.0;
  for (Eigen::Index t = 0; t < probs.cols(); ++t) {
    auto col = probs.col(t);
    const double peak = col.maxCoeff();
    const double log_z = peak + std::log((col.array() - peak).exp().sum());
    loss -= col[labels[static_cast<std::size_t>(t)]] - log_z;
  }
  softmax_columns(probs);
  for (Eigen::Index t = 0; t < probs.cols(); ++t) probs(labels[static_cast<std::size_t>(t)], t) -= 1.0;

  LossGradient g;
  g.loss = loss * inv_t + 0.5 * l2_lambda * weights.squaredNorm();
  g.grad_weights = probs * states.transpose() * inv_t + l2_lambda * weights;
  g.grad_bias = probs.rowwise().sum() * inv_t;
  return g;
}

LogisticFit train_logistic(const Eigen::MatrixXd& states, std::span<const std::uint8_t> labels,
                           std::size_t classes, const LogisticHyperparams& hp) {
  hp.validate();
  if (classes < 2) throw UsageError("logistic: need at least 2 classes");
  if (states.cols() == 0) throw DataError("logistic: no training samples");
  if (!states.allFinite()) throw DataError("logistic: non-finite state matrix");
  check_labels(labels, states.cols(), classes);

  const Eigen::Index n = states.rows();
  const Eigen::Index t_count = states.cols();
  const auto k = static_cast<Eigen::Index>(classes);

  // Per-neuron standardisation; constant neurons keep unit scale.
  const Eigen::VectorXd mean = states.rowwise().mean();
  Eigen::VectorXd scale =
      ((states.colwise() - mean).array().square().rowwise().mean()).sqrt().matrix();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(scale[i] > 1e-12)) scale[i] = 1.0;
  }
  const Eigen::MatrixXd z =
      (states.colwise() - mean).array().colwise() / scale.array();

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(k, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(k);
  Eigen::MatrixXd vel_w = Eigen::MatrixXd::Zero(k, n);
  Eigen::VectorXd vel_b = Eigen::VectorXd::Zero(k);
  // Proximal L2 step sized so the fixed point is grad + l2 * W = 0 under momentum.
  const double shrink = 1.0 + hp.learning_rate * hp.l2_lambda / (1.0 - hp.momentum);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(t_count));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(hp.seed);
  std::vector<std::uint8_t> batch_labels;
  Eigen::MatrixXd batch;

  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (Eigen::Index start = 0; start < t_count; start += hp.batch_size) {
      const Eigen::Index len = std::min<Eigen::Index>(hp.batch_size, t_count - start);
      batch.resize(n, len);
      batch_labels.resize(static_cast<std::size_t>(len));
      for (Eigen::Index j = 0; j < len; ++j) {
        const Eigen::Index src = order[static_cast<std::size_t>(start + j)];
        batch.col(j) = z.col(src);
        batch_labels[static_cast<std::size_t>(j)] = labels[static_cast<std::size_t>(src)];
      }
      const LossGradient g = logistic_loss_gradient(w, b, batch, batch_labels, 0.0);
      epoch_loss += g.loss * static_cast<double>(len);
      vel_w = hp.momentum * vel_w + g.grad_weights;
      vel_b = hp.momentum * vel_b + g.grad_bias;
      w = (w - hp.learning_rate * vel_w) / shrink;
      b -= hp.learning_rate * vel_b;
    }
    if (!std::isfinite(epoch_loss) || !w.allFinite()) {
      throw DivergenceError("logistic training diverged at epoch " + std::to_string(epoch) +
                            " (non-finite loss; lower the learning rate)");
    }
  }

  LogisticFit fit;
  fit.final_loss = logistic_loss_gradient(w, b, z, labels, hp.l2_lambda).loss;
  fit.model.kind = ReadoutKind::kLogistic;
  fit.model.weights = w * scale.cwiseInverse().asDiagonal();
  fit.model.bias = b - fit.model.weights * mean;
  return fit;
}

std::size_t argmax(const Eigen::VectorXd& scores) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(i);
  }
  return best;
}

std::size_t classify(const Eigen::VectorXd& state, const ReadoutModel& model) {
  return argmax(model.scores(state));
}

EvalReport evaluate(const ReadoutModel& model, const Eigen::MatrixXd& states,
                    std::span<const std::uint8_t> labels) {
  if (states.cols() == 0) throw DataError("evaluate: empty test set");
  if (static_cast<std::size_t>(states.rows()) != model.neurons()) {
    throw DataError("evaluate: states have " + std::to_string(states.rows()) +
                    " neurons, model expects " + std::to_string(model.neurons()));
  }
  const std::size_t k = model.classes();
  check_labels(labels, states.cols(), k);

  EvalReport r;
  r.n_test = labels.size();
  r.confusion.assign(k, std::vector<std::size_t>(k, 0));
  std::size_t correct = 0;
  for (Eigen::Index t = 0; t < states.cols(); ++t) {
    const std::size_t truth = labels[static_cast<std::size_t>(t)];
    const std::size_t pred = classify(states.col(t), model);
    ++r.confusion[truth][pred];
    if (truth == pred) ++correct;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n_test);
  r.recall.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t support =
        std::accumulate(r.confusion[i].begin(), r.confusion[i].end(), std::size_t{0});
    r.recall[i] = support == 0 ? std::numeric_limits<double>::quiet_NaN()
                               : static_cast<double>(r.confusion[i][i]) /
                                     static_cast<double>(support);
  }
  return r;
}

KvMap EvalReport::to_kv() const {
  KvMap kv;
  kv.set("accuracy", format_double(accuracy));
  kv.set("n_test", std::to_string(n_test));
  kv.set("classes", std::to_string(confusion.size()));
  for (std::size_t i = 0; i < recall.size(); ++i) {
    kv.set("recall." + std::to_string(i), format_double(recall[i]));
  }
  for (std::size_t i = 0; i < confusion.size(); ++i) {
    for (std::size_t j = 0; j < confusion[i].size(); ++j) {
      kv.set("confusion." + std::to_string(i) + "." + std::to_string(j),
             std::to_string(confusion[i][j]));
    }
  }
  return kv;
}

EvalReport EvalReport::from_kv(const KvMap& kv) {
  EvalReport r;
  r.accuracy = kv.get_double("accuracy", 0.0);
  r.n_test = static_cast<std::size_t>(kv.get_u64("n_test", 0));
  const auto k = static_cast<std::size_t>(kv.get_u64("classes", 0));
  r.confusion.assign(k, std::vector<std::size_t>(k, 0));
  r.recall.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    r.recall[i] = kv.get_double("recall." + std::to_string(i),
                                std::numeric_limits<double>::quiet_NaN());
    for (std::size_t j = 0; j < k; ++j) {
      r.confusion[i][j] = static_cast<std::size_t>(
          kv.get_u64("confusion." + std::to_string(i) + "." + std::to_string(j), 0));
    }
  }
  return r;
}

std::string EvalReport::table() const {
  std::string out;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "accuracy %.4f over %zu patterns\n\n", accuracy, n_test);
  out += buf;
  out += "true\\pred";
  for (std::size_t j = 0; j < confusion.size(); ++j) {
    std::snprintf(buf, sizeof(buf), "%7zu", j);
    out += buf;
  }
  out += "   recall\n";
  for (std::size_t i = 0; i < confusion.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%9zu", i);
    out += buf;
    for (std::size_t v : confusion[i]) {
      std::snprintf(buf, sizeof(buf), "%7zu", v);
      out += buf;
    }
    if (std::isnan(recall[i])) {
      out += "      n/a\n";
    } else {
      std::snprintf(buf, sizeof(buf), "   %.4f\n", recall[i]);
      out += buf;
    }
  }
  return out;
}

}  // namespace nrc::readout
