#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nrc/kv_config.hpp"

namespace nrc::readout {

enum class ReadoutKind : std::uint8_t { kLinear = 0, kLogistic = 1 };

std::string to_string(ReadoutKind kind);
ReadoutKind parse_readout_kind(const std::string& text);

struct ReadoutModel {
  ReadoutKind kind = ReadoutKind::kLinear;
  Eigen::MatrixXd weights;  // K x N
  Eigen::VectorXd bias;     // K, zero for the linear kind

  std::size_t classes() const { return static_cast<std::size_t>(weights.rows()); }
  std::size_t neurons() const { return static_cast<std::size_t>(weights.cols()); }

  // Linear: W x. Logistic: softmax(W x + b).
  Eigen::VectorXd scores(const Eigen::VectorXd& state) const;

  // "NROM", u32 version, u8 kind, u32 K, u32 N, weights (row-major), bias.
  std::vector<std::uint8_t> serialize() const;
  static ReadoutModel deserialize(std::span<const std::uint8_t> bytes);
};

struct LinearFit {
  ReadoutModel model;
  Eigen::Index rank = 0;
  bool rank_deficient = false;
};

// Minimum-norm least-squares W with W M ~ V, i.e. W = V pinv(M). Singular
// values below max(N, T) * s_max * 2^-52 are treated as zero.
LinearFit train_linear(const Eigen::MatrixXd& states, const Eigen::MatrixXd& targets);

struct LogisticHyperparams {
  double learning_rate = 0.1;
  int epochs = 100;
  double l2_lambda = 1e-4;
  int batch_size = 256;
  double momentum = 0.9;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LossGradient {
  double loss = 0.0;
  Eigen::MatrixXd grad_weights;
  Eigen::VectorXd grad_bias;
};

// Mean softmax cross-entropy plus (l2/2) ||W||_F^2, and its gradient.
LossGradient logistic_loss_gradient(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                                    const Eigen::MatrixXd& states,
                                    std::span<const std::uint8_t> labels, double l2_lambda);

struct LogisticFit {
  ReadoutModel model;
  double final_loss = 0.0;  // objective on the standardised training data
};

// Multinomial softmax regression trained by shuffled mini-batch gradient
// descent with momentum. Inputs are standardised per neuron during training
// and the scaling is folded back into the returned weights and bias.
LogisticFit train_logistic(const Eigen::MatrixXd& states, std::span<const std::uint8_t> labels,
                           std::size_t classes, const LogisticHyperparams& hp);

// Index of the largest score; ties go to the lowest index.
std::size_t argmax(const Eigen::VectorXd& scores);
std::size_t classify(const Eigen::VectorXd& state, const ReadoutModel& model);

struct EvalReport {
  double accuracy = 0.0;
  std::size_t n_test = 0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<double> recall;                       // NaN for classes absent from the test set

  KvMap to_kv() const;
  static EvalReport from_kv(const KvMap& kv);
  std::string table() const;
};

EvalReport evaluate(const ReadoutModel& model, const Eigen::MatrixXd& states,
                    std::span<const std::uint8_t> labels);

}  // namespace nrc::readout
