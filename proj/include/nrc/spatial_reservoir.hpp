#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace nrc::reservoir {

// Neuron positions and input-pixel centres, all in the unit square.
// Pixel k (row-major, k = row * grid_w + col) sits at
// ((col + 0.5) / grid_w, (row + 0.5) / grid_h).
struct NeuronLayout {
  Eigen::MatrixX2d positions;      // N x 2, columns (x, y)
  Eigen::MatrixX2d pixel_centers;  // P x 2
  std::size_t grid_w = 0;
  std::size_t grid_h = 0;

  std::size_t neurons() const { return static_cast<std::size_t>(positions.rows()); }
  std::size_t pixels() const { return static_cast<std::size_t>(pixel_centers.rows()); }
};

Eigen::MatrixX2d pixel_centers(std::size_t grid_w, std::size_t grid_h);

// N positions i.i.d. uniform on [0,1]^2.
NeuronLayout place_neurons(std::size_t n, std::size_t grid_w, std::size_t grid_h,
                           std::uint64_t seed);

// W_in(i,k) = exp(-|pos_i - pix_k| / (2 mu)). No noise.
Eigen::MatrixXd build_input_weights(const NeuronLayout& layout, double mu);

// W(i,j) = exp(-|pos_i - pos_j| / (2 mu)) + eps(i,j), eps ~ N(0, sigma^2)
// drawn independently for every entry, diagonal included.
Eigen::MatrixXd build_recurrent_weights(const NeuronLayout& layout, double mu, double sigma,
                                        std::uint64_t seed);

struct SpectralEstimate {
  double radius = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Largest eigenvalue modulus by power iteration. Each iterate is fitted with
// a two-term recurrence so a dominant complex-conjugate (or +/-) pair is
// resolved as well as a single real eigenvalue.
SpectralEstimate estimate_spectral_radius(const Eigen::MatrixXd& w, double tol = 1e-8,
                                          int max_iterations = 10000);

// W * (target / rho(W)). Rejects the zero matrix.
Eigen::MatrixXd spectral_rescale(const Eigen::MatrixXd& w, double target);

struct ReservoirParams {
  std::size_t neurons = 100;
  std::size_t grid_w = 28;
  std::size_t grid_h = 28;
  double mu = 0.01;
  double sigma = 0.007;
  std::optional<double> spectral_target;
  // Placement and noise use subseed(seed, kNeuronPlacement) and
  // subseed(seed, kRecurrentNoise).
  std::uint64_t seed = 0;

  void validate() const;
};

// Immutable input and recurrent weights together with the layout that
// produced them.
class ReservoirWeights {
 public:
  static ReservoirWeights build(const ReservoirParams& params);
  // Takes ownership of already-built matrices; checks shapes.
  static ReservoirWeights from_parts(NeuronLayout layout, Eigen::MatrixXd w_in,
                                     Eigen::MatrixXd w, double mu, double sigma,
                                     std::uint64_t seed);

  const NeuronLayout& layout() const noexcept { return layout_; }
  const Eigen::MatrixXd& w_in() const noexcept { return w_in_; }
  const Eigen::MatrixXd& w() const noexcept { return w_; }
  double mu() const noexcept { return mu_; }
  double sigma() const noexcept { return sigma_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t neurons() const noexcept { return static_cast<std::size_t>(w_.rows()); }
  std::size_t pixels() const noexcept { return static_cast<std::size_t>(w_in_.cols()); }

  // Versioned binary form: "NRSV", u32 version, u32 N, u32 P, positions,
  // W_in, W (row-major f64), f64 mu, f64 sigma, u64 seed. Little-endian.
  std::vector<std::uint8_t> serialize() const;
  static ReservoirWeights deserialize(std::span<const std::uint8_t> bytes);

 private:
  ReservoirWeights() = default;

  NeuronLayout layout_;
  Eigen::MatrixXd w_in_;
  Eigen::MatrixXd w_;
  double mu_ = 0.0;
  double sigma_ = 0.0;
  std::uint64_t seed_ = 0;
};

enum class Activation { kTanh, kPiecewiseLinear };

std::string to_string(Activation a);
Activation parse_activation(const std::string& text);

struct SettleConfig {
  int max_iterations = 50;
  double tolerance = 1e-6;
  Activation activation = Activation::kTanh;
  double input_gain = 1.0;

  void validate() const;
};

// X' = f(W X + gain * W_in I), f = tanh or clamp(., -1, 1).
Eigen::VectorXd step(const Eigen::VectorXd& state, const Eigen::VectorXd& input,
                     const ReservoirWeights& weights, const SettleConfig& cfg);

struct SettleResult {
  Eigen::VectorXd state;
  int iterations = 0;
  bool converged = false;
};

// Starts from the zero state and iterates `step` with the input held fixed
// until the infinity-norm change drops below the tolerance or the iteration
// cap is hit. The last state is returned either way.
SettleResult settle(const Eigen::VectorXd& input, const ReservoirWeights& weights,
                    const SettleConfig& cfg);

struct Harvest {
  Eigen::MatrixXd states;  // N x T, column t settled on pattern t
  double fraction_converged = 0.0;
  double mean_iterations = 0.0;
};

// Settles every column of `patterns` (P x T) independently. Work is split
// over `threads` workers; the result does not depend on the split.
Harvest harvest_states(const Eigen::MatrixXd& patterns, const ReservoirWeights& weights,
                       const SettleConfig& cfg, unsigned threads = 1);

}  // namespace nrc::reservoir
