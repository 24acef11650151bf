#include "nrc/spatial_reservoir.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <random>
#include <thread>

#include <Eigen/QR>

#include "nrc/binary_io.hpp"
#include "nrc/error.hpp"
#include "nrc/rng.hpp"

namespace nrc::reservoir {

namespace {

constexpr std::uint32_t kFormatVersion = 1;

double distance(const Eigen::MatrixX2d& a, Eigen::Index i, const Eigen::MatrixX2d& b,
                Eigen::Index k) {
  return std::hypot(a(i, 0) - b(k, 0), a(i, 1) - b(k, 1));
}

void check_mu(double mu) {
  if (!(mu > 0.0) || !std::isfinite(mu)) {
    throw UsageError("reservoir: mu must be positive, got " + std::to_string(mu));
  }
}

}  // namespace

Eigen::MatrixX2d pixel_centers(std::size_t grid_w, std::size_t grid_h) {
  if (grid_w == 0 || grid_h == 0) throw UsageError("reservoir: input grid must be non-empty");
  Eigen::MatrixX2d out(static_cast<Eigen::Index>(grid_w * grid_h), 2);
  for (std::size_t row = 0; row < grid_h; ++row) {
    for (std::size_t col = 0; col < grid_w; ++col) {
      const auto k = static_cast<Eigen::Index>(row * grid_w + col);
      out(k, 0) = (static_cast<double>(col) + 0.5) / static_cast<double>(grid_w);
      out(k, 1) = (static_cast<double>(row) + 0.5) / static_cast<double>(grid_h);
    }
  }
  return out;
}

NeuronLayout place_neurons(std::size_t n, std::size_t grid_w, std::size_t grid_h,
                           std::uint64_t seed) {
  if (n == 0) throw UsageError("reservoir: neuron count must be at least 1");
  NeuronLayout layout;
  layout.grid_w = grid_w;
  layout.grid_h = grid_h;
  layout.pixel_centers = pixel_centers(grid_w, grid_h);
  layout.positions.resize(static_cast<Eigen::Index>(n), 2);
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index i = 0; i < layout.positions.rows(); ++i) {
    layout.positions(i, 0) = unit(rng);
    layout.positions(i, 1) = unit(rng);
  }
  return layout;
}

Eigen::MatrixXd build_input_weights(const NeuronLayout& layout, double mu) {
  check_mu(mu);
  const auto n = layout.positions.rows();
  const auto p = layout.pixel_centers.rows();
  Eigen::MatrixXd w_in(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < p; ++k) {
      w_in(i, k) = std::exp(-distance(layout.positions, i, layout.pixel_centers, k) / (2.0 * mu));
    }
  }
  return w_in;
}

Eigen::MatrixXd build_recurrent_weights(const NeuronLayout& layout, double mu, double sigma,
                                        std::uint64_t seed) {
  check_mu(mu);
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw UsageError("reservoir: sigma must be non-negative, got " + std::to_string(sigma));
  }
  const auto n = layout.positions.rows();
  Eigen::MatrixXd w(n, n);
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, sigma > 0.0 ? sigma : 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double kernel =
          std::exp(-distance(layout.positions, i, layout.positions, j) / (2.0 * mu));
      w(i, j) = sigma > 0.0 ? kernel + noise(rng) : kernel;
    }
  }
  return w;
}

SpectralEstimate estimate_spectral_radius(const Eigen::MatrixXd& w, double tol,
                                          int max_iterations) {
  if (w.rows() != w.cols()) throw UsageError("spectral radius: matrix must be square");
  SpectralEstimate est;
  if (w.size() == 0 || w.isZero(0.0)) {
    est.converged = true;
    return est;
  }

  Rng rng(0x5eedULL);
  std::uniform_real_distribution<double> unit(0.5, 1.5);
  Eigen::VectorXd x(w.rows());
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = unit(rng);
  x.normalize();

  double previous = -1.0;
  for (int it = 1; it <= max_iterations; ++it) {
    const Eigen::VectorXd y1 = w * x;
    const double y1_norm = y1.norm();
    est.iterations = it;
    if (y1_norm == 0.0) {
      est.radius = 0.0;
      est.converged = true;
      return est;
    }
    const Eigen::VectorXd y2 = w * y1;

    double radius = 0.0;
    const double along = x.dot(y1);
    const double off_axis = (y1 - along * x).norm();
    if (off_axis <= 1e-10 * y1_norm) {
      // x is (numerically) an eigenvector.
      radius = std::abs(along);
    } else {
      // Fit y2 = alpha y1 + beta x; the roots of t^2 - alpha t - beta are the
      // two dominant eigenvalues once the iterate has settled into their span.
      Eigen::MatrixXd basis(x.size(), 2);
      basis.col(0) = y1;
      basis.col(1) = x;
      const Eigen::Vector2d coef = basis.colPivHouseholderQr().solve(y2);
      const double alpha = coef[0];
      const double beta = coef[1];
      const double disc = alpha * alpha + 4.0 * beta;
      if (disc < 0.0) {
        radius = std::sqrt(-beta);
      } else {
        const double root = std::sqrt(disc);
        radius = std::max(std::abs(alpha + root), std::abs(alpha - root)) / 2.0;
      }
    }

    x = y1 / y1_norm;
    est.radius = radius;
    if (previous >= 0.0 && std::abs(radius - previous) <= tol * radius) {
      est.converged = true;
      return est;
    }
    previous = radius;
  }
  return est;
}

Eigen::MatrixXd spectral_rescale(const Eigen::MatrixXd& w, double target) {
  if (!(target > 0.0)) {
    throw UsageError("spectral_rescale: target radius must be positive");
  }
  const SpectralEstimate est = estimate_spectral_radius(w);
  if (est.radius == 0.0) {
    throw UsageError("spectral_rescale: matrix has zero spectral radius");
  }
  return w * (target / est.radius);
}

void ReservoirParams::validate() const {
  if (neurons == 0) throw UsageError("reservoir: neuron count must be at least 1");
  check_mu(mu);
  if (!(sigma >= 0.0)) throw UsageError("reservoir: sigma must be non-negative");
  if (spectral_target && !(*spectral_target > 0.0)) {
    throw UsageError("reservoir: spectral target must be positive");
  }
}

ReservoirWeights ReservoirWeights::build(const ReservoirParams& params) {
  params.validate();
  ReservoirWeights rw;
  rw.layout_ = place_neurons(params.neurons, params.grid_w, params.grid_h,
                             subseed(params.seed, SeedComponent::kNeuronPlacement));
  rw.w_in_ = build_input_weights(rw.layout_, params.mu);
  rw.w_ = build_recurrent_weights(rw.layout_, params.mu, params.sigma,
                                  subseed(params.seed, SeedComponent::kRecurrentNoise));
  if (params.spectral_target) rw.w_ = spectral_rescale(rw.w_, *params.spectral_target);
  rw.mu_ = params.mu;
  rw.sigma_ = params.sigma;
  rw.seed_ = params.seed;
  return rw;
}

ReservoirWeights ReservoirWeights::from_parts(NeuronLayout layout, Eigen::MatrixXd w_in,
                                              Eigen::MatrixXd w, double mu, double sigma,
                                              std::uint64_t seed) {
  const auto n = layout.positions.rows();
  if (n == 0) throw DataError("reservoir: no neurons");
  if (w.rows() != n || w.cols() != n) {
    throw DataError("reservoir: recurrent matrix is " + std::to_string(w.rows()) + "x" +
                    std::to_string(w.cols()) + ", expected " + std::to_string(n) + "x" +
                    std::to_string(n));
  }
  if (w_in.rows() != n) {
    throw DataError("reservoir: input matrix has " + std::to_string(w_in.rows()) +
                    " rows, expected " + std::to_string(n));
  }
  if (layout.pixel_centers.rows() != 0 && layout.pixel_centers.rows() != w_in.cols()) {
    throw DataError("reservoir: input matrix width does not match the pixel grid");
  }
  ReservoirWeights rw;
  rw.layout_ = std::move(layout);
  rw.w_in_ = std::move(w_in);
  rw.w_ = std::move(w);
  rw.mu_ = mu;
  rw.sigma_ = sigma;
  rw.seed_ = seed;
  return rw;
}

std::vector<std::uint8_t> ReservoirWeights::serialize() const {
  io::ByteWriter out;
  out.put_tag("NRSV");
  out.put_u32(kFormatVersion);
  out.put_u32(static_cast<std::uint32_t>(neurons()));
  out.put_u32(static_cast<std::uint32_t>(pixels()));
  for (Eigen::Index i = 0; i < layout_.positions.rows(); ++i) {
    out.put_f64(layout_.positions(i, 0));
    out.put_f64(layout_.positions(i, 1));
  }
  for (Eigen::Index i = 0; i < w_in_.rows(); ++i) {
    for (Eigen::Index k = 0; k < w_in_.cols(); ++k) out.put_f64(w_in_(i, k));
  }
  for (Eigen::Index i = 0; i < w_.rows(); ++i) {
    for (Eigen::Index j = 0; j < w_.cols(); ++j) out.put_f64(w_(i, j));
  }
  out.put_f64(mu_);
  out.put_f64(sigma_);
  out.put_u64(seed_);
  return out.take();
}

ReservoirWeights ReservoirWeights::deserialize(std::span<const std::uint8_t> bytes) {
  io::ByteReader in(bytes, "reservoir file");
  in.expect_tag("NRSV");
  const std::uint32_t version = in.u32();
  if (version != kFormatVersion) {
    throw DataError("reservoir file: unsupported version " + std::to_string(version));
  }
  const std::uint32_t n = in.u32();
  const std::uint32_t p = in.u32();
  if (n == 0) throw DataError("reservoir file: zero neurons");
  const std::uint64_t payload = (2ULL * n + std::uint64_t{n} * p + std::uint64_t{n} * n) * 8 + 24;
  if (payload != in.remaining()) {
    throw DataError("reservoir file: expected " + std::to_string(payload) +
                    " bytes after the header, found " + std::to_string(in.remaining()));
  }

  NeuronLayout layout;
  layout.positions.resize(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    layout.positions(i, 0) = in.f64();
    layout.positions(i, 1) = in.f64();
  }
  // The file does not carry the grid shape; square grids are recovered.
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(p))));
  if (side * side == p) {
    layout.grid_w = layout.grid_h = side;
    layout.pixel_centers = pixel_centers(side, side);
  }
  Eigen::MatrixXd w_in(n, p);
  for (Eigen::Index i = 0; i < w_in.rows(); ++i) {
    for (Eigen::Index k = 0; k < w_in.cols(); ++k) w_in(i, k) = in.f64();
  }
  Eigen::MatrixXd w(n, n);
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = in.f64();
  }
  const double mu = in.f64();
  const double sigma = in.f64();
  const std::uint64_t seed = in.u64();
  in.expect_end();
  return from_parts(std::move(layout), std::move(w_in), std::move(w), mu, sigma, seed);
}

std::string to_string(Activation a) {
  return a == Activation::kTanh ? "tanh" : "piecewise-linear";
}

Activation parse_activation(const std::string& text) {
  if (text == "tanh") return Activation::kTanh;
  if (text == "piecewise-linear") return Activation::kPiecewiseLinear;
  throw UsageError("unknown activation '" + text + "' (valid: tanh, piecewise-linear)");
}

void SettleConfig::validate() const {
  if (max_iterations < 1) throw UsageError("settle: max iterations must be at least 1");
  if (!(tolerance > 0.0)) throw UsageError("settle: tolerance must be positive");
  if (!std::isfinite(input_gain)) throw UsageError("settle: input gain must be finite");
}

namespace {

Eigen::VectorXd activate(Eigen::VectorXd u, Activation a) {
  if (a == Activation::kTanh) return u.array().tanh().matrix();
  return u.cwiseMax(-1.0).cwiseMin(1.0);
}

Eigen::VectorXd input_drive(const Eigen::VectorXd& input, const ReservoirWeights& weights,
                            const SettleConfig& cfg) {
  if (static_cast<std::size_t>(input.size()) != weights.pixels()) {
    throw DataError("reservoir: input pattern has " + std::to_string(input.size()) +
                    " pixels, reservoir expects " + std::to_string(weights.pixels()));
  }
  return cfg.input_gain * (weights.w_in() * input);
}

void check_finite(const Eigen::VectorXd& x, int iteration) {
  if (!x.allFinite()) {
    throw DivergenceError("reservoir state became non-finite at iteration " +
                          std::to_string(iteration));
  }
}

}  // namespace

Eigen::VectorXd step(const Eigen::VectorXd& state, const Eigen::VectorXd& input,
                     const ReservoirWeights& weights, const SettleConfig& cfg) {
  if (static_cast<std::size_t>(state.size()) != weights.neurons()) {
    throw DataError("reservoir: state has " + std::to_string(state.size()) +
                    " entries, reservoir has " + std::to_string(weights.neurons()) +
                    " neurons");
  }
  check_finite(state, 0);
  const Eigen::VectorXd drive = input_drive(input, weights, cfg);
  Eigen::VectorXd next = activate(weights.w() * state + drive, cfg.activation);
  check_finite(next, 1);
  return next;
}

SettleResult settle(const Eigen::VectorXd& input, const ReservoirWeights& weights,
                    const SettleConfig& cfg) {
  cfg.validate();
  const Eigen::VectorXd drive = input_drive(input, weights, cfg);
  SettleResult r;
  r.state = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(weights.neurons()));
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    Eigen::VectorXd next = activate(weights.w() * r.state + drive, cfg.activation);
    check_finite(next, it);
    const double change = (next - r.state).lpNorm<Eigen::Infinity>();
    r.state = std::move(next);
    r.iterations = it;
    if (change < cfg.tolerance) {
      r.converged = true;
      break;
    }
  }
  return r;
}

Harvest harvest_states(const Eigen::MatrixXd& patterns, const ReservoirWeights& weights,
                       const SettleConfig& cfg, unsigned threads) {
  cfg.validate();
  const Eigen::Index t_count = patterns.cols();
  Harvest h;
  h.states.resize(static_cast<Eigen::Index>(weights.neurons()), t_count);
  if (t_count == 0) return h;

  std::vector<int> iterations(static_cast<std::size_t>(t_count), 0);
  std::vector<char> converged(static_cast<std::size_t>(t_count), 0);
  const unsigned workers =
      std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(t_count)));
  std::vector<std::exception_ptr> errors(workers);

  auto work = [&](unsigned w, Eigen::Index begin, Eigen::Index end) {
    for (Eigen::Index t = begin; t < end; ++t) {
      try {
        SettleResult r = settle(patterns.col(t), weights, cfg);
        h.states.col(t) = r.state;
        iterations[static_cast<std::size_t>(t)] = r.iterations;
        converged[static_cast<std::size_t>(t)] = r.converged ? 1 : 0;
      } catch (const DivergenceError& e) {
        errors[w] = std::make_exception_ptr(
            DivergenceError(std::string(e.what()) + " (pattern " + std::to_string(t) + ")"));
        return;
      } catch (...) {
        errors[w] = std::current_exception();
        return;
      }
    }
  };

  const Eigen::Index chunk = (t_count + workers - 1) / workers;
  if (workers == 1) {
    work(0, 0, t_count);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      const Eigen::Index begin = std::min<Eigen::Index>(t_count, w * chunk);
      const Eigen::Index end = std::min<Eigen::Index>(t_count, begin + chunk);
      pool.emplace_back(work, w, begin, end);
    }
    for (auto& th : pool) th.join();
  }
  // Workers own ascending ranges, so the first recorded error is the one with
  // the lowest pattern index.
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::size_t n_conv = 0;
  double iter_sum = 0.0;
  for (std::size_t t = 0; t < iterations.size(); ++t) {
    n_conv += static_cast<std::size_t>(converged[t]);
    iter_sum += iterations[t];
  }
  h.fraction_converged = static_cast<double>(n_conv) / static_cast<double>(t_count);
  h.mean_iterations = iter_sum / static_cast<double>(t_count);
  return h;
}

}  // namespace nrc::reservoir
