// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "nrc/binary_io.hpp"
#include "nrc/ca_substrate.hpp"
#include "nrc/dataset.hpp"
#include "nrc/error.hpp"
#include "nrc/kv_config.hpp"
#include "nrc/qd_layer.hpp"
#include "nrc/readout.hpp"
#include "nrc/rng.hpp"
#include "nrc/spatial_reservoir.hpp"

namespace fs = std::filesystem;
using namespace nrc;

namespace {

// Criterion 1 and 10 (linear), 2 (logistic).
constexpr double kLinearMeanMin = 0.80;
constexpr double kLinearBestMin = 0.83;
constexpr double kLogisticMeanMin = 0.87;
constexpr double kLogisticBestMin = 0.89;
constexpr double kClampMeanMin = 0.75;
constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};
// Criterion 3.
constexpr double kLstsqTol = 1e-8;
// Criterion 4.
constexpr double kFdStep = 1e-5;
constexpr double kGradRelTol = 1e-4;
// Criterion 5.
constexpr double kFixedPointTol = 1e-5;
// Criterion 7.
constexpr double kKernelTol = 1e-12;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Mnist {
  bool available = false;
  std::string missing;
  dataset::LabeledPatternSet train;
  dataset::LabeledPatternSet test;
};

Mnist load_mnist() {
  const fs::path dir = NRC_MNIST_DIR;
  Mnist m;
  for (const char* name : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                           "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"}) {
    if (!fs::exists(dir / name)) {
      m.missing = (dir / name).string();
      return m;
    }
  }
  m.train = dataset::load_labeled_set(dir / "train-images-idx3-ubyte",
                                      dir / "train-labels-idx1-ubyte");
  m.test = dataset::load_labeled_set(dir / "t10k-images-idx3-ubyte",
                                     dir / "t10k-labels-idx1-ubyte");
  m.available = true;
  return m;
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

std::string sci(double v) {
  std::ostringstream s;
  s.setf(std::ios::scientific);
  s.precision(2);
  s << v;
  return s.str();
}

struct SeedScores {
  std::vector<double> linear;
  std::vector<double> logistic;
};

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double best(const std::vector<double>& v) {
  double b = 0.0;
  for (double x : v) b = std::max(b, x);
  return b;
}

std::string list(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + fmt(x);
  return s;
}

SeedScores run_mnist(const Mnist& data, reservoir::Activation activation, bool with_logistic) {
  SeedScores out;
  const Eigen::MatrixXd targets = dataset::one_hot(data.train.labels, 10);
  for (std::uint64_t seed : kSeeds) {
    reservoir::ReservoirParams p;
    p.neurons = 100;
    p.mu = 0.01;
    p.sigma = 0.007;
    p.seed = seed;
    const auto rw = reservoir::ReservoirWeights::build(p);
    reservoir::SettleConfig settle;
    settle.max_iterations = 50;
    settle.tolerance = 1e-6;
    settle.activation = activation;

    const auto t0 = std::chrono::steady_clock::now();
    const auto train = reservoir::harvest_states(data.train.patterns, rw, settle);
    const auto test = reservoir::harvest_states(data.test.patterns, rw, settle);
    const auto t1 = std::chrono::steady_clock::now();

    const auto lin = readout::train_linear(train.states, targets);
    out.linear.push_back(readout::evaluate(lin.model, test.states, data.test.labels).accuracy);
    std::cerr << "  seed " << seed << " (" << reservoir::to_string(activation) << "): harvest "
              << fmt(std::chrono::duration<double>(t1 - t0).count(), 1) << " s, converged "
              << fmt(train.fraction_converged, 3) << ", linear " << fmt(out.linear.back());

    if (with_logistic) {
      readout::LogisticHyperparams hp;
      hp.seed = subseed(seed, SeedComponent::kLogisticShuffle);
      const auto fit = readout::train_logistic(train.states, data.train.labels, 10, hp);
      out.logistic.push_back(
          readout::evaluate(fit.model, test.states, data.test.labels).accuracy);
      std::cerr << ", logistic " << fmt(out.logistic.back());
    }
    std::cerr << "\n";
  }
  return out;
}

Outcome band(const std::vector<double>& acc, double mean_min, double best_min) {
  const double m = mean(acc);
  const double b = best(acc);
  Outcome o;
  o.pass = m >= mean_min && b >= best_min;
  o.detail = "mean " + fmt(m) + " (need >= " + fmt(mean_min, 2) + "), best " + fmt(b) +
             " (need >= " + fmt(best_min, 2) + "); per seed: " + list(acc);
  return o;
}

Eigen::MatrixXd gaussian(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Outcome lstsq_oracle() {
  std::mt19937_64 rng(303);
  double worst = 0.0;
  int instances = 0;
  while (instances < 20) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng() % 8);
    const Eigen::Index t = n + static_cast<Eigen::Index>(rng() % (31 - n));
    const Eigen::Index k = 2 + static_cast<Eigen::Index>(rng() % 3);
    const Eigen::MatrixXd m = gaussian(n, t, rng);
    const Eigen::MatrixXd gram = m * m.transpose();
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram).eigenvalues();
    if (ev.minCoeff() <= 0.0 || ev.maxCoeff() / ev.minCoeff() > 1e3) continue;
    const Eigen::MatrixXd v = gaussian(k, t, rng);
    const Eigen::MatrixXd oracle = gram.llt().solve(m * v.transpose()).transpose();
    const auto fit = readout::train_linear(m, v);
    worst = std::max(worst, (fit.model.weights - oracle).cwiseAbs().maxCoeff());
    ++instances;
  }
  return {worst <= kLstsqTol,
          "20 instances, max |W - W_oracle| = " + sci(worst) + " (tol " + sci(kLstsqTol) + ")"};
}

Outcome gradient_check() {
  std::mt19937_64 rng(404);
  double worst = 0.0;
  for (int inst = 0; inst < 10; ++inst) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng() % 6);
    const Eigen::Index t = 5 + static_cast<Eigen::Index>(rng() % 20);
    const std::size_t k = 2 + rng() % 4;
    const Eigen::MatrixXd m = gaussian(n, t, rng);
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(t));
    for (auto& l : labels) l = static_cast<std::uint8_t>(rng() % k);
    const Eigen::MatrixXd w = 0.5 * gaussian(static_cast<Eigen::Index>(k), n, rng);
    const Eigen::VectorXd b = 0.5 * gaussian(static_cast<Eigen::Index>(k), 1, rng);
    const double l2 = 1e-3 * static_cast<double>(inst);
    const auto g = readout::logistic_loss_gradient(w, b, m, labels, l2);
    auto loss = [&](const Eigen::MatrixXd& ww, const Eigen::VectorXd& bb) {
      return readout::logistic_loss_gradient(ww, bb, m, labels, l2).loss;
    };
    auto rel = [](double a, double e) {
      return std::abs(a - e) / std::max(1e-8, std::abs(a) + std::abs(e));
    };
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      Eigen::MatrixXd wp = w, wm = w;
      wp.data()[i] += kFdStep;
      wm.data()[i] -= kFdStep;
      worst = std::max(worst, rel(g.grad_weights.data()[i], (loss(wp, b) - loss(wm, b)) / (2 * kFdStep)));
    }
    for (Eigen::Index i = 0; i < b.size(); ++i) {
      Eigen::VectorXd bp = b, bm = b;
      bp[i] += kFdStep;
      bm[i] -= kFdStep;
      worst = std::max(worst, rel(g.grad_bias[i], (loss(w, bp) - loss(w, bm)) / (2 * kFdStep)));
    }
  }
  return {worst < kGradRelTol,
          "10 instances, max relative error " + sci(worst) + " (need < " + sci(kGradRelTol) + ")"};
}

Outcome scalar_fixed_point() {
  double lo = -1.0, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mid - std::tanh(0.5 * mid + 0.4) > 0.0 ? hi : lo) = mid;
  }
  const double oracle = 0.5 * (lo + hi);

  reservoir::NeuronLayout l;
  l.positions = Eigen::MatrixX2d::Constant(1, 2, 0.5);
  l.pixel_centers = Eigen::MatrixX2d::Constant(1, 2, 0.5);
  l.grid_w = l.grid_h = 1;
  const auto rw = reservoir::ReservoirWeights::from_parts(
      l, Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Constant(1, 1, 0.5), 0.01, 0.0, 0);
  const auto r = reservoir::settle(Eigen::VectorXd::Constant(1, 0.4), rw, {});
  const double err = std::abs(r.state[0] - oracle);
  return {err <= kFixedPointTol, "x = " + fmt(r.state[0], 8) + ", bisection " + fmt(oracle, 8) +
                                     ", |diff| = " + sci(err) + " after " +
                                     std::to_string(r.iterations) + " iterations"};
}

Outcome ca_range() {
  std::size_t violations = 0;
  std::size_t checked = 0;
  auto count_out = [&](const Grid& g) {
    for (const Cell4& c : g.cells()) {
      for (double v : c) {
        ++checked;
        if (!(v >= 0.0 && v <= 1.0)) ++violations;
      }
    }
  };
  for (double a : {0.0, 0.001}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      ca::CaConfig cfg;
      cfg.r = 4.0;
      cfg.a = a;
      cfg.seed = seed;
      Grid qd_grid(cfg.width, cfg.height);
      ca::run_ca(cfg, 1000, [&](const ca::CaState& s) {
        count_out(s.chaos);
        count_out(s.chem);
        if (s.chem.generation() > 0) qd_grid = qd::qd_excite(qd_grid, s.chem, qd::QdConfig{});
        count_out(qd_grid);
      });
    }
  }
  return {violations == 0, std::to_string(violations) + " out-of-range values in " +
                               std::to_string(checked) + " checked (20 runs x 1001 generations)"};
}

Outcome kernel_exactness() {
  const auto layout = reservoir::place_neurons(100, 28, 28, 7);
  const auto w = reservoir::build_recurrent_weights(layout, 0.01, 0.0, 1);
  const bool symmetric = w == w.transpose();
  const bool unit_diag = (w.diagonal().array() == 1.0).all();

  reservoir::NeuronLayout trio;
  trio.grid_w = trio.grid_h = 28;
  trio.pixel_centers = reservoir::pixel_centers(28, 28);
  trio.positions.resize(3, 2);
  trio.positions << 0.3, 0.3, 0.32, 0.3, 0.3, 0.34;
  const auto wt = reservoir::build_recurrent_weights(trio, 0.01, 0.0, 1);
  const double e1 = std::abs(wt(0, 1) - std::exp(-1.0));
  const double e2 = std::abs(wt(0, 2) - std::exp(-2.0));
  const bool spots = e1 <= kKernelTol && e2 <= kKernelTol;
  return {symmetric && unit_diag && spots,
          std::string("symmetric ") + (symmetric ? "yes" : "no") + ", unit diagonal " +
              (unit_diag ? "yes" : "no") + ", |w - e^-1| = " + sci(e1) + ", |w - e^-2| = " +
              sci(e2)};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(NRC_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism(const Mnist& data) {
  if (!data.available) return {false, "MNIST not found: " + data.missing};
  const fs::path root =
      fs::temp_directory_path() / ("nrc_accept_" + std::to_string(std::random_device{}()));
  fs::create_directories(root);
  const fs::path dir = NRC_MNIST_DIR;
  KvMap kv;
  kv.set("seed", "11");
  kv.set("readout.kind", "logistic");
  kv.set("data.train_images", (dir / "train-images-idx3-ubyte").string());
  kv.set("data.train_labels", (dir / "train-labels-idx1-ubyte").string());
  kv.set("data.test_images", (dir / "t10k-images-idx3-ubyte").string());
  kv.set("data.test_labels", (dir / "t10k-labels-idx1-ubyte").string());
  kv.save(root / "run.config");

  Outcome o{true, ""};
  for (const char* run : {"a", "b"}) {
    const std::string base =
        "--config " + (root / "run.config").string() + " --out " + (root / run).string();
    if (run_cli(base + " train") != 0 || run_cli(base + " eval") != 0) {
      o = {false, std::string("run ") + run + " exited with an error"};
    }
  }
  if (o.pass) {
    std::vector<std::string> differ;
    for (const char* f : {"reservoir.nrsv", "model.nrom", "states.nrst", "train_report.txt",
                          "eval_report.txt", "eval_report.table"}) {
      if (!fs::exists(root / "a" / f) ||
          io::read_file(root / "a" / f) != io::read_file(root / "b" / f)) {
        differ.emplace_back(f);
      }
    }
    if (differ.empty()) {
      const auto rep = KvMap::load(root / "a" / "eval_report.txt");
      o.detail = "reservoir, model, states and reports bit-identical across two runs (accuracy " +
                 rep.at("accuracy") + ")";
    } else {
      o.pass = false;
      for (const auto& f : differ) o.detail += (o.detail.empty() ? "differs: " : ", ") + f;
    }
  }
  fs::remove_all(root);
  return o;
}

template <class F>
bool rejects(F&& f, dataset::IdxError::Kind expected) {
  try {
    f();
  } catch (const dataset::IdxError& e) {
    return e.kind() == expected;
  }
  return false;
}

Outcome idx_round_trip() {
  const std::vector<std::uint8_t> images{0x00, 0x00, 0x08, 0x03, 0x00, 0x00, 0x00,
                                         0x01, 0x00, 0x00, 0x00, 0x02, 0x00, 0x00,
                                         0x00, 0x02, 0x00, 0xFF, 0x80, 0x40};
  const std::vector<std::uint8_t> labels{0x00, 0x00, 0x08, 0x01, 0x00, 0x00,
                                         0x00, 0x03, 5,    0,    9};
  const auto img = dataset::parse_idx_images(images);
  const auto lab = dataset::parse_idx_labels(labels);
  const Eigen::MatrixXd pattern = dataset::normalize(img);
  Eigen::VectorXd expected(4);
  expected << 0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0;
  const bool tensors = img.count == 1 && img.rows == 2 && img.cols == 2 && pattern.cols() == 1 &&
                       pattern.col(0) == expected && lab == std::vector<std::uint8_t>{5, 0, 9};
  const bool bytes = dataset::serialize_idx_images(img) == images &&
                     dataset::serialize_idx_labels(lab) == labels;

  using K = dataset::IdxError::Kind;
  auto bad_magic = images;
  bad_magic[3] = 0x01;
  auto truncated = images;
  truncated.pop_back();
  auto label10 = labels;
  label10[10] = 10;
  const bool magic_ok = rejects([&] { dataset::parse_idx_images(bad_magic); }, K::kBadMagic);
  const bool trunc_ok = rejects([&] { dataset::parse_idx_images(truncated); }, K::kTruncated);
  const bool label_ok = rejects([&] { dataset::parse_idx_labels(label10); }, K::kLabelRange);
  return {tensors && bytes && magic_ok && trunc_ok && label_ok,
          std::string("tensors ") + (tensors ? "ok" : "WRONG") + ", re-serialize " +
              (bytes ? "byte-identical" : "DIFFERS") + ", rejects bad magic/truncation/label>9: " +
              (magic_ok ? "y" : "n") + "/" + (trunc_ok ? "y" : "n") + "/" +
              (label_ok ? "y" : "n")};
}

Outcome guarded(const std::function<Outcome()>& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    return {false, std::string("exception: ") + e.what()};
  }
}

}  // namespace

int main() {
  std::vector<std::pair<int, Outcome>> results;
  auto report = [&](int id, const char* name, Outcome o) {
    std::cout << "criterion " << id << " [" << name << "]: " << (o.pass ? "PASS" : "FAIL")
              << " - " << o.detail << std::endl;
    results.emplace_back(id, std::move(o));
  };

  report(3, "least-squares oracle", guarded(lstsq_oracle));
  report(4, "logistic gradient check", guarded(gradient_check));
  report(5, "scalar fixed point", guarded(scalar_fixed_point));
  report(6, "CA range invariant", guarded(ca_range));
  report(7, "weight-kernel exactness", guarded(kernel_exactness));
  report(9, "IDX round-trip", guarded(idx_round_trip));

  Mnist data;
  try {
    data = load_mnist();
  } catch (const std::exception& e) {
    data.missing = e.what();
  }
  if (data.available) {
    SeedScores tanh_scores;
    const Outcome mnist = guarded([&] {
      tanh_scores = run_mnist(data, reservoir::Activation::kTanh, true);
      return Outcome{true, ""};
    });
    if (mnist.pass) {
      report(1, "MNIST linear readout",
             band(tanh_scores.linear, kLinearMeanMin, kLinearBestMin));
      report(2, "MNIST logistic readout",
             band(tanh_scores.logistic, kLogisticMeanMin, kLogisticBestMin));
    } else {
      report(1, "MNIST linear readout", mnist);
      report(2, "MNIST logistic readout", mnist);
    }
    report(10, "piecewise-linear variant", guarded([&] {
             const auto s = run_mnist(data, reservoir::Activation::kPiecewiseLinear, false);
             Outcome o = band(s.linear, kClampMeanMin, 0.0);
             o.detail = "mean " + fmt(mean(s.linear)) + " (need >= " + fmt(kClampMeanMin, 2) +
                        "); per seed: " + list(s.linear);
             return o;
           }));
  } else {
    const Outcome missing{false, "MNIST not found: " + data.missing};
    report(1, "MNIST linear readout", missing);
    report(2, "MNIST logistic readout", missing);
    report(10, "piecewise-linear variant", missing);
  }
  report(8, "determinism", guarded([&] { return determinism(data); }));

  int failed = 0;
  for (const auto& [id, o] : results) failed += o.pass ? 0 : 1;
  std::cout << (results.size() - static_cast<std::size_t>(failed)) << "/" << results.size()
            << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
