#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "nrc/ca_substrate.hpp"
#include "nrc/kv_config.hpp"
#include "nrc/qd_layer.hpp"
#include "nrc/readout.hpp"
#include "nrc/spatial_reservoir.hpp"

namespace nrc::cli {

// Everything one run needs. Loaded from flat `key = value` text; unknown keys
// are rejected. Per-component seeds are derived from `seed` (see rng.hpp).
struct ExperimentConfig {
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::filesystem::path out_dir = "out";

  ca::CaConfig ca;
  std::uint64_t ca_steps = 100;
  qd::QdConfig qd;
  qd::InputChannel qd_channel = qd::InputChannel::kRed;

  reservoir::ReservoirParams reservoir;
  reservoir::SettleConfig settle;

  readout::ReadoutKind readout_kind = readout::ReadoutKind::kLinear;
  readout::LogisticHyperparams logistic;

  std::filesystem::path train_images;
  std::filesystem::path train_labels;
  std::filesystem::path test_images;
  std::filesystem::path test_labels;
  std::size_t train_limit = 0;  // 0 = all
  std::size_t test_limit = 0;

  static ExperimentConfig from_kv(const KvMap& kv);
  // Fully resolved config with seeds expanded; parses back to the same config.
  KvMap to_kv() const;

  // Propagates the master seed into the component configs.
  void apply_seed(std::uint64_t master);
};

// Creates `dir` when its parent exists; fails otherwise.
void ensure_out_dir(const std::filesystem::path& dir);

struct CaRunSummary {
  ca::CaState final_state;
  Grid qd;
  std::size_t frames_written = 0;
};

// Runs chaos -> electrochemistry -> quantum dots for `steps` ticks. Writes
// final raw dumps (chaos/chem/qd `.f64`), the QD input pattern as a one-image
// IDX file, and optionally one P6 frame per generation for chem and qd.
CaRunSummary cmd_ca_run(const ExperimentConfig& cfg, std::uint64_t steps, bool export_frames,
                        std::ostream& out, std::ostream& log);

struct TrainSummary {
  reservoir::Harvest harvest;
  readout::ReadoutModel model;
  double train_accuracy = 0.0;
  std::uint64_t states_checksum = 0;
  bool states_reused = false;
};

TrainSummary cmd_train(const ExperimentConfig& cfg, bool reuse_states, std::ostream& out,
                       std::ostream& log);

struct EvalOptions {
  std::optional<std::filesystem::path> model;      // default <out>/model.nrom
  std::optional<std::filesystem::path> reservoir;  // default <out>/reservoir.nrsv
  std::optional<std::filesystem::path> test_images;
  std::optional<std::filesystem::path> test_labels;
};

readout::EvalReport cmd_eval(const ExperimentConfig& cfg, const EvalOptions& opts,
                             std::ostream& out, std::ostream& log);

struct ClassifyOptions {
  std::filesystem::path model;
  std::filesystem::path reservoir;
  std::filesystem::path image_file;
  std::size_t index = 0;
};

std::size_t cmd_classify(const ExperimentConfig& cfg, const ClassifyOptions& opts);

// Persisted harvest: "NRST", u32 version, u64 cache key, u32 N, u32 T, then
// the N x T states column-major as little-endian f64.
std::uint64_t states_checksum(const Eigen::MatrixXd& states);

}  // namespace nrc::cli
