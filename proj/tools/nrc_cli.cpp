// nrc: layered cellular-automaton simulation and spatially embedded reservoir
// experiments on MNIST.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "nrc/error.hpp"
#include "nrc/experiment.hpp"
#include "nrc/kv_config.hpp"

namespace {

constexpr const char* kFooter =
    "Datasets must be uncompressed IDX files (gunzip the *.gz distribution archives first).\n"
    "Exit codes: 0 success, 1 usage, 2 data/format, 3 numeric divergence.";

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nano-scale reservoir computing simulator"};
  app.footer(kFooter);
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<unsigned> threads;
  app.add_option("--config", config_path, "Key-value config file");
  app.add_option("--seed", seed, "Master seed (overrides the config)");
  app.add_option("--out", out_dir, "Output directory (overrides the config)");
  app.add_option("--threads", threads, "Worker threads for state harvesting")
      ->check(CLI::PositiveNumber);

  auto* ca_run = app.add_subcommand("ca-run", "Run the chaos / electrochemical / QD layers");
  std::optional<std::uint64_t> steps;
  bool export_frames = false;
  ca_run->add_option("--steps", steps, "Ticks to simulate (default: ca.steps)");
  ca_run->add_flag("--export-frames", export_frames, "Write one P6 frame per generation");

  auto* train = app.add_subcommand("train", "Harvest reservoir states and fit the readout");
  bool reuse_states = false;
  std::optional<std::string> readout_kind;
  train->add_flag("--reuse-states", reuse_states,
                  "Reuse <out>/states.nrst when it matches this reservoir and data");
  train->add_option("--readout", readout_kind, "Readout kind: linear or logistic");

  auto* eval = app.add_subcommand("eval", "Evaluate a trained model on a test set");
  nrc::cli::EvalOptions eval_opts;
  eval->add_option("--model", eval_opts.model, "Model file (default <out>/model.nrom)");
  eval->add_option("--reservoir", eval_opts.reservoir,
                   "Reservoir file (default <out>/reservoir.nrsv)");
  eval->add_option("--test-images", eval_opts.test_images, "IDX image file");
  eval->add_option("--test-labels", eval_opts.test_labels, "IDX label file");

  auto* classify = app.add_subcommand("classify", "Classify one image");
  nrc::cli::ClassifyOptions classify_opts;
  classify->add_option("--model", classify_opts.model, "Model file")->required();
  classify->add_option("--reservoir", classify_opts.reservoir, "Reservoir file")->required();
  classify->add_option("--image-file", classify_opts.image_file, "IDX image file")->required();
  classify->add_option("--index", classify_opts.index, "Image index")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(nrc::ExitCode::kUsage);
  }

  try {
    nrc::KvMap kv;
    if (!config_path.empty()) kv = nrc::KvMap::load(config_path);
    if (readout_kind) kv.set("readout.kind", *readout_kind);
    auto cfg = nrc::cli::ExperimentConfig::from_kv(kv);
    if (seed) cfg.apply_seed(*seed);
    if (out_dir) cfg.out_dir = *out_dir;
    if (threads) cfg.threads = *threads;

    if (ca_run->parsed()) {
      nrc::cli::cmd_ca_run(cfg, steps.value_or(cfg.ca_steps), export_frames, std::cout,
                           std::cerr);
    } else if (train->parsed()) {
      nrc::cli::cmd_train(cfg, reuse_states, std::cout, std::cerr);
    } else if (eval->parsed()) {
      nrc::cli::cmd_eval(cfg, eval_opts, std::cout, std::cerr);
    } else if (classify->parsed()) {
      std::cout << nrc::cli::cmd_classify(cfg, classify_opts) << "\n";
    }
  } catch (const nrc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(nrc::ExitCode::kData);
  }
  return 0;
}
