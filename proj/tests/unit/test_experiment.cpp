#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "nrc/error.hpp"
#include "nrc/binary_io.hpp"
#include "nrc/dataset.hpp"
#include "nrc/experiment.hpp"
#include "nrc/frame_export.hpp"
#include "nrc/rng.hpp"

namespace fs = std::filesystem;
using namespace nrc::cli;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("nrc_exp_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Ten classes, each a bright 6x6 block at its own spot plus noise.
void write_blob_dataset(const fs::path& images, const fs::path& labels, std::size_t count,
                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> jitter(-1, 1);
  std::uniform_int_distribution<int> noise(0, 40);
  nrc::dataset::RawImages img;
  img.count = static_cast<std::uint32_t>(count);
  img.rows = img.cols = 28;
  img.pixels.assign(count * 784, 0);
  std::vector<std::uint8_t> lab(count);
  for (std::size_t t = 0; t < count; ++t) {
    const int cls = static_cast<int>(t % 10);
    lab[t] = static_cast<std::uint8_t>(cls);
    const int r0 = 3 + (cls / 5) * 13 + jitter(rng);
    const int c0 = 1 + (cls % 5) * 5 + jitter(rng);
    std::uint8_t* px = img.pixels.data() + t * 784;
    for (int k = 0; k < 784; ++k) px[k] = static_cast<std::uint8_t>(noise(rng));
    for (int r = r0; r < r0 + 6; ++r) {
      for (int c = c0; c < std::min(28, c0 + 6); ++c) px[r * 28 + c] = 255;
    }
  }
  nrc::io::write_file(images, nrc::dataset::serialize_idx_images(img));
  nrc::io::write_file(labels, nrc::dataset::serialize_idx_labels(lab));
}

ExperimentConfig small_config(const fs::path& root) {
  write_blob_dataset(root / "train-img", root / "train-lbl", 200, 1);
  write_blob_dataset(root / "test-img", root / "test-lbl", 100, 2);
  nrc::KvMap kv;
  kv.set("seed", "5");
  kv.set("out", (root / "out").string());
  kv.set("reservoir.neurons", "20");
  kv.set("data.train_images", (root / "train-img").string());
  kv.set("data.train_labels", (root / "train-lbl").string());
  kv.set("data.test_images", (root / "test-img").string());
  kv.set("data.test_labels", (root / "test-lbl").string());
  return ExperimentConfig::from_kv(kv);
}

int run_cli(const std::string& args, std::string* stdout_text = nullptr) {
  const std::string cmd = std::string(NRC_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string text;
  char buf[256];
  while (std::fgets(buf, sizeof(buf), pipe) != nullptr) text += buf;
  const int status = pclose(pipe);
  if (stdout_text != nullptr) *stdout_text = text;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

bool same_bytes(const fs::path& a, const fs::path& b) {
  return nrc::io::read_file(a) == nrc::io::read_file(b);
}

}  // namespace

TEST_CASE("config parses, echoes and re-parses to the same values") {
  const auto kv = nrc::KvMap::parse(
      "# experiment\n"
      "seed = 42\n"
      "[ca]\n"
      "r = 3.9\n"
      "neighborhood = moore-8\n"
      "feature_cells = 1:2 3:4\n"
      "[reservoir]\n"
      "neurons = 50\n"
      "spectral_target = 0.9\n"
      "[settle]\n"
      "activation = piecewise-linear\n"
      "[readout]\n"
      "kind = logistic\n"
      "l2_lambda = 0.001\n");
  const auto cfg = ExperimentConfig::from_kv(kv);
  CHECK(cfg.seed == 42);
  CHECK(cfg.ca.r == 3.9);
  CHECK(cfg.ca.neighborhood == nrc::Neighborhood::kMoore8);
  CHECK(cfg.ca.feature_cells.size() == 2);
  CHECK(cfg.reservoir.neurons == 50);
  CHECK(cfg.reservoir.spectral_target == 0.9);
  CHECK(cfg.settle.activation == nrc::reservoir::Activation::kPiecewiseLinear);
  CHECK(cfg.readout_kind == nrc::readout::ReadoutKind::kLogistic);
  CHECK(cfg.logistic.l2_lambda == 0.001);

  CHECK(cfg.ca.seed == nrc::subseed(42, nrc::SeedComponent::kCellularAutomaton));
  CHECK(cfg.ca.seed == (42ULL ^ 0x9E3779B97F4A7C15ULL));
  CHECK(cfg.logistic.seed == (42ULL ^ (4ULL * 0x9E3779B97F4A7C15ULL)));
  CHECK(cfg.reservoir.seed == 42);

  const auto echoed = cfg.to_kv();
  const auto again = ExperimentConfig::from_kv(nrc::KvMap::parse(echoed.format()));
  CHECK(again.to_kv().format() == echoed.format());
  CHECK(echoed.at("ca.seed") == std::to_string(cfg.ca.seed));
}

TEST_CASE("config rejects unknown keys and bad values") {
  CHECK_THROWS_AS(ExperimentConfig::from_kv(nrc::KvMap::parse("reservoir.nuerons = 5\n")),
                  nrc::UsageError);
  CHECK_THROWS_AS(ExperimentConfig::from_kv(nrc::KvMap::parse("readout.kind = svm\n")),
                  nrc::UsageError);
  CHECK_THROWS_AS(ExperimentConfig::from_kv(nrc::KvMap::parse("ca.feature_cells = 1-2\n")),
                  nrc::UsageError);
  CHECK_THROWS_AS(ExperimentConfig::from_kv(nrc::KvMap::parse("settle.activation = relu\n")),
                  nrc::UsageError);
}

TEST_CASE("output directory creation needs an existing parent") {
  TempDir dir;
  ensure_out_dir(dir.path / "a");
  CHECK(fs::is_directory(dir.path / "a"));
  ensure_out_dir(dir.path / "a");
  CHECK_THROWS_AS(ensure_out_dir(dir.path / "missing" / "b"), nrc::DataError);
  std::ofstream(dir.path / "file") << "x";
  CHECK_THROWS_AS(ensure_out_dir(dir.path / "file"), nrc::DataError);
}

TEST_CASE("ca-run with zero steps writes only the initial frame") {
  TempDir dir;
  ExperimentConfig cfg;
  cfg.out_dir = dir.path / "out";
  cfg.ca.width = 8;
  cfg.ca.height = 6;
  std::ostringstream out, log;
  const auto s = cmd_ca_run(cfg, 0, true, out, log);
  CHECK(s.frames_written == 1);
  CHECK(fs::exists(cfg.out_dir / "chem_000000.ppm"));
  CHECK(fs::exists(cfg.out_dir / "qd_000000.ppm"));
  CHECK_FALSE(fs::exists(cfg.out_dir / "chem_000001.ppm"));
  CHECK(s.qd.cells() == nrc::Grid(8, 6).cells());
  const auto chem = nrc::decode_raw_f64(nrc::io::read_file(cfg.out_dir / "chem_final.f64"), 8, 6);
  CHECK(chem.cells() == s.final_state.chem.cells());
  const auto pattern = nrc::dataset::load_idx_images(cfg.out_dir / "qd_pattern.idx3");
  CHECK(pattern.rows == 6);
  CHECK(pattern.cols == 8);
  CHECK(out.str().find("Mz+") != std::string::npos);
}

TEST_CASE("ca-run reruns are byte-identical") {
  TempDir dir;
  ExperimentConfig cfg;
  cfg.apply_seed(9);
  cfg.ca.width = cfg.ca.height = 10;
  std::ostringstream out, log;
  cfg.out_dir = dir.path / "a";
  cmd_ca_run(cfg, 12, true, out, log);
  cfg.out_dir = dir.path / "b";
  cmd_ca_run(cfg, 12, true, out, log);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir.path / "a")) {
    const auto name = e.path().filename();
    if (name == "ca-run.config") continue;
    CHECK(same_bytes(e.path(), dir.path / "b" / name));
    ++files;
  }
  CHECK(files == 2 * 13 + 4);
}

TEST_CASE("train and eval on a small synthetic dataset") {
  TempDir dir;
  auto cfg = small_config(dir.path);
  std::ostringstream out, log;
  const auto s = cmd_train(cfg, false, out, log);
  CHECK_FALSE(s.states_reused);
  CHECK(s.harvest.states.rows() == 20);
  CHECK(s.harvest.states.cols() == 200);
  CHECK(s.train_accuracy > 0.5);

  const auto model = nrc::readout::ReadoutModel::deserialize(
      nrc::io::read_file(cfg.out_dir / "model.nrom"));
  CHECK(model.weights == s.model.weights);
  const auto rw = nrc::reservoir::ReservoirWeights::deserialize(
      nrc::io::read_file(cfg.out_dir / "reservoir.nrsv"));
  CHECK(rw.neurons() == 20);
  const auto report = nrc::KvMap::load(cfg.out_dir / "train_report.txt");
  CHECK(report.get_int("n_train", 0) == 200);
  CHECK(report.contains("states.checksum"));
  CHECK(ExperimentConfig::from_kv(nrc::KvMap::load(cfg.out_dir / "train.config"))
            .to_kv()
            .format() == cfg.to_kv().format());

  const auto again = cmd_train(cfg, true, out, log);
  CHECK(again.states_reused);
  CHECK(again.states_checksum == s.states_checksum);
  CHECK(again.model.weights == s.model.weights);

  const auto eval = cmd_eval(cfg, EvalOptions{}, out, log);
  CHECK(eval.n_test == 100);
  CHECK(eval.accuracy >= 0.1);
  const auto back =
      nrc::readout::EvalReport::from_kv(nrc::KvMap::load(cfg.out_dir / "eval_report.txt"));
  CHECK(back.accuracy == eval.accuracy);
  CHECK(back.confusion == eval.confusion);
}

TEST_CASE("reuse-states ignores a cache built for other settings") {
  TempDir dir;
  auto cfg = small_config(dir.path);
  std::ostringstream out, log;
  cmd_train(cfg, false, out, log);
  cfg.settle.input_gain = 0.5;
  CHECK_FALSE(cmd_train(cfg, true, out, log).states_reused);
}

TEST_CASE("logistic readout through the train command") {
  TempDir dir;
  auto cfg = small_config(dir.path);
  cfg.readout_kind = nrc::readout::ReadoutKind::kLogistic;
  cfg.logistic.epochs = 20;
  std::ostringstream out, log;
  const auto s = cmd_train(cfg, false, out, log);
  CHECK(s.model.kind == nrc::readout::ReadoutKind::kLogistic);
  CHECK(nrc::KvMap::load(cfg.out_dir / "train_report.txt").contains("logistic.final_loss"));
}

TEST_CASE("eval rejects a model and reservoir of different sizes") {
  TempDir dir;
  auto cfg = small_config(dir.path);
  std::ostringstream out, log;
  cmd_train(cfg, false, out, log);
  const fs::path first_model = dir.path / "model20.nrom";
  fs::copy_file(cfg.out_dir / "model.nrom", first_model);
  cfg.reservoir.neurons = 30;
  cmd_train(cfg, false, out, log);

  EvalOptions opts;
  opts.model = first_model;
  try {
    cmd_eval(cfg, opts, out, log);
    FAIL("expected a dimension mismatch");
  } catch (const nrc::DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("N=20") != std::string::npos);
    CHECK(msg.find("N=30") != std::string::npos);
  }
}

TEST_CASE("command-line tool") {
  TempDir dir;
  auto cfg = small_config(dir.path);
  const fs::path config_file = dir.path / "run.config";
  cfg.to_kv().save(config_file);

  const std::string base = "--config " + config_file.string();
  CHECK(run_cli(base + " train") == 0);
  const std::string model = (cfg.out_dir / "model.nrom").string();
  const std::string res = (cfg.out_dir / "reservoir.nrsv").string();
  const std::string images = (dir.path / "test-img").string();

  std::string text;
  CHECK(run_cli(base + " classify --model " + model + " --reservoir " + res + " --image-file " +
                    images + " --index 0",
                &text) == 0);
  REQUIRE(text.size() == 2);
  CHECK(text[0] >= '0');
  CHECK(text[0] <= '9');
  CHECK(text[1] == '\n');

  CHECK(run_cli(base + " classify --model " + model + " --reservoir " + res + " --image-file " +
                images + " --index 100") == 1);
  CHECK(run_cli("frobnicate") == 1);
  CHECK(run_cli(base + " train --readout svm") == 1);
  CHECK(run_cli(base + " eval --test-images " + (dir.path / "nope").string()) == 2);
  CHECK(run_cli("--out " + (dir.path / "x" / "y").string() + " ca-run --steps 1") == 2);
  CHECK(run_cli(base + " eval") == 0);
}
