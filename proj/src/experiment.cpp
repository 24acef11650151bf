#include "nrc/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "nrc/binary_io.hpp"
#include "nrc/dataset.hpp"
#include "nrc/error.hpp"
#include "nrc/frame_export.hpp"
#include "nrc/rng.hpp"

namespace nrc::cli {

namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kStatesVersion = 1;

const char* const kKnownKeys[] = {
    "seed", "threads", "out",
    "ca.r", "ca.a", "ca.theta0", "ca.theta1", "ca.theta2", "ca.theta3", "ca.neighborhood",
    "ca.width", "ca.height", "ca.init", "ca.feature_cells", "ca.steps", "ca.seed",
    "qd.retention", "qd.chem_gain", "qd.neighbor_gain", "qd.neighborhood", "qd.input_channel",
    "reservoir.neurons", "reservoir.grid_w", "reservoir.grid_h", "reservoir.mu",
    "reservoir.sigma", "reservoir.spectral_target", "reservoir.seed",
    "settle.max_iterations", "settle.tolerance", "settle.activation", "settle.input_gain",
    "readout.kind", "readout.learning_rate", "readout.epochs", "readout.l2_lambda",
    "readout.batch_size", "readout.momentum", "readout.seed",
    "data.train_images", "data.train_labels", "data.test_images", "data.test_labels",
    "data.train_limit", "data.test_limit",
};

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string init_mode_name(ca::InitMode m) {
  return m == ca::InitMode::kRandom ? "random" : "seeded-feature";
}

ca::InitMode parse_init_mode(const std::string& s) {
  if (s == "random") return ca::InitMode::kRandom;
  if (s == "seeded-feature") return ca::InitMode::kSeededFeature;
  throw UsageError("unknown ca.init '" + s + "' (valid: random, seeded-feature)");
}

std::string channel_name(qd::InputChannel c) {
  switch (c) {
    case qd::InputChannel::kRed: return "r";
    case qd::InputChannel::kGreen: return "g";
    case qd::InputChannel::kBlue: return "b";
    case qd::InputChannel::kAlpha: return "alpha";
    case qd::InputChannel::kLuminanceMean: return "luminance-mean";
  }
  return "r";
}

// "x:y x:y ..." (commas also accepted as separators)
std::vector<std::pair<std::size_t, std::size_t>> parse_cells(std::string text) {
  std::replace(text.begin(), text.end(), ',', ' ');
  std::istringstream in(text);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::string item;
  while (in >> item) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw UsageError("ca.feature_cells: expected x:y, got '" + item + "'");
    }
    try {
      out.emplace_back(std::stoul(item.substr(0, colon)), std::stoul(item.substr(colon + 1)));
    } catch (const std::exception&) {
      throw UsageError("ca.feature_cells: expected x:y, got '" + item + "'");
    }
  }
  return out;
}

std::string format_cells(const std::vector<std::pair<std::size_t, std::size_t>>& cells) {
  std::string out;
  for (const auto& [x, y] : cells) {
    if (!out.empty()) out += ' ';
    out += std::to_string(x) + ":" + std::to_string(y);
  }
  return out;
}

std::size_t get_size(const KvMap& kv, const std::string& key, std::size_t fallback) {
  const std::int64_t v = kv.get_int(key, static_cast<std::int64_t>(fallback));
  if (v < 0) throw UsageError("config key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

void write_text(const fs::path& path, const std::string& text) {
  io::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void describe_grid(std::ostream& out, const std::string& layer, const Grid& g,
                   const std::array<const char*, 4>& names) {
  for (std::size_t c = 0; c < 4; ++c) {
    double lo = 1.0, hi = 0.0, sum = 0.0;
    for (const Cell4& cell : g.cells()) {
      lo = std::min(lo, cell[c]);
      hi = std::max(hi, cell[c]);
      sum += cell[c];
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-6s %-6s mean %.6f  min %.6f  max %.6f\n", layer.c_str(),
                  names[c], sum / static_cast<double>(g.size()), lo, hi);
    out << buf;
  }
}

std::uint64_t states_cache_key(const reservoir::ReservoirWeights& rw,
                               const reservoir::SettleConfig& settle,
                               const Eigen::MatrixXd& patterns) {
  std::uint64_t h = io::fnv1a(rw.serialize());
  const std::string desc = std::to_string(settle.max_iterations) + "|" +
                           format_double(settle.tolerance) + "|" +
                           reservoir::to_string(settle.activation) + "|" +
                           format_double(settle.input_gain);
  h = io::fnv1a(std::span(reinterpret_cast<const std::uint8_t*>(desc.data()), desc.size()), h);
  h = io::fnv1a(std::span(reinterpret_cast<const std::uint8_t*>(patterns.data()),
                          static_cast<std::size_t>(patterns.size()) * sizeof(double)),
                h);
  return h;
}

void save_states(const fs::path& path, std::uint64_t key, const reservoir::Harvest& h) {
  io::ByteWriter w;
  w.put_tag("NRST");
  w.put_u32(kStatesVersion);
  w.put_u64(key);
  w.put_u32(static_cast<std::uint32_t>(h.states.rows()));
  w.put_u32(static_cast<std::uint32_t>(h.states.cols()));
  w.put_f64(h.fraction_converged);
  w.put_f64(h.mean_iterations);
  for (Eigen::Index i = 0; i < h.states.size(); ++i) w.put_f64(h.states.data()[i]);
  io::write_file(path, w.bytes());
}

std::optional<reservoir::Harvest> load_states(const fs::path& path, std::uint64_t key) {
  if (!fs::exists(path)) return std::nullopt;
  const auto bytes = io::read_file(path);
  io::ByteReader r(bytes, "states cache");
  r.expect_tag("NRST");
  if (r.u32() != kStatesVersion || r.u64() != key) return std::nullopt;
  const std::uint32_t n = r.u32();
  const std::uint32_t t = r.u32();
  reservoir::Harvest h;
  h.fraction_converged = r.f64();
  h.mean_iterations = r.f64();
  h.states.resize(n, t);
  for (Eigen::Index i = 0; i < h.states.size(); ++i) h.states.data()[i] = r.f64();
  r.expect_end();
  return h;
}

fs::path require_path(const fs::path& p, const char* key) {
  if (p.empty()) throw UsageError(std::string(key) + " is not set (config or flag)");
  return p;
}

void check_pair(const readout::ReadoutModel& model, const reservoir::ReservoirWeights& rw,
                const fs::path& model_path, const fs::path& reservoir_path) {
  if (model.neurons() != rw.neurons()) {
    throw DataError("dimension mismatch: model '" + model_path.string() + "' expects N=" +
                    std::to_string(model.neurons()) + " neurons but reservoir '" +
                    reservoir_path.string() + "' has N=" + std::to_string(rw.neurons()));
  }
}

void check_pixels(std::size_t pattern_len, const reservoir::ReservoirWeights& rw) {
  if (pattern_len != rw.pixels()) {
    throw DataError("dimension mismatch: images have " + std::to_string(pattern_len) +
                    " pixels but the reservoir input grid has P=" + std::to_string(rw.pixels()));
  }
}

}  // namespace

void ExperimentConfig::apply_seed(std::uint64_t master) {
  seed = master;
  ca.seed = subseed(master, SeedComponent::kCellularAutomaton);
  reservoir.seed = master;
  logistic.seed = subseed(master, SeedComponent::kLogisticShuffle);
}

ExperimentConfig ExperimentConfig::from_kv(const KvMap& kv) {
  for (const auto& [key, value] : kv.entries()) {
    if (std::find(std::begin(kKnownKeys), std::end(kKnownKeys), key) == std::end(kKnownKeys)) {
      throw UsageError("unknown config key '" + key + "'");
    }
  }
  ExperimentConfig c;
  c.apply_seed(kv.get_u64("seed", c.seed));
  c.threads = static_cast<unsigned>(std::max<std::size_t>(1, get_size(kv, "threads", 1)));
  c.out_dir = kv.get_string("out", c.out_dir.string());

  c.ca.r = kv.get_double("ca.r", c.ca.r);
  c.ca.a = kv.get_double("ca.a", c.ca.a);
  for (std::size_t i = 0; i < 4; ++i) {
    c.ca.thresholds[i] = kv.get_double("ca.theta" + std::to_string(i), c.ca.thresholds[i]);
  }
  c.ca.neighborhood = parse_neighborhood(kv.get_string("ca.neighborhood", "von-neumann-4"));
  c.ca.width = get_size(kv, "ca.width", c.ca.width);
  c.ca.height = get_size(kv, "ca.height", c.ca.height);
  c.ca.init = parse_init_mode(kv.get_string("ca.init", "random"));
  c.ca.feature_cells = parse_cells(kv.get_string("ca.feature_cells", ""));
  c.ca_steps = kv.get_u64("ca.steps", c.ca_steps);
  c.ca.seed = kv.get_u64("ca.seed", c.ca.seed);

  c.qd.retention = kv.get_double("qd.retention", c.qd.retention);
  c.qd.chem_gain = kv.get_double("qd.chem_gain", c.qd.chem_gain);
  c.qd.neighbor_gain = kv.get_double("qd.neighbor_gain", c.qd.neighbor_gain);
  c.qd.neighborhood = parse_neighborhood(kv.get_string("qd.neighborhood", "von-neumann-4"));
  c.qd_channel = qd::parse_input_channel(kv.get_string("qd.input_channel", "r"));

  c.reservoir.neurons = get_size(kv, "reservoir.neurons", c.reservoir.neurons);
  c.reservoir.grid_w = get_size(kv, "reservoir.grid_w", c.reservoir.grid_w);
  c.reservoir.grid_h = get_size(kv, "reservoir.grid_h", c.reservoir.grid_h);
  c.reservoir.mu = kv.get_double("reservoir.mu", c.reservoir.mu);
  c.reservoir.sigma = kv.get_double("reservoir.sigma", c.reservoir.sigma);
  const std::string target = kv.get_string("reservoir.spectral_target", "none");
  if (target != "none") c.reservoir.spectral_target = kv.get_double("reservoir.spectral_target", 0);
  c.reservoir.seed = kv.get_u64("reservoir.seed", c.reservoir.seed);

  c.settle.max_iterations =
      static_cast<int>(kv.get_int("settle.max_iterations", c.settle.max_iterations));
  c.settle.tolerance = kv.get_double("settle.tolerance", c.settle.tolerance);
  c.settle.activation = reservoir::parse_activation(kv.get_string("settle.activation", "tanh"));
  c.settle.input_gain = kv.get_double("settle.input_gain", c.settle.input_gain);

  c.readout_kind = readout::parse_readout_kind(kv.get_string("readout.kind", "linear"));
  c.logistic.learning_rate = kv.get_double("readout.learning_rate", c.logistic.learning_rate);
  c.logistic.epochs = static_cast<int>(kv.get_int("readout.epochs", c.logistic.epochs));
  c.logistic.l2_lambda = kv.get_double("readout.l2_lambda", c.logistic.l2_lambda);
  c.logistic.batch_size =
      static_cast<int>(kv.get_int("readout.batch_size", c.logistic.batch_size));
  c.logistic.momentum = kv.get_double("readout.momentum", c.logistic.momentum);
  c.logistic.seed = kv.get_u64("readout.seed", c.logistic.seed);

  c.train_images = kv.get_string("data.train_images", "");
  c.train_labels = kv.get_string("data.train_labels", "");
  c.test_images = kv.get_string("data.test_images", "");
  c.test_labels = kv.get_string("data.test_labels", "");
  c.train_limit = get_size(kv, "data.train_limit", 0);
  c.test_limit = get_size(kv, "data.test_limit", 0);

  c.ca.validate();
  c.qd.validate();
  c.reservoir.validate();
  c.settle.validate();
  c.logistic.validate();
  return c;
}

KvMap ExperimentConfig::to_kv() const {
  KvMap kv;
  kv.set("seed", std::to_string(seed));
  kv.set("threads", std::to_string(threads));
  kv.set("out", out_dir.string());

  kv.set("ca.r", format_double(ca.r));
  kv.set("ca.a", format_double(ca.a));
  for (std::size_t i = 0; i < 4; ++i) {
    kv.set("ca.theta" + std::to_string(i), format_double(ca.thresholds[i]));
  }
  kv.set("ca.neighborhood", to_string(ca.neighborhood));
  kv.set("ca.width", std::to_string(ca.width));
  kv.set("ca.height", std::to_string(ca.height));
  kv.set("ca.init", init_mode_name(ca.init));
  kv.set("ca.feature_cells", format_cells(ca.feature_cells));
  kv.set("ca.steps", std::to_string(ca_steps));
  kv.set("ca.seed", std::to_string(ca.seed));

  kv.set("qd.retention", format_double(qd.retention));
  kv.set("qd.chem_gain", format_double(qd.chem_gain));
  kv.set("qd.neighbor_gain", format_double(qd.neighbor_gain));
  kv.set("qd.neighborhood", to_string(qd.neighborhood));
  kv.set("qd.input_channel", channel_name(qd_channel));

  kv.set("reservoir.neurons", std::to_string(reservoir.neurons));
  kv.set("reservoir.grid_w", std::to_string(reservoir.grid_w));
  kv.set("reservoir.grid_h", std::to_string(reservoir.grid_h));
  kv.set("reservoir.mu", format_double(reservoir.mu));
  kv.set("reservoir.sigma", format_double(reservoir.sigma));
  kv.set("reservoir.spectral_target",
         reservoir.spectral_target ? format_double(*reservoir.spectral_target) : "none");
  kv.set("reservoir.seed", std::to_string(reservoir.seed));

  kv.set("settle.max_iterations", std::to_string(settle.max_iterations));
  kv.set("settle.tolerance", format_double(settle.tolerance));
  kv.set("settle.activation", reservoir::to_string(settle.activation));
  kv.set("settle.input_gain", format_double(settle.input_gain));

  kv.set("readout.kind", readout::to_string(readout_kind));
  kv.set("readout.learning_rate", format_double(logistic.learning_rate));
  kv.set("readout.epochs", std::to_string(logistic.epochs));
  kv.set("readout.l2_lambda", format_double(logistic.l2_lambda));
  kv.set("readout.batch_size", std::to_string(logistic.batch_size));
  kv.set("readout.momentum", format_double(logistic.momentum));
  kv.set("readout.seed", std::to_string(logistic.seed));

  kv.set("data.train_images", train_images.string());
  kv.set("data.train_labels", train_labels.string());
  kv.set("data.test_images", test_images.string());
  kv.set("data.test_labels", test_labels.string());
  kv.set("data.train_limit", std::to_string(train_limit));
  kv.set("data.test_limit", std::to_string(test_limit));
  return kv;
}

void ensure_out_dir(const fs::path& dir) {
  if (fs::is_directory(dir)) return;
  if (fs::exists(dir)) throw DataError("output path '" + dir.string() + "' is not a directory");
  const fs::path parent = dir.has_parent_path() ? dir.parent_path() : fs::path(".");
  if (!fs::is_directory(parent)) {
    throw DataError("cannot create output directory '" + dir.string() + "': parent '" +
                    parent.string() + "' does not exist");
  }
  fs::create_directory(dir);
}

std::uint64_t states_checksum(const Eigen::MatrixXd& states) {
  return io::fnv1a(std::span(reinterpret_cast<const std::uint8_t*>(states.data()),
                             static_cast<std::size_t>(states.size()) * sizeof(double)));
}

CaRunSummary cmd_ca_run(const ExperimentConfig& cfg, std::uint64_t steps, bool export_frames,
                        std::ostream& out, std::ostream& log) {
  ensure_out_dir(cfg.out_dir);
  cfg.to_kv().save(cfg.out_dir / "ca-run.config");

  CaRunSummary summary;
  summary.qd = Grid(cfg.ca.width, cfg.ca.height);
  const ca::FrameSink sink = [&](const ca::CaState& s) {
    if (s.chem.generation() > 0) summary.qd = qd::qd_excite(summary.qd, s.chem, cfg.qd);
    if (!export_frames) return;
    const std::uint64_t gen = s.chem.generation();
    io::write_file(cfg.out_dir / frame_filename("chem", gen), encode_ppm(s.chem, kChemRgb));
    io::write_file(cfg.out_dir / frame_filename("qd", gen), encode_ppm(summary.qd, kQdRgb));
    ++summary.frames_written;
  };
  log << "ca-run: " << cfg.ca.width << "x" << cfg.ca.height << " grid, " << steps << " steps\n";
  summary.final_state = ca::run_ca(cfg.ca, steps, sink);

  io::write_file(cfg.out_dir / "chaos_final.f64", encode_raw_f64(summary.final_state.chaos));
  io::write_file(cfg.out_dir / "chem_final.f64", encode_raw_f64(summary.final_state.chem));
  io::write_file(cfg.out_dir / "qd_final.f64", encode_raw_f64(summary.qd));
  const Eigen::VectorXd pattern = qd::qd_to_input(summary.qd, cfg.qd_channel);
  io::write_file(cfg.out_dir / "qd_pattern.idx3",
                 dataset::serialize_idx_images(
                     dataset::to_raw_images(pattern, cfg.ca.height, cfg.ca.width)));

  out << "generation " << summary.final_state.chem.generation() << "\n";
  describe_grid(out, "chaos", summary.final_state.chaos, {"x1", "x2", "x3", "x4"});
  describe_grid(out, "chem", summary.final_state.chem, {"F", "V", "pH", "Mz+"});
  describe_grid(out, "qd", summary.qd, {"r", "g", "b", "alpha"});
  return summary;
}

TrainSummary cmd_train(const ExperimentConfig& cfg, bool reuse_states, std::ostream& out,
                       std::ostream& log) {
  ensure_out_dir(cfg.out_dir);
  cfg.to_kv().save(cfg.out_dir / "train.config");

  const dataset::LabeledPatternSet train = dataset::load_labeled_set(
      require_path(cfg.train_images, "data.train_images"),
      require_path(cfg.train_labels, "data.train_labels"),
      cfg.train_limit > 0 ? std::optional<std::size_t>(cfg.train_limit) : std::nullopt);
  if (train.rows != cfg.reservoir.grid_h || train.cols != cfg.reservoir.grid_w) {
    throw DataError("dimension mismatch: training images are " + std::to_string(train.rows) +
                    "x" + std::to_string(train.cols) + " but the reservoir grid is " +
                    std::to_string(cfg.reservoir.grid_h) + "x" +
                    std::to_string(cfg.reservoir.grid_w));
  }
  log << "train: " << train.size() << " patterns, N = " << cfg.reservoir.neurons << "\n";

  const auto rw = reservoir::ReservoirWeights::build(cfg.reservoir);
  io::write_file(cfg.out_dir / "reservoir.nrsv", rw.serialize());

  TrainSummary s;
  const fs::path cache = cfg.out_dir / "states.nrst";
  const std::uint64_t key = states_cache_key(rw, cfg.settle, train.patterns);
  std::optional<reservoir::Harvest> cached;
  if (reuse_states) cached = load_states(cache, key);
  if (cached) {
    s.harvest = std::move(*cached);
    s.states_reused = true;
    log << "train: reusing cached states from " << cache << "\n";
  } else {
    log << "train: harvesting reservoir states\n";
    s.harvest = reservoir::harvest_states(train.patterns, rw, cfg.settle, cfg.threads);
    save_states(cache, key, s.harvest);
  }
  s.states_checksum = states_checksum(s.harvest.states);

  KvMap report;
  report.set("n_train", std::to_string(train.size()));
  report.set("neurons", std::to_string(rw.neurons()));
  report.set("readout.kind", readout::to_string(cfg.readout_kind));
  report.set("harvest.fraction_converged", format_double(s.harvest.fraction_converged));
  report.set("harvest.mean_iterations", format_double(s.harvest.mean_iterations));
  report.set("states.checksum", hex64(s.states_checksum));

  if (cfg.readout_kind == readout::ReadoutKind::kLinear) {
    const auto fit =
        readout::train_linear(s.harvest.states, dataset::one_hot(train.labels, 10));
    if (fit.rank_deficient) {
      log << "train: warning: state matrix is rank deficient (rank " << fit.rank << ")\n";
    }
    report.set("linear.rank", std::to_string(fit.rank));
    s.model = fit.model;
  } else {
    log << "train: fitting logistic readout (" << cfg.logistic.epochs << " epochs)\n";
    const auto fit = readout::train_logistic(s.harvest.states, train.labels, 10, cfg.logistic);
    report.set("logistic.final_loss", format_double(fit.final_loss));
    s.model = fit.model;
  }
  io::write_file(cfg.out_dir / "model.nrom", s.model.serialize());

  s.train_accuracy = readout::evaluate(s.model, s.harvest.states, train.labels).accuracy;
  report.set("train.accuracy", format_double(s.train_accuracy));
  report.save(cfg.out_dir / "train_report.txt");
  out << report.format();
  return s;
}

readout::EvalReport cmd_eval(const ExperimentConfig& cfg, const EvalOptions& opts,
                             std::ostream& out, std::ostream& log) {
  ensure_out_dir(cfg.out_dir);
  cfg.to_kv().save(cfg.out_dir / "eval.config");

  const fs::path model_path = opts.model.value_or(cfg.out_dir / "model.nrom");
  const fs::path reservoir_path = opts.reservoir.value_or(cfg.out_dir / "reservoir.nrsv");
  const auto model = readout::ReadoutModel::deserialize(io::read_file(model_path));
  const auto rw = reservoir::ReservoirWeights::deserialize(io::read_file(reservoir_path));
  check_pair(model, rw, model_path, reservoir_path);

  const dataset::LabeledPatternSet test = dataset::load_labeled_set(
      require_path(opts.test_images.value_or(cfg.test_images), "data.test_images"),
      require_path(opts.test_labels.value_or(cfg.test_labels), "data.test_labels"),
      cfg.test_limit > 0 ? std::optional<std::size_t>(cfg.test_limit) : std::nullopt);
  check_pixels(static_cast<std::size_t>(test.patterns.rows()), rw);

  log << "eval: harvesting " << test.size() << " test patterns\n";
  const auto harvest = reservoir::harvest_states(test.patterns, rw, cfg.settle, cfg.threads);
  const auto report = readout::evaluate(model, harvest.states, test.labels);

  KvMap kv = report.to_kv();
  kv.set("harvest.fraction_converged", format_double(harvest.fraction_converged));
  kv.set("harvest.mean_iterations", format_double(harvest.mean_iterations));
  kv.save(cfg.out_dir / "eval_report.txt");
  write_text(cfg.out_dir / "eval_report.table", report.table());
  out << report.table();
  return report;
}

std::size_t cmd_classify(const ExperimentConfig& cfg, const ClassifyOptions& opts) {
  const auto model = readout::ReadoutModel::deserialize(io::read_file(opts.model));
  const auto rw = reservoir::ReservoirWeights::deserialize(io::read_file(opts.reservoir));
  check_pair(model, rw, opts.model, opts.reservoir);

  const dataset::RawImages images = dataset::load_idx_images(opts.image_file);
  if (opts.index >= images.count) {
    throw UsageError("image index " + std::to_string(opts.index) + " out of range; '" +
                     opts.image_file.string() + "' holds indices [0, " +
                     std::to_string(images.count) + ")");
  }
  const std::size_t p = std::size_t{images.rows} * images.cols;
  check_pixels(p, rw);

  dataset::RawImages one;
  one.count = 1;
  one.rows = images.rows;
  one.cols = images.cols;
  const auto begin = images.pixels.begin() + static_cast<std::ptrdiff_t>(opts.index * p);
  one.pixels.assign(begin, begin + static_cast<std::ptrdiff_t>(p));
  const Eigen::MatrixXd pattern = dataset::normalize(one);
  const auto settled = reservoir::settle(pattern.col(0), rw, cfg.settle);
  return readout::classify(settled.state, model);
}

}  // namespace nrc::cli
