#include "sfdiff/config.hpp"

#include <algorithm>
#include <set>
#include <thread>

#include "binary_io.hpp"
#include "json.hpp"
#include "sfdiff/parallel.hpp"

namespace sfdiff {

using nlohmann::json;

namespace {

void expect_keys(const json& j, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(section + ": expected an object");
  const std::set<std::string> names(allowed.begin(), allowed.end());
  for (const auto& item : j.items())
    if (!names.contains(item.key())) throw ConfigError(section + ": unknown key '" + item.key() + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_range(const json& j, const char* key, double& lo, double& hi) {
  if (!j.contains(key)) return;
  const auto& r = j.at(key);
  if (!r.is_array() || r.size() != 2) throw ConfigError(std::string(key) + ": expected [min, max]");
  lo = r.at(0).get<double>();
  hi = r.at(1).get<double>();
}

LossMask parse_loss_mask(const std::string& s) {
  if (s == "observed-only") return LossMask::ObservedOnly;
  if (s == "full-grid") return LossMask::FullGrid;
  throw ConfigError("loss_mask: expected observed-only or full-grid, got '" + s + "'");
}

std::string to_string(LossMask m) { return m == LossMask::ObservedOnly ? "observed-only" : "full-grid"; }

BaselineMode parse_mode(const std::string& s) {
  if (s == "magnitude") return BaselineMode::Magnitude;
  if (s == "complex") return BaselineMode::Complex;
  throw ConfigError("baseline.mode: expected magnitude or complex, got '" + s + "'");
}

Region parse_region(const std::string& s) {
  if (s == "full") return Region::Full;
  if (s == "unknown-only") return Region::UnknownOnly;
  throw ConfigError("region: expected full or unknown-only, got '" + s + "'");
}

void parse_dataset(const json& j, RunConfig& c) {
  expect_keys(j, "dataset",
              {"area_range", "aspect_range", "height_range", "plane_height_range", "frequency_range", "mic_counts",
               "t60", "wall_clearance", "grid", "speed_of_sound", "mode_margin", "allow_out_of_protocol",
               "train_rooms", "test_rooms", "test_frequencies"});
  auto& d = c.dataset;
  read_range(j, "area_range", d.area_min, d.area_max);
  read_range(j, "aspect_range", d.aspect_min, d.aspect_max);
  read_range(j, "height_range", d.height_min, d.height_max);
  read_range(j, "plane_height_range", d.plane_min, d.plane_max);
  read_range(j, "frequency_range", d.freq_min, d.freq_max);
  read(j, "mic_counts", d.mic_counts);
  read(j, "t60", d.t60);
  read(j, "wall_clearance", d.wall_clearance);
  if (j.contains("grid")) {
    const auto g = j.at("grid").get<std::vector<int>>();
    if (g.size() != 2) throw ConfigError("dataset.grid: expected [rows, cols]");
    d.rows = g[0];
    d.cols = g[1];
  }
  read(j, "speed_of_sound", d.speed_of_sound);
  read(j, "mode_margin", d.margin);
  read(j, "allow_out_of_protocol", d.allow_out_of_protocol);
  read(j, "train_rooms", c.train_rooms);
  read(j, "test_rooms", c.test_rooms);
  read(j, "test_frequencies", c.test_freqs);
}

void parse_denoiser(const json& j, DenoiserSpec& s) {
  expect_keys(j, "denoiser", {"base_width", "channel_mults", "res_blocks", "attention_resolutions", "embedding_dim"});
  read(j, "base_width", s.base_width);
  read(j, "channel_mults", s.channel_mults);
  read(j, "res_blocks", s.res_blocks);
  read(j, "attention_resolutions", s.attention_resolutions);
  read(j, "embedding_dim", s.embedding_dim);
}

void parse_training(const json& j, TrainerConfig& t) {
  expect_keys(j, "training",
              {"epochs", "batch_size", "learning_rate", "loss_mask", "schedule_steps", "beta_min", "beta_max",
               "checkpoint_every", "resample_masks", "max_steps"});
  read(j, "epochs", t.epochs);
  read(j, "batch_size", t.batch_size);
  read(j, "learning_rate", t.learning_rate);
  if (j.contains("loss_mask")) t.loss_mask = parse_loss_mask(j.at("loss_mask").get<std::string>());
  read(j, "schedule_steps", t.schedule_steps);
  read(j, "beta_min", t.beta_min);
  read(j, "beta_max", t.beta_max);
  read(j, "checkpoint_every", t.checkpoint_every);
  read(j, "resample_masks", t.resample_masks);
  read(j, "max_steps", t.max_steps);
}

void parse_sampling(const json& j, SamplerOptions& s) {
  expect_keys(j, "sampling", {"steps", "clip_denoised", "headroom"});
  read(j, "steps", s.steps);
  read(j, "clip_denoised", s.clip_denoised);
  read(j, "headroom", s.headroom);
}

void parse_baseline(const json& j, BaselineOptions& b) {
  expect_keys(j, "baseline", {"mode", "lambda", "loo_search", "mode_margin"});
  if (j.contains("mode")) b.mode = parse_mode(j.at("mode").get<std::string>());
  if (j.contains("lambda")) {
    if (j.at("lambda").is_null())
      b.lambda.reset();
    else
      b.lambda = j.at("lambda").get<double>();
  }
  read(j, "loo_search", b.loo_search);
  read(j, "mode_margin", b.margin);
}

void parse_eval(const json& j, RunConfig& c) {
  expect_keys(j, "eval", {"region", "densities"});
  if (j.contains("region")) c.region = parse_region(j.at("region").get<std::string>());
  read(j, "densities", c.densities);
}

void parse_paths(const json& j, RunPaths& p) {
  expect_keys(j, "paths", {"output_dir", "train_corpus", "test_corpus", "checkpoint"});
  auto path = [&](const char* key, std::filesystem::path& out) {
    if (j.contains(key)) out = j.at(key).get<std::string>();
  };
  path("output_dir", p.output_dir);
  path("train_corpus", p.train_corpus);
  path("test_corpus", p.test_corpus);
  path("checkpoint", p.checkpoint);
}

}  // namespace

void resolve_paths(RunPaths& paths, const std::filesystem::path& base_dir) {
  for (auto* p : {&paths.output_dir, &paths.train_corpus, &paths.test_corpus, &paths.checkpoint})
    if (!p->empty()) *p = std::filesystem::absolute(base_dir / *p).lexically_normal();
}

void RunConfig::finalize() {
  if (threads == 0) threads = default_threads();
  trainer.seed = seed;
  trainer.threads = threads;
  denoiser.param_seed = seed;
  denoiser.image_size = dataset.rows;
}

void RunConfig::validate() const {
  try {
    dataset.validate();
    denoiser.validate();
    trainer.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  if (dataset.rows != dataset.cols) throw ConfigError("dataset.grid: the denoiser needs a square grid");
  if (train_rooms < 1 || test_rooms < 1 || test_freqs < 1)
    throw ConfigError("dataset: room and frequency counts must be positive");
  if (sampler.steps < 1 || sampler.steps > trainer.schedule_steps)
    throw ConfigError("sampling.steps must lie in [1, schedule_steps]");
  if (!(sampler.headroom >= 1.0)) throw ConfigError("sampling.headroom must be at least 1");
  if (baseline.lambda && !(*baseline.lambda >= 0.0)) throw ConfigError("baseline.lambda must be non-negative");
  for (int m : densities)
    if (m < 1 || m > dataset.rows * dataset.cols) throw ConfigError("eval.densities: mic count out of range");
}

RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  RunConfig c;
  try {
    const json j = json::parse(json_text);
    expect_keys(j, "config",
                {"seed", "threads", "dataset", "denoiser", "training", "sampling", "baseline", "eval", "paths"});
    read(j, "seed", c.seed);
    read(j, "threads", c.threads);
    if (j.contains("dataset")) parse_dataset(j.at("dataset"), c);
    if (j.contains("denoiser")) parse_denoiser(j.at("denoiser"), c.denoiser);
    if (j.contains("training")) parse_training(j.at("training"), c.trainer);
    if (j.contains("sampling")) parse_sampling(j.at("sampling"), c.sampler);
    if (j.contains("baseline")) parse_baseline(j.at("baseline"), c.baseline);
    if (j.contains("eval")) parse_eval(j.at("eval"), c);
    if (j.contains("paths")) parse_paths(j.at("paths"), c.paths);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  resolve_paths(c.paths, base_dir);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = detail::read_file(path.string());
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return parse_run_config(text, path.parent_path().empty() ? std::filesystem::current_path() : path.parent_path());
}

std::string dump_run_config(const RunConfig& c) {
  const auto& d = c.dataset;
  json j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["dataset"] = {{"area_range", {d.area_min, d.area_max}},
                  {"aspect_range", {d.aspect_min, d.aspect_max}},
                  {"height_range", {d.height_min, d.height_max}},
                  {"plane_height_range", {d.plane_min, d.plane_max}},
                  {"frequency_range", {d.freq_min, d.freq_max}},
                  {"mic_counts", d.mic_counts},
                  {"t60", d.t60},
                  {"wall_clearance", d.wall_clearance},
                  {"grid", {d.rows, d.cols}},
                  {"speed_of_sound", d.speed_of_sound},
                  {"mode_margin", d.margin},
                  {"allow_out_of_protocol", d.allow_out_of_protocol},
                  {"train_rooms", c.train_rooms},
                  {"test_rooms", c.test_rooms},
                  {"test_frequencies", c.test_freqs}};
  j["denoiser"] = {{"base_width", c.denoiser.base_width},
                   {"channel_mults", c.denoiser.channel_mults},
                   {"res_blocks", c.denoiser.res_blocks},
                   {"attention_resolutions", c.denoiser.attention_resolutions},
                   {"embedding_dim", c.denoiser.embedding_dim}};
  const auto& t = c.trainer;
  j["training"] = {{"epochs", t.epochs},
                   {"batch_size", t.batch_size},
                   {"learning_rate", t.learning_rate},
                   {"loss_mask", to_string(t.loss_mask)},
                   {"schedule_steps", t.schedule_steps},
                   {"beta_min", t.beta_min},
                   {"beta_max", t.beta_max},
                   {"checkpoint_every", t.checkpoint_every},
                   {"resample_masks", t.resample_masks},
                   {"max_steps", t.max_steps}};
  j["sampling"] = {{"steps", c.sampler.steps}, {"clip_denoised", c.sampler.clip_denoised},
                   {"headroom", c.sampler.headroom}};
  j["baseline"] = {{"mode", c.baseline.mode == BaselineMode::Magnitude ? "magnitude" : "complex"},
                   {"lambda", c.baseline.lambda ? json(*c.baseline.lambda) : json(nullptr)},
                   {"loo_search", c.baseline.loo_search},
                   {"mode_margin", c.baseline.margin}};
  j["eval"] = {{"region", c.region == Region::Full ? "full" : "unknown-only"}, {"densities", c.densities}};
  j["paths"] = {{"output_dir", c.paths.output_dir.string()},
                {"train_corpus", c.paths.train_corpus.string()},
                {"test_corpus", c.paths.test_corpus.string()},
                {"checkpoint", c.paths.checkpoint.string()}};
  return j.dump(2) + "\n";
}

}  // namespace sfdiff
