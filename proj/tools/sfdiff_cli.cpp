// sfdiff: simulate, dataset, train, reconstruct, eval.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sfdiff/checksum.hpp"
#include "sfdiff/config.hpp"
#include "sfdiff/dataset.hpp"
#include "sfdiff/diffusion.hpp"
#include "sfdiff/errors.hpp"
#include "sfdiff/eval.hpp"
#include "sfdiff/kernel_baseline.hpp"
#include "sfdiff/parallel.hpp"
#include "sfdiff/rng.hpp"
#include "sfdiff/room_acoustics.hpp"

namespace fs = std::filesystem;
using namespace sfdiff;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
};

RunConfig load(const Globals& g) {
  RunConfig c = g.config_path.empty() ? RunConfig{} : load_run_config(g.config_path);
  if (g.config_path.empty()) resolve_paths(c.paths, fs::current_path());
  if (g.seed) c.seed = *g.seed;
  if (g.threads) c.threads = *g.threads;
  return c;
}

void finish(RunConfig& c) {
  c.finalize();
  c.validate();
}

fs::path absolute(const std::string& p) { return fs::absolute(p).lexically_normal(); }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string mic_tag(int m) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "m%04d", m);
  return buf;
}

// Samples of a corpus directory grouped by observation count, in file order.
struct GroupedCorpus {
  CorpusManifest manifest;
  std::vector<int> densities;
  std::vector<std::vector<Sample>> groups;
};

GroupedCorpus load_corpus(const fs::path& dir) {
  if (dir.empty()) throw ConfigError("no corpus directory given");
  if (!fs::exists(dir / "manifest.json")) throw ConfigError("no manifest.json in " + dir.string());
  GroupedCorpus out;
  out.manifest = read_manifest(dir / "manifest.json");
  std::map<int, std::vector<Sample>> by_count;
  for (const auto& file : out.manifest.files)
    for (auto& s : read_corpus(dir / file)) by_count[s.mask.count()].push_back(std::move(s));
  for (auto& [m, samples] : by_count) {
    out.densities.push_back(m);
    out.groups.push_back(std::move(samples));
  }
  return out;
}

// All samples in file order.
std::vector<Sample> load_samples(const fs::path& dir) {
  if (dir.empty()) throw ConfigError("no corpus directory given");
  if (!fs::exists(dir / "manifest.json")) throw ConfigError("no manifest.json in " + dir.string());
  std::vector<Sample> all;
  for (const auto& file : read_manifest(dir / "manifest.json").files)
    for (auto& s : read_corpus(dir / file)) all.push_back(std::move(s));
  return all;
}

// ---- simulate --------------------------------------------------------------

struct SimulateArgs {
  std::vector<double> room{3.7, 7.0, 26.1};
  std::vector<double> source{0.9, 0.3, 2.4};
  double t60 = 0.6;
  double plane = 1.25;
  double frequency = 98.0;
  int grid = kGridSize;
  double margin = kDefaultMargin;
  std::string out;
};

int cmd_simulate(const Globals& g, const SimulateArgs& a) {
  RunConfig c = load(g);
  RoomSpec room{a.room.at(0), a.room.at(1), a.room.at(2), a.t60, {a.source.at(0), a.source.at(1), a.source.at(2)}};
  room.speed_of_sound = c.dataset.speed_of_sound;
  Grid grid{a.grid, a.grid, a.plane, room};
  grid.validate();
  if (!(a.frequency > 0.0)) throw DomainError("frequency must be positive");
  const fs::path dir = a.out.empty() ? c.paths.output_dir / "simulate" : absolute(a.out);
  const auto field = simulate_rtf(room, grid, 2.0 * std::numbers::pi * a.frequency, a.margin);
  const auto mag = magnitude(field);

  std::string csv = "i,j,x,y,re,im,magnitude\n";
  char line[256];
  for (int i = 0; i < grid.rows; ++i)
    for (int j = 0; j < grid.cols; ++j) {
      const auto p = grid.position(i, j);
      const auto v = field.values(i, j);
      std::snprintf(line, sizeof line, "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", i, j, p.x, p.y, v.real(), v.imag(),
                    mag.values(i, j));
      csv += line;
    }
  fs::create_directories(dir);
  write_text(dir / "field.csv", csv);
  render_heatmap(mag.values, dir / "magnitude.png");
  std::cout << "wrote " << (dir / "field.csv").string() << " and " << (dir / "magnitude.png").string() << "\n";
  return 0;
}

// ---- dataset ---------------------------------------------------------------

struct DatasetArgs {
  std::string kind;
  std::string out;
  std::optional<int> rooms;
  std::optional<int> freqs;
  std::vector<double> frequency_range;
  bool allow_out_of_protocol = false;
};

int cmd_dataset(const Globals& g, const DatasetArgs& a) {
  RunConfig c = load(g);
  if (a.rooms) (a.kind == "train" ? c.train_rooms : c.test_rooms) = *a.rooms;
  if (a.freqs) c.test_freqs = *a.freqs;
  if (!a.frequency_range.empty()) {
    c.dataset.freq_min = a.frequency_range.at(0);
    c.dataset.freq_max = a.frequency_range.at(1);
  }
  if (a.allow_out_of_protocol) c.dataset.allow_out_of_protocol = true;
  finish(c);
  fs::path dir = a.out.empty() ? (a.kind == "train" ? c.paths.train_corpus : c.paths.test_corpus) : absolute(a.out);
  if (dir.empty()) dir = c.paths.output_dir / a.kind;
  const auto manifest = a.kind == "train"
                            ? build_training_corpus(c.seed, c.train_rooms, c.dataset, dir, c.threads)
                            : build_test_corpus(c.seed, c.test_rooms, c.test_freqs, c.dataset, dir, c.threads);
  std::cout << "wrote " << manifest.sample_count << " " << a.kind << " slices to " << dir.string() << "\n";
  return 0;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string corpus;
  std::string out;
  std::string resume;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<double> learning_rate;
  std::optional<std::string> loss_mask;
  std::optional<std::uint64_t> max_steps;
  std::optional<int> base_width;
  std::optional<int> checkpoint_every;
  bool quiet = false;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
  RunConfig c = load(g);
  if (a.epochs) c.trainer.epochs = *a.epochs;
  if (a.batch_size) c.trainer.batch_size = *a.batch_size;
  if (a.learning_rate) c.trainer.learning_rate = *a.learning_rate;
  if (a.loss_mask) c.trainer.loss_mask = *a.loss_mask == "full-grid" ? LossMask::FullGrid : LossMask::ObservedOnly;
  if (a.max_steps) c.trainer.max_steps = *a.max_steps;
  if (a.base_width) c.denoiser.base_width = *a.base_width;
  if (a.checkpoint_every) c.trainer.checkpoint_every = *a.checkpoint_every;
  finish(c);

  const fs::path corpus_dir = a.corpus.empty() ? c.paths.train_corpus : absolute(a.corpus);
  const fs::path out = a.out.empty() ? (c.paths.checkpoint.empty() ? c.paths.output_dir / "model.sfdc" : c.paths.checkpoint)
                                     : absolute(a.out);
  std::optional<Checkpoint> resume;
  if (!a.resume.empty()) {
    if (!fs::exists(a.resume)) throw ConfigError("checkpoint not found: " + a.resume);
    resume = read_checkpoint(a.resume);
  }
  auto samples = load_samples(corpus_dir);
  if (samples.empty()) throw ConfigError("training corpus is empty");
  Trainer trainer = resume ? Trainer(*resume, c.trainer, std::move(samples))
                           : Trainer(c.denoiser, c.trainer, std::move(samples));

  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  const fs::path loss_path = fs::path(out).replace_extension(".loss.csv");
  std::string csv = resume && fs::exists(loss_path) ? read_text(loss_path) : "step,epoch,loss,mean_gamma\n";
  const auto start = std::chrono::steady_clock::now();
  char line[128];
  trainer.run(trainer.total_steps(), [&](std::uint64_t step, const StepResult& r) {
    const auto epoch = (step - 1) / trainer.steps_per_epoch() + 1;
    std::snprintf(line, sizeof line, "%llu,%llu,%.9g,%.9g\n", static_cast<unsigned long long>(step),
                  static_cast<unsigned long long>(epoch), r.loss, r.mean_gamma);
    csv += line;
    if (c.trainer.checkpoint_every > 0 && step % static_cast<std::uint64_t>(c.trainer.checkpoint_every) == 0 &&
        step < trainer.total_steps()) {
      fs::path snap = out;
      snap.replace_filename(out.stem().string() + "_step" + std::to_string(step) + out.extension().string());
      write_checkpoint(snap.string(), trainer.checkpoint());
    }
    if (!a.quiet && (step % 50 == 0 || step == trainer.total_steps())) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::fprintf(stderr, "step %llu/%llu loss %.5f (%.1fs)\n", static_cast<unsigned long long>(step),
                   static_cast<unsigned long long>(trainer.total_steps()), r.loss, secs);
    }
  });
  write_checkpoint(out.string(), trainer.checkpoint());
  write_text(loss_path, csv);
  std::cout << "checkpoint " << out.string() << " digest " << hex64(checkpoint_digest(read_text(out))) << "\n";
  return 0;
}

// ---- reconstruct -----------------------------------------------------------

struct ReconstructArgs {
  std::string method = "kernel";
  std::string checkpoint;
  std::string corpus;
  std::string out;
  std::vector<int> densities;
  std::optional<std::size_t> limit;
  int figures = 0;
  std::optional<double> lambda;
  bool loo = false;
  std::optional<std::string> baseline_mode;
  std::optional<int> sampling_steps;
  std::optional<std::string> region;
};

int cmd_reconstruct(const Globals& g, const ReconstructArgs& a) {
  RunConfig c = load(g);
  if (a.lambda) c.baseline.lambda = *a.lambda;
  if (a.loo) c.baseline.loo_search = true;
  if (a.baseline_mode) c.baseline.mode = *a.baseline_mode == "complex" ? BaselineMode::Complex : BaselineMode::Magnitude;
  if (a.sampling_steps) c.sampler.steps = *a.sampling_steps;
  if (a.region) c.region = *a.region == "unknown-only" ? Region::UnknownOnly : Region::Full;
  if (!a.densities.empty()) c.densities = a.densities;
  finish(c);

  std::optional<Denoiser<float>> model;
  NoiseSchedule schedule;
  if (a.method == "sf-diff") {
    const fs::path ckpt = a.checkpoint.empty() ? c.paths.checkpoint : absolute(a.checkpoint);
    if (ckpt.empty() || !fs::exists(ckpt)) throw ConfigError("checkpoint not found: " + ckpt.string());
    const auto cp = read_checkpoint(ckpt.string());
    model.emplace(cp.spec, cp.parameters);
    schedule = make_schedule(cp.schedule_steps, cp.beta_min, cp.beta_max);
    if (c.sampler.steps > schedule.steps()) throw ConfigError("sampling steps exceed the checkpoint's schedule");
  }
  const fs::path corpus_dir = a.corpus.empty() ? c.paths.test_corpus : absolute(a.corpus);
  auto corpus = load_corpus(corpus_dir);
  const fs::path dir = a.out.empty() ? c.paths.output_dir / ("reconstruct_" + a.method) : absolute(a.out);
  fs::create_directories(dir);

  std::vector<EvalRecord> records;
  std::string per_sample = "sample_id,m,frequency_hz,ratio,nmse_db\n";
  std::uint64_t offset = 0;
  for (std::size_t d = 0; d < corpus.groups.size(); ++d) {
    const int m = corpus.densities[d];
    auto& samples = corpus.groups[d];
    if (a.limit && samples.size() > *a.limit) samples.resize(*a.limit);
    if (std::find(c.densities.begin(), c.densities.end(), m) == c.densities.end()) {
      offset += samples.size();
      continue;
    }
    std::vector<Field2D<double>> estimates(samples.size());
    parallel_for(samples.size(), c.threads, [&](std::size_t i) {
      if (model) {
        Rng rng = derive_rng(c.seed, streams::kSampling, offset + i);
        estimates[i] = sfdiff::reconstruct(*model, samples[i], schedule, rng, c.sampler).magnitude;
      } else {
        estimates[i] = reconstruct_slice(samples[i], c.baseline);
      }
    });
    std::vector<Sample> out_samples = samples;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      auto& o = out_samples[i];
      for (std::size_t k = 0; k < o.magnitude.size(); ++k) {
        o.magnitude[k] = static_cast<float>(estimates[i][k]);
        o.normalized[k] = static_cast<float>(estimates[i][k] / o.scale);
      }
      const double ratio = squared_error_ratio(estimates[i], as_double(samples[i].magnitude), c.region, &samples[i].mask);
      records.push_back({i, a.method, m, samples[i].frequency_hz, ratio, ratio_to_db(ratio)});
      char line[160];
      std::snprintf(line, sizeof line, "%zu,%d,%.6f,%.9g,%.4f\n", i, m, samples[i].frequency_hz, ratio,
                    ratio_to_db(ratio));
      per_sample += line;
      if (static_cast<int>(i) < a.figures) {
        const auto truth = as_double(samples[i].magnitude);
        const std::vector<Field2D<double>> panels{truth, estimates[i]};
        render_panel(&samples[i].mask, panels, field_range(truth),
                     dir / ("panel_" + mic_tag(m) + "_s" + std::to_string(i) + ".png"));
      }
    }
    write_corpus(dir / ("recon_" + mic_tag(m) + ".sfd"), out_samples);
    offset += samples.size();
  }
  write_text(dir / "per_sample.csv", per_sample);
  const auto rows = aggregate(records);
  write_sweep_csv(dir / "sweep.csv", rows);
  for (const auto& r : rows)
    std::printf("f=%.2f Hz m=%d nmse=%.2f dB (n=%zu)\n", r.frequency_hz, r.m, r.nmse_db, r.n_samples);
  return 0;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string truth;
  std::string recon;
  std::string out;
  std::vector<int> densities;
  std::optional<std::string> region;
};

bool same_slice(const Sample& a, const Sample& b) {
  return a.grid == b.grid && a.frequency_hz == b.frequency_hz && a.mask == b.mask;
}

int cmd_eval(const Globals& g, const EvalArgs& a) {
  RunConfig c = load(g);
  if (a.region) c.region = *a.region == "unknown-only" ? Region::UnknownOnly : Region::Full;
  if (!a.densities.empty()) c.densities = a.densities;
  finish(c);

  const auto truth = load_corpus(a.truth.empty() ? c.paths.test_corpus : absolute(a.truth));
  const fs::path recon_dir = absolute(a.recon);
  std::vector<EvalRecord> primary, other;
  const Region other_region = c.region == Region::Full ? Region::UnknownOnly : Region::Full;
  for (std::size_t d = 0; d < truth.groups.size(); ++d) {
    const int m = truth.densities[d];
    if (std::find(c.densities.begin(), c.densities.end(), m) == c.densities.end()) continue;
    const fs::path file = recon_dir / ("recon_" + mic_tag(m) + ".sfd");
    if (!fs::exists(file)) continue;
    const auto recon = read_corpus(file);
    const auto& ref = truth.groups[d];
    std::string bad;
    for (std::size_t i = 0; i < std::max(ref.size(), recon.size()); ++i)
      if (i >= ref.size() || i >= recon.size() || !same_slice(ref[i], recon[i])) bad += " " + std::to_string(i);
    if (!bad.empty()) throw ConfigError("reconstructions do not match the truth corpus at m=" + std::to_string(m) +
                                        ", sample ids:" + bad);
    for (std::size_t i = 0; i < ref.size(); ++i) {
      const auto est = as_double(recon[i].magnitude);
      const auto t = as_double(ref[i].magnitude);
      const double r1 = squared_error_ratio(est, t, c.region, &ref[i].mask);
      const double r2 = squared_error_ratio(est, t, other_region, &ref[i].mask);
      primary.push_back({i, "", m, ref[i].frequency_hz, r1, ratio_to_db(r1)});
      other.push_back({i, "", m, ref[i].frequency_hz, r2, ratio_to_db(r2)});
    }
  }
  if (primary.empty()) throw ConfigError("nothing to evaluate: no reconstructions matched the requested densities");
  const fs::path out = a.out.empty() ? recon_dir / "eval.csv" : absolute(a.out);
  fs::path companion = out;
  companion.replace_filename(out.stem().string() +
                             (other_region == Region::Full ? "_full" : "_unknown_only") + out.extension().string());
  write_sweep_csv(out, aggregate(primary));
  write_sweep_csv(companion, aggregate(other));
  std::cout << "wrote " << out.string() << " and " << companion.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sound field magnitude reconstruction with conditional diffusion and kernel ridge regression"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Global seed for every random stream");
  app.add_option("--threads", g.threads, "Worker threads (default: machine parallelism)")->check(CLI::PositiveNumber);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Simulate one RTF slice and write field.csv + magnitude.png");
  simulate->add_option("--room", sim.room, "Room dimensions lx ly lz in m")->expected(3)->capture_default_str();
  simulate->add_option("--source", sim.source, "Source position x y z in m")->expected(3)->capture_default_str();
  simulate->add_option("--t60", sim.t60, "Reverberation time in s")->capture_default_str();
  simulate->add_option("--plane", sim.plane, "Measurement plane height in m")->capture_default_str();
  simulate->add_option("--frequency", sim.frequency, "Frequency in Hz")->capture_default_str();
  simulate->add_option("--grid", sim.grid, "Grid cells per side")->capture_default_str();
  simulate->add_option("--margin", sim.margin, "Mode truncation margin")->capture_default_str();
  simulate->add_option("--out", sim.out, "Output directory");

  DatasetArgs ds;
  auto* dataset = app.add_subcommand("dataset", "Build a training or test corpus");
  dataset->add_option("kind", ds.kind, "train or test")->required()->check(CLI::IsMember({"train", "test"}));
  dataset->add_option("--out", ds.out, "Output directory");
  dataset->add_option("--rooms", ds.rooms, "Number of rooms");
  dataset->add_option("--frequencies", ds.freqs, "Test frequencies per room");
  dataset->add_option("--frequency-range", ds.frequency_range, "Frequency range min max in Hz")->expected(2);
  dataset->add_flag("--allow-out-of-protocol", ds.allow_out_of_protocol,
                    "Permit frequencies and room sizes outside the protocol ranges");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train the diffusion denoiser");
  train->add_option("--corpus", tr.corpus, "Training corpus directory");
  train->add_option("--out", tr.out, "Checkpoint path");
  train->add_option("--resume", tr.resume, "Resume from this checkpoint");
  train->add_option("--epochs", tr.epochs, "Epochs")->check(CLI::PositiveNumber);
  train->add_option("--batch-size", tr.batch_size, "Mini-batch size");
  train->add_option("--learning-rate", tr.learning_rate, "Adam learning rate");
  train->add_option("--loss-mask", tr.loss_mask, "observed-only or full-grid")
      ->check(CLI::IsMember({"observed-only", "full-grid"}));
  train->add_option("--max-steps", tr.max_steps, "Stop after this many optimizer steps");
  train->add_option("--base-width", tr.base_width, "U-Net base channel width");
  train->add_option("--checkpoint-every", tr.checkpoint_every, "Steps between intermediate checkpoints");
  train->add_flag("--quiet", tr.quiet, "No progress output");

  ReconstructArgs rc;
  auto* recon = app.add_subcommand("reconstruct", "Reconstruct every slice of a corpus");
  recon->add_option("--method", rc.method, "sf-diff or kernel")
      ->check(CLI::IsMember({"sf-diff", "kernel"}))
      ->capture_default_str();
  recon->add_option("--checkpoint", rc.checkpoint, "Trained checkpoint (sf-diff)");
  recon->add_option("--corpus", rc.corpus, "Corpus directory");
  recon->add_option("--out", rc.out, "Output directory");
  recon->add_option("--densities", rc.densities, "Mic counts to process");
  recon->add_option("--limit", rc.limit, "At most this many slices per density");
  recon->add_option("--figures", rc.figures, "Panels (mask, truth, estimate) per density")->capture_default_str();
  recon->add_option("--lambda", rc.lambda, "Kernel regularization");
  recon->add_flag("--loo", rc.loo, "Select the kernel regularization by leave-one-out");
  recon->add_option("--baseline-mode", rc.baseline_mode, "magnitude or complex")
      ->check(CLI::IsMember({"magnitude", "complex"}));
  recon->add_option("--sampling-steps", rc.sampling_steps, "Reverse diffusion steps");
  recon->add_option("--region", rc.region, "full or unknown-only")->check(CLI::IsMember({"full", "unknown-only"}));

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Score reconstructions against a corpus");
  eval->add_option("--truth", ev.truth, "Ground-truth corpus directory");
  eval->add_option("--recon", ev.recon, "Directory written by reconstruct")->required();
  eval->add_option("--out", ev.out, "Sweep CSV path");
  eval->add_option("--densities", ev.densities, "Mic counts to score");
  eval->add_option("--region", ev.region, "full or unknown-only")->check(CLI::IsMember({"full", "unknown-only"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*simulate) return cmd_simulate(g, sim);
    if (*dataset) return cmd_dataset(g, ds);
    if (*train) return cmd_train(g, tr);
    if (*recon) return cmd_reconstruct(g, rc);
    if (*eval) return cmd_eval(g, ev);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DomainError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
