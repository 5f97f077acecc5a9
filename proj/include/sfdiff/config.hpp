#pragma once

// JSON run configuration shared by the CLI subcommands.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sfdiff/dataset.hpp"
#include "sfdiff/diffusion.hpp"
#include "sfdiff/eval.hpp"
#include "sfdiff/kernel_baseline.hpp"

namespace sfdiff {

struct RunPaths {
  std::filesystem::path output_dir = "out";
  std::filesystem::path train_corpus;  // directory holding manifest.json
  std::filesystem::path test_corpus;
  std::filesystem::path checkpoint;
};

struct RunConfig {
  std::uint64_t seed = 0;
  unsigned threads = 0;  // 0 = machine parallelism
  DatasetConfig dataset;
  int train_rooms = 64;
  int test_rooms = 20;
  int test_freqs = 10;
  DenoiserSpec denoiser;
  TrainerConfig trainer;
  SamplerOptions sampler;
  BaselineOptions baseline;
  Region region = Region::Full;
  std::vector<int> densities{64, 128, 256, 512};
  RunPaths paths;

  // Seeds and thread counts propagated into the nested configs.
  void finalize();
  void validate() const;
};

// Keys missing from the document keep their defaults; unknown keys and
// malformed values raise ConfigError. Relative paths resolve against base_dir.
RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);
std::string dump_run_config(const RunConfig& config);

void resolve_paths(RunPaths& paths, const std::filesystem::path& base_dir);

}  // namespace sfdiff
