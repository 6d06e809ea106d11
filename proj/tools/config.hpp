#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "rqrf/corpus.hpp"
#include "rqrf/model.hpp"
#include "rqrf/simulator.hpp"
#include "rqrf/trainer.hpp"

namespace rqrf::cli {

struct LogSettings {
  std::uint64_t train_requests = 100000;
  std::uint64_t eval_requests = 20000;
};

struct SamplingSettings {
  int neg_ratio = 4;
  double word_noise = 0.1;  // sigma of the "pretrained" word vectors
};

struct VerifySettings {
  ProportionalitySpec spec;
  std::uint64_t draws = 100000;
};

/// Artifact locations; relative paths resolve against the config file's directory.
struct Paths {
  std::filesystem::path universe = "universe.txt";
  std::filesystem::path train_log = "train.log";
  std::filesystem::path eval_log = "eval.log";
  std::filesystem::path samples = "samples.tsv";
  std::filesystem::path checkpoint = "model.ckpt";
  std::filesystem::path trace = "trace.tsv";
};

/// Everything a run needs. Defaults are the reference configuration.
struct RunConfig {
  std::uint64_t seed = 7;
  GenConfig generation;
  LogSettings log;
  SamplingSettings sampling;
  ModelConfig model;
  TrainConfig training;
  AbConfig simulation;
  VerifySettings verify;
  Paths paths;

  /// Parses INI text. Unknown sections or keys and malformed values throw ConfigError.
  static RunConfig parse(std::string_view text, const std::filesystem::path& base_dir = {});

  /// Reads `path`, resolves relative artifact paths against its directory and applies the
  /// RQRF_SEED environment override.
  static RunConfig load(const std::filesystem::path& path);

  /// Propagates the global seed into module configs and validates every section.
  void finalize();

  /// Round-trippable INI rendering (paths as given, not resolved).
  std::string to_ini() const;

  // Stage seeds, all derived from the global seed.
  std::uint64_t universe_seed() const { return seed; }
  std::uint64_t train_log_seed() const;
  std::uint64_t eval_log_seed() const;
  std::uint64_t word_vector_seed() const;
  std::uint64_t sample_seed() const;
};

}  // namespace rqrf::cli
