#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "afgan/image.hpp"
#include "afgan/models.hpp"
#include "afgan/optim.hpp"

namespace afgan {

enum class GeneratorLoss { non_saturating, minimax };

struct TrainConfig {
  int batch_size = 16;
  AdamHyper adam;
  int epochs = 3000;
  int latent_dim = 100;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // epochs; 0 writes only the final checkpoint
  int sample_every = 0;      // epochs; 0 disables sample grids
  GeneratorLoss generator_loss = GeneratorLoss::non_saturating;

  void validate() const;
};

struct EvalConfig {
  int num_sets = 10;
  int set_size = 100;
  std::uint64_t seed = 0;
  double positive_threshold = 0.5;
  double classifier_timeout = 600.0;  // seconds

  void validate() const;
};

// Everything a run needs, as one flat key=value document.
struct RunConfig {
  ModelScale scale;
  TrainConfig train;
  AugmentConfig augment;
  EvalConfig eval;

  // Full-sized models at 224x224 with the default training schedule.
  static RunConfig full();
  // 32x32 models small enough to train on one core in minutes.
  static RunConfig desk();

  void validate() const;

  // Applies one `key=value` assignment; throws ConfigError on an unknown key
  // or unparsable value.
  void set(const std::string& key, const std::string& value);

  // Canonical text: every key, fixed order, values round-trip exactly.
  std::string to_text() const;

  static std::vector<std::string> keys();
};

// Parses `key=value` lines (`#` starts a comment) over the defaults in `base`.
RunConfig parse_run_config(const std::string& text, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

}  // namespace afgan
