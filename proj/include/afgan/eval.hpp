#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "afgan/checkpoint.hpp"
#include "afgan/config.hpp"

namespace afgan {

// Writes num_sets directories set_00, set_01, ... under `out_dir`, each with
// set_size generator samples img_000.png, img_001.png, ... The generator runs
// in eval mode and the noise comes from cfg.seed alone. Returns the set
// directories in order.
std::vector<std::filesystem::path> generate_sets(const Checkpoint& ckpt, const EvalConfig& cfg,
                                                 const std::filesystem::path& out_dir);

// External scoring program. `command` is run through /bin/sh with every `{dir}`
// replaced by the quoted image directory (appended when absent). It must print
// one `filename,score` line per image, score in [0, 1], and exit 0.
struct ClassifierAdapter {
  std::string command;
  double timeout_seconds = 600.0;
  double positive_threshold = 0.5;
};

struct ScoredImage {
  std::string filename;
  double score = 0;
};

// Scores in directory listing order. Throws AdapterError on a nonzero exit,
// timeout, malformed line, unknown, duplicate or missing filename.
std::vector<ScoredImage> classify_images(const std::filesystem::path& dir, const ClassifierAdapter& adapter);

struct SetResult {
  int set_index = 0;
  int accepted = 0;
  int total = 0;
  double accuracy = 0;  // acceptance rate, accepted / total
};

struct EvalReport {
  std::vector<SetResult> per_set;
  double mean_accuracy = 0;
};

// accepted = count(score >= threshold) per set.
EvalReport acceptance_report(const std::vector<std::vector<ScoredImage>>& scores, double threshold);

// Header `set_index,accepted,total,accuracy`, one row per set, then `mean,,,<value>`.
std::string report_csv(const EvalReport& report);

// Classifies every set_* directory under `images_dir` in name order and builds the report.
EvalReport evaluate_sets(const std::filesystem::path& images_dir, const ClassifierAdapter& adapter);

}  // namespace afgan
