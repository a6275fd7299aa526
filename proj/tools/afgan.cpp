#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "afgan/afgan.h"

namespace {

int exit_code(afgan_status s) {
  switch (s) {
    case AFGAN_OK:
      return 0;
    case AFGAN_ERR_FORMAT:
      return 1;
    default:
      return static_cast<int>(s);
  }
}

int report_failure(afgan_status s) {
  std::fflush(stdout);
  std::fprintf(stderr, "afgan: %s\n", afgan_last_error());
  return exit_code(s);
}

void log_to_stderr(const char* line, void*) { std::fprintf(stderr, "%s\n", line); }

std::string config_text(const afgan_config* cfg) {
  size_t n = 0;
  afgan_config_text(cfg, nullptr, 0, &n);
  std::string s(n + 1, '\0');
  afgan_config_text(cfg, s.data(), s.size(), &n);
  s.resize(n);
  return s;
}

struct ConfigArgs {
  std::string preset = "full";
  std::string path;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--preset", preset, "Base settings before the config file")
        ->check(CLI::IsMember({"full", "desk"}))
        ->capture_default_str();
    cmd->add_option("--config", path, "key=value config file");
    cmd->add_option("--set", overrides, "Override one key, e.g. --set epochs=10")->allow_extra_args(false);
  }

  afgan_status resolve(afgan_config** out) const {
    afgan_status s = afgan_config_new(preset.c_str(), out);
    if (s != AFGAN_OK) return s;
    if (!path.empty() && (s = afgan_config_load(*out, path.c_str())) != AFGAN_OK) return s;
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) {
        std::fprintf(stderr, "afgan: --set expects key=value, got `%s`\n", kv.c_str());
        return AFGAN_ERR_CONFIG;
      }
      if ((s = afgan_config_set(*out, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str())) != AFGAN_OK) return s;
    }
    return afgan_config_validate(*out);
  }
};

void print_check(const char* name, double err, double tol, int passed, void*) {
  std::printf("%-18s max_rel_error %.3e  tol %.1e  %s\n", name, err, tol, passed ? "pass" : "FAIL");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DCGAN training, sampling and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(afgan_version()));

  ConfigArgs train_cfg;
  std::string data_dir, out_dir, resume;
  auto* train = app.add_subcommand("train", "Train generator and discriminator on an image directory");
  train_cfg.attach(train);
  train->add_option("--data", data_dir, "Directory of PNG/JPEG images")->required();
  train->add_option("--out", out_dir, "Output directory")->required();
  train->add_option("--resume", resume, "Checkpoint to continue from");

  std::string checkpoint, gen_out;
  int count = 100, sets = 10;
  std::uint64_t seed = 0;
  auto* generate = app.add_subcommand("generate", "Write sets of generated images");
  generate->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
  generate->add_option("--count", count, "Images per set")->capture_default_str();
  generate->add_option("--sets", sets, "Number of sets")->capture_default_str();
  generate->add_option("--seed", seed, "Noise seed")->capture_default_str();
  generate->add_option("--out", gen_out, "Output directory")->required();

  std::string images, classifier, report_path = "report.csv";
  double threshold = 0.5, timeout = 600.0;
  auto* evaluate = app.add_subcommand("evaluate", "Score generated sets with an external classifier");
  evaluate->add_option("--images", images, "Directory holding set_* subdirectories")->required();
  evaluate->add_option("--classifier-cmd", classifier, "Shell command; {dir} is replaced by each set directory")
      ->required();
  evaluate->add_option("--out", report_path, "Report CSV path")->capture_default_str();
  evaluate->add_option("--threshold", threshold, "Score counted as positive")->capture_default_str();
  evaluate->add_option("--timeout", timeout, "Seconds allowed per classifier run")->capture_default_str();

  double tol = 1e-4;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every backward rule");
  gradcheck->add_option("--tol", tol, "Maximum relative error")->capture_default_str();

  ConfigArgs params_cfg;
  auto* params = app.add_subcommand("params", "Per-layer parameter counts");
  params_cfg.attach(params);

  ConfigArgs show_cfg;
  auto* show = app.add_subcommand("config", "Print the resolved configuration");
  show_cfg.attach(show);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and friends exit 0; any real usage error is a config error.
    return app.exit(e) == 0 ? 0 : AFGAN_ERR_CONFIG;
  }

  afgan_set_log(log_to_stderr, nullptr);
  if (const char* threads = std::getenv("AF_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(threads, &end, 10);
    if (end == threads || *end != '\0' || afgan_set_threads(static_cast<int>(n)) != AFGAN_OK) {
      std::fprintf(stderr, "afgan: AF_THREADS must be a positive integer, got `%s`\n", threads);
      return 1;
    }
  }

  afgan_config* cfg = nullptr;
  afgan_status s = AFGAN_OK;

  if (*train) {
    if ((s = train_cfg.resolve(&cfg)) == AFGAN_OK) {
      std::fprintf(stderr, "%s", config_text(cfg).c_str());
      s = afgan_train(cfg, data_dir.c_str(), out_dir.c_str(), resume.empty() ? nullptr : resume.c_str());
    }
  } else if (*generate) {
    s = afgan_generate(checkpoint.c_str(), sets, count, seed, gen_out.c_str());
    if (s == AFGAN_OK) std::printf("wrote %d sets of %d images to %s\n", sets, count, gen_out.c_str());
  } else if (*evaluate) {
    afgan_report* report = nullptr;
    s = afgan_evaluate(images.c_str(), classifier.c_str(), threshold, timeout, report_path.c_str(), &report);
    if (s == AFGAN_OK) {
      for (size_t i = 0; i < afgan_report_sets(report); ++i) {
        int accepted = 0, total = 0;
        double acc = 0;
        afgan_report_row(report, i, &accepted, &total, &acc);
        std::printf("set %02zu  %d/%d  %.3f\n", i, accepted, total, acc);
      }
      std::printf("mean acceptance rate %.3f\n", afgan_report_mean(report));
      afgan_report_free(report);
    }
  } else if (*gradcheck) {
    s = afgan_gradcheck(tol, print_check, nullptr);
  } else if (*params) {
    if ((s = params_cfg.resolve(&cfg)) == AFGAN_OK) {
      size_t n = 0;
      afgan_param_report(cfg, nullptr, 0, &n);
      std::string text(n + 1, '\0');
      afgan_param_report(cfg, text.data(), text.size(), &n);
      text.resize(n);
      std::printf("%s", text.c_str());
    }
  } else if (*show) {
    if ((s = show_cfg.resolve(&cfg)) == AFGAN_OK) std::printf("%s", config_text(cfg).c_str());
  }

  afgan_config_free(cfg);
  if (s != AFGAN_OK) return report_failure(s);
  return 0;
}
