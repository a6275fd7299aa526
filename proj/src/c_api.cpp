#include "afgan/afgan.h"

#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <new>
#include <string>

#include "afgan/config.hpp"
#include "afgan/dataset.hpp"
#include "afgan/error.hpp"
#include "afgan/eval.hpp"
#include "afgan/gradcheck_suite.hpp"
#include "afgan/models.hpp"
#include "afgan/trainer.hpp"

struct afgan_config {
  afgan::RunConfig cfg;
};

struct afgan_report {
  afgan::EvalReport report;
};

namespace {

thread_local std::string g_last_error;
afgan_log_fn g_log = nullptr;
void* g_log_user = nullptr;

void log_line(const std::string& s) {
  if (g_log) g_log(s.c_str(), g_log_user);
}

afgan_status status_of(afgan::ErrorKind kind) {
  using afgan::ErrorKind;
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::contract:
    case ErrorKind::shape:
      return AFGAN_ERR_CONFIG;
    case ErrorKind::ingest:
    case ErrorKind::io:
      return AFGAN_ERR_DATA;
    case ErrorKind::numerical:
      return AFGAN_ERR_NUMERIC;
    case ErrorKind::adapter:
      return AFGAN_ERR_ADAPTER;
    case ErrorKind::format:
      return AFGAN_ERR_FORMAT;
  }
  return AFGAN_ERR_INTERNAL;
}

template <typename F>
afgan_status guarded(F&& body) {
  try {
    g_last_error.clear();
    return body();
  } catch (const afgan::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return AFGAN_ERR_DATA;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return AFGAN_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return AFGAN_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return AFGAN_ERR_INTERNAL;
  }
}

std::string format_number(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

afgan_status fail(afgan_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

afgan_status copy_out(const std::string& s, char* buf, size_t cap, size_t* needed) {
  if (needed) *needed = s.size();
  if (buf && cap > 0) {
    const size_t n = std::min(cap - 1, s.size());
    std::memcpy(buf, s.data(), n);
    buf[n] = '\0';
  }
  return AFGAN_OK;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw afgan::IoError("cannot write " + path.string());
  out << text;
  if (!out) throw afgan::IoError("short write to " + path.string());
}

}  // namespace

extern "C" {

const char* afgan_version(void) { return "0.1.0"; }

const char* afgan_last_error(void) { return g_last_error.c_str(); }

void afgan_set_log(afgan_log_fn fn, void* user) {
  g_log = fn;
  g_log_user = user;
}

afgan_status afgan_set_threads(int threads) {
  if (threads < 1) return fail(AFGAN_ERR_CONFIG, "thread count must be >= 1");
  g_last_error.clear();
  return AFGAN_OK;
}

afgan_status afgan_config_new(const char* preset, afgan_config** out) {
  if (!out) return fail(AFGAN_ERR_CONFIG, "afgan_config_new: out is NULL");
  return guarded([&] {
    const std::string name = preset ? preset : "full";
    afgan::RunConfig cfg;
    if (name == "full") cfg = afgan::RunConfig::full();
    else if (name == "desk") cfg = afgan::RunConfig::desk();
    else throw afgan::ConfigError("unknown preset `" + name + "` (expected full or desk)");
    *out = new afgan_config{cfg};
    return AFGAN_OK;
  });
}

void afgan_config_free(afgan_config* cfg) { delete cfg; }

afgan_status afgan_config_load(afgan_config* cfg, const char* path) {
  if (!cfg || !path) return fail(AFGAN_ERR_CONFIG, "afgan_config_load: NULL argument");
  return guarded([&] {
    cfg->cfg = afgan::load_run_config(path, cfg->cfg);
    return AFGAN_OK;
  });
}

afgan_status afgan_config_set(afgan_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return fail(AFGAN_ERR_CONFIG, "afgan_config_set: NULL argument");
  return guarded([&] {
    cfg->cfg.set(key, value);
    return AFGAN_OK;
  });
}

afgan_status afgan_config_validate(const afgan_config* cfg) {
  if (!cfg) return fail(AFGAN_ERR_CONFIG, "afgan_config_validate: NULL config");
  return guarded([&] {
    cfg->cfg.validate();
    return AFGAN_OK;
  });
}

afgan_status afgan_config_text(const afgan_config* cfg, char* buf, size_t cap, size_t* needed) {
  if (!cfg) return fail(AFGAN_ERR_CONFIG, "afgan_config_text: NULL config");
  return guarded([&] { return copy_out(cfg->cfg.to_text(), buf, cap, needed); });
}

afgan_status afgan_train(const afgan_config* cfg, const char* data_dir, const char* out_dir,
                         const char* resume_checkpoint) {
  if (!cfg || !data_dir || !out_dir) return fail(AFGAN_ERR_CONFIG, "afgan_train: NULL argument");
  return guarded([&] {
    cfg->cfg.validate();
    std::optional<afgan::Checkpoint> resume;
    if (resume_checkpoint) {
      try {
        resume = afgan::load_checkpoint(resume_checkpoint);
      } catch (const afgan::IoError& e) {
        throw afgan::ConfigError(e.what());
      }
    }
    const auto records = afgan::scan_image_dir(data_dir);
    if (records.empty()) throw afgan::IngestError(std::string("no PNG or JPEG images under ") + data_dir);
    const afgan::ImageDataset data(records, cfg->cfg.augment, log_line);
    log_line("loaded " + std::to_string(data.size()) + " images (" + std::to_string(data.skipped()) + " skipped)");
    afgan::TrainOutputs outputs{out_dir, log_line};
    afgan::train(cfg->cfg, data, outputs, resume ? &*resume : nullptr);
    return AFGAN_OK;
  });
}

afgan_status afgan_generate(const char* checkpoint, int sets, int count, uint64_t seed, const char* out_dir) {
  if (!checkpoint || !out_dir) return fail(AFGAN_ERR_CONFIG, "afgan_generate: NULL argument");
  return guarded([&] {
    afgan::Checkpoint ckpt;
    try {
      ckpt = afgan::load_checkpoint(checkpoint);
    } catch (const afgan::IoError& e) {
      throw afgan::FormatError(e.what());
    }
    afgan::RunConfig cfg = afgan::parse_run_config(ckpt.config_text);
    cfg.eval.num_sets = sets;
    cfg.eval.set_size = count;
    cfg.eval.seed = seed;
    cfg.eval.validate();
    std::filesystem::create_directories(out_dir);
    afgan::generate_sets(ckpt, cfg.eval, out_dir);
    write_text(std::filesystem::path(out_dir) / "run_config.txt", cfg.to_text());
    return AFGAN_OK;
  });
}

afgan_status afgan_evaluate(const char* images_dir, const char* classifier_cmd, double threshold,
                            double timeout_seconds, const char* report_path, afgan_report** out) {
  if (!images_dir || !classifier_cmd) return fail(AFGAN_ERR_CONFIG, "afgan_evaluate: NULL argument");
  return guarded([&] {
    afgan::EvalConfig ec;
    ec.positive_threshold = threshold;
    ec.classifier_timeout = timeout_seconds;
    ec.validate();
    afgan::ClassifierAdapter adapter{classifier_cmd, timeout_seconds, threshold};
    auto report = afgan::evaluate_sets(images_dir, adapter);
    if (report_path) {
      const std::filesystem::path path(report_path);
      if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
      write_text(path, afgan::report_csv(report));
      std::filesystem::path echo = path;
      echo.replace_filename(path.stem().string() + "_run_config.txt");
      write_text(echo, "images=" + std::string(images_dir) + "\nclassifier_cmd=" + classifier_cmd +
                           "\npositive_threshold=" + format_number(threshold) +
                           "\nclassifier_timeout=" + format_number(timeout_seconds) + "\n");
    }
    if (out) *out = new afgan_report{std::move(report)};
    return AFGAN_OK;
  });
}

void afgan_report_free(afgan_report* report) { delete report; }

size_t afgan_report_sets(const afgan_report* report) { return report ? report->report.per_set.size() : 0; }

afgan_status afgan_report_row(const afgan_report* report, size_t index, int* accepted, int* total, double* accuracy) {
  if (!report || index >= report->report.per_set.size()) return fail(AFGAN_ERR_CONFIG, "report row out of range");
  const auto& r = report->report.per_set[index];
  if (accepted) *accepted = r.accepted;
  if (total) *total = r.total;
  if (accuracy) *accuracy = r.accuracy;
  return AFGAN_OK;
}

double afgan_report_mean(const afgan_report* report) { return report ? report->report.mean_accuracy : 0.0; }

afgan_status afgan_gradcheck(double tolerance, afgan_check_fn fn, void* user) {
  if (!(tolerance > 0.0)) return fail(AFGAN_ERR_CONFIG, "tolerance must be > 0");
  return guarded([&] {
    std::string failed;
    for (const auto& c : afgan::run_gradcheck_suite(tolerance)) {
      if (fn) fn(c.name.c_str(), c.report.max_rel_error, c.report.tolerance, c.report.passed ? 1 : 0, user);
      if (!c.report.passed) failed += (failed.empty() ? "" : ", ") + c.name;
    }
    if (!failed.empty()) return fail(AFGAN_ERR_CHECK_FAILED, "gradient checks failed: " + failed);
    return AFGAN_OK;
  });
}

afgan_status afgan_param_report(const afgan_config* cfg, char* buf, size_t cap, size_t* needed) {
  if (!cfg) return fail(AFGAN_ERR_CONFIG, "afgan_param_report: NULL config");
  return guarded([&] { return copy_out(afgan::param_report_text(cfg->cfg.scale), buf, cap, needed); });
}

}  // extern "C"
