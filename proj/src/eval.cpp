#include "afgan/eval.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <cstring>
#include <map>
#include <sstream>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include "afgan/error.hpp"
#include "afgan/image.hpp"
#include "afgan/trainer.hpp"

namespace afgan {

namespace {

constexpr int kGenerateChunk = 25;

std::string zero_pad(int v, int width) {
  std::string s = std::to_string(v);
  return std::string(s.size() < static_cast<std::size_t>(width) ? width - s.size() : 0, '0') + s;
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

bool is_image_name(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

struct ProcessOutput {
  std::string out;
  int status = 0;
  bool timed_out = false;
};

ProcessOutput run_shell(const std::string& command, double timeout_seconds) {
  int fds[2];
  if (pipe(fds) != 0) throw AdapterError(std::string("pipe failed: ") + std::strerror(errno));
  const pid_t pid = fork();
  if (pid < 0) {
    close(fds[0]);
    close(fds[1]);
    throw AdapterError(std::string("fork failed: ") + std::strerror(errno));
  }
  if (pid == 0) {
    setpgid(0, 0);
    dup2(fds[1], STDOUT_FILENO);
    close(fds[0]);
    close(fds[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  setpgid(pid, pid);
  close(fds[1]);
  ProcessOutput res;
  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::milliseconds(static_cast<long long>(timeout_seconds * 1000));
  char buf[4096];
  for (;;) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      res.timed_out = true;
      break;
    }
    pollfd pfd{fds[0], POLLIN, 0};
    const int rc = poll(&pfd, 1, static_cast<int>(std::min<long long>(left.count(), 1000)));
    if (rc < 0 && errno == EINTR) continue;
    if (rc == 0) continue;
    const ssize_t n = read(fds[0], buf, sizeof buf);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    res.out.append(buf, static_cast<std::size_t>(n));
  }
  close(fds[0]);
  if (res.timed_out) kill(-pid, SIGKILL);
  int status = 0;
  while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  res.status = status;
  return res;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<std::filesystem::path> generate_sets(const Checkpoint& ckpt, const EvalConfig& cfg,
                                                 const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  cfg.validate();
  auto [run, G] = load_generator(ckpt);
  G.set_mode(Mode::eval);
  Rng rng(cfg.seed);
  std::vector<fs::path> dirs;
  std::error_code ec;
  for (int s = 0; s < cfg.num_sets; ++s) {
    const fs::path dir = out_dir / ("set_" + zero_pad(s, 2));
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create " + dir.string());
    for (int start = 0; start < cfg.set_size; start += kGenerateChunk) {
      const int n = std::min(kGenerateChunk, cfg.set_size - start);
      const Tensor<float> images = G.forward(sample_noise<float>(n, run.scale.latent_dim, rng));
      const auto& sh = images.shape();
      const std::int64_t per = sh[1] * sh[2] * sh[3];
      for (int i = 0; i < n; ++i) {
        std::vector<float> one(images.data().begin() + i * per, images.data().begin() + (i + 1) * per);
        save_png(denormalize(Tensor<float>(Shape{sh[1], sh[2], sh[3]}, std::move(one))),
                 dir / ("img_" + zero_pad(start + i, 3) + ".png"));
      }
    }
    dirs.push_back(dir);
  }
  return dirs;
}

std::vector<ScoredImage> classify_images(const std::filesystem::path& dir, const ClassifierAdapter& adapter) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw AdapterError("image directory not found: " + dir.string());
  std::vector<std::string> expected;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_name(e.path())) expected.push_back(e.path().filename().string());
  std::sort(expected.begin(), expected.end());

  std::string command = adapter.command;
  const std::string quoted = shell_quote(dir.string());
  if (command.find("{dir}") == std::string::npos) {
    command += " " + quoted;
  } else {
    for (auto pos = command.find("{dir}"); pos != std::string::npos; pos = command.find("{dir}", pos + quoted.size()))
      command.replace(pos, 5, quoted);
  }
  const auto res = run_shell(command, adapter.timeout_seconds);
  if (res.timed_out) {
    throw AdapterError("classifier timed out after " + std::to_string(adapter.timeout_seconds) + " s on " + dir.string());
  }
  if (!WIFEXITED(res.status) || WEXITSTATUS(res.status) != 0) {
    const std::string how = WIFEXITED(res.status) ? "exit status " + std::to_string(WEXITSTATUS(res.status))
                                                  : "signal " + std::to_string(WTERMSIG(res.status));
    throw AdapterError("classifier failed with " + how + " on " + dir.string());
  }

  std::map<std::string, double> scored;
  std::istringstream in(res.out);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto bad = [&](const std::string& why) {
      return AdapterError("classifier output line " + std::to_string(lineno) + " `" + t + "`: " + why);
    };
    const auto comma = t.rfind(',');
    if (comma == std::string::npos) throw bad("expected filename,score");
    std::string name = trim(t.substr(0, comma));
    const std::string score_text = trim(t.substr(comma + 1));
    if (name.rfind("./", 0) == 0) name.erase(0, 2);
    double score = 0;
    const auto* end = score_text.data() + score_text.size();
    const auto r = std::from_chars(score_text.data(), end, score);
    if (name.empty() || r.ec != std::errc() || r.ptr != end) throw bad("expected filename,score");
    if (!(score >= 0.0 && score <= 1.0)) throw bad("score outside [0, 1]");
    if (!std::binary_search(expected.begin(), expected.end(), name)) throw bad("no such image in " + dir.string());
    if (!scored.emplace(name, score).second) throw bad("duplicate score for " + name);
  }
  std::vector<ScoredImage> out;
  for (const auto& name : expected) {
    auto it = scored.find(name);
    if (it == scored.end()) throw AdapterError("classifier did not score " + (dir / name).string());
    out.push_back({name, it->second});
  }
  return out;
}

EvalReport acceptance_report(const std::vector<std::vector<ScoredImage>>& scores, double threshold) {
  EvalReport report;
  double sum = 0;
  for (std::size_t s = 0; s < scores.size(); ++s) {
    SetResult r;
    r.set_index = static_cast<int>(s);
    r.total = static_cast<int>(scores[s].size());
    r.accepted = static_cast<int>(
        std::count_if(scores[s].begin(), scores[s].end(), [&](const ScoredImage& i) { return i.score >= threshold; }));
    r.accuracy = r.total ? static_cast<double>(r.accepted) / r.total : 0.0;
    sum += r.accuracy;
    report.per_set.push_back(r);
  }
  report.mean_accuracy = scores.empty() ? 0.0 : sum / static_cast<double>(scores.size());
  return report;
}

std::string report_csv(const EvalReport& report) {
  std::string out = "set_index,accepted,total,accuracy\n";
  char buf[128];
  for (const auto& r : report.per_set) {
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%.6f\n", r.set_index, r.accepted, r.total, r.accuracy);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "mean,,,%.6f\n", report.mean_accuracy);
  return out + buf;
}

EvalReport evaluate_sets(const std::filesystem::path& images_dir, const ClassifierAdapter& adapter) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(images_dir)) throw IoError("image directory not found: " + images_dir.string());
  std::vector<fs::path> sets;
  for (const auto& e : fs::directory_iterator(images_dir))
    if (e.is_directory() && e.path().filename().string().rfind("set_", 0) == 0) sets.push_back(e.path());
  std::sort(sets.begin(), sets.end());
  if (sets.empty()) throw IoError("no set_* directories under " + images_dir.string());
  std::vector<std::vector<ScoredImage>> scores;
  for (const auto& dir : sets) scores.push_back(classify_images(dir, adapter));
  return acceptance_report(scores, adapter.positive_threshold);
}

}  // namespace afgan
