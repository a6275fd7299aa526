// Acceptance run: one PASS/FAIL line per criterion. Exit status is the number
// of failed criteria.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "afgan/afgan.h"
#include "afgan/checkpoint.hpp"
#include "afgan/dataset.hpp"
#include "afgan/gradcheck_suite.hpp"
#include "afgan/models.hpp"
#include "afgan/optim.hpp"
#include "afgan/trainer.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace afgan;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

Outcome shapes() {
  const auto t0 = Clock::now();
  const ModelScale s = ModelScale::full();
  const auto G = build_generator<float>(s);
  const auto D = build_discriminator<float>(s);
  const std::vector<Shape> g_want{{1, 150528}, {1, 3072, 7, 7},     {1, 1536, 14, 14}, {1, 768, 28, 28},
                                  {1, 384, 56, 56}, {1, 192, 112, 112}, {1, 3, 224, 224}};
  const std::vector<Shape> d_want{{1, 192, 112, 112}, {1, 384, 56, 56}, {1, 768, 28, 28}, {1, 1536, 14, 14},
                                  {1, 3072, 7, 7},    {1, 150528},      {1, 1}};
  std::vector<Shape> g_got, d_got;
  const auto gs = G.output_shapes(Shape{1, 100});
  for (std::size_t i = 0; i < gs.size(); ++i) {
    const auto k = G.layers()[i]->kind();
    if (k == LayerKind::linear || k == LayerKind::reshape || k == LayerKind::conv_transpose2d) g_got.push_back(gs[i]);
  }
  if (!gs.empty()) g_got.back() = gs.back();
  const auto ds = D.output_shapes(Shape{1, 3, 224, 224});
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto k = D.layers()[i]->kind();
    if (k == LayerKind::conv2d || k == LayerKind::flatten || k == LayerKind::linear) d_got.push_back(ds[i]);
  }
  if (!ds.empty()) d_got.back() = ds.back();
  const double dt = seconds_since(t0);
  std::ostringstream os;
  os << "G " << g_got.size() << "/" << g_want.size() << " stages, D " << d_got.size() << "/" << d_want.size()
     << " stages, " << dt << " s";
  return {g_got == g_want && d_got == d_want && dt < 1.0, os.str()};
}

Outcome gradients() {
  const auto t0 = Clock::now();
  const auto checks = run_gradcheck_suite(1e-4);
  const double dt = seconds_since(t0);
  bool ok = !checks.empty();
  double worst = 0;
  std::string failed;
  for (const auto& c : checks) {
    worst = std::max(worst, c.report.max_rel_error);
    if (!c.report.passed) {
      ok = false;
      failed += " " + c.name;
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu checks, max rel error %.2e, %.1f s", checks.size(), worst, dt);
  return {ok && dt < 120.0, buf + (failed.empty() ? std::string() : "; failed:" + failed)};
}

Outcome conv_oracles() {
  Rng rng(2024);
  double worst = 0, worst_adj = 0;
  int instances = 0;
  while (instances < 60) {
    const int n = 1 + static_cast<int>(rng.below(2)), c = 1 + static_cast<int>(rng.below(3));
    const int o = 1 + static_cast<int>(rng.below(3)), k = 1 + static_cast<int>(rng.below(4));
    const int s = 1 + static_cast<int>(rng.below(2)), p = static_cast<int>(rng.below(2));
    const int oh = 1 + static_cast<int>(rng.below(4));
    const int h = (oh - 1) * s + k - 2 * p;
    if (h < 1 || p >= k) continue;
    const ConvGeometry geo{{s, s}, {p, p}};
    using Tf = Tensor<float>;
    const Tf x = oracle::random<float>(Shape{n, c, h, h}, rng), w = oracle::random<float>(Shape{o, c, k, k}, rng);
    const Tf b = oracle::random<float>(Shape{o}, rng);
    worst = std::max(worst, oracle::max_abs_diff(conv2d(x, w, &b, geo), oracle::conv2d(x, w, &b, s, s, p, p)));
    const Tf y = oracle::random<float>(Shape{n, o, oh, oh}, rng);
    const Tf wt = oracle::random<float>(Shape{o, c, k, k}, rng);
    const Tf bt = oracle::random<float>(Shape{c}, rng);
    worst = std::max(worst, oracle::max_abs_diff(conv_transpose2d(y, wt, &bt, geo),
                                                 oracle::conv_transpose2d(y, wt, &bt, s, s, p, p)));
    using Td = Tensor<double>;
    const Td xd = oracle::random<double>(Shape{n, c, h, h}, rng), wd = oracle::random<double>(Shape{o, c, k, k}, rng);
    const Td yd = oracle::random<double>(Shape{n, o, oh, oh}, rng);
    const Td* none = nullptr;
    const double lhs = oracle::dot(conv2d(xd, wd, none, geo), yd);
    const double rhs = oracle::dot(xd, conv_transpose2d(yd, wd, none, geo));
    worst_adj = std::max(worst_adj, std::abs(lhs - rhs) / std::max(std::abs(lhs), 1e-12));
    ++instances;
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d instances each, max |diff| %.2e, adjoint rel err %.2e", instances, worst, worst_adj);
  return {worst < 1e-5 && worst_adj < 1e-5, buf};
}

Outcome adam() {
  using Td = Tensor<double>;
  const AdamHyper h{0.0002, 0.5, 0.999, 1e-8};
  Rng rng(5);
  Td p = oracle::random<double>(Shape{8}, rng), m = Td::zeros(Shape{8}), v = Td::zeros(Shape{8});
  oracle::AdamReference ref{h.learning_rate, h.beta1, h.beta2, h.eps, {}, {}, 0};
  std::vector<double> rp(p.data().begin(), p.data().end());
  for (int t = 1; t <= 3; ++t) {
    const Td g = oracle::random<double>(Shape{8}, rng, -3, 3);
    adam_update(p, g, m, v, t, h);
    ref.step(rp, std::vector<double>(g.data().begin(), g.data().end()));
  }
  double worst = 0;
  for (int i = 0; i < 8; ++i) worst = std::max(worst, std::abs(p[i] - rp[i]));
  Td q = Td::scalar(0), mq = Td::scalar(0), vq = Td::scalar(0);
  adam_update(q, Td::scalar(1), mq, vq, 1, h);
  char buf[160];
  std::snprintf(buf, sizeof buf, "3-step max diff %.1e, first step %.10f", worst, q.item());
  return {worst < 1e-12 && std::abs(q.item() + 0.0002) < 1e-10, buf};
}

Outcome equilibrium() {
  const auto t0 = Clock::now();
  RunConfig cfg = RunConfig::desk();
  cfg.train.epochs = 200;
  const ImageDataset data(fixtures::blob_dataset(512, 32, 7), cfg.augment);
  Trainer trainer(cfg);
  bool finite = true;
  double real = 0, fake = 0;
  int rows = 0;
  for (int e = 0; e < cfg.train.epochs; ++e) {
    for (const auto& r : trainer.run_epoch(data)) {
      finite = finite && std::isfinite(r.d_loss) && std::isfinite(r.g_loss);
      if (e >= cfg.train.epochs - 20) {
        real += r.d_real_mean;
        fake += r.d_fake_mean;
        ++rows;
      }
    }
  }
  real /= rows;
  fake /= rows;
  const double dt = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf, "final-20-epoch D(real) %.3f D(fake) %.3f, losses %s, %.0f s", real, fake,
                finite ? "finite" : "NON-FINITE", dt);
  const auto in_band = [](double x) { return x > 0.3 && x < 0.7; };
  return {finite && in_band(real) && in_band(fake) && dt < 900.0, buf};
}

Outcome protocol(const fs::path& work) {
  const auto t0 = Clock::now();
  const fs::path ckpt = work / "init.afge", images = work / "images", report = work / "report.csv";
  save_checkpoint(Trainer(RunConfig::desk()).checkpoint(), ckpt);
  if (afgan_generate(ckpt.c_str(), 10, 100, 0, images.c_str()) != AFGAN_OK) return {false, afgan_last_error()};
  const std::string cmd = std::string(AFGAN_MOCK_CLASSIFIER) + " --positives 40 {dir}";
  afgan_report* r = nullptr;
  if (afgan_evaluate(images.c_str(), cmd.c_str(), 0.5, 600, report.c_str(), &r) != AFGAN_OK) {
    return {false, afgan_last_error()};
  }
  afgan_report_free(r);
  std::string expected = "set_index,accepted,total,accuracy\n";
  for (int k = 0; k < 10; ++k) expected += std::to_string(k) + ",40,100,0.400000\n";
  expected += "mean,,,0.400000\n";
  const double dt = seconds_since(t0);
  const bool ok = read_all(report) == expected;
  char buf[160];
  std::snprintf(buf, sizeof buf, "report.csv %s, %.1f s", ok ? "10 x 0.400, mean 0.400" : "differs", dt);
  return {ok && dt < 120.0, buf};
}

Outcome determinism(const fs::path& work) {
  RunConfig cfg = RunConfig::desk();
  const ImageDataset data(fixtures::blob_dataset(64, 32, 11), cfg.augment);
  const auto run = [&](int epochs, const fs::path& dir, const Checkpoint* resume) {
    RunConfig c = cfg;
    c.train.epochs = epochs;
    return train(c, data, {dir, {}}, resume);
  };
  run(4, work / "a", nullptr);
  run(4, work / "b", nullptr);
  const auto half = run(2, work / "c", nullptr);
  run(4, work / "c", &half.final_checkpoint);
  const auto same = [&](const char* x, const char* y, const char* file) {
    return read_all(work / x / file) == read_all(work / y / file) && !read_all(work / x / file).empty();
  };
  const bool repeat = same("a", "b", "checkpoint.afge") && same("a", "b", "metrics.csv");
  const bool resume = same("a", "c", "checkpoint.afge") && same("a", "c", "metrics.csv");
  return {repeat && resume, std::string("repeat ") + (repeat ? "identical" : "DIFFERS") + ", 2+2 vs 4 " +
                                (resume ? "identical" : "DIFFERS")};
}

Outcome preprocessing() {
  PixelBuffer px(1, 2, 3);
  for (int c = 0; c < 3; ++c) px.at(0, 1, c) = 255;
  const auto t = normalize(px);
  bool exact = true;
  for (int c = 0; c < 3; ++c) exact = exact && t[c * 2] == -1.0f && t[c * 2 + 1] == 1.0f;

  constexpr int draws = 10000;
  Rng rng(8);
  int flips = 0;
  for (int i = 0; i < draws; ++i) flips += !(random_horizontal_flip(px, 0.5, rng) == px);
  const double freq = static_cast<double>(flips) / draws;

  const AugmentConfig aug;
  double area = 0;
  for (int i = 0; i < draws; ++i) {
    const CropBox b = sample_crop(aug.resize_size, aug.resize_size, aug, rng);
    area += static_cast<double>(b.side) * b.side / (aug.resize_size * aug.resize_size);
  }
  area /= draws;
  const double mid = 0.5 * (aug.crop_scale_lo + aug.crop_scale_hi);
  char buf[160];
  std::snprintf(buf, sizeof buf, "normalize %s, flip freq %.4f, mean crop area %.4f (midpoint %.2f)",
                exact ? "exact" : "INEXACT", freq, area, mid);
  return {exact && std::abs(freq - 0.5) < 0.02 && std::abs(area - mid) < 0.02, buf};
}

Outcome param_counts() {
  const std::string text = param_report_text(ModelScale::full());
  const auto G = build_generator<float>(ModelScale::full());
  const auto D = build_discriminator<float>(ModelScale::full());
  int missing = 0;
  for (const auto& rep : {count_params(G), count_params(D)})
    for (const auto& l : rep.layers)
      if (text.find(l.layer) == std::string::npos || text.find(std::to_string(l.as_built)) == std::string::npos) ++missing;
  const bool flagged = text.find("DISCREPANCY") != std::string::npos;
  return {missing == 0 && flagged, std::to_string(missing) + " layers missing, discrepancy " +
                                       (flagged ? "flagged" : "NOT flagged")};
}

}  // namespace

int main() {
  fixtures::TempDir work("acceptance");
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "shape conformance", shapes},
      {2, "gradient suite", gradients},
      {3, "convolution oracles", conv_oracles},
      {4, "optimizer oracle", adam},
      {5, "desk-scale adversarial run", equilibrium},
      {6, "protocol with mock classifier", [&] { return protocol(work / "protocol"); }},
      {7, "determinism and resume", [&] { return determinism(work / "determinism"); }},
      {8, "preprocessing conformance", preprocessing},
      {9, "parameter-count report", param_counts},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %d %-30s %s  %s\n", c.id, c.name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return failed;
}
