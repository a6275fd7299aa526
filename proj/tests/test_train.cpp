#include <doctest.h>

#include <cmath>
#include <fstream>

#include "afgan/checkpoint.hpp"
#include "afgan/error.hpp"
#include "afgan/models.hpp"
#include "afgan/ops.hpp"
#include "afgan/optim.hpp"
#include "afgan/trainer.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace afgan;
using Td = Tensor<double>;

namespace {

// D(x) = sigmoid(flatten(x) . w + b): a single logit.
Network<double> toy_discriminator(int features, double weight) {
  Network<double> d("D");
  d.add<Flatten<double>>("flat");
  auto& fc = d.add<Linear<double>>("fc", features, 1, true);
  fc.params().weight.value = Td::full(Shape{features, 1}, weight);
  fc.params().weight.grad = Td::zeros(Shape{features, 1});
  d.add<ActivationLayer<double>>("out", Activation::sigmoid);
  d.materialize();
  return d;
}

Network<double> toy_generator(int latent, int features, std::uint64_t seed) {
  Network<double> g("G");
  g.add<Linear<double>>("fc", latent, features, true);
  init_weights(g, seed);
  return g;
}

std::vector<Td> snapshot(Network<double>& net) {
  std::vector<Td> out;
  for (auto* p : net.parameters()) out.push_back(Td(p->value.shape(), {p->value.data().begin(), p->value.data().end()}));
  return out;
}

bool unchanged(Network<double>& net, const std::vector<Td>& before) {
  const auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!params[i]->value.same_as(before[i])) return false;
  return true;
}

double d_objective(Network<double>& D, Network<double>& G, const Td& real, const Td& z) {
  const Td pr = D.forward(real), pf = D.forward(G.forward(z));
  return bce_loss(pr, Td::ones(pr.shape())).item() + bce_loss(pf, Td::zeros(pf.shape())).item();
}

double g_objective(Network<double>& D, Network<double>& G, const Td& z) {
  const Td pf = D.forward(G.forward(z));
  return bce_loss(pf, Td::ones(pf.shape())).item();
}

RunConfig tiny_config(int epochs) {
  RunConfig cfg = RunConfig::desk();
  cfg.train.epochs = epochs;
  cfg.train.batch_size = 8;
  cfg.train.seed = 17;
  return cfg;
}

}  // namespace

TEST_CASE("adam: zero gradient leaves the parameter unchanged") {
  Td p(Shape{3}, {1, -2, 3}), m = Td::zeros(Shape{3}), v = Td::zeros(Shape{3});
  const Td before = p;
  adam_update(p, Td::zeros(Shape{3}), m, v, 1, AdamHyper{});
  CHECK(p.same_as(before));
}

TEST_CASE("adam: first step from g=1 moves by -lr") {
  Td p = Td::scalar(0), m = Td::scalar(0), v = Td::scalar(0);
  adam_update(p, Td::scalar(1), m, v, 1, AdamHyper{0.0002, 0.5, 0.999, 1e-8});
  CHECK(p.item() == doctest::Approx(-0.0002).epsilon(1e-6));
}

TEST_CASE("adam matches the reference recurrence") {
  Rng rng(31);
  const AdamHyper h{0.0002, 0.5, 0.999, 1e-8};
  oracle::AdamReference ref{h.learning_rate, h.beta1, h.beta2, h.eps, {}, {}, 0};
  Td p = oracle::random<double>(Shape{6}, rng), m = Td::zeros(Shape{6}), v = Td::zeros(Shape{6});
  std::vector<double> rp(p.data().begin(), p.data().end());
  SUBCASE("constant gradient") {
    const Td g = Td::full(Shape{6}, 0.3);
    for (int t = 1; t <= 3; ++t) {
      adam_update(p, g, m, v, t, h);
      ref.step(rp, std::vector<double>(6, 0.3));
    }
  }
  SUBCASE("random gradients") {
    for (int t = 1; t <= 5; ++t) {
      const Td g = oracle::random<double>(Shape{6}, rng, -2, 2);
      adam_update(p, g, m, v, t, h);
      ref.step(rp, std::vector<double>(g.data().begin(), g.data().end()));
    }
  }
  for (int i = 0; i < 6; ++i) CHECK(std::abs(p[i] - rp[i]) < 1e-12);
  for (double x : v.data()) CHECK(x >= 0.0);
}

TEST_CASE("adam rejects non-finite gradients without touching state") {
  Td p = Td::scalar(1), m = Td::scalar(0), v = Td::scalar(0);
  CHECK_THROWS_AS(adam_update(p, Td::scalar(std::nan("")), m, v, 1, AdamHyper{}), NumericalError);
  CHECK(p.item() == 1.0);
  CHECK(m.item() == 0.0);
}

TEST_CASE("adam step counter advances once per step") {
  auto g = toy_generator(2, 3, 1);
  Adam<double> adam(g, AdamHyper{});
  g.zero_grads();
  adam.step(g);
  adam.step(g);
  CHECK(adam.t() == 2);
}

TEST_CASE("sample_noise") {
  Rng a(1), b(1);
  const auto z = sample_noise<float>(16, 100, a);
  CHECK(z.shape() == Shape{16, 100});
  CHECK(z.same_as(sample_noise<float>(16, 100, b)));
  Rng r(2);
  const auto big = sample_noise<double>(1000, 100, r);
  double m = 0, s = 0;
  for (double x : big.data()) m += x;
  m /= 1e5;
  for (double x : big.data()) s += (x - m) * (x - m);
  s /= 1e5;
  CHECK(std::abs(m) < 0.02);
  CHECK(std::abs(s - 1.0) < 0.05);
}

TEST_CASE("loss identities with a discriminator fixed at one half") {
  auto D = toy_discriminator(4, 0.0);
  auto G = toy_generator(2, 4, 3);
  Adam<double> aD(D, AdamHyper{}), aG(G, AdamHyper{});
  Rng rng(4);
  const Td real = oracle::random<double>(Shape{5, 4}, rng);
  const auto d = discriminator_step(D, G, real, sample_noise<double>(5, 2, rng), aD);
  CHECK(d.loss == doctest::Approx(2 * std::log(2.0)).epsilon(1e-12));
  CHECK(d.real_mean == 0.5);
  auto D2 = toy_discriminator(4, 0.0);
  Adam<double> aD2(D2, AdamHyper{});
  const auto g = generator_step(D2, G, sample_noise<double>(5, 2, rng), aG, GeneratorLoss::non_saturating);
  CHECK(g.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("steps descend on toy problems") {
  Rng rng(5);
  auto D = toy_discriminator(4, 0.05);
  auto G = toy_generator(2, 4, 6);
  AdamHyper h;
  h.learning_rate = 1e-2;
  Adam<double> aD(D, h), aG(G, h);
  const Td real = oracle::random<double>(Shape{8, 4}, rng, 0.5, 1.0);
  const Td z = sample_noise<double>(8, 2, rng);
  const double before = d_objective(D, G, real, z);
  discriminator_step(D, G, real, z, aD);
  CHECK(d_objective(D, G, real, z) < before);

  const double g_before = g_objective(D, G, z);
  generator_step(D, G, z, aG, GeneratorLoss::non_saturating);
  CHECK(g_objective(D, G, z) < g_before);
}

TEST_CASE("minimax objective is mean log(1 - D(G(z)))") {
  auto D = toy_discriminator(4, 0.0);
  auto G = toy_generator(2, 4, 3);
  Adam<double> aG(G, AdamHyper{});
  Rng rng(1);
  const auto g = generator_step(D, G, sample_noise<double>(3, 2, rng), aG, GeneratorLoss::minimax);
  CHECK(g.loss == doctest::Approx(std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("alternation purity at desk scale") {
  const ModelScale s = ModelScale::desk();
  auto G = build_generator<double>(s);
  auto D = build_discriminator<double>(s);
  init_weights(G, 1);
  init_weights(D, 2);
  Adam<double> aG(G, AdamHyper{}), aD(D, AdamHyper{});
  Rng rng(3);
  const Td real = oracle::random<double>(Shape{4, 3, 32, 32}, rng);
  for (int i = 0; i < 2; ++i) {
    const auto g_before = snapshot(G);
    const auto d_before = snapshot(D);
    discriminator_step(D, G, real, sample_noise<double>(4, 100, rng), aD);
    CHECK(unchanged(G, g_before));
    CHECK_FALSE(unchanged(D, d_before));
    const auto d_mid = snapshot(D);
    generator_step(D, G, sample_noise<double>(4, 100, rng), aG, GeneratorLoss::non_saturating);
    CHECK(unchanged(D, d_mid));
    CHECK_FALSE(unchanged(G, g_before));
  }
}

TEST_CASE("checkpoint encoding") {
  Trainer t(tiny_config(1));
  const Checkpoint c = t.checkpoint();
  const std::string bytes = encode_checkpoint(c);
  CHECK(bytes.substr(0, 4) == "AFGE");
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(encode_checkpoint(back) == bytes);
  REQUIRE(back.tensors.size() == c.tensors.size());
  for (std::size_t i = 0; i < c.tensors.size(); ++i) {
    CHECK(back.tensors[i].name == c.tensors[i].name);
    CHECK(back.tensors[i].value.same_as(c.tensors[i].value));
  }
  CHECK(back.rng_state == c.rng_state);
  CHECK(back.has("G.bn0.running_var"));
  CHECK(back.has("adam.m.D.dense.weight"));

  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() / 2)), FormatError);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, 6)), FormatError);
  std::string v2 = bytes;
  v2[4] = 2;
  CHECK_THROWS_AS(decode_checkpoint(v2), FormatError);
  CHECK_THROWS_AS(decode_checkpoint(bytes + "x"), FormatError);
}

TEST_CASE("checkpoint files round trip bitwise") {
  fixtures::TempDir dir("ckpt");
  Trainer t(tiny_config(1));
  save_checkpoint(t.checkpoint(), dir / "a.afge");
  save_checkpoint(load_checkpoint(dir / "a.afge"), dir / "b.afge");
  std::ifstream a(dir / "a.afge", std::ios::binary), b(dir / "b.afge", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.afge"), IoError);
}

TEST_CASE("training is deterministic and resumable") {
  ImageDataset data(fixtures::blob_dataset(24, 32, 8), tiny_config(0).augment);
  SUBCASE("zero epochs returns the initial state") {
    const auto r = train(tiny_config(0), data);
    CHECK(encode_checkpoint(r.final_checkpoint) == encode_checkpoint(Trainer(tiny_config(0)).checkpoint()));
    CHECK(r.metrics.empty());
  }
  SUBCASE("same seed, same result; 2 + 2 equals 4") {
    const auto a = train(tiny_config(2), data);
    const auto b = train(tiny_config(2), data);
    CHECK(encode_checkpoint(a.final_checkpoint) == encode_checkpoint(b.final_checkpoint));
    CHECK(a.metrics.size() == 6);
    const auto resumed = train(tiny_config(4), data, {}, &a.final_checkpoint);
    const auto straight = train(tiny_config(4), data);
    CHECK(encode_checkpoint(resumed.final_checkpoint) == encode_checkpoint(straight.final_checkpoint));
    CHECK(resumed.final_checkpoint.epoch == 4);
    CHECK(resumed.final_checkpoint.adam_t_generator == 12);
    for (const auto& row : straight.metrics) {
      CHECK(std::isfinite(row.d_loss));
      CHECK(std::isfinite(row.g_loss));
    }
  }
  SUBCASE("resuming with a different model shape is a config error") {
    const auto a = train(tiny_config(1), data);
    RunConfig other = tiny_config(2);
    other.set("base_width", "8");
    CHECK_THROWS_AS(Trainer(other, a.final_checkpoint), ConfigError);
  }
}

TEST_CASE("training writes its artifacts") {
  fixtures::TempDir dir("train_out");
  RunConfig cfg = tiny_config(2);
  cfg.train.checkpoint_every = 1;
  cfg.train.sample_every = 1;
  ImageDataset data(fixtures::blob_dataset(16, 32, 3), cfg.augment);
  train(cfg, data, {dir.path(), {}});
  CHECK(std::filesystem::exists(dir / "checkpoint.afge"));
  CHECK(std::filesystem::exists(dir / "checkpoint_e0001.afge"));
  CHECK(std::filesystem::exists(dir / "samples/epoch_0002.png"));
  CHECK(std::filesystem::exists(dir / "run_config.txt"));
  std::ifstream m(dir / "metrics.csv");
  std::string header;
  std::getline(m, header);
  CHECK(header == "epoch,step,d_loss,g_loss,d_real_mean,d_fake_mean");
  int rows = 0;
  for (std::string line; std::getline(m, line);) ++rows;
  CHECK(rows == 4);
  const PixelBuffer grid = load_image(dir / "samples/epoch_0002.png");
  CHECK(grid.width == 4 * 32 + 5 * 2);
}

TEST_CASE("load_generator rebuilds the network from a checkpoint") {
  Trainer t(tiny_config(1));
  auto [cfg, G] = load_generator(t.checkpoint());
  CHECK(cfg.scale == ModelScale::desk());
  const auto a = G.parameters(), b = t.generator().parameters();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value.same_as(b[i]->value));
}

TEST_CASE("save_checkpoint creates missing directories") {
  fixtures::TempDir dir("ckpt_nested");
  save_checkpoint(Trainer(tiny_config(0)).checkpoint(), dir / "a/b/c.afge");
  CHECK(std::filesystem::exists(dir / "a/b/c.afge"));
}
