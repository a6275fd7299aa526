#include "afgan/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "afgan/error.hpp"
#include "afgan/models.hpp"
#include "afgan/ops.hpp"

namespace afgan {

namespace {

constexpr std::uint64_t kGeneratorInitStream = 1;
constexpr std::uint64_t kDiscriminatorInitStream = 2;
constexpr std::uint64_t kSampleNoiseStream = 3;
constexpr int kSampleCount = 16;

template <typename T>
double mean_of(const Tensor<T>& t) {
  double s = 0;
  for (T v : t.data()) s += v;
  return s / static_cast<double>(t.numel());
}

template <typename T>
Tensor<T> labels(const Shape& shape, T value) {
  return Tensor<T>::full(shape, value);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

double param_norm(Network<float>& net) {
  double s = 0;
  for (auto* p : net.parameters())
    for (float v : p->value.data()) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

void copy_into(Tensor<float>& dst, const Tensor<float>& src, const std::string& name) {
  if (!(dst.shape() == src.shape())) {
    throw FormatError("checkpoint tensor `" + name + "` has shape " + src.shape().str() + ", model expects " +
                      dst.shape().str());
  }
  dst = Tensor<float>(src.shape(), std::vector<float>(src.data().begin(), src.data().end()));
}

void load_network(Network<float>& net, const Checkpoint& ckpt) {
  net.materialize();
  for (auto* p : net.parameters()) copy_into(p->value, ckpt.tensor(p->name), p->name);
  for (auto& [name, t] : net.buffers()) copy_into(*t, ckpt.tensor(name), name);
  net.zero_grads();
}

void store_network(Network<float>& net, Checkpoint& ckpt) {
  for (auto* p : net.parameters()) ckpt.tensors.push_back({p->name, p->value});
  for (auto& [name, t] : net.buffers()) ckpt.tensors.push_back({name, *t});
}

void store_adam(Network<float>& net, const Adam<float>& adam, Checkpoint& ckpt) {
  const auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    ckpt.tensors.push_back({"adam.m." + params[i]->name, adam.first_moments()[i]});
    ckpt.tensors.push_back({"adam.v." + params[i]->name, adam.second_moments()[i]});
  }
}

void load_adam(Network<float>& net, Adam<float>& adam, std::uint64_t t, const Checkpoint& ckpt) {
  const auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    copy_into(adam.first_moments()[i], ckpt.tensor("adam.m." + params[i]->name), "adam.m." + params[i]->name);
    copy_into(adam.second_moments()[i], ckpt.tensor("adam.v." + params[i]->name), "adam.v." + params[i]->name);
  }
  adam.set_t(static_cast<std::int64_t>(t));
}

RunConfig config_of(const Checkpoint& ckpt) {
  try {
    RunConfig cfg = parse_run_config(ckpt.config_text);
    cfg.validate();
    return cfg;
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint carries an invalid config: ") + e.what());
  }
}

}  // namespace

template <typename T>
Tensor<T> sample_noise(int batch, int latent_dim, Rng& rng) {
  if (batch < 1 || latent_dim < 1) throw ContractError("sample_noise: batch and latent_dim must be >= 1");
  std::vector<T> z(static_cast<std::size_t>(batch) * latent_dim);
  for (auto& v : z) v = static_cast<T>(rng.normal());
  return Tensor<T>(Shape{batch, latent_dim}, std::move(z));
}

template <typename T>
StepResult discriminator_step(Network<T>& D, Network<T>& G, const Tensor<T>& real, const Tensor<T>& z, Adam<T>& adam_D) {
  G.set_mode(Mode::train);
  D.set_mode(Mode::train);
  const Tensor<T> fake = G.forward(z);
  StepResult r;
  {
    Tape<T> tape;
    TapeBinding<T> binding(D, tape);
    const Tensor<T> p_real = D.forward(real);
    const Tensor<T> p_fake = D.forward(fake);
    const Tensor<T> l_real = bce_loss(p_real, labels<T>(p_real.shape(), T(1)));
    const Tensor<T> l_fake = bce_loss(p_fake, labels<T>(p_fake.shape(), T(0)));
    const Tensor<T> loss = add(l_real, l_fake);
    r.real_term = l_real.item();
    r.fake_term = l_fake.item();
    r.loss = loss.item();
    r.real_mean = mean_of(p_real);
    r.fake_mean = mean_of(p_fake);
    if (!std::isfinite(r.loss)) {
      throw NumericalError("discriminator loss is non-finite (real term " + fmt(r.real_term) + ", fake term " +
                           fmt(r.fake_term) + ")");
    }
    D.zero_grads();
    D.accumulate_grads(tape.backward(loss));
  }
  adam_D.step(D);
  return r;
}

template <typename T>
StepResult generator_step(Network<T>& D, Network<T>& G, const Tensor<T>& z, Adam<T>& adam_G, GeneratorLoss objective) {
  G.set_mode(Mode::train);
  D.set_mode(Mode::train);
  StepResult r;
  {
    Tape<T> tape;
    TapeBinding<T> binding(G, tape);
    const Tensor<T> p_fake = D.forward(G.forward(z));
    const Tensor<T> loss = objective == GeneratorLoss::non_saturating
                               ? bce_loss(p_fake, labels<T>(p_fake.shape(), T(1)))
                               : neg(bce_loss(p_fake, labels<T>(p_fake.shape(), T(0))));
    r.loss = r.fake_term = loss.item();
    r.fake_mean = mean_of(p_fake);
    if (!std::isfinite(r.loss)) throw NumericalError("generator loss is non-finite (" + fmt(r.loss) + ")");
    G.zero_grads();
    G.accumulate_grads(tape.backward(loss));
  }
  adam_G.step(G);
  return r;
}

std::string format_metrics_row(const MetricsRow& row) {
  return std::to_string(row.epoch) + "," + std::to_string(row.step) + "," + fmt(row.d_loss) + "," + fmt(row.g_loss) +
         "," + fmt(row.d_real_mean) + "," + fmt(row.d_fake_mean);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the pair
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::pair<RunConfig, Network<float>> load_generator(const Checkpoint& ckpt) {
  RunConfig cfg = config_of(ckpt);
  Network<float> G = build_generator<float>(cfg.scale);
  load_network(G, ckpt);
  return {std::move(cfg), std::move(G)};
}

Trainer::Trainer(const RunConfig& cfg)
    : cfg_(cfg), G_(build_generator<float>(cfg.scale)), D_(build_discriminator<float>(cfg.scale)), rng_(cfg.train.seed) {
  cfg_.validate();
  init_weights(G_, derive_seed(cfg_.train.seed, kGeneratorInitStream));
  init_weights(D_, derive_seed(cfg_.train.seed, kDiscriminatorInitStream));
  adam_G_ = Adam<float>(G_, cfg_.train.adam);
  adam_D_ = Adam<float>(D_, cfg_.train.adam);
}

Trainer::Trainer(const RunConfig& cfg, const Checkpoint& ckpt)
    : cfg_(cfg), G_(build_generator<float>(cfg.scale)), D_(build_discriminator<float>(cfg.scale)) {
  cfg_.validate();
  if (!(config_of(ckpt).scale == cfg_.scale)) throw ConfigError("model settings differ from the checkpoint being resumed");
  load_network(G_, ckpt);
  load_network(D_, ckpt);
  adam_G_ = Adam<float>(G_, cfg_.train.adam);
  adam_D_ = Adam<float>(D_, cfg_.train.adam);
  load_adam(G_, adam_G_, ckpt.adam_t_generator, ckpt);
  load_adam(D_, adam_D_, ckpt.adam_t_discriminator, ckpt);
  rng_.set_state(ckpt.rng_state);
  epoch_ = ckpt.epoch;
  step_ = ckpt.step;
}

std::vector<MetricsRow> Trainer::run_epoch(const ImageDataset& data) {
  std::vector<MetricsRow> rows;
  BatchStream stream(data, static_cast<std::size_t>(cfg_.train.batch_size), rng_);
  const int latent = cfg_.scale.latent_dim;
  while (auto real = stream.next()) {
    const int b = static_cast<int>(real->shape()[0]);
    MetricsRow row;
    row.epoch = epoch_ + 1;
    row.step = step_ + 1;
    try {
      const auto d = discriminator_step(D_, G_, *real, sample_noise<float>(b, latent, rng_), adam_D_);
      const auto g = generator_step(D_, G_, sample_noise<float>(b, latent, rng_), adam_G_, cfg_.train.generator_loss);
      row.d_loss = d.loss;
      row.g_loss = g.loss;
      row.d_real_mean = d.real_mean;
      row.d_fake_mean = d.fake_mean;
    } catch (const NumericalError& e) {
      throw NumericalError("training aborted at epoch " + std::to_string(row.epoch) + ", step " +
                           std::to_string(row.step) + ": " + e.what() + "; parameter norms G " + fmt(param_norm(G_)) +
                           ", D " + fmt(param_norm(D_)));
    }
    ++step_;
    rows.push_back(row);
  }
  ++epoch_;
  return rows;
}

Checkpoint Trainer::checkpoint() {
  Checkpoint c;
  c.config_text = cfg_.to_text();
  c.epoch = epoch_;
  c.step = step_;
  c.adam_t_generator = static_cast<std::uint64_t>(adam_G_.t());
  c.adam_t_discriminator = static_cast<std::uint64_t>(adam_D_.t());
  store_network(G_, c);
  store_network(D_, c);
  store_adam(G_, adam_G_, c);
  store_adam(D_, adam_D_, c);
  c.rng_state = rng_.state();
  return c;
}

std::vector<PixelBuffer> Trainer::render(const Tensor<float>& z) {
  const Mode saved = G_.mode();
  G_.set_mode(Mode::eval);
  const Tensor<float> images = G_.forward(z);
  G_.set_mode(saved);
  const auto& s = images.shape();
  const std::int64_t per = s[1] * s[2] * s[3];
  std::vector<PixelBuffer> out;
  for (std::int64_t i = 0; i < s[0]; ++i) {
    std::vector<float> one(images.data().begin() + i * per, images.data().begin() + (i + 1) * per);
    out.push_back(denormalize(Tensor<float>(Shape{s[1], s[2], s[3]}, std::move(one))));
  }
  return out;
}

TrainResult train(const RunConfig& cfg, const ImageDataset& data, const TrainOutputs& out, const Checkpoint* resume) {
  namespace fs = std::filesystem;
  Trainer trainer = resume ? Trainer(cfg, *resume) : Trainer(cfg);
  auto log = [&](const std::string& msg) {
    if (out.log) out.log(msg);
  };
  const bool files = !out.dir.empty();
  std::ofstream metrics;
  if (files) {
    fs::create_directories(out.dir);
    std::ofstream(out.dir / "run_config.txt") << cfg.to_text();
    const auto path = out.dir / "metrics.csv";
    const bool fresh = !resume || !fs::exists(path);
    metrics.open(path, fresh ? std::ios::trunc : std::ios::app);
    if (!metrics) throw IoError("cannot write " + path.string());
    if (fresh) metrics << kMetricsHeader << '\n';
  }
  Rng sample_rng(derive_seed(cfg.train.seed, kSampleNoiseStream));
  const Tensor<float> sample_z = sample_noise<float>(kSampleCount, cfg.scale.latent_dim, sample_rng);

  auto save = [&](const fs::path& path) {
    try {
      save_checkpoint(trainer.checkpoint(), path);
    } catch (const IoError& e) {
      log("warning: checkpoint write failed; progress since the last checkpoint exists only in memory");
      throw;
    }
  };

  TrainResult result;
  const auto target = static_cast<std::uint64_t>(cfg.train.epochs);
  if (trainer.epoch() > target) {
    throw ConfigError("checkpoint is at epoch " + std::to_string(trainer.epoch()) + ", beyond epochs=" +
                      std::to_string(target));
  }
  while (trainer.epoch() < target) {
    auto rows = trainer.run_epoch(data);
    const auto e = trainer.epoch();
    double d = 0, g = 0;
    for (const auto& r : rows) {
      d += r.d_loss;
      g += r.g_loss;
      if (files) metrics << format_metrics_row(r) << '\n';
    }
    if (files) metrics.flush();
    log("epoch " + std::to_string(e) + "/" + std::to_string(target) + " d_loss " + fmt(d / rows.size()) + " g_loss " +
        fmt(g / rows.size()));
    result.metrics.insert(result.metrics.end(), rows.begin(), rows.end());
    char tag[32];
    std::snprintf(tag, sizeof tag, "%04llu", static_cast<unsigned long long>(e));
    if (files && cfg.train.checkpoint_every > 0 && e % cfg.train.checkpoint_every == 0 && e != target) {
      save(out.dir / (std::string("checkpoint_e") + tag + ".afge"));
    }
    if (files && cfg.train.sample_every > 0 && e % cfg.train.sample_every == 0) {
      fs::create_directories(out.dir / "samples");
      save_png(make_grid(trainer.render(sample_z), 4), out.dir / "samples" / (std::string("epoch_") + tag + ".png"));
    }
  }
  result.final_checkpoint = trainer.checkpoint();
  if (files) save(out.dir / "checkpoint.afge");
  return result;
}

template Tensor<float> sample_noise<float>(int, int, Rng&);
template Tensor<double> sample_noise<double>(int, int, Rng&);
template StepResult discriminator_step<float>(Network<float>&, Network<float>&, const Tensor<float>&,
                                              const Tensor<float>&, Adam<float>&);
template StepResult discriminator_step<double>(Network<double>&, Network<double>&, const Tensor<double>&,
                                               const Tensor<double>&, Adam<double>&);
template StepResult generator_step<float>(Network<float>&, Network<float>&, const Tensor<float>&, Adam<float>&,
                                          GeneratorLoss);
template StepResult generator_step<double>(Network<double>&, Network<double>&, const Tensor<double>&, Adam<double>&,
                                           GeneratorLoss);

}  // namespace afgan
