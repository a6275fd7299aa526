#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "afgan/checkpoint.hpp"
#include "afgan/config.hpp"
#include "afgan/dataset.hpp"
#include "afgan/layers.hpp"
#include "afgan/optim.hpp"
#include "afgan/rng.hpp"

namespace afgan {

// (batch, latent_dim) i.i.d. standard normal draws.
template <typename T>
Tensor<T> sample_noise(int batch, int latent_dim, Rng& rng);

struct StepResult {
  double loss = 0;
  double real_term = 0;  // discriminator step only
  double fake_term = 0;
  double real_mean = 0;  // mean D(real), discriminator step only
  double fake_mean = 0;  // mean D(G(z))
};

// loss = BCE(D(real), 1) + BCE(D(G(z)), 0); one Adam step on D. G runs
// outside the tape so its parameters cannot change.
template <typename T>
StepResult discriminator_step(Network<T>& D, Network<T>& G, const Tensor<T>& real, const Tensor<T>& z, Adam<T>& adam_D);

// Non-saturating: BCE(D(G(z)), 1). Minimax: mean log(1 - D(G(z))). One Adam
// step on G; D runs with constant parameters.
template <typename T>
StepResult generator_step(Network<T>& D, Network<T>& G, const Tensor<T>& z, Adam<T>& adam_G, GeneratorLoss objective);

struct MetricsRow {
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  double d_loss = 0;
  double g_loss = 0;
  double d_real_mean = 0;
  double d_fake_mean = 0;
};

inline constexpr const char* kMetricsHeader = "epoch,step,d_loss,g_loss,d_real_mean,d_fake_mean";
std::string format_metrics_row(const MetricsRow& row);

// Stream-specific seed derived from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Builds a generator from a checkpoint's own config and loads its weights and
// running statistics. Throws FormatError if the checkpoint is inconsistent.
std::pair<RunConfig, Network<float>> load_generator(const Checkpoint& ckpt);

// Both networks, their optimizers and the run's random stream.
class Trainer {
 public:
  explicit Trainer(const RunConfig& cfg);
  // Continues from `ckpt`; the model shape in `cfg` must match the checkpoint.
  Trainer(const RunConfig& cfg, const Checkpoint& ckpt);

  const RunConfig& config() const { return cfg_; }
  std::uint64_t epoch() const { return epoch_; }
  std::uint64_t step() const { return step_; }
  Network<float>& generator() { return G_; }
  Network<float>& discriminator() { return D_; }
  Rng& rng() { return rng_; }

  // One pass over `data`: per batch a discriminator step, then a generator step.
  std::vector<MetricsRow> run_epoch(const ImageDataset& data);

  Checkpoint checkpoint();

  // Generator output in eval mode for fixed noise; the training mode is restored.
  std::vector<PixelBuffer> render(const Tensor<float>& z);

 private:
  RunConfig cfg_;
  Network<float> G_, D_;
  Adam<float> adam_G_, adam_D_;
  Rng rng_;
  std::uint64_t epoch_ = 0;
  std::uint64_t step_ = 0;
};

struct TrainOutputs {
  std::filesystem::path dir;  // empty: keep everything in memory
  std::function<void(const std::string&)> log;
};

struct TrainResult {
  Checkpoint final_checkpoint;
  std::vector<MetricsRow> metrics;  // rows produced by this call
};

// Trains until cfg.train.epochs. Under `out.dir` writes run_config.txt,
// metrics.csv (appended on resume), checkpoint_eNNNN.afge on schedule,
// checkpoint.afge at the end and samples/epoch_NNNN.png on schedule.
TrainResult train(const RunConfig& cfg, const ImageDataset& data, const TrainOutputs& out = {},
                  const Checkpoint* resume = nullptr);

}  // namespace afgan
