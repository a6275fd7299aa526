#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "afgan/layers.hpp"

namespace afgan {

// Size knobs shared by the generator and discriminator. The full-sized
// instance is 224x224x3 built from a 7x7 seed over five stride-2 stages with
// widths 192..3072; smaller instances use the same code path.
struct ModelScale {
  int image_size = 224;
  int seed_size = 7;
  int stages = 5;
  int base_width = 192;
  int channels = 3;
  int latent_dim = 100;

  static ModelScale full() { return {}; }
  static ModelScale desk() { return {32, 4, 3, 16, 3, 100}; }

  // Throws ConfigError unless image_size == seed_size * 2^stages and all fields are positive.
  void validate() const;

  // base_width * 2^i for i in [0, stages).
  std::vector<int> widths() const;
  int top_width() const { return widths().back(); }

  bool operator==(const ModelScale&) const = default;
};

inline constexpr double kLeakySlope = 0.2;

// FC(latent -> top*seed^2) -> reshape -> `stages` transposed convolutions,
// BatchNorm + ReLU after all but the last, which outputs `channels` with Tanh.
template <typename T>
Network<T> build_generator(const ModelScale& scale);

// `stages` convolutions each followed by BatchNorm + LeakyReLU(0.2), then
// flatten -> dense -> 1 with Sigmoid.
template <typename T>
Network<T> build_discriminator(const ModelScale& scale);

// Channel widths at each resolution, in the order the network visits them.
template <typename T>
std::vector<int> width_sequence(const Network<T>& net);

struct LayerParamCount {
  std::string layer;
  std::string description;
  std::int64_t as_built = 0;   // conv layers feeding BatchNorm carry no bias
  std::int64_t with_bias = 0;  // every conv layer carries a bias
};

struct ParamReport {
  std::string network;
  std::vector<LayerParamCount> layers;
  std::int64_t total_as_built = 0;
  std::int64_t total_with_bias = 0;
};

template <typename T>
ParamReport count_params(const Network<T>& net);

// Per-layer table for both networks plus a comparison against the nominal
// ~30M (generator) / ~5M (discriminator) / ~35M (combined) estimates, which the
// exact counts for the 224x224 widths do not support.
std::string param_report_text(const ModelScale& scale);

}  // namespace afgan
