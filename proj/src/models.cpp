#include "afgan/models.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "afgan/error.hpp"

namespace afgan {

void ModelScale::validate() const {
  if (image_size < 1 || seed_size < 1 || stages < 1 || base_width < 1 || channels < 1 || latent_dim < 1) {
    throw ConfigError("model scale fields must all be >= 1");
  }
  if (stages > 16) throw ConfigError("model scale: stages must be <= 16");
  if (static_cast<std::int64_t>(seed_size) << stages != image_size) {
    throw ConfigError("model scale: image_size " + std::to_string(image_size) + " != seed_size " +
                      std::to_string(seed_size) + " * 2^" + std::to_string(stages));
  }
}

std::vector<int> ModelScale::widths() const {
  std::vector<int> w;
  for (int i = 0; i < stages; ++i) w.push_back(base_width << i);
  return w;
}

template <typename T>
Network<T> build_generator(const ModelScale& scale) {
  scale.validate();
  const auto widths = scale.widths();
  const int top = widths.back();
  const std::int64_t seed = scale.seed_size;

  Network<T> g("G");
  g.template add<Linear<T>>("fc", scale.latent_dim, top * seed * seed, true);
  g.template add<Reshape<T>>("reshape", Shape{top, seed, seed});
  for (int i = 0; i < scale.stages; ++i) {
    const bool last = i == scale.stages - 1;
    const int in = widths[static_cast<std::size_t>(scale.stages - 1 - i)];
    const int out = last ? scale.channels : widths[static_cast<std::size_t>(scale.stages - 2 - i)];
    const auto idx = std::to_string(i);
    g.template add<Conv<T>>("convt" + idx, ConvSpec::doubling(in, out), last);
    if (last) {
      g.template add<ActivationLayer<T>>("tanh", Activation::tanh);
    } else {
      g.template add<BatchNorm2d<T>>("bn" + idx, out);
      g.template add<ActivationLayer<T>>("relu" + idx, Activation::relu);
    }
  }
  return g;
}

template <typename T>
Network<T> build_discriminator(const ModelScale& scale) {
  scale.validate();
  const auto widths = scale.widths();
  const std::int64_t seed = scale.seed_size;

  Network<T> d("D");
  for (int i = 0; i < scale.stages; ++i) {
    const int in = i == 0 ? scale.channels : widths[static_cast<std::size_t>(i - 1)];
    const int out = widths[static_cast<std::size_t>(i)];
    const auto idx = std::to_string(i);
    d.template add<Conv<T>>("conv" + idx, ConvSpec::halving(in, out), false);
    d.template add<BatchNorm2d<T>>("bn" + idx, out);
    d.template add<ActivationLayer<T>>("lrelu" + idx, Activation::leaky_relu, kLeakySlope);
  }
  d.template add<Flatten<T>>("flatten");
  d.template add<Linear<T>>("dense", widths.back() * seed * seed, 1, true);
  d.template add<ActivationLayer<T>>("sigmoid", Activation::sigmoid);
  return d;
}

template <typename T>
std::vector<int> width_sequence(const Network<T>& net) {
  std::vector<int> out;
  for (const auto& layer : net.layers()) {
    if (const auto* conv = dynamic_cast<const Conv<T>*>(layer.get())) {
      out.push_back(conv->spec().transposed ? conv->spec().in_channels : conv->spec().out_channels);
    }
  }
  return out;
}

template <typename T>
ParamReport count_params(const Network<T>& net) {
  ParamReport report;
  report.network = net.name();
  for (const auto& layer : net.layers()) {
    LayerParamCount row{layer->name(), layer->describe(), 0, 0};
    if (const auto* fc = dynamic_cast<const Linear<T>*>(layer.get())) {
      // FC layers keep their bias under both conventions.
      row.as_built = row.with_bias = (fc->in_features() + 1) * fc->out_features();
    } else if (const auto* conv = dynamic_cast<const Conv<T>*>(layer.get())) {
      const auto& s = conv->spec();
      const std::int64_t weights = std::int64_t{s.in_channels} * s.out_channels * s.kernel[0] * s.kernel[1];
      row.with_bias = weights + s.out_channels;
      row.as_built = conv->has_bias() ? row.with_bias : weights;
    } else if (const auto* bn = dynamic_cast<const BatchNorm2d<T>*>(layer.get())) {
      row.as_built = row.with_bias = 2 * bn->channels();
    } else {
      continue;
    }
    report.total_as_built += row.as_built;
    report.total_with_bias += row.with_bias;
    report.layers.push_back(std::move(row));
  }
  return report;
}

namespace {

std::string millions(std::int64_t n) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << static_cast<double>(n) / 1e6 << "M";
  return os.str();
}

void print_table(std::ostringstream& os, const ParamReport& r) {
  os << "network " << r.network << "\n";
  os << "  " << std::left << std::setw(12) << "layer" << std::setw(54) << "description" << std::right
     << std::setw(14) << "as_built" << std::setw(14) << "with_bias" << "\n";
  for (const auto& row : r.layers) {
    os << "  " << std::left << std::setw(12) << row.layer << std::setw(54) << row.description << std::right
       << std::setw(14) << row.as_built << std::setw(14) << row.with_bias << "\n";
  }
  os << "  " << std::left << std::setw(66) << "total" << std::right << std::setw(14) << r.total_as_built
     << std::setw(14) << r.total_with_bias << "\n";
}

void compare(std::ostringstream& os, const std::string& what, std::int64_t actual, double nominal) {
  const double ratio = static_cast<double>(actual) / nominal;
  os << "  " << what << ": counted " << millions(actual) << " vs nominal ~" << millions(static_cast<std::int64_t>(nominal))
     << " (x" << std::fixed << std::setprecision(2) << ratio << ")";
  if (ratio < 0.8 || ratio > 1.25) os << "  DISCREPANCY: nominal figure does not match these widths";
  os << "\n";
}

}  // namespace

std::string param_report_text(const ModelScale& scale) {
  const auto g = count_params(build_generator<float>(scale));
  const auto d = count_params(build_discriminator<float>(scale));
  std::ostringstream os;
  print_table(os, g);
  os << "\n";
  print_table(os, d);
  os << "\ncombined total: as_built " << g.total_as_built + d.total_as_built << ", with_bias "
     << g.total_with_bias + d.total_with_bias << "\n";
  if (scale == ModelScale::full()) {
    os << "\nnominal parameter counts for the 224x224 architecture:\n";
    compare(os, "generator", g.total_as_built, 30e6);
    compare(os, "discriminator", d.total_as_built, 5e6);
    compare(os, "combined", g.total_as_built + d.total_as_built, 35e6);
    os << "  the layer shapes above are normative; the nominal counts are reported, not asserted\n";
  }
  return os.str();
}

#define AFGAN_INSTANTIATE_MODELS(T)                                      \
  template Network<T> build_generator<T>(const ModelScale&);             \
  template Network<T> build_discriminator<T>(const ModelScale&);         \
  template std::vector<int> width_sequence<T>(const Network<T>&);        \
  template ParamReport count_params<T>(const Network<T>&);

AFGAN_INSTANTIATE_MODELS(float)
AFGAN_INSTANTIATE_MODELS(double)

}  // namespace afgan
