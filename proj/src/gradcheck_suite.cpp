#include "afgan/gradcheck_suite.hpp"

#include "afgan/layers.hpp"
#include "afgan/models.hpp"
#include "afgan/ops.hpp"
#include "afgan/rng.hpp"

namespace afgan {

namespace {

using T = Tensor<double>;

T random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(shape.numel()));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return T(shape, std::move(v));
}

// Values bounded away from zero so kinked activations stay differentiable.
T off_zero_tensor(const Shape& shape, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(shape.numel()));
  for (auto& x : v) x = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.1, 1.0);
  return T(shape, std::move(v));
}

// <y, r> for a fixed random r, so every output element reaches the loss with
// its own weight.
T project(const T& y, const T& r) { return sum(mul(y, r)); }

LayerParams<double> params_from(const std::vector<T>& in, std::size_t w, std::size_t b) {
  LayerParams<double> p;
  p.weight = Parameter<double>("w", in[w]);
  if (b < in.size()) p.bias = Parameter<double>("b", in[b]);
  return p;
}

}  // namespace

std::vector<SuiteCheck> run_gradcheck_suite(double tolerance, std::uint64_t seed) {
  Rng rng(seed);
  GradCheckOptions opt;
  opt.tolerance = tolerance;
  opt.seed = seed;
  std::vector<SuiteCheck> out;

  {
    const T x = random_tensor(Shape{3, 5}, rng), w = random_tensor(Shape{5, 4}, rng), b = random_tensor(Shape{4}, rng);
    const T r = random_tensor(Shape{3, 4}, rng);
    out.push_back({"linear", grad_check([&](const std::vector<T>& in) { return project(linear(in[0], params_from(in, 1, 2)), r); },
                                        {x, w, b}, opt)});
  }
  {
    const ConvSpec spec{2, 3, {3, 3}, {2, 2}, {1, 1}, false};
    const T x = random_tensor(Shape{2, 2, 5, 5}, rng), w = random_tensor(Shape{3, 2, 3, 3}, rng);
    const T b = random_tensor(Shape{3}, rng), r = random_tensor(Shape{2, 3, 3, 3}, rng);
    out.push_back({"conv2d", grad_check([&](const std::vector<T>& in) { return project(conv2d(in[0], spec, params_from(in, 1, 2)), r); },
                                        {x, w, b}, opt)});
  }
  {
    const ConvSpec spec = ConvSpec::doubling(2, 3);
    const T x = random_tensor(Shape{2, 2, 3, 3}, rng), w = random_tensor(Shape{2, 3, 4, 4}, rng);
    const T b = random_tensor(Shape{3}, rng), r = random_tensor(Shape{2, 3, 6, 6}, rng);
    out.push_back({"conv_transpose2d",
                   grad_check([&](const std::vector<T>& in) {
                     return project(conv_transpose2d(in[0], spec, params_from(in, 1, 2)), r);
                   },
                              {x, w, b}, opt)});
  }
  {
    const T x = random_tensor(Shape{3, 2, 2, 3}, rng), gamma = random_tensor(Shape{2}, rng, 0.5, 1.5);
    const T beta = random_tensor(Shape{2}, rng), r = random_tensor(Shape{3, 2, 2, 3}, rng);
    out.push_back({"batchnorm2d",
                   grad_check([&](const std::vector<T>& in) {
                     BatchNormState<double> st("bn", 2);
                     st.gamma = Parameter<double>("bn.gamma", in[1]);
                     st.beta = Parameter<double>("bn.beta", in[2]);
                     return project(batchnorm2d(in[0], st, Mode::train), r);
                   },
                              {x, gamma, beta}, opt)});
  }
  for (Activation act : {Activation::relu, Activation::leaky_relu, Activation::tanh, Activation::sigmoid}) {
    const T x = off_zero_tensor(Shape{4, 6}, rng), r = random_tensor(Shape{4, 6}, rng);
    out.push_back({std::string(to_string(act)),
                   grad_check([&](const T& in) { return project(activate(in, act, kLeakySlope), r); }, x, opt)});
  }
  {
    const T p = random_tensor(Shape{8, 1}, rng, 0.05, 0.95);
    std::vector<double> y(8);
    for (auto& v : y) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const T targets(Shape{8, 1}, y);
    out.push_back({"bce_loss", grad_check([&](const T& in) { return bce_loss(in, targets); }, p, opt)});
  }
  {
    const ModelScale scale = ModelScale::desk();
    Network<double> G = build_generator<double>(scale);
    Network<double> D = build_discriminator<double>(scale);
    init_weights(G, seed + 11);
    init_weights(D, seed + 12);
    std::vector<Parameter<double>*> params = G.parameters();
    for (auto* p : D.parameters()) params.push_back(p);
    std::vector<T> points{random_tensor(Shape{4, scale.latent_dim}, rng)};
    for (auto* p : params) points.push_back(p->value);
    GradCheckOptions sampled = opt;
    sampled.max_coordinates = 6;
    const T ones = T::ones(Shape{4, 1});
    auto f = [&](const std::vector<T>& in) {
      for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = in[i + 1];
      return bce_loss(D.forward(G.forward(in[0])), ones);
    };
    out.push_back({"D(G(z))", grad_check(f, points, sampled)});
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = points[i + 1];
  }
  return out;
}

}  // namespace afgan
