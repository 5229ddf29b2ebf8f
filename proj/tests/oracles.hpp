#ifndef FLUIDSFORMER_TESTS_ORACLES_HPP_
#define FLUIDSFORMER_TESTS_ORACLES_HPP_

// Oracle cases shared by the unit tests and the acceptance binary.

#include "test_util.hpp"

#include "fluidsformer/model.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace fftest {

inline ModelConfig micro_config() {
  ModelConfig c;
  c.d_model = 8;
  c.heads = 2;
  c.enc_layers = 2;
  c.codebook_k = 4;
  c.patch = 4;
  c.decoder_widths = {3, 4};
  c.blocks_per_stage = 1;
  c.ff_mult = 2;
  c.time_dim = 4;
  c.code_dim = 2;
  c.latent_channels = 2;
  return c;
}

inline IntervalInputs random_inputs(const GridDims &d, SplitMix64 &rng) {
  auto kf = [&] {
    return KeyframeFields{random_field(d, rng, -1, 1), random_field(d, rng, -1, 1),
                          random_field(d, rng, -1, 1)};
  };
  return {SceneConstants{0.1, d.dx, 4.0, 2.0}, kf(), kf()};
}

/// Gives the zero-initialized head random weights so the residual path is
/// exercised.
template <typename T>
void randomize_head(FluidsFormer<T> &m, std::uint64_t seed, double amp = 0.5) {
  SplitMix64 rng(seed);
  for (const char *name : {"decoder.head.w", "decoder.head.b"}) {
    auto &t = m.params().at(name);
    for (Index k = 0; k < t.size(); ++k) t[k] = static_cast<T>(rng.uniform(-amp, amp));
  }
}

struct GradCase {
  std::string name;
  std::vector<Tensor<double>> inputs;
  LossFn loss;
};

/// One finite-difference case per primitive op (or op variant).
inline std::vector<GradCase> primitive_grad_cases() {
  using V = ad::Var<double>;
  using TapeD = ad::Tape<double>;
  using Xs = const std::vector<V> &;
  SplitMix64 rng(1);
  auto r = [&](const Shape &s, double lo = -1.0, double hi = 1.0) {
    return random_tensor<double>(s, rng, lo, hi);
  };
  std::vector<GradCase> c;
  c.push_back({"matmul", {r({3, 4}), r({4, 5})},
               [](TapeD &t, Xs x) { return project(t, ad::matmul(x[0], x[1])); }});
  c.push_back({"transpose", {r({3, 4})},
               [](TapeD &t, Xs x) { return project(t, ad::transpose(x[0])); }});
  c.push_back({"mul/add/sub", {r({2, 3}), r({2, 3})},
               [](TapeD &t, Xs x) { return project(t, ad::mul(x[0], x[1]) + x[0] - x[1]); }});
  c.push_back({"add_bias", {r({3, 4}), r({4})},
               [](TapeD &t, Xs x) { return project(t, ad::add_bias(x[0], x[1])); }});
  c.push_back({"add_channel_bias", {r({2, 3, 3}), r({2})},
               [](TapeD &t, Xs x) { return project(t, ad::add_channel_bias(x[0], x[1])); }});
  c.push_back({"scale/add_scalar", {r({5})}, [](TapeD &t, Xs x) {
                 return project(t, ad::add_scalar(ad::scale(x[0], 2.5), 0.3));
               }});
  c.push_back({"relu", {random_away_from_zero({4, 3}, rng)},
               [](TapeD &t, Xs x) { return project(t, ad::relu(x[0])); }});
  c.push_back({"abs", {random_away_from_zero({4, 3}, rng)},
               [](TapeD &t, Xs x) { return project(t, ad::abs(x[0])); }});
  c.push_back({"tanh", {r({4, 3}, -3, 3)},
               [](TapeD &t, Xs x) { return project(t, ad::tanh(x[0])); }});
  c.push_back({"softplus", {r({4, 3}, -4, 4)},
               [](TapeD &t, Xs x) { return project(t, ad::softplus(x[0])); }});
  c.push_back({"softmax", {r({3, 5}, -2, 2)},
               [](TapeD &t, Xs x) { return project(t, ad::softmax(x[0])); }});
  c.push_back({"log_softmax", {r({3, 5}, -2, 2)},
               [](TapeD &t, Xs x) { return project(t, ad::log_softmax(x[0])); }});
  c.push_back({"layer_norm", {r({4, 6}), r({6}), r({6})},
               [](TapeD &t, Xs x) { return project(t, ad::layer_norm(x[0], x[1], x[2])); }});
  c.push_back({"concat cols", {r({2, 3}), r({2, 2})},
               [](TapeD &t, Xs x) { return project(t, ad::concat<double>({x[0], x[1]}, 1)); }});
  c.push_back({"concat rows", {r({2, 3}), r({1, 3})},
               [](TapeD &t, Xs x) { return project(t, ad::concat<double>({x[0], x[1]}, 0)); }});
  c.push_back({"slice", {r({3, 4, 2})},
               [](TapeD &t, Xs x) { return project(t, ad::slice(x[0], 1, 1, 2)); }});
  c.push_back({"reshape", {r({3, 4})},
               [](TapeD &t, Xs x) { return project(t, ad::reshape(x[0], {2, 6})); }});
  c.push_back({"mean/sum", {r({3, 4})},
               [](TapeD &, Xs x) { return ad::mean(x[0]) + ad::sum(ad::mul(x[0], x[0])); }});
  c.push_back({"mean_rows", {r({3, 4})},
               [](TapeD &t, Xs x) { return project(t, ad::mean_rows(x[0])); }});
  c.push_back({"embedding_lookup", {r({5, 3})},
               [](TapeD &t, Xs x) { return project(t, ad::embedding_lookup(x[0], {4, 0, 4, 2})); }});
  c.push_back({"gather", {r({2, 3})}, [](TapeD &t, Xs x) {
                 return project(t, ad::gather(x[0], {5, 0, 5, 3, 1, 1}, {3, 2}));
               }});
  for (int stride : {1, 2})
    for (int pad : {0, 1})
      c.push_back({"conv2d stride " + std::to_string(stride) + " pad " + std::to_string(pad),
                   {r({2, 6, 5}), r({3, 2, 3, 3}), r({3})}, [=](TapeD &t, Xs x) {
                     return project(t, ad::conv2d(x[0], x[1], x[2], stride, pad));
                   }});
  c.push_back({"max_pool2d 3/1/1", {r({2, 5, 5})},
               [](TapeD &t, Xs x) { return project(t, ad::max_pool2d(x[0], 3, 1, 1)); }});
  c.push_back({"max_pool2d 2/2/0", {r({2, 6, 6})},
               [](TapeD &t, Xs x) { return project(t, ad::max_pool2d(x[0], 2, 2, 0)); }});
  c.push_back({"upsample_nearest", {r({2, 2, 3})},
               [](TapeD &t, Xs x) { return project(t, ad::upsample_nearest(x[0], 4, 5)); }});

  Tensor<double> pred = r({4, 4}, -3, 3);
  Tensor<double> target = r({4, 4}, -3, 3);
  // keep residuals away from |r| = delta where the second derivative jumps
  for (Index k = 0; k < pred.size(); ++k)
    if (std::abs(std::abs(target[k] - pred[k]) - 1.0) < 1e-3) target[k] += 0.01;
  c.push_back({"huber", {pred, target},
               [](TapeD &, Xs x) { return ad::huber(x[0], x[1], 1.0); }});
  return c;
}

struct ErrorStats {
  std::size_t count = 0;
  double median = 0.0;
  double p99 = 0.0;
  double max = 0.0;
};

/// Central differences over every parameter of the microscale model,
/// through both the density and the codebook heads.
inline ErrorStats microscale_model_check(double h) {
  const GridDims d{8, 8, 1.0 / 8};
  SplitMix64 rng(9);
  const auto in = random_inputs(d, rng);
  FluidsFormer<double> m(micro_config(), 9);
  randomize_head(m, 12);
  auto loss = [&](ad::Tape<double> &tape) {
    const auto latent = m.encode(tape, in);
    return project(tape, m.predict_density(tape, latent, 0.35, in, 1), 1) +
           project(tape, m.variant_logits(tape, latent, 0.35), 2);
  };
  ad::Tape<double> tape;
  tape.backward(loss(tape));
  std::vector<double> errors;
  for (std::size_t p = 0; p < m.params().size(); ++p) {
    auto &t = m.params()[p];
    const Tensor<double> g = tape.grad(tape.parameter(t));
    for (Index k = 0; k < t.size(); ++k) {
      const double x = t[k];
      t[k] = x + h;
      ad::Tape<double> up;
      up.set_grad_enabled(false);
      const double fu = loss(up).value().item();
      t[k] = x - h;
      ad::Tape<double> down;
      down.set_grad_enabled(false);
      const double fd = loss(down).value().item();
      t[k] = x;
      errors.push_back(rel_error(g[k], (fu - fd) / (2 * h)));
    }
  }
  std::sort(errors.begin(), errors.end());
  return {errors.size(), errors[errors.size() / 2], errors[errors.size() * 99 / 100],
          errors.back()};
}

} // namespace fftest

#endif // FLUIDSFORMER_TESTS_ORACLES_HPP_
