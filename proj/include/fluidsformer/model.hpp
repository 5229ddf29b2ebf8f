#ifndef FLUIDSFORMER_MODEL_HPP_
#define FLUIDSFORMER_MODEL_HPP_

#include "fluidsformer/autodiff.hpp"
#include "fluidsformer/optim.hpp"
#include "fluidsformer/tokenizer.hpp"

#include <cstdint>
#include <vector>

namespace fluidsformer {

struct ModelConfig {
  int d_model = 128;
  int heads = 4;
  int enc_layers = 4;
  int codebook_k = 16;
  int patch = 8;
  std::vector<int> decoder_widths{64, 128, 256, 512};
  int blocks_per_stage = 2;
  int ff_mult = 4;
  int time_dim = 16;       ///< Fourier time features (even)
  int code_dim = 8;        ///< codebook embedding width
  int latent_channels = 4; ///< per-keyframe channels of the token map

  void validate() const;
  friend bool operator==(const ModelConfig &, const ModelConfig &) = default;
};

/// Model inputs for one keyframe interval, already normalized.
struct IntervalInputs {
  SceneConstants constants;
  KeyframeFields first;
  KeyframeFields second;
};

/// Encoder output for one interval.
template <typename T> struct LatentState {
  ad::Var<T> tokens;  ///< [tokens, d_model]
  ad::Var<T> context; ///< [d_model], mean over tokens
  ad::Var<T> spatial; ///< [2 * latent_channels, ny, nx] token map
  std::vector<ad::Var<T>> attention; ///< per layer and head, [tokens, tokens]
};

/// Continuous-time attention encoder over equation and field tokens,
/// followed by an endpoint-anchored residual density decoder:
///
///   rho(s) = (1 - s) rho0 + s rho1 + s (1 - s) R(s, latent, code)
///
/// Code 0 is the canonical (zero-embedding) code.
template <typename T> class FluidsFormer {
public:
  FluidsFormer(const ModelConfig &config, std::uint64_t seed);

  const ModelConfig &config() const { return config_; }
  ParameterStore<T> &params() { return params_; }
  const ParameterStore<T> &params() const { return params_; }

  LatentState<T> encode(ad::Tape<T> &tape, const TokenSequence &seq) const;

  /// Convenience: tokenizes `inputs` with the configured patch and encodes.
  LatentState<T> encode(ad::Tape<T> &tape, const IntervalInputs &inputs) const;

  /// Residual field R in [-1, 1], shape [ny, nx].
  ad::Var<T> residual(ad::Tape<T> &tape, const LatentState<T> &latent, double s,
                      const IntervalInputs &inputs, int code = 0) const;

  /// Normalized density at interval time s in [0, 1], shape [ny, nx].
  ad::Var<T> predict_density(ad::Tape<T> &tape, const LatentState<T> &latent,
                             double s, const IntervalInputs &inputs,
                             int code = 0) const;

  /// Unnormalized code scores, shape [codebook_k]. The canonical code has
  /// score 0 and every other code a score <= 0.
  ad::Var<T> variant_logits(ad::Tape<T> &tape, const LatentState<T> &latent,
                            double s) const;

private:
  ad::Var<T> param(ad::Tape<T> &tape, const std::string &name) const {
    return tape.parameter(params_.at(name));
  }
  void init_params(std::uint64_t seed);

  ModelConfig config_;
  ParameterStore<T> params_;
};

/// Blend weights used by predict_density and the linear baseline.
inline double blend_weight(double s) { return s * (1.0 - s); }

/// Copies a rank-2 [ny, nx] tensor into a field.
template <typename T>
Field2 to_field(const Tensor<T> &t, const GridDims &dims);
template <typename T> Tensor<T> to_tensor(const Field2 &f);

} // namespace fluidsformer

#endif // FLUIDSFORMER_MODEL_HPP_
