#ifndef FLUIDSFORMER_LOSSES_HPP_
#define FLUIDSFORMER_LOSSES_HPP_

#include "fluidsformer/autodiff.hpp"
#include "fluidsformer/grid.hpp"

namespace fluidsformer {

struct LossConfig {
  double delta = 1.0;      ///< Huber threshold
  double lambda_vol = 0.1; ///< volume (total mass) penalty weight
  double lambda_adv = 0.1; ///< advection-consistency weight

  void validate() const;
};

inline constexpr double kMassEpsilon = 1e-8;

/// Mean over cells of 0.5 r^2 (|r| <= delta) or delta |r| - 0.5 delta^2,
/// with r = target - pred.
double huber_loss(const Field2 &pred, const Field2 &target, double delta);

/// |sum(pred) - sum(target)| / max(sum(target), eps), in physical units.
double volume_penalty(const Field2 &pred, const Field2 &target);

/// Huber distance between a prediction at interval time s and the first
/// keyframe transported for s * dt under its stored velocity.
double advection_consistency(const Field2 &pred_s, const Field2 &rho0,
                             const MacVelocity2 &vel0, double s, double dt,
                             double delta);

/// Differentiable volume penalty for a normalized prediction against a
/// physical-unit target total.
template <typename T>
ad::Var<T> volume_penalty(const ad::Var<T> &pred_normalized,
                          double target_total, const NormStats &density);

} // namespace fluidsformer

#endif // FLUIDSFORMER_LOSSES_HPP_
