#include "fluidsformer/losses.hpp"

#include "fluidsformer/errors.hpp"
#include "fluidsformer/solver.hpp"

#include <algorithm>
#include <cmath>

namespace fluidsformer {

void LossConfig::validate() const {
  if (!(delta > 0.0)) throw InvalidArgument("Huber delta must be > 0");
  if (lambda_vol < 0.0 || lambda_adv < 0.0)
    throw InvalidArgument("loss weights must be >= 0");
}

double huber_loss(const Field2 &pred, const Field2 &target, double delta) {
  if (!(pred.dims() == target.dims()))
    throw DimensionMismatch("huber_loss: " + pred.dims().to_string() + " vs " +
                            target.dims().to_string());
  if (!(delta > 0.0)) throw InvalidArgument("Huber delta must be > 0");
  const Eigen::ArrayXd r = (target.data() - pred.data()).abs();
  const Eigen::ArrayXd per_cell =
      (r <= delta).select(0.5 * r.square(), delta * r - 0.5 * delta * delta);
  return per_cell.mean();
}

double volume_penalty(const Field2 &pred, const Field2 &target) {
  if (!(pred.dims() == target.dims()))
    throw DimensionMismatch("volume_penalty: " + pred.dims().to_string() +
                            " vs " + target.dims().to_string());
  const double t = target.sum();
  return std::abs(pred.sum() - t) / std::max(t, kMassEpsilon);
}

double advection_consistency(const Field2 &pred_s, const Field2 &rho0,
                             const MacVelocity2 &vel0, double s, double dt,
                             double delta) {
  if (!(s >= 0.0 && s <= 1.0))
    throw InvalidArgument("substep time outside [0, 1]");
  if (s == 0.0) return huber_loss(pred_s, rho0, delta);
  return huber_loss(pred_s, advect_semi_lagrangian(rho0, vel0, s * dt), delta);
}

template <typename T>
ad::Var<T> volume_penalty(const ad::Var<T> &pred_normalized,
                          double target_total, const NormStats &density) {
  // sum(denormalize(x)) = n lo + (sum(x) + n) (hi - lo) / 2
  const double n = static_cast<double>(pred_normalized.size());
  const double half = 0.5 * (density.hi - density.lo);
  ad::Var<T> total = ad::sum(pred_normalized);
  total = ad::add_scalar(ad::scale(total, static_cast<T>(half)),
                         static_cast<T>(n * density.lo + n * half - target_total));
  return ad::scale(ad::abs(total),
                   static_cast<T>(1.0 / std::max(target_total, kMassEpsilon)));
}

template ad::Var<float> volume_penalty(const ad::Var<float> &, double, const NormStats &);
template ad::Var<double> volume_penalty(const ad::Var<double> &, double, const NormStats &);

} // namespace fluidsformer
