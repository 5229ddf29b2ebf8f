#ifndef FLUIDSFORMER_METRICS_HPP_
#define FLUIDSFORMER_METRICS_HPP_

#include "fluidsformer/formats.hpp"
#include "fluidsformer/grid.hpp"

#include <json.hpp>

#include <vector>

namespace fluidsformer {

struct FrameMetrics {
  double mae = 0.0;
  double rmse = 0.0;
  double psnr = 0.0; ///< +infinity when rmse is 0
  double mass_error = 0.0;
};

FrameMetrics frame_metrics(const Field2 &pred, const Field2 &truth, double rho_max);

struct MetricsReport {
  std::vector<FrameMetrics> frames;
  FrameMetrics mean;
  FrameMetrics max;

  nlohmann::json to_json() const;
};

/// Density metrics frame by frame. Grids and frame counts must match.
MetricsReport eval_metrics(const FgsFile &pred, const FgsFile &truth,
                           double rho_max = 1.0);
MetricsReport eval_metrics(const std::vector<Field2> &pred,
                           const std::vector<Field2> &truth, double rho_max = 1.0);

} // namespace fluidsformer

#endif // FLUIDSFORMER_METRICS_HPP_
