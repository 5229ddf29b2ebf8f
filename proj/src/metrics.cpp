#include "fluidsformer/metrics.hpp"

#include "fluidsformer/errors.hpp"
#include "fluidsformer/losses.hpp"

#include <cmath>
#include <limits>

namespace fluidsformer {

FrameMetrics frame_metrics(const Field2 &pred, const Field2 &truth, double rho_max) {
  if (!(pred.dims() == truth.dims()))
    throw DimensionMismatch("metrics: " + pred.dims().to_string() + " vs " +
                            truth.dims().to_string());
  if (!(rho_max > 0.0)) throw InvalidArgument("PSNR peak must be > 0");
  const Eigen::ArrayXd r = pred.data() - truth.data();
  FrameMetrics m;
  m.mae = r.abs().mean();
  m.rmse = std::sqrt(r.square().mean());
  m.psnr = m.rmse == 0.0 ? std::numeric_limits<double>::infinity()
                         : 20.0 * std::log10(rho_max / m.rmse);
  m.mass_error = volume_penalty(pred, truth);
  return m;
}

namespace {

nlohmann::json number(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

nlohmann::json to_json(const FrameMetrics &m) {
  return {{"mae", number(m.mae)},
          {"rmse", number(m.rmse)},
          {"psnr", number(m.psnr)},
          {"mass_error", number(m.mass_error)}};
}

} // namespace

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t k = 0; k < frames.size(); ++k) {
    auto j = fluidsformer::to_json(frames[k]);
    j["frame"] = k;
    per.push_back(std::move(j));
  }
  return {{"frames", std::move(per)},
          {"mean", fluidsformer::to_json(mean)},
          {"max", fluidsformer::to_json(max)}};
}

MetricsReport eval_metrics(const std::vector<Field2> &pred,
                           const std::vector<Field2> &truth, double rho_max) {
  if (pred.size() != truth.size())
    throw DimensionMismatch("metrics: " + std::to_string(pred.size()) + " vs " +
                            std::to_string(truth.size()) + " frames");
  if (pred.empty()) throw InvalidArgument("metrics need at least one frame");
  MetricsReport rep;
  const double ninf = -std::numeric_limits<double>::infinity();
  rep.max = {ninf, ninf, ninf, ninf};
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const FrameMetrics m = frame_metrics(pred[k], truth[k], rho_max);
    rep.frames.push_back(m);
    rep.mean.mae += m.mae;
    rep.mean.rmse += m.rmse;
    rep.mean.psnr += m.psnr;
    rep.mean.mass_error += m.mass_error;
    rep.max.mae = std::max(rep.max.mae, m.mae);
    rep.max.rmse = std::max(rep.max.rmse, m.rmse);
    rep.max.psnr = std::max(rep.max.psnr, m.psnr);
    rep.max.mass_error = std::max(rep.max.mass_error, m.mass_error);
  }
  const double n = static_cast<double>(pred.size());
  rep.mean.mae /= n;
  rep.mean.rmse /= n;
  rep.mean.psnr /= n;
  rep.mean.mass_error /= n;
  return rep;
}

MetricsReport eval_metrics(const FgsFile &pred, const FgsFile &truth, double rho_max) {
  if (pred.nx != truth.nx || pred.ny != truth.ny)
    throw DimensionMismatch("metrics: grids " + std::to_string(pred.nx) + "x" +
                            std::to_string(pred.ny) + " vs " + std::to_string(truth.nx) +
                            "x" + std::to_string(truth.ny));
  if (pred.frames.size() != truth.frames.size())
    throw DimensionMismatch("metrics: " + std::to_string(pred.frames.size()) + " vs " +
                            std::to_string(truth.frames.size()) + " frames");
  std::vector<Field2> p, t;
  for (const auto &f : from_fgs(pred)) p.push_back(f.density);
  for (const auto &f : from_fgs(truth)) t.push_back(f.density);
  return eval_metrics(p, t, rho_max);
}

} // namespace fluidsformer
