#ifndef FLUIDSFORMER_INTERPOLATION_HPP_
#define FLUIDSFORMER_INTERPOLATION_HPP_

#include "fluidsformer/formats.hpp"
#include "fluidsformer/model.hpp"
#include "fluidsformer/search.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

namespace fluidsformer {

struct InterpRequest {
  std::vector<FluidFrame> keyframes; ///< physical units
  int substeps = 1;

  int intervals() const { return static_cast<int>(keyframes.size()) - 1; }
  /// At least two keyframes on one grid and S >= 1; velocities when asked.
  void validate(bool need_velocity) const;
};

/// Query times (i + 0.5) / S inside each interval.
std::vector<double> substep_times(int substeps);

struct OutputFrame {
  double time = 0.0; ///< in keyframe units
  Field2 density;
  bool keyframe = false;
};
using FrameSequence = std::vector<OutputFrame>;

std::vector<FluidFrame> to_fluid_frames(const FrameSequence &frames);

/// A loaded checkpoint ready for inference.
class Interpolator {
public:
  explicit Interpolator(Checkpoint checkpoint);

  const Checkpoint &checkpoint() const { return ckpt_; }
  const FluidsFormer<float> &model() const { return model_; }

  /// Throws DimensionMismatch when the request grid differs from the
  /// trained grid.
  void check(const InterpRequest &req) const;

  /// Denormalized densities of one interval at the given times and codes.
  std::vector<Field2> predict(const InterpRequest &req, int interval,
                              const std::vector<double> &times,
                              const std::vector<int> &codes) const;

  /// Log-probabilities over codes at each time of one interval.
  std::vector<Eigen::VectorXd> log_probs(const InterpRequest &req, int interval,
                                         const std::vector<double> &times) const;

private:
  Checkpoint ckpt_;
  FluidsFormer<float> model_;
};

FluidsFormer<float> model_from_checkpoint(const Checkpoint &ckpt);

/// Canonical interpolation: keyframes interleaved with S predicted
/// substeps per interval, all with code 0.
FrameSequence interpolate(const Interpolator &interp, const InterpRequest &req);

/// Same with explicit codes, one per (interval, substep) in time order.
FrameSequence interpolate_with_codes(const Interpolator &interp,
                                     const InterpRequest &req,
                                     const std::vector<int> &codes);

FrameSequence baseline_linear(const InterpRequest &req);
/// Transports each interval's first keyframe by s * dt under its velocity.
FrameSequence baseline_readvect(const InterpRequest &req, double dt);

struct VariantNode {
  int id = 0;
  int parent = -1;
  int interval = -1; ///< -1 for the root
  int substep = -1;
  int code = 0;
  double log_prob = 0.0; ///< of this node's code at its position
  std::vector<int> children;
};

/// Rooted tree of per-substep code choices. Node depth d covers the first d
/// positions in (interval, substep) order; unassigned later positions use
/// the canonical code.
class VariantTree {
public:
  VariantTree(int intervals, int substeps);

  int intervals() const { return intervals_; }
  int substeps() const { return substeps_; }
  int positions() const { return intervals_ * substeps_; }
  std::size_t size() const { return nodes_.size(); }
  const VariantNode &node(int id) const;
  /// 0-based position of a node, -1 for the root.
  int position(int id) const;

  /// Existing child with this code, or -1.
  int child(int parent, int code) const;
  int add_child(int parent, int code, double log_prob);
  int find_or_add_child(int parent, int code, double log_prob);

  /// Node ids from the first position down to `id`.
  std::vector<int> path(int id) const;
  /// Full-length code assignment for materializing `id`.
  std::vector<int> codes(int id) const;
  double score(int id) const;
  std::vector<int> leaves() const;

  nlohmann::json to_json() const;
  static VariantTree from_json(const nlohmann::json &j);

private:
  int intervals_;
  int substeps_;
  std::vector<VariantNode> nodes_;
};

struct VariantSearch {
  int k = 4;          ///< top-k candidates per substep
  int groups = 2;
  int beam = 2;
  double diversity = 1.0;
  std::uint64_t seed = 0;
};

/// Diverse beam search per interval over top-k code candidates; path p
/// chains the p-th sequence of every interval. Intervals are independent.
VariantTree build_variant_tree(const Interpolator &interp,
                               const InterpRequest &req,
                               const VariantSearch &search);

/// Fresh top-k draws (temperature 1) for every position after `node`.
/// Returns the new node ids in order.
std::vector<int> branch(VariantTree &tree, const Interpolator &interp,
                        const InterpRequest &req, int node, int k,
                        std::uint64_t seed);

/// Materializes paths on demand, sharing predicted frames between paths
/// with a common (position, code).
class PathMaterializer {
public:
  PathMaterializer(const Interpolator &interp, const InterpRequest &req);
  FrameSequence materialize(const VariantTree &tree, int node);

private:
  const Interpolator &interp_;
  const InterpRequest &req_;
  std::map<std::pair<int, int>, Field2> cache_; ///< (position, code)
};

/// Writes tree.json and one FGS per leaf path.
void write_variant_dir(const std::filesystem::path &dir, const VariantTree &tree,
                       PathMaterializer &materializer);

/// Boolean-combined densities; velocities come from `a`.
std::vector<FluidFrame> combine_keyframes(const std::vector<FluidFrame> &a,
                                          const std::vector<FluidFrame> &b,
                                          BooleanOp op, double rho_max = 1.0);

} // namespace fluidsformer

#endif // FLUIDSFORMER_INTERPOLATION_HPP_
