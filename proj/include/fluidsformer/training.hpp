#ifndef FLUIDSFORMER_TRAINING_HPP_
#define FLUIDSFORMER_TRAINING_HPP_

#include "fluidsformer/formats.hpp"
#include "fluidsformer/losses.hpp"
#include "fluidsformer/model.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace fluidsformer {

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 4;
  int steps = 2000;
  std::uint64_t seed = 0;
  int eval_interval = 100;
  int substep_samples = 1; ///< substeps drawn per batch item
  double variant_weight = 0.1;
  int threads = 1;
  int val_limit = 0; ///< max validation intervals per evaluation, 0 = all
  ModelConfig model;

  void validate() const;
};

/// One simulated scenario held in memory: dense frames at the solver
/// substep rate, keyframes every `stride` frames.
struct ScenarioData {
  int id = 0;
  SceneConstants constants;
  double density_max = 1.0;
  int stride = 1;
  std::vector<Field2> density;
  std::vector<MacVelocity2> velocity;

  int interval_count() const {
    return (static_cast<int>(density.size()) - 1) / stride;
  }
};

struct Dataset {
  std::vector<ScenarioData> train;
  std::vector<ScenarioData> val;
  std::vector<ScenarioData> test;
};

struct DatasetSplit {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

/// Shuffled split by scenario index: floor(n/10) validation, floor(n/10)
/// test, the remainder training. Requires n >= 10.
DatasetSplit split_dataset(int n, std::uint64_t seed);

ScenarioData scenario_from_sequence(const SimSequence &seq,
                                    const SceneConfig &scene, int id);

/// Loads a manifest directory, after checking it against the file system.
Dataset load_dataset(const std::filesystem::path &dir);

/// Ranges of density and centered velocity over the given scenarios.
FieldNormalization compute_normalization(const std::vector<ScenarioData> &data);

/// Normalized model inputs for interval k of a scenario.
IntervalInputs make_interval_inputs(const ScenarioData &sc, int interval,
                                    const FieldNormalization &norm);
KeyframeFields normalize_keyframe(const Field2 &density,
                                  const MacVelocity2 &velocity,
                                  const FieldNormalization &norm);

struct MetricRecord {
  int step = 0;
  double train_loss = 0.0;
  double val_huber = 0.0;
  double val_mass_err = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint; ///< best validation parameters
  std::vector<MetricRecord> log;
  int best_step = 0;
  double best_val = 0.0;
};

/// Loss terms of one training sample. `total` is the weighted sum.
template <typename T> struct SampleLoss {
  ad::Var<T> total;
  double huber = 0.0;
  double volume = 0.0;
  double advection = 0.0;
  // retained for extra terms on the same sample
  IntervalInputs inputs;
  LatentState<T> latent;
  ad::Var<T> target; ///< normalized ground truth
  double s = 0.0;
};

/// Builds the supervised loss of one (interval, substep) sample on `tape`.
template <typename T>
SampleLoss<T> sample_loss(const FluidsFormer<T> &model, ad::Tape<T> &tape,
                          const ScenarioData &sc, int interval, int substep,
                          const FieldNormalization &norm,
                          const LossConfig &loss);

/// Canonical-code validation Huber and relative mass error, averaged over
/// every interior dense substep of every interval.
std::pair<double, double> evaluate(const FluidsFormer<float> &model,
                                   const std::vector<ScenarioData> &data,
                                   const FieldNormalization &norm,
                                   const LossConfig &loss, int limit = 0);

using MetricCallback = std::function<void(const MetricRecord &)>;

TrainResult train(const Dataset &data, const TrainConfig &config,
                  const LossConfig &loss, const MetricCallback &on_eval = {});

std::string to_jsonl(const MetricRecord &record);

} // namespace fluidsformer

#endif // FLUIDSFORMER_TRAINING_HPP_
