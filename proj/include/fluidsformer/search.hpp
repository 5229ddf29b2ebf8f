#ifndef FLUIDSFORMER_SEARCH_HPP_
#define FLUIDSFORMER_SEARCH_HPP_

#include "fluidsformer/rng.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace fluidsformer {

/// Keeps the k largest logits (ties resolved toward the lower index),
/// renormalizes softmax(logits / temperature) over them and samples.
/// Temperature 0 returns the argmax.
int top_k_sample(std::span<const double> logits, int k, double temperature,
                 SplitMix64 &rng);
int top_k_sample(std::span<const double> logits, int k, double temperature,
                 std::uint64_t seed);

/// Indices of the k largest values, descending, ties toward lower index.
std::vector<int> top_k_indices(std::span<const double> values, int k);

/// Log-probability increment of appending `code` at position `step` after
/// `prefix`. Returning -infinity excludes the candidate.
using StepScorer =
    std::function<double(int step, std::span<const int> prefix, int code)>;

struct BeamResult {
  std::vector<int> codes;
  double score = 0.0; ///< unpenalized cumulative log-probability
  int group = 0;
};

struct BeamSearchConfig {
  int num_codes = 2;
  int length = 1;
  int groups = 1;
  int beam = 1;
  double diversity = 0.0;
};

/// Group-wise beam search. Groups advance step-synchronously; at each step
/// group g pays `diversity` for every beam of groups < g that chose the same
/// code at that step. Results are grouped in order and sorted by
/// unpenalized score within each group.
std::vector<BeamResult> diverse_beam_search(const StepScorer &score,
                                            const BeamSearchConfig &config);

} // namespace fluidsformer

#endif // FLUIDSFORMER_SEARCH_HPP_
