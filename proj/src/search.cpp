#include "fluidsformer/search.hpp"

#include "fluidsformer/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <string>

namespace fluidsformer {

std::vector<int> top_k_indices(std::span<const double> values, int k) {
  const int n = static_cast<int>(values.size());
  if (k < 1 || k > n)
    throw InvalidArgument("top-k needs 1 <= k <= " + std::to_string(n) +
                          ", got " + std::to_string(k));
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return values[a] > values[b]; });
  idx.resize(k);
  return idx;
}

int top_k_sample(std::span<const double> logits, int k, double temperature,
                 SplitMix64 &rng) {
  if (!(temperature >= 0.0))
    throw InvalidArgument("temperature must be >= 0");
  const std::vector<int> keep = top_k_indices(logits, k);
  if (k == 1 || temperature == 0.0) return keep.front();

  const double top = logits[keep.front()];
  std::vector<double> w(keep.size());
  double total = 0.0;
  for (std::size_t m = 0; m < keep.size(); ++m) {
    w[m] = std::exp((logits[keep[m]] - top) / temperature);
    total += w[m];
  }
  double u = rng.uniform() * total;
  for (std::size_t m = 0; m < keep.size(); ++m) {
    if (u < w[m]) return keep[m];
    u -= w[m];
  }
  return keep.back();
}

int top_k_sample(std::span<const double> logits, int k, double temperature,
                 std::uint64_t seed) {
  SplitMix64 rng(seed);
  return top_k_sample(logits, k, temperature, rng);
}

namespace {

struct Beam {
  std::vector<int> codes;
  double score = 0.0;
};

struct Candidate {
  int beam;
  int code;
  double score;     // unpenalized
  double augmented; // ranking key
};

} // namespace

std::vector<BeamResult> diverse_beam_search(const StepScorer &score,
                                            const BeamSearchConfig &config) {
  if (config.num_codes < 1 || config.length < 1 || config.groups < 1 ||
      config.beam < 1)
    throw InvalidArgument("beam search sizes must be positive");
  if (!(config.diversity >= 0.0))
    throw InvalidArgument("diversity weight must be >= 0");

  const double neg_inf = -std::numeric_limits<double>::infinity();
  std::vector<std::vector<Beam>> groups(config.groups,
                                        std::vector<Beam>{Beam{}});
  for (int t = 0; t < config.length; ++t) {
    const bool last = t + 1 == config.length;
    std::vector<int> used(config.num_codes, 0);
    std::set<std::vector<int>> finished;
    for (int g = 0; g < config.groups; ++g) {
      std::vector<Candidate> cands;
      const auto &beams = groups[g];
      for (int b = 0; b < static_cast<int>(beams.size()); ++b)
        for (int c = 0; c < config.num_codes; ++c) {
          const double inc = score(t, beams[b].codes, c);
          if (inc == neg_inf) continue;
          const double s = beams[b].score + inc;
          cands.push_back({b, c, s, s - config.diversity * used[c]});
        }
      std::stable_sort(cands.begin(), cands.end(),
                       [](const Candidate &a, const Candidate &b) {
                         return a.augmented > b.augmented;
                       });
      std::vector<Beam> next;
      for (const Candidate &cand : cands) {
        if (static_cast<int>(next.size()) == config.beam) break;
        Beam nb{beams[cand.beam].codes, cand.score};
        nb.codes.push_back(cand.code);
        // with a diversity penalty, whole sequences never repeat across groups
        if (last && config.diversity > 0.0 && finished.count(nb.codes)) continue;
        next.push_back(std::move(nb));
      }
      for (const Beam &b : next) {
        ++used[b.codes.back()];
        if (last) finished.insert(b.codes);
      }
      groups[g] = std::move(next);
    }
  }

  std::vector<BeamResult> out;
  for (int g = 0; g < config.groups; ++g) {
    auto beams = groups[g];
    std::stable_sort(beams.begin(), beams.end(),
                     [](const Beam &a, const Beam &b) { return a.score > b.score; });
    for (auto &b : beams) out.push_back({std::move(b.codes), b.score, g});
  }
  return out;
}

} // namespace fluidsformer
