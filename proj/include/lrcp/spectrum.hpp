#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "lrcp/compress.hpp"

namespace lrcp {

// Explained-variance spectrum of a token matrix. explained holds
// non-increasing variance fractions sigma_j^2 / ||X||_F^2; fractions below
// 1e-12 are reported as zero. rank_at caches Rank@v lookups by percentage.
struct SpectrumReport {
    Vector explained;
    std::map<int, Index> rank_at;
    double total_energy = 0.0;
};

enum class StabilityMode { RandomDropout, ImportancePruned };

// One subspace-stability experiment: similarity of the re-estimated dominant
// subspace to the full-set subspace, one entry per trial (random dropout) or
// per pruning stage.
struct StabilityReport {
    double drop_ratio = 0.0;
    Index trials = 0;
    std::vector<double> similarities;
    double mean_similarity = 0.0;
    double min_similarity = 0.0;
    StabilityMode mode = StabilityMode::RandomDropout;
};

// Exact SVD spectrum when min(N, D) <= exact_dim_limit, randomized truncated
// SVD with r = max_components above it.
SpectrumReport explained_variance_spectrum(const Eigen::Ref<const Matrix>& x, Index max_components,
                                           std::uint64_t seed = 0, Index exact_dim_limit = 512);

// Minimal d whose cumulative explained fraction reaches v percent. Throws
// InsufficientSpectrum when the computed components never get there.
Index rank_at_variance(const SpectrumReport& spectrum, double v);

// Per trial: uniformly drop drop_ratio of the rows, re-estimate the top-r
// subspace, and record its principal-angle similarity to the full-set
// subspace. Per-trial sampling streams derive from (seed, trial).
StabilityReport stability_random_dropout(const Eigen::Ref<const Matrix>& x, Index rank, double drop_ratio,
                                         Index trials, std::uint64_t seed);

// Progressive importance-based pruning: at each stage keep the top
// stage_keeps[t] tokens by the configured selection rule (no merging), then
// compare the subspace re-estimated from the survivors with the original.
StabilityReport stability_under_pruning(const Eigen::Ref<const Matrix>& x, const CompressionConfig& cfg,
                                        const std::vector<Index>& stage_keeps);

}  // namespace lrcp
