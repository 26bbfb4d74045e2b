#pragma once

#include <cstdint>
#include <vector>

#include "lrcp/matrix_core.hpp"

namespace lrcp {

// A generated token matrix with its construction ground truth.
struct PlantedInstance {
    Matrix matrix;
    Subspace true_subspace;
    std::vector<Index> outlier_indices;
    double noise_sigma = 0.0;
};

// X = A * diag(spectrum) * B^T + sigma * G with seeded orthonormal A (n x r),
// B (d x r) and Gaussian G. Deterministic per seed.
PlantedInstance gen_low_rank_noise(Index n, Index d, Index rank, const std::vector<double>& spectrum, double sigma,
                                   std::uint64_t seed);

// Background rows drawn inside a random r-dimensional subspace with
// unit-scale coefficients, plus unit-norm outlier rows orthogonal to it,
// scattered at seeded positions. Needs rank + n_outliers <= d.
PlantedInstance gen_background_outliers(Index n_background, Index n_outliers, Index d, Index rank,
                                        std::uint64_t seed);

struct SubsetSearchResult {
    std::vector<Index> indices;  // lexicographically smallest minimizer
    double loss = 0.0;
};

// Exhaustive minimization of the surrogate loss over all size-k retained
// sets. The enumeration bound keeps C(N, k) at most max_subsets.
SubsetSearchResult brute_force_best_subset(const Eigen::Ref<const Matrix>& x, const Subspace& subspace, Index k,
                                           double max_subsets = 1e6);

}  // namespace lrcp
