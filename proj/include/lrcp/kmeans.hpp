#pragma once

#include <cstdint>

#include "lrcp/matrix_core.hpp"

namespace lrcp {

// Seeded k-means on the rows of x: k-means++ initialization, Lloyd updates
// until assignments settle or max_iters. Returns the k x D center matrix.
// Deterministic for fixed (x, k, seed).
Matrix kmeans_centers(const Eigen::Ref<const Matrix>& x, Index k, std::uint64_t seed, int max_iters = 25);

}  // namespace lrcp
