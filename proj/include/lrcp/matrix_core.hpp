#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "lrcp/error.hpp"

namespace lrcp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Orthonormal basis of a dominant subspace. basis is D x r with
// basis^T basis = I_r; explained holds per-direction variance fractions of
// the matrix the subspace was estimated from, non-increasing, summing to at
// most 1. mean is empty unless the subspace was estimated on mean-centered
// data, in which case residuals must be computed about that mean.
struct Subspace {
    Matrix basis;
    Vector explained;
    Vector mean;

    Index rank() const { return basis.cols(); }
    Index ambient_dim() const { return basis.rows(); }
    bool centered() const { return mean.size() > 0; }
};

// Thin SVD m = u * diag(singular_values) * v^T, values non-increasing.
struct SvdResult {
    Matrix u;
    Vector singular_values;
    Matrix v;
};

enum class AngleAggregate { Mean, Min, Product };

// Throws EmptyInput / NonFiniteValue when x violates the token-matrix
// contract (N >= 1, D >= 1, all entries finite).
void check_token_matrix(const Eigen::Ref<const Matrix>& x);

// Flip each column so its largest-magnitude entry is positive, making bases
// comparable across runs.
void canonicalize_column_signs(Matrix& basis);

// Householder-QR orthonormalization of the columns of m. Throws
// RankDeficient when any column falls below rank_tol after projecting out the
// previous ones, so the returned basis always spans exactly span(m).
Matrix qr_orthonormalize(const Eigen::Ref<const Matrix>& m, double rank_tol = 1e-10);

// Exact thin SVD (Jacobi), restricted to min(N, D) <= max_exact_dim. Serves
// as the oracle for the randomized path and as the exact PCA route at desk
// scale.
SvdResult exact_svd(const Eigen::Ref<const Matrix>& m, Index max_exact_dim = 512);

// Halko-style randomized truncated SVD of the row space: returns the top-r
// right-singular subspace of m. Deterministic for fixed (m, rank, seed).
// explained is sigma_j^2 / ||m||_F^2, i.e. relative to the total energy, not
// only the captured part. O(N*D*(rank+oversample)) work.
Subspace randomized_truncated_svd(const Eigen::Ref<const Matrix>& m, Index rank, std::uint64_t seed,
                                  Index oversample = 8, int power_iters = 2);

// The same factorization plus byproducts a pipeline can reuse without extra
// passes over m: per-row squared norms and the projections m * basis (equal
// up to roundoff, assembled from the sketch instead of another N*D*r pass).
struct RandomizedSvdDetail {
    Subspace subspace;
    Vector row_squared_norms;
    Matrix projected;
};
RandomizedSvdDetail randomized_truncated_svd_detail(const Eigen::Ref<const Matrix>& m, Index rank,
                                                    std::uint64_t seed, Index oversample = 8,
                                                    int power_iters = 2);

// Cosines of the principal angles between the two subspaces: singular values
// of a.basis^T * b.basis, clamped to [0, 1], non-increasing.
Vector principal_angle_cosines(const Subspace& a, const Subspace& b);

// Aggregated principal-angle similarity in [0, 1]. Mean of the cosines by
// default; Min and Product are alternatives for sensitivity checks.
double principal_angle_similarity(const Subspace& a, const Subspace& b,
                                  AngleAggregate aggregate = AngleAggregate::Mean);

}  // namespace lrcp
