#include "lrcp/matrix_core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "lrcp/rng.hpp"

namespace lrcp {

namespace {

std::string shape_string(Index rows, Index cols) {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

// Thin Q factor of a Householder QR. No rank check: callers that tolerate
// deficiency get a deterministic orthonormal completion.
Matrix thin_q(const Matrix& m) {
    Eigen::HouseholderQR<Matrix> qr(m);
    return qr.householderQ() * Matrix::Identity(m.rows(), m.cols());
}

}  // namespace

void check_token_matrix(const Eigen::Ref<const Matrix>& x) {
    if (x.rows() < 1 || x.cols() < 1) {
        throw Error(ErrorCode::EmptyInput,
                    "token matrix must have N >= 1 and D >= 1, got " + shape_string(x.rows(), x.cols()));
    }
    if (!x.allFinite()) {
        for (Index i = 0; i < x.rows(); ++i) {
            for (Index j = 0; j < x.cols(); ++j) {
                if (!std::isfinite(x(i, j))) {
                    throw Error(ErrorCode::NonFiniteValue, "non-finite entry at row " + std::to_string(i) +
                                                               ", column " + std::to_string(j));
                }
            }
        }
    }
}

void canonicalize_column_signs(Matrix& basis) {
    for (Index j = 0; j < basis.cols(); ++j) {
        Index at = 0;
        basis.col(j).cwiseAbs().maxCoeff(&at);
        if (basis(at, j) < 0.0) basis.col(j) = -basis.col(j);
    }
}

Matrix qr_orthonormalize(const Eigen::Ref<const Matrix>& m, double rank_tol) {
    if (m.rows() < 1 || m.cols() < 1) {
        throw Error(ErrorCode::EmptyInput, "cannot orthonormalize an empty matrix");
    }
    if (m.cols() > m.rows()) {
        throw Error(ErrorCode::RankDeficient, "matrix " + shape_string(m.rows(), m.cols()) +
                                                  " has more columns than rows, cannot have full column rank");
    }
    Eigen::HouseholderQR<Matrix> qr(m);
    const Matrix r = qr.matrixQR().topRows(m.cols()).triangularView<Eigen::Upper>();
    const double scale = r.diagonal().cwiseAbs().maxCoeff();
    if (scale <= 0.0) {
        throw Error(ErrorCode::RankDeficient, "all columns are numerically zero");
    }
    for (Index j = 0; j < m.cols(); ++j) {
        if (std::abs(r(j, j)) <= rank_tol * scale) {
            throw Error(ErrorCode::RankDeficient,
                        "column " + std::to_string(j) + " is numerically dependent on the previous columns");
        }
    }
    Matrix q = qr.householderQ() * Matrix::Identity(m.rows(), m.cols());
    canonicalize_column_signs(q);
    return q;
}

SvdResult exact_svd(const Eigen::Ref<const Matrix>& m, Index max_exact_dim) {
    check_token_matrix(m);
    if (std::min(m.rows(), m.cols()) > max_exact_dim) {
        throw Error(ErrorCode::MatrixTooLarge,
                    "exact SVD is limited to min(N, D) <= " + std::to_string(max_exact_dim) + ", got " +
                        shape_string(m.rows(), m.cols()) + "; use the randomized path");
    }
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) {
        throw Error(ErrorCode::DidNotConverge, "Jacobi SVD did not converge within its iteration cap");
    }
    SvdResult out{svd.matrixU(), svd.singularValues(), svd.matrixV()};
    // Sign convention on V, mirrored into U so u * diag(s) * v^T is unchanged.
    for (Index j = 0; j < out.v.cols(); ++j) {
        Index at = 0;
        out.v.col(j).cwiseAbs().maxCoeff(&at);
        if (out.v(at, j) < 0.0) {
            out.v.col(j) = -out.v.col(j);
            out.u.col(j) = -out.u.col(j);
        }
    }
    return out;
}

Subspace randomized_truncated_svd(const Eigen::Ref<const Matrix>& m, Index rank, std::uint64_t seed,
                                  Index oversample, int power_iters) {
    return randomized_truncated_svd_detail(m, rank, seed, oversample, power_iters).subspace;
}

RandomizedSvdDetail randomized_truncated_svd_detail(const Eigen::Ref<const Matrix>& m, Index rank,
                                                    std::uint64_t seed, Index oversample, int power_iters) {
    check_token_matrix(m);
    const Index max_rank = std::min(m.rows(), m.cols());
    if (rank < 1 || rank >= max_rank) {
        throw Error(ErrorCode::InvalidRank, "rank must satisfy 1 <= r < min(N, D) = " + std::to_string(max_rank) +
                                                ", got " + std::to_string(rank));
    }

    const Index sketch = std::min(rank + oversample, max_rank);
    Rng rng(seed);
    const Matrix omega = gaussian_matrix(m.rows(), sketch, rng);

    // Range of m^T, refined by power iterations with re-orthonormalization.
    Matrix q = thin_q(m.transpose() * omega);
    for (int it = 0; it < power_iters; ++it) {
        const Matrix z = thin_q(m * q);
        q = thin_q(m.transpose() * z);
    }

    const Matrix b = m * q;
    Eigen::JacobiSVD<Matrix> svd(b, Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) {
        throw Error(ErrorCode::DidNotConverge, "SVD of the projected matrix did not converge");
    }
    const Matrix mix = svd.matrixV().leftCols(rank);

    RandomizedSvdDetail out;
    out.subspace.basis = q * mix;
    out.row_squared_norms = m.rowwise().squaredNorm();
    const double total_energy = out.row_squared_norms.sum();
    if (total_energy > 0.0) {
        out.subspace.explained = svd.singularValues().head(rank).array().square() / total_energy;
    } else {
        out.subspace.explained = Vector::Zero(rank);
    }

    // sign convention first so projected matches m * basis
    std::vector<char> flipped(static_cast<std::size_t>(rank), 0);
    for (Index j = 0; j < rank; ++j) {
        Index at = 0;
        out.subspace.basis.col(j).cwiseAbs().maxCoeff(&at);
        if (out.subspace.basis(at, j) < 0.0) {
            out.subspace.basis.col(j) = -out.subspace.basis.col(j);
            flipped[static_cast<std::size_t>(j)] = 1;
        }
    }
    out.projected = b * mix;  // = m * q * mix, no extra pass over m
    for (Index j = 0; j < rank; ++j) {
        if (flipped[static_cast<std::size_t>(j)]) out.projected.col(j) = -out.projected.col(j);
    }
    return out;
}

Vector principal_angle_cosines(const Subspace& a, const Subspace& b) {
    if (a.ambient_dim() != b.ambient_dim()) {
        throw Error(ErrorCode::DimensionMismatch, "ambient dimensions differ: " + std::to_string(a.ambient_dim()) +
                                                      " vs " + std::to_string(b.ambient_dim()));
    }
    if (a.rank() != b.rank()) {
        throw Error(ErrorCode::RankMismatch,
                    "subspace ranks differ: " + std::to_string(a.rank()) + " vs " + std::to_string(b.rank()));
    }
    const Matrix cross = a.basis.transpose() * b.basis;
    Eigen::JacobiSVD<Matrix> svd(cross);
    Vector cosines = svd.singularValues();
    for (Index i = 0; i < cosines.size(); ++i) cosines(i) = std::clamp(cosines(i), 0.0, 1.0);
    return cosines;
}

double principal_angle_similarity(const Subspace& a, const Subspace& b, AngleAggregate aggregate) {
    const Vector cosines = principal_angle_cosines(a, b);
    double value = 0.0;
    switch (aggregate) {
        case AngleAggregate::Mean: value = cosines.mean(); break;
        case AngleAggregate::Min: value = cosines.minCoeff(); break;
        case AngleAggregate::Product: value = cosines.prod(); break;
    }
    return std::clamp(value, 0.0, 1.0);
}

}  // namespace lrcp
