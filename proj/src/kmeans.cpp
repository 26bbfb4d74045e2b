#include "lrcp/kmeans.hpp"

#include <limits>
#include <vector>

#include "lrcp/rng.hpp"

namespace lrcp {

namespace {

// Squared distances from every row of x to every center row, n x k.
Matrix pairwise_sqdist(const Eigen::Ref<const Matrix>& x, const Matrix& centers) {
    const Vector xn = x.rowwise().squaredNorm();
    const Vector cn = centers.rowwise().squaredNorm();
    Matrix d2 = -2.0 * (x * centers.transpose());
    d2.colwise() += xn;
    d2.rowwise() += cn.transpose();
    return d2.cwiseMax(0.0);
}

}  // namespace

Matrix kmeans_centers(const Eigen::Ref<const Matrix>& x, Index k, std::uint64_t seed, int max_iters) {
    check_token_matrix(x);
    const Index n = x.rows();
    if (k < 1 || k > n) {
        throw Error(ErrorCode::InvalidArgument,
                    "k must lie in [1, N] with N = " + std::to_string(n) + ", got " + std::to_string(k));
    }

    Rng rng(seed);
    Matrix centers(k, x.cols());

    // k-means++ seeding: next center sampled proportional to squared distance
    // from the nearest already-chosen center.
    centers.row(0) = x.row(static_cast<Index>(uniform_below(rng, static_cast<std::uint64_t>(n))));
    Vector d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (Index c = 1; c < k; ++c) {
        const double total = d2.sum();
        Index pick = 0;
        if (total <= 0.0) {
            pick = static_cast<Index>(uniform_below(rng, static_cast<std::uint64_t>(n)));
        } else {
            const double target = uniform_unit(rng) * total;
            double cum = 0.0;
            pick = n - 1;
            for (Index i = 0; i < n; ++i) {
                cum += d2(i);
                if (cum >= target) {
                    pick = i;
                    break;
                }
            }
        }
        centers.row(c) = x.row(pick);
        d2 = d2.cwiseMin((x.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }

    std::vector<Index> assign(static_cast<std::size_t>(n), -1);
    for (int iter = 0; iter < max_iters; ++iter) {
        const Matrix dist = pairwise_sqdist(x, centers);
        bool changed = false;
        for (Index i = 0; i < n; ++i) {
            Index best = 0;
            dist.row(i).minCoeff(&best);  // ties resolve to the lowest center index
            if (assign[static_cast<std::size_t>(i)] != best) {
                assign[static_cast<std::size_t>(i)] = best;
                changed = true;
            }
        }
        if (!changed) break;

        Matrix sums = Matrix::Zero(k, x.cols());
        std::vector<Index> counts(static_cast<std::size_t>(k), 0);
        for (Index i = 0; i < n; ++i) {
            sums.row(assign[static_cast<std::size_t>(i)]) += x.row(i);
            ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
        }
        for (Index c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
            } else {
                // Reseat an empty cluster at the point farthest from its center.
                Index farthest = 0;
                double worst = -1.0;
                for (Index i = 0; i < n; ++i) {
                    const double d = (x.row(i) - centers.row(assign[static_cast<std::size_t>(i)])).squaredNorm();
                    if (d > worst) {
                        worst = d;
                        farthest = i;
                    }
                }
                centers.row(c) = x.row(farthest);
            }
        }
    }
    return centers;
}

}  // namespace lrcp
