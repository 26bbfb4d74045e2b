#include "lrcp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "lrcp/compress.hpp"
#include "lrcp/rng.hpp"

namespace lrcp {

namespace {

void sort_columns_by_energy(Subspace& subspace, const Matrix& x) {
    const double total = x.squaredNorm();
    const Index r = subspace.rank();
    Vector energy = (x * subspace.basis).colwise().squaredNorm();
    std::vector<Index> order(static_cast<std::size_t>(r));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return energy(a) > energy(b); });
    Matrix sorted(subspace.ambient_dim(), r);
    Vector fractions(r);
    for (Index j = 0; j < r; ++j) {
        sorted.col(j) = subspace.basis.col(order[static_cast<std::size_t>(j)]);
        fractions(j) = total > 0.0 ? energy(order[static_cast<std::size_t>(j)]) / total : 0.0;
    }
    subspace.basis = std::move(sorted);
    subspace.explained = std::move(fractions);
}

double binomial_or_cap(Index n, Index k, double cap) {
    const Index kk = std::min(k, n - k);
    double count = 1.0;
    for (Index i = 1; i <= kk; ++i) {
        count *= static_cast<double>(n - kk + i) / static_cast<double>(i);
        if (count > cap) return std::numeric_limits<double>::infinity();
    }
    return count;
}

}  // namespace

PlantedInstance gen_low_rank_noise(Index n, Index d, Index rank, const std::vector<double>& spectrum, double sigma,
                                   std::uint64_t seed) {
    if (n < 1 || d < 1) {
        throw Error(ErrorCode::EmptyInput, "matrix dimensions must be positive");
    }
    if (rank < 1 || rank > std::min(n, d)) {
        throw Error(ErrorCode::InvalidRank, "planted rank must satisfy 1 <= r <= min(N, D) = " +
                                                std::to_string(std::min(n, d)) + ", got " + std::to_string(rank));
    }
    if (static_cast<Index>(spectrum.size()) != rank) {
        throw Error(ErrorCode::InvalidSpectrum, "spectrum must have exactly rank = " + std::to_string(rank) +
                                                    " entries, got " + std::to_string(spectrum.size()));
    }
    for (std::size_t j = 0; j < spectrum.size(); ++j) {
        if (!(spectrum[j] > 0.0)) {
            throw Error(ErrorCode::InvalidSpectrum, "spectrum entries must be positive");
        }
        if (j > 0 && spectrum[j] > spectrum[j - 1]) {
            throw Error(ErrorCode::InvalidSpectrum, "spectrum must be non-increasing");
        }
    }
    if (sigma < 0.0) {
        throw Error(ErrorCode::InvalidArgument, "noise sigma must be non-negative");
    }

    Rng rng_left(derive_seed(seed, 0));
    Rng rng_right(derive_seed(seed, 1));
    const Matrix a = qr_orthonormalize(gaussian_matrix(n, rank, rng_left));
    const Matrix b = qr_orthonormalize(gaussian_matrix(d, rank, rng_right));

    Vector values(rank);
    for (Index j = 0; j < rank; ++j) values(j) = spectrum[static_cast<std::size_t>(j)];

    PlantedInstance instance;
    instance.matrix = a * values.asDiagonal() * b.transpose();
    if (sigma > 0.0) {
        Rng rng_noise(derive_seed(seed, 2));
        instance.matrix += sigma * gaussian_matrix(n, d, rng_noise);
    }
    instance.true_subspace.basis = b;
    instance.true_subspace.explained = values.array().square() / values.squaredNorm();
    instance.noise_sigma = sigma;
    return instance;
}

PlantedInstance gen_background_outliers(Index n_background, Index n_outliers, Index d, Index rank,
                                        std::uint64_t seed) {
    if (n_background < 1 || d < 1 || rank < 1 || n_outliers < 0) {
        throw Error(ErrorCode::InvalidArgument, "need n_background >= 1, d >= 1, rank >= 1, n_outliers >= 0");
    }
    if (rank + n_outliers > d) {
        throw Error(ErrorCode::DimensionTooSmall, "outliers are drawn orthogonal to the background: need rank + "
                                                  "n_outliers <= D, got " +
                                                      std::to_string(rank + n_outliers) + " > " + std::to_string(d));
    }

    Rng rng_basis(derive_seed(seed, 0));
    const Matrix q = qr_orthonormalize(gaussian_matrix(d, rank + n_outliers, rng_basis));
    const Matrix background_basis = q.leftCols(rank);
    const Matrix outlier_directions = q.rightCols(n_outliers);

    Rng rng_coeff(derive_seed(seed, 1));
    const Matrix coefficients = gaussian_matrix(n_background, rank, rng_coeff);

    const Index n = n_background + n_outliers;
    Rng rng_positions(derive_seed(seed, 2));
    PlantedInstance instance;
    instance.outlier_indices = sample_without_replacement(n, n_outliers, rng_positions);

    std::vector<char> is_outlier(static_cast<std::size_t>(n), 0);
    for (const Index i : instance.outlier_indices) is_outlier[static_cast<std::size_t>(i)] = 1;

    instance.matrix.resize(n, d);
    Index background_cursor = 0;
    Index outlier_cursor = 0;
    for (Index i = 0; i < n; ++i) {
        if (is_outlier[static_cast<std::size_t>(i)]) {
            instance.matrix.row(i) = outlier_directions.col(outlier_cursor++).transpose();
        } else {
            instance.matrix.row(i) = coefficients.row(background_cursor++) * background_basis.transpose();
        }
    }

    instance.true_subspace.basis = background_basis;
    sort_columns_by_energy(instance.true_subspace, instance.matrix);
    instance.noise_sigma = 0.0;
    return instance;
}

SubsetSearchResult brute_force_best_subset(const Eigen::Ref<const Matrix>& x, const Subspace& subspace, Index k,
                                           double max_subsets) {
    check_token_matrix(x);
    const Index n = x.rows();
    if (k < 1 || k > n) {
        throw Error(ErrorCode::BudgetExceedsTokens,
                    "budget must satisfy 1 <= K <= N = " + std::to_string(n) + ", got " + std::to_string(k));
    }
    const double subsets = binomial_or_cap(n, k, max_subsets);
    if (!(subsets <= max_subsets)) {
        throw Error(ErrorCode::TooManySubsets, "C(" + std::to_string(n) + ", " + std::to_string(k) +
                                                   ") exceeds the enumeration bound of " +
                                                   std::to_string(static_cast<long long>(max_subsets)));
    }

    const Vector residuals = projection_residuals(x, subspace);

    std::vector<Index> comb(static_cast<std::size_t>(k));
    std::iota(comb.begin(), comb.end(), Index{0});
    std::vector<char> keep(static_cast<std::size_t>(n), 0);

    SubsetSearchResult best;
    best.loss = std::numeric_limits<double>::infinity();
    for (;;) {
        std::fill(keep.begin(), keep.end(), 0);
        for (const Index i : comb) keep[static_cast<std::size_t>(i)] = 1;
        double loss = 0.0;
        for (Index i = 0; i < n; ++i) {
            if (!keep[static_cast<std::size_t>(i)]) loss += residuals(i);
        }
        // strict <: lexicographic enumeration keeps the smallest minimizer
        if (loss < best.loss) {
            best.loss = loss;
            best.indices = comb;
        }

        // next combination in lexicographic order
        Index pos = k - 1;
        while (pos >= 0 && comb[static_cast<std::size_t>(pos)] == n - k + pos) --pos;
        if (pos < 0) break;
        ++comb[static_cast<std::size_t>(pos)];
        for (Index j = pos + 1; j < k; ++j) {
            comb[static_cast<std::size_t>(j)] = comb[static_cast<std::size_t>(j - 1)] + 1;
        }
    }
    return best;
}

}  // namespace lrcp
