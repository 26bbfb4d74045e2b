#include <doctest.h>

#include <algorithm>

#include "lrcp/compress.hpp"
#include "lrcp/spectrum.hpp"
#include "lrcp/synth.hpp"

using namespace lrcp;

TEST_CASE("gen_low_rank_noise plants an exact rank without noise") {
    const PlantedInstance inst = gen_low_rank_noise(20, 8, 2, {10.0, 5.0}, 0.0, 42);
    const SvdResult svd = exact_svd(inst.matrix);
    CHECK(svd.singular_values(0) == doctest::Approx(10.0).epsilon(1e-8));
    CHECK(svd.singular_values(1) == doctest::Approx(5.0).epsilon(1e-8));
    for (Index j = 2; j < svd.singular_values.size(); ++j) {
        CHECK(svd.singular_values(j) < 1e-10);
    }
    CHECK(inst.outlier_indices.empty());
    CHECK(inst.true_subspace.rank() == 2);
}

TEST_CASE("gen_low_rank_noise keeps Rank@95 at the planted rank under light noise") {
    const PlantedInstance inst = gen_low_rank_noise(256, 64, 3, {20.0, 16.0, 12.0}, 0.01, 7);
    const SpectrumReport report = explained_variance_spectrum(inst.matrix, 32);
    CHECK(rank_at_variance(report, 95.0) == 3);
}

TEST_CASE("gen_low_rank_noise is bit-reproducible") {
    const PlantedInstance a = gen_low_rank_noise(12, 6, 2, {3.0, 1.0}, 0.5, 9);
    const PlantedInstance b = gen_low_rank_noise(12, 6, 2, {3.0, 1.0}, 0.5, 9);
    CHECK((a.matrix - b.matrix).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gen_low_rank_noise validates the spectrum") {
    CHECK_THROWS_AS(gen_low_rank_noise(10, 5, 2, {1.0}, 0.0, 0), Error);           // wrong length
    CHECK_THROWS_AS(gen_low_rank_noise(10, 5, 2, {1.0, 2.0}, 0.0, 0), Error);      // increasing
    CHECK_THROWS_AS(gen_low_rank_noise(10, 5, 2, {1.0, 0.0}, 0.0, 0), Error);      // non-positive
    CHECK_THROWS_AS(gen_low_rank_noise(10, 5, 9, std::vector<double>(9, 1.0), 0.0, 0), Error);  // r > min
}

TEST_CASE("gen_background_outliers plants orthogonal unit outliers") {
    const PlantedInstance inst = gen_background_outliers(60, 4, 16, 1, 3);
    REQUIRE(inst.matrix.rows() == 64);
    REQUIRE(inst.outlier_indices.size() == 4);
    CHECK(std::is_sorted(inst.outlier_indices.begin(), inst.outlier_indices.end()));

    const Vector residuals = projection_residuals(inst.matrix, inst.true_subspace);
    double max_background = 0.0;
    for (Index i = 0; i < inst.matrix.rows(); ++i) {
        const bool is_outlier =
            std::binary_search(inst.outlier_indices.begin(), inst.outlier_indices.end(), i);
        if (is_outlier) {
            CHECK(inst.matrix.row(i).norm() == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(residuals(i) == doctest::Approx(1.0).epsilon(1e-10));
        } else {
            max_background = std::max(max_background, residuals(i));
        }
    }
    CHECK(max_background < 1e-10);
}

TEST_CASE("gen_background_outliers with no outliers has zero residuals") {
    const PlantedInstance inst = gen_background_outliers(60, 0, 16, 1, 5);
    CHECK(inst.outlier_indices.empty());
    const Vector residuals = projection_residuals(inst.matrix, inst.true_subspace);
    CHECK(residuals.maxCoeff() < 1e-10);
}

TEST_CASE("retaining exactly the outliers zeroes the surrogate loss") {
    const PlantedInstance inst = gen_background_outliers(10, 2, 4, 2, 8);
    const double loss = surrogate_loss(inst.matrix, inst.true_subspace, inst.outlier_indices);
    CHECK(loss == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("gen_background_outliers needs room for the orthogonal directions") {
    try {
        gen_background_outliers(10, 4, 4, 1, 0);
        FAIL("expected DimensionTooSmall");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DimensionTooSmall);
    }
}

TEST_CASE("brute_force_best_subset returns zero loss for full retention") {
    const PlantedInstance inst = gen_low_rank_noise(6, 4, 2, {4.0, 2.0}, 0.3, 21);
    CompressionConfig cfg;
    cfg.rank = 1;
    cfg.budget = 6;
    const Subspace sub = build_subspace(inst.matrix, cfg);
    const SubsetSearchResult best = brute_force_best_subset(inst.matrix, sub, 6);
    CHECK(best.loss == 0.0);
    CHECK(best.indices == std::vector<Index>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("brute_force_best_subset agrees with select_top_k") {
    const PlantedInstance inst = gen_low_rank_noise(8, 5, 2, {5.0, 2.0}, 0.4, 13);
    CompressionConfig cfg;
    cfg.rank = 2;
    cfg.budget = 3;
    const Subspace sub = build_subspace(inst.matrix, cfg);
    const SubsetSearchResult best = brute_force_best_subset(inst.matrix, sub, 3);

    const Vector residuals = projection_residuals(inst.matrix, sub);
    const std::vector<Index> selected = select_top_k(residuals, 3);
    CHECK(best.indices == selected);
    CHECK(best.loss == surrogate_loss(inst.matrix, sub, selected));
}

TEST_CASE("brute_force_best_subset enforces the enumeration bound") {
    const Matrix x = Matrix::Random(50, 4);
    Subspace sub;
    sub.basis = Matrix::Identity(4, 1);
    sub.explained = Vector::Zero(1);
    try {
        brute_force_best_subset(x, sub, 25);
        FAIL("expected TooManySubsets");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::TooManySubsets);
    }
}
