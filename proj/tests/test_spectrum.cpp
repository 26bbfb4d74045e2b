#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lrcp/rng.hpp"
#include "lrcp/spectrum.hpp"
#include "lrcp/synth.hpp"

using namespace lrcp;

namespace {

SpectrumReport report_of(std::initializer_list<double> fractions) {
    SpectrumReport report;
    report.explained = Vector(static_cast<Index>(fractions.size()));
    Index i = 0;
    for (const double f : fractions) report.explained(i++) = f;
    report.total_energy = 1.0;
    return report;
}

}  // namespace

TEST_CASE("explained_variance_spectrum of a diagonal matrix") {
    Matrix x = Matrix::Zero(2, 2);
    x(0, 0) = 3.0;
    x(1, 1) = 4.0;
    const SpectrumReport report = explained_variance_spectrum(x, 2);
    CHECK(report.explained(0) == doctest::Approx(16.0 / 25.0).epsilon(1e-12));
    CHECK(report.explained(1) == doctest::Approx(9.0 / 25.0).epsilon(1e-12));
    CHECK(report.total_energy == doctest::Approx(25.0).epsilon(1e-12));
    CHECK(rank_at_variance(report, 60.0) == 1);
    CHECK(rank_at_variance(report, 90.0) == 2);
}

TEST_CASE("a rank-1 matrix concentrates all energy in one component") {
    Vector a(5), b(3);
    a << 1, 2, 3, 4, 5;
    b << -1, 0.5, 2;
    const Matrix x = a * b.transpose();
    const SpectrumReport report = explained_variance_spectrum(x, 3);
    CHECK(report.explained(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(report.explained(1) == 0.0);  // below the 1e-12 floor
    CHECK(rank_at_variance(report, 100.0) == 1);
}

TEST_CASE("planted rank-3 with light noise keeps 95% in three components") {
    const PlantedInstance inst = gen_low_rank_noise(256, 64, 3, {30.0, 20.0, 15.0}, 0.05, 17);
    const SpectrumReport report = explained_variance_spectrum(inst.matrix, 16);
    CHECK(report.explained.head(3).sum() >= 0.95);
    for (Index j = 1; j < report.explained.size(); ++j) {
        CHECK(report.explained(j) <= report.explained(j - 1) + 1e-15);
    }
}

TEST_CASE("the randomized path serves matrices beyond the exact threshold") {
    // flat planted spectrum: the first three components carry 83% of the
    // energy, so Rank@90 needs all four
    const PlantedInstance inst = gen_low_rank_noise(600, 600, 4, {50.0, 45.0, 40.0, 35.0}, 0.01, 23);
    const SpectrumReport report = explained_variance_spectrum(inst.matrix, 8, 9);
    CHECK(report.explained.size() == 8);
    CHECK(rank_at_variance(report, 90.0) == 4);
}

TEST_CASE("rank_at_variance on hand-built spectra") {
    CHECK(rank_at_variance(report_of({0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1}), 90.0) == 9);
    CHECK(rank_at_variance(report_of({0.96, 0.04}), 95.0) == 1);
    CHECK(rank_at_variance(report_of({0.5, 0.3, 0.15, 0.05}), 90.0) == 3);
}

TEST_CASE("rank_at_variance is monotone in v") {
    const SpectrumReport report = report_of({0.4, 0.3, 0.2, 0.05, 0.05});
    Index previous = 0;
    for (const double v : {10.0, 40.0, 70.0, 90.0, 99.0, 100.0}) {
        const Index rank = rank_at_variance(report, v);
        CHECK(rank >= previous);
        previous = rank;
    }
}

TEST_CASE("rank_at_variance validates and signals insufficient spectra") {
    const SpectrumReport report = report_of({0.5, 0.2});
    try {
        rank_at_variance(report, 90.0);
        FAIL("expected InsufficientSpectrum");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InsufficientSpectrum);
    }
    CHECK_THROWS_AS(rank_at_variance(report, 0.0), Error);
    CHECK_THROWS_AS(rank_at_variance(report, 101.0), Error);
}

TEST_CASE("explained_variance_spectrum validates the component count") {
    const Matrix x = Matrix::Random(6, 4);
    try {
        explained_variance_spectrum(x, 5);
        FAIL("expected InvalidComponentCount");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidComponentCount);
    }
    CHECK_THROWS_AS(explained_variance_spectrum(x, 0), Error);
}

TEST_CASE("stability under zero dropout is exactly stable") {
    const PlantedInstance inst = gen_low_rank_noise(64, 16, 3, {10.0, 8.0, 5.0}, 0.05, 31);
    const StabilityReport report = stability_random_dropout(inst.matrix, 3, 0.0, 5, 7);
    REQUIRE(report.similarities.size() == 5);
    for (const double s : report.similarities) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(report.mean_similarity == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("exactly rank-r data is stable under any spanning dropout") {
    const PlantedInstance inst = gen_low_rank_noise(40, 8, 2, {5.0, 3.0}, 0.0, 13);
    const StabilityReport report = stability_random_dropout(inst.matrix, 2, 0.5, 8, 3);
    for (const double s : report.similarities) CHECK(s >= 1.0 - 1e-8);
}

TEST_CASE("stability_random_dropout is reproducible and row-exchangeable") {
    const PlantedInstance inst = gen_low_rank_noise(60, 10, 2, {7.0, 4.0}, 0.0, 19);
    const StabilityReport a = stability_random_dropout(inst.matrix, 2, 0.4, 6, 11);
    const StabilityReport b = stability_random_dropout(inst.matrix, 2, 0.4, 6, 11);
    CHECK(a.similarities == b.similarities);

    // permute rows: on exactly low-rank data the mean similarity is unchanged
    Rng rng(3);
    Matrix permuted = inst.matrix;
    for (Index i = permuted.rows() - 1; i > 0; --i) {
        const auto j = static_cast<Index>(uniform_below(rng, static_cast<std::uint64_t>(i + 1)));
        permuted.row(i).swap(permuted.row(j));
    }
    const StabilityReport c = stability_random_dropout(permuted, 2, 0.4, 6, 11);
    CHECK(std::abs(c.mean_similarity - a.mean_similarity) < 1e-8);
}

TEST_CASE("stability_random_dropout rejects starving samples") {
    const Matrix x = Matrix::Random(20, 6);
    try {
        stability_random_dropout(x, 4, 0.9, 3, 0);  // 2 survivors <= rank 4
        FAIL("expected TooFewSurvivors");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::TooFewSurvivors);
    }
}

TEST_CASE("stability_under_pruning keeps full-set similarity at 1") {
    const PlantedInstance inst = gen_low_rank_noise(50, 12, 3, {9.0, 7.0, 5.0}, 0.0, 29);
    CompressionConfig cfg;
    cfg.rank = 3;
    cfg.seed = 5;
    const StabilityReport report = stability_under_pruning(inst.matrix, cfg, {50});
    REQUIRE(report.similarities.size() == 1);
    CHECK(report.similarities[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("noiseless data stays stable under importance pruning") {
    const PlantedInstance inst = gen_low_rank_noise(64, 16, 2, {8.0, 6.0}, 0.0, 37);
    CompressionConfig cfg;
    cfg.rank = 2;
    cfg.seed = 41;
    const StabilityReport report = stability_under_pruning(inst.matrix, cfg, {32, 16});
    REQUIRE(report.similarities.size() == 2);
    for (const double s : report.similarities) CHECK(s >= 1.0 - 1e-8);
    CHECK(report.mode == StabilityMode::ImportancePruned);
}

TEST_CASE("background-plus-outlier data stays stable through pruning stages") {
    const PlantedInstance inst = gen_background_outliers(60, 4, 16, 1, 43);
    CompressionConfig cfg;
    cfg.rank = 1;
    cfg.seed = 2;
    const StabilityReport report = stability_under_pruning(inst.matrix, cfg, {32, 16});
    for (const double s : report.similarities) CHECK(s >= 0.9);
}

TEST_CASE("stability_under_pruning validates keep schedules") {
    const Matrix x = Matrix::Random(30, 8);
    CompressionConfig cfg;
    cfg.rank = 3;
    try {
        stability_under_pruning(x, cfg, {10, 3});  // 3 <= rank
        FAIL("expected KeepBelowRank");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::KeepBelowRank);
    }
    CHECK_THROWS_AS(stability_under_pruning(x, cfg, {10, 12}), Error);  // not decreasing
    CHECK_THROWS_AS(stability_under_pruning(x, cfg, {40}), Error);      // above N
}
