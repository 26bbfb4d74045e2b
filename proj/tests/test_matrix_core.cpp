#include <doctest.h>

#include <cmath>

#include "lrcp/matrix_core.hpp"
#include "lrcp/rng.hpp"

using namespace lrcp;

namespace {

Matrix planted(Index n, Index d, const Vector& spectrum, std::uint64_t seed, double sigma = 0.0) {
    Rng rng_a(derive_seed(seed, 0));
    Rng rng_b(derive_seed(seed, 1));
    const Index r = spectrum.size();
    const Matrix a = qr_orthonormalize(gaussian_matrix(n, r, rng_a));
    const Matrix b = qr_orthonormalize(gaussian_matrix(d, r, rng_b));
    Matrix x = a * spectrum.asDiagonal() * b.transpose();
    if (sigma > 0.0) {
        Rng rng_noise(derive_seed(seed, 2));
        x += sigma * gaussian_matrix(n, d, rng_noise);
    }
    return x;
}

Subspace axes_subspace(Index dim, std::initializer_list<Index> axes) {
    Subspace s;
    s.basis = Matrix::Zero(dim, static_cast<Index>(axes.size()));
    Index j = 0;
    for (const Index axis : axes) s.basis(axis, j++) = 1.0;
    s.explained = Vector::Zero(static_cast<Index>(axes.size()));
    return s;
}

}  // namespace

TEST_CASE("check_token_matrix rejects empty and non-finite input") {
    CHECK_THROWS_AS(check_token_matrix(Matrix(0, 3)), Error);
    Matrix bad = Matrix::Ones(2, 2);
    bad(1, 0) = std::nan("");
    try {
        check_token_matrix(bad);
        FAIL("expected NonFiniteValue");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonFiniteValue);
        CHECK(std::string(e.what()).find("row 1") != std::string::npos);
    }
}

TEST_CASE("qr_orthonormalize keeps already-orthonormal columns") {
    Matrix m = Matrix::Zero(4, 2);
    m(0, 0) = 1.0;
    m(1, 1) = 1.0;
    const Matrix q = qr_orthonormalize(m);
    CHECK((q - m).cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("qr_orthonormalize normalizes axis-aligned scaled columns") {
    Matrix m(3, 2);
    m << 2, 0, 0, 0, 0, 3;
    const Matrix q = qr_orthonormalize(m);
    Matrix expected(3, 2);
    expected << 1, 0, 0, 0, 0, 1;
    CHECK((q - expected).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("qr_orthonormalize satisfies the Gram identity on random input") {
    Rng rng(41);
    const Matrix m = gaussian_matrix(6, 3, rng);
    const Matrix q = qr_orthonormalize(m);
    const Matrix gram = q.transpose() * q;
    CHECK((gram - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);
    // span check: every input column reconstructs from the basis
    const Matrix reproj = q * (q.transpose() * m);
    CHECK((reproj - m).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("qr_orthonormalize detects rank deficiency") {
    Matrix m(4, 2);
    m.col(0) = Vector::LinSpaced(4, 1.0, 4.0);
    m.col(1) = 2.0 * m.col(0);
    try {
        qr_orthonormalize(m);
        FAIL("expected RankDeficient");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::RankDeficient);
    }
    CHECK_THROWS_AS(qr_orthonormalize(Matrix::Ones(2, 3)), Error);  // wide
}

TEST_CASE("exact_svd recovers a diagonal matrix") {
    Matrix m = Matrix::Zero(3, 3);
    m(0, 0) = 3.0;
    m(1, 1) = 2.0;
    m(2, 2) = 1.0;
    const SvdResult svd = exact_svd(m);
    CHECK(svd.singular_values(0) == doctest::Approx(3.0));
    CHECK(svd.singular_values(1) == doctest::Approx(2.0));
    CHECK(svd.singular_values(2) == doctest::Approx(1.0));
    CHECK((svd.v - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("exact_svd of a rank-1 outer product has one nonzero value") {
    Vector a(4), b(3);
    a << 1, -2, 3, 0.5;
    b << 2, 1, -1;
    const Matrix m = a * b.transpose();
    const SvdResult svd = exact_svd(m);
    CHECK(svd.singular_values(0) == doctest::Approx(a.norm() * b.norm()).epsilon(1e-12));
    for (Index j = 1; j < svd.singular_values.size(); ++j) {
        CHECK(svd.singular_values(j) < 1e-12 * svd.singular_values(0));
    }
}

TEST_CASE("exact_svd reconstructs a random matrix") {
    Rng rng(7);
    const Matrix m = gaussian_matrix(8, 5, rng);
    const SvdResult svd = exact_svd(m);
    const Matrix rebuilt = svd.u * svd.singular_values.asDiagonal() * svd.v.transpose();
    CHECK((rebuilt - m).norm() / m.norm() < 1e-10);
    for (Index j = 1; j < svd.singular_values.size(); ++j) {
        CHECK(svd.singular_values(j) <= svd.singular_values(j - 1));
        CHECK(svd.singular_values(j) >= 0.0);
    }
}

TEST_CASE("exact_svd respects the exact-path threshold") {
    const Matrix m = Matrix::Identity(600, 600);
    try {
        exact_svd(m);
        FAIL("expected MatrixTooLarge");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MatrixTooLarge);
    }
    CHECK_NOTHROW(exact_svd(m, 600));
}

TEST_CASE("randomized_truncated_svd matches exact on a noiseless planted rank") {
    Vector spectrum(2);
    spectrum << 4.0, 3.0;
    const Matrix x = planted(32, 10, spectrum, 3);
    const Subspace approx = randomized_truncated_svd(x, 2, 99);

    const SvdResult exact = exact_svd(x);
    Subspace truth;
    truth.basis = exact.v.leftCols(2);
    truth.explained = Vector::Zero(2);
    CHECK(principal_angle_similarity(approx, truth) == doctest::Approx(1.0).epsilon(1e-8));
    // explained fractions over the full energy: 16/25 and 9/25
    CHECK(approx.explained(0) == doctest::Approx(16.0 / 25.0).epsilon(1e-8));
    CHECK(approx.explained(1) == doctest::Approx(9.0 / 25.0).epsilon(1e-8));
}

TEST_CASE("randomized_truncated_svd tracks exact_svd on a noisy planted instance") {
    Vector spectrum(4);
    spectrum << 100.0, 70.0, 40.0, 25.0;
    const Matrix x = planted(1024, 256, spectrum, 11, 0.01);
    const Subspace approx = randomized_truncated_svd(x, 4, 5);
    const SvdResult exact = exact_svd(x);
    Subspace truth;
    truth.basis = exact.v.leftCols(4);
    truth.explained = Vector::Zero(4);
    CHECK(principal_angle_similarity(approx, truth) >= 0.999);
}

TEST_CASE("randomized_truncated_svd rejects out-of-range ranks") {
    const Matrix x = Matrix::Random(6, 4);
    try {
        randomized_truncated_svd(x, 4, 0);  // r == min(N, D)
        FAIL("expected InvalidRank");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidRank);
    }
    CHECK_THROWS_AS(randomized_truncated_svd(x, 0, 0), Error);
}

TEST_CASE("randomized_truncated_svd is bit-reproducible per seed") {
    Rng rng(5);
    const Matrix x = gaussian_matrix(40, 12, rng);
    const Subspace first = randomized_truncated_svd(x, 3, 1234);
    const Subspace second = randomized_truncated_svd(x, 3, 1234);
    CHECK((first.basis - second.basis).cwiseAbs().maxCoeff() == 0.0);
    CHECK((first.explained - second.explained).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("basis orthonormality holds for every factorization path") {
    Rng rng(8);
    const Matrix x = gaussian_matrix(30, 9, rng);
    const Subspace sub = randomized_truncated_svd(x, 4, 2);
    CHECK((sub.basis.transpose() * sub.basis - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() <= 1e-8);
    const SvdResult svd = exact_svd(x);
    CHECK((svd.v.transpose() * svd.v - Matrix::Identity(9, 9)).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(sub.explained.sum() <= 1.0 + 1e-8);
}

TEST_CASE("principal_angle_similarity of a subspace with itself is 1") {
    Rng rng(2);
    const Matrix q = qr_orthonormalize(gaussian_matrix(7, 3, rng));
    Subspace s;
    s.basis = q;
    s.explained = Vector::Zero(3);
    CHECK(principal_angle_similarity(s, s) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("principal_angle_similarity of orthogonal planes is 0") {
    const Subspace a = axes_subspace(4, {0, 1});
    const Subspace b = axes_subspace(4, {2, 3});
    CHECK(principal_angle_similarity(a, b) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("principal_angle_similarity reports a single planted angle") {
    const double theta = M_PI / 6.0;
    Subspace a = axes_subspace(3, {0});
    Subspace b = axes_subspace(3, {0});
    b.basis(0, 0) = std::cos(theta);
    b.basis(1, 0) = std::sin(theta);
    CHECK(principal_angle_similarity(a, b) == doctest::Approx(std::cos(theta)).epsilon(1e-12));
    CHECK(principal_angle_similarity(b, a) == doctest::Approx(std::cos(theta)).epsilon(1e-12));
}

TEST_CASE("principal_angle_similarity is invariant to basis rotation") {
    Rng rng(17);
    Subspace a, b;
    a.basis = qr_orthonormalize(gaussian_matrix(9, 3, rng));
    b.basis = qr_orthonormalize(gaussian_matrix(9, 3, rng));
    a.explained = b.explained = Vector::Zero(3);
    const double base = principal_angle_similarity(a, b);

    const Matrix rotation = qr_orthonormalize(gaussian_matrix(3, 3, rng));
    Subspace b_rotated = b;
    b_rotated.basis = b.basis * rotation;
    CHECK(std::abs(principal_angle_similarity(a, b_rotated) - base) < 1e-10);
}

TEST_CASE("principal-angle aggregate variants are ordered") {
    const double theta = 1.1;
    Subspace a = axes_subspace(4, {0, 1});
    Subspace b = axes_subspace(4, {0, 1});
    b.basis(1, 1) = std::cos(theta);
    b.basis(2, 1) = std::sin(theta);
    const double mean = principal_angle_similarity(a, b, AngleAggregate::Mean);
    const double lowest = principal_angle_similarity(a, b, AngleAggregate::Min);
    const double product = principal_angle_similarity(a, b, AngleAggregate::Product);
    CHECK(lowest == doctest::Approx(std::cos(theta)).epsilon(1e-12));
    CHECK(product <= lowest + 1e-12);
    CHECK(lowest <= mean + 1e-12);
}

TEST_CASE("principal_angle_similarity validates shapes") {
    const Subspace a = axes_subspace(4, {0, 1});
    const Subspace narrow = axes_subspace(4, {0});
    const Subspace other_dim = axes_subspace(5, {0, 1});
    try {
        principal_angle_similarity(a, narrow);
        FAIL("expected RankMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::RankMismatch);
    }
    try {
        principal_angle_similarity(a, other_dim);
        FAIL("expected DimensionMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DimensionMismatch);
    }
}
