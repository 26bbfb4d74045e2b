#include "lrcp/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lrcp/rng.hpp"

namespace lrcp {

namespace {

constexpr double kZeroFraction = 1e-12;   // spectrum entries below this are noise floor
constexpr double kCumulativeTol = 1e-9;   // absorbs rounding in cumulative sums

void finalize(StabilityReport& report) {
    double total = 0.0;
    double lowest = 1.0;
    for (const double s : report.similarities) {
        total += s;
        lowest = std::min(lowest, s);
    }
    report.mean_similarity = report.similarities.empty() ? 0.0 : total / static_cast<double>(report.similarities.size());
    report.min_similarity = report.similarities.empty() ? 0.0 : lowest;
}

}  // namespace

SpectrumReport explained_variance_spectrum(const Eigen::Ref<const Matrix>& x, Index max_components,
                                           std::uint64_t seed, Index exact_dim_limit) {
    check_token_matrix(x);
    const Index limit = std::min(x.rows(), x.cols());
    if (max_components < 1 || max_components > limit) {
        throw Error(ErrorCode::InvalidComponentCount,
                    "component count must satisfy 1 <= c <= min(N, D) = " + std::to_string(limit) + ", got " +
                        std::to_string(max_components));
    }

    SpectrumReport report;
    report.total_energy = x.squaredNorm();

    Vector fractions;
    if (limit <= exact_dim_limit) {
        const SvdResult svd = exact_svd(x, exact_dim_limit);
        if (report.total_energy > 0.0) {
            fractions = svd.singular_values.head(max_components).array().square() / report.total_energy;
        } else {
            fractions = Vector::Zero(max_components);
        }
    } else {
        if (max_components >= limit) {
            throw Error(ErrorCode::InvalidComponentCount,
                        "the randomized path needs c < min(N, D); request fewer components");
        }
        const Subspace subspace = randomized_truncated_svd(x, max_components, seed);
        fractions = subspace.explained;
    }
    report.explained = (fractions.array() < kZeroFraction).select(0.0, fractions);
    return report;
}

Index rank_at_variance(const SpectrumReport& spectrum, double v) {
    if (!(v > 0.0) || v > 100.0) {
        throw Error(ErrorCode::InvalidPercentage, "v must lie in (0, 100], got " + std::to_string(v));
    }
    const double target = v / 100.0;
    double cumulative = 0.0;
    for (Index d = 0; d < spectrum.explained.size(); ++d) {
        cumulative += spectrum.explained(d);
        if (cumulative + kCumulativeTol >= target) return d + 1;
    }
    throw Error(ErrorCode::InsufficientSpectrum,
                "cumulative explained variance reaches only " + std::to_string(cumulative * 100.0) + "% after " +
                    std::to_string(spectrum.explained.size()) + " components; recompute with more components");
}

StabilityReport stability_random_dropout(const Eigen::Ref<const Matrix>& x, Index rank, double drop_ratio,
                                         Index trials, std::uint64_t seed) {
    check_token_matrix(x);
    if (!(drop_ratio >= 0.0) || drop_ratio >= 1.0) {
        throw Error(ErrorCode::InvalidRatio, "drop ratio must lie in [0, 1), got " + std::to_string(drop_ratio));
    }
    if (trials < 1) {
        throw Error(ErrorCode::InvalidArgument, "trial count must be positive");
    }
    const Index n = x.rows();
    const auto survivors = static_cast<Index>(std::floor((1.0 - drop_ratio) * static_cast<double>(n) + 1e-9));
    if (survivors <= rank) {
        throw Error(ErrorCode::TooFewSurvivors, "dropout leaves " + std::to_string(survivors) +
                                                    " rows, need more than rank = " + std::to_string(rank));
    }

    // The estimation procedure (and its sketch seed) is held fixed across the
    // experiment; only the row sample varies per trial.
    const std::uint64_t svd_seed = derive_seed(seed, 0);
    const Subspace reference = randomized_truncated_svd(x, rank, svd_seed);

    StabilityReport report;
    report.drop_ratio = drop_ratio;
    report.trials = trials;
    report.mode = StabilityMode::RandomDropout;
    report.similarities.reserve(static_cast<std::size_t>(trials));
    for (Index t = 0; t < trials; ++t) {
        Rng trial_rng(derive_seed(seed, 1 + static_cast<std::uint64_t>(t)));
        const std::vector<Index> rows = sample_without_replacement(n, survivors, trial_rng);
        Matrix sample(survivors, x.cols());
        for (Index i = 0; i < survivors; ++i) sample.row(i) = x.row(rows[static_cast<std::size_t>(i)]);
        const Subspace estimate = randomized_truncated_svd(sample, rank, svd_seed);
        report.similarities.push_back(principal_angle_similarity(reference, estimate));
    }
    finalize(report);
    return report;
}

StabilityReport stability_under_pruning(const Eigen::Ref<const Matrix>& x, const CompressionConfig& cfg,
                                        const std::vector<Index>& stage_keeps) {
    check_token_matrix(x);
    if (stage_keeps.empty()) {
        throw Error(ErrorCode::InvalidArgument, "at least one stage keep count is required");
    }
    const Index n = x.rows();
    Index previous = n + 1;
    for (const Index keep : stage_keeps) {
        if (keep <= cfg.rank) {
            throw Error(ErrorCode::KeepBelowRank, "stage keep " + std::to_string(keep) +
                                                      " must exceed the subspace rank " + std::to_string(cfg.rank));
        }
        if (keep > n) {
            throw Error(ErrorCode::BudgetExceedsTokens,
                        "stage keep " + std::to_string(keep) + " exceeds token count " + std::to_string(n));
        }
        if (keep >= previous && previous <= n) {
            throw Error(ErrorCode::InvalidArgument, "stage keeps must be strictly decreasing");
        }
        previous = keep;
    }

    const Subspace reference = build_subspace(x, cfg);

    StabilityReport report;
    report.trials = static_cast<Index>(stage_keeps.size());
    report.mode = StabilityMode::ImportancePruned;
    report.drop_ratio = 1.0 - static_cast<double>(stage_keeps.back()) / static_cast<double>(n);

    Matrix current = x;
    Subspace current_subspace = reference;
    for (const Index keep : stage_keeps) {
        const Vector scores = selection_scores(current, current_subspace, cfg);
        const std::vector<Index> retained = select_top_k(scores, keep, cfg.scoring);
        Matrix next(keep, x.cols());
        for (Index i = 0; i < keep; ++i) next.row(i) = current.row(retained[static_cast<std::size_t>(i)]);
        current = std::move(next);
        current_subspace = build_subspace(current, cfg);
        report.similarities.push_back(principal_angle_similarity(reference, current_subspace));
    }
    finalize(report);
    return report;
}

}  // namespace lrcp
