#include "lrcp/compress.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "lrcp/kmeans.hpp"
#include "lrcp/rng.hpp"

namespace lrcp {

namespace {

void check_retained(const std::vector<Index>& retained, Index n) {
    if (retained.empty()) {
        throw Error(ErrorCode::InvalidArgument, "retained index set must be non-empty");
    }
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    for (const Index i : retained) {
        if (i < 0 || i >= n) {
            throw Error(ErrorCode::InvalidArgument,
                        "retained index " + std::to_string(i) + " out of range [0, " + std::to_string(n) + ")");
        }
        if (seen[static_cast<std::size_t>(i)]) {
            throw Error(ErrorCode::InvalidArgument, "retained index " + std::to_string(i) + " appears twice");
        }
        seen[static_cast<std::size_t>(i)] = 1;
    }
}

// Energy fraction captured by each basis direction, used for the non-PCA
// extraction strategies; columns are reordered so explained is
// non-increasing.
void fill_explained(Subspace& subspace, const Eigen::Ref<const Matrix>& estimation_matrix) {
    const double total = estimation_matrix.squaredNorm();
    const Index r = subspace.rank();
    Vector energy = (estimation_matrix * subspace.basis).colwise().squaredNorm();
    std::vector<Index> order(static_cast<std::size_t>(r));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return energy(a) > energy(b); });
    Matrix sorted_basis(subspace.ambient_dim(), r);
    Vector sorted_energy(r);
    for (Index j = 0; j < r; ++j) {
        sorted_basis.col(j) = subspace.basis.col(order[static_cast<std::size_t>(j)]);
        sorted_energy(j) = energy(order[static_cast<std::size_t>(j)]);
    }
    subspace.basis = std::move(sorted_basis);
    subspace.explained = total > 0.0 ? Vector(sorted_energy / total) : Vector(Vector::Zero(r));
}

// Column-sweeping row gather: sequential reads on column-major storage.
Matrix rows_of(const Eigen::Ref<const Matrix>& x, const std::vector<Index>& indices) {
    const auto count = static_cast<Index>(indices.size());
    Matrix out(count, x.cols());
    for (Index j = 0; j < x.cols(); ++j) {
        const auto column = x.col(j);
        for (Index i = 0; i < count; ++i) out(i, j) = column(indices[static_cast<std::size_t>(i)]);
    }
    return out;
}

}  // namespace

Subspace build_subspace(const Eigen::Ref<const Matrix>& x, const CompressionConfig& cfg) {
    check_token_matrix(x);
    const Index n = x.rows();
    const Index d = x.cols();
    const Index limit = std::min(n, d);
    if (cfg.rank < 1 || cfg.rank >= limit) {
        throw Error(ErrorCode::InvalidRank, "rank must satisfy 1 <= r < min(N, D) = " + std::to_string(limit) +
                                                ", got " + std::to_string(cfg.rank));
    }

    const bool center = cfg.centering == Centering::MeanCenter;
    Vector mean;
    Matrix centered;
    if (center) {
        mean = x.colwise().mean();
        centered = x.rowwise() - mean.transpose();
    }
    const Eigen::Ref<const Matrix> est = center ? Eigen::Ref<const Matrix>(centered) : x;

    Subspace subspace;
    switch (cfg.subspace_method) {
        case SubspaceMethod::PCA: {
            subspace = randomized_truncated_svd(est, cfg.rank, cfg.seed);
            break;
        }
        case SubspaceMethod::RandomDirections: {
            Rng rng(cfg.seed);
            subspace.basis = qr_orthonormalize(gaussian_matrix(d, cfg.rank, rng));
            fill_explained(subspace, est);
            break;
        }
        case SubspaceMethod::CoordinateVariance: {
            const Vector col_mean = est.colwise().mean();
            const Vector variance =
                (est.rowwise() - col_mean.transpose()).colwise().squaredNorm() / static_cast<double>(n);
            std::vector<Index> axes(static_cast<std::size_t>(d));
            std::iota(axes.begin(), axes.end(), Index{0});
            std::stable_sort(axes.begin(), axes.end(), [&](Index a, Index b) { return variance(a) > variance(b); });
            subspace.basis = Matrix::Zero(d, cfg.rank);
            for (Index j = 0; j < cfg.rank; ++j) subspace.basis(axes[static_cast<std::size_t>(j)], j) = 1.0;
            fill_explained(subspace, est);
            break;
        }
        case SubspaceMethod::ClusterCenters: {
            const Matrix centers = kmeans_centers(est, cfg.rank, cfg.seed);
            subspace.basis = qr_orthonormalize(centers.transpose());
            fill_explained(subspace, est);
            break;
        }
    }
    if (center) subspace.mean = std::move(mean);
    return subspace;
}

Vector projection_residuals(const Eigen::Ref<const Matrix>& x, const Subspace& subspace) {
    if (x.cols() != subspace.ambient_dim()) {
        throw Error(ErrorCode::DimensionMismatch, "token dimension " + std::to_string(x.cols()) +
                                                      " does not match subspace ambient dimension " +
                                                      std::to_string(subspace.ambient_dim()));
    }
    Vector scores(x.rows());
    if (subspace.centered()) {
        const Matrix xc = x.rowwise() - subspace.mean.transpose();
        scores = xc.rowwise().squaredNorm() - (xc * subspace.basis).rowwise().squaredNorm();
    } else {
        scores = x.rowwise().squaredNorm() - (x * subspace.basis).rowwise().squaredNorm();
    }
    return scores.cwiseMax(0.0);
}

Vector selection_scores(const Eigen::Ref<const Matrix>& x, const Subspace& subspace,
                        const CompressionConfig& cfg) {
    if (cfg.scoring != Scoring::ProjectionNormDescending) {
        return projection_residuals(x, subspace);
    }
    if (x.cols() != subspace.ambient_dim()) {
        throw Error(ErrorCode::DimensionMismatch, "token dimension " + std::to_string(x.cols()) +
                                                      " does not match subspace ambient dimension " +
                                                      std::to_string(subspace.ambient_dim()));
    }
    if (subspace.centered()) {
        const Matrix xc = x.rowwise() - subspace.mean.transpose();
        return (xc * subspace.basis).rowwise().squaredNorm();
    }
    return (x * subspace.basis).rowwise().squaredNorm();
}

std::vector<Index> select_top_k(const Eigen::Ref<const Vector>& scores, Index k, Scoring order) {
    const Index n = scores.size();
    if (n < 1) {
        throw Error(ErrorCode::EmptyInput, "score list is empty");
    }
    if (k < 1 || k > n) {
        throw Error(ErrorCode::BudgetExceedsTokens,
                    "budget must satisfy 1 <= K <= N = " + std::to_string(n) + ", got " + std::to_string(k));
    }
    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index{0});
    const bool ascending = order == Scoring::ResidualAscending;
    // stable sort: ties keep original order, so the lower index wins
    std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) {
        return ascending ? scores(a) < scores(b) : scores(a) > scores(b);
    });
    idx.resize(static_cast<std::size_t>(k));
    std::sort(idx.begin(), idx.end());
    return idx;
}

static MergeOutput merge_with_norms(const Eigen::Ref<const Matrix>& x, const std::vector<Index>& sorted,
                                    const Vector& row_norms) {
    const Index n = x.rows();
    const Index k = static_cast<Index>(sorted.size());

    MergeOutput out;
    out.output = rows_of(x, sorted);
    if (k == n) return out;

    std::vector<char> is_retained(static_cast<std::size_t>(n), 0);
    for (const Index i : sorted) is_retained[static_cast<std::size_t>(i)] = 1;
    std::vector<Index> discarded;
    discarded.reserve(static_cast<std::size_t>(n - k));
    for (Index i = 0; i < n; ++i) {
        if (!is_retained[static_cast<std::size_t>(i)]) discarded.push_back(i);
    }

    const Matrix original_retained = out.output;  // pre-merge features drive the assignment
    Vector retained_norms(k);
    for (Index j = 0; j < k; ++j) retained_norms(j) = row_norms(sorted[static_cast<std::size_t>(j)]);
    // one GEMM for all n rows; only the discarded rows of it are consulted
    const Matrix dots = x * original_retained.transpose();

    // slot[i]: position of row i in the output, for retained rows; for
    // discarded rows, the slot it merges into
    std::vector<Index> slot(static_cast<std::size_t>(n), -1);
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (const Index i : discarded) {
        Index best = 0;
        double best_cos = -std::numeric_limits<double>::infinity();
        for (Index j = 0; j < k; ++j) {
            const double denom = row_norms(i) * retained_norms(j);
            const double cosine = denom > 0.0 ? dots(i, j) / denom : 0.0;
            if (cosine > best_cos) {
                best_cos = cosine;
                best = j;
            }
        }
        slot[static_cast<std::size_t>(i)] = best;
        out.assignments[i] = sorted[static_cast<std::size_t>(best)];
        ++counts[static_cast<std::size_t>(best)];
    }

    // column sweeps keep the accumulation reads sequential
    for (Index j = 0; j < x.cols(); ++j) {
        const auto column = x.col(j);
        auto out_column = out.output.col(j);
        for (const Index i : discarded) out_column(slot[static_cast<std::size_t>(i)]) += column(i);
        for (Index r = 0; r < k; ++r) out_column(r) /= static_cast<double>(1 + counts[static_cast<std::size_t>(r)]);
    }
    return out;
}

MergeOutput merge_tokens(const Eigen::Ref<const Matrix>& x, const std::vector<Index>& retained) {
    check_retained(retained, x.rows());
    std::vector<Index> sorted = retained;
    std::sort(sorted.begin(), sorted.end());
    return merge_with_norms(x, sorted, x.rowwise().norm());
}

double surrogate_loss(const Eigen::Ref<const Matrix>& x, const Subspace& subspace,
                      const std::vector<Index>& retained) {
    const Index n = x.rows();
    check_retained(retained, n);
    const Vector residuals = projection_residuals(x, subspace);
    std::vector<char> keep(static_cast<std::size_t>(n), 0);
    for (const Index i : retained) keep[static_cast<std::size_t>(i)] = 1;
    double loss = 0.0;
    for (Index i = 0; i < n; ++i) {
        if (!keep[static_cast<std::size_t>(i)]) loss += residuals(i);
    }
    return loss;
}

CompressionResult compress(const Eigen::Ref<const Matrix>& x, const CompressionConfig& cfg) {
    check_token_matrix(x);
    if (cfg.budget < 1 || cfg.budget > x.rows()) {
        throw Error(ErrorCode::BudgetExceedsTokens, "budget must satisfy 1 <= K <= N = " +
                                                        std::to_string(x.rows()) + ", got " +
                                                        std::to_string(cfg.budget));
    }

    CompressionResult result;
    Vector criterion;
    Vector precomputed_norms;  // raw row norms, reusable by the merge
    if (cfg.subspace_method == SubspaceMethod::PCA) {
        // fast path: residuals and norms come out of the sketch products, so
        // compression stays at a handful of passes over x
        const Index limit = std::min(x.rows(), x.cols());
        if (cfg.rank < 1 || cfg.rank >= limit) {
            throw Error(ErrorCode::InvalidRank, "rank must satisfy 1 <= r < min(N, D) = " + std::to_string(limit) +
                                                    ", got " + std::to_string(cfg.rank));
        }
        const bool center = cfg.centering == Centering::MeanCenter;
        Matrix centered;
        if (center) centered = x.rowwise() - Vector(x.colwise().mean()).transpose();
        const Eigen::Ref<const Matrix> est = center ? Eigen::Ref<const Matrix>(centered) : x;

        const RandomizedSvdDetail detail = randomized_truncated_svd_detail(est, cfg.rank, cfg.seed);
        const Vector captured = detail.projected.rowwise().squaredNorm();
        result.scores = (detail.row_squared_norms - captured).cwiseMax(0.0);
        criterion = cfg.scoring == Scoring::ProjectionNormDescending ? captured : result.scores;
        if (!center) precomputed_norms = detail.row_squared_norms.cwiseSqrt();
    } else {
        const Subspace subspace = build_subspace(x, cfg);
        result.scores = projection_residuals(x, subspace);
        criterion = cfg.scoring == Scoring::ProjectionNormDescending ? selection_scores(x, subspace, cfg)
                                                                     : result.scores;
    }
    result.retained_indices = select_top_k(criterion, cfg.budget, cfg.scoring);

    if (cfg.merge) {
        MergeOutput merged = precomputed_norms.size() > 0
                                 ? merge_with_norms(x, result.retained_indices, precomputed_norms)
                                 : merge_tokens(x, result.retained_indices);
        result.output = std::move(merged.output);
        result.assignments = std::move(merged.assignments);
    } else {
        result.output = rows_of(x, result.retained_indices);
    }

    std::vector<char> keep(static_cast<std::size_t>(x.rows()), 0);
    for (const Index i : result.retained_indices) keep[static_cast<std::size_t>(i)] = 1;
    double loss = 0.0;
    for (Index i = 0; i < x.rows(); ++i) {
        if (!keep[static_cast<std::size_t>(i)]) loss += result.scores(i);
    }
    result.surrogate_loss = loss;
    return result;
}

StagedPlan make_staged_plan(Index n_tokens, const std::vector<double>& stage_ratios, Index llm_layers,
                            Index compress_layer) {
    if (n_tokens < 1) {
        throw Error(ErrorCode::InvalidArgument, "token count must be positive, got " + std::to_string(n_tokens));
    }
    if (stage_ratios.empty()) {
        throw Error(ErrorCode::InvalidRatio, "at least one stage ratio is required");
    }
    if (llm_layers < 1 || compress_layer < 0 || compress_layer >= llm_layers) {
        throw Error(ErrorCode::InvalidArgument,
                    "compression layer must satisfy 0 <= layer < L = " + std::to_string(llm_layers) + ", got " +
                        std::to_string(compress_layer));
    }

    StagedPlan plan;
    plan.total_tokens = n_tokens;
    plan.llm_layers = llm_layers;
    plan.compress_layer = compress_layer;

    double running = 1.0;
    for (std::size_t t = 0; t < stage_ratios.size(); ++t) {
        const double ratio = stage_ratios[t];
        if (!(ratio > 0.0) || ratio > 1.0) {
            throw Error(ErrorCode::InvalidRatio,
                        "stage " + std::to_string(t + 1) + " ratio must lie in (0, 1], got " + std::to_string(ratio));
        }
        running *= ratio;
        // floor of the un-floored running product; the epsilon absorbs the
        // representation error of ratios like 1/6
        const auto keep = static_cast<Index>(std::floor(running * static_cast<double>(n_tokens) + 1e-9));
        if (keep < 1) {
            throw Error(ErrorCode::ZeroKeep, "stage " + std::to_string(t + 1) + " keep count reached 0 (ratio " +
                                                 std::to_string(ratio) + " of " + std::to_string(n_tokens) +
                                                 " tokens)");
        }
        plan.stages.push_back(PlanStage{"stage" + std::to_string(t + 1), ratio, keep});
    }
    plan.final_keep = plan.stages.back().absolute_keep;
    plan.final_retain = running;
    if (stage_ratios.size() == 1) {
        plan.average_retention = stage_ratios[0];
    } else {
        plan.average_retention = (stage_ratios[0] * static_cast<double>(compress_layer) +
                                  running * static_cast<double>(llm_layers - compress_layer)) /
                                 static_cast<double>(llm_layers);
    }
    return plan;
}

std::vector<CompressionResult> compress_staged(const std::vector<Matrix>& stage_inputs, const StagedPlan& plan,
                                               const CompressionConfig& cfg) {
    if (plan.stages.empty()) {
        throw Error(ErrorCode::InvalidArgument, "plan has no stages");
    }
    if (stage_inputs.empty()) {
        throw Error(ErrorCode::EmptyInput, "no stage inputs supplied");
    }
    const bool replay = stage_inputs.size() > 1;
    if (replay && stage_inputs.size() != plan.stages.size()) {
        throw Error(ErrorCode::StageShapeMismatch,
                    "replay mode needs one input per stage: got " + std::to_string(stage_inputs.size()) +
                        " inputs for " + std::to_string(plan.stages.size()) + " stages");
    }
    if (stage_inputs[0].rows() != plan.total_tokens) {
        throw Error(ErrorCode::StageShapeMismatch, "stage 1 input has " + std::to_string(stage_inputs[0].rows()) +
                                                       " rows, plan expects " + std::to_string(plan.total_tokens));
    }

    std::vector<CompressionResult> results;
    results.reserve(plan.stages.size());
    Matrix current = stage_inputs[0];
    for (std::size_t t = 0; t < plan.stages.size(); ++t) {
        if (t > 0) {
            if (replay) {
                const Matrix& supplied = stage_inputs[t];
                const Index expected_rows = plan.stages[t - 1].absolute_keep;
                if (supplied.rows() != expected_rows || supplied.cols() != current.cols()) {
                    throw Error(ErrorCode::StageShapeMismatch,
                                "stage " + std::to_string(t + 1) + " input is " + std::to_string(supplied.rows()) +
                                    "x" + std::to_string(supplied.cols()) + ", expected " +
                                    std::to_string(expected_rows) + "x" + std::to_string(current.cols()));
                }
                current = supplied;
            } else {
                current = results.back().output;
            }
        }
        CompressionConfig stage_cfg = cfg;
        stage_cfg.budget = plan.stages[t].absolute_keep;
        results.push_back(compress(current, stage_cfg));
    }
    return results;
}

}  // namespace lrcp
