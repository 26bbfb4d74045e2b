#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lrcp/matrix_core.hpp"

namespace lrcp {

// Token scoring rule. ResidualDescending is the main criterion: retain the
// tokens worst explained by the dominant subspace. ProjectionNormDescending
// retains the largest in-subspace energy instead, ResidualAscending retains
// the smallest residuals; both are ablation variants.
enum class Scoring { ResidualDescending, ProjectionNormDescending, ResidualAscending };

enum class Centering { None, MeanCenter };

enum class SubspaceMethod { PCA, RandomDirections, CoordinateVariance, ClusterCenters };

struct CompressionConfig {
    Index rank = 4;
    Index budget = 0;
    Scoring scoring = Scoring::ResidualDescending;
    bool merge = true;
    Centering centering = Centering::None;
    SubspaceMethod subspace_method = SubspaceMethod::PCA;
    std::uint64_t seed = 0;
};

// scores are always the projection residuals s_i (the surrogate per-token
// loss), even when the selection criterion was a scoring variant, so
// surrogate_loss == sum of scores over discarded indices in every mode.
struct CompressionResult {
    std::vector<Index> retained_indices;  // ascending original positions
    Vector scores;                        // length N, s_i >= 0
    Matrix output;                        // K x D merged (or copied) tokens
    double surrogate_loss = 0.0;
    std::map<Index, Index> assignments;  // discarded index -> retained index
};

struct PlanStage {
    std::string label;
    double retain_ratio = 1.0;
    Index absolute_keep = 0;
};

// Multi-stage retention plan. Keeps are floors of the running ratio product
// applied to the initial token count; final_retain and average_retention are
// the un-floored ratio arithmetic so they match printed percentages even when
// the token count does not divide evenly.
struct StagedPlan {
    Index total_tokens = 0;
    std::vector<PlanStage> stages;
    Index final_keep = 0;
    double final_retain = 1.0;
    double average_retention = 1.0;
    Index llm_layers = 0;
    Index compress_layer = 0;
};

struct MergeOutput {
    Matrix output;
    std::map<Index, Index> assignments;
};

// Dominant-subspace construction, dispatching on cfg.subspace_method:
//   PCA                -> randomized truncated SVD
//   RandomDirections   -> seeded Gaussian draw + QR
//   CoordinateVariance -> the r coordinate axes of largest column variance
//   ClusterCenters     -> seeded k-means centers (k = r) + QR
// With Centering::MeanCenter the column mean is subtracted before estimation
// and stored on the subspace for residual computation.
Subspace build_subspace(const Eigen::Ref<const Matrix>& x, const CompressionConfig& cfg);

// s_i = ||x_i||^2 - ||x_i U_r||^2, clamped at 0. Never forms the D x D
// projector.
Vector projection_residuals(const Eigen::Ref<const Matrix>& x, const Subspace& subspace);

// The scores that drive selection under cfg.scoring (residuals, or
// in-subspace energy for ProjectionNormDescending).
Vector selection_scores(const Eigen::Ref<const Matrix>& x, const Subspace& subspace,
                        const CompressionConfig& cfg);

// Top-k indices by score: largest first, or smallest first for
// ResidualAscending. Ties go to the lower original index. Output is sorted
// ascending by index.
std::vector<Index> select_top_k(const Eigen::Ref<const Vector>& scores, Index k,
                                Scoring order = Scoring::ResidualDescending);

// One-shot cosine assignment of each discarded token to its most similar
// retained token (original features, not progressively merged ones), then
// each retained token becomes the arithmetic mean of itself and its assigned
// tokens. A zero-norm token has cosine 0 with everything and lands on the
// lowest-index retained token.
MergeOutput merge_tokens(const Eigen::Ref<const Matrix>& x, const std::vector<Index>& retained);

// Sum of the projection residuals of the discarded tokens; equals the
// squared Frobenius norm of the masked residual component.
double surrogate_loss(const Eigen::Ref<const Matrix>& x, const Subspace& subspace,
                      const std::vector<Index>& retained);

// The full pipeline: subspace -> scores -> top-K -> merge -> loss.
// Deterministic for fixed (x, cfg).
CompressionResult compress(const Eigen::Ref<const Matrix>& x, const CompressionConfig& cfg);

// Stage keeps are floor(N0 * prod(ratios up to t) + eps); a keep of 0 is an
// error. average_retention spreads stage 1 over layers 1..compress_layer and
// the final stage over the rest.
StagedPlan make_staged_plan(Index n_tokens, const std::vector<double>& stage_ratios, Index llm_layers,
                            Index compress_layer);

// Runs compress once per plan stage. One input matrix = simulation mode
// (each stage consumes the previous stage's output); one matrix per stage =
// replay mode (row counts must match the plan).
std::vector<CompressionResult> compress_staged(const std::vector<Matrix>& stage_inputs, const StagedPlan& plan,
                                               const CompressionConfig& cfg);

}  // namespace lrcp
