#pragma once

#include <Eigen/Dense>
#include <span>

#include "audioext/extension.hpp"
#include "audioext/rope.hpp"

namespace audioext {

// Token-major single-head batch; one row per token, d columns.
struct AttentionBatch {
    Eigen::MatrixXd queries;
    Eigen::MatrixXd keys;
    Eigen::MatrixXd values;
    bool causal = false;
};

// Plan materialized as per-token cos/sin tables, n x d/2 each. Shared by the
// reference kernels and the toy model so both resolve angles identically.
struct RotationTable {
    Eigen::MatrixXd cosines;
    Eigen::MatrixXd sines;
    Eigen::VectorXd magnitudes;

    Eigen::Index tokens() const { return cosines.rows(); }
    Eigen::Index pairs() const { return cosines.cols(); }
};

RotationTable resolve_rotations(const PositionPlan& plan, const FrequencyTable& table);

// Rotates every row of x (token t with rot row t) and applies magnitudes.
Eigen::MatrixXd apply_rotations(const Eigen::MatrixXd& x, const RotationTable& rot);

// Pre-softmax logits with all tokens at explicit positions and a per
// (query, key) temperature divisor: <R_m q, R_n k> / (t(m,n) sqrt(d)).
Eigen::MatrixXd attention_logits_explicit(const AttentionBatch& batch,
                                          std::span<const double> positions,
                                          const Eigen::MatrixXd& temperature,
                                          const FrequencyTable& table);

// Pre-softmax logits with plan-resolved per-pair angles and magnitudes and a
// plain 1/sqrt(d) scale; temperature arrives folded into the magnitudes.
Eigen::MatrixXd attention_logits_planned(const AttentionBatch& batch, const PositionPlan& plan,
                                         const FrequencyTable& table);

// Row softmax; with causal set, keys after the query get zero weight.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits, bool causal);

Eigen::MatrixXd attend_explicit(const AttentionBatch& batch, std::span<const double> positions,
                                const Eigen::MatrixXd& temperature, const FrequencyTable& table);

Eigen::MatrixXd attend_planned(const AttentionBatch& batch, const PositionPlan& plan,
                               const FrequencyTable& table);

}  // namespace audioext
