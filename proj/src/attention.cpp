#include "audioext/attention.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace audioext {

namespace {

void check_batch(const AttentionBatch& batch, const FrequencyTable& table) {
    const Eigen::Index n = batch.queries.rows();
    if (batch.keys.rows() != n || batch.values.rows() != n) {
        throw std::invalid_argument("attention: token counts differ across Q/K/V");
    }
    if (batch.queries.cols() != table.head_dim || batch.keys.cols() != table.head_dim) {
        throw std::invalid_argument("attention: Q/K width does not match head_dim");
    }
}

}  // namespace

RotationTable resolve_rotations(const PositionPlan& plan, const FrequencyTable& table) {
    const auto n = static_cast<Eigen::Index>(plan.size());
    const Eigen::Index pairs = table.num_pairs();
    RotationTable rot;
    rot.cosines.resize(n, pairs);
    rot.sines.resize(n, pairs);
    rot.magnitudes.resize(n);
    for (Eigen::Index t = 0; t < n; ++t) {
        const TokenRotation token = effective_angles(plan, table, static_cast<std::size_t>(t));
        for (Eigen::Index i = 0; i < pairs; ++i) {
            rot.cosines(t, i) = std::cos(token.angles[static_cast<std::size_t>(i)]);
            rot.sines(t, i) = std::sin(token.angles[static_cast<std::size_t>(i)]);
        }
        rot.magnitudes(t) = token.magnitude;
    }
    return rot;
}

Eigen::MatrixXd apply_rotations(const Eigen::MatrixXd& x, const RotationTable& rot) {
    if (x.rows() != rot.tokens() || x.cols() != 2 * rot.pairs()) {
        throw std::invalid_argument("apply_rotations: shape mismatch");
    }
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
        const double mag = rot.magnitudes(t);
        for (Eigen::Index i = 0; i < rot.pairs(); ++i) {
            const double c = rot.cosines(t, i);
            const double s = rot.sines(t, i);
            const double a = x(t, 2 * i);
            const double b = x(t, 2 * i + 1);
            out(t, 2 * i) = mag * (a * c - b * s);
            out(t, 2 * i + 1) = mag * (a * s + b * c);
        }
    }
    return out;
}

Eigen::MatrixXd attention_logits_explicit(const AttentionBatch& batch,
                                          std::span<const double> positions,
                                          const Eigen::MatrixXd& temperature,
                                          const FrequencyTable& table) {
    check_batch(batch, table);
    const Eigen::Index n = batch.queries.rows();
    if (static_cast<Eigen::Index>(positions.size()) != n) {
        throw std::invalid_argument("attend_explicit: positions length mismatch");
    }
    if (temperature.rows() != n || temperature.cols() != n) {
        throw std::invalid_argument("attend_explicit: temperature must be n x n");
    }

    // Integer positions at unit magnitude, materialized through a plan so
    // both kernels share one rotation path.
    PositionPlan plan;
    plan.interp_positions.assign(positions.begin(), positions.end());
    plan.extrap_positions = plan.interp_positions;
    plan.magnitudes.assign(static_cast<std::size_t>(n), 1.0);
    plan.split = GroupSplit{0, table.num_pairs()};
    const RotationTable rot = resolve_rotations(plan, table);

    const Eigen::MatrixXd q = apply_rotations(batch.queries, rot);
    const Eigen::MatrixXd k = apply_rotations(batch.keys, rot);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(table.head_dim));
    Eigen::MatrixXd logits = q * k.transpose() * inv_sqrt_d;
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < n; ++c) {
            if (!(temperature(r, c) > 0.0)) {
                throw std::invalid_argument("attend_explicit: temperatures must be positive");
            }
            logits(r, c) /= temperature(r, c);
        }
    }
    return logits;
}

Eigen::MatrixXd attention_logits_planned(const AttentionBatch& batch, const PositionPlan& plan,
                                         const FrequencyTable& table) {
    check_batch(batch, table);
    if (static_cast<Eigen::Index>(plan.size()) != batch.queries.rows()) {
        throw std::invalid_argument("attend_planned: plan length mismatch");
    }
    const RotationTable rot = resolve_rotations(plan, table);
    const Eigen::MatrixXd q = apply_rotations(batch.queries, rot);
    const Eigen::MatrixXd k = apply_rotations(batch.keys, rot);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(table.head_dim));
    return q * k.transpose() * inv_sqrt_d;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits, bool causal) {
    Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const Eigen::Index visible = causal ? r + 1 : logits.cols();
        double max_logit = -std::numeric_limits<double>::infinity();
        for (Eigen::Index c = 0; c < visible; ++c) {
            max_logit = std::max(max_logit, logits(r, c));
        }
        double denom = 0.0;
        for (Eigen::Index c = 0; c < visible; ++c) {
            const double w = std::exp(logits(r, c) - max_logit);
            weights(r, c) = w;
            denom += w;
        }
        for (Eigen::Index c = 0; c < visible; ++c) {
            weights(r, c) /= denom;
        }
    }
    return weights;
}

Eigen::MatrixXd attend_explicit(const AttentionBatch& batch, std::span<const double> positions,
                                const Eigen::MatrixXd& temperature, const FrequencyTable& table) {
    const Eigen::MatrixXd logits =
        attention_logits_explicit(batch, positions, temperature, table);
    return softmax_rows(logits, batch.causal) * batch.values;
}

Eigen::MatrixXd attend_planned(const AttentionBatch& batch, const PositionPlan& plan,
                               const FrequencyTable& table) {
    const Eigen::MatrixXd logits = attention_logits_planned(batch, plan, table);
    return softmax_rows(logits, batch.causal) * batch.values;
}

}  // namespace audioext
