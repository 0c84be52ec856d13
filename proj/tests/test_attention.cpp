#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "audioext/attention.hpp"
#include "audioext/rng.hpp"

using namespace audioext;

namespace {

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = rng.normal();
        }
    }
    return m;
}

AttentionBatch random_batch(Rng& rng, int n, int d, bool causal = false) {
    return AttentionBatch{random_matrix(rng, n, d), random_matrix(rng, n, d),
                          random_matrix(rng, n, d), causal};
}

std::vector<double> integer_positions(int n) {
    std::vector<double> pos(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        pos[static_cast<std::size_t>(j)] = j;
    }
    return pos;
}

// Partial plan over [text 2][audio 4][text 2] with the given temperature.
PositionPlan audio_plan(const FrequencyTable& table, double temperature, int cutoff = 0) {
    ExtensionConfig cfg;
    cfg.method = Method::PartialYarn2;
    cfg.anchor_audio_tokens = 2;
    cfg.target_audio_tokens = 4;
    cfg.cutoff_pair = cutoff;
    cfg.temperature = temperature;
    return plan_partial(cfg, make_layout(2, 4, 2), table);
}

}  // namespace

TEST_CASE("softmax splits equal logits evenly and matches hand values") {
    Eigen::MatrixXd logits(1, 2);
    logits << 3.0, 3.0;
    const Eigen::MatrixXd even = softmax_rows(logits, false);
    CHECK(even(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(even(0, 1) == doctest::Approx(0.5).epsilon(1e-12));

    Eigen::MatrixXd hand(1, 3);
    hand << 0.0, std::log(2.0), std::log(4.0);
    const Eigen::MatrixXd weights = softmax_rows(hand, false);
    CHECK(weights(0, 0) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
    CHECK(weights(0, 1) == doctest::Approx(2.0 / 7.0).epsilon(1e-12));
    CHECK(weights(0, 2) == doctest::Approx(4.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("attend_explicit hand-set logits through constructed vectors") {
    const FrequencyTable table = build_frequencies(2);
    AttentionBatch batch;
    batch.queries = Eigen::MatrixXd::Zero(3, 2);
    batch.queries(0, 0) = 1.0;
    batch.keys = Eigen::MatrixXd::Zero(3, 2);
    // Logit of key j is keys(j,0)/sqrt(2); aim for (0, ln2, ln4).
    batch.keys(0, 0) = 0.0;
    batch.keys(1, 0) = std::sqrt(2.0) * std::log(2.0);
    batch.keys(2, 0) = std::sqrt(2.0) * std::log(4.0);
    batch.values = Eigen::MatrixXd::Zero(3, 2);
    batch.values(0, 0) = 1.0;
    batch.values(1, 0) = 2.0;
    batch.values(2, 0) = 4.0;

    const std::vector<double> positions = {0.0, 0.0, 0.0};
    const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(3, 3);
    const Eigen::MatrixXd out = attend_explicit(batch, positions, ones, table);
    // weights (1/7, 2/7, 4/7) over values (1, 2, 4).
    CHECK(out(0, 0) == doctest::Approx((1.0 + 4.0 + 16.0) / 7.0).epsilon(1e-12));
}

TEST_CASE("huge temperature flattens the weights") {
    Rng rng(17);
    const FrequencyTable table = build_frequencies(8);
    const AttentionBatch batch = random_batch(rng, 5, 8);
    const std::vector<double> positions = integer_positions(5);
    const Eigen::MatrixXd hot = Eigen::MatrixXd::Constant(5, 5, 1e9);
    const Eigen::MatrixXd logits = attention_logits_explicit(batch, positions, hot, table);
    const Eigen::MatrixXd weights = softmax_rows(logits, false);
    for (Eigen::Index r = 0; r < 5; ++r) {
        for (Eigen::Index c = 0; c < 5; ++c) {
            CHECK(weights(r, c) == doctest::Approx(0.2).epsilon(1e-6));
        }
    }
}

TEST_CASE("vanilla plan equals explicit attention with unit temperature") {
    Rng rng(23);
    const FrequencyTable table = build_frequencies(16);
    for (bool causal : {false, true}) {
        const AttentionBatch batch = random_batch(rng, 7, 16, causal);
        const PositionPlan plan = plan_vanilla(7);
        const Eigen::MatrixXd planned = attend_planned(batch, plan, table);
        const Eigen::MatrixXd explicit_out = attend_explicit(
            batch, integer_positions(7), Eigen::MatrixXd::Ones(7, 7), table);
        CHECK((planned - explicit_out).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("temperature folding reproduces explicit temperature inside audio") {
    Rng rng(29);
    const FrequencyTable table = build_frequencies(16);
    for (double t : {0.5, 1.0, 1.6, 4.0}) {
        const PositionPlan plan = audio_plan(table, t);
        const AttentionBatch batch = random_batch(rng, 8, 16);
        const Eigen::MatrixXd planned = attention_logits_planned(batch, plan, table);

        // Explicit twin: same (interpolated) positions, per-pair temperature
        // t inside audio, sqrt(t) mixed, 1 outside.
        Eigen::MatrixXd temperature(8, 8);
        const auto is_audio = [](Eigen::Index j) { return j >= 2 && j < 6; };
        for (Eigen::Index r = 0; r < 8; ++r) {
            for (Eigen::Index c = 0; c < 8; ++c) {
                const int endpoints = (is_audio(r) ? 1 : 0) + (is_audio(c) ? 1 : 0);
                temperature(r, c) = endpoints == 2 ? t : endpoints == 1 ? std::sqrt(t) : 1.0;
            }
        }
        const Eigen::MatrixXd explicit_logits =
            attention_logits_explicit(batch, plan.interp_positions, temperature, table);
        for (Eigen::Index r = 0; r < 8; ++r) {
            for (Eigen::Index c = 0; c < 8; ++c) {
                CHECK(planned(r, c) ==
                      doctest::Approx(explicit_logits(r, c)).epsilon(1e-7));
            }
        }
    }
}

TEST_CASE("mixed text-audio logits scale by one over sqrt temperature") {
    Rng rng(31);
    const FrequencyTable table = build_frequencies(16);
    const double t = 4.0;
    const PositionPlan plan = audio_plan(table, t);
    PositionPlan unscaled = plan;
    for (double& m : unscaled.magnitudes) {
        m = 1.0;
    }
    const AttentionBatch batch = random_batch(rng, 8, 16);
    const Eigen::MatrixXd scaled = attention_logits_planned(batch, plan, table);
    const Eigen::MatrixXd raw = attention_logits_planned(batch, unscaled, table);
    // Text query (row 0) to audio key (col 3): exactly one scaled endpoint.
    CHECK(scaled(0, 3) == doctest::Approx(raw(0, 3) / 2.0).epsilon(1e-7));
    CHECK(scaled(3, 0) == doctest::Approx(raw(3, 0) / 2.0).epsilon(1e-7));
    // Both endpoints inside audio: scaled by 1/t.
    CHECK(scaled(3, 4) == doctest::Approx(raw(3, 4) / 4.0).epsilon(1e-7));
    // Both outside: untouched.
    CHECK(scaled(0, 7) == doctest::Approx(raw(0, 7)).epsilon(1e-12));
}

TEST_CASE("attention rows are stochastic") {
    Rng rng(37);
    const FrequencyTable table = build_frequencies(8);
    for (bool causal : {false, true}) {
        const AttentionBatch batch = random_batch(rng, 9, 8, causal);
        const PositionPlan plan = plan_vanilla(9);
        const Eigen::MatrixXd weights =
            softmax_rows(attention_logits_planned(batch, plan, table), causal);
        for (Eigen::Index r = 0; r < 9; ++r) {
            CHECK(weights.row(r).sum() == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("uniform temperature scaling preserves the argmax key") {
    Rng rng(41);
    const FrequencyTable table = build_frequencies(8);
    for (int trial = 0; trial < 100; ++trial) {
        const AttentionBatch batch = random_batch(rng, 6, 8);
        const std::vector<double> positions = integer_positions(6);
        const double t = 0.25 + rng.uniform() * 8.0;
        const Eigen::MatrixXd base = attention_logits_explicit(
            batch, positions, Eigen::MatrixXd::Ones(6, 6), table);
        const Eigen::MatrixXd scaled = attention_logits_explicit(
            batch, positions, Eigen::MatrixXd::Constant(6, 6, t), table);
        for (Eigen::Index r = 0; r < 6; ++r) {
            Eigen::Index base_arg = 0;
            Eigen::Index scaled_arg = 0;
            for (Eigen::Index c = 1; c < 6; ++c) {
                if (base(r, c) > base(r, base_arg)) base_arg = c;
                if (scaled(r, c) > scaled(r, scaled_arg)) scaled_arg = c;
            }
            CHECK(base_arg == scaled_arg);
        }
    }
}

TEST_CASE("shape mismatches are rejected") {
    Rng rng(43);
    const FrequencyTable table = build_frequencies(8);
    AttentionBatch batch = random_batch(rng, 4, 8);
    batch.values = random_matrix(rng, 3, 8);
    CHECK_THROWS_AS(attend_planned(batch, plan_vanilla(4), table), std::invalid_argument);

    AttentionBatch ok = random_batch(rng, 4, 8);
    CHECK_THROWS_AS(attend_planned(ok, plan_vanilla(5), table), std::invalid_argument);
    const std::vector<double> short_positions = {0.0, 1.0};
    CHECK_THROWS_AS(
        attend_explicit(ok, short_positions, Eigen::MatrixXd::Ones(4, 4), table),
        std::invalid_argument);
}
