#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "audioext/rng.hpp"
#include "audioext/synthtask.hpp"

using namespace audioext;

namespace {

DatasetSpec basic_spec() {
    DatasetSpec spec;
    spec.n_instances = 32;
    spec.audio_tokens_per_instance = 64;
    spec.n_facts = 4;
    spec.vocab_size = 64;
    spec.seed = 123;
    return spec;
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("generation is deterministic per seed") {
    const DatasetSpec spec = basic_spec();
    CHECK(generate(spec) == generate(spec));

    DatasetSpec other = spec;
    other.seed = 124;
    CHECK(generate(spec) != generate(other));
}

TEST_CASE("forced depth places the fact at the stream start") {
    DatasetSpec spec = basic_spec();
    spec.n_facts = 1;
    spec.n_instances = 4;
    spec.depth_fixed = true;
    spec.fixed_depth = 0.0;
    const VocabLayout vocab = VocabLayout::from_vocab(spec.vocab_size);
    for (const TaskInstance& inst : generate(spec)) {
        CHECK(inst.fact_depth == 0.0);
        const int key = inst.audio_tokens[0];
        CHECK(key >= vocab.key_begin);
        CHECK(key < vocab.key_end);
        CHECK(inst.question_tokens.back() == key);
        CHECK(inst.audio_tokens[1] == inst.choices[static_cast<std::size_t>(
                                          inst.answer_index)][0]);
    }
}

TEST_CASE("instances satisfy the structural invariants") {
    DatasetSpec spec = basic_spec();
    spec.n_instances = 100;
    for (const TaskInstance& inst : generate(spec)) {
        // Choices pairwise distinct, exactly one correct.
        for (std::size_t a = 0; a < 4; ++a) {
            for (std::size_t b = a + 1; b < 4; ++b) {
                CHECK(inst.choices[a] != inst.choices[b]);
            }
        }
        CHECK(inst.answer_index >= 0);
        CHECK(inst.answer_index < 4);
        CHECK(inst.fact_depth >= 0.0);
        CHECK(inst.fact_depth <= 1.0);

        // The probed fact is present at the recorded depth: key followed by
        // the answer span.
        const int max_start =
            static_cast<int>(inst.audio_tokens.size()) - 1 - static_cast<int>(
                inst.choices[0].size());
        const int start = static_cast<int>(std::llround(inst.fact_depth * max_start));
        CHECK(inst.audio_tokens[static_cast<std::size_t>(start)] ==
              inst.question_tokens.back());
        const std::vector<int>& answer =
            inst.choices[static_cast<std::size_t>(inst.answer_index)];
        for (std::size_t v = 0; v < answer.size(); ++v) {
            CHECK(inst.audio_tokens[static_cast<std::size_t>(start) + 1 + v] == answer[v]);
        }
    }
}

TEST_CASE("train and test pools never share keys") {
    DatasetSpec train_spec = basic_spec();
    DatasetSpec test_spec = basic_spec();
    test_spec.key_pool = KeyPool::Test;
    std::set<int> train_keys;
    std::set<int> test_keys;
    for (const TaskInstance& inst : generate(train_spec)) {
        train_keys.insert(inst.question_tokens.back());
    }
    for (const TaskInstance& inst : generate(test_spec)) {
        test_keys.insert(inst.question_tokens.back());
    }
    for (int key : train_keys) {
        CHECK(test_keys.count(key) == 0);
    }
}

TEST_CASE("fact depths cover the stream uniformly") {
    DatasetSpec spec = basic_spec();
    spec.n_instances = 1000;
    spec.audio_tokens_per_instance = 160;
    const std::vector<TaskInstance> instances = generate(spec);

    std::vector<double> depths;
    depths.reserve(instances.size());
    for (const TaskInstance& inst : instances) {
        depths.push_back(inst.fact_depth);
    }
    std::sort(depths.begin(), depths.end());
    double ks = 0.0;
    const double n = static_cast<double>(depths.size());
    for (std::size_t i = 0; i < depths.size(); ++i) {
        const double cdf = depths[i];
        ks = std::max(ks, std::abs(static_cast<double>(i + 1) / n - cdf));
        ks = std::max(ks, std::abs(cdf - static_cast<double>(i) / n));
    }
    CHECK(ks < 0.05);

    // Per-quartile counts within 3 sigma of uniform.
    std::array<int, 4> quartiles = {0, 0, 0, 0};
    for (double depth : depths) {
        quartiles[std::min(3, static_cast<int>(depth * 4.0))]++;
    }
    const double expected = n / 4.0;
    const double sigma = std::sqrt(n * 0.25 * 0.75);
    for (int count : quartiles) {
        CHECK(std::abs(count - expected) <= 3.0 * sigma);
    }
}

TEST_CASE("answer slots are unbiased and scoring matches") {
    DatasetSpec spec = basic_spec();
    spec.n_instances = 2000;
    const std::vector<TaskInstance> instances = generate(spec);

    std::array<int, 4> slots = {0, 0, 0, 0};
    for (const TaskInstance& inst : instances) {
        slots[static_cast<std::size_t>(inst.answer_index)]++;
    }
    const double expected = 2000.0 / 4.0;
    const double sigma = std::sqrt(2000.0 * 0.25 * 0.75);
    for (int count : slots) {
        CHECK(std::abs(count - expected) <= 4.0 * sigma);
    }

    // A constant predictor lands near the chance floor.
    std::vector<int> constant(instances.size(), 2);
    const double chance = score(constant, instances);
    CHECK(chance > 0.25 - 4.0 * sigma / 2000.0);
    CHECK(chance < 0.25 + 4.0 * sigma / 2000.0);

    // An oracle reading the answer index scores 1.
    std::vector<int> oracle;
    oracle.reserve(instances.size());
    for (const TaskInstance& inst : instances) {
        oracle.push_back(inst.answer_index);
    }
    CHECK(score(oracle, instances) == 1.0);
}

TEST_CASE("score arithmetic and errors") {
    const DatasetSpec spec = basic_spec();
    const std::vector<TaskInstance> instances = generate(spec);
    std::vector<int> predictions;
    for (const TaskInstance& inst : instances) {
        predictions.push_back(inst.answer_index);
    }
    predictions[0] = (predictions[0] + 1) % 4;  // one wrong
    const double expected = 31.0 / 32.0;
    CHECK(score(predictions, instances) == doctest::Approx(expected).epsilon(1e-12));

    predictions.pop_back();
    CHECK_THROWS_AS(score(predictions, instances), std::invalid_argument);
}

TEST_CASE("random guessing scores near one quarter") {
    DatasetSpec spec = basic_spec();
    spec.n_instances = 10000;
    spec.audio_tokens_per_instance = 32;
    const std::vector<TaskInstance> instances = generate(spec);
    Rng rng(77);
    std::vector<int> guesses;
    guesses.reserve(instances.size());
    for (std::size_t i = 0; i < instances.size(); ++i) {
        guesses.push_back(rng.uniform_int(0, 3));
    }
    const double acc = score(guesses, instances);
    CHECK(acc > 0.23);
    CHECK(acc < 0.27);
}

TEST_CASE("jsonl round trip is the identity") {
    const std::filesystem::path path = temp_file("audioext_roundtrip.jsonl");
    DatasetSpec spec = basic_spec();
    spec.n_instances = 100;
    const std::vector<TaskInstance> instances = generate(spec);
    export_jsonl(instances, path);
    CHECK(import_jsonl(path) == instances);
    std::filesystem::remove(path);
}

TEST_CASE("empty list exports an empty file") {
    const std::filesystem::path path = temp_file("audioext_empty.jsonl");
    export_jsonl({}, path);
    CHECK(std::filesystem::file_size(path) == 0);
    CHECK(import_jsonl(path).empty());
    std::filesystem::remove(path);
}

TEST_CASE("hand-written record parses to the documented schema") {
    const std::filesystem::path path = temp_file("audioext_golden.jsonl");
    {
        std::ofstream out(path);
        out << R"({"schema_version":1,"audio":[30,31,5,24,32],"question":[2,5],)"
            << R"("choices":[[24],[25],[26],[27]],"answer":0,"depth":0.5,)"
            << R"("meta":{"seed":9,"spec_hash":1234}})" << "\n";
    }
    const std::vector<TaskInstance> parsed = import_jsonl(path);
    REQUIRE(parsed.size() == 1);
    CHECK(parsed[0].audio_tokens == std::vector<int>{30, 31, 5, 24, 32});
    CHECK(parsed[0].question_tokens == std::vector<int>{2, 5});
    CHECK(parsed[0].choices[0] == std::vector<int>{24});
    CHECK(parsed[0].answer_index == 0);
    CHECK(parsed[0].fact_depth == 0.5);
    CHECK(parsed[0].seed == 9);
    CHECK(parsed[0].spec_hash == 1234);
    std::filesystem::remove(path);
}

TEST_CASE("malformed lines report the line number") {
    const std::filesystem::path path = temp_file("audioext_malformed.jsonl");
    {
        std::ofstream out(path);
        out << R"({"schema_version":1,"audio":[1],"question":[2],"choices":[[1],[2],[3],[4]],)"
            << R"("answer":0,"depth":0.0,"meta":{"seed":0,"spec_hash":0}})" << "\n";
        out << "{not json}\n";
    }
    try {
        import_jsonl(path);
        FAIL("expected a parse error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST_CASE("impossible packings are rejected") {
    DatasetSpec spec = basic_spec();
    spec.audio_tokens_per_instance = 6;  // 4 facts x 2 tokens do not fit
    CHECK_THROWS_AS(generate(spec), std::invalid_argument);
}

TEST_CASE("assemble_sequence produces the model layout") {
    DatasetSpec spec = basic_spec();
    spec.n_instances = 1;
    const TaskInstance inst = generate(spec)[0];
    const AssembledSequence seq = assemble_sequence(inst);
    CHECK(seq.tokens.size() == 2 + inst.audio_tokens.size() + inst.question_tokens.size());
    CHECK(seq.tokens[0] == 0);
    CHECK(seq.tokens[1] == 1);
    const AudioWindow window = locate_audio_window(seq.layout);
    CHECK(window.start == 2);
    CHECK(window.length == static_cast<int>(inst.audio_tokens.size()));
    CHECK(seq.layout.total_tokens() == static_cast<int>(seq.tokens.size()));
}
