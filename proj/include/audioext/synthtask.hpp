#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "audioext/layout.hpp"

namespace audioext {

// One synthetic long-audio MCQA item. The audio stream is filler tokens with
// (key, value-span) facts written in at controlled depths; the question names
// one key and the four choices are candidate value spans, exactly one of
// which sits next to that key in the stream.
struct TaskInstance {
    std::vector<int> audio_tokens;
    std::vector<int> question_tokens;
    std::array<std::vector<int>, 4> choices;
    int answer_index = 0;
    // Relative position of the probed fact in [0, 1].
    double fact_depth = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t spec_hash = 0;

    bool operator==(const TaskInstance&) const = default;
};

// Token-id ranges carved out of a vocabulary: two fixed preamble tokens, a
// question marker, then equal thirds of the remainder for keys, values and
// filler. Keys are split into disjoint train/test pools so the splits can
// never share a fact key.
struct VocabLayout {
    int vocab_size = 0;
    int preamble0 = 0;
    int preamble1 = 1;
    int question_marker = 2;
    int key_begin = 0, key_end = 0;      // [begin, end)
    int value_begin = 0, value_end = 0;  // [begin, end)
    int filler_begin = 0, filler_end = 0;

    static VocabLayout from_vocab(int vocab_size);

    int num_keys() const { return key_end - key_begin; }
    int num_values() const { return value_end - value_begin; }
    // Train pool: first half of the keys; test pool: the rest.
    int train_key(int i) const { return key_begin + i; }
    int test_key(int i) const { return key_begin + num_keys() / 2 + i; }
    int train_pool_size() const { return num_keys() / 2; }
    int test_pool_size() const { return num_keys() - num_keys() / 2; }
};

enum class KeyPool { Train, Test };

struct DatasetSpec {
    int n_instances = 0;
    int audio_tokens_per_instance = 0;
    int n_facts = 4;
    int vocab_size = 64;
    int value_span = 1;
    // How many distractors are other facts' values (present in the stream);
    // the rest are values absent from the stream. In-stream distractors can
    // only be told apart by reading the right position.
    int instream_distractors = 1;
    // Uniform depths by default; set fixed_depth in [0,1] to force placement.
    bool depth_fixed = false;
    double fixed_depth = 0.0;
    KeyPool key_pool = KeyPool::Train;
    std::uint64_t seed = 0;

    std::uint64_t hash() const;
};

// Deterministic per (seed, instance index): instances can be generated in
// any sharding and agree byte-for-byte.
std::vector<TaskInstance> generate(const DatasetSpec& spec);

double score(std::span<const int> predictions, std::span<const TaskInstance> instances);

void export_jsonl(std::span<const TaskInstance> instances, const std::filesystem::path& path);
std::vector<TaskInstance> import_jsonl(const std::filesystem::path& path);

// Full model input: preamble, audio, then the question; plus the matching
// modality layout (audio run starts at p = 2).
struct AssembledSequence {
    std::vector<int> tokens;
    SequenceLayout layout;
};

AssembledSequence assemble_sequence(const TaskInstance& instance);

}  // namespace audioext
