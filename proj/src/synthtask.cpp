#include "audioext/synthtask.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "audioext/rng.hpp"

namespace audioext {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t fnv1a(std::uint64_t h, std::uint64_t value) {
    for (int b = 0; b < 8; ++b) {
        h ^= (value >> (8 * b)) & 0xffULL;
        h *= kFnvPrime;
    }
    return h;
}

// Draw `count` distinct ints from [0, pool_size).
std::vector<int> draw_distinct(Rng& rng, int pool_size, int count) {
    if (count > pool_size) {
        throw std::invalid_argument("generate: pool smaller than requested draw");
    }
    std::vector<int> pool(static_cast<std::size_t>(pool_size));
    for (int i = 0; i < pool_size; ++i) {
        pool[static_cast<std::size_t>(i)] = i;
    }
    rng.shuffle(pool);
    pool.resize(static_cast<std::size_t>(count));
    return pool;
}

}  // namespace

VocabLayout VocabLayout::from_vocab(int vocab_size) {
    if (vocab_size < 15) {
        throw std::invalid_argument("VocabLayout: vocab_size must be >= 15");
    }
    VocabLayout v;
    v.vocab_size = vocab_size;
    const int usable = vocab_size - 3;
    const int third = usable / 3;
    v.key_begin = 3;
    v.key_end = v.key_begin + third;
    v.value_begin = v.key_end;
    v.value_end = v.value_begin + third;
    v.filler_begin = v.value_end;
    v.filler_end = vocab_size;
    return v;
}

std::uint64_t DatasetSpec::hash() const {
    std::uint64_t h = kFnvOffset;
    h = fnv1a(h, static_cast<std::uint64_t>(n_instances));
    h = fnv1a(h, static_cast<std::uint64_t>(audio_tokens_per_instance));
    h = fnv1a(h, static_cast<std::uint64_t>(n_facts));
    h = fnv1a(h, static_cast<std::uint64_t>(vocab_size));
    h = fnv1a(h, static_cast<std::uint64_t>(value_span));
    h = fnv1a(h, static_cast<std::uint64_t>(instream_distractors));
    h = fnv1a(h, depth_fixed ? 1 : 0);
    std::uint64_t depth_bits;
    static_assert(sizeof(depth_bits) == sizeof(fixed_depth));
    std::memcpy(&depth_bits, &fixed_depth, sizeof(depth_bits));
    h = fnv1a(h, depth_bits);
    h = fnv1a(h, key_pool == KeyPool::Train ? 0 : 1);
    h = fnv1a(h, seed);
    return h;
}

std::vector<TaskInstance> generate(const DatasetSpec& spec) {
    if (spec.n_instances < 0) {
        throw std::invalid_argument("generate: n_instances must be >= 0");
    }
    if (spec.audio_tokens_per_instance < 1) {
        throw std::invalid_argument("generate: audio_tokens_per_instance must be >= 1");
    }
    if (spec.n_facts < 1) {
        throw std::invalid_argument("generate: n_facts must be >= 1");
    }
    if (spec.value_span < 1) {
        throw std::invalid_argument("generate: value_span must be >= 1");
    }
    const VocabLayout vocab = VocabLayout::from_vocab(spec.vocab_size);
    const int fact_len = 1 + spec.value_span;
    if (spec.n_facts * fact_len > spec.audio_tokens_per_instance) {
        throw std::invalid_argument("generate: facts do not fit in the audio stream");
    }
    const int pool_size =
        spec.key_pool == KeyPool::Train ? vocab.train_pool_size() : vocab.test_pool_size();
    if (spec.n_facts > pool_size) {
        throw std::invalid_argument("generate: not enough distinct keys in the pool");
    }
    if (spec.instream_distractors < 0 || spec.instream_distractors > 3) {
        throw std::invalid_argument("generate: instream_distractors must be in [0, 3]");
    }
    const int instream = std::min(spec.instream_distractors, spec.n_facts - 1);
    const int n_values = spec.n_facts + (3 - instream);
    if (n_values > vocab.num_values()) {
        throw std::invalid_argument("generate: not enough distinct values");
    }

    const std::uint64_t spec_hash = spec.hash();
    std::vector<TaskInstance> out;
    out.reserve(static_cast<std::size_t>(spec.n_instances));

    for (int index = 0; index < spec.n_instances; ++index) {
        Rng rng(spec.seed, static_cast<std::uint64_t>(index));
        TaskInstance inst;
        inst.seed = spec.seed;
        inst.spec_hash = spec_hash;

        const std::vector<int> key_ids = draw_distinct(rng, pool_size, spec.n_facts);
        // Values stay distinct within an instance, including the out-of-stream
        // distractors drawn past the first n_facts slots.
        const std::vector<int> value_ids = draw_distinct(rng, vocab.num_values(), n_values);

        // Place facts without overlap; depths resample until they fit.
        const int max_start = spec.audio_tokens_per_instance - fact_len;
        std::vector<int> starts;
        for (int attempt = 0; attempt < 10000 && static_cast<int>(starts.size()) < spec.n_facts;
             ++attempt) {
            const double depth = spec.depth_fixed ? spec.fixed_depth : rng.uniform();
            const int start = static_cast<int>(std::llround(depth * max_start));
            bool overlaps = false;
            for (int other : starts) {
                if (std::abs(other - start) < fact_len) {
                    overlaps = true;
                    break;
                }
            }
            if (!overlaps) {
                starts.push_back(start);
            }
        }
        if (static_cast<int>(starts.size()) < spec.n_facts) {
            throw std::invalid_argument("generate: could not place facts without overlap");
        }

        inst.audio_tokens.resize(static_cast<std::size_t>(spec.audio_tokens_per_instance));
        for (int j = 0; j < spec.audio_tokens_per_instance; ++j) {
            inst.audio_tokens[static_cast<std::size_t>(j)] =
                rng.uniform_int(vocab.filler_begin, vocab.filler_end - 1);
        }
        std::vector<std::vector<int>> value_spans(static_cast<std::size_t>(spec.n_facts));
        for (int f = 0; f < spec.n_facts; ++f) {
            const int key = spec.key_pool == KeyPool::Train
                                ? vocab.train_key(key_ids[static_cast<std::size_t>(f)])
                                : vocab.test_key(key_ids[static_cast<std::size_t>(f)]);
            std::vector<int>& span = value_spans[static_cast<std::size_t>(f)];
            span.resize(static_cast<std::size_t>(spec.value_span));
            for (int v = 0; v < spec.value_span; ++v) {
                // Span token 0 identifies the fact; later tokens pad it out.
                span[static_cast<std::size_t>(v)] =
                    v == 0 ? vocab.value_begin + value_ids[static_cast<std::size_t>(f)]
                           : vocab.value_begin +
                                 value_ids[static_cast<std::size_t>((f + v) % spec.n_facts)];
            }
            const int start = starts[static_cast<std::size_t>(f)];
            inst.audio_tokens[static_cast<std::size_t>(start)] = key;
            for (int v = 0; v < spec.value_span; ++v) {
                inst.audio_tokens[static_cast<std::size_t>(start + 1 + v)] =
                    span[static_cast<std::size_t>(v)];
            }
        }

        const int probe = rng.uniform_int(0, spec.n_facts - 1);
        const int probe_key = spec.key_pool == KeyPool::Train
                                  ? vocab.train_key(key_ids[static_cast<std::size_t>(probe)])
                                  : vocab.test_key(key_ids[static_cast<std::size_t>(probe)]);
        inst.question_tokens = {vocab.question_marker, probe_key};
        inst.fact_depth =
            max_start == 0 ? 0.0
                           : static_cast<double>(starts[static_cast<std::size_t>(probe)]) /
                                 static_cast<double>(max_start);

        // In-stream distractors are other facts' value spans; the rest use
        // values that never appear in the stream.
        std::vector<std::vector<int>> candidates;
        candidates.push_back(value_spans[static_cast<std::size_t>(probe)]);
        std::vector<int> other_facts;
        for (int f = 0; f < spec.n_facts; ++f) {
            if (f != probe) {
                other_facts.push_back(f);
            }
        }
        rng.shuffle(other_facts);
        for (int i = 0; i < instream; ++i) {
            candidates.push_back(value_spans[static_cast<std::size_t>(other_facts[
                static_cast<std::size_t>(i)])]);
        }
        for (int v = spec.n_facts; static_cast<int>(candidates.size()) < 4; ++v) {
            std::vector<int> span(static_cast<std::size_t>(spec.value_span));
            for (int j = 0; j < spec.value_span; ++j) {
                span[static_cast<std::size_t>(j)] =
                    vocab.value_begin + value_ids[static_cast<std::size_t>((v + j) % n_values)];
            }
            candidates.push_back(span);
        }

        // Uniformly random answer slot kills positional answer bias.
        std::vector<int> order = {0, 1, 2, 3};
        rng.shuffle(order);
        for (int slot = 0; slot < 4; ++slot) {
            inst.choices[static_cast<std::size_t>(slot)] =
                candidates[static_cast<std::size_t>(order[static_cast<std::size_t>(slot)])];
            if (order[static_cast<std::size_t>(slot)] == 0) {
                inst.answer_index = slot;
            }
        }
        out.push_back(std::move(inst));
    }
    return out;
}

double score(std::span<const int> predictions, std::span<const TaskInstance> instances) {
    if (predictions.size() != instances.size()) {
        throw std::invalid_argument("score: prediction/instance count mismatch");
    }
    if (instances.empty()) {
        return 0.0;
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        if (predictions[i] == instances[i].answer_index) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(instances.size());
}

namespace {

constexpr int kSchemaVersion = 1;

nlohmann::ordered_json to_json(const TaskInstance& inst) {
    nlohmann::ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["audio"] = inst.audio_tokens;
    j["question"] = inst.question_tokens;
    j["choices"] = inst.choices;
    j["answer"] = inst.answer_index;
    j["depth"] = inst.fact_depth;
    j["meta"] = {{"seed", inst.seed}, {"spec_hash", inst.spec_hash}};
    return j;
}

TaskInstance from_json(const nlohmann::json& j) {
    if (j.at("schema_version").get<int>() != kSchemaVersion) {
        throw std::runtime_error("unsupported schema_version");
    }
    TaskInstance inst;
    inst.audio_tokens = j.at("audio").get<std::vector<int>>();
    inst.question_tokens = j.at("question").get<std::vector<int>>();
    const auto choices = j.at("choices").get<std::vector<std::vector<int>>>();
    if (choices.size() != 4) {
        throw std::runtime_error("expected exactly 4 choices");
    }
    for (std::size_t i = 0; i < 4; ++i) {
        inst.choices[i] = choices[i];
    }
    inst.answer_index = j.at("answer").get<int>();
    if (inst.answer_index < 0 || inst.answer_index >= 4) {
        throw std::runtime_error("answer index out of range");
    }
    inst.fact_depth = j.at("depth").get<double>();
    inst.seed = j.at("meta").at("seed").get<std::uint64_t>();
    inst.spec_hash = j.at("meta").at("spec_hash").get<std::uint64_t>();
    return inst;
}

}  // namespace

void export_jsonl(std::span<const TaskInstance> instances, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("export_jsonl: cannot open " + path.string());
    }
    for (const TaskInstance& inst : instances) {
        out << to_json(inst).dump() << '\n';
    }
    if (!out) {
        throw std::runtime_error("export_jsonl: write failed for " + path.string());
    }
}

std::vector<TaskInstance> import_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("import_jsonl: cannot open " + path.string());
    }
    std::vector<TaskInstance> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            out.push_back(from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw std::runtime_error("import_jsonl: parse error at " + path.string() + ":" +
                                     std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

AssembledSequence assemble_sequence(const TaskInstance& instance) {
    AssembledSequence seq;
    seq.tokens.reserve(2 + instance.audio_tokens.size() + instance.question_tokens.size());
    seq.tokens.push_back(0);
    seq.tokens.push_back(1);
    seq.tokens.insert(seq.tokens.end(), instance.audio_tokens.begin(),
                      instance.audio_tokens.end());
    seq.tokens.insert(seq.tokens.end(), instance.question_tokens.begin(),
                      instance.question_tokens.end());
    seq.layout = make_layout(2, static_cast<int>(instance.audio_tokens.size()),
                             static_cast<int>(instance.question_tokens.size()));
    return seq;
}

}  // namespace audioext
