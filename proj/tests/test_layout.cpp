#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "audioext/layout.hpp"

using namespace audioext;

TEST_CASE("chunk_audio at the reference token rates") {
    const ChunkCount salmonn = chunk_audio(150.0, ChunkingConfig{30.0, 88});
    CHECK(salmonn.num_chunks == 5);
    CHECK(salmonn.audio_tokens == 440);

    const ChunkCount qwen = chunk_audio(600.0, ChunkingConfig{30.0, 750});
    CHECK(qwen.num_chunks == 20);
    CHECK(qwen.audio_tokens == 15000);

    const ChunkCount single = chunk_audio(30.0, ChunkingConfig{30.0, 88});
    CHECK(single.num_chunks == 1);
    CHECK(single.audio_tokens == 88);
}

TEST_CASE("chunk_audio pads the partial final chunk") {
    const ChunkCount c = chunk_audio(31.0, ChunkingConfig{30.0, 88});
    CHECK(c.num_chunks == 2);
    CHECK(c.audio_tokens == 176);
}

TEST_CASE("chunk_audio is monotone in duration") {
    const ChunkingConfig cfg{30.0, 8};
    int last = 0;
    for (double seconds = 1.0; seconds <= 600.0; seconds += 7.3) {
        const int tokens = chunk_audio(seconds, cfg).audio_tokens;
        CHECK(tokens >= last);
        last = tokens;
    }
}

TEST_CASE("chunk_audio rejects non-positive duration") {
    CHECK_THROWS_AS(chunk_audio(0.0, ChunkingConfig{}), std::invalid_argument);
    CHECK_THROWS_AS(chunk_audio(-5.0, ChunkingConfig{}), std::invalid_argument);
}

TEST_CASE("locate_audio_window direct reads") {
    const SequenceLayout a{{{Modality::Text, 10}, {Modality::Audio, 88}, {Modality::Text, 20}}};
    CHECK(locate_audio_window(a).start == 10);
    CHECK(locate_audio_window(a).length == 88);

    const SequenceLayout b{{{Modality::Audio, 750}, {Modality::Text, 5}}};
    CHECK(locate_audio_window(b).start == 0);
    CHECK(locate_audio_window(b).length == 750);
}

TEST_CASE("adjacent audio chunks merge into one run") {
    const SequenceLayout layout{{{Modality::Text, 3},
                                 {Modality::Audio, 88},
                                 {Modality::Audio, 88},
                                 {Modality::Text, 7}}};
    const AudioWindow window = locate_audio_window(layout);
    CHECK(window.start == 3);
    CHECK(window.length == 176);
}

TEST_CASE("empty segments do not break contiguity") {
    const SequenceLayout layout{{{Modality::Audio, 4},
                                 {Modality::Text, 0},
                                 {Modality::Audio, 4},
                                 {Modality::Text, 2}}};
    const AudioWindow window = locate_audio_window(layout);
    CHECK(window.start == 0);
    CHECK(window.length == 8);
}

TEST_CASE("zero or disjoint audio runs are rejected") {
    const SequenceLayout none{{{Modality::Text, 10}}};
    CHECK_THROWS_AS(locate_audio_window(none), unsupported_layout_error);

    const SequenceLayout disjoint{{{Modality::Audio, 4},
                                   {Modality::Text, 2},
                                   {Modality::Audio, 4}}};
    CHECK_THROWS_AS(locate_audio_window(disjoint), unsupported_layout_error);
}

TEST_CASE("audio window bounds stay inside the sequence") {
    const SequenceLayout layout = make_layout(5, 12, 9);
    const AudioWindow window = locate_audio_window(layout);
    CHECK(window.start >= 0);
    CHECK(window.start + window.length <= layout.total_tokens());
    CHECK(layout.total_tokens() == 26);
}
