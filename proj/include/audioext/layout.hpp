#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace audioext {

enum class Modality { Text, Audio };

struct Segment {
    Modality modality = Modality::Text;
    int token_count = 0;
};

// Token sequence modeled as modality-tagged segments. Valid layouts contain
// exactly one contiguous audio run; the run may be split across adjacent
// Audio segments (one per 30s chunk).
struct SequenceLayout {
    std::vector<Segment> segments;

    int total_tokens() const;
};

// Start index p and total length of the audio run.
struct AudioWindow {
    int start = 0;
    int length = 0;
};

struct ChunkingConfig {
    double chunk_seconds = 30.0;
    int tokens_per_chunk = 88;
};

struct ChunkCount {
    int num_chunks = 0;
    int audio_tokens = 0;
};

// Thrown when a layout has zero or multiple disjoint audio runs.
class unsupported_layout_error : public std::invalid_argument {
  public:
    explicit unsupported_layout_error(const std::string& msg) : std::invalid_argument(msg) {}
};

// Non-overlapping chunking; a partial final chunk is still encoded to a full
// chunk's worth of tokens.
ChunkCount chunk_audio(double duration_seconds, const ChunkingConfig& cfg);

AudioWindow locate_audio_window(const SequenceLayout& layout);

// Convenience builders for the common shapes.
SequenceLayout make_layout(int leading_text, int audio_tokens, int trailing_text);

}  // namespace audioext
