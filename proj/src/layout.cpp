#include "audioext/layout.hpp"

#include <cmath>

namespace audioext {

int SequenceLayout::total_tokens() const {
    int total = 0;
    for (const Segment& seg : segments) {
        if (seg.token_count < 0) {
            throw std::invalid_argument("SequenceLayout: negative token_count");
        }
        total += seg.token_count;
    }
    return total;
}

ChunkCount chunk_audio(double duration_seconds, const ChunkingConfig& cfg) {
    if (!(duration_seconds > 0.0)) {
        throw std::invalid_argument("chunk_audio: duration must be positive");
    }
    if (!(cfg.chunk_seconds > 0.0)) {
        throw std::invalid_argument("chunk_audio: chunk_seconds must be positive");
    }
    if (cfg.tokens_per_chunk < 1) {
        throw std::invalid_argument("chunk_audio: tokens_per_chunk must be >= 1");
    }
    ChunkCount out;
    out.num_chunks = static_cast<int>(std::ceil(duration_seconds / cfg.chunk_seconds));
    out.audio_tokens = out.num_chunks * cfg.tokens_per_chunk;
    return out;
}

AudioWindow locate_audio_window(const SequenceLayout& layout) {
    // Empty segments carry no tokens and cannot break contiguity.
    int cursor = 0;
    int audio_start = -1;
    int audio_len = 0;
    bool run_closed = false;
    for (const Segment& seg : layout.segments) {
        if (seg.token_count < 0) {
            throw std::invalid_argument("locate_audio_window: negative token_count");
        }
        if (seg.token_count == 0) {
            continue;
        }
        if (seg.modality == Modality::Audio) {
            if (run_closed) {
                throw unsupported_layout_error(
                    "locate_audio_window: multiple disjoint audio runs");
            }
            if (audio_start < 0) {
                audio_start = cursor;
            }
            audio_len += seg.token_count;
        } else if (audio_start >= 0) {
            run_closed = true;
        }
        cursor += seg.token_count;
    }
    if (audio_start < 0) {
        throw unsupported_layout_error("locate_audio_window: layout has no audio run");
    }
    return AudioWindow{audio_start, audio_len};
}

SequenceLayout make_layout(int leading_text, int audio_tokens, int trailing_text) {
    SequenceLayout layout;
    if (leading_text > 0) {
        layout.segments.push_back({Modality::Text, leading_text});
    }
    layout.segments.push_back({Modality::Audio, audio_tokens});
    if (trailing_text > 0) {
        layout.segments.push_back({Modality::Text, trailing_text});
    }
    return layout;
}

}  // namespace audioext
