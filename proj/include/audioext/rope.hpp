#pragma once

#include <span>
#include <vector>

namespace audioext {

// Per-pair rotation frequencies of one RoPE head.
// Pair i couples dimensions (2i, 2i+1) and rotates at freqs[i] = base^(-2i/d),
// so pair 0 is always the highest frequency (freqs[0] == 1).
struct FrequencyTable {
    int head_dim = 0;
    double base = 10000.0;
    std::vector<double> freqs;

    int num_pairs() const { return head_dim / 2; }
};

// One rotation to apply to a query or key vector. Positions are real-valued:
// interpolated position ids are fractional by construction. The magnitude
// scales the rotated vector and is how attention temperature gets folded
// into the rotation (1/sqrt(t) per endpoint).
struct RotationSpec {
    double position = 0.0;
    double magnitude = 1.0;
};

FrequencyTable build_frequencies(int head_dim, double base = 10000.0);

// Rotates each pair (v[2i], v[2i+1]) by angle position * freqs[i], then
// scales the result by spec.magnitude.
std::vector<double> rotate(std::span<const double> vec, const RotationSpec& spec,
                           const FrequencyTable& table);

// <rotate(q, m), rotate(k, n)>. Equals <q, rotate(k, n - m)> up to float
// tolerance: the dot product depends only on the relative offset n - m.
double relative_dot(std::span<const double> q, std::span<const double> k, double m,
                    double n, const FrequencyTable& table);

}  // namespace audioext
