#include "audioext/rope.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace audioext {

FrequencyTable build_frequencies(int head_dim, double base) {
    if (head_dim < 2 || head_dim % 2 != 0) {
        throw std::invalid_argument("build_frequencies: head_dim must be even and >= 2, got " +
                                    std::to_string(head_dim));
    }
    if (!(base > 1.0)) {
        throw std::invalid_argument("build_frequencies: base must be > 1, got " +
                                    std::to_string(base));
    }
    FrequencyTable table;
    table.head_dim = head_dim;
    table.base = base;
    table.freqs.resize(static_cast<std::size_t>(head_dim / 2));
    for (int i = 0; i < head_dim / 2; ++i) {
        table.freqs[static_cast<std::size_t>(i)] =
            std::pow(base, -2.0 * i / static_cast<double>(head_dim));
    }
    return table;
}

std::vector<double> rotate(std::span<const double> vec, const RotationSpec& spec,
                           const FrequencyTable& table) {
    if (static_cast<int>(vec.size()) != table.head_dim) {
        throw std::invalid_argument("rotate: vector length " + std::to_string(vec.size()) +
                                    " does not match head_dim " + std::to_string(table.head_dim));
    }
    if (!(spec.magnitude > 0.0)) {
        throw std::invalid_argument("rotate: magnitude must be positive");
    }
    std::vector<double> out(vec.size());
    for (int i = 0; i < table.num_pairs(); ++i) {
        const double angle = spec.position * table.freqs[static_cast<std::size_t>(i)];
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        const double x = vec[static_cast<std::size_t>(2 * i)];
        const double y = vec[static_cast<std::size_t>(2 * i + 1)];
        out[static_cast<std::size_t>(2 * i)] = spec.magnitude * (x * c - y * s);
        out[static_cast<std::size_t>(2 * i + 1)] = spec.magnitude * (x * s + y * c);
    }
    return out;
}

double relative_dot(std::span<const double> q, std::span<const double> k, double m, double n,
                    const FrequencyTable& table) {
    if (q.size() != k.size()) {
        throw std::invalid_argument("relative_dot: q and k must have equal length");
    }
    const std::vector<double> qm = rotate(q, RotationSpec{m, 1.0}, table);
    const std::vector<double> kn = rotate(k, RotationSpec{n, 1.0}, table);
    double acc = 0.0;
    for (std::size_t i = 0; i < qm.size(); ++i) {
        acc += qm[i] * kn[i];
    }
    return acc;
}

}  // namespace audioext
