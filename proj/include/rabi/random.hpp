#pragma once

// Counter-based random numbers (Philox4x32-10). A generator is addressed by
// (seed, stream); every stream is an independent sequence, so Monte Carlo
// work can be split across threads without changing results.

#include <array>
#include <cstdint>
#include <limits>

namespace rabi {

class Philox {
public:
    using result_type = std::uint64_t;
    using Block = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    Philox(std::uint64_t seed, std::uint64_t stream);

    /// Raw Philox4x32-10 bijection, exposed for known-answer tests.
    static Block bijection(Block counter, Key key);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
    result_type operator()();

    /// Uniform on the open interval (0, 1).
    double uniform();
    /// Standard normal (Box-Muller on two uniforms).
    double normal();

private:
    Key key_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    Block buffer_{};
    int used_ = 4;
};

/// Stream identifier for a per-item purpose, e.g. (pulse index, purpose).
constexpr std::uint64_t substream(std::uint64_t item, std::uint64_t purpose) {
    return item * 8 + purpose;
}

}  // namespace rabi
