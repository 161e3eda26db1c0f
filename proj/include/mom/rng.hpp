#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace mom
{

/// Counter-based generator: output i of a stream is a bijective mix of (key, i). Child
/// streams are derived by name or index, so any component can be replayed in isolation.
/// All distributions are implemented here; nothing depends on the standard library's
/// implementation-defined distributions.
class Rng
{
public:
    static constexpr std::uint64_t kDefaultSeed = 960;

    explicit Rng(std::uint64_t seed = kDefaultSeed) : key_(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}

    Rng split(std::string_view name) const;
    Rng split(std::uint64_t index) const;

    std::uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }
    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    /// Uniform integer in [0, n); n > 0.
    std::uint64_t below(std::uint64_t n);
    double normal();
    /// Standard Gumbel(0, 1) sample.
    double gumbel();
    /// Index drawn with probability proportional to `weights` (non-negative, not all zero).
    std::size_t categorical(const std::vector<double>& weights);

    template <typename T>
    void shuffle(std::vector<T>& v)
    {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[below(i)]);
    }

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

    // UniformRandomBitGenerator
    using result_type = std::uint64_t;
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }
    result_type operator()() { return next_u64(); }

    static std::uint64_t mix(std::uint64_t z);

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace mom
