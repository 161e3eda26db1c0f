#include "mom/rng.hpp"

#include "mom/hash.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mom
{

std::uint64_t Rng::mix(std::uint64_t z)
{
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Rng Rng::split(std::string_view name) const
{
    Rng child = *this;
    child.key_ = mix(key_ ^ mix(fnv1a64(name)));
    child.counter_ = 0;
    return child;
}

Rng Rng::split(std::uint64_t index) const
{
    Rng child = *this;
    child.key_ = mix(key_ + mix(index + 0x632be59bd9b4e019ULL));
    child.counter_ = 0;
    return child;
}

std::uint64_t Rng::below(std::uint64_t n)
{
    if (n == 0)
        throw std::invalid_argument("Rng::below(0)");
    // Rejection sampling removes modulo bias.
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t x;
    do
    {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

double Rng::normal()
{
    double u1 = uniform();
    while (u1 <= 0.0)
        u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::gumbel()
{
    double u = uniform();
    while (u <= 0.0)
        u = uniform();
    return -std::log(-std::log(u));
}

std::size_t Rng::categorical(const std::vector<double>& weights)
{
    double total = 0.0;
    for (double w : weights)
        total += w;
    if (!(total > 0.0))
        throw std::invalid_argument("categorical: weights sum to zero");
    double x = uniform() * total;
    for (std::size_t i = 0; i < weights.size(); ++i)
    {
        x -= weights[i];
        if (x < 0.0)
            return i;
    }
    // Rounding can leave x marginally non-negative; fall back to the last positive weight.
    for (std::size_t i = weights.size(); i > 0; --i)
        if (weights[i - 1] > 0.0)
            return i - 1;
    return 0;
}

} // namespace mom
