#include "mom/hash.hpp"

namespace mom
{

std::string hex64(std::uint64_t v)
{
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4)
        out[i] = kDigits[v & 15];
    return out;
}

} // namespace mom
