#include "avalon/rng.hpp"

#include <cmath>
#include <numbers>

namespace avalon {

std::uint32_t Rng::uniform_below(std::uint32_t bound) {
    std::uint64_t product = static_cast<std::uint64_t>(static_cast<std::uint32_t>(next_u64() >> 32)) * bound;
    auto low = static_cast<std::uint32_t>(product);
    if (low < bound) {
        const std::uint32_t threshold = (0u - bound) % bound;
        while (low < threshold) {
            product = static_cast<std::uint64_t>(static_cast<std::uint32_t>(next_u64() >> 32)) * bound;
            low = static_cast<std::uint32_t>(product);
        }
    }
    return static_cast<std::uint32_t>(product >> 32);
}

double Rng::normal() {
    // 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
    std::uint64_t x = base ^ (tag * 0xd1b54a32d192ed03ULL);
    Rng::splitmix64(x);
    return Rng::splitmix64(x);
}

}  // namespace avalon
