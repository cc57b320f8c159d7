#include "evomcts/idgen.hpp"

#include <chrono>
#include <memory>

namespace evomcts {

Clock wall_clock() {
    return [] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::system_clock::now().time_since_epoch())
            .count();
    };
}

Clock logical_clock(std::int64_t start) {
    auto counter = std::make_shared<std::int64_t>(start);
    return [counter] { return (*counter)++; };
}

UlidGenerator::UlidGenerator(std::uint64_t seed) : rng_(seed) {}

std::string UlidGenerator::next(std::int64_t timestamp_ms) {
    static constexpr char alphabet[] = "0123456789ABCDEFGHJKMNPQRSTVWXYZ";
    std::string out;
    out.reserve(26);
    // 10 chars of 48-bit timestamp, then 16 chars of 80 random bits.
    const auto ts = static_cast<std::uint64_t>(timestamp_ms) & 0xFFFFFFFFFFFFull;
    for (int i = 0; i < 10; ++i)
        out.push_back(alphabet[(ts >> (45 - 5 * i)) & 0x1F]);
    const std::uint64_t hi = rng_() & 0xFFFFFFFFFFull; // 40 bits
    const std::uint64_t lo = rng_() & 0xFFFFFFFFFFull;
    for (int i = 0; i < 8; ++i)
        out.push_back(alphabet[(hi >> (35 - 5 * i)) & 0x1F]);
    for (int i = 0; i < 8; ++i)
        out.push_back(alphabet[(lo >> (35 - 5 * i)) & 0x1F]);
    return out;
}

} // namespace evomcts
