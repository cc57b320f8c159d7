#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>

namespace evomcts {

// Millisecond timestamps. The logical clock ticks once per call so scripted
// runs produce identical ids and timestamps on every execution.
using Clock = std::function<std::int64_t()>;

Clock wall_clock();
Clock logical_clock(std::int64_t start = 0);

// ULID-style tokens: 26 chars of Crockford base32 over a 48-bit timestamp
// and 80 random bits. Content-independent, sortable by creation time, and
// stable references for Modify/Merge across revisions.
class UlidGenerator {
public:
    explicit UlidGenerator(std::uint64_t seed = std::random_device{}());

    std::string next(std::int64_t timestamp_ms);

private:
    std::mt19937_64 rng_;
};

} // namespace evomcts
