#pragma once

#include <cstdint>

namespace alp {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Counter-based stream: the n-th draw depends only on (key, n), so any pixel
// can be replayed without touching its neighbours.
class CounterRng {
public:
    CounterRng(uint64_t seed, uint64_t stream) : key_(splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL))) {}

    uint64_t next_u64() { return splitmix64(key_ + 0xd1b54a32d192ed03ULL * ++counter_); }
    // Uniform in [0, 1) with 53 random bits.
    double next() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

private:
    uint64_t key_;
    uint64_t counter_ = 0;
};

// Derives an independent seed for a sub-task (step index, start index...).
inline uint64_t derive_seed(uint64_t seed, uint64_t tag) { return splitmix64(seed * 0x9e3779b97f4a7c15ULL + splitmix64(tag)); }

} // namespace alp
