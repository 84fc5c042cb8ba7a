#pragma once

// Shared error types, deterministic RNG plumbing, and small utilities used
// across the library.

#include <cstdint>
#include <stdexcept>
#include <string>

namespace loadseg {

inline constexpr const char* kVersionTag = "loadseg-0.1.0";

// Caller broke a documented precondition or invariant.
class ContractViolation : public std::logic_error {
public:
    explicit ContractViolation(const std::string& msg) : std::logic_error(msg) {}
};

// NaN/Inf or other numeric breakdown at runtime.
class NumericFailure : public std::runtime_error {
public:
    explicit NumericFailure(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// splitmix64 finalizer; the stated 64-bit mixing function for seed derivation.
inline uint64_t mix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Sub-seed for an independent stream: mixes (master, purpose, index) so that
// streams for different purposes or indices never alias.
inline uint64_t derive_seed(uint64_t master, uint64_t purpose, uint64_t index = 0) {
    return mix64(mix64(mix64(master) ^ purpose) ^ index);
}

// Purpose tags for derive_seed. Values are arbitrary but fixed forever.
namespace seed_purpose {
inline constexpr uint64_t kDatasetSample = 0x01;
inline constexpr uint64_t kSplit = 0x02;
inline constexpr uint64_t kFlip = 0x03;
inline constexpr uint64_t kSegmentorInit = 0x04;
inline constexpr uint64_t kDiscriminatorInit = 0x05;
inline constexpr uint64_t kStage1Batch = 0x06;
inline constexpr uint64_t kAdversarialBatch = 0x07;
inline constexpr uint64_t kDiscriminatorBatch = 0x08;
inline constexpr uint64_t kGradCheck = 0x09;
}  // namespace seed_purpose

// Small deterministic generator (xorshift128+ style core over splitmix-seeded
// state). Portable across platforms, unlike std:: distributions.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        s0_ = mix64(seed);
        s1_ = mix64(s0_ ^ 0xDEADBEEFCAFEF00Dull);
        if (s0_ == 0 && s1_ == 0) s1_ = 1;
    }

    uint64_t next_u64() {
        uint64_t x = s0_;
        const uint64_t y = s1_;
        s0_ = y;
        x ^= x << 23;
        s1_ = x ^ y ^ (x >> 17) ^ (y >> 26);
        return s1_ + y;
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [0, n). n must be positive.
    uint64_t below(uint64_t n) {
        // Rejection sampling keeps the draw unbiased.
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return v % n;
    }

    int range_int(int lo, int hi_inclusive) {
        return lo + static_cast<int>(below(static_cast<uint64_t>(hi_inclusive - lo + 1)));
    }

    bool coin() { return (next_u64() >> 63) != 0; }

private:
    uint64_t s0_, s1_;
};

}  // namespace loadseg
