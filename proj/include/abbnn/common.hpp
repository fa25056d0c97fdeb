#ifndef ABBNN_COMMON_HPP
#define ABBNN_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace abbnn {

// Error taxonomy. The CLI maps these onto stable exit codes:
//   ConfigError -> 2, DataError -> 3, NumericalError -> 4, VerifyError -> 5.
// FormatError covers malformed model/checkpoint/dataset containers and is
// reported as a data error at the CLI boundary.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error(msg) {}
};

class FormatError : public Error {
public:
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& msg) : Error(msg) {}
};

class ContractError : public Error {
public:
    explicit ContractError(const std::string& msg) : Error(msg) {}
};

class VerifyError : public Error {
public:
    explicit VerifyError(const std::string& msg) : Error(msg) {}
};

// Ties round to even so repeated quantization carries no bias.
inline double round_half_even(double x) {
    // nearbyint honours the default FE_TONEAREST mode, which is
    // round-half-to-even on every platform we target.
    return std::nearbyint(x);
}

inline int round_half_even_i(double x) { return static_cast<int>(round_half_even(x)); }

// Exact powers of two, usable for negative exponents.
inline double pow2d(int e) { return std::ldexp(1.0, e); }

// ---------------------------------------------------------------------------
// Deterministic RNG helpers.
//
// All randomness in the project flows through these so that runs are
// bit-reproducible across stdlib implementations: std::mt19937_64 output is
// specified by the standard, and we avoid std::*_distribution (whose
// algorithms are implementation-defined).
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Mixes a base seed with stream identifiers to derive independent substreams
// (per layer, per epoch, ...) from one user-facing seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    return splitmix64(splitmix64(seed ^ 0xabb10000ULL) ^ splitmix64(a) ^ splitmix64(splitmix64(b)));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(splitmix64(seed ^ 0x5851f42d4c957f2dULL)) {
        // Warm-up keeps low-entropy seeds from producing correlated leads.
        for (int i = 0; i < 4; ++i) next_u64();
    }

    std::uint64_t next_u64() {
        state_ = splitmix64(state_ + 0x9e3779b97f4a7c15ULL);
        return state_;
    }

    // Uniform in [0, 1) with 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). Rejection sampling keeps the draw unbiased.
    std::uint64_t next_below(std::uint64_t n) {
        if (n == 0) throw ContractError("Rng::next_below: n must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller; self-contained so results do not depend
    // on the stdlib's normal_distribution algorithm.
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = next_double();
        } while (u1 <= 0.0);
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            const std::size_t j = static_cast<std::size_t>(next_below(i + 1));
            std::swap(v[i], v[j]);
        }
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// CRC32 (IEEE 802.3 polynomial, reflected form 0xEDB88320), as used by the
// ABNN and ABCK containers. crc32("123456789") == 0xCBF43926.
std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed = 0);

} // namespace abbnn

#endif
