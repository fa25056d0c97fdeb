#include "abbnn/bitcore.hpp"

#include <bit>
#include <cmath>

namespace abbnn {

BitTensor::BitTensor(Shape shape) : shape_(std::move(shape)) {
    if (shape_.empty()) throw ContractError("BitTensor: empty shape");
    row_len_ = shape_.back();
    rows_ = 1;
    for (std::size_t i = 0; i + 1 < shape_.size(); ++i) rows_ *= shape_[i];
    words_per_row_ = (row_len_ + 63) / 64;
    if (row_len_ == 0) words_per_row_ = 0;
    pad_bits_ = words_per_row_ * 64 - row_len_;
    words_.assign(rows_ * words_per_row_, 0);
}

bool BitTensor::padding_is_zero() const {
    if (pad_bits_ == 0 || words_per_row_ == 0) return true;
    const std::uint64_t tail_mask = ~0ULL >> pad_bits_; // valid bits of the last word
    for (std::size_t r = 0; r < rows_; ++r) {
        const std::uint64_t last = words_[r * words_per_row_ + words_per_row_ - 1];
        if (last & ~tail_mask) return false;
    }
    return true;
}

BitTensor pack_signs(const FloatTensor& v) {
    BitTensor b(v.shape());
    const std::size_t n = b.row_len();
    for (std::size_t r = 0; r < b.rows(); ++r) {
        const double* src = v.data() + r * n;
        auto row = b.row(r);
        for (std::size_t i = 0; i < n; ++i) {
            if (src[i] >= 0.0) row[i / 64] |= 1ULL << (i % 64);
        }
    }
    return b;
}

FloatTensor unpack_signs(const BitTensor& b) {
    FloatTensor v(b.shape());
    const std::size_t n = b.row_len();
    for (std::size_t r = 0; r < b.rows(); ++r) {
        double* dst = v.data() + r * n;
        for (std::size_t i = 0; i < n; ++i) dst[i] = b.get(r, i) ? 1.0 : -1.0;
    }
    return v;
}

std::int64_t xnor_popcount_dot(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b, std::size_t n) {
    const std::size_t nwords = (n + 63) / 64;
    if (a.size() < nwords || b.size() < nwords)
        throw ContractError("xnor_popcount_dot: row shorter than logical length");
    std::int64_t pop = 0;
    for (std::size_t w = 0; w < nwords; ++w) {
        std::uint64_t x = ~(a[w] ^ b[w]); // XNOR: 1 where signs agree
        if (w == nwords - 1 && (n % 64) != 0) x &= ~0ULL >> (64 - n % 64);
        pop += std::popcount(x);
    }
    return 2 * pop - static_cast<std::int64_t>(n);
}

std::int64_t xnor_popcount_dot_masked(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b,
                                      std::span<const std::uint64_t> mask, std::size_t nwords,
                                      std::int64_t n_valid) {
    std::int64_t pop = 0;
    for (std::size_t w = 0; w < nwords; ++w) pop += std::popcount(~(a[w] ^ b[w]) & mask[w]);
    return 2 * pop - n_valid;
}

std::int32_t fixed_from_double(double x, int frac_bits, std::uint64_t* sat) {
    const double scaled = round_half_even(std::ldexp(x, frac_bits));
    if (scaled > static_cast<double>(INT32_MAX)) {
        if (sat) ++*sat;
        return INT32_MAX;
    }
    if (scaled < static_cast<double>(INT32_MIN)) {
        if (sat) ++*sat;
        return INT32_MIN;
    }
    return static_cast<std::int32_t>(scaled);
}

FixedTensor fixed_from_float(const FloatTensor& x, int frac_bits, std::uint64_t* sat) {
    FixedTensor t(x.shape(), frac_bits);
    for (std::size_t i = 0; i < x.numel(); ++i) t[i] = fixed_from_double(x[i], frac_bits, sat);
    return t;
}

FloatTensor fixed_to_float(const FixedTensor& x) {
    FloatTensor t(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) t[i] = x.to_double(i);
    return t;
}

FixedTensor shift_scale(const FixedTensor& x, int k, std::uint64_t* sat) {
    if (k < -31 || k > 31) throw ContractError("shift_scale: exponent out of range [-31,31]");
    FixedTensor out(x.shape(), x.frac_bits());
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = shift32(x[i], k, sat);
    return out;
}

FixedTensor fixed_add(const FixedTensor& x, const FixedTensor& y, std::uint64_t* sat) {
    if (x.shape() != y.shape())
        throw ContractError("fixed_add: shape mismatch " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
    if (x.frac_bits() != y.frac_bits()) throw ContractError("fixed_add: frac_bits mismatch");
    FixedTensor out(x.shape(), x.frac_bits());
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = sat_add32(x[i], y[i], sat);
    return out;
}

} // namespace abbnn
