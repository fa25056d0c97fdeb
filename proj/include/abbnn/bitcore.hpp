#ifndef ABBNN_BITCORE_HPP
#define ABBNN_BITCORE_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "abbnn/tensor.hpp"

namespace abbnn {

// ---------------------------------------------------------------------------
// Bit-packed {-1,+1} tensors.
//
// Convention: +1 maps to bit 1, -1 to bit 0. The innermost axis is the packed
// row; each row starts word-aligned and occupies ceil(row_len/64) 64-bit
// words, LSB-first. Trailing padding bits in the last word of a row are
// always zero and are masked off before any popcount.
// ---------------------------------------------------------------------------
class BitTensor {
public:
    BitTensor() = default;
    explicit BitTensor(Shape shape);

    const Shape& shape() const { return shape_; }
    std::size_t row_len() const { return row_len_; }
    std::size_t rows() const { return rows_; }
    std::size_t words_per_row() const { return words_per_row_; }
    std::size_t pad_bits() const { return pad_bits_; }

    std::uint64_t* words() { return words_.data(); }
    const std::uint64_t* words() const { return words_.data(); }
    std::span<const std::uint64_t> row(std::size_t r) const {
        return {words_.data() + r * words_per_row_, words_per_row_};
    }
    std::span<std::uint64_t> row(std::size_t r) { return {words_.data() + r * words_per_row_, words_per_row_}; }

    bool get(std::size_t r, std::size_t i) const {
        return (words_[r * words_per_row_ + i / 64] >> (i % 64)) & 1ULL;
    }
    void set(std::size_t r, std::size_t i, bool b) {
        std::uint64_t& w = words_[r * words_per_row_ + i / 64];
        const std::uint64_t m = 1ULL << (i % 64);
        w = b ? (w | m) : (w & ~m);
    }

    // +1 for bit 1, -1 for bit 0.
    int sign_at(std::size_t r, std::size_t i) const { return get(r, i) ? 1 : -1; }

    bool padding_is_zero() const;
    void clear() { std::fill(words_.begin(), words_.end(), 0); }

private:
    Shape shape_;
    std::size_t row_len_ = 0;
    std::size_t rows_ = 0;
    std::size_t words_per_row_ = 0;
    std::size_t pad_bits_ = 0;
    std::vector<std::uint64_t> words_;
};

// sign(0) = +1 keeps binarization total and pack_signs deterministic.
BitTensor pack_signs(const FloatTensor& v);
FloatTensor unpack_signs(const BitTensor& b);

// +-1 dot product of two packed rows of logical length n:
//   2 * popcount(XNOR(a, b) masked to n bits) - n.
std::int64_t xnor_popcount_dot(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b, std::size_t n);

// Dot restricted to positions with mask bit 1; excluded positions contribute
// zero (used for zero-padded convolution borders). n_valid = popcount(mask).
std::int64_t xnor_popcount_dot_masked(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b,
                                      std::span<const std::uint64_t> mask, std::size_t nwords,
                                      std::int64_t n_valid);

// ---------------------------------------------------------------------------
// Signed 32-bit fixed point, Q(31-F).F. All arithmetic saturates; saturation
// events are counted through the out-parameter, never silent.
// ---------------------------------------------------------------------------
constexpr int kDefaultFracBits = 16;

inline std::int32_t sat_narrow32(std::int64_t v, std::uint64_t* sat) {
    if (v > INT32_MAX) {
        if (sat) ++*sat;
        return INT32_MAX;
    }
    if (v < INT32_MIN) {
        if (sat) ++*sat;
        return INT32_MIN;
    }
    return static_cast<std::int32_t>(v);
}

inline std::int32_t sat_add32(std::int32_t a, std::int32_t b, std::uint64_t* sat) {
    return sat_narrow32(static_cast<std::int64_t>(a) + b, sat);
}

// Arithmetic shift by k in [-31, 31]: k < 0 rounds toward -inf (hardware
// shifter behaviour), k > 0 saturates on overflow.
inline std::int32_t shift32(std::int32_t v, int k, std::uint64_t* sat) {
    if (k < -31 || k > 31) throw ContractError("shift32: exponent out of range");
    if (k == 0) return v;
    if (k < 0) return static_cast<std::int32_t>(v >> (-k)); // arithmetic on two's complement (C++20)
    return sat_narrow32(static_cast<std::int64_t>(v) << k, sat);
}

class FixedTensor {
public:
    FixedTensor() = default;
    FixedTensor(Shape shape, int frac_bits = kDefaultFracBits)
        : shape_(std::move(shape)), frac_bits_(frac_bits), data_(shape_numel(shape_), 0) {}
    FixedTensor(Shape shape, std::vector<std::int32_t> raw, int frac_bits = kDefaultFracBits)
        : shape_(std::move(shape)), frac_bits_(frac_bits), data_(std::move(raw)) {
        if (shape_numel(shape_) != data_.size()) throw ContractError("FixedTensor: shape/value count mismatch");
    }

    const Shape& shape() const { return shape_; }
    std::size_t numel() const { return data_.size(); }
    int frac_bits() const { return frac_bits_; }

    std::int32_t* data() { return data_.data(); }
    const std::int32_t* data() const { return data_.data(); }
    std::int32_t& operator[](std::size_t i) { return data_[i]; }
    std::int32_t operator[](std::size_t i) const { return data_[i]; }
    std::vector<std::int32_t>& raw() { return data_; }
    const std::vector<std::int32_t>& raw() const { return data_; }

    double to_double(std::size_t i) const { return static_cast<double>(data_[i]) * pow2d(-frac_bits_); }

private:
    Shape shape_;
    int frac_bits_ = kDefaultFracBits;
    std::vector<std::int32_t> data_;
};

// Nearest-even rounding onto the 2^-F grid; out-of-range values saturate and
// are counted.
std::int32_t fixed_from_double(double x, int frac_bits, std::uint64_t* sat);
FixedTensor fixed_from_float(const FloatTensor& x, int frac_bits, std::uint64_t* sat);
FloatTensor fixed_to_float(const FixedTensor& x);

// Elementwise 2^k via arithmetic shifts (see shift32).
FixedTensor shift_scale(const FixedTensor& x, int k, std::uint64_t* sat);

// Elementwise saturating add; shapes and formats must match.
FixedTensor fixed_add(const FixedTensor& x, const FixedTensor& y, std::uint64_t* sat);

} // namespace abbnn

#endif
