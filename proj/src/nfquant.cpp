// Copyright (c) 2026, The qadapt Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "qadapt/nfquant.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>

#include <boost/math/distributions/normal.hpp>
#include <fmt/format.h>

#include "qadapt/error.hpp"

namespace qadapt {

namespace {

std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> out(n);
    for (int k = 0; k < n; ++k) out[k] = (k == n - 1) ? b : a + (b - a) * k / (n - 1);
    return out;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

double element(const Matrix& w, std::int64_t k) {
    return w(k / w.cols(), k % w.cols());
}

class BitWriter {
public:
    void put(std::uint64_t value, int width) {
        for (int i = 0; i < width; ++i) {
            if (bit_ % 8 == 0) bytes_.push_back(0);
            if ((value >> i) & 1u) bytes_.back() |= static_cast<std::uint8_t>(1u << (bit_ % 8));
            ++bit_;
            ++payload_;
        }
    }
    void pad() { bit_ = ceil_div(bit_, 8) * 8; }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }
    std::int64_t payload() const { return payload_; }

private:
    std::vector<std::uint8_t> bytes_;
    std::int64_t bit_ = 0;
    std::int64_t payload_ = 0;
};

class BitReader {
public:
    explicit BitReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
    std::uint64_t get(int width) {
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i, ++bit_) {
            const auto byte = static_cast<std::size_t>(bit_ / 8);
            if (byte >= bytes_.size()) throw InvalidArgument("serialized tensor truncated");
            if ((bytes_[byte] >> (bit_ % 8)) & 1u) v |= (std::uint64_t{1} << i);
        }
        return v;
    }
    void pad() { bit_ = ceil_div(bit_, 8) * 8; }

private:
    std::span<const std::uint8_t> bytes_;
    std::int64_t bit_ = 0;
};

void check_finite(const Matrix& w, const char* what) {
    if (!w.allFinite()) throw InvalidArgument(fmt::format("{}: input contains non-finite values", what));
}

} // namespace

// --- codebook ---------------------------------------------------------------

NfCodebook nf_codebook(int bits) {
    if (bits != 2 && bits != 3 && bits != 4 && bits != 8)
        throw InvalidArgument(fmt::format("nf_codebook: unsupported bit count {}", bits));
    namespace bm = boost::math;
    const bm::normal_distribution<double> normal;

    const int half = 1 << (bits - 1);
    const double levels_total = static_cast<double>(1 << bits);
    // Tail probability of the outermost quantile.
    const double tail = 0.5 * (1.0 / (2.0 * (levels_total - 1.0)) + 1.0 / (2.0 * levels_total));

    std::vector<double> levels;
    levels.reserve(1u << bits);
    for (double p : linspace(tail, 0.5, half)) levels.push_back(p == 0.5 ? 0.0 : bm::quantile(normal, p));
    // Upper half via the complement so the endpoints are exact negatives.
    const auto upper = linspace(0.5, tail, half + 1);
    for (std::size_t k = 1; k < upper.size(); ++k) levels.push_back(bm::quantile(bm::complement(normal, upper[k])));

    const double scale = levels.back();
    for (double& v : levels) v /= scale;
    return NfCodebook{bits, std::move(levels)};
}

const NfCodebook& codebook_for(int bits) {
    static const std::array<NfCodebook, 4> books{nf_codebook(2), nf_codebook(3), nf_codebook(4), nf_codebook(8)};
    switch (bits) {
        case 2: return books[0];
        case 3: return books[1];
        case 4: return books[2];
        case 8: return books[3];
        default: throw InvalidArgument(fmt::format("no codebook for {} bits", bits));
    }
}

int NfCodebook::zero_index() const {
    return static_cast<int>(std::find(levels.begin(), levels.end(), 0.0) - levels.begin());
}

int NfCodebook::nearest(double x) const {
    auto it = std::lower_bound(levels.begin(), levels.end(), x);
    if (it == levels.begin()) return 0;
    if (it == levels.end()) return static_cast<int>(levels.size()) - 1;
    const auto hi = static_cast<int>(it - levels.begin());
    const int lo = hi - 1;
    return (x - levels[lo] <= levels[hi] - x) ? lo : hi;
}

double NfCodebook::max_gap() const {
    double g = 0.0;
    for (std::size_t k = 1; k < levels.size(); ++k) g = std::max(g, levels[k] - levels[k - 1]);
    return g;
}

// --- scalar formats ---------------------------------------------------------

std::uint16_t encode_fp16(double x) {
    const std::uint16_t sign = std::signbit(x) ? 0x8000 : 0;
    const double a = std::fabs(x);
    if (a == 0.0) return sign;
    if (a >= 65520.0) return sign | 0x7BFF;  // saturate
    if (a < 0x1p-14) {
        // subnormal grid 2^-24; a carry into 1024 yields the smallest normal
        return sign | static_cast<std::uint16_t>(std::nearbyint(a * 0x1p24));
    }
    int e2 = 0;
    std::frexp(a, &e2);
    int exponent = e2 - 1;
    auto mant = static_cast<int>(std::nearbyint((std::ldexp(a, -exponent) - 1.0) * 1024.0));
    if (mant == 1024) {
        mant = 0;
        ++exponent;
    }
    if (exponent > 15) return sign | 0x7BFF;
    return sign | static_cast<std::uint16_t>(((exponent + 15) << 10) | mant);
}

double decode_fp16(std::uint16_t h) {
    const double sign = (h & 0x8000) ? -1.0 : 1.0;
    const int exponent = (h >> 10) & 0x1F;
    const int mant = h & 0x3FF;
    if (exponent == 0) return sign * std::ldexp(static_cast<double>(mant), -24);
    if (exponent == 31) return mant ? std::nan("") : sign * HUGE_VAL;
    return sign * std::ldexp(1.0 + mant / 1024.0, exponent - 15);
}

// Rounds through fp32 first; the double->fp32->bf16 path is the one real
// checkpoints take.
std::uint16_t encode_bf16(double x) {
    auto u = std::bit_cast<std::uint32_t>(static_cast<float>(x));
    u += 0x7FFFu + ((u >> 16) & 1u);
    return static_cast<std::uint16_t>(u >> 16);
}

double decode_bf16(std::uint16_t h) {
    return static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(h) << 16));
}

double round_to_format(double x, AbsmaxFormat f) {
    switch (f) {
        case AbsmaxFormat::bf16: return decode_bf16(encode_bf16(x));
        case AbsmaxFormat::fp16: return decode_fp16(encode_fp16(x));
        case AbsmaxFormat::fp32: return static_cast<double>(static_cast<float>(x));
    }
    return x;
}

// --- block quantization -----------------------------------------------------

std::int64_t storage_bits(const LayerQuantConfig& cfg, std::int64_t rows, std::int64_t cols) {
    validate(cfg);
    if (rows <= 0 || cols <= 0) throw InvalidArgument("storage_bits: dimensions must be positive");
    const std::int64_t count = rows * cols;
    const std::int64_t blocks = ceil_div(count, cfg.B0);
    const std::int64_t groups = ceil_div(blocks, cfg.B1);
    return count * cfg.b0 + blocks * cfg.b1 + groups * format_bits(cfg.b2);
}

double effective_bits(const LayerQuantConfig& cfg, std::int64_t rows, std::int64_t cols) {
    return static_cast<double>(storage_bits(cfg, rows, cols)) / static_cast<double>(rows * cols);
}

double QuantizedTensor::block_absmax(std::int64_t block) const {
    const int top = (1 << cfg.b1) - 1;
    return absmax2[block / cfg.B1] * absmax1_codes[block] / top;
}

QuantizedTensor quantize_layer(const Matrix& w, const LayerQuantConfig& cfg) {
    validate(cfg);
    if (w.size() == 0) throw InvalidArgument("quantize_layer: empty matrix");
    check_finite(w, "quantize_layer");

    const NfCodebook& book = codebook_for(cfg.b0);
    const std::uint8_t zero_code = static_cast<std::uint8_t>(book.zero_index());
    const std::int64_t count = w.size();
    const std::int64_t blocks = ceil_div(count, cfg.B0);
    const std::int64_t groups = ceil_div(blocks, cfg.B1);
    const int top = (1 << cfg.b1) - 1;

    QuantizedTensor qt;
    qt.rows = w.rows();
    qt.cols = w.cols();
    qt.cfg = cfg;
    qt.codes.assign(count, zero_code);
    qt.absmax1_codes.assign(blocks, 0);
    qt.absmax2.assign(groups, 0.0);

    std::vector<double> absmax(blocks, 0.0);
    for (std::int64_t k = 0; k < count; ++k) {
        auto& a = absmax[k / cfg.B0];
        a = std::max(a, std::fabs(element(w, k)));
    }

    // Second level: group absmax stored at b2 precision, block absmax coded on
    // a uniform b1-bit grid over [0, 1] relative to the exact group absmax.
    for (std::int64_t g = 0; g < groups; ++g) {
        const std::int64_t first = g * cfg.B1;
        const std::int64_t last = std::min(blocks, first + cfg.B1);
        double gmax = 0.0;
        for (std::int64_t b = first; b < last; ++b) gmax = std::max(gmax, absmax[b]);
        const double stored = round_to_format(gmax, cfg.b2);
        qt.absmax2[g] = stored;
        if (gmax == 0.0 || stored == 0.0) continue;
        for (std::int64_t b = first; b < last; ++b) {
            const double code = std::nearbyint(absmax[b] / gmax * top);
            qt.absmax1_codes[b] = static_cast<std::uint8_t>(std::clamp(code, 0.0, static_cast<double>(top)));
        }
    }

    // First level: weights normalized by the exact block absmax. Blocks whose
    // reconstructed absmax is zero keep the zero code throughout.
    for (std::int64_t k = 0; k < count; ++k) {
        const std::int64_t b = k / cfg.B0;
        if (absmax[b] == 0.0 || qt.absmax1_codes[b] == 0) continue;
        qt.codes[k] = static_cast<std::uint8_t>(book.nearest(element(w, k) / absmax[b]));
    }

    qt.storage_bits_total = storage_bits(cfg, qt.rows, qt.cols);
    return qt;
}

Matrix dequantize(const QuantizedTensor& qt) {
    const NfCodebook& book = codebook_for(qt.cfg.b0);
    Matrix out(qt.rows, qt.cols);
    const auto count = static_cast<std::int64_t>(qt.codes.size());
    for (std::int64_t k = 0; k < count; ++k) {
        out(k / qt.cols, k % qt.cols) = book.levels[qt.codes[k]] * qt.block_absmax(k / qt.cfg.B0);
    }
    return out;
}

Matrix rtn_quantize(const Matrix& w, int bits) {
    if (bits < 2) throw InvalidArgument(fmt::format("rtn_quantize: bits must be >= 2 (got {})", bits));
    check_finite(w, "rtn_quantize");
    if (w.size() == 0) return w;
    const double qmax = std::ldexp(1.0, bits - 1) - 1.0;
    const double scale = w.cwiseAbs().maxCoeff() / qmax;
    if (scale == 0.0) return Matrix::Zero(w.rows(), w.cols());
    return w.unaryExpr([&](double v) { return scale * std::clamp(std::round(v / scale), -qmax - 1.0, qmax); });
}

// --- serialization ----------------------------------------------------------

SerializedTensor serialize(const QuantizedTensor& qt) {
    BitWriter out;
    for (auto c : qt.codes) out.put(c, qt.cfg.b0);
    out.pad();
    for (auto c : qt.absmax1_codes) out.put(c, qt.cfg.b1);
    out.pad();
    for (double v : qt.absmax2) {
        switch (qt.cfg.b2) {
            case AbsmaxFormat::bf16: out.put(encode_bf16(v), 16); break;
            case AbsmaxFormat::fp16: out.put(encode_fp16(v), 16); break;
            case AbsmaxFormat::fp32: out.put(std::bit_cast<std::uint32_t>(static_cast<float>(v)), 32); break;
        }
    }
    out.pad();
    SerializedTensor s;
    s.payload_bits = out.payload();
    s.bytes = out.take();
    return s;
}

QuantizedTensor deserialize(std::span<const std::uint8_t> bytes, const LayerQuantConfig& cfg,
                            Eigen::Index rows, Eigen::Index cols) {
    validate(cfg);
    if (rows <= 0 || cols <= 0) throw InvalidArgument("deserialize: dimensions must be positive");
    QuantizedTensor qt;
    qt.rows = rows;
    qt.cols = cols;
    qt.cfg = cfg;
    const std::int64_t count = rows * cols;
    const std::int64_t blocks = ceil_div(count, cfg.B0);
    const std::int64_t groups = ceil_div(blocks, cfg.B1);
    BitReader in(bytes);
    qt.codes.resize(count);
    for (auto& c : qt.codes) c = static_cast<std::uint8_t>(in.get(cfg.b0));
    in.pad();
    qt.absmax1_codes.resize(blocks);
    for (auto& c : qt.absmax1_codes) c = static_cast<std::uint8_t>(in.get(cfg.b1));
    in.pad();
    qt.absmax2.resize(groups);
    for (auto& v : qt.absmax2) {
        switch (cfg.b2) {
            case AbsmaxFormat::bf16: v = decode_bf16(static_cast<std::uint16_t>(in.get(16))); break;
            case AbsmaxFormat::fp16: v = decode_fp16(static_cast<std::uint16_t>(in.get(16))); break;
            case AbsmaxFormat::fp32:
                v = std::bit_cast<float>(static_cast<std::uint32_t>(in.get(32)));
                break;
        }
    }
    qt.storage_bits_total = storage_bits(cfg, rows, cols);
    return qt;
}

} // namespace qadapt
