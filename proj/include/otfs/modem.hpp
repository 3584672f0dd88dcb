#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "fft.hpp"
#include "types.hpp"

namespace otfs {

enum class ConstellationKind { QPSK, QAM16 };

/// Unit-energy Gray-labelled constellation. Point a carries the label whose
/// bits, most significant first, are the binary digits of a.
///
/// QPSK: bits (b0 b1) -> ((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2); 00 -> (1 + j)/sqrt(2).
/// 16QAM: (b0 b1) set the in-phase level and (b2 b3) the quadrature level,
/// each via 00 -> +1, 01 -> +3, 10 -> -1, 11 -> -3, scaled by 1/sqrt(10).
class Constellation {
public:
    explicit Constellation(ConstellationKind kind = ConstellationKind::QPSK) : kind_(kind) {
        if (kind == ConstellationKind::QPSK) {
            bits_ = 2;
            const double s = 1.0 / std::sqrt(2.0);
            for (int a = 0; a < 4; ++a)
                points_.emplace_back(s * (1 - 2 * ((a >> 1) & 1)), s * (1 - 2 * (a & 1)));
        } else {
            bits_ = 4;
            const double s = 1.0 / std::sqrt(10.0);
            auto level = [](int hi, int lo) { return (1 - 2 * hi) * (2 - (1 - 2 * lo)); };
            for (int a = 0; a < 16; ++a) {
                const int i_lvl = level((a >> 3) & 1, (a >> 2) & 1);
                const int q_lvl = level((a >> 1) & 1, a & 1);
                points_.emplace_back(s * i_lvl, s * q_lvl);
            }
        }
    }

    static Constellation from_name(std::string_view name) {
        if (name == "QPSK" || name == "qpsk") return Constellation(ConstellationKind::QPSK);
        if (name == "16QAM" || name == "16qam" || name == "QAM16")
            return Constellation(ConstellationKind::QAM16);
        throw InvalidArgument("constellation", "unknown constellation '" + std::string(name) + "'");
    }

    ConstellationKind kind() const { return kind_; }
    std::string name() const { return kind_ == ConstellationKind::QPSK ? "QPSK" : "16QAM"; }
    int size() const { return static_cast<int>(points_.size()); }
    int bits_per_symbol() const { return bits_; }
    const CVec& points() const { return points_; }
    const Complex& point(int a) const { return points_[static_cast<std::size_t>(a)]; }

    /// Bit q (0 = most significant) of point a's label.
    int label_bit(int a, int q) const { return (a >> (bits_ - 1 - q)) & 1; }

private:
    ConstellationKind kind_;
    int bits_ = 2;
    CVec points_;
};

inline CVec map_bits(const Bits& bits, const Constellation& c) {
    const int q = c.bits_per_symbol();
    if (bits.size() % static_cast<std::size_t>(q) != 0)
        throw InvalidArgument("bits", "length must be a multiple of bits per symbol");
    CVec x(bits.size() / static_cast<std::size_t>(q));
    for (std::size_t j = 0; j < x.size(); ++j) {
        int a = 0;
        for (int b = 0; b < q; ++b) a = (a << 1) | (bits[j * q + b] & 1);
        x[j] = c.point(a);
    }
    return x;
}

/// Nearest constellation point; ties go to the lowest index.
inline std::vector<int> hard_decision(const CVec& xhat, const Constellation& c) {
    std::vector<int> idx(xhat.size());
    for (std::size_t j = 0; j < xhat.size(); ++j) {
        double best = std::numeric_limits<double>::infinity();
        int best_a = 0;
        for (int a = 0; a < c.size(); ++a) {
            const double d = std::norm(xhat[j] - c.point(a));
            if (d < best) {
                best = d;
                best_a = a;
            }
        }
        idx[j] = best_a;
    }
    return idx;
}

inline Bits symbols_to_bits(const std::vector<int>& idx, const Constellation& c) {
    const int q = c.bits_per_symbol();
    Bits bits(idx.size() * static_cast<std::size_t>(q));
    for (std::size_t j = 0; j < idx.size(); ++j)
        for (int b = 0; b < q; ++b)
            bits[j * q + b] = static_cast<std::uint8_t>(c.label_bit(idx[j], b));
    return bits;
}

// DD grid indexing: x_j = x[k, l] with j = k*M + l.
inline int dd_index(int k, int l, int M) { return k * M + l; }
inline int dd_doppler(int j, int M) { return j / M; }
inline int dd_delay(int j, int M) { return j % M; }

/// ISFFT of the DD grid. Input and output share the k*M + l layout; the TF
/// grid element X_tf[n, m] sits at n*M + m.
///   X_tf[n,m] = 1/sqrt(MN) sum_{k,l} x[k,l] e^{j2pi(nk/N - ml/M)}
inline CVec isfft(const CVec& x_dd, int M, int N) {
    if (static_cast<int>(x_dd.size()) != M * N) throw InvalidArgument("x_dd", "size must be M*N");
    GridFft fft(M, N);
    // forward along delay (e^{-j2pi ml/M}), inverse along Doppler (e^{+j2pi nk/N})
    return fft.rows_inverse(fft.cols_forward(x_dd));
}

/// SFFT, the inverse of isfft.
inline CVec sfft(const CVec& x_tf, int M, int N) {
    if (static_cast<int>(x_tf.size()) != M * N) throw InvalidArgument("x_tf", "size must be M*N");
    GridFft fft(M, N);
    return fft.cols_inverse(fft.rows_forward(x_tf));
}

}  // namespace otfs
