#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "types.hpp"

namespace otfs {

/// Unitary DFT transforms on an M x N grid stored column by column
/// (element (l, k) at index k*M + l). Column transforms act along delay,
/// row transforms along Doppler.
///
/// Owns its FFT plans; not safe to share between threads.
class GridFft {
public:
    GridFft(int M, int N) : M_(M), N_(N), row_(static_cast<std::size_t>(N)),
                            row_out_(static_cast<std::size_t>(N)) {
        fft_.SetFlag(Eigen::FFT<double>::Unscaled);
    }

    int rows() const { return M_; }
    int cols() const { return N_; }

    /// vec(F_M X F_N) = (F_N kron F_M) x, both factors unitary.
    CVec forward2(const CVec& x) { return transform2(x, false); }
    /// (F_N kron F_M)^H x.
    CVec inverse2(const CVec& x) { return transform2(x, true); }

    /// Unnormalized 2D DFT (the FFT2 of a reshaped column).
    CVec fft2_unnormalized(const CVec& x) {
        CVec y = transform2(x, false);
        const double s = std::sqrt(static_cast<double>(M_) * N_);
        for (auto& v : y) v *= s;
        return y;
    }

    /// vec(F_M X): unitary forward DFT along every column.
    CVec cols_forward(const CVec& x) { return transform_cols(x, false); }
    /// vec(F_M^H X).
    CVec cols_inverse(const CVec& x) { return transform_cols(x, true); }

    /// vec(X F_N): unitary forward DFT along every row.
    CVec rows_forward(const CVec& x) { return transform_rows(x, false); }
    /// vec(X F_N^H): unitary inverse DFT along every row.
    CVec rows_inverse(const CVec& x) { return transform_rows(x, true); }

private:
    CVec transform2(const CVec& x, bool inverse) {
        CVec y = transform_cols(x, inverse);
        return transform_rows(y, inverse);
    }

    CVec transform_cols(const CVec& x, bool inverse) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(M_));
        CVec y(x.size());
        for (int k = 0; k < N_; ++k) {
            const Complex* src = x.data() + static_cast<std::size_t>(k) * M_;
            Complex* dst = y.data() + static_cast<std::size_t>(k) * M_;
            if (inverse)
                fft_.inv(dst, src, M_);
            else
                fft_.fwd(dst, src, M_);
            for (int l = 0; l < M_; ++l) dst[l] *= scale;
        }
        return y;
    }

    CVec transform_rows(const CVec& x, bool inverse) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(N_));
        CVec y(x.size());
        for (int l = 0; l < M_; ++l) {
            for (int k = 0; k < N_; ++k) row_[k] = x[static_cast<std::size_t>(k) * M_ + l];
            if (inverse)
                fft_.inv(row_out_.data(), row_.data(), N_);
            else
                fft_.fwd(row_out_.data(), row_.data(), N_);
            for (int k = 0; k < N_; ++k)
                y[static_cast<std::size_t>(k) * M_ + l] = row_out_[k] * scale;
        }
        return y;
    }

    int M_;
    int N_;
    Eigen::FFT<double> fft_;
    CVec row_, row_out_;
};

}  // namespace otfs
