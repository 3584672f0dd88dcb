#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace otfs {

using Complex = std::complex<double>;
using CVec = std::vector<Complex>;
using RVec = std::vector<double>;
using Bits = std::vector<std::uint8_t>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr Complex kJ{0.0, 1.0};

/// Raised for invalid arguments or inconsistent sizes. Carries the offending
/// field name so configuration front ends can report it.
class InvalidArgument : public std::invalid_argument {
public:
    InvalidArgument(std::string field, const std::string& what)
        : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// A detector produced non-finite state or an exploding variance.
class DetectorDivergence : public std::runtime_error {
public:
    DetectorDivergence(int iteration, const std::string& what)
        : std::runtime_error("detector diverged at iteration " + std::to_string(iteration) +
                             ": " + what),
          iteration_(iteration) {}
    int iteration() const noexcept { return iteration_; }

private:
    int iteration_;
};

/// SVD of a channel block failed to converge.
class SvdFailure : public std::runtime_error {
public:
    explicit SvdFailure(int block)
        : std::runtime_error("SVD did not converge for block " + std::to_string(block)),
          block_(block) {}
    int block() const noexcept { return block_; }

private:
    int block_;
};

inline int positive_mod(int a, int m) {
    const int r = a % m;
    return r < 0 ? r + m : r;
}

inline double norm2(const CVec& v) {
    double s = 0.0;
    for (const auto& z : v) s += std::norm(z);
    return s;
}

inline bool all_finite(const CVec& v) {
    for (const auto& z : v)
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    return true;
}

}  // namespace otfs
