#ifndef MGPO_GAUSSIAN_HPP
#define MGPO_GAUSSIAN_HPP

#include <cmath>
#include <numbers>

namespace mgpo {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

// Phi(z) via erfc, which keeps full relative precision in the lower tail.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z * kInvSqrt2); }

// 1 - Phi(z), accurate in the upper tail.
inline double normal_sf(double z) { return 0.5 * std::erfc(z * kInvSqrt2); }

// Inverse Mills ratio phi(z) / (1 - Phi(z)): the mean of a standard normal
// truncated to (z, inf). Evaluated in log space for z > 6 and by the
// asymptotic series once erfc underflows.
inline double inverse_mills(double z) {
    if (z <= 6.0) {
        return normal_pdf(z) / normal_sf(z);
    }
    if (z < 37.0) {
        const double log_pdf = std::log(kInvSqrt2Pi) - 0.5 * z * z;
        const double log_sf = std::log(0.5) + std::log(std::erfc(z * kInvSqrt2));
        return std::exp(log_pdf - log_sf);
    }
    const double inv2 = 1.0 / (z * z);
    return z * (1.0 + inv2 * (1.0 - 2.0 * inv2 * (1.0 - 5.0 * inv2)));
}

} // namespace mgpo

#endif // MGPO_GAUSSIAN_HPP
