#pragma once

#include <Eigen/Core>

#include <cmath>
#include <numbers>

namespace contiservo {

/// 2-vector in camera pixel coordinates. Origin top-left, x along columns,
/// y down the rows.
using PixelVector = Eigen::Vector2d;

inline constexpr double kPi = std::numbers::pi;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// mod(x + pi, 2pi) - pi, always in [-pi, pi).
inline double wrap_angle(double x)
{
    double r = std::fmod(x + kPi, 2.0 * kPi);
    if (r < 0.0) r += 2.0 * kPi;
    if (r >= 2.0 * kPi) r = 0.0;
    return r - kPi;
}

inline Eigen::Matrix2d rotation(double theta)
{
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    Eigen::Matrix2d r;
    r << c, -s,
         s, c;
    return r;
}

/// z component of a x b.
inline double cross2(const PixelVector& a, const PixelVector& b)
{
    return a.x() * b.y() - a.y() * b.x();
}

}  // namespace contiservo
