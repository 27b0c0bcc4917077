#include "contiservo/controller.hpp"

#include <complex>
#include <stdexcept>

namespace contiservo {

void ControllerConfig::validate() const
{
    if (!(kp > 0.0)) throw std::invalid_argument("kp must be > 0");
    if (!(step_cap > 0.0)) throw std::invalid_argument("step_cap must be > 0");
    if (!(damping >= 0.0)) throw std::invalid_argument("damping must be >= 0");
    if (convergence_window < 1) throw std::invalid_argument("convergence_window must be >= 1");
    if (!(convergence_radius_px > 0.0))
        throw std::invalid_argument("convergence_radius_px must be > 0");
    if (divergence_window < 1) throw std::invalid_argument("divergence_window must be >= 1");
    if (!(divergence_factor > 1.0)) throw std::invalid_argument("divergence_factor must be > 1");
}

PixelVector clamp_norm(const PixelVector& v, double cap)
{
    // The slack keeps an already-clamped vector unchanged (idempotent).
    const double n = v.norm();
    return n > cap * (1.0 + 1e-12) ? PixelVector(v * (cap / n)) : v;
}

ControlCommand command_from_pixels(const PixelVector& pixel_cmd, double theta,
                                   const Jacobian& pinv)
{
    ControlCommand c;
    c.pixel_cmd = pixel_cmd;
    c.applied_cmd = rotation(theta) * pixel_cmd;
    c.qdot = pinv.m * c.applied_cmd;
    return c;
}

ControlCommand control_step(const PixelVector& error, double theta_hat,
                            const Jacobian& model, double kp, double step_cap,
                            double damping)
{
    if (!(kp > 0.0)) throw std::invalid_argument("kp must be > 0");
    const Jacobian pinv = pseudo_inverse(model, damping);
    return command_from_pixels(clamp_norm(kp * error, step_cap), theta_hat, pinv);
}

LyapunovSample lyapunov_sample(const PixelVector& error, const Jacobian& truth,
                               const Jacobian& pinv, const Eigen::Matrix2d& r)
{
    LyapunovSample s;
    s.V = 0.5 * error.squaredNorm();
    s.V_dot_analytic = -error.dot(truth.m * pinv.m * r * error);
    return s;
}

double spectral_radius(double kp, double scale, double phi)
{
    // R(phi) has eigenvalues exp(+-i phi); both give the same modulus.
    return std::abs(1.0 - kp * scale * std::polar(1.0, phi));
}

}  // namespace contiservo
