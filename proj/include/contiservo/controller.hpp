#pragma once

#include "contiservo/geometry.hpp"
#include "contiservo/kinematics.hpp"

#include <Eigen/Core>

namespace contiservo {

struct ControllerConfig {
    double kp = 0.2;        // 1/step
    double step_cap = 3.0;  // px per step
    double damping = 0.0;   // pseudo-inverse damping
    int convergence_window = 30;
    double convergence_radius_px = 2.0;
    int divergence_window = 60;
    double divergence_factor = 2.0;
    // Measure the angle against the operator/P-controller intent rather than
    // the rotated command actually handed to the pseudo-inverse.
    bool measure_against_intent = false;

    void validate() const;
};

struct ControlCommand {
    PixelVector pixel_cmd = PixelVector::Zero();    // intended camera motion
    PixelVector applied_cmd = PixelVector::Zero();  // R(theta) * pixel_cmd
    Eigen::VectorXd qdot;
};

struct LyapunovSample {
    double V = 0.0;
    double V_dot_analytic = 0.0;
    double V_delta_empirical = 0.0;
};

/// Scales v down to norm <= cap.
PixelVector clamp_norm(const PixelVector& v, double cap);

/// qdot = J_pinv * R(theta) * pixel_cmd.
ControlCommand command_from_pixels(const PixelVector& pixel_cmd, double theta,
                                   const Jacobian& pinv);

/// Proportional step: pixel_cmd = clamp(kp * error, step_cap), then the
/// rotation is applied before the pseudo-inverse mapping.
ControlCommand control_step(const PixelVector& error, double theta_hat,
                            const Jacobian& model, double kp, double step_cap,
                            double damping = 0.0);

/// V = e'e / 2 and V_dot = -e' (J_true J_pinv R) e. The empirical delta is
/// left to the loop.
LyapunovSample lyapunov_sample(const PixelVector& error, const Jacobian& truth,
                               const Jacobian& pinv, const Eigen::Matrix2d& r);

/// Spectral radius of I - kp * s * R(phi), the error map of the uncorrected
/// linear loop.
double spectral_radius(double kp, double scale, double phi);
inline bool predicts_convergence(double kp, double scale, double phi)
{
    return spectral_radius(kp, scale, phi) < 1.0;
}

}  // namespace contiservo
