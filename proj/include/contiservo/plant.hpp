#pragma once

#include "contiservo/geometry.hpp"
#include "contiservo/kinematics.hpp"

#include <Eigen/Core>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace contiservo {

/// Unequal singular values of the disturbance: R(psi) diag(s1, s2) R(-psi).
struct Shear {
    double sigma1 = 1.0;
    double sigma2 = 1.0;
    double psi = 0.0;  // principal-axis angle, rad
};

/// Hidden pixel-space map composed onto the model Jacobian.
struct DisturbanceSpec {
    double rotation_phi = 0.0;  // rad
    double scale_s = 1.0;
    std::optional<Shear> shear;
    double dead_zone = 0.0;         // px/step
    double drift_rate = 0.0;        // rad/step
    double flow_noise_sigma = 0.0;  // px, per feature and axis

    void validate() const;
    double phi_at(long t) const { return rotation_phi + drift_rate * static_cast<double>(t); }
};

struct EnvironmentPreset {
    std::string name;
    DisturbanceSpec disturbance;
};

/// Preset table revision. Bump whenever a constant in presets.cpp changes.
inline constexpr int kPresetVersion = 2;

/// Throws std::invalid_argument listing valid names when `name` is unknown.
EnvironmentPreset preset(std::string_view name);
const std::vector<std::string>& preset_names();

/// P = scale_s * [R(psi) diag(s1,s2) R(-psi)] * R(phi_current).
Eigen::Matrix2d disturbance_map(const DisturbanceSpec& d, long t);

/// J* = P J_model.
Jacobian true_jacobian(const Jacobian& model, const DisturbanceSpec& d, long t);

struct PlantState {
    Eigen::VectorXd q;          // tendon displacements
    PixelVector target_px;      // marker location in the image
    PixelVector camera_offset;  // accumulated camera-centre motion, px
    long t = 0;
    double phi_current = 0.0;
};

struct PlantStepResult {
    PlantState state;
    PixelVector observed_motion = PixelVector::Zero();
    bool stalled = false;  // nonzero command swallowed by the dead-zone
};

/// Applies qdot through J*. Motions shorter than the dead-zone are
/// suppressed entirely. The step counter is owned by the caller.
PlantStepResult plant_step(const PlantState& state, const Eigen::VectorXd& qdot,
                           const DisturbanceSpec& d, const Jacobian& model);

}  // namespace contiservo
