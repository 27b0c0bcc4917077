#include "contiservo/plant.hpp"

#include <array>
#include <stdexcept>

namespace contiservo {

namespace {

struct PresetRow {
    const char* name;
    double phi_deg;
    double scale;
    double dead_zone;
    double flow_noise;
};

// Distortion grows with bend count. The dead-zone values keep the stall
// radius dead_zone / (kp * scale) under the 2 px convergence radius at the
// default kp = 0.2.
constexpr std::array<PresetRow, 3> kPresets{{
    {"no_bend", 10.0, 0.95, 0.05, 0.5},
    {"one_bend", 35.0, 0.80, 0.10, 1.0},
    {"two_bend", 70.0, 0.60, 0.20, 2.0},
}};

}  // namespace

void DisturbanceSpec::validate() const
{
    if (!(scale_s > 0.0)) throw std::invalid_argument("scale_s must be > 0");
    if (shear && !(shear->sigma1 > 0.0 && shear->sigma2 > 0.0))
        throw std::invalid_argument("shear singular values must be > 0");
    if (!(dead_zone >= 0.0)) throw std::invalid_argument("dead_zone must be >= 0");
    if (!(flow_noise_sigma >= 0.0))
        throw std::invalid_argument("flow_noise_sigma must be >= 0");
}

const std::vector<std::string>& preset_names()
{
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto& row : kPresets) v.emplace_back(row.name);
        return v;
    }();
    return names;
}

EnvironmentPreset preset(std::string_view name)
{
    for (const auto& row : kPresets) {
        if (name == row.name) {
            DisturbanceSpec d;
            d.rotation_phi = deg_to_rad(row.phi_deg);
            d.scale_s = row.scale;
            d.dead_zone = row.dead_zone;
            d.flow_noise_sigma = row.flow_noise;
            return {row.name, d};
        }
    }
    std::string msg = "unknown environment preset '" + std::string(name) + "'; valid:";
    for (const auto& n : preset_names()) msg += " " + n;
    throw std::invalid_argument(msg);
}

Eigen::Matrix2d disturbance_map(const DisturbanceSpec& d, long t)
{
    Eigen::Matrix2d p = d.scale_s * rotation(d.phi_at(t));
    if (d.shear) {
        const Eigen::Matrix2d axes = rotation(d.shear->psi);
        const Eigen::Matrix2d stretch =
            Eigen::Vector2d(d.shear->sigma1, d.shear->sigma2).asDiagonal();
        p = axes * stretch * axes.transpose() * p;
    }
    return p;
}

Jacobian true_jacobian(const Jacobian& model, const DisturbanceSpec& d, long t)
{
    return {disturbance_map(d, t) * model.m, JacobianRole::truth};
}

PlantStepResult plant_step(const PlantState& state, const Eigen::VectorXd& qdot,
                           const DisturbanceSpec& d, const Jacobian& model)
{
    if (!qdot.allFinite()) throw std::invalid_argument("qdot must be finite");
    PlantStepResult out{state, PixelVector::Zero(), false};
    const PixelVector raw = true_jacobian(model, d, state.t).m * qdot;
    if (raw.norm() < d.dead_zone || raw.isZero(0.0)) {
        out.stalled = !qdot.isZero(0.0);
        return out;
    }
    out.observed_motion = raw;
    out.state.q += qdot;
    out.state.camera_offset += raw;
    // The marker moves opposite to the camera centre.
    out.state.target_px -= raw;
    return out;
}

}  // namespace contiservo
