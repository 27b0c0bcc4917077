#pragma once

#include "contiservo/controller.hpp"
#include "contiservo/estimator.hpp"
#include "contiservo/plant.hpp"
#include "contiservo/scenario.hpp"
#include "contiservo/vision.hpp"

#include <optional>
#include <random>
#include <vector>

namespace contiservo {

/// One step of a trial. Position, error and Lyapunov terms describe the
/// state at the start of step t; theta_hat is the estimate after the step's
/// (possibly gated) update.
struct TrialRow {
    long t = 0;
    PixelVector target_px = PixelVector::Zero();
    double error_norm_px = 0.0;
    double theta_hat = 0.0;
    bool gate_open = false;
    double flow_magnitude = 0.0;
    double V = 0.0;
    double V_delta = 0.0;
    double V_dot_analytic = 0.0;
    double phi_current = 0.0;
    bool stalled = false;

    friend bool operator==(const TrialRow&, const TrialRow&) = default;
};

/// Mutable state of one control loop. Owned by a single trial or session.
struct LoopState {
    PlantState plant;
    AngleEstimate estimate;
    bool adaptation_on = true;

    Jacobian model;
    Jacobian pinv;

    // Scene markers in image coordinates at zero camera offset.
    std::vector<PixelVector> feature_anchors;
    // Lucas-Kanade path: tracked corners and the last rendered frame.
    std::vector<PixelVector> tracked;
    Image frame;

    std::optional<double> prev_V;
    std::mt19937_64 rng;
};

/// splitmix64 mix of (master, index); per-trial streams are independent of
/// execution order.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

LoopState init_loop(const Scenario& sc);

/// Current marker positions in the image.
std::vector<PixelVector> feature_pixels(const LoopState& st);

PixelVector current_error(const LoopState& st, const Scenario& sc);

/// Runs the correction / plant / flow / estimator pipeline for an arbitrary
/// intended camera motion. Teleoperation and the autonomous loop both go
/// through here.
TrialRow drive_step(LoopState& st, const Scenario& sc, const PixelVector& pixel_cmd);

/// Proportional command toward the image centre: clamp(kp * e, step_cap).
PixelVector proportional_command(const LoopState& st, const Scenario& sc);

/// drive_step with the proportional command.
TrialRow closed_loop_step(LoopState& st, const Scenario& sc);

}  // namespace contiservo
