#include "contiservo/closed_loop.hpp"

#include <cmath>
#include <stdexcept>

namespace contiservo {

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index)
{
    std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

LoopState init_loop(const Scenario& sc)
{
    sc.validate();
    LoopState st;
    st.rng.seed(sc.seed);

    const JointState zero = JointState::zero(sc.catheter.tendon_count);
    st.model = model_jacobian(zero, sc.catheter, sc.camera);
    st.pinv = pseudo_inverse(st.model, sc.controller.damping);

    st.plant.q = zero.q;
    st.plant.target_px = sc.initial_target_px;
    st.plant.camera_offset = PixelVector::Zero();
    st.plant.t = 0;
    st.plant.phi_current = sc.disturbance.phi_at(0);
    st.estimate = initial_estimate(sc.estimator);

    // Markers scattered around the target, all inside the first frame.
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double margin = 10.0;
    long attempts = 0;
    while (static_cast<int>(st.feature_anchors.size()) < sc.vision.feature_count) {
        if (++attempts > 100000L * sc.vision.feature_count)
            throw std::runtime_error("cannot place markers: target too close to the image border");
        const double r = sc.vision.feature_spread_px * std::sqrt(unit(st.rng));
        const double a = 2.0 * kPi * unit(st.rng);
        const PixelVector p = sc.initial_target_px + r * PixelVector(std::cos(a), std::sin(a));
        if (p.x() < margin || p.y() < margin || p.x() > sc.camera.width - 1 - margin ||
            p.y() > sc.camera.height - 1 - margin)
            continue;
        st.feature_anchors.push_back(p);
    }

    if (sc.flow_source == FlowSource::lucas_kanade) {
        st.frame = render_blobs(st.feature_anchors, sc.camera, sc.vision.blob_sigma);
        ShiTomasiOptions opt;
        opt.window = sc.vision.lk_window;
        opt.max_count = 4 * sc.vision.feature_count;
        opt.min_distance = 3.0;
        for (const auto& f : shi_tomasi(st.frame, opt)) st.tracked.push_back(f.position);
    }
    return st;
}

std::vector<PixelVector> feature_pixels(const LoopState& st)
{
    std::vector<PixelVector> out;
    out.reserve(st.feature_anchors.size());
    for (const auto& a : st.feature_anchors) out.push_back(a - st.plant.camera_offset);
    return out;
}

PixelVector current_error(const LoopState& st, const Scenario& sc)
{
    return st.plant.target_px - sc.camera.center();
}

PixelVector proportional_command(const LoopState& st, const Scenario& sc)
{
    return clamp_norm(sc.controller.kp * current_error(st, sc), sc.controller.step_cap);
}

namespace {

FlowMeasurement measure_flow(LoopState& st, const Scenario& sc,
                             const std::vector<PixelVector>& before,
                             const std::vector<PixelVector>& after,
                             const PixelVector& camera_motion)
{
    if (sc.flow_source == FlowSource::synthetic) {
        // Displacements come from the plant rather than after - before, so
        // sub-pixel motions keep full relative precision.
        std::vector<std::size_t> visible;
        for (std::size_t i = 0; i < before.size(); ++i)
            if (sc.camera.contains(before[i]) && sc.camera.contains(after[i])) visible.push_back(i);
        const std::vector<PixelVector> origin(visible.size(), PixelVector::Zero());
        const std::vector<PixelVector> shifted(visible.size(), -camera_motion);
        FlowMeasurement flow =
            synthetic_flow(origin, shifted, sc.disturbance.flow_noise_sigma, st.rng);
        for (std::size_t k = 0; k < visible.size(); ++k)
            flow.per_feature[k].feature = before[visible[k]];
        return flow;
    }

    Image next_frame = render_blobs(after, sc.camera, sc.vision.blob_sigma);
    LucasKanadeOptions opt;
    opt.window = sc.vision.lk_window;
    FlowMeasurement flow = lucas_kanade(st.frame, next_frame, st.tracked, opt);
    for (std::size_t i = 0; i < st.tracked.size(); ++i)
        if (flow.per_feature[i].valid) st.tracked[i] += flow.per_feature[i].flow;
    st.frame = std::move(next_frame);
    return flow;
}

}  // namespace

TrialRow drive_step(LoopState& st, const Scenario& sc, const PixelVector& pixel_cmd)
{
    if (!pixel_cmd.allFinite()) throw std::invalid_argument("pixel command must be finite");

    TrialRow row;
    row.t = st.plant.t;
    row.target_px = st.plant.target_px;
    row.phi_current = st.plant.phi_current;

    const PixelVector e = current_error(st, sc);
    row.error_norm_px = e.norm();

    const double theta_applied = st.adaptation_on ? st.estimate.theta_hat : 0.0;
    const Jacobian truth = true_jacobian(st.model, sc.disturbance, st.plant.t);
    const LyapunovSample lyap = lyapunov_sample(e, truth, st.pinv, rotation(theta_applied));
    row.V = lyap.V;
    row.V_dot_analytic = lyap.V_dot_analytic;
    row.V_delta = st.prev_V ? lyap.V - *st.prev_V : 0.0;
    st.prev_V = lyap.V;

    const ControlCommand cmd = command_from_pixels(pixel_cmd, theta_applied, st.pinv);

    const std::vector<PixelVector> before = feature_pixels(st);
    const PlantStepResult step = plant_step(st.plant, cmd.qdot, sc.disturbance, st.model);
    st.plant = step.state;
    row.stalled = step.stalled;
    const std::vector<PixelVector> after = feature_pixels(st);

    const FlowMeasurement flow = measure_flow(st, sc, before, after, step.observed_motion);
    row.flow_magnitude = flow.magnitude;

    const EstimatorConfig ecfg = effective_estimator(sc);
    // Learn only from commands large enough to stand out of the flow noise.
    const double cmd_norm = pixel_cmd.norm();
    row.gate_open = should_update(flow, ecfg) && cmd_norm > 0.0 && cmd_norm >= ecfg.flow_threshold;
    if (row.gate_open) {
        const PixelVector& reference =
            sc.controller.measure_against_intent ? cmd.pixel_cmd : cmd.applied_cmd;
        const double theta_meas = measure_angle(reference, flow.aggregate_v);
        st.estimate = filter_update(st.estimate, theta_meas, ecfg, st.plant.t);
    }
    row.theta_hat = st.estimate.theta_hat;

    st.plant.t += 1;
    st.plant.phi_current = sc.disturbance.phi_at(st.plant.t);
    return row;
}

TrialRow closed_loop_step(LoopState& st, const Scenario& sc)
{
    return drive_step(st, sc, proportional_command(st, sc));
}

}  // namespace contiservo
