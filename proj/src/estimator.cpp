#include "contiservo/estimator.hpp"

#include <cmath>

namespace contiservo {

void EstimatorConfig::validate() const
{
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must be in (0, 1]");
    if (!(sigma_w >= 0.0) || !(sigma_v >= 0.0) || !(sigma_theta_0 >= 0.0))
        throw std::invalid_argument("noise sigmas must be >= 0");
    if (!(flow_threshold >= 0.0)) throw std::invalid_argument("flow_threshold must be >= 0");
    if (!std::isfinite(theta_hat_0)) throw std::invalid_argument("theta_hat_0 must be finite");
}

AngleEstimate initial_estimate(const EstimatorConfig& cfg)
{
    return {wrap_angle(cfg.theta_hat_0), cfg.sigma_theta_0 * cfg.sigma_theta_0, 0};
}

double measure_angle(const PixelVector& cmd, const PixelVector& v)
{
    if (!(cmd.norm() > 0.0) || !(v.norm() > 0.0))
        throw MeasurementUndefined("measure_angle: zero-length vector");
    return wrap_angle(std::atan2(cross2(v, cmd), v.dot(cmd)));
}

AngleEstimate kalman_update(const AngleEstimate& est, double theta_meas,
                            const EstimatorConfig& cfg)
{
    const double prior = est.variance + cfg.sigma_w * cfg.sigma_w;
    const double denom = prior + cfg.sigma_v * cfg.sigma_v;
    const double k = denom > 0.0 ? prior / denom : 1.0;
    AngleEstimate out = est;
    out.theta_hat = wrap_angle(k * est.theta_hat + (1.0 - k) * theta_meas);
    out.variance = (1.0 - k) * prior;
    return out;
}

double steady_state_gain(const EstimatorConfig& cfg)
{
    const double sw2 = cfg.sigma_w * cfg.sigma_w;
    const double sv2 = cfg.sigma_v * cfg.sigma_v;
    if (sw2 == 0.0 && sv2 == 0.0)
        throw DegenerateFilterError("steady_state_gain: sigma_w and sigma_v are both zero");
    // Without process noise the variance decays harmonically and the gain
    // tends to zero.
    if (sw2 == 0.0) return 0.0;

    double var = cfg.sigma_theta_0 * cfg.sigma_theta_0;
    double k_prev = -1.0;
    for (int i = 0; i < 1'000'000; ++i) {
        const double prior = var + sw2;
        const double k = prior / (prior + sv2);
        var = (1.0 - k) * prior;
        if (std::abs(k - k_prev) < 1e-12 * std::abs(k)) return k;
        k_prev = k;
    }
    return k_prev;
}

double iir_update(double theta_hat_prev, double theta_meas, const EstimatorConfig& cfg)
{
    const double a = cfg.alpha;
    if (cfg.wrap_mode == WrapMode::paper_mod)
        return wrap_angle(a * theta_hat_prev + (1.0 - a) * theta_meas);
    return wrap_angle(theta_hat_prev + (1.0 - a) * wrap_angle(theta_meas - theta_hat_prev));
}

AngleEstimate filter_update(const AngleEstimate& est, double theta_meas,
                            const EstimatorConfig& cfg, long t)
{
    AngleEstimate out = est;
    if (cfg.mode == FilterMode::kalman) {
        out = kalman_update(est, theta_meas, cfg);
    } else {
        out.theta_hat = iir_update(est.theta_hat, theta_meas, cfg);
    }
    out.t = t;
    return out;
}

bool should_update(const FlowMeasurement& flow, const EstimatorConfig& cfg)
{
    return !flow.no_signal && flow.magnitude > 0.0 && flow.magnitude >= cfg.flow_threshold;
}

RotationCorrection correction(double theta_hat)
{
    return {theta_hat, rotation(theta_hat)};
}

std::string to_string(FilterMode m) { return m == FilterMode::kalman ? "kalman" : "iir"; }
std::string to_string(WrapMode m)
{
    return m == WrapMode::paper_mod ? "paper_mod" : "shortest_arc";
}

FilterMode filter_mode_from_string(const std::string& s)
{
    if (s == "kalman") return FilterMode::kalman;
    if (s == "iir") return FilterMode::iir;
    throw std::invalid_argument("unknown filter mode '" + s + "' (expected kalman or iir)");
}

WrapMode wrap_mode_from_string(const std::string& s)
{
    if (s == "paper_mod") return WrapMode::paper_mod;
    if (s == "shortest_arc") return WrapMode::shortest_arc;
    throw std::invalid_argument("unknown wrap mode '" + s +
                                "' (expected paper_mod or shortest_arc)");
}

}  // namespace contiservo
