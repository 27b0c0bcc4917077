#pragma once

#include "contiservo/geometry.hpp"
#include "contiservo/vision.hpp"

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace contiservo {

enum class FilterMode { kalman, iir };

/// paper_mod blends raw angles then wraps; shortest_arc blends along the
/// shorter arc between estimate and measurement.
enum class WrapMode { paper_mod, shortest_arc };

struct EstimatorConfig {
    FilterMode mode = FilterMode::iir;
    double alpha = 0.95;
    double sigma_w = 0.1;  // process noise std, rad
    double sigma_v = 0.3;  // measurement noise std, rad
    double sigma_theta_0 = 1.0;
    double theta_hat_0 = 0.0;
    double flow_threshold = 0.0;  // px/step, minimum |v| for an update
    WrapMode wrap_mode = WrapMode::paper_mod;

    void validate() const;
};

struct AngleEstimate {
    double theta_hat = 0.0;  // [-pi, pi)
    double variance = 0.0;   // kalman mode only
    long t = 0;              // step of last update
};

struct RotationCorrection {
    double theta = 0.0;
    Eigen::Matrix2d matrix = Eigen::Matrix2d::Identity();
};

class MeasurementUndefined : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class DegenerateFilterError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

AngleEstimate initial_estimate(const EstimatorConfig& cfg);

/// Signed angle of the rotation carrying v onto cmd's direction, in [-pi, pi).
/// Throws MeasurementUndefined for a zero-length argument.
double measure_angle(const PixelVector& cmd, const PixelVector& v);

/// Scalar Kalman step with the prior weighted by the gain:
///   k = (s2 + sw2) / (s2 + sw2 + sv2)
///   theta = k * theta_prev + (1 - k) * meas
///   s2 = (1 - k) (s2 + sw2)
AngleEstimate kalman_update(const AngleEstimate& est, double theta_meas,
                            const EstimatorConfig& cfg);

/// Limit of the Kalman gain sequence, found by iterating the gain/variance
/// recursion from sigma_theta_0 until successive gains differ by < 1e-12
/// relative. This is the alpha of the equivalent IIR filter.
double steady_state_gain(const EstimatorConfig& cfg);

double iir_update(double theta_hat_prev, double theta_meas, const EstimatorConfig& cfg);

/// Dispatches to kalman_update or iir_update according to cfg.mode.
AngleEstimate filter_update(const AngleEstimate& est, double theta_meas,
                            const EstimatorConfig& cfg, long t);

/// True iff the flow carries a signal and |v| >= flow_threshold (inclusive).
bool should_update(const FlowMeasurement& flow, const EstimatorConfig& cfg);

RotationCorrection correction(double theta_hat);

std::string to_string(FilterMode m);
std::string to_string(WrapMode m);
FilterMode filter_mode_from_string(const std::string& s);
WrapMode wrap_mode_from_string(const std::string& s);

}  // namespace contiservo
