#include "contiservo/estimator.hpp"

#include <Eigen/LU>
#include <gtest/gtest.h>

#include <random>

using namespace contiservo;

namespace {

EstimatorConfig iir(double alpha, WrapMode w = WrapMode::paper_mod)
{
    EstimatorConfig c;
    c.mode = FilterMode::iir;
    c.alpha = alpha;
    c.wrap_mode = w;
    return c;
}

EstimatorConfig kalman(double sw, double sv, double s0 = 1.0)
{
    EstimatorConfig c;
    c.mode = FilterMode::kalman;
    c.sigma_w = sw;
    c.sigma_v = sv;
    c.sigma_theta_0 = s0;
    return c;
}

// Closed-form fixed point of the scalar Riccati recursion.
double closed_form_gain(double sw, double sv)
{
    const double a = sw * sw, b = sv * sv;
    const double p = (a + std::sqrt(a * a + 4.0 * a * b)) / 2.0;
    return p / (p + b);
}

FlowMeasurement flow_of(double magnitude)
{
    FlowMeasurement f;
    f.aggregate_v = PixelVector(magnitude, 0.0);
    f.magnitude = magnitude;
    f.no_signal = false;
    return f;
}

}  // namespace

TEST(Estimator, WrapAngleRange)
{
    EXPECT_DOUBLE_EQ(wrap_angle(kPi), -kPi);
    EXPECT_DOUBLE_EQ(wrap_angle(-kPi), -kPi);
    EXPECT_NEAR(wrap_angle(3.6), 3.6 - 2 * kPi, 1e-15);
    EXPECT_NEAR(wrap_angle(-7.0), -7.0 + 2 * kPi, 1e-15);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1e4, 1e4);
    for (int i = 0; i < 10000; ++i) {
        const double w = wrap_angle(u(rng));
        EXPECT_GE(w, -kPi);
        EXPECT_LT(w, kPi);
    }
}

TEST(Estimator, MeasureAngleExamples)
{
    EXPECT_EQ(measure_angle({1, 0}, {1, 0}), 0.0);
    EXPECT_NEAR(measure_angle({1, 0}, {0, 1}), -kPi / 2, 1e-15);
    EXPECT_NEAR(measure_angle({0, 1}, {1, 0}), kPi / 2, 1e-15);
    EXPECT_DOUBLE_EQ(measure_angle({1, 0}, {-1, 0}), -kPi);
    EXPECT_THROW(measure_angle({0, 0}, {1, 0}), MeasurementUndefined);
    EXPECT_THROW(measure_angle({1, 0}, {0, 0}), MeasurementUndefined);
}

TEST(Estimator, MeasureAngleRecoversRotation)
{
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> th(-kPi + 1e-6, kPi - 1e-6), len(0.01, 50.0);
    std::normal_distribution<double> g;
    for (int i = 0; i < 1000; ++i) {
        const PixelVector v = PixelVector(g(rng), g(rng)).normalized() * len(rng);
        const double t = th(rng);
        const PixelVector cmd = len(rng) * (rotation(t) * v).normalized();
        EXPECT_NEAR(measure_angle(cmd, v), t, 1e-9);
    }
}

TEST(Estimator, KalmanWithoutNoiseKeepsEstimate)
{
    AngleEstimate e{0.4, 1.0, 0};
    const AngleEstimate out = kalman_update(e, -1.0, kalman(0.0, 0.0));
    EXPECT_DOUBLE_EQ(out.theta_hat, 0.4);
    EXPECT_DOUBLE_EQ(out.variance, 0.0);
}

TEST(Estimator, KalmanStepExample)
{
    // sigma^2 = 1, sigma_w^2 = 0.01, sigma_v^2 = 0.04.
    const AngleEstimate e{0.0, 1.0, 0};
    const AngleEstimate out = kalman_update(e, 1.0, kalman(0.1, 0.2));
    const double k = 1.01 / 1.05;
    EXPECT_NEAR(out.theta_hat, 1.0 - k, 1e-15);
    EXPECT_NEAR(out.variance, 0.038476190476190, 1e-14);
    EXPECT_NEAR(out.variance, (1.0 - k) * 1.01, 1e-15);
}

TEST(Estimator, KalmanConvergesToConstantMeasurement)
{
    const EstimatorConfig cfg = kalman(0.1, 0.3);
    AngleEstimate e = initial_estimate(cfg);
    for (int i = 0; i < 2000; ++i) e = kalman_update(e, 0.7, cfg);
    EXPECT_NEAR(e.theta_hat, 0.7, 1e-9);
}

TEST(Estimator, SteadyStateGainMatchesClosedForm)
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.01, 2.0);
    for (int i = 0; i < 200; ++i) {
        const double sw = u(rng), sv = u(rng);
        EXPECT_NEAR(steady_state_gain(kalman(sw, sv)), closed_form_gain(sw, sv), 1e-10);
    }
    EXPECT_DOUBLE_EQ(steady_state_gain(kalman(0.0, 0.3)), 0.0);
    EXPECT_DOUBLE_EQ(steady_state_gain(kalman(0.3, 0.0)), 1.0);
    EXPECT_THROW(steady_state_gain(kalman(0.0, 0.0)), DegenerateFilterError);
}

TEST(Estimator, KalmanGainSequenceSettles)
{
    const EstimatorConfig cfg = kalman(0.2, 0.5, 2.0);
    AngleEstimate e = initial_estimate(cfg);
    double k = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double prior = e.variance + 0.04;
        e = kalman_update(e, 0.0, cfg);
        k = 1.0 - e.variance / prior;
    }
    EXPECT_NEAR(k, closed_form_gain(0.2, 0.5), 1e-12);
}

TEST(Estimator, IirExamples)
{
    EXPECT_DOUBLE_EQ(iir_update(0.3, 2.0, iir(1.0)), 0.3);
    EXPECT_NEAR(iir_update(0.0, kPi / 2, iir(0.5)), kPi / 4, 1e-15);
    EXPECT_NEAR(iir_update(0.0, kPi / 2, iir(0.5, WrapMode::shortest_arc)), kPi / 4, 1e-15);
}

TEST(Estimator, WrapModesDifferAcrossTheSeam)
{
    const double meas = wrap_angle(3.6);  // -2.6831853...
    EXPECT_NEAR(iir_update(3.0, meas, iir(0.5)), 0.158407346410207, 1e-12);
    EXPECT_NEAR(iir_update(3.0, meas, iir(0.5, WrapMode::shortest_arc)), -2.983185307179586,
                1e-12);
}

TEST(Estimator, IirOutputAlwaysInRange)
{
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> ang(-kPi, kPi), a(0.01, 1.0);
    for (WrapMode w : {WrapMode::paper_mod, WrapMode::shortest_arc}) {
        for (int i = 0; i < 10000; ++i) {
            const double out = iir_update(ang(rng), ang(rng), iir(a(rng), w));
            EXPECT_GE(out, -kPi);
            EXPECT_LT(out, kPi);
        }
    }
}

TEST(Estimator, IirConvergesGeometrically)
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ang(-3.0, 3.0), a(0.05, 0.99);
    for (int i = 0; i < 200; ++i) {
        const double c = ang(rng), alpha = a(rng);
        double th = ang(rng);
        double err = std::abs(th - c);
        for (int t = 0; t < 20; ++t) {
            th = iir_update(th, c, iir(alpha));
            const double next = std::abs(th - c);
            EXPECT_NEAR(next, alpha * err, 1e-12);
            err = next;
        }
    }
}

TEST(Estimator, FilterUpdateDispatches)
{
    AngleEstimate e{0.0, 1.0, 0};
    const AngleEstimate a = filter_update(e, 1.0, iir(0.5), 7);
    EXPECT_DOUBLE_EQ(a.theta_hat, 0.5);
    EXPECT_EQ(a.t, 7);
    const AngleEstimate k = filter_update(e, 1.0, kalman(0.1, 0.2), 8);
    EXPECT_EQ(k.theta_hat, kalman_update(e, 1.0, kalman(0.1, 0.2)).theta_hat);
}

TEST(Estimator, UpdateGateIsInclusive)
{
    EstimatorConfig cfg = iir(0.9);
    cfg.flow_threshold = 0.5;
    EXPECT_TRUE(should_update(flow_of(0.5), cfg));
    EXPECT_FALSE(should_update(flow_of(0.4999), cfg));
    cfg.flow_threshold = 0.0;
    EXPECT_FALSE(should_update(flow_of(0.0), cfg));
    FlowMeasurement none = flow_of(1.0);
    none.no_signal = true;
    EXPECT_FALSE(should_update(none, cfg));
}

TEST(Estimator, CorrectionIsARotation)
{
    EXPECT_TRUE(correction(0.0).matrix.isApprox(Eigen::Matrix2d::Identity(), 0.0));
    Eigen::Matrix2d quarter;
    quarter << 0, -1,
               1, 0;
    EXPECT_TRUE(correction(kPi / 2).matrix.isApprox(quarter, 1e-15));
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> ang(-kPi, kPi);
    for (int i = 0; i < 1000; ++i) {
        const Eigen::Matrix2d r = correction(ang(rng)).matrix;
        EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
        EXPECT_TRUE((r.transpose() * r).isApprox(Eigen::Matrix2d::Identity(), 1e-12));
    }
}

TEST(Estimator, ConfigValidation)
{
    EXPECT_THROW(iir(0.0).validate(), std::invalid_argument);
    EXPECT_THROW(iir(1.5).validate(), std::invalid_argument);
    EXPECT_NO_THROW(iir(1.0).validate());
    EXPECT_THROW(kalman(-0.1, 0.1).validate(), std::invalid_argument);
    EXPECT_EQ(filter_mode_from_string("kalman"), FilterMode::kalman);
    EXPECT_EQ(wrap_mode_from_string(to_string(WrapMode::shortest_arc)), WrapMode::shortest_arc);
    EXPECT_THROW(wrap_mode_from_string("mod"), std::invalid_argument);
}
