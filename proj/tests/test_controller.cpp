#include "contiservo/closed_loop.hpp"
#include "contiservo/controller.hpp"
#include "contiservo/harness.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace contiservo;

namespace {

Scenario rotation_only(double phi_deg, double alpha, double scale = 1.0)
{
    Scenario sc;
    sc.environment = "custom";
    sc.disturbance = DisturbanceSpec{};
    sc.disturbance.rotation_phi = deg_to_rad(phi_deg);
    sc.disturbance.scale_s = scale;
    sc.estimator.alpha = alpha;
    return sc;
}

Jacobian random_jacobian(std::mt19937_64& rng, int n)
{
    std::normal_distribution<double> g;
    Jacobian j{Eigen::MatrixXd(2, n)};
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < n; ++b) j.m(a, b) = g(rng);
    return j;
}

}  // namespace

TEST(Controller, ZeroErrorGivesZeroCommand)
{
    const Jacobian j{Eigen::MatrixXd::Identity(2, 2)};
    const ControlCommand c = control_step(PixelVector::Zero(), 0.7, j, 0.2, 3.0);
    EXPECT_EQ(c.qdot, Eigen::VectorXd::Zero(2));
}

TEST(Controller, ProportionalStepExamples)
{
    const Jacobian j{Eigen::MatrixXd::Identity(2, 2)};
    const ControlCommand c = control_step({10.0, 0.0}, 0.0, j, 0.1, 3.0);
    EXPECT_TRUE(c.pixel_cmd.isApprox(PixelVector(1.0, 0.0)));
    EXPECT_TRUE(c.qdot.isApprox(Eigen::Vector2d(1.0, 0.0)));

    const ControlCommand r = control_step({10.0, 0.0}, -kPi / 2, j, 0.1, 3.0);
    EXPECT_NEAR(r.applied_cmd.x(), 0.0, 1e-15);
    EXPECT_NEAR(r.applied_cmd.y(), -1.0, 1e-15);

    const ControlCommand capped = control_step({300.0, 400.0}, 0.0, j, 0.2, 3.0);
    EXPECT_NEAR(capped.pixel_cmd.norm(), 3.0, 1e-12);
    EXPECT_TRUE(capped.pixel_cmd.normalized().isApprox(PixelVector(0.6, 0.8)));
    EXPECT_THROW(control_step({1.0, 0.0}, 0.0, j, 0.0, 3.0), std::invalid_argument);
}

TEST(Controller, RotationIsAppliedBeforeThePseudoInverse)
{
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> ang(-kPi, kPi);
    for (int k = 0; k < 200; ++k) {
        const Jacobian j = random_jacobian(rng, 4);
        const Jacobian p = pseudo_inverse(j);
        const PixelVector e(g(rng), g(rng));
        const double th = ang(rng);
        const ControlCommand c = command_from_pixels(e, th, p);
        EXPECT_TRUE((j.m * c.qdot).isApprox(rotation(th) * e, 1e-9));
    }
}

TEST(Controller, LyapunovExamples)
{
    const Jacobian eye{Eigen::MatrixXd::Identity(2, 2)};
    const LyapunovSample z = lyapunov_sample(PixelVector::Zero(), eye, eye, Eigen::Matrix2d::Identity());
    EXPECT_EQ(z.V, 0.0);
    EXPECT_EQ(z.V_dot_analytic, 0.0);
    const LyapunovSample s = lyapunov_sample({3.0, 4.0}, eye, eye, Eigen::Matrix2d::Identity());
    EXPECT_DOUBLE_EQ(s.V, 12.5);
    EXPECT_DOUBLE_EQ(s.V_dot_analytic, -25.0);
}

TEST(Controller, CorrectedRotationGivesNegativeDefiniteDerivative)
{
    std::mt19937_64 rng(10);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> ang(-kPi, kPi), sc(0.2, 2.0);
    const Jacobian model = model_jacobian(JointState::zero(4), CatheterConfig{}, CameraModel{});
    const Jacobian pinv = pseudo_inverse(model);
    for (int k = 0; k < 1000; ++k) {
        DisturbanceSpec d;
        d.rotation_phi = ang(rng);
        d.scale_s = sc(rng);
        const PixelVector e(g(rng), g(rng));
        const LyapunovSample s =
            lyapunov_sample(e, true_jacobian(model, d, 0), pinv, rotation(-d.rotation_phi));
        EXPECT_NEAR(s.V_dot_analytic, -d.scale_s * e.squaredNorm(), 1e-6 * e.squaredNorm());
    }
}

TEST(Controller, SpectralRadiusMatchesIteratedMap)
{
    // Oracle: growth rate of the linear error map iterated directly.
    for (double phi_deg = 0.0; phi_deg <= 180.0; phi_deg += 15.0) {
        for (double s : {0.5, 1.0}) {
            const double phi = deg_to_rad(phi_deg);
            const Eigen::Matrix2d m = Eigen::Matrix2d::Identity() - 0.2 * s * rotation(phi);
            Eigen::Vector2d e(1.0, 0.0);
            const int n = 200;
            for (int i = 0; i < n; ++i) e = m * e;
            const double rate = std::pow(e.norm(), 1.0 / n);
            EXPECT_NEAR(spectral_radius(0.2, s, phi), rate, 1e-9) << phi_deg;
        }
    }
    EXPECT_TRUE(predicts_convergence(0.2, 1.0, deg_to_rad(60.0)));
    EXPECT_FALSE(predicts_convergence(0.2, 1.0, deg_to_rad(90.0)));
    EXPECT_FALSE(predicts_convergence(0.2, 1.0, deg_to_rad(120.0)));
}

TEST(Controller, UndisturbedLoopContractsGeometrically)
{
    Scenario sc = rotation_only(0.0, 1.0);
    sc.initial_target_px = sc.camera.center() + PixelVector(10.0, 5.0);
    LoopState st = init_loop(sc);
    double prev = current_error(st, sc).norm();
    for (int i = 0; i < 50; ++i) {
        closed_loop_step(st, sc);
        const double now = current_error(st, sc).norm();
        EXPECT_NEAR(now, (1.0 - sc.controller.kp) * prev, 1e-9);
        prev = now;
    }
}

TEST(Controller, UncorrectedLargeRotationDoesNotConverge)
{
    const TrialRecord r = run_trial(rotation_only(120.0, 1.0));
    EXPECT_NE(r.meta.outcome, Outcome::converged);
}

TEST(Controller, EstimateLearnsRotationAcrossTheCircle)
{
    for (double phi_deg = -170.0; phi_deg <= 170.0; phi_deg += 20.0) {
        Scenario sc = rotation_only(phi_deg, 0.95);
        sc.initial_target_px = sc.camera.center() + PixelVector(10.0, 10.0);
        sc.stop_on_outcome = false;
        sc.duration_steps = 600;
        const TrialRecord r = run_trial(sc);
        EXPECT_NEAR(rad_to_deg(r.rows.back().theta_hat), -phi_deg, 1.0) << phi_deg;
    }
}

TEST(Controller, LyapunovDecreasesWithExactCorrection)
{
    for (double phi_deg : {-120.0, -30.0, 45.0, 150.0}) {
        Scenario sc = rotation_only(phi_deg, 1.0, 0.5);
        sc.estimator.theta_hat_0 = deg_to_rad(-phi_deg);
        sc.stop_on_outcome = false;
        sc.duration_steps = 300;
        const TrialRecord r = run_trial(sc);
        for (std::size_t i = 1; i < r.rows.size(); ++i) {
            if (r.rows[i - 1].error_norm_px < 1e-6) break;
            EXPECT_LT(r.rows[i].V_delta, 0.0) << phi_deg << " step " << i;
            EXPECT_LT(r.rows[i].V_dot_analytic, 0.0);
        }
    }
}

TEST(Controller, DeadZoneStallsWithoutLearning)
{
    Scenario sc = rotation_only(40.0, 0.9);
    sc.disturbance.dead_zone = 10.0;
    sc.duration_steps = 20;
    sc.stop_on_outcome = false;
    const TrialRecord r = run_trial(sc);
    for (const auto& row : r.rows) {
        EXPECT_TRUE(row.stalled);
        EXPECT_FALSE(row.gate_open);
        EXPECT_EQ(row.theta_hat, 0.0);
        EXPECT_EQ(row.target_px, sc.initial_target_px);
    }
}

TEST(Controller, ConfigValidation)
{
    ControllerConfig c;
    EXPECT_NO_THROW(c.validate());
    c.kp = -1.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = ControllerConfig{};
    c.divergence_factor = 1.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Controller, ClampIsIdempotent)
{
    std::mt19937_64 rng(12);
    std::normal_distribution<double> g(0.0, 100.0);
    for (int i = 0; i < 1000; ++i) {
        const PixelVector once = clamp_norm({g(rng), g(rng)}, 3.0);
        EXPECT_EQ(clamp_norm(once, 3.0), once);
        EXPECT_LE(once.norm(), 3.0 * (1.0 + 1e-12));
    }
}
