#include "contiservo/kinematics.hpp"

#include <Eigen/QR>
#include <gtest/gtest.h>

#include <random>

using namespace contiservo;

namespace {

CatheterConfig catheter(int n, double r = 0.0011)
{
    CatheterConfig c;
    c.tendon_count = n;
    c.tendon_radius = r;
    return c;
}

Eigen::VectorXd vec(std::initializer_list<double> v)
{
    Eigen::VectorXd out(v.size());
    int i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

}  // namespace

TEST(Kinematics, ZeroJointsGiveStraightTip)
{
    const TipResult r = tip_from_joints(JointState::zero(4), catheter(4));
    EXPECT_EQ(r.tip.bend_x, 0.0);
    EXPECT_EQ(r.tip.bend_y, 0.0);
    EXPECT_FALSE(r.joint_limited);
    EXPECT_FALSE(r.bend_limited);
}

TEST(Kinematics, AntagonisticPairGivesUnitBend)
{
    const double r = 0.0011;
    const TipState t = bend_from_joints(vec({r, 0.0, -r, 0.0}), catheter(4, r));
    EXPECT_NEAR(t.bend_x, 1.0, 1e-12);
    EXPECT_NEAR(t.bend_y, 0.0, 1e-12);
}

TEST(Kinematics, BendClampIsFlagged)
{
    // r = 0.9 mm: unclamped bend (1.1111, 2.2222), y exceeds the small-angle bound.
    const CatheterConfig c = catheter(4, 0.0009);
    const Eigen::VectorXd q = vec({0.001, 0.002, -0.001, -0.002});
    const TipState raw = bend_from_joints(q, c);
    EXPECT_NEAR(raw.bend_x, 0.002 / 0.0018, 1e-9);
    EXPECT_NEAR(raw.bend_y, 0.004 / 0.0018, 1e-9);

    JointState js = JointState::zero(4);
    js.q = q;
    const TipResult r = tip_from_joints(js, c);
    EXPECT_TRUE(r.bend_limited);
    EXPECT_FALSE(r.joint_limited);
    EXPECT_NEAR(r.tip.bend_x, 1.1111111111, 1e-9);
    EXPECT_DOUBLE_EQ(r.tip.bend_y, kMaxBend);
}

TEST(Kinematics, JointTravelClampIsFlagged)
{
    JointState js = JointState::zero(4);
    js.q = vec({0.01, 0.0, 0.0, 0.0});
    const TipResult r = tip_from_joints(js, catheter(4));
    EXPECT_TRUE(r.joint_limited);
    EXPECT_NEAR(r.tip.bend_x, 0.003 / (2 * 0.0011), 1e-9);
}

TEST(Kinematics, BendMapIsLinear)
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1e-3, 1e-3);
    const CatheterConfig c = catheter(6);
    for (int k = 0; k < 100; ++k) {
        Eigen::VectorXd a(6), b(6);
        for (int i = 0; i < 6; ++i) { a[i] = u(rng); b[i] = u(rng); }
        const double alpha = u(rng) * 1e3;
        const TipState lhs = bend_from_joints(alpha * a + b, c);
        const TipState ta = bend_from_joints(a, c);
        const TipState tb = bend_from_joints(b, c);
        EXPECT_NEAR(lhs.bend_x, alpha * ta.bend_x + tb.bend_x, 1e-9);
        EXPECT_NEAR(lhs.bend_y, alpha * ta.bend_y + tb.bend_y, 1e-9);
    }
}

TEST(Kinematics, ModelJacobianFourTendons)
{
    const Jacobian j = model_jacobian(JointState::zero(4), catheter(4), CameraModel{});
    const double g = 300.0 / (2.0 * 0.0011);  // 136363.63...
    Eigen::MatrixXd want(2, 4);
    want << g, 0, -g, 0,
            0, g, 0, -g;
    EXPECT_TRUE(j.m.isApprox(want, 1e-12)) << j.m;
    EXPECT_NEAR(j.m(0, 0), 136363.636, 1e-3);
    EXPECT_EQ(j.role, JacobianRole::model);

    const Eigen::Vector2d m = j.m * vec({1.0, 0.0, -1.0, 0.0});
    EXPECT_GT(m.x(), 0.0);
    EXPECT_NEAR(m.y(), 0.0, 1e-9);
}

TEST(Kinematics, ModelJacobianTwoTendons)
{
    const Jacobian j = model_jacobian(JointState::zero(2), catheter(2), CameraModel{});
    EXPECT_TRUE(j.m.isApprox((300.0 / 0.0011) * Eigen::MatrixXd::Identity(2, 2), 1e-12));
}

TEST(Kinematics, PseudoInverseExamples)
{
    Jacobian j{2.0 * Eigen::MatrixXd::Identity(2, 2)};
    EXPECT_TRUE(pseudo_inverse(j).m.isApprox(0.5 * Eigen::MatrixXd::Identity(2, 2)));

    Jacobian j4{Eigen::MatrixXd(2, 4)};
    j4.m << 1, 0, -1, 0,
            0, 1, 0, -1;
    Eigen::MatrixXd want(4, 2);
    want << 0.5, 0, 0, 0.5, -0.5, 0, 0, -0.5;
    const Jacobian p = pseudo_inverse(j4);
    EXPECT_TRUE(p.m.isApprox(want, 1e-12));
    EXPECT_EQ(p.role, JacobianRole::pseudo_inverse);
    EXPECT_TRUE((j4.m * p.m).isApprox(Eigen::Matrix2d::Identity(), 1e-12));
}

TEST(Kinematics, RankDeficientThrowsUnlessDamped)
{
    Jacobian z{Eigen::MatrixXd::Zero(2, 4)};
    EXPECT_THROW(pseudo_inverse(z), RankDeficientError);
    EXPECT_THROW(pseudo_inverse(z, 0.1), RankDeficientError);

    Jacobian r1{Eigen::MatrixXd(2, 4)};
    r1.m << 1, 2, 3, 4,
            2, 4, 6, 8;
    EXPECT_THROW(pseudo_inverse(r1), RankDeficientError);
    const Jacobian d = pseudo_inverse(r1, 0.1);
    EXPECT_TRUE(d.m.allFinite());
}

TEST(Kinematics, RightInverseProperty)
{
    // Oracle: the Moore-Penrose inverse from a complete orthogonal decomposition.
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int n : {2, 4, 6}) {
        for (int k = 0; k < 100; ++k) {
            Jacobian j{Eigen::MatrixXd(2, n)};
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < n; ++b) j.m(a, b) = g(rng);
            const Eigen::MatrixXd p = pseudo_inverse(j).m;
            EXPECT_TRUE((j.m * p).isApprox(Eigen::Matrix2d::Identity(), 1e-9));
            const Eigen::MatrixXd oracle = j.m.completeOrthogonalDecomposition().pseudoInverse();
            EXPECT_TRUE(p.isApprox(oracle, 1e-9));
        }
    }
}

TEST(Kinematics, ProjectionOfStraightTipIsImageCentre)
{
    const Projection p = project(TipState{}, 0.05, CameraModel{});
    EXPECT_DOUBLE_EQ(p.px.x(), 190.0);
    EXPECT_DOUBLE_EQ(p.px.y(), 200.0);
    EXPECT_TRUE(p.on_screen);
}

TEST(Kinematics, ProjectionErrors)
{
    EXPECT_THROW(project(TipState{}, -0.05, CameraModel{}), ProjectionError);
    EXPECT_THROW(project(TipState{}, 0.0, CameraModel{}), ProjectionError);
    EXPECT_THROW(project(TipState{1.6, 0.0}, 0.05, CameraModel{}), ProjectionError);
    const Projection off = project(TipState{1.2, 0.0}, 0.05, CameraModel{});
    EXPECT_FALSE(off.on_screen);
}

TEST(Kinematics, JacobianMatchesProjectionDerivative)
{
    // The target drifts opposite to the camera, so d(project)/dq = -J.
    const CatheterConfig c = catheter(4);
    const CameraModel cam;
    const Jacobian j = model_jacobian(JointState::zero(4), c, cam);
    const double h = 1e-8;
    Eigen::MatrixXd fd(2, 4);
    for (int i = 0; i < 4; ++i) {
        Eigen::VectorXd dq = Eigen::VectorXd::Zero(4);
        dq[i] = h;
        JointState plus = JointState::zero(4), minus = JointState::zero(4);
        plus.q = dq;
        minus.q = -dq;
        const PixelVector a = project(tip_from_joints(plus, c).tip, 0.05, cam).px;
        const PixelVector b = project(tip_from_joints(minus, c).tip, 0.05, cam).px;
        fd.col(i) = (a - b) / (2 * h);
    }
    for (int r = 0; r < 2; ++r) {
        for (int i = 0; i < 4; ++i) {
            if (j.m(r, i) == 0.0)
                EXPECT_NEAR(fd(r, i), 0.0, 1e-3 * j.m.cwiseAbs().maxCoeff());
            else
                EXPECT_NEAR(-fd(r, i) / j.m(r, i), 1.0, 0.01);
        }
    }
}

TEST(Kinematics, InvalidCatheterRejected)
{
    EXPECT_THROW(bend_matrix(catheter(3)), std::invalid_argument);
    EXPECT_THROW(bend_matrix(catheter(4, 0.0)), std::invalid_argument);
    EXPECT_THROW(bend_from_joints(Eigen::VectorXd::Zero(3), catheter(4)), std::invalid_argument);
}
