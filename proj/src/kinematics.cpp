#include "contiservo/kinematics.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>

namespace contiservo {

void CatheterConfig::validate() const
{
    if (tendon_count < 2 || tendon_count % 2 != 0)
        throw std::invalid_argument("tendon_count must be even and >= 2");
    if (!(tendon_radius > 0.0)) throw std::invalid_argument("tendon_radius must be > 0");
    if (!(segment_length > 0.0)) throw std::invalid_argument("segment_length must be > 0");
    if (!(max_tendon_displacement > 0.0))
        throw std::invalid_argument("max_tendon_displacement must be > 0");
}

void CameraModel::validate() const
{
    if (!(width > 0.0) || !(height > 0.0))
        throw std::invalid_argument("camera width and height must be > 0");
    if (!(focal_px > 0.0)) throw std::invalid_argument("focal_px must be > 0");
    if (!(frame_rate > 0.0)) throw std::invalid_argument("frame_rate must be > 0");
}

Eigen::MatrixXd bend_matrix(const CatheterConfig& cfg)
{
    cfg.validate();
    const int n = cfg.tendon_count;
    Eigen::MatrixXd b(2, n);
    if (n == 2) {
        // Two single tendons on orthogonal planes.
        b << 1.0, 0.0,
             0.0, 1.0;
        return b / cfg.tendon_radius;
    }
    // Tendon i at angle 2*pi*i/n; for n = 4 this is (q1 - q3)/2r, (q2 - q4)/2r.
    for (int i = 0; i < n; ++i) {
        const double a = 2.0 * kPi * i / n;
        b(0, i) = std::cos(a);
        b(1, i) = std::sin(a);
    }
    b = b.unaryExpr([](double v) { return std::abs(v) < 1e-15 ? 0.0 : v; });
    return b * (2.0 / (n * cfg.tendon_radius));
}

TipState bend_from_joints(const Eigen::VectorXd& q, const CatheterConfig& cfg)
{
    if (q.size() != cfg.tendon_count)
        throw std::invalid_argument("joint vector length must equal tendon_count");
    const Eigen::Vector2d bend = bend_matrix(cfg) * q;
    return {bend.x(), bend.y()};
}

TipResult tip_from_joints(const JointState& joints, const CatheterConfig& cfg)
{
    TipResult out;
    const double lim = cfg.max_tendon_displacement;
    Eigen::VectorXd q = joints.q;
    for (Eigen::Index i = 0; i < q.size(); ++i) {
        if (std::abs(q[i]) > lim) {
            q[i] = std::clamp(q[i], -lim, lim);
            out.joint_limited = true;
        }
    }
    out.tip = bend_from_joints(q, cfg);
    auto clamp_bend = [&](double& b) {
        if (std::abs(b) > kMaxBend) {
            b = std::clamp(b, -kMaxBend, kMaxBend);
            out.bend_limited = true;
        }
    };
    clamp_bend(out.tip.bend_x);
    clamp_bend(out.tip.bend_y);
    return out;
}

Jacobian model_jacobian(const JointState& joints, const CatheterConfig& cfg,
                        const CameraModel& cam)
{
    (void)joints;  // constant in the small-angle regime
    cam.validate();
    return {cam.focal_px * bend_matrix(cfg), JacobianRole::model};
}

Jacobian pseudo_inverse(const Jacobian& jac, double damping)
{
    const Eigen::MatrixXd& j = jac.m;
    if (j.rows() != 2 || j.cols() < 1)
        throw std::invalid_argument("pseudo_inverse expects a 2 x n Jacobian");
    if (!j.allFinite()) throw std::invalid_argument("Jacobian has non-finite entries");
    if (damping < 0.0) throw std::invalid_argument("damping must be >= 0");
    if (j.isZero(0.0)) throw RankDeficientError("Jacobian is identically zero");

    Eigen::Matrix2d jjt = j * j.transpose();
    jjt.diagonal().array() += damping * damping;

    // Relative rank test on the 2x2 Gram matrix.
    const double scale = jjt.cwiseAbs().maxCoeff();
    if (damping == 0.0 && std::abs(jjt.determinant()) <= 1e-12 * scale * scale)
        throw RankDeficientError("J J^T is singular; pseudo-inverse needs damping > 0");

    return {j.transpose() * jjt.inverse(), JacobianRole::pseudo_inverse};
}

Projection project_point(const Eigen::Vector3d& world, const TipState& tip,
                         const CameraModel& cam)
{
    if (!(world.z() > 0.0)) throw ProjectionError("target behind camera plane");
    const double ax = std::atan2(world.x(), world.z()) - tip.bend_x;
    const double ay = std::atan2(world.y(), world.z()) - tip.bend_y;
    if (std::abs(ax) >= kPi / 2.0 || std::abs(ay) >= kPi / 2.0)
        throw ProjectionError("target behind camera plane");
    Projection p;
    p.px = cam.center() + cam.focal_px * PixelVector(std::tan(ax), std::tan(ay));
    p.on_screen = cam.contains(p.px);
    return p;
}

Projection project(const TipState& tip, double target_depth, const CameraModel& cam)
{
    return project_point({0.0, 0.0, target_depth}, tip, cam);
}

std::string to_string(JacobianRole role)
{
    switch (role) {
    case JacobianRole::model: return "model";
    case JacobianRole::truth: return "true";
    case JacobianRole::pseudo_inverse: return "pseudo_inverse";
    }
    return "unknown";
}

}  // namespace contiservo
