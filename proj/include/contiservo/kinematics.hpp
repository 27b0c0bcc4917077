#pragma once

#include "contiservo/geometry.hpp"

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace contiservo {

/// Largest tip bend accepted by the small-deflection model, radians.
inline constexpr double kMaxBend = 1.5;

/// Single-segment tendon-driven catheter. Tendons sit at equal angular
/// spacing around the backbone; opposite tendons form antagonistic pairs.
struct CatheterConfig {
    double segment_length = 0.05;            // m
    int tendon_count = 4;
    double tendon_radius = 0.0011;           // m, channel offset from backbone
    double max_tendon_displacement = 0.003;  // m

    void validate() const;
};

struct CameraModel {
    double width = 380.0;   // px
    double height = 400.0;  // px
    double focal_px = 300.0;
    double frame_rate = 30.0;  // Hz

    void validate() const;
    PixelVector center() const { return {width / 2.0, height / 2.0}; }
    bool contains(const PixelVector& p) const
    {
        return p.x() >= 0.0 && p.y() >= 0.0 && p.x() < width && p.y() < height;
    }
};

struct JointState {
    Eigen::VectorXd q;     // tendon displacements, m
    Eigen::VectorXd qdot;  // tendon velocities, m/step

    static JointState zero(int n)
    {
        return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
    }
};

enum class JacobianRole { model, truth, pseudo_inverse };

/// 2xn pixel/joint Jacobian (n x 2 for the pseudo-inverse role).
struct Jacobian {
    Eigen::MatrixXd m;
    JacobianRole role = JacobianRole::model;
};

/// Small-deflection tip angles in the two antagonistic bending planes.
struct TipState {
    double bend_x = 0.0;
    double bend_y = 0.0;
};

struct TipResult {
    TipState tip;
    bool joint_limited = false;  // some |q_i| exceeded max_tendon_displacement
    bool bend_limited = false;   // small-angle bound hit
};

struct Projection {
    PixelVector px;
    bool on_screen = true;
};

class RankDeficientError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ProjectionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// 2 x n map from tendon displacement to tip bend (radians per meter).
Eigen::MatrixXd bend_matrix(const CatheterConfig& cfg);

/// Linear bend map without any clamping.
TipState bend_from_joints(const Eigen::VectorXd& q, const CatheterConfig& cfg);

/// Clamps q to the tendon travel and the result to |bend| <= kMaxBend,
/// flagging either event.
TipResult tip_from_joints(const JointState& joints, const CatheterConfig& cfg);

/// Constant small-deflection Jacobian: focal_px * bend_matrix(cfg).
Jacobian model_jacobian(const JointState& joints, const CatheterConfig& cfg,
                        const CameraModel& cam);

/// Damped least-squares right inverse J^T (J J^T + damping^2 I)^-1.
/// Throws RankDeficientError when damping is zero and J J^T is singular.
Jacobian pseudo_inverse(const Jacobian& jac, double damping = 0.0);

/// Image position of a fixed world point (camera base frame, z forward).
/// Throws ProjectionError when the point is behind the image plane.
Projection project_point(const Eigen::Vector3d& world, const TipState& tip,
                         const CameraModel& cam);

/// Image position of the on-axis target at target_depth.
Projection project(const TipState& tip, double target_depth, const CameraModel& cam);

std::string to_string(JacobianRole role);

}  // namespace contiservo
