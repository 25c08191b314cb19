#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <optional>
#include <vector>

#include "headfusion/image.hpp"

namespace headfusion {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// 6-vector in se(3): 3 rotational components (radians) followed by
/// 3 translational components (meters).
using TwistVector = Eigen::Matrix<double, 6, 1>;

/// Pinhole camera model, no distortion.
struct CameraIntrinsics {
    double fx = 0, fy = 0;
    double cx = 0, cy = 0;
    int width = 0, height = 0;

    bool valid() const {
        return fx > 0 && fy > 0 && width > 0 && height > 0 && cx >= 0 && cx < width &&
               cy >= 0 && cy < height;
    }
};

/// Rigid transform in SE(3), rotation kept orthonormal.
struct Pose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }

    Pose operator*(const Pose& other) const {
        return {rotation * other.rotation, rotation * other.translation + translation};
    }

    Pose inverse() const {
        Mat3 rt = rotation.transpose();
        return {rt, -(rt * translation)};
    }

    Mat4 matrix() const {
        Mat4 m = Mat4::Identity();
        m.topLeftCorner<3, 3>() = rotation;
        m.topRightCorner<3, 1>() = translation;
        return m;
    }

    /// Orthonormality check: R^T R = I and det(R) = +1 within tol.
    bool is_valid(double tol = 1e-6) const {
        return (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < tol &&
               std::abs(rotation.determinant() - 1.0) < tol;
    }

    /// Re-projects the rotation onto SO(3) via quaternion normalization.
    void orthonormalize() {
        Eigen::Quaterniond q(rotation);
        q.normalize();
        rotation = q.toRotationMatrix();
    }

    Pose orthonormalized() const {
        Pose p = *this;
        p.orthonormalize();
        return p;
    }

    static Pose identity() { return {}; }
};

constexpr double kInvalidDepth = 0.0;

inline bool depth_valid(double d) { return d > 0.0; }

/// Vertex-map entries with z <= 0 are invalid; normal-map entries with
/// (near-)zero norm are invalid.
inline bool point_valid(const Vec3& p) { return p.z() > 0.0; }
inline bool normal_valid(const Vec3& n) { return n.squaredNorm() > 0.25; }

inline Vec3 invalid_point() { return Vec3::Zero(); }
inline Vec3 invalid_normal() { return Vec3::Zero(); }

/// One sparse 3D facial landmark in camera coordinates, with its stable
/// detector index.
struct Landmark {
    int index = -1;
    Vec3 position = Vec3::Zero();
};

/// Single RGB-D frame: depth in meters (0 = invalid), 8-bit color, optional
/// 3D landmarks, and vertex/normal maps derived from the depth image.
struct RgbdFrame {
    Image<double> depth;
    Image<Rgb8> color;
    CameraIntrinsics intrinsics;
    std::vector<Landmark> landmarks;

    Image<Vec3> vertex_map;
    Image<Vec3> normal_map;
};

/// Perspective projection: camera point to continuous pixel coordinates.
/// Empty when the point is at or behind the camera plane.
std::optional<Vec2> project(const Vec3& point, const CameraIntrinsics& K);

/// Inverse of project at a given depth. Empty when depth is invalid.
std::optional<Vec3> back_project(double u, double v, double depth, const CameraIntrinsics& K);

/// se(3) exponential: Rodrigues rotation plus V-matrix translation.
/// Numerically stable near the zero twist.
Pose exp_map(const TwistVector& twist);

/// Inverse of exp_map. Empty when the rotation angle is within 1e-6 of pi
/// (logarithm cut).
std::optional<TwistVector> log_map(const Pose& pose);

/// Backprojects the depth image and estimates normals by central differences
/// on the vertex map, oriented toward the camera (n . v < 0). A pixel's normal
/// is invalid if the pixel or any of its 4 neighbors has invalid depth.
void compute_vertex_normal_maps(const Image<double>& depth, const CameraIntrinsics& K,
                                Image<Vec3>& vertex_map, Image<Vec3>& normal_map);

/// Fills vertex_map/normal_map of the frame in place.
void preprocess_frame(RgbdFrame& frame);

}  // namespace headfusion
