#include "headfusion/geometry.hpp"

#include <cmath>

namespace headfusion {

std::optional<Vec2> project(const Vec3& point, const CameraIntrinsics& K) {
    if (point.z() <= 0.0) return std::nullopt;
    return Vec2(K.fx * point.x() / point.z() + K.cx, K.fy * point.y() / point.z() + K.cy);
}

std::optional<Vec3> back_project(double u, double v, double depth, const CameraIntrinsics& K) {
    if (!depth_valid(depth)) return std::nullopt;
    return Vec3((u - K.cx) * depth / K.fx, (v - K.cy) * depth / K.fy, depth);
}

namespace {

Mat3 skew(const Vec3& v) {
    Mat3 s;
    s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return s;
}

}  // namespace

Pose exp_map(const TwistVector& twist) {
    const Vec3 omega = twist.head<3>();
    const Vec3 v = twist.tail<3>();
    const double theta = omega.norm();

    Mat3 rotation;
    Mat3 vmat;  // integrates translation along the screw motion
    if (theta < 1e-8) {
        const Mat3 w = skew(omega);
        rotation = Mat3::Identity() + w + 0.5 * w * w;
        vmat = Mat3::Identity() + 0.5 * w;
    } else {
        const Mat3 w = skew(omega / theta);
        const double s = std::sin(theta);
        const double c = std::cos(theta);
        rotation = Mat3::Identity() + s * w + (1.0 - c) * w * w;
        vmat = Mat3::Identity() + ((1.0 - c) / theta) * w + ((theta - s) / theta) * w * w;
    }

    Pose pose;
    pose.rotation = rotation;
    pose.translation = vmat * v;
    return pose;
}

std::optional<TwistVector> log_map(const Pose& pose) {
    const Mat3& r = pose.rotation;
    const double cos_theta = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
    const double theta = std::acos(cos_theta);
    if (theta >= M_PI - 1e-6) return std::nullopt;  // logarithm cut

    Vec3 omega;
    if (theta < 1e-8) {
        omega = 0.5 * Vec3(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
    } else {
        omega = (theta / (2.0 * std::sin(theta))) *
                Vec3(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
    }

    Mat3 vinv;
    if (theta < 1e-8) {
        vinv = Mat3::Identity() - 0.5 * skew(omega);
    } else {
        const Mat3 w = skew(omega / theta);
        const double half = 0.5 * theta;
        const double cot_half = std::cos(half) / std::sin(half);
        vinv = Mat3::Identity() - half * w + (1.0 - half * cot_half) * w * w;
    }

    TwistVector twist;
    twist.head<3>() = omega;
    twist.tail<3>() = vinv * pose.translation;
    return twist;
}

void compute_vertex_normal_maps(const Image<double>& depth, const CameraIntrinsics& K,
                                Image<Vec3>& vertex_map, Image<Vec3>& normal_map) {
    const int w = depth.width();
    const int h = depth.height();
    vertex_map = Image<Vec3>(w, h, invalid_point());
    normal_map = Image<Vec3>(w, h, invalid_normal());

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double d = depth(x, y);
            if (!depth_valid(d)) continue;
            vertex_map(x, y) = *back_project(x, y, d, K);
        }
    }

    for (int y = 1; y < h - 1; ++y) {
        for (int x = 1; x < w - 1; ++x) {
            if (!point_valid(vertex_map(x, y)) || !point_valid(vertex_map(x + 1, y)) ||
                !point_valid(vertex_map(x - 1, y)) || !point_valid(vertex_map(x, y + 1)) ||
                !point_valid(vertex_map(x, y - 1))) {
                continue;
            }
            const Vec3 dx = vertex_map(x + 1, y) - vertex_map(x - 1, y);
            const Vec3 dy = vertex_map(x, y + 1) - vertex_map(x, y - 1);
            Vec3 n = dx.cross(dy);
            const double norm = n.norm();
            if (norm < 1e-12) continue;
            n /= norm;
            if (n.dot(vertex_map(x, y)) > 0.0) n = -n;
            normal_map(x, y) = n;
        }
    }
}

void preprocess_frame(RgbdFrame& frame) {
    compute_vertex_normal_maps(frame.depth, frame.intrinsics, frame.vertex_map, frame.normal_map);
}

}  // namespace headfusion
