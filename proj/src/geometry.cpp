#include "mmscan/geometry.hpp"

#include <cmath>

namespace mmscan {

namespace {

Mat3 skew(const Vec3& v) {
    Mat3 m;
    m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return m;
}

}  // namespace

Mat3 rotation_from_axis_angle(const Vec3& w) {
    const double theta = w.norm();
    if (theta < 1e-12) {
        // second-order expansion keeps exp continuous through zero
        const Mat3 k = skew(w);
        return Mat3::Identity() + k + 0.5 * k * k;
    }
    const Vec3 axis = w / theta;
    const Mat3 k = skew(axis);
    return Mat3::Identity() + std::sin(theta) * k + (1.0 - std::cos(theta)) * k * k;
}

RigidTransform RigidTransform::from_axis_angle(const Vec3& axis_angle, const Vec3& t) {
    RigidTransform out;
    out.rotation = rotation_from_axis_angle(axis_angle);
    out.translation = t;
    return out;
}

Vec3 RigidTransform::axis_angle() const {
    const double cos_theta = std::clamp((rotation.trace() - 1.0) * 0.5, -1.0, 1.0);
    const double theta = std::acos(cos_theta);
    if (theta < 1e-9) {
        return 0.5 * Vec3(rotation(2, 1) - rotation(1, 2), rotation(0, 2) - rotation(2, 0),
                          rotation(1, 0) - rotation(0, 1));
    }
    if (theta > kPi - 1e-6) {
        // near pi the off-diagonal formula degrades; (R + I)/2 ~ axis axis^T
        const Mat3 s = 0.5 * (rotation + Mat3::Identity());
        int k = 0;
        s.diagonal().maxCoeff(&k);
        Vec3 axis = s.col(k) / std::sqrt(std::max(s(k, k), 1e-16));
        axis.normalize();
        return axis * theta;
    }
    const double scale = theta / (2.0 * std::sin(theta));
    return scale * Vec3(rotation(2, 1) - rotation(1, 2), rotation(0, 2) - rotation(2, 0),
                        rotation(1, 0) - rotation(0, 1));
}

RigidTransform RigidTransform::inverse() const {
    RigidTransform out;
    out.rotation = rotation.transpose();
    out.translation = -(rotation.transpose() * translation);
    return out;
}

Mat4 RigidTransform::matrix() const {
    Mat4 m = Mat4::Identity();
    m.block<3, 3>(0, 0) = rotation;
    m.block<3, 1>(0, 3) = translation;
    return m;
}

double RigidTransform::orthonormality_error() const {
    const double defect = (rotation.transpose() * rotation - Mat3::Identity()).norm();
    const double det_err = std::abs(rotation.determinant() - 1.0);
    return std::max(defect, det_err);
}

void RigidTransform::reorthonormalize() {
    Eigen::JacobiSVD<Mat3> svd(rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0) {
        Mat3 flip = Mat3::Identity();
        flip(2, 2) = -1.0;
        r = svd.matrixU() * flip * svd.matrixV().transpose();
    }
    rotation = r;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
    RigidTransform out;
    out.rotation = a.rotation * b.rotation;
    out.translation = a.rotation * b.translation + a.translation;
    return out;
}

double rotation_angle_between(const Mat3& a, const Mat3& b) {
    const Mat3 r = a.transpose() * b;
    const double c = (r.trace() - 1.0) * 0.5;
    const double s = 0.5 * Vec3(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1)).norm();
    return std::atan2(s, c);  // stays accurate near zero, unlike acos
}

Mat3 CameraModel::intrinsic_matrix() const {
    Mat3 k = Mat3::Identity();
    k(0, 0) = fu;
    k(1, 1) = fv;
    k(0, 2) = cu;
    k(1, 2) = cv;
    return k;
}

Mat34 CameraModel::projection_matrix() const {
    const RigidTransform world_to_device = pose.inverse();
    Mat34 rt;
    rt.block<3, 3>(0, 0) = world_to_device.rotation;
    rt.block<3, 1>(0, 3) = world_to_device.translation;
    return intrinsic_matrix() * rt;
}

void CameraModel::validate() const {
    if (fu <= 0 || fv <= 0) throw InvalidArgument("focal lengths must be positive");
    if (width <= 0 || height <= 0) throw InvalidArgument("image size must be positive");
    if (cu < 0 || cu >= width || cv < 0 || cv >= height)
        throw InvalidArgument("principal point must lie inside the image");
}

namespace {

Vec2 distort_normalized(const CameraModel& cam, const Vec2& n) {
    if (!cam.distortion) return n;
    const double r2 = n.squaredNorm();
    const double f = 1.0 + (*cam.distortion)[0] * r2 + (*cam.distortion)[1] * r2 * r2;
    return f * n;
}

Vec2 undistort_normalized(const CameraModel& cam, const Vec2& d) {
    if (!cam.distortion) return d;
    Vec2 n = d;
    for (int i = 0; i < 20; ++i) {
        const double r2 = n.squaredNorm();
        const double f = 1.0 + (*cam.distortion)[0] * r2 + (*cam.distortion)[1] * r2 * r2;
        n = d / f;
    }
    return n;
}

}  // namespace

Vec2 project(const CameraModel& cam, const Vec3& world_point) {
    const RigidTransform w2d = cam.pose.inverse();
    const Vec3 p = w2d.apply(world_point);
    if (p.z() <= 0.0) throw PointBehindCamera();
    const Vec2 n = distort_normalized(cam, Vec2(p.x() / p.z(), p.y() / p.z()));
    return {cam.fu * n.x() + cam.cu, cam.fv * n.y() + cam.cv};
}

Vec2 project_homogeneous(const CameraModel& cam, const Vec4& xh) {
    const Eigen::Vector3d img = cam.projection_matrix() * xh;
    if (std::abs(img.z()) < 1e-15) throw PointBehindCamera();
    if (cam.distortion) {
        // route through the normalized plane so distortion applies uniformly
        const Mat3 kinv = cam.intrinsic_matrix().inverse();
        const Vec3 n = kinv * img;
        const Vec2 d = distort_normalized(cam, Vec2(n.x() / n.z(), n.y() / n.z()));
        return {cam.fu * d.x() + cam.cu, cam.fv * d.y() + cam.cv};
    }
    return {img.x() / img.z(), img.y() / img.z()};
}

double depth_in_camera(const CameraModel& cam, const Vec3& world_point) {
    return cam.pose.inverse().apply(world_point).z();
}

Vec3 backproject(const CameraModel& cam, const Vec2& px, double depth) {
    const Vec2 d((px.x() - cam.cu) / cam.fu, (px.y() - cam.cv) / cam.fv);
    const Vec2 n = undistort_normalized(cam, d);
    return cam.pose.apply(Vec3(n.x() * depth, n.y() * depth, depth));
}

TriangulationResult triangulate(const std::vector<std::pair<CameraModel, Vec2>>& observations) {
    if (observations.size() < 2) throw InvalidArgument("triangulation needs >= 2 observations");

    // DLT on K-normalized, undistorted rays; rows scaled to unit norm.
    Eigen::MatrixXd a(2 * observations.size(), 4);
    for (std::size_t i = 0; i < observations.size(); ++i) {
        const auto& [cam, px] = observations[i];
        const RigidTransform w2d = cam.pose.inverse();
        Mat34 p;
        p.block<3, 3>(0, 0) = w2d.rotation;
        p.block<3, 1>(0, 3) = w2d.translation;
        const Vec2 n = undistort_normalized(
            cam, Vec2((px.x() - cam.cu) / cam.fu, (px.y() - cam.cv) / cam.fv));
        a.row(2 * i + 0) = n.x() * p.row(2) - p.row(0);
        a.row(2 * i + 1) = n.y() * p.row(2) - p.row(1);
    }
    // column equilibration keeps the mm-scale translation column balanced
    Vec4 col_scale;
    for (int j = 0; j < 4; ++j) {
        const double m = a.col(j).cwiseAbs().maxCoeff();
        col_scale(j) = m > 0 ? 1.0 / m : 1.0;
        a.col(j) *= col_scale(j);
    }
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        const double m = a.row(r).norm();
        if (m > 0) a.row(r) /= m;
    }

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (sv(0) <= 0.0 || sv(2) / sv(0) < 1e-10)
        throw DegenerateRays("triangulation rays are rank deficient");
    Vec4 xh = svd.matrixV().col(3);
    xh = xh.cwiseProduct(col_scale);
    if (std::abs(xh(3)) < 1e-14 * xh.head<3>().norm())
        throw DegenerateRays("triangulated point at infinity");
    Vec3 x = xh.head<3>() / xh(3);

    // one Gauss-Newton step on pixel reprojection error
    auto residuals = [&](const Vec3& q, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        r.resize(2 * observations.size());
        if (jac) jac->resize(2 * observations.size(), 3);
        for (std::size_t i = 0; i < observations.size(); ++i) {
            const auto& [cam, px] = observations[i];
            const RigidTransform w2d = cam.pose.inverse();
            const Vec3 pc = w2d.apply(q);
            const double z = pc.z();
            const Vec2 n(pc.x() / z, pc.y() / z);
            const Vec2 d = distort_normalized(cam, n);
            r(2 * i + 0) = cam.fu * d.x() + cam.cu - px.x();
            r(2 * i + 1) = cam.fv * d.y() + cam.cv - px.y();
            if (jac) {
                // distortion-free analytic rows (pipeline default); small
                // distortions only perturb the single polish step
                Eigen::Matrix<double, 2, 3> dn;
                dn << 1.0 / z, 0.0, -pc.x() / (z * z), 0.0, 1.0 / z, -pc.y() / (z * z);
                Eigen::Matrix<double, 2, 3> duv;
                duv.row(0) = cam.fu * dn.row(0);
                duv.row(1) = cam.fv * dn.row(1);
                jac->block<2, 3>(2 * i, 0) = duv * w2d.rotation;
            }
        }
    };

    Eigen::VectorXd r;
    Eigen::MatrixXd j;
    residuals(x, r, &j);
    const double cost0 = r.squaredNorm();
    const Eigen::Matrix3d h = j.transpose() * j;
    const Vec3 g = j.transpose() * r;
    const Vec3 step = h.ldlt().solve(-g);
    if (step.allFinite()) {
        Eigen::VectorXd r2;
        residuals(x + step, r2, nullptr);
        if (r2.squaredNorm() < cost0) {
            x += step;
            r = r2;
        }
    }

    TriangulationResult out;
    out.point = x;
    out.reprojection_rms_px = std::sqrt(r.squaredNorm() / static_cast<double>(observations.size()));
    return out;
}

double reprojection_rms(const CameraModel& cam, const std::vector<std::pair<Vec3, Vec2>>& pairs) {
    if (pairs.empty()) throw InvalidArgument("reprojection_rms needs a nonempty pair list");
    double sum = 0.0;
    for (const auto& [x, px] : pairs) sum += (project(cam, x) - px).squaredNorm();
    return std::sqrt(sum / static_cast<double>(pairs.size()));
}

}  // namespace mmscan
