#include "mmscan/calib.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace mmscan {

std::vector<Vec3> CalibrationBoard::grid() const {
    validate();
    std::vector<Vec3> pts;
    pts.reserve(static_cast<std::size_t>(rows) * cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            pts.emplace_back((2.0 * j + (i % 2)) * spacing, i * spacing, 0.0);
    return pts;
}

void CalibrationBoard::validate() const {
    if (rows < 2 || cols < 2) throw InvalidArgument("board grid too small");
    if (spacing <= 0 || circle_radius <= 0) throw InvalidArgument("board spacing/radius must be positive");
    if (2.0 * circle_radius >= spacing) throw InvalidArgument("board circles overlap");
}

namespace {

// similarity normalization: centroid to origin, mean distance sqrt(2)
Mat3 normalizing_transform(const std::vector<Vec2>& pts) {
    Vec2 mean = Vec2::Zero();
    for (const auto& p : pts) mean += p;
    mean /= static_cast<double>(pts.size());
    double dist = 0.0;
    for (const auto& p : pts) dist += (p - mean).norm();
    dist /= static_cast<double>(pts.size());
    const double s = dist > 1e-12 ? std::sqrt(2.0) / dist : 1.0;
    Mat3 t = Mat3::Identity();
    t(0, 0) = s;
    t(1, 1) = s;
    t(0, 2) = -s * mean.x();
    t(1, 2) = -s * mean.y();
    return t;
}

Vec2 apply_h(const Mat3& h, const Vec2& p) {
    const Vec3 q = h * Vec3(p.x(), p.y(), 1.0);
    return {q.x() / q.z(), q.y() / q.z()};
}

}  // namespace

Mat3 estimate_homography(const std::vector<Vec2>& board_xy, const std::vector<Vec2>& image_px) {
    if (board_xy.size() != image_px.size()) throw InvalidArgument("correspondence count mismatch");
    const std::size_t n = board_xy.size();
    if (n < 4) throw DegenerateInput("homography needs >= 4 correspondences");

    const Mat3 tb = normalizing_transform(board_xy);
    const Mat3 ti = normalizing_transform(image_px);

    Eigen::MatrixXd a(2 * n, 9);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 b = apply_h(tb, board_xy[i]);
        const Vec2 m = apply_h(ti, image_px[i]);
        a.row(2 * i) << b.x(), b.y(), 1.0, 0.0, 0.0, 0.0, -m.x() * b.x(), -m.x() * b.y(), -m.x();
        a.row(2 * i + 1) << 0.0, 0.0, 0.0, b.x(), b.y(), 1.0, -m.y() * b.x(), -m.y() * b.y(), -m.y();
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    // rank must be 8 for a unique solution; collinear points collapse it
    if (sv(0) <= 0.0 || sv(7) / sv(0) < 1e-10)
        throw DegenerateInput("homography: degenerate correspondence configuration");
    Eigen::Matrix<double, 9, 1> hv = svd.matrixV().col(8);
    Mat3 hn;
    hn << hv(0), hv(1), hv(2), hv(3), hv(4), hv(5), hv(6), hv(7), hv(8);
    Mat3 h = ti.inverse() * hn * tb;
    h /= h.norm();
    if (h(2, 2) < 0.0) h = -h;
    return h;
}

Mat3 intrinsics_from_homographies(const std::vector<Mat3>& homographies) {
    if (homographies.size() < 3) throw InvalidArgument("need >= 3 homographies for intrinsics");

    // zero-skew absolute conic: b = (B11, B22, B13, B23, B33)
    auto v_ij = [](const Mat3& h, int i, int j) {
        Eigen::Matrix<double, 5, 1> v;
        v << h(0, i) * h(0, j), h(1, i) * h(1, j), h(2, i) * h(0, j) + h(0, i) * h(2, j),
            h(2, i) * h(1, j) + h(1, i) * h(2, j), h(2, i) * h(2, j);
        return v;
    };

    Eigen::MatrixXd a(2 * homographies.size(), 5);
    for (std::size_t k = 0; k < homographies.size(); ++k) {
        const Mat3& h = homographies[k];
        a.row(2 * k) = v_ij(h, 0, 1).transpose();
        a.row(2 * k + 1) = (v_ij(h, 0, 0) - v_ij(h, 1, 1)).transpose();
    }
    // the conic coefficients span ~f^2 orders of magnitude; equilibrate the
    // columns so the conditioning test sees geometry, not units
    Eigen::Matrix<double, 5, 1> col_scale;
    for (int j = 0; j < 5; ++j) {
        const double m = a.col(j).cwiseAbs().maxCoeff();
        col_scale(j) = m > 0.0 ? 1.0 / m : 1.0;
        a.col(j) *= col_scale(j);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    // homogeneous system: a unique conic needs rank 4 (one null direction)
    if (sv(3) <= 0.0 || sv(0) / sv(3) > 1e12)
        throw IllConditioned("intrinsics: homography set is ill-conditioned (insufficient tilt diversity)");

    Eigen::Matrix<double, 5, 1> b = svd.matrixV().col(4).cwiseProduct(col_scale);
    if (b(0) < 0.0) b = -b;
    const double b11 = b(0), b22 = b(1), b13 = b(2), b23 = b(3), b33 = b(4);
    if (b11 <= 0.0 || b22 <= 0.0) throw IllConditioned("intrinsics: non-positive conic diagonal");
    const double cu = -b13 / b11;
    const double cv = -b23 / b22;
    const double lambda = b33 - (b13 * b13 / b11 + b23 * b23 / b22);
    if (lambda <= 0.0) throw IllConditioned("intrinsics: negative conic scale");

    Mat3 k = Mat3::Identity();
    k(0, 0) = std::sqrt(lambda / b11);
    k(1, 1) = std::sqrt(lambda / b22);
    k(0, 2) = cu;
    k(1, 2) = cv;
    return k;
}

RigidTransform pose_from_homography(const Mat3& k, const Mat3& h) {
    const Mat3 kinv = k.inverse();
    Vec3 r1 = kinv * h.col(0);
    Vec3 r2 = kinv * h.col(1);
    Vec3 t = kinv * h.col(2);
    const double scale = 2.0 / (r1.norm() + r2.norm());
    r1 *= scale;
    r2 *= scale;
    t *= scale;
    if (t.z() < 0.0) {  // board must be in front of the device
        r1 = -r1;
        r2 = -r2;
        t = -t;
    }
    Mat3 r;
    r.col(0) = r1;
    r.col(1) = r2;
    r.col(2) = r1.cross(r2);

    RigidTransform pose;
    pose.rotation = r;
    pose.translation = t;
    pose.reorthonormalize();
    return pose;
}

namespace {

struct StateLayout {
    int num_devices = 0;
    int num_views = 0;
    int intr_offset(int d) const { return 4 * d; }
    int extr_offset(int d) const { return 4 * num_devices + 6 * (d - 1); }  // d >= 1
    int board_offset(int v) const { return 4 * num_devices + 6 * (num_devices - 1) + 6 * v; }
    int size() const { return 4 * num_devices + 6 * (num_devices - 1) + 6 * num_views; }
};

struct UnpackedState {
    std::vector<Eigen::Vector4d> intrinsics;        // fu fv cu cv
    std::vector<RigidTransform> world_to_device;    // [0] = identity
    std::vector<RigidTransform> board_to_world;
};

UnpackedState unpack(const Eigen::VectorXd& x, const StateLayout& layout) {
    UnpackedState s;
    s.intrinsics.resize(layout.num_devices);
    s.world_to_device.resize(layout.num_devices);
    s.board_to_world.resize(layout.num_views);
    for (int d = 0; d < layout.num_devices; ++d)
        s.intrinsics[d] = x.segment<4>(layout.intr_offset(d));
    s.world_to_device[0] = RigidTransform::identity();
    for (int d = 1; d < layout.num_devices; ++d) {
        const int o = layout.extr_offset(d);
        s.world_to_device[d] = RigidTransform::from_axis_angle(x.segment<3>(o), x.segment<3>(o + 3));
    }
    for (int v = 0; v < layout.num_views; ++v) {
        const int o = layout.board_offset(v);
        s.board_to_world[v] = RigidTransform::from_axis_angle(x.segment<3>(o), x.segment<3>(o + 3));
    }
    return s;
}

Eigen::VectorXd pack(const std::vector<CameraModel>& devices,
                     const std::vector<RigidTransform>& board_poses, const StateLayout& layout) {
    Eigen::VectorXd x(layout.size());
    for (int d = 0; d < layout.num_devices; ++d) {
        x.segment<4>(layout.intr_offset(d)) << devices[d].fu, devices[d].fv, devices[d].cu,
            devices[d].cv;
    }
    for (int d = 1; d < layout.num_devices; ++d) {
        const RigidTransform w2d = devices[d].pose.inverse();
        const int o = layout.extr_offset(d);
        x.segment<3>(o) = w2d.axis_angle();
        x.segment<3>(o + 3) = w2d.translation;
    }
    for (int v = 0; v < layout.num_views; ++v) {
        const int o = layout.board_offset(v);
        x.segment<3>(o) = board_poses[v].axis_angle();
        x.segment<3>(o + 3) = board_poses[v].translation;
    }
    return x;
}

// left-multiplicative retraction on every rotation block
Eigen::VectorXd calib_plus(const Eigen::VectorXd& x, const Eigen::VectorXd& dx,
                           const StateLayout& layout) {
    Eigen::VectorXd out = x + dx;
    auto compose_block = [&](int o) {
        const Mat3 r = rotation_from_axis_angle(dx.segment<3>(o)) *
                       rotation_from_axis_angle(x.segment<3>(o));
        RigidTransform rt;
        rt.rotation = r;
        out.segment<3>(o) = rt.axis_angle();
    };
    for (int d = 1; d < layout.num_devices; ++d) compose_block(layout.extr_offset(d));
    for (int v = 0; v < layout.num_views; ++v) compose_block(layout.board_offset(v));
    return out;
}

Mat3 skew3(const Vec3& v) {
    Mat3 m;
    m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return m;
}

}  // namespace

JointCalibration refine_lm(const std::vector<Vec3>& grid,
                           const std::vector<std::vector<ViewPoints>>& observations,
                           const std::vector<CameraModel>& init_devices,
                           const std::vector<RigidTransform>& init_board_poses, int max_iterations) {
    const int num_devices = static_cast<int>(init_devices.size());
    const int num_views = static_cast<int>(init_board_poses.size());
    if (num_devices < 1 || static_cast<int>(observations.size()) != num_devices)
        throw InvalidArgument("refine_lm: device/observation count mismatch");
    for (const auto& per_device : observations)
        if (static_cast<int>(per_device.size()) != num_views)
            throw InvalidArgument("refine_lm: view count mismatch");
    if (init_devices[0].pose.orthonormality_error() > 1e-9 ||
        init_devices[0].pose.translation.norm() > 1e-9)
        throw InvalidArgument("refine_lm: device 0 must be the world reference (identity pose)");

    StateLayout layout{num_devices, num_views};

    std::size_t num_points = 0;
    for (const auto& per_device : observations)
        for (const auto& view : per_device) num_points += view.size();
    if (num_points == 0) throw InvalidArgument("refine_lm: no observations");

    auto residuals_of = [&](const Eigen::VectorXd& x) {
        const UnpackedState s = unpack(x, layout);
        Eigen::VectorXd r(2 * num_points);
        std::size_t row = 0;
        for (int d = 0; d < num_devices; ++d) {
            const auto& intr = s.intrinsics[d];
            for (int v = 0; v < num_views; ++v) {
                const RigidTransform m = s.world_to_device[d] * s.board_to_world[v];
                for (const auto& [j, px] : observations[d][v]) {
                    const Vec3 p = m.apply(grid[j]);
                    if (p.z() < 1e-6) {  // behind the device: poison the step
                        r(row++) = 1e6;
                        r(row++) = 1e6;
                        continue;
                    }
                    r(row++) = intr(0) * p.x() / p.z() + intr(2) - px.x();
                    r(row++) = intr(1) * p.y() / p.z() + intr(3) - px.y();
                }
            }
        }
        return r;
    };

    auto jacobian_of = [&](const Eigen::VectorXd& x) {
        const UnpackedState s = unpack(x, layout);
        Eigen::MatrixXd j = Eigen::MatrixXd::Zero(2 * num_points, layout.size());
        std::size_t row = 0;
        for (int d = 0; d < num_devices; ++d) {
            const auto& intr = s.intrinsics[d];
            const RigidTransform& w2d = s.world_to_device[d];
            for (int v = 0; v < num_views; ++v) {
                const RigidTransform& b2w = s.board_to_world[v];
                for (const auto& [jidx, px] : observations[d][v]) {
                    (void)px;
                    const Vec3 y = b2w.apply(grid[jidx]);       // world point
                    const Vec3 p = w2d.apply(y);                // device point
                    if (p.z() < 1e-6) {
                        row += 2;
                        continue;
                    }
                    const double iz = 1.0 / p.z();
                    Eigen::Matrix<double, 2, 3> dproj;
                    dproj << intr(0) * iz, 0.0, -intr(0) * p.x() * iz * iz, 0.0, intr(1) * iz,
                        -intr(1) * p.y() * iz * iz;

                    // intrinsics
                    j(row, layout.intr_offset(d) + 0) = p.x() * iz;
                    j(row, layout.intr_offset(d) + 2) = 1.0;
                    j(row + 1, layout.intr_offset(d) + 1) = p.y() * iz;
                    j(row + 1, layout.intr_offset(d) + 3) = 1.0;

                    // device extrinsics (world -> device), left increments
                    if (d > 0) {
                        const int o = layout.extr_offset(d);
                        const Vec3 ry = w2d.rotation * y;
                        j.block<2, 3>(row, o) = dproj * (-skew3(ry));
                        j.block<2, 3>(row, o + 3) = dproj;
                    }

                    // board pose (board -> world), left increments
                    {
                        const int o = layout.board_offset(v);
                        const Vec3 rx = b2w.rotation * grid[jidx];
                        j.block<2, 3>(row, o) = dproj * w2d.rotation * (-skew3(rx));
                        j.block<2, 3>(row, o + 3) = dproj * w2d.rotation;
                    }
                    row += 2;
                }
            }
        }
        return j;
    };

    LmProblem problem;
    problem.residuals = residuals_of;
    problem.jacobian = jacobian_of;
    problem.plus = [layout](const Eigen::VectorXd& x, const Eigen::VectorXd& dx) {
        return calib_plus(x, dx, layout);
    };

    LmOptions opts;
    opts.max_iterations = max_iterations;
    opts.relative_cost_tol = 1e-12;

    const Eigen::VectorXd x0 = pack(init_devices, init_board_poses, layout);
    const LmReport rep = solve_lm(problem, x0, opts);

    const UnpackedState s = unpack(rep.x, layout);
    JointCalibration out;
    out.lm = rep;
    out.devices.resize(num_devices);
    for (int d = 0; d < num_devices; ++d) {
        CameraModel cam = init_devices[d];
        cam.fu = s.intrinsics[d](0);
        cam.fv = s.intrinsics[d](1);
        cam.cu = s.intrinsics[d](2);
        cam.cv = s.intrinsics[d](3);
        cam.pose = s.world_to_device[d].inverse();
        out.devices[d] = cam;
    }
    out.board_poses = s.board_to_world;

    // per-device / per-view reprojection report
    out.per_view_rms.assign(num_devices, std::vector<double>(num_views, 0.0));
    out.device_rms.assign(num_devices, 0.0);
    double total_sq = 0.0;
    std::size_t total_n = 0;
    for (int d = 0; d < num_devices; ++d) {
        double dev_sq = 0.0;
        std::size_t dev_n = 0;
        for (int v = 0; v < num_views; ++v) {
            double view_sq = 0.0;
            const RigidTransform m = s.world_to_device[d] * s.board_to_world[v];
            for (const auto& [jidx, px] : observations[d][v]) {
                const Vec3 p = m.apply(grid[jidx]);
                const Vec2 proj(s.intrinsics[d](0) * p.x() / p.z() + s.intrinsics[d](2),
                                s.intrinsics[d](1) * p.y() / p.z() + s.intrinsics[d](3));
                view_sq += (proj - px).squaredNorm();
            }
            if (!observations[d][v].empty())
                out.per_view_rms[d][v] = std::sqrt(view_sq / observations[d][v].size());
            dev_sq += view_sq;
            dev_n += observations[d][v].size();
        }
        if (dev_n > 0) out.device_rms[d] = std::sqrt(dev_sq / dev_n);
        total_sq += dev_sq;
        total_n += dev_n;
    }
    out.total_rms = total_n > 0 ? std::sqrt(total_sq / total_n) : 0.0;
    return out;
}

namespace {

std::pair<CameraModel, std::vector<RigidTransform>> zhang_init(const std::vector<Vec3>& grid,
                                                               const std::vector<ViewPoints>& views,
                                                               int width, int height) {
    std::vector<Mat3> homographies;
    std::vector<int> usable;
    for (std::size_t v = 0; v < views.size(); ++v) {
        if (views[v].size() < 4) continue;
        std::vector<Vec2> board_xy, image_px;
        for (const auto& [j, px] : views[v]) {
            board_xy.emplace_back(grid[j].x(), grid[j].y());
            image_px.push_back(px);
        }
        homographies.push_back(estimate_homography(board_xy, image_px));
        usable.push_back(static_cast<int>(v));
    }
    if (homographies.size() < 3)
        throw DegenerateInput("calibration needs >= 3 usable views");

    const Mat3 k = intrinsics_from_homographies(homographies);
    CameraModel cam;
    cam.fu = k(0, 0);
    cam.fv = k(1, 1);
    cam.cu = k(0, 2);
    cam.cv = k(1, 2);
    cam.width = width;
    cam.height = height;

    std::vector<RigidTransform> poses(views.size());
    for (std::size_t i = 0; i < homographies.size(); ++i)
        poses[usable[i]] = pose_from_homography(k, homographies[i]);
    // views without enough points inherit a neighboring pose as a crude seed
    for (std::size_t v = 0; v < views.size(); ++v) {
        if (views[v].size() >= 4) continue;
        poses[v] = poses[usable.front()];
    }
    return {cam, poses};
}

}  // namespace

JointCalibration calibrate_device(const std::vector<Vec3>& grid, const std::vector<ViewPoints>& views,
                                  int width, int height) {
    auto [cam, poses] = zhang_init(grid, views, width, height);
    return refine_lm(grid, {views}, {cam}, poses);
}

JointCalibration calibrate_pair(const std::vector<Vec3>& grid, const std::vector<ViewPoints>& views_ref,
                                const std::vector<ViewPoints>& views_other, int width_ref,
                                int height_ref, int width_other, int height_other) {
    if (views_ref.size() != views_other.size())
        throw InvalidArgument("calibrate_pair: view count mismatch");
    auto [cam_ref, poses_ref] = zhang_init(grid, views_ref, width_ref, height_ref);
    auto [cam_other, poses_other] = zhang_init(grid, views_other, width_other, height_other);

    // shared views give per-view relative poses; average as the extrinsic seed
    std::vector<RigidTransform> rel1, rel2;
    for (std::size_t v = 0; v < views_ref.size(); ++v) {
        if (views_ref[v].size() < 4 || views_other[v].size() < 4) continue;
        rel1.push_back(poses_ref[v]);
        rel2.push_back(poses_other[v]);
    }
    const RelativePoseStats rel = stereo_extrinsics(rel1, rel2);

    cam_other.pose = rel.mean;  // other -> ref = other -> world
    return refine_lm(grid, {views_ref, views_other}, {cam_ref, cam_other}, poses_ref);
}

ViewPoints projector_correspondences(const ViewPoints& cam_points, const PhaseMap& absolute_vertical,
                                     const PhaseMap& absolute_horizontal, double pitch_vertical,
                                     double pitch_horizontal) {
    if (absolute_vertical.kind != PhaseKind::Absolute ||
        absolute_horizontal.kind != PhaseKind::Absolute)
        throw InvalidArgument("projector correspondences need absolute phase maps");
    if (absolute_vertical.width != absolute_horizontal.width ||
        absolute_vertical.height != absolute_horizontal.height)
        throw InvalidArgument("phase map dimensions differ");

    auto sample_phase = [](const PhaseMap& map, const Vec2& p, double* out) {
        const int x0 = static_cast<int>(std::floor(p.x()));
        const int y0 = static_cast<int>(std::floor(p.y()));
        if (x0 < 0 || y0 < 0 || x0 + 1 >= map.width || y0 + 1 >= map.height) return false;
        if (!map.valid(x0, y0) || !map.valid(x0 + 1, y0) || !map.valid(x0, y0 + 1) ||
            !map.valid(x0 + 1, y0 + 1))
            return false;
        const double fx = p.x() - x0;
        const double fy = p.y() - y0;
        const double top = (1 - fx) * map.value(x0, y0) + fx * map.value(x0 + 1, y0);
        const double bot = (1 - fx) * map.value(x0, y0 + 1) + fx * map.value(x0 + 1, y0 + 1);
        *out = (1 - fy) * top + fy * bot;
        return true;
    };

    ViewPoints out;
    for (const auto& [j, px] : cam_points) {
        double phi_v = 0.0, phi_h = 0.0;
        if (!sample_phase(absolute_vertical, px, &phi_v)) continue;
        if (!sample_phase(absolute_horizontal, px, &phi_h)) continue;
        out.emplace_back(j, Vec2(phi_v * pitch_vertical / kTwoPi, phi_h * pitch_horizontal / kTwoPi));
    }
    return out;
}

RelativePoseStats stereo_extrinsics(const std::vector<RigidTransform>& board_poses_device1,
                                    const std::vector<RigidTransform>& board_poses_device2) {
    if (board_poses_device1.size() != board_poses_device2.size())
        throw InvalidArgument("stereo_extrinsics: pose list size mismatch");
    if (board_poses_device1.empty()) throw DegenerateInput("stereo_extrinsics: no shared views");

    std::vector<RigidTransform> rel;
    rel.reserve(board_poses_device1.size());
    for (std::size_t v = 0; v < board_poses_device1.size(); ++v)
        rel.push_back(board_poses_device1[v] * board_poses_device2[v].inverse());

    // quaternion mean: dominant eigenvector of the sum of q q^T
    Eigen::Matrix4d acc = Eigen::Matrix4d::Zero();
    Vec3 t_mean = Vec3::Zero();
    Eigen::Quaterniond q0(rel.front().rotation);
    for (const auto& r : rel) {
        Eigen::Quaterniond q(r.rotation);
        if (q.coeffs().dot(q0.coeffs()) < 0.0) q.coeffs() *= -1.0;
        acc += q.coeffs() * q.coeffs().transpose();
        t_mean += r.translation;
    }
    t_mean /= static_cast<double>(rel.size());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(acc);
    Eigen::Vector4d qc = eig.eigenvectors().col(3);
    Eigen::Quaterniond q_mean(qc(3), qc(0), qc(1), qc(2));
    q_mean.normalize();

    RelativePoseStats stats;
    stats.mean.rotation = q_mean.toRotationMatrix();
    stats.mean.translation = t_mean;
    for (const auto& r : rel) {
        stats.rotation_spread_deg = std::max(
            stats.rotation_spread_deg, rad2deg(rotation_angle_between(r.rotation, stats.mean.rotation)));
        stats.translation_spread_mm =
            std::max(stats.translation_spread_mm, (r.translation - t_mean).norm());
    }
    return stats;
}

}  // namespace mmscan
