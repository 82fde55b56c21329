#include "mmscan/usfreehand.hpp"

#include <algorithm>
#include <cmath>

namespace mmscan {

Vec2 segment_cross_point(const ImageU8& bscan) {
    const int w = bscan.width();
    const int h = bscan.height();
    int peak_idx = 0;
    for (std::size_t i = 1; i < bscan.size(); ++i)
        if (bscan.pixels()[i] > bscan.pixels()[peak_idx]) peak_idx = static_cast<int>(i);
    const int peak = bscan.pixels()[peak_idx];
    if (peak == 0) throw DegenerateInput("no echo above threshold in B-scan");
    const double threshold = 0.5 * peak;

    // flood the region containing the global peak
    std::vector<std::uint8_t> visited(bscan.size(), 0);
    std::vector<int> stack{peak_idx};
    visited[peak_idx] = 1;
    double wsum = 0.0, xsum = 0.0, ysum = 0.0;
    while (!stack.empty()) {
        const int idx = stack.back();
        stack.pop_back();
        const int x = idx % w;
        const int y = idx / w;
        const double v = bscan.pixels()[idx];
        wsum += v;
        xsum += v * x;
        ysum += v * y;
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                const int nx = x + dx;
                const int ny = y + dy;
                if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
                const int nidx = ny * w + nx;
                if (!visited[nidx] && bscan.pixels()[nidx] > threshold) {
                    visited[nidx] = 1;
                    stack.push_back(nidx);
                }
            }
        }
    }
    return {xsum / wsum, ysum / wsum};
}

namespace {

// subpixel peak via log-parabola; exact for a sampled Gaussian profile
double refine_peak(double vm, double v0, double vp) {
    if (vm <= 0.0 || v0 <= 0.0 || vp <= 0.0) return 0.0;
    const double lm = std::log(vm);
    const double l0 = std::log(v0);
    const double lp = std::log(vp);
    const double den = lm - 2.0 * l0 + lp;
    if (std::abs(den) < 1e-12) return 0.0;
    const double d = 0.5 * (lm - lp) / den;
    return std::clamp(d, -0.5, 0.5);
}

}  // namespace

std::vector<Vec2> segment_echo_peaks(const ImageU8& bscan, double threshold_frac) {
    const int w = bscan.width();
    const int h = bscan.height();
    int peak = 0;
    for (std::size_t i = 0; i < bscan.size(); ++i) peak = std::max<int>(peak, bscan.pixels()[i]);
    std::vector<Vec2> out;
    if (peak == 0) return out;
    const double threshold = threshold_frac * peak;

    // column-wise peaks catch near-horizontal wall segments
    for (int x = 0; x < w; ++x) {
        for (int y = 1; y + 1 < h; ++y) {
            const double v = bscan.at(x, y);
            if (v < threshold) continue;
            if (v < bscan.at(x, y - 1) || v <= bscan.at(x, y + 1)) continue;
            out.emplace_back(x, y + refine_peak(bscan.at(x, y - 1), v, bscan.at(x, y + 1)));
        }
    }
    // row-wise peaks catch the near-vertical segments
    for (int y = 0; y < h; ++y) {
        for (int x = 1; x + 1 < w; ++x) {
            const double v = bscan.at(x, y);
            if (v < threshold) continue;
            if (v < bscan.at(x - 1, y) || v <= bscan.at(x + 1, y)) continue;
            out.emplace_back(x + refine_peak(bscan.at(x - 1, y), v, bscan.at(x + 1, y)), y);
        }
    }
    return out;
}

namespace {

// the 24 orientation-preserving symmetries of the cube, used as coarse seeds
std::vector<Mat3> canonical_orientations() {
    std::vector<Mat3> out;
    const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    for (const auto& perm : perms) {
        for (int signs = 0; signs < 8; ++signs) {
            Mat3 r = Mat3::Zero();
            for (int c = 0; c < 3; ++c)
                r(perm[c], c) = (signs >> c) & 1 ? -1.0 : 1.0;
            if (std::abs(r.determinant() - 1.0) < 1e-9) out.push_back(r);
        }
    }
    return out;
}

void check_motion_diversity(const CalibrationDataset& data) {
    if (data.observations.size() < 6)
        throw UnderconstrainedMotion("probe calibration needs >= 6 observations");

    // distinct orientations: greedy clustering at 1 degree
    std::vector<Mat3> reps;
    double max_angle = 0.0;
    for (const auto& obs : data.observations) {
        bool found = false;
        for (const auto& r : reps) {
            if (rotation_angle_between(obs.probe_pose.rotation, r) < deg2rad(1.0)) {
                found = true;
                break;
            }
        }
        if (!found) reps.push_back(obs.probe_pose.rotation);
    }
    for (std::size_t i = 0; i < reps.size(); ++i)
        for (std::size_t j = i + 1; j < reps.size(); ++j)
            max_angle = std::max(max_angle, rotation_angle_between(reps[i], reps[j]));

    if (reps.size() < 3 || max_angle <= deg2rad(30.0))
        throw UnderconstrainedMotion(
            "probe poses span too little orientation diversity for a point phantom");
}

}  // namespace

ProbeSolveResult solve_calibration(const CalibrationDataset& data) {
    check_motion_diversity(data);
    const std::size_t n = data.observations.size();

    const double s0 = data.nominal_depth_mm / static_cast<double>(data.image_height);

    // state: [rotvec(3), t(3), sx, sy, p_F(3)]
    auto residuals_of = [&](const Eigen::VectorXd& x) {
        const RigidTransform t_ti = RigidTransform::from_axis_angle(x.segment<3>(0), x.segment<3>(3));
        const double sx = x(6), sy = x(7);
        const Vec3 pf = x.segment<3>(8);
        Eigen::VectorXd r(3 * n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& obs = data.observations[i];
            const Vec3 xi(sx * obs.pixel.x(), sy * obs.pixel.y(), 0.0);
            r.segment<3>(3 * i) = obs.probe_pose.apply(t_ti.apply(xi)) - pf;
        }
        return r;
    };

    LmProblem problem;
    problem.residuals = residuals_of;
    problem.plus = [](const Eigen::VectorXd& x, const Eigen::VectorXd& dx) {
        Eigen::VectorXd out = x + dx;
        RigidTransform rt;
        rt.rotation = rotation_from_axis_angle(dx.segment<3>(0)) *
                      rotation_from_axis_angle(x.segment<3>(0));
        out.segment<3>(0) = rt.axis_angle();
        return out;
    };

    // coarse orientation search: score all 24 canonical rotations
    const auto orientations = canonical_orientations();
    std::vector<std::pair<double, int>> scored;
    for (std::size_t k = 0; k < orientations.size(); ++k) {
        RigidTransform t_ti;
        t_ti.rotation = orientations[k];
        Vec3 mean = Vec3::Zero();
        std::vector<Vec3> mapped(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& obs = data.observations[i];
            mapped[i] = obs.probe_pose.apply(
                t_ti.apply(Vec3(s0 * obs.pixel.x(), s0 * obs.pixel.y(), 0.0)));
            mean += mapped[i];
        }
        mean /= static_cast<double>(n);
        double cost = 0.0;
        for (const auto& m : mapped) cost += (m - mean).squaredNorm();
        scored.emplace_back(cost, static_cast<int>(k));
    }
    std::sort(scored.begin(), scored.end());

    LmOptions opts;
    opts.max_iterations = 500;
    opts.relative_cost_tol = 1e-12;
    opts.step_tol = 1e-10;

    // refine from the few best coarse seeds and keep the lowest cost
    ProbeSolveResult best;
    double best_cost = std::numeric_limits<double>::infinity();
    bool any_converged = false;
    const int seeds = std::min<int>(3, static_cast<int>(scored.size()));
    for (int s = 0; s < seeds; ++s) {
        const Mat3& r0 = orientations[scored[s].second];
        RigidTransform t_ti0;
        t_ti0.rotation = r0;
        Vec3 pf0 = Vec3::Zero();
        for (const auto& obs : data.observations)
            pf0 += obs.probe_pose.apply(t_ti0.apply(Vec3(s0 * obs.pixel.x(), s0 * obs.pixel.y(), 0.0)));
        pf0 /= static_cast<double>(n);

        Eigen::VectorXd x0(11);
        x0.segment<3>(0) = t_ti0.axis_angle();
        x0.segment<3>(3) = Vec3::Zero();
        x0(6) = s0;
        x0(7) = s0;
        x0.segment<3>(8) = pf0;

        LmReport rep;
        try {
            rep = solve_lm(problem, x0, opts);
        } catch (const NonConvergence&) {
            continue;
        }
        if (rep.final_cost < best_cost) {
            best_cost = rep.final_cost;
            any_converged = rep.converged;
            best.lm = rep;
        }
    }
    if (!std::isfinite(best_cost) || !any_converged)
        throw NonConvergence("probe calibration did not converge within 500 iterations");

    const Eigen::VectorXd& x = best.lm.x;
    best.calibration.t_T_I = RigidTransform::from_axis_angle(x.segment<3>(0), x.segment<3>(3));
    best.calibration.sx = x(6);
    best.calibration.sy = x(7);
    best.phantom.cross_point_world = x.segment<3>(8);

    // gauge: flipping a scale sign together with a 180-degree rotation of
    // the image frame is the same physical calibration (image points have
    // z = 0, so the third axis sign is free); report positive scales
    if (best.calibration.sx < 0.0) {
        best.calibration.sx = -best.calibration.sx;
        Mat3 flip = Mat3::Identity();
        flip(0, 0) = -1.0;
        flip(2, 2) = -1.0;
        best.calibration.t_T_I.rotation = best.calibration.t_T_I.rotation * flip;
    }
    if (best.calibration.sy < 0.0) {
        best.calibration.sy = -best.calibration.sy;
        Mat3 flip = Mat3::Identity();
        flip(1, 1) = -1.0;
        flip(2, 2) = -1.0;
        best.calibration.t_T_I.rotation = best.calibration.t_T_I.rotation * flip;
    }
    best.calibration.validate();

    const Eigen::VectorXd r = residuals_of(x);
    best.per_frame_residual_mm.resize(n);
    for (std::size_t i = 0; i < n; ++i) best.per_frame_residual_mm[i] = r.segment<3>(3 * i).norm();
    best.rms_mm = std::sqrt(r.squaredNorm() / static_cast<double>(n));
    return best;
}

Vec3 map_pixel_to_world(const ProbeCalibration& cal, const RigidTransform& probe_pose, const Vec2& px) {
    return probe_pose.apply(cal.map_to_transducer(px));
}

double cr1(const std::vector<ProbeCalibration>& calibrations, const Vec2& trial_pixel) {
    if (calibrations.size() < 2) throw InvalidArgument("CR1 needs >= 2 calibrations");
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < calibrations.size(); ++a) {
        for (std::size_t b = a + 1; b < calibrations.size(); ++b) {
            sum += (calibrations[a].map_to_transducer(trial_pixel) -
                    calibrations[b].map_to_transducer(trial_pixel))
                       .norm();
            ++pairs;
        }
    }
    return sum / static_cast<double>(pairs);
}

double cr2(const std::vector<ProbeCalibration>& calibrations, const Vec2& trial_pixel) {
    if (calibrations.size() < 2) throw InvalidArgument("CR2 needs >= 2 calibrations");
    std::vector<Vec3> pts;
    pts.reserve(calibrations.size());
    for (const auto& c : calibrations) pts.push_back(c.map_to_transducer(trial_pixel));
    // mean via deviations from the first point: identical calibrations give
    // exactly zero instead of rounding dust
    Vec3 dev = Vec3::Zero();
    for (const auto& p : pts) dev += p - pts.front();
    const Vec3 mean = pts.front() + dev / static_cast<double>(pts.size());
    double sum = 0.0;
    for (const auto& p : pts) sum += (p - mean).norm();
    return sum / static_cast<double>(pts.size());
}

std::vector<Vec2> cr_trial_points(int width, int height) {
    const double umax = width - 1;
    const double vmax = height - 1;
    return {Vec2(umax / 2.0, vmax / 2.0), Vec2(0, 0), Vec2(umax, 0), Vec2(0, vmax), Vec2(umax, vmax)};
}

}  // namespace mmscan
