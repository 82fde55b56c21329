#include "mmscan/markerpose.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numeric>

namespace mmscan {

std::vector<Blob> detect_blobs(const ImageU8& image) {
    const int w = image.width();
    const int h = image.height();
    const std::size_t n = image.size();

    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += image.pixels()[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = image.pixels()[i] - mean;
        var += d * d;
    }
    const double sigma = std::sqrt(var / static_cast<double>(n));
    const double threshold = mean - 2.0 * sigma;

    std::vector<std::uint8_t> visited(n, 0);
    std::vector<Blob> blobs;
    std::vector<int> stack;
    std::vector<int> member;

    for (int y0 = 0; y0 < h; ++y0) {
        for (int x0 = 0; x0 < w; ++x0) {
            const int start = y0 * w + x0;
            if (visited[start] || image.pixels()[start] >= threshold) continue;

            // flood fill (8-connectivity)
            stack.assign(1, start);
            member.clear();
            visited[start] = 1;
            while (!stack.empty()) {
                const int idx = stack.back();
                stack.pop_back();
                member.push_back(idx);
                const int x = idx % w;
                const int y = idx / w;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = x + dx;
                        const int ny = y + dy;
                        if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
                        const int nidx = ny * w + nx;
                        if (!visited[nidx] && image.pixels()[nidx] < threshold) {
                            visited[nidx] = 1;
                            stack.push_back(nidx);
                        }
                    }
                }
            }

            const double area = static_cast<double>(member.size());
            if (area < 50.0 || area > 20000.0) continue;

            Blob blob;
            blob.area = area;
            blob.min_x = w;
            blob.min_y = h;
            double sx = 0.0, sy = 0.0;
            for (int idx : member) {
                const int x = idx % w;
                const int y = idx / w;
                sx += x;
                sy += y;
                blob.min_x = std::min(blob.min_x, x);
                blob.max_x = std::max(blob.max_x, x);
                blob.min_y = std::min(blob.min_y, y);
                blob.max_y = std::max(blob.max_y, y);
            }
            blob.cx = sx / area;
            blob.cy = sy / area;

            // moment ellipse test: filled ellipses give area ~ 4 pi sqrt(det)
            double sxx = 0.0, syy = 0.0, sxy = 0.0;
            for (int idx : member) {
                const double dx = idx % w - blob.cx;
                const double dy = idx / w - blob.cy;
                sxx += dx * dx;
                syy += dy * dy;
                sxy += dx * dy;
            }
            sxx = sxx / area + 1.0 / 12.0;  // pixel quantization spread
            syy = syy / area + 1.0 / 12.0;
            sxy /= area;
            const double det = sxx * syy - sxy * sxy;
            if (det <= 0.0) continue;
            const double fill = area / (4.0 * kPi * std::sqrt(det));
            const double trace_half = 0.5 * (sxx + syy);
            const double lam_min = trace_half - std::sqrt(std::max(0.0, trace_half * trace_half - det));
            if (fill <= 0.8 || fill >= 1.3) continue;
            if (2.0 * std::sqrt(std::max(0.0, lam_min)) < 1.5) continue;  // line-like
            blobs.push_back(blob);
        }
    }
    return blobs;
}

EllipseFit fit_ellipse(const std::vector<Vec2>& contour_points) {
    if (contour_points.size() < 5) throw InvalidArgument("ellipse fit needs >= 5 points");
    const std::size_t n = contour_points.size();

    // normalize for conditioning
    Vec2 mean = Vec2::Zero();
    for (const auto& p : contour_points) mean += p;
    mean /= static_cast<double>(n);
    double scale = 0.0;
    for (const auto& p : contour_points) scale += (p - mean).norm();
    scale /= static_cast<double>(n);
    if (scale < 1e-12) throw DegenerateInput("ellipse fit: coincident points");

    Eigen::MatrixXd d1(n, 3), d2(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 q = (contour_points[i] - mean) / scale;
        d1.row(i) << q.x() * q.x(), q.x() * q.y(), q.y() * q.y();
        d2.row(i) << q.x(), q.y(), 1.0;
    }
    const Mat3 s1 = d1.transpose() * d1;
    const Mat3 s2 = d1.transpose() * d2;
    const Mat3 s3 = d2.transpose() * d2;
    if (std::abs(s3.determinant()) < 1e-12) throw DegenerateInput("ellipse fit: degenerate scatter");
    const Mat3 t = -s3.inverse() * s2.transpose();
    const Mat3 m0 = s1 + s2 * t;
    Mat3 m;  // premultiplied by C1^-1 for the constrained eigenproblem
    m.row(0) = m0.row(2) / 2.0;
    m.row(1) = -m0.row(1);
    m.row(2) = m0.row(0) / 2.0;

    Eigen::EigenSolver<Mat3> eig(m);
    Vec3 a1 = Vec3::Zero();
    bool found = false;
    for (int i = 0; i < 3; ++i) {
        if (std::abs(eig.eigenvalues()(i).imag()) > 1e-9) continue;
        const Vec3 v = eig.eigenvectors().col(i).real();
        const double cond = 4.0 * v(0) * v(2) - v(1) * v(1);
        if (cond > 0.0) {
            a1 = v;
            found = true;
            break;
        }
    }
    if (!found) throw DegenerateInput("ellipse fit: no elliptical solution (near-line scatter)");
    const Vec3 a2 = t * a1;

    // conic in normalized coordinates: A x^2 + B xy + C y^2 + D x + E y + F
    const double A = a1(0), B = a1(1), C = a1(2), D = a2(0), E = a2(1), F = a2(2);
    const double den = B * B - 4.0 * A * C;  // negative for ellipses
    const Vec2 nc((2.0 * C * D - B * E) / den, (2.0 * A * E - B * D) / den);

    // translate to center: A x'^2 + B x'y' + C y'^2 = G
    const double G = A * nc.x() * nc.x() + B * nc.x() * nc.y() + C * nc.y() * nc.y() - F;
    Eigen::Matrix2d q;
    q << A, B / 2.0, B / 2.0, C;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> qe(q);
    const double l0 = qe.eigenvalues()(0);
    const double l1 = qe.eigenvalues()(1);
    if (G / l0 <= 0.0 || G / l1 <= 0.0) throw DegenerateInput("ellipse fit: non-elliptical conic");

    EllipseFit fit;
    const double r0 = std::sqrt(G / l0);  // along eigenvector 0
    const double r1 = std::sqrt(G / l1);
    const Eigen::Vector2d major_dir = r0 >= r1 ? qe.eigenvectors().col(0) : qe.eigenvectors().col(1);
    fit.semi_major = std::max(r0, r1) * scale;
    fit.semi_minor = std::min(r0, r1) * scale;
    if (!std::isfinite(fit.semi_major) || fit.semi_minor < 1e-4 * fit.semi_major)
        throw DegenerateInput("ellipse fit: near-line scatter");
    fit.angle = std::atan2(major_dir.y(), major_dir.x());
    fit.center = mean + scale * nc;

    // gradient-normalized algebraic residual, rescaled to pixels
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 p = (contour_points[i] - mean) / scale;
        const double f = A * p.x() * p.x() + B * p.x() * p.y() + C * p.y() * p.y() + D * p.x() +
                         E * p.y() + F;
        const double gx = 2.0 * A * p.x() + B * p.y() + D;
        const double gy = 2.0 * C * p.y() + B * p.x() + E;
        const double g = std::hypot(gx, gy);
        if (g > 1e-12) sum += (f / g) * (f / g);
    }
    fit.residual_px = std::sqrt(sum / static_cast<double>(n)) * scale;
    return fit;
}

std::optional<EllipseFit> refine_center(const ImageU8& image, const Blob& blob) {
    const double r_est = std::sqrt(blob.area / kPi);
    const double t_max = 2.2 * r_est + 4.0;
    const double step = 0.25;
    const double inside = image.sample_bilinear(blob.cx, blob.cy);

    std::vector<Vec2> edge;
    edge.reserve(64);
    for (int k = 0; k < 64; ++k) {
        const double ang = kTwoPi * k / 64.0;
        const double dx = std::cos(ang);
        const double dy = std::sin(ang);
        // local background: brightest sample along this ray
        double outside = inside;
        for (double t = 0.0; t <= t_max; t += step) {
            const double x = blob.cx + t * dx;
            const double y = blob.cy + t * dy;
            if (x < 0 || x > image.width() - 1 || y < 0 || y > image.height() - 1) break;
            outside = std::max(outside, image.sample_bilinear(x, y));
        }
        if (outside - inside < 16.0) continue;  // no usable contrast on this ray
        const double level = 0.5 * (inside + outside);

        double prev_t = 0.0;
        double prev_v = inside;
        for (double t = step; t <= t_max; t += step) {
            const double x = blob.cx + t * dx;
            const double y = blob.cy + t * dy;
            if (x < 0 || x > image.width() - 1 || y < 0 || y > image.height() - 1) break;
            const double v = image.sample_bilinear(x, y);
            if (v >= level) {
                const double f = (level - prev_v) / std::max(v - prev_v, 1e-12);
                const double tc = prev_t + f * (t - prev_t);
                edge.emplace_back(blob.cx + tc * dx, blob.cy + tc * dy);
                break;
            }
            prev_t = t;
            prev_v = v;
        }
    }
    if (edge.size() < 8) return std::nullopt;
    try {
        return fit_ellipse(edge);
    } catch (const Error&) {
        return std::nullopt;
    }
}

std::array<Vec2, 3> label_centers(const std::array<Vec2, 3>& candidates) {
    // angle at each vertex of the triangle
    double best_dev = std::numeric_limits<double>::infinity();
    int c0_idx = -1;
    for (int i = 0; i < 3; ++i) {
        const Vec2 a = candidates[(i + 1) % 3] - candidates[i];
        const Vec2 b = candidates[(i + 2) % 3] - candidates[i];
        const double cosang = a.dot(b) / std::max(a.norm() * b.norm(), 1e-12);
        const double dev = std::abs(std::acos(std::clamp(cosang, -1.0, 1.0)) - kPi / 2.0);
        if (dev < best_dev) {
            best_dev = dev;
            c0_idx = i;
        }
    }
    if (best_dev > deg2rad(20.0))
        throw AmbiguousTarget("no circle pair near a right angle; cannot identify c0");

    const Vec2 c0 = candidates[c0_idx];
    const Vec2 p = candidates[(c0_idx + 1) % 3];
    const Vec2 q = candidates[(c0_idx + 2) % 3];
    // marker normal faces the cameras, so the projected (x, y) axes wind
    // clockwise in image coordinates
    const Vec2 dp = p - c0;
    const Vec2 dq = q - c0;
    const double cross = dp.x() * dq.y() - dp.y() * dq.x();
    if (cross < 0.0) return {c0, p, q};
    return {c0, q, p};
}

std::pair<MarkerDetection, MarkerDetection> assign_ids(const std::array<Vec2, 3>& view1,
                                                       const std::array<Vec2, 3>& view2) {
    MarkerDetection d1, d2;
    d1.centers = label_centers(view1);
    d1.view = 0;
    d2.centers = label_centers(view2);
    d2.view = 1;
    return {d1, d2};
}

TargetPose estimate_pose(const MarkerDetection& det1, const MarkerDetection& det2,
                         const CameraModel& cam1, const CameraModel& cam2,
                         const MarkerGeometry& geometry) {
    geometry.validate();
    std::array<Vec3, 3> world{};
    double residual = 0.0;
    for (int i = 0; i < 3; ++i) {
        const auto tri = triangulate({{cam1, det1.centers[i]}, {cam2, det2.centers[i]}});
        world[i] = tri.point;
        residual = std::max(residual, tri.reprojection_rms_px);
    }

    const Vec3 x_raw = world[1] - world[0];
    const Vec3 y_raw = world[2] - world[0];
    if (x_raw.norm() < 1e-9 || y_raw.norm() < 1e-9)
        throw DegenerateInput("target centers triangulated onto each other");
    const Vec3 x_hat = x_raw.normalized();
    const Vec3 y_hat = (y_raw - y_raw.dot(x_hat) * x_hat).normalized();

    TargetPose out;
    out.pose.rotation.col(0) = x_hat;
    out.pose.rotation.col(1) = y_hat;
    out.pose.rotation.col(2) = x_hat.cross(y_hat);
    out.pose.translation = world[0];
    out.triangulation_residual_px = residual;
    out.d01_measured = x_raw.norm();
    out.d02_measured = y_raw.norm();
    out.scale_ok = std::abs(out.d01_measured - geometry.d01) <= 0.05 * geometry.d01 &&
                   std::abs(out.d02_measured - geometry.d02) <= 0.05 * geometry.d02;
    return out;
}

std::optional<std::array<Vec2, 3>> ClassicalCenterDetector::detect(const ImageU8& image) const {
    const auto blobs = detect_blobs(image);
    std::vector<EllipseFit> fits;
    for (const auto& blob : blobs) {
        const auto fit = refine_center(image, blob);
        if (fit && fit->residual_px < 0.5) fits.push_back(*fit);
    }
    if (fits.size() != 3) return std::nullopt;
    last_residual_ = 0.0;
    for (const auto& f : fits) last_residual_ = std::max(last_residual_, f.residual_px);
    return std::array<Vec2, 3>{fits[0].center, fits[1].center, fits[2].center};
}

TargetPose track_target(const CenterDetector& detector, const ImageU8& view1, const ImageU8& view2,
                        const CameraModel& cam1, const CameraModel& cam2,
                        const MarkerGeometry& geometry) {
    const auto c1 = detector.detect(view1);
    const auto c2 = detector.detect(view2);
    if (!c1 || !c2) throw DegenerateInput("target not detected in both views");
    const auto [d1, d2] = assign_ids(*c1, *c2);
    return estimate_pose(d1, d2, cam1, cam2, geometry);
}

}  // namespace mmscan
