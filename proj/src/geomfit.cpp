#include "mmscan/geomfit.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "mmscan/levenberg.hpp"

namespace mmscan {

namespace {

Vec3 centroid_of(const std::vector<Vec3>& points) {
    Vec3 c = Vec3::Zero();
    for (const auto& p : points) c += p;
    return c / static_cast<double>(points.size());
}

Mat3 scatter_about(const std::vector<Vec3>& points, const Vec3& c) {
    Mat3 s = Mat3::Zero();
    for (const auto& p : points) {
        const Vec3 d = p - c;
        s += d * d.transpose();
    }
    return s;
}

double rms_of(const std::vector<double>& residuals) {
    double sum = 0.0;
    for (double r : residuals) sum += r * r;
    return std::sqrt(sum / static_cast<double>(residuals.size()));
}

}  // namespace

FitResult<PlaneModel> fit_plane(const std::vector<Vec3>& points) {
    if (points.size() < 3) throw DegenerateInput("plane fit needs >= 3 points");
    const Vec3 c = centroid_of(points);
    const Mat3 s = scatter_about(points, c);
    Eigen::SelfAdjointEigenSolver<Mat3> eig(s);
    const Vec3 evals = eig.eigenvalues();  // ascending
    // collinear: the two smallest scatter directions both vanish
    if (evals(1) <= 1e-12 * std::max(evals(2), 1.0))
        throw DegenerateInput("plane fit: points are collinear");

    FitResult<PlaneModel> out;
    out.model.normal = eig.eigenvectors().col(0).normalized();
    out.model.offset = out.model.normal.dot(c);
    double sum = 0.0;
    for (const auto& p : points) {
        const double d = out.model.distance(p);
        sum += d * d;
    }
    out.rms = std::sqrt(sum / static_cast<double>(points.size()));
    return out;
}

FitResult<SphereModel> fit_sphere(const std::vector<Vec3>& points) {
    if (points.size() < 4) throw DegenerateInput("sphere fit needs >= 4 points");
    const Vec3 c0 = centroid_of(points);
    const Mat3 s = scatter_about(points, c0);
    Eigen::SelfAdjointEigenSolver<Mat3> eig(s);
    if (eig.eigenvalues()(0) <= 1e-10 * std::max(eig.eigenvalues()(2), 1.0))
        throw DegenerateInput("sphere fit: points are coplanar");

    // linear fit of |p|^2 = 2 c.p + (r^2 - |c|^2), centered for conditioning
    Eigen::MatrixXd a(points.size(), 4);
    Eigen::VectorXd b(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Vec3 d = points[i] - c0;
        a.row(i) << 2.0 * d.x(), 2.0 * d.y(), 2.0 * d.z(), 1.0;
        b(i) = d.squaredNorm();
    }
    const Eigen::Vector4d sol = a.colPivHouseholderQr().solve(b);
    Vec3 center = c0 + sol.head<3>();
    double radius = std::sqrt(std::max(0.0, sol(3) + sol.head<3>().squaredNorm()));

    // geometric refinement on radial residuals
    LmProblem prob;
    prob.residuals = [&points](const Eigen::VectorXd& x) {
        Eigen::VectorXd r(points.size());
        const Vec3 c(x(0), x(1), x(2));
        for (std::size_t i = 0; i < points.size(); ++i) r(i) = (points[i] - c).norm() - x(3);
        return r;
    };
    Eigen::VectorXd x0(4);
    x0 << center.x(), center.y(), center.z(), radius;
    LmOptions opts;
    opts.max_iterations = 100;
    const LmReport rep = solve_lm(prob, x0, opts);

    FitResult<SphereModel> out;
    out.model.center = Vec3(rep.x(0), rep.x(1), rep.x(2));
    out.model.radius = rep.x(3);
    out.rms = std::sqrt(rep.final_cost / static_cast<double>(points.size()));
    if (out.model.radius <= 0) throw DegenerateInput("sphere fit collapsed to zero radius");
    return out;
}

FitResult<CylinderModel> fit_cylinder(const std::vector<Vec3>& points) {
    if (points.size() < 6) throw DegenerateInput("cylinder fit needs >= 6 points");
    const Vec3 c0 = centroid_of(points);
    const Mat3 s = scatter_about(points, c0);
    Eigen::SelfAdjointEigenSolver<Mat3> eig(s);
    const Vec3 evals = eig.eigenvalues();
    if (evals(0) <= 1e-10 * std::max(evals(2), 1.0))
        throw DegenerateInput("cylinder fit: points are planar");

    // state: axis point (3, reprojected), axis direction (3, renormalized), radius
    auto project_state = [&c0](Eigen::VectorXd x) {
        Vec3 d = x.segment<3>(3);
        const double n = d.norm();
        d = n > 1e-12 ? Vec3(d / n) : Vec3::UnitZ();
        Vec3 p = x.head<3>();
        p = c0 + (p - c0) - d.dot(p - c0) * d;  // keep on the plane through c0
        Eigen::VectorXd out(7);
        out << p, d, x(6);
        return out;
    };

    LmProblem prob;
    prob.residuals = [&points, &project_state](const Eigen::VectorXd& raw) {
        const Eigen::VectorXd x = project_state(raw);
        const Vec3 p(x(0), x(1), x(2));
        const Vec3 d(x(3), x(4), x(5));
        Eigen::VectorXd r(points.size());
        for (std::size_t i = 0; i < points.size(); ++i) {
            const Vec3 v = points[i] - p;
            r(i) = (v - d.dot(v) * d).norm() - x(6);
        }
        return r;
    };
    prob.plus = [&project_state](const Eigen::VectorXd& x, const Eigen::VectorXd& dx) {
        return project_state(x + dx);
    };

    // try the principal directions as axis candidates; keep the best fit
    FitResult<CylinderModel> best;
    double best_cost = std::numeric_limits<double>::infinity();
    for (int cand = 2; cand >= 0; --cand) {
        const Vec3 axis = eig.eigenvectors().col(cand).normalized();
        double mean_r = 0.0;
        for (const auto& pt : points) {
            const Vec3 v = pt - c0;
            mean_r += (v - axis.dot(v) * axis).norm();
        }
        mean_r /= static_cast<double>(points.size());
        if (mean_r < 1e-9) continue;

        Eigen::VectorXd x0(7);
        x0 << c0, axis, mean_r;
        LmOptions opts;
        opts.max_iterations = 200;
        try {
            const LmReport rep = solve_lm(prob, project_state(x0), opts);
            if (rep.final_cost < best_cost && rep.x(6) > 0) {
                best_cost = rep.final_cost;
                const Eigen::VectorXd x = project_state(rep.x);
                best.model.axis_point = x.head<3>();
                best.model.axis_dir = x.segment<3>(3);
                best.model.radius = x(6);
                best.rms = std::sqrt(rep.final_cost / static_cast<double>(points.size()));
            }
        } catch (const NonConvergence&) {
            // candidate failed; others may still refine
        }
    }
    if (!std::isfinite(best_cost)) throw NonConvergence("cylinder fit failed from all axis candidates");
    return best;
}

CylinderGap cylinder_gap(const CylinderModel& inner, const CylinderModel& outer,
                         double max_axis_angle_deg) {
    double cosang = std::abs(inner.axis_dir.normalized().dot(outer.axis_dir.normalized()));
    cosang = std::min(cosang, 1.0);
    CylinderGap gap;
    gap.axis_angle_deg = rad2deg(std::acos(cosang));
    if (gap.axis_angle_deg > max_axis_angle_deg)
        throw DegenerateInput("cylinder axes misaligned beyond threshold");

    gap.d = outer.radius - inner.radius;
    const Vec3 delta = inner.axis_point - outer.axis_point;
    gap.axis_offset = (delta - outer.axis_dir.dot(delta) * outer.axis_dir).norm();
    return gap;
}

}  // namespace mmscan
