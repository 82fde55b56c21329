#include <doctest.h>

#include <random>

#include "mmscan/geometry.hpp"
#include "mmscan/levenberg.hpp"

using namespace mmscan;

TEST_CASE("LM solves a quadratic bowl exactly") {
    LmProblem prob;
    prob.residuals = [](const Eigen::VectorXd& x) {
        Eigen::VectorXd r(2);
        r << x(0) - 3.0, 2.0 * (x(1) + 1.0);
        return r;
    };
    Eigen::VectorXd x0(2);
    x0 << 100.0, -50.0;
    const LmReport rep = solve_lm(prob, x0, {});
    CHECK(rep.converged);
    CHECK(rep.x(0) == doctest::Approx(3.0).epsilon(1e-10));
    CHECK(rep.x(1) == doctest::Approx(-1.0).epsilon(1e-10));
    CHECK(rep.final_cost < 1e-18);
}

TEST_CASE("LM on Rosenbrock converges and cost never increases") {
    LmProblem prob;
    prob.residuals = [](const Eigen::VectorXd& x) {
        Eigen::VectorXd r(2);
        r << 10.0 * (x(1) - x(0) * x(0)), 1.0 - x(0);
        return r;
    };
    Eigen::VectorXd x0(2);
    x0 << -1.2, 1.0;
    LmOptions opts;
    opts.max_iterations = 500;
    const LmReport rep = solve_lm(prob, x0, opts);
    CHECK(rep.x(0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(rep.x(1) == doctest::Approx(1.0).epsilon(1e-6));
    for (std::size_t i = 1; i < rep.accepted_costs.size(); ++i)
        CHECK(rep.accepted_costs[i] <= rep.accepted_costs[i - 1]);
}

TEST_CASE("LM with a rotation retraction recovers a pose") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const RigidTransform truth =
        RigidTransform::from_axis_angle(Vec3(0.4, -0.8, 0.2), Vec3(10, -5, 30));

    // 12 fixed points observed in the transformed frame
    std::vector<Vec3> pts, obs;
    for (int i = 0; i < 12; ++i) {
        const Vec3 p(40.0 * u(rng), 40.0 * u(rng), 40.0 * u(rng));
        pts.push_back(p);
        obs.push_back(truth.apply(p));
    }

    LmProblem prob;
    prob.residuals = [&](const Eigen::VectorXd& x) {
        const RigidTransform t = RigidTransform::from_axis_angle(x.head<3>(), x.tail<3>());
        Eigen::VectorXd r(3 * pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i)
            r.segment<3>(3 * i) = t.apply(pts[i]) - obs[i];
        return r;
    };
    prob.plus = [](const Eigen::VectorXd& x, const Eigen::VectorXd& dx) {
        Eigen::VectorXd out = x + dx;
        RigidTransform rt;
        rt.rotation =
            rotation_from_axis_angle(dx.head<3>()) * rotation_from_axis_angle(x.head<3>());
        out.head<3>() = rt.axis_angle();
        return out;
    };

    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(6);
    const LmReport rep = solve_lm(prob, x0, {});
    CHECK(rep.converged);
    const RigidTransform got = RigidTransform::from_axis_angle(rep.x.head<3>(), rep.x.tail<3>());
    CHECK(rad2deg(rotation_angle_between(got.rotation, truth.rotation)) < 1e-7);
    CHECK((got.translation - truth.translation).norm() < 1e-7);
}

TEST_CASE("numeric and analytic Jacobians agree") {
    LmProblem prob;
    prob.residuals = [](const Eigen::VectorXd& x) {
        Eigen::VectorXd r(3);
        r << x(0) * x(1), std::sin(x(0)), x(1) * x(1) - 2.0;
        return r;
    };
    Eigen::VectorXd x(2);
    x << 0.7, -1.3;
    const Eigen::MatrixXd jn = numeric_jacobian(prob, x, 1e-6);
    Eigen::MatrixXd ja(3, 2);
    ja << x(1), x(0), std::cos(x(0)), 0.0, 0.0, 2.0 * x(1);
    CHECK((jn - ja).norm() < 1e-6);
}
