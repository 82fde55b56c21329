#include <doctest.h>

#include <random>

#include "mmscan/geomfit.hpp"

using namespace mmscan;

namespace {

std::vector<Vec3> rigidly_moved(const std::vector<Vec3>& pts, const RigidTransform& t) {
    std::vector<Vec3> out;
    out.reserve(pts.size());
    for (const auto& p : pts) out.push_back(t.apply(p));
    return out;
}

RigidTransform test_motion() {
    return RigidTransform::from_axis_angle(Vec3(0.3, -0.7, 0.5), Vec3(40, -90, 15));
}

std::vector<Vec3> sampled_cylinder(double radius, double half_len, double arc_deg, int n,
                                   std::mt19937_64& rng, double sigma) {
    std::uniform_real_distribution<double> uz(-half_len, half_len);
    std::uniform_real_distribution<double> ua(-deg2rad(arc_deg) / 2, deg2rad(arc_deg) / 2);
    std::normal_distribution<double> noise(0.0, sigma);
    std::vector<Vec3> pts;
    for (int i = 0; i < n; ++i) {
        const double a = ua(rng);
        const double r = radius + (sigma > 0 ? noise(rng) : 0.0);
        pts.emplace_back(r * std::cos(a), r * std::sin(a), uz(rng));
    }
    return pts;
}

}  // namespace

TEST_CASE("fit_plane: exact, noisy, and tilt-invariant") {
    // three exact points on z = 0
    const std::vector<Vec3> tri = {{0, 0, 0}, {10, 0, 0}, {0, 10, 0}};
    const auto flat = fit_plane(tri);
    CHECK(std::abs(std::abs(flat.model.normal.z()) - 1.0) < 1e-12);
    CHECK(flat.rms < 1e-12);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-100.0, 100.0);
    std::normal_distribution<double> noise(0.0, 0.1);
    std::vector<Vec3> cloud;
    for (int i = 0; i < 20000; ++i) cloud.emplace_back(u(rng), u(rng), noise(rng));
    const auto fit = fit_plane(cloud);
    CHECK(fit.rms == doctest::Approx(0.1).epsilon(0.1));

    // rotating the same cloud by 45 degrees leaves the RMS unchanged
    const auto tilted = fit_plane(rigidly_moved(cloud, RigidTransform::from_axis_angle(
                                                           Vec3(0, deg2rad(45.0), 0), Vec3::Zero())));
    CHECK(tilted.rms == doctest::Approx(fit.rms).epsilon(1e-9));

    CHECK_THROWS_AS(fit_plane({{0, 0, 0}, {1, 1, 1}, {2, 2, 2}}), DegenerateInput);
    CHECK_THROWS_AS(fit_plane({{0, 0, 0}, {1, 1, 1}}), DegenerateInput);
}

TEST_CASE("fit_sphere: exact radius, partial coverage, degeneracy") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const Vec3 center(12.0, -4.0, 700.0);
    const double radius = 19.8;

    std::vector<Vec3> exact;
    for (int i = 0; i < 500; ++i) {
        Vec3 d(u(rng), u(rng), u(rng));
        while (d.norm() < 1e-3) d = Vec3(u(rng), u(rng), u(rng));
        exact.push_back(center + radius * d.normalized());
    }
    const auto fit = fit_sphere(exact);
    CHECK(std::abs(fit.model.radius - radius) < 1e-9);
    CHECK((fit.model.center - center).norm() < 1e-9);
    CHECK(fit.rms < 1e-9);

    // hemisphere only, sigma = 0.05 mm: radius bias < 0.05 mm
    std::normal_distribution<double> noise(0.0, 0.05);
    std::vector<Vec3> hemi;
    for (int i = 0; i < 4000; ++i) {
        Vec3 d(u(rng), u(rng), -std::abs(u(rng)));
        while (d.norm() < 1e-3) d = Vec3(u(rng), u(rng), -std::abs(u(rng)));
        hemi.push_back(center + (radius + noise(rng)) * d.normalized());
    }
    const auto hfit = fit_sphere(hemi);
    CHECK(std::abs(hfit.model.radius - radius) < 0.05);

    // coplanar circle is degenerate
    std::vector<Vec3> circle;
    for (int i = 0; i < 100; ++i) {
        const double a = kTwoPi * i / 100.0;
        circle.emplace_back(std::cos(a) * 10.0, std::sin(a) * 10.0, 5.0);
    }
    CHECK_THROWS_AS(fit_sphere(circle), DegenerateInput);
    CHECK_THROWS_AS(fit_sphere({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}), DegenerateInput);
}

TEST_CASE("fit_cylinder: exact, half shell, planar degeneracy") {
    std::mt19937_64 rng(7);
    auto exact = sampled_cylinder(30.0, 60.0, 360.0, 2000, rng, 0.0);
    const auto fit = fit_cylinder(exact);
    CHECK(std::abs(fit.model.radius - 30.0) < 1e-6);
    CHECK(std::abs(std::abs(fit.model.axis_dir.z()) - 1.0) < 1e-9);
    CHECK(fit.rms < 1e-6);

    // one-sided arc (a structured-light view) with noise
    auto shell = sampled_cylinder(30.0, 60.0, 150.0, 4000, rng, 0.05);
    const RigidTransform motion = test_motion();
    const auto sfit = fit_cylinder(rigidly_moved(shell, motion));
    CHECK(std::abs(sfit.model.radius - 30.0) < 0.2);

    std::uniform_real_distribution<double> u(-50.0, 50.0);
    std::vector<Vec3> plane_pts;
    for (int i = 0; i < 200; ++i) plane_pts.emplace_back(u(rng), u(rng), 0.0);
    CHECK_THROWS_AS(fit_cylinder(plane_pts), DegenerateInput);
}

TEST_CASE("fits are invariant to rigid motion") {
    std::mt19937_64 rng(11);
    const RigidTransform motion = test_motion();

    auto cyl = sampled_cylinder(22.0, 40.0, 200.0, 1500, rng, 0.02);
    const auto f0 = fit_cylinder(cyl);
    const auto f1 = fit_cylinder(rigidly_moved(cyl, motion));
    CHECK(f1.rms == doctest::Approx(f0.rms).epsilon(1e-6));
    CHECK(f1.model.radius == doctest::Approx(f0.model.radius).epsilon(1e-9));
    // axis transforms covariantly
    const Vec3 moved_axis = motion.rotation * f0.model.axis_dir;
    CHECK(std::abs(std::abs(moved_axis.dot(f1.model.axis_dir)) - 1.0) < 1e-9);

    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Vec3> sph;
    const Vec3 c(3, 4, 5);
    for (int i = 0; i < 600; ++i) {
        Vec3 d(u(rng), u(rng), u(rng));
        while (d.norm() < 1e-3) d = Vec3(u(rng), u(rng), u(rng));
        sph.push_back(c + (15.0 + 0.02 * u(rng)) * d.normalized());
    }
    const auto s0 = fit_sphere(sph);
    const auto s1 = fit_sphere(rigidly_moved(sph, motion));
    CHECK(s1.rms == doctest::Approx(s0.rms).epsilon(1e-6));
    CHECK((s1.model.center - motion.apply(s0.model.center)).norm() < 1e-6);
}

TEST_CASE("cylinder_gap: exact difference, zero case, misalignment") {
    CylinderModel inner;
    inner.axis_point = Vec3(0, 0, 700);
    inner.axis_dir = Vec3::UnitX();
    inner.radius = 10.0;
    CylinderModel outer = inner;
    outer.radius = 32.38;

    const CylinderGap gap = cylinder_gap(inner, outer);
    CHECK(gap.d == doctest::Approx(22.38).epsilon(1e-12));
    CHECK(gap.axis_offset < 1e-12);

    CHECK(cylinder_gap(inner, inner).d == doctest::Approx(0.0));

    CylinderModel skew = outer;
    skew.axis_dir = Vec3(std::cos(deg2rad(10.0)), std::sin(deg2rad(10.0)), 0.0);
    CHECK_THROWS_AS(cylinder_gap(inner, skew), DegenerateInput);
}
