#include <doctest.h>

#include <random>

#include "mmscan/markerpose.hpp"
#include "mmscan/simulator.hpp"

using namespace mmscan;

namespace {

// nominal tracked-target pose: facing the cameras at the working distance
RigidTransform nominal_target_pose(double yaw_deg = 0.0, double pitch_deg = 0.0,
                                   double roll_deg = 0.0, const Vec3& at = Vec3(-30, -25, 700)) {
    const Mat3 r = rotation_from_axis_angle(Vec3(0, 0, deg2rad(roll_deg))) *
                   rotation_from_axis_angle(Vec3(0, deg2rad(yaw_deg), 0)) *
                   rotation_from_axis_angle(Vec3(deg2rad(pitch_deg), 0, 0)) *
                   rotation_from_axis_angle(Vec3(kPi, 0, 0));
    RigidTransform pose;
    pose.rotation = r;
    pose.translation = at;
    return pose;
}

// associate unordered detections with reference points by proximity
std::array<Vec2, 3> match_to(const std::array<Vec2, 3>& reference,
                             const std::array<Vec2, 3>& detections) {
    std::array<Vec2, 3> out{};
    for (int i = 0; i < 3; ++i) {
        double best = 1e18;
        for (int j = 0; j < 3; ++j) {
            const double d = (reference[i] - detections[j]).norm();
            if (d < best) {
                best = d;
                out[i] = detections[j];
            }
        }
    }
    return out;
}

}  // namespace

TEST_CASE("detect_blobs: target render, blank image, low light") {
    Scene scene = make_default_scene(640, 512, 640, 400);
    const auto views = render_marker_views(scene, nominal_target_pose());
    CHECK(detect_blobs(views.view1).size() == 3);
    CHECK(detect_blobs(views.view2).size() == 3);

    const ImageU8 blank(640, 512, 180);
    CHECK(detect_blobs(blank).empty());

    // x0.3 gain: same three candidates
    const auto dim = render_marker_views(scene, nominal_target_pose(), 0.3);
    CHECK(detect_blobs(dim.view1).size() == 3);
}

TEST_CASE("fit_ellipse: exact circle and rotated ellipse oracles") {
    std::vector<Vec2> circle;
    for (int i = 0; i < 32; ++i) {
        const double a = kTwoPi * i / 32.0;
        circle.emplace_back(100.0 + 10.0 * std::cos(a), 200.0 + 10.0 * std::sin(a));
    }
    const EllipseFit cf = fit_ellipse(circle);
    CHECK((cf.center - Vec2(100, 200)).norm() < 1e-9);
    CHECK(cf.semi_major == doctest::Approx(10.0).epsilon(1e-9));
    CHECK(cf.semi_minor == doctest::Approx(10.0).epsilon(1e-9));
    CHECK(cf.residual_px < 1e-9);

    // 20 x 10 ellipse rotated 30 degrees about (50, -20)
    const double phi = deg2rad(30.0);
    std::vector<Vec2> ellipse;
    for (int i = 0; i < 40; ++i) {
        const double a = kTwoPi * i / 40.0;
        const double x = 20.0 * std::cos(a);
        const double y = 10.0 * std::sin(a);
        ellipse.emplace_back(50.0 + x * std::cos(phi) - y * std::sin(phi),
                             -20.0 + x * std::sin(phi) + y * std::cos(phi));
    }
    const EllipseFit ef = fit_ellipse(ellipse);
    CHECK((ef.center - Vec2(50, -20)).norm() < 1e-6);
    CHECK(ef.semi_major == doctest::Approx(20.0).epsilon(1e-6));
    CHECK(ef.semi_minor == doctest::Approx(10.0).epsilon(1e-6));
    const double angle_err = std::abs(std::remainder(ef.angle - phi, kPi));
    CHECK(angle_err < 1e-6);

    CHECK_THROWS_AS(fit_ellipse({{0, 0}, {1, 0}, {0, 1}, {1, 1}}), InvalidArgument);
    // near-collinear scatter has no elliptical solution
    std::vector<Vec2> line;
    for (int i = 0; i < 12; ++i) line.emplace_back(double(i), 2.0 * i + 0.001 * (i % 2));
    CHECK_THROWS_AS(fit_ellipse(line), DegenerateInput);
}

TEST_CASE("detected centers match projected circle centers below 0.05 px") {
    Scene scene = make_default_scene(1280, 1024, 640, 400);
    const auto views = render_marker_views(scene, nominal_target_pose(10.0, -8.0, 25.0));
    // marker radius 7.5 mm at 700 mm, f = 1600: ~17 px in the image
    ClassicalCenterDetector detector;
    const auto detected = detector.detect(views.view1);
    REQUIRE(detected.has_value());
    const auto matched = match_to(views.truth_cam1, *detected);
    for (int i = 0; i < 3; ++i) CHECK((matched[i] - views.truth_cam1[i]).norm() < 0.05);
}

TEST_CASE("label_centers: right angle, ambiguity, rotation invariance") {
    // ids assigned purely from geometry; shuffling input must not matter
    const std::array<Vec2, 3> truth = {Vec2(300, 300), Vec2(400, 302), Vec2(298, 220)};
    for (int perm = 0; perm < 3; ++perm) {
        std::array<Vec2, 3> shuffled = {truth[perm % 3], truth[(perm + 1) % 3],
                                        truth[(perm + 2) % 3]};
        const auto labeled = label_centers(shuffled);
        CHECK((labeled[0] - truth[0]).norm() < 1e-12);
    }

    // equilateral triangle: no right angle anywhere
    const std::array<Vec2, 3> equi = {Vec2(0, 0), Vec2(100, 0), Vec2(50, 86.6025)};
    CHECK_THROWS_AS(label_centers(equi), AmbiguousTarget);

    // in-plane rotation sweep: ids stay consistent across both views
    Scene scene = make_default_scene(640, 512, 640, 400);
    for (int k = 0; k < 8; ++k) {
        const double roll = 360.0 * k / 8.0;
        const auto views = render_marker_views(scene, nominal_target_pose(0, 0, roll));
        const auto [d1, d2] = assign_ids(views.truth_cam1, views.truth_cam2);
        for (int i = 0; i < 3; ++i) {
            CHECK((d1.centers[i] - views.truth_cam1[i]).norm() < 1e-9);
            CHECK((d2.centers[i] - views.truth_cam2[i]).norm() < 1e-9);
        }
    }
}

TEST_CASE("id assignment is invariant to gain and offset changes") {
    Scene scene = make_default_scene(640, 512, 640, 400);
    const auto views = render_marker_views(scene, nominal_target_pose(5, 5, 40));
    ClassicalCenterDetector detector;

    const auto base = detector.detect(views.view1);
    REQUIRE(base.has_value());

    ImageU8 scaled(views.view1.width(), views.view1.height());
    for (int y = 0; y < scaled.height(); ++y)
        for (int x = 0; x < scaled.width(); ++x)
            scaled.at(x, y) = static_cast<std::uint8_t>(
                std::min(255.0, 0.55 * views.view1.at(x, y) + 30.0));
    const auto mod = detector.detect(scaled);
    REQUIRE(mod.has_value());

    const auto l0 = label_centers(*base);
    const auto l1 = label_centers(*mod);
    for (int i = 0; i < 3; ++i) CHECK((l0[i] - l1[i]).norm() < 0.1);
}

TEST_CASE("estimate_pose: axis-aligned target at the origin gives identity") {
    CameraModel cam1;
    cam1.fu = cam1.fv = 1000.0;
    cam1.cu = 640.0;
    cam1.cv = 512.0;
    cam1.width = 1280;
    cam1.height = 1024;
    cam1.pose.translation = Vec3(0, 0, -700);
    CameraModel cam2 = cam1;
    cam2.pose.translation = Vec3(150, 0, -700);

    MarkerGeometry geom;
    geom.d01 = geom.d02 = 60.0;
    MarkerDetection d1, d2;
    d1.view = 0;
    d2.view = 1;
    const auto centers = geom.centers();
    for (int i = 0; i < 3; ++i) {
        d1.centers[i] = project(cam1, centers[i]);
        d2.centers[i] = project(cam2, centers[i]);
    }
    const TargetPose pose = estimate_pose(d1, d2, cam1, cam2, geom);
    CHECK((pose.pose.rotation - Mat3::Identity()).norm() < 1e-9);
    CHECK(pose.pose.translation.norm() < 1e-6);
    CHECK(pose.scale_ok);
}

TEST_CASE("estimate_pose: simulator round trip and noise propagation") {
    Scene scene = make_default_scene(1280, 1024, 640, 400);
    scene.marker.d01 = scene.marker.d02 = 60.0;
    const RigidTransform truth = nominal_target_pose(12.0, -7.0, 30.0, Vec3(-20, 10, 700));
    const auto views = render_marker_views(scene, truth);
    const auto [d1, d2] = assign_ids(views.truth_cam1, views.truth_cam2);
    const TargetPose pose = estimate_pose(d1, d2, scene.cam1, scene.cam2, scene.marker);
    CHECK(rad2deg(rotation_angle_between(pose.pose.rotation, truth.rotation)) < 0.05);
    CHECK((pose.pose.translation - truth.translation).norm() < 0.02);

    // 0.1 px center noise, 60 mm marker at 700 mm: median orientation error
    // below 0.3 degrees (wide tracking baseline)
    CameraModel cam1 = scene.cam1;
    CameraModel cam2 = scene.cam1;
    cam2.pose.rotation = rotation_from_axis_angle(Vec3(0, -std::atan2(300.0, 700.0), 0));
    cam2.pose.translation = Vec3(300, 0, 0);

    std::mt19937_64 rng(99);
    std::normal_distribution<double> noise(0.0, 0.1);
    std::vector<double> errors;
    for (int t = 0; t < 1000; ++t) {
        MarkerDetection n1, n2;
        bool ok = true;
        for (int i = 0; i < 3; ++i) {
            const Vec3 world = truth.apply(scene.marker.centers()[i]);
            try {
                n1.centers[i] = project(cam1, world) + Vec2(noise(rng), noise(rng));
                n2.centers[i] = project(cam2, world) + Vec2(noise(rng), noise(rng));
            } catch (const PointBehindCamera&) {
                ok = false;
            }
        }
        if (!ok) continue;
        const TargetPose p = estimate_pose(n1, n2, cam1, cam2, scene.marker);
        errors.push_back(rad2deg(rotation_angle_between(p.pose.rotation, truth.rotation)));
    }
    std::sort(errors.begin(), errors.end());
    CHECK(errors[errors.size() / 2] < 0.3);
}

TEST_CASE("pose round trip property over random poses in the frustum") {
    Scene scene = make_default_scene(1280, 1024, 640, 400);
    std::mt19937_64 rng(123);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    int tested = 0;
    while (tested < 1000) {
        const RigidTransform truth = nominal_target_pose(
            25.0 * u(rng), 25.0 * u(rng), 180.0 * u(rng),
            Vec3(-40.0 + 60.0 * u(rng), -30.0 + 50.0 * u(rng), 650.0 + 100.0 * u(rng)));
        MarkerDetection d1, d2;
        d1.view = 0;
        d2.view = 1;
        bool visible = true;
        for (int i = 0; i < 3 && visible; ++i) {
            const Vec3 world = truth.apply(scene.marker.centers()[i]);
            try {
                d1.centers[i] = project(scene.cam1, world);
                d2.centers[i] = project(scene.cam2, world);
            } catch (const PointBehindCamera&) {
                visible = false;
                break;
            }
            if (!scene.cam1.in_image(d1.centers[i]) || !scene.cam2.in_image(d2.centers[i]))
                visible = false;
        }
        if (!visible) continue;
        const TargetPose pose = estimate_pose(d1, d2, scene.cam1, scene.cam2, scene.marker);
        CHECK(rad2deg(rotation_angle_between(pose.pose.rotation, truth.rotation)) < 1e-3);
        CHECK((pose.pose.translation - truth.translation).norm() < 1e-3);
        ++tested;
    }
}

TEST_CASE("track_target under degraded lighting and motion blur") {
    Scene scene = make_default_scene(1280, 1024, 640, 400);
    const RigidTransform truth = nominal_target_pose(8.0, -5.0, 15.0);
    const auto views = render_marker_views(scene, truth, 0.3, 9);

    ClassicalCenterDetector detector;
    const auto c1 = detector.detect(views.view1);
    REQUIRE(c1.has_value());
    const auto matched = match_to(views.truth_cam1, *c1);
    for (int i = 0; i < 3; ++i) CHECK((matched[i] - views.truth_cam1[i]).norm() < 0.3);

    const TargetPose pose =
        track_target(detector, views.view1, views.view2, scene.cam1, scene.cam2, scene.marker);
    CHECK(rad2deg(rotation_angle_between(pose.pose.rotation, truth.rotation)) < 0.3);
    CHECK((pose.pose.translation - truth.translation).norm() < 0.5);
}

TEST_CASE("render_marker_views rejects out-of-view targets") {
    Scene scene = make_default_scene(640, 512, 640, 400);
    CHECK_THROWS_AS(render_marker_views(scene, nominal_target_pose(0, 0, 0, Vec3(0, 0, -500))),
                    DegenerateInput);
    CHECK_THROWS_AS(render_marker_views(scene, nominal_target_pose(0, 0, 0, Vec3(5000, 0, 700))),
                    DegenerateInput);
}
