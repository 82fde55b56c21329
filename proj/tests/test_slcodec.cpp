#include <doctest.h>

#include <random>

#include "mmscan/slcodec.hpp"

using namespace mmscan;

TEST_CASE("phase-shift patterns: periodicity and decode round trip") {
    const auto set = generate_phase_shift_patterns(8, 18.0, 1280, 16);
    CHECK(set.images.size() == 8);
    for (const auto& img : set.images) {
        CHECK(img.width() == 1280);
        // column 0 and column 18 are one full period apart
        CHECK(img.at(0, 0) == img.at(18, 0));
    }

    CHECK_THROWS_AS(generate_phase_shift_patterns(2, 18.0, 64, 8), InvalidArgument);
    CHECK_THROWS_AS(generate_phase_shift_patterns(8, 2.0, 64, 8), InvalidArgument);

    // N = 3 decoded at every column recovers 2 pi x / p mod 2 pi within
    // quantization error
    const int width = 256;
    const double pitch = 16.0;
    const auto small = generate_phase_shift_patterns(3, pitch, width, 4);
    const PhaseMap wrapped = wrapped_phase(small.images);
    for (int x = 0; x < width; ++x) {
        REQUIRE(wrapped.valid(x, 0));
        double expect = std::fmod(kTwoPi * x / pitch, kTwoPi);
        if (expect > kPi) expect -= kTwoPi;
        double err = std::abs(wrapped.value(x, 0) - expect);
        err = std::min(err, std::abs(err - kTwoPi));
        CHECK(err <= 0.01);
    }
}

TEST_CASE("gray-code patterns: binary planes and one-bit adjacency") {
    const auto set = generate_gray_code_patterns(7, 18.0, 1280, 8);
    CHECK(set.images.size() == 7);
    for (const auto& img : set.images)
        for (int x = 0; x < img.width(); ++x) CHECK((img.at(x, 0) == 0 || img.at(x, 0) == 255));

    // adjacent period indices differ in exactly one encoded bit
    for (std::uint32_t k = 0; k + 1 < 128; ++k) {
        const std::uint32_t diff = binary_to_gray(k) ^ binary_to_gray(k + 1);
        CHECK((diff & (diff - 1)) == 0);
        CHECK(diff != 0);
    }

    // insufficient coverage must be rejected
    CHECK_THROWS_AS(generate_gray_code_patterns(3, 18.0, 1280, 8), InvalidArgument);
}

TEST_CASE("gray decode: brute force over all 2^7 codes") {
    // encode each period index into bit planes of a 128-column image with
    // pitch 1, then decode
    const int bits = 7;
    const auto set = generate_gray_code_patterns(bits, 4.0, 512, 2);
    const auto white = generate_white_pattern(512, 2);
    const auto black = generate_black_pattern(512, 2);
    const PeriodIndexMap k = decode_gray(set.images, white.images[0], black.images[0]);
    for (int x = 0; x < 512; ++x) {
        REQUIRE(k.mask[k.index(x, 0)] == 1);
        CHECK(k.values[k.index(x, 0)] == x / 4);
    }

    // explicit gray-to-binary identities
    CHECK(gray_to_binary(0b000) == 0);
    CHECK(gray_to_binary(0b111) == 5);
    for (std::uint32_t v = 0; v < 128; ++v) CHECK(gray_to_binary(binary_to_gray(v)) == v);
}

TEST_CASE("gray decode: inverted reference pixels are masked") {
    const auto set = generate_gray_code_patterns(3, 8.0, 64, 2);
    ImageU8 white(64, 2, 10);
    ImageU8 black(64, 2, 200);  // white <= black everywhere
    const PeriodIndexMap k = decode_gray(set.images, white, black);
    for (std::size_t i = 0; i < k.mask.size(); ++i) CHECK(k.mask[i] == 0);
}

TEST_CASE("wrapped phase: exact sinusoid, masking, affine invariance") {
    // I_n = 128 + 100 cos(pi/3 - 2 pi n / 8) at a single pixel
    std::vector<ImageU8> frames;
    std::vector<double> exact(8);
    for (int n = 0; n < 8; ++n) {
        ImageU8 img(4, 1);
        exact[n] = 128.0 + 100.0 * std::cos(kPi / 3.0 - kTwoPi * n / 8.0);
        for (int x = 0; x < 4; ++x) img.at(x, 0) = static_cast<std::uint8_t>(std::lround(exact[n]));
        frames.push_back(img);
    }
    const PhaseMap wrapped = wrapped_phase(frames);
    CHECK(wrapped.valid(0, 0));
    CHECK(wrapped.value(0, 0) == doctest::Approx(kPi / 3.0).epsilon(1e-2));

    // exact (unquantized) spot check with synthetic floats via small ints is
    // limited by 8-bit storage; verify the estimator itself on a clean signal
    std::vector<ImageU8> clean;
    for (int n = 0; n < 8; ++n) {
        ImageU8 img(1, 1);
        img.at(0, 0) = 0;
        clean.push_back(img);
    }
    const PhaseMap masked = wrapped_phase(clean);
    CHECK_FALSE(masked.valid(0, 0));  // zero modulation

    CHECK_THROWS_AS(wrapped_phase(std::vector<ImageU8>(2, ImageU8(2, 2))), InvalidArgument);

    // affine intensity change I -> 2 I + 10 leaves the phase bitwise equal
    const auto set = generate_phase_shift_patterns(4, 16.0, 64, 2);
    std::vector<ImageU8> base, affine;
    for (const auto& img : set.images) {
        ImageU8 dim(img.width(), img.height());
        ImageU8 aff(img.width(), img.height());
        for (int y = 0; y < img.height(); ++y) {
            for (int x = 0; x < img.width(); ++x) {
                const int v = img.at(x, y) / 3;  // keep 2 v + 10 under 255
                dim.at(x, y) = static_cast<std::uint8_t>(v);
                aff.at(x, y) = static_cast<std::uint8_t>(2 * v + 10);
            }
        }
        base.push_back(dim);
        affine.push_back(aff);
    }
    const PhaseMap pa = wrapped_phase(base);
    const PhaseMap pb = wrapped_phase(affine);
    for (std::size_t i = 0; i < pa.values.size(); ++i) {
        if (!pa.mask[i] || !pb.mask[i]) continue;
        CHECK(std::abs(pa.values[i] - pb.values[i]) < 1e-9);
    }
}

TEST_CASE("wrapped phase stays in (-pi, pi]") {
    const auto set = generate_phase_shift_patterns(8, 18.0, 1280, 2);
    const PhaseMap wrapped = wrapped_phase(set.images);
    for (std::size_t i = 0; i < wrapped.values.size(); ++i) {
        if (!wrapped.mask[i]) continue;
        CHECK(wrapped.values[i] > -kPi);
        CHECK(wrapped.values[i] <= kPi);
    }
}

TEST_CASE("unwrap_absolute: base case and period correction") {
    // phi = 0.5 with k = 3 away from boundaries: Phi = 0.5 + 6 pi
    PhaseMap wrapped(5, 1, PhaseKind::Wrapped);
    PeriodIndexMap periods(5, 1);
    for (int x = 0; x < 5; ++x) {
        wrapped.values[x] = 0.5;
        wrapped.mask[x] = 1;
        periods.values[x] = 3;
        periods.mask[x] = 1;
    }
    const PhaseMap abs1 = unwrap_absolute(wrapped, periods);
    CHECK(abs1.value(2, 0) == doctest::Approx(0.5 + 6.0 * kPi));

    // phi < 0 lies in the second half of the period: k is bumped by one
    PhaseMap w2(5, 1, PhaseKind::Wrapped);
    PeriodIndexMap k2(5, 1);
    for (int x = 0; x < 5; ++x) {
        w2.values[x] = -0.5;
        w2.mask[x] = 1;
        k2.values[x] = 3;
        k2.mask[x] = 1;
    }
    const PhaseMap abs2 = unwrap_absolute(w2, k2);
    CHECK(abs2.value(2, 0) == doctest::Approx(-0.5 + 8.0 * kPi));

    // code misread by one period at a wrap boundary: snapped back to match
    // the neighbors
    PhaseMap w3(5, 1, PhaseKind::Wrapped);
    PeriodIndexMap k3(5, 1);
    const double phis[5] = {kPi - 0.30, kPi - 0.15, kPi - 0.01, -kPi + 0.14, -kPi + 0.29};
    const int ks[5] = {3, 3, 4, 3, 3};  // middle pixel read one period high
    for (int x = 0; x < 5; ++x) {
        w3.values[x] = phis[x];
        w3.mask[x] = 1;
        k3.values[x] = ks[x];
        k3.mask[x] = 1;
    }
    const PhaseMap abs3 = unwrap_absolute(w3, k3);
    for (int x = 1; x < 5; ++x)
        CHECK(std::abs(abs3.value(x, 0) - abs3.value(x - 1, 0)) < 0.5);

    PeriodIndexMap wrong_size(4, 1);
    CHECK_THROWS_AS(unwrap_absolute(w3, wrong_size), InvalidArgument);
}

TEST_CASE("full encode-decode loop recovers the projector column within 0.05 px") {
    // capture with identity optics: the camera sees the projector plane 1:1
    const int width = 640;
    const double pitch = 18.0;
    const auto ps = generate_phase_shift_patterns(8, pitch, width, 4);
    const auto gc = generate_gray_code_patterns(7, pitch, width, 4);
    const auto white = generate_white_pattern(width, 4);
    const auto black = generate_black_pattern(width, 4);

    const PhaseMap wrapped = wrapped_phase(ps.images);
    const PeriodIndexMap k = decode_gray(gc.images, white.images[0], black.images[0]);
    const PhaseMap absolute = unwrap_absolute(wrapped, k);
    for (int x = 0; x < width; ++x) {
        REQUIRE(absolute.valid(x, 0));
        const double col = absolute.value(x, 0) * pitch / kTwoPi;
        CHECK(std::abs(col - x) < 0.05);
    }
}

TEST_CASE("gray-code adjacency on the decoded map") {
    const int width = 640;
    const auto gc = generate_gray_code_patterns(7, 18.0, width, 2);
    const auto white = generate_white_pattern(width, 2);
    const auto black = generate_black_pattern(width, 2);
    const PeriodIndexMap k = decode_gray(gc.images, white.images[0], black.images[0]);
    for (int x = 1; x < width; ++x)
        CHECK(std::abs(k.values[k.index(x, 0)] - k.values[k.index(x - 1, 0)]) <= 1);
}

TEST_CASE("centerline pattern and unwrap seeding") {
    const int width = 512;
    const double pitch = 16.0;
    const auto cl = generate_centerline_pattern(width, 8);
    CHECK(cl.images.size() == 1);

    // stripe centroid sits at the encoded center coordinate
    double wsum = 0.0, xsum = 0.0;
    for (int x = 0; x < width; ++x) {
        wsum += cl.images[0].at(x, 0);
        xsum += double(x) * cl.images[0].at(x, 0);
    }
    CHECK(xsum / wsum == doctest::Approx(centerline_coordinate(width)).epsilon(1e-9));

    // identity-optics unwrap: absolute phase linear in column
    const auto ps = generate_phase_shift_patterns(8, pitch, width, 8);
    const PhaseMap wrapped = wrapped_phase(ps.images);
    const double center_phase = kTwoPi * centerline_coordinate(width) / pitch;
    const PhaseMap absolute = unwrap_centerline(wrapped, cl.images[0], center_phase);
    for (int x = 0; x < width; ++x) {
        REQUIRE(absolute.valid(x, 3));
        CHECK(std::abs(absolute.value(x, 3) - kTwoPi * x / pitch) < 0.02);
    }

    // occluded centerline everywhere: error
    ImageU8 darkcl(width, 8, 0);
    CHECK_THROWS_AS(unwrap_centerline(wrapped, darkcl, center_phase), DegenerateInput);
}

TEST_CASE("reconstruct: empty mask gives an empty cloud") {
    PhaseMap absolute(8, 8, PhaseKind::Absolute);
    CameraModel cam;
    cam.fu = cam.fv = 100.0;
    cam.cu = cam.cv = 3.5;
    cam.width = cam.height = 8;
    CameraModel projector = cam;
    projector.pose.translation = Vec3(-100, 0, 0);
    const PointCloud cloud = reconstruct(absolute, cam, projector, 16.0);
    CHECK(cloud.empty());
}
