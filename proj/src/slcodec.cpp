#include "mmscan/slcodec.hpp"

#include <algorithm>
#include <cmath>

namespace mmscan {

namespace {

std::uint8_t quantize(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

constexpr double stripe_half_width = 2.5;  // centerline stripe extent (projector px)

int fringe_extent(int width, int height, FringeOrientation o) {
    return o == FringeOrientation::Vertical ? width : height;
}

double fringe_coord(double x, double y, FringeOrientation o) {
    return o == FringeOrientation::Vertical ? x : y;
}

}  // namespace

std::uint32_t binary_to_gray(std::uint32_t v) { return v ^ (v >> 1); }

std::uint32_t gray_to_binary(std::uint32_t g) {
    std::uint32_t b = 0;
    for (; g; g >>= 1) b ^= g;
    return b;
}

double centerline_coordinate(int extent_px) { return (extent_px - 1) / 2.0; }

double pattern_intensity(const PatternSet& set, int image_index, double x, double y) {
    const double c = fringe_coord(x, y, set.orientation);
    switch (set.kind) {
        case PatternKind::PhaseShift: {
            // reduce modulo the pitch first so the pattern is exactly periodic
            double cp = std::fmod(c, set.pitch_px);
            if (cp < 0) cp += set.pitch_px;
            const double phase = kTwoPi * cp / set.pitch_px - kTwoPi * image_index / set.steps;
            return 127.5 + 127.5 * std::cos(phase);
        }
        case PatternKind::GrayCode: {
            const double period = std::floor(c / set.pitch_px);
            if (period < 0) return 0.0;
            const std::uint32_t gray = binary_to_gray(static_cast<std::uint32_t>(period));
            const int shift = set.steps - 1 - image_index;  // MSB first
            return ((gray >> shift) & 1u) ? 255.0 : 0.0;
        }
        case PatternKind::Centerline: {
            const int extent = fringe_extent(set.width, set.height, set.orientation);
            return std::abs(c - centerline_coordinate(extent)) < stripe_half_width ? 255.0 : 0.0;
        }
        case PatternKind::White:
            return 255.0;
        case PatternKind::Black:
            return 0.0;
    }
    return 0.0;
}

namespace {

PatternSet rasterize(PatternSet set, int width, int height, int count) {
    set.width = width;
    set.height = height;
    set.images.reserve(count);
    for (int n = 0; n < count; ++n) {
        ImageU8 img(width, height);
        // sample one fringe line and replicate; patterns are 1-D by design
        if (set.orientation == FringeOrientation::Vertical) {
            for (int x = 0; x < width; ++x) {
                const std::uint8_t v = quantize(pattern_intensity(set, n, x, 0.0));
                for (int y = 0; y < height; ++y) img.at(x, y) = v;
            }
        } else {
            for (int y = 0; y < height; ++y) {
                const std::uint8_t v = quantize(pattern_intensity(set, n, 0.0, y));
                for (int x = 0; x < width; ++x) img.at(x, y) = v;
            }
        }
        set.images.push_back(std::move(img));
    }
    return set;
}

}  // namespace

PatternSet generate_phase_shift_patterns(int steps, double pitch_px, int width, int height,
                                         FringeOrientation orientation) {
    if (steps < 3) throw InvalidArgument("phase shifting needs >= 3 steps");
    if (pitch_px < 4.0) throw InvalidArgument("fringe pitch must be >= 4 px");
    PatternSet set;
    set.kind = PatternKind::PhaseShift;
    set.orientation = orientation;
    set.steps = steps;
    set.pitch_px = pitch_px;
    return rasterize(std::move(set), width, height, steps);
}

PatternSet generate_gray_code_patterns(int bits, double pitch_px, int width, int height,
                                       FringeOrientation orientation) {
    if (bits < 1 || bits > 24) throw InvalidArgument("gray code bit count out of range");
    if (pitch_px < 4.0) throw InvalidArgument("fringe pitch must be >= 4 px");
    const int extent = fringe_extent(width, height, orientation);
    if (std::ldexp(pitch_px, bits) < extent)
        throw InvalidArgument("gray code does not cover the projector extent");
    PatternSet set;
    set.kind = PatternKind::GrayCode;
    set.orientation = orientation;
    set.steps = bits;
    set.pitch_px = pitch_px;
    return rasterize(std::move(set), width, height, bits);
}

PatternSet generate_white_pattern(int width, int height) {
    PatternSet set;
    set.kind = PatternKind::White;
    return rasterize(std::move(set), width, height, 1);
}

PatternSet generate_black_pattern(int width, int height) {
    PatternSet set;
    set.kind = PatternKind::Black;
    return rasterize(std::move(set), width, height, 1);
}

PatternSet generate_centerline_pattern(int width, int height, FringeOrientation orientation) {
    PatternSet set;
    set.kind = PatternKind::Centerline;
    set.orientation = orientation;
    return rasterize(std::move(set), width, height, 1);
}

PhaseMap wrapped_phase(const std::vector<ImageU8>& frames, double min_modulation) {
    if (frames.size() < 3) throw InvalidArgument("wrapped phase needs >= 3 frames");
    const int w = frames.front().width();
    const int h = frames.front().height();
    for (const auto& f : frames)
        if (f.width() != w || f.height() != h) throw InvalidArgument("frame sizes differ");

    const int n = static_cast<int>(frames.size());
    std::vector<double> sin_tab(n), cos_tab(n);
    for (int i = 0; i < n; ++i) {
        sin_tab[i] = std::sin(kTwoPi * i / n);
        cos_tab[i] = std::cos(kTwoPi * i / n);
    }

    PhaseMap out(w, h, PhaseKind::Wrapped);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0, c = 0.0;
            for (int i = 0; i < n; ++i) {
                const double v = frames[i].at(x, y);
                s += v * sin_tab[i];
                c += v * cos_tab[i];
            }
            const std::size_t idx = out.index(x, y);
            const double modulation = 2.0 / n * std::hypot(s, c);
            if (modulation < min_modulation) continue;  // stays masked
            double phi = std::atan2(s, c);
            if (phi <= -kPi) phi += kTwoPi;  // keep the (-pi, pi] convention
            out.values[idx] = phi;
            out.mask[idx] = 1;
        }
    }
    return out;
}

PeriodIndexMap decode_gray(const std::vector<ImageU8>& bit_planes, const ImageU8& white,
                           const ImageU8& black) {
    if (bit_planes.empty()) throw InvalidArgument("gray decode needs >= 1 bit plane");
    const int w = white.width();
    const int h = white.height();
    if (black.width() != w || black.height() != h) throw InvalidArgument("reference frame sizes differ");
    for (const auto& p : bit_planes)
        if (p.width() != w || p.height() != h) throw InvalidArgument("bit plane sizes differ");

    const int bits = static_cast<int>(bit_planes.size());
    PeriodIndexMap out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int wv = white.at(x, y);
            const int bv = black.at(x, y);
            if (wv <= bv) continue;  // unlit or inverted pixel: masked
            const double threshold = 0.5 * (wv + bv);
            std::uint32_t gray = 0;
            for (int b = 0; b < bits; ++b) {
                gray = (gray << 1) | (bit_planes[b].at(x, y) > threshold ? 1u : 0u);
            }
            const std::size_t idx = out.index(x, y);
            out.values[idx] = static_cast<std::int32_t>(gray_to_binary(gray));
            out.mask[idx] = 1;
        }
    }
    return out;
}

PhaseMap unwrap_absolute(const PhaseMap& wrapped, const PeriodIndexMap& periods) {
    if (wrapped.kind != PhaseKind::Wrapped) throw InvalidArgument("expected a wrapped phase map");
    if (wrapped.width != periods.width || wrapped.height != periods.height)
        throw InvalidArgument("phase map and period map dimensions differ");

    const int w = wrapped.width;
    const int h = wrapped.height;

    // half-period correction: gray transitions sit at phi = 0, so the code
    // index is short by one on the phi < 0 half of each period
    std::vector<std::int32_t> m(static_cast<std::size_t>(w) * h, 0);
    std::vector<std::uint8_t> valid(static_cast<std::size_t>(w) * h, 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t idx = wrapped.index(x, y);
            if (!wrapped.mask[idx] || !periods.mask[idx]) continue;
            m[idx] = periods.values[idx] + (wrapped.values[idx] < 0.0 ? 1 : 0);
            valid[idx] = 1;
        }
    }

    // code-offset consistency vote: each row neighbor predicts this pixel's
    // fringe order through the wrapped-phase difference (a drop of more than
    // pi marks a wrap). A pixel whose own code read is off by one period is
    // outvoted by its two neighbors, which restores continuity.
    PhaseMap out(w, h, PhaseKind::Absolute);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t idx = wrapped.index(x, y);
            if (!valid[idx]) continue;
            std::int32_t mi = m[idx];
            if (x > 0 && x + 1 < w && valid[idx - 1] && valid[idx + 1]) {
                const std::int32_t from_left =
                    m[idx - 1] + (wrapped.values[idx - 1] - wrapped.values[idx] > kPi ? 1 : 0);
                const std::int32_t from_right =
                    m[idx + 1] - (wrapped.values[idx] - wrapped.values[idx + 1] > kPi ? 1 : 0);
                const std::int32_t a = from_left, b = mi, c = from_right;
                mi = std::max(std::min(a, b), std::min(std::max(a, b), c));
            }
            out.values[idx] = wrapped.values[idx] + kTwoPi * mi;
            out.mask[idx] = 1;
        }
    }
    return out;
}

namespace {

double wrap_to_pi(double v) {
    v = std::fmod(v + kPi, kTwoPi);
    if (v < 0) v += kTwoPi;
    return v - kPi;
}

}  // namespace

PhaseMap unwrap_centerline(const PhaseMap& wrapped, const ImageU8& centerline, double center_phase) {
    if (wrapped.kind != PhaseKind::Wrapped) throw InvalidArgument("expected a wrapped phase map");
    if (wrapped.width != centerline.width() || wrapped.height != centerline.height())
        throw InvalidArgument("phase map and centerline image dimensions differ");

    const int w = wrapped.width;
    const int h = wrapped.height;
    PhaseMap out(w, h, PhaseKind::Absolute);
    std::vector<std::uint8_t> done(static_cast<std::size_t>(w) * h, 0);

    // per-row seed: intensity-weighted centroid of the brightest run
    int seeded_rows = 0;
    std::vector<int> seed_x(h, -1);
    for (int y = 0; y < h; ++y) {
        int peak = 0;
        for (int x = 1; x < w; ++x) {
            if (centerline.at(x, y) > centerline.at(peak, y)) peak = x;
        }
        const int best = centerline.at(peak, y);
        if (best < 64) continue;  // stripe absent or occluded in this row
        const double threshold = 0.5 * best;
        double wsum = 0.0, xsum = 0.0;
        for (int x = peak; x >= 0 && centerline.at(x, y) >= threshold; --x) {
            wsum += centerline.at(x, y);
            xsum += static_cast<double>(x) * centerline.at(x, y);
        }
        for (int x = peak + 1; x < w && centerline.at(x, y) >= threshold; ++x) {
            wsum += centerline.at(x, y);
            xsum += static_cast<double>(x) * centerline.at(x, y);
        }
        if (wsum <= 0.0) continue;
        const int sx = static_cast<int>(std::lround(xsum / wsum));
        if (sx < 0 || sx >= w || !wrapped.valid(sx, y)) continue;
        seed_x[y] = sx;
        ++seeded_rows;
    }
    if (seeded_rows == 0) throw DegenerateInput("centerline not detectable in any row");

    auto propagate = [&](int from_idx, int to_idx) {
        out.values[to_idx] =
            out.values[from_idx] + wrap_to_pi(wrapped.values[to_idx] - wrapped.values[from_idx]);
        out.mask[to_idx] = 1;
        done[to_idx] = 1;
    };

    // pass 1: each seeded row, outward from the seed
    for (int y = 0; y < h; ++y) {
        if (seed_x[y] < 0) continue;
        const std::size_t sidx = wrapped.index(seed_x[y], y);
        const double phi = wrapped.values[sidx];
        out.values[sidx] = phi + kTwoPi * std::round((center_phase - phi) / kTwoPi);
        out.mask[sidx] = 1;
        done[sidx] = 1;
        for (int x = seed_x[y] + 1; x < w && wrapped.mask[wrapped.index(x, y)]; ++x)
            propagate(wrapped.index(x - 1, y), wrapped.index(x, y));
        for (int x = seed_x[y] - 1; x >= 0 && wrapped.mask[wrapped.index(x, y)]; --x)
            propagate(wrapped.index(x + 1, y), wrapped.index(x, y));
    }

    // pass 2: alternate column / row sweeps until the reachable set is filled
    bool changed = true;
    while (changed) {
        changed = false;
        for (int x = 0; x < w; ++x) {
            for (int y = 1; y < h; ++y) {
                const std::size_t idx = wrapped.index(x, y);
                const std::size_t up = wrapped.index(x, y - 1);
                if (!done[idx] && wrapped.mask[idx] && done[up]) {
                    propagate(up, idx);
                    changed = true;
                }
            }
            for (int y = h - 2; y >= 0; --y) {
                const std::size_t idx = wrapped.index(x, y);
                const std::size_t dn = wrapped.index(x, y + 1);
                if (!done[idx] && wrapped.mask[idx] && done[dn]) {
                    propagate(dn, idx);
                    changed = true;
                }
            }
        }
        for (int y = 0; y < h; ++y) {
            for (int x = 1; x < w; ++x) {
                const std::size_t idx = wrapped.index(x, y);
                const std::size_t left = wrapped.index(x - 1, y);
                if (!done[idx] && wrapped.mask[idx] && done[left]) {
                    propagate(left, idx);
                    changed = true;
                }
            }
            for (int x = w - 2; x >= 0; --x) {
                const std::size_t idx = wrapped.index(x, y);
                const std::size_t right = wrapped.index(x + 1, y);
                if (!done[idx] && wrapped.mask[idx] && done[right]) {
                    propagate(right, idx);
                    changed = true;
                }
            }
        }
    }
    return out;
}

PointCloud reconstruct(const PhaseMap& absolute, const CameraModel& cam, const CameraModel& projector,
                       double pitch_px) {
    if (absolute.kind != PhaseKind::Absolute) throw InvalidArgument("expected an absolute phase map");
    if (absolute.width != cam.width || absolute.height != cam.height)
        throw InvalidArgument("phase map does not match the camera geometry");

    const RigidTransform cam_w2d = cam.pose.inverse();
    const RigidTransform prj_w2d = projector.pose.inverse();
    Mat34 pc, pp;
    pc.block<3, 3>(0, 0) = cam_w2d.rotation;
    pc.block<3, 1>(0, 3) = cam_w2d.translation;
    pp.block<3, 3>(0, 0) = prj_w2d.rotation;
    pp.block<3, 1>(0, 3) = prj_w2d.translation;

    PointCloud cloud;
    cloud.frame = "W";
    for (int y = 0; y < absolute.height; ++y) {
        for (int x = 0; x < absolute.width; ++x) {
            if (!absolute.valid(x, y)) continue;
            const double xp = absolute.value(x, y) * pitch_px / kTwoPi;

            // camera rows in normalized coordinates, projector column plane
            const double xn = (x - cam.cu) / cam.fu;
            const double yn = (y - cam.cv) / cam.fv;
            const double pn = (xp - projector.cu) / projector.fu;
            Eigen::Matrix<double, 3, 4> rows;
            rows.row(0) = xn * pc.row(2) - pc.row(0);
            rows.row(1) = yn * pc.row(2) - pc.row(1);
            rows.row(2) = pn * pp.row(2) - pp.row(0);

            const Mat3 a = rows.block<3, 3>(0, 0);
            const Vec3 b = -rows.col(3);
            Eigen::PartialPivLU<Mat3> lu(a);
            const Vec3 point = lu.solve(b);
            if (!point.allFinite()) continue;
            // reject numerically unsupported intersections and points behind
            // either device
            if ((a * point - b).norm() > 1e-6 * (1.0 + point.norm())) continue;
            if (cam_w2d.apply(point).z() <= 0.0 || prj_w2d.apply(point).z() <= 0.0) continue;
            cloud.append(point, SourceTag::SL);
        }
    }
    return cloud;
}

}  // namespace mmscan
