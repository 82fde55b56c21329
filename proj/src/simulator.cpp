#include "mmscan/simulator.hpp"

#include <algorithm>
#include <cmath>

namespace mmscan {

// ---------------------------------------------------------------- surfaces

double SuperellipsoidSurface::implicit(const Vec3& world_point) const {
    const Vec3 p = pose.inverse().apply(world_point);
    const double n = exponent;
    return std::pow(std::abs(p.x() / semi_axes.x()), n) +
           std::pow(std::abs(p.y() / semi_axes.y()), n) +
           std::pow(std::abs(p.z() / semi_axes.z()), n) - 1.0;
}

namespace {

struct LocalHit {
    double t;
    Vec3 normal;  // geometric, unnormalized orientation
    double albedo;
};

std::optional<LocalHit> intersect(const PlaneSurface& s, const Vec3& o, const Vec3& d, double t_min) {
    const RigidTransform inv = s.pose.inverse();
    const Vec3 ol = inv.apply(o);
    const Vec3 dl = inv.rotation * d;
    if (std::abs(dl.z()) < 1e-12) return std::nullopt;
    const double t = -ol.z() / dl.z();
    if (t <= t_min) return std::nullopt;
    const Vec3 pl = ol + t * dl;
    if (std::abs(pl.x()) > s.half_width || std::abs(pl.y()) > s.half_height) return std::nullopt;

    double albedo = s.albedo;
    if (s.texture) {
        for (const auto& c : s.texture->centers) {
            if ((Vec2(pl.x(), pl.y()) - c).squaredNorm() <= s.texture->radius * s.texture->radius) {
                albedo = s.texture->circle_albedo;
                break;
            }
        }
    }
    return LocalHit{t, s.pose.rotation.col(2), albedo};
}

std::optional<LocalHit> intersect(const SphereSurface& s, const Vec3& o, const Vec3& d, double t_min) {
    const Vec3 oc = o - s.center;
    const double b = oc.dot(d);
    const double c = oc.squaredNorm() - s.radius * s.radius;
    const double disc = b * b - c;
    if (disc < 0.0) return std::nullopt;
    const double sq = std::sqrt(disc);
    double t = -b - sq;
    if (t <= t_min) t = -b + sq;
    if (t <= t_min) return std::nullopt;
    const Vec3 p = o + t * d;
    return LocalHit{t, (p - s.center) / s.radius, s.albedo};
}

std::optional<LocalHit> intersect(const CylinderSurface& s, const Vec3& o, const Vec3& d, double t_min) {
    const Vec3 a = s.axis_dir.normalized();
    const Vec3 oc = o - s.axis_point;
    const Vec3 dp = d - d.dot(a) * a;
    const Vec3 op = oc - oc.dot(a) * a;
    const double qa = dp.squaredNorm();
    if (qa < 1e-16) return std::nullopt;
    const double qb = dp.dot(op);
    const double qc = op.squaredNorm() - s.radius * s.radius;
    const double disc = qb * qb - qa * qc;
    if (disc < 0.0) return std::nullopt;
    const double sq = std::sqrt(disc);
    for (const double t : {(-qb - sq) / qa, (-qb + sq) / qa}) {
        if (t <= t_min) continue;
        const Vec3 p = o + t * d;
        if (std::abs((p - s.axis_point).dot(a)) > s.half_length) continue;
        const Vec3 radial = (p - s.axis_point) - (p - s.axis_point).dot(a) * a;
        return LocalHit{t, radial.normalized(), s.albedo};
    }
    return std::nullopt;
}

std::optional<LocalHit> intersect(const SuperellipsoidSurface& s, const Vec3& o, const Vec3& d,
                                  double t_min) {
    const RigidTransform inv = s.pose.inverse();
    const Vec3 ol = inv.apply(o);
    const Vec3 dl = inv.rotation * d;

    // bracket with the bounding sphere, then march + bisect
    const double rb = s.semi_axes.norm();
    const double b = ol.dot(dl);
    const double c = ol.squaredNorm() - rb * rb;
    const double disc = b * b - c;
    if (disc < 0.0) return std::nullopt;
    const double sq = std::sqrt(disc);
    double ta = std::max(-b - sq, t_min);
    const double tb = -b + sq;
    if (tb <= ta) return std::nullopt;

    auto f = [&](double t) {
        const Vec3 p = ol + t * dl;
        const double n = s.exponent;
        return std::pow(std::abs(p.x() / s.semi_axes.x()), n) +
               std::pow(std::abs(p.y() / s.semi_axes.y()), n) +
               std::pow(std::abs(p.z() / s.semi_axes.z()), n) - 1.0;
    };

    const int steps = 192;
    const double dt = (tb - ta) / steps;
    double t_prev = ta;
    double f_prev = f(ta);
    if (f_prev <= 0.0) return std::nullopt;  // origin inside: not modeled
    double t_hit = -1.0;
    for (int i = 1; i <= steps; ++i) {
        const double t = ta + i * dt;
        const double fv = f(t);
        if (fv <= 0.0) {
            double lo = t_prev, hi = t;
            for (int k = 0; k < 60; ++k) {
                const double mid = 0.5 * (lo + hi);
                (f(mid) > 0.0 ? lo : hi) = mid;
            }
            t_hit = 0.5 * (lo + hi);
            break;
        }
        t_prev = t;
        f_prev = fv;
    }
    if (t_hit < 0.0) return std::nullopt;

    const Vec3 pl = ol + t_hit * dl;
    const double n = s.exponent;
    auto dcomp = [&](double v, double ax) {
        return n / ax * std::pow(std::abs(v / ax), n - 1.0) * (v >= 0.0 ? 1.0 : -1.0);
    };
    const Vec3 grad_local(dcomp(pl.x(), s.semi_axes.x()), dcomp(pl.y(), s.semi_axes.y()),
                          dcomp(pl.z(), s.semi_axes.z()));
    return LocalHit{t_hit, s.pose.rotation * grad_local, s.albedo};
}

}  // namespace

std::optional<SurfaceHit> raycast(const std::vector<Surface>& surfaces, const Vec3& origin,
                                  const Vec3& dir, double t_min) {
    std::optional<SurfaceHit> best;
    for (std::size_t i = 0; i < surfaces.size(); ++i) {
        const auto local = std::visit(
            [&](const auto& s) { return intersect(s, origin, dir, t_min); }, surfaces[i]);
        if (!local) continue;
        if (best && local->t >= best->t) continue;
        SurfaceHit hit;
        hit.t = local->t;
        hit.point = origin + local->t * dir;
        hit.normal = local->normal.normalized();
        if (hit.normal.dot(dir) > 0.0) hit.normal = -hit.normal;  // face the ray origin
        hit.albedo = local->albedo;
        hit.surface_index = static_cast<int>(i);
        best = hit;
    }
    return best;
}

// ------------------------------------------------------------------- noise

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t stream, std::uint64_t index, std::uint64_t salt) {
    return splitmix64(splitmix64(seed ^ splitmix64(stream)) ^ splitmix64(index * 4096 + salt));
}

double to_unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

}  // namespace

double DeterministicNoise::uniform(std::uint64_t stream, std::uint64_t index) const {
    return to_unit(mix(seed_, stream, index, 0));
}

double DeterministicNoise::gaussian(std::uint64_t stream, std::uint64_t index) const {
    const double u1 = to_unit(mix(seed_, stream, index, 1)) + 0x1.0p-54;  // keep log finite
    const double u2 = to_unit(mix(seed_, stream, index, 2));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

Vec3 DeterministicNoise::gaussian3(std::uint64_t stream, std::uint64_t index) const {
    Vec3 g;
    for (int i = 0; i < 3; ++i) {
        const double u1 = to_unit(mix(seed_, stream, index, 3 + 2 * i)) + 0x1.0p-54;
        const double u2 = to_unit(mix(seed_, stream, index, 4 + 2 * i));
        g(i) = std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
    }
    return g;
}

Vec3 DeterministicNoise::unit_vector(std::uint64_t stream, std::uint64_t index) const {
    Vec3 g;
    for (int i = 0; i < 3; ++i) {
        const double u1 = to_unit(mix(seed_, stream, index, 9 + 2 * i)) + 0x1.0p-54;
        const double u2 = to_unit(mix(seed_, stream, index, 10 + 2 * i));
        g(i) = std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
    }
    const double n = g.norm();
    return n > 1e-12 ? Vec3(g / n) : Vec3::UnitZ();
}

// ------------------------------------------------------------------- scene

Scene make_default_scene(int cam_width, int cam_height, int proj_width, int proj_height) {
    Scene scene;

    auto make_cam = [&](int w, int h, double f) {
        CameraModel cam;
        cam.fu = f;
        cam.fv = f;
        cam.cu = (w - 1) / 2.0;
        cam.cv = (h - 1) / 2.0;
        cam.width = w;
        cam.height = h;
        return cam;
    };
    const double fcam = 1600.0 * cam_width / 1280.0;  // keep the FOV across sizes
    const double fprj = 2100.0 * proj_width / 1280.0;

    scene.cam1 = make_cam(cam_width, cam_height, fcam);  // world frame

    scene.cam2 = make_cam(cam_width, cam_height, fcam);
    scene.cam2.pose.rotation = rotation_from_axis_angle(Vec3(0, -std::atan2(150.0, 700.0), 0));
    scene.cam2.pose.translation = Vec3(150.0, 0.0, 0.0);

    scene.projector = make_cam(proj_width, proj_height, fprj);
    scene.projector.pose.rotation = rotation_from_axis_angle(Vec3(0, std::atan2(150.0, 700.0), 0));
    scene.projector.pose.translation = Vec3(-150.0, 0.0, 0.0);

    return scene;
}

// ------------------------------------------------------------ SL rendering

std::vector<ProjectorSample> project_geometry(const Scene& scene, const CameraModel& cam) {
    std::vector<ProjectorSample> samples(static_cast<std::size_t>(cam.width) * cam.height);
    const Vec3 cam_origin = cam.pose.translation;
    const RigidTransform cam_w2d = cam.pose.inverse();
    const Vec3 prj_origin = scene.projector.pose.translation;
    const RigidTransform prj_w2d = scene.projector.pose.inverse();

    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const Vec3 dir_dev((x - cam.cu) / cam.fu, (y - cam.cv) / cam.fv, 1.0);
            const Vec3 dir = (cam.pose.rotation * dir_dev).normalized();
            const auto hit = raycast(scene.surfaces, cam_origin, dir);
            if (!hit) continue;

            ProjectorSample& s = samples[static_cast<std::size_t>(y) * cam.width + x];
            const Vec3 pd = prj_w2d.apply(hit->point);
            if (pd.z() <= 0.0) continue;
            const double xp = scene.projector.fu * pd.x() / pd.z() + scene.projector.cu;
            const double yp = scene.projector.fv * pd.y() / pd.z() + scene.projector.cv;
            if (xp < -0.5 || xp > scene.projector.width - 0.5 || yp < -0.5 ||
                yp > scene.projector.height - 0.5)
                continue;

            // projector shadow test
            const Vec3 to_point = hit->point - prj_origin;
            const double dist = to_point.norm();
            const auto occluder = raycast(scene.surfaces, prj_origin, to_point / dist);
            if (occluder && occluder->t < dist - 1e-3) continue;

            const double lambert = hit->normal.dot(-to_point / dist);
            if (lambert <= 0.02) continue;  // backlit or grazing

            s.valid = true;
            s.xp = xp;
            s.yp = yp;
            s.shade = hit->albedo * lambert;
            s.depth = cam_w2d.apply(hit->point).z();
        }
    }
    return samples;
}

FringeRender render_fringe_views(const Scene& scene, const CameraModel& cam,
                                 const std::vector<PatternSet>& sets, double truth_pitch,
                                 std::uint64_t frame_base) {
    const auto samples = project_geometry(scene, cam);
    const DeterministicNoise noise(scene.seed);

    FringeRender out;
    out.true_phase = MapF64(cam.width, cam.height, 0.0);
    out.true_depth = MapF64(cam.width, cam.height, 0.0);
    out.true_mask.assign(samples.size(), 0);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!samples[i].valid) continue;
        out.true_mask[i] = 1;
        out.true_phase.values()[i] = kTwoPi * samples[i].xp / truth_pitch;
        out.true_depth.values()[i] = samples[i].depth;
    }

    std::uint64_t image_index = 0;
    for (const auto& set : sets) {
        for (std::size_t n = 0; n < set.images.size(); ++n, ++image_index) {
            ImageU8 img(cam.width, cam.height);
            for (std::size_t i = 0; i < samples.size(); ++i) {
                double v = 0.0;
                if (samples[i].valid) {
                    v = samples[i].shade *
                        pattern_intensity(set, static_cast<int>(n), samples[i].xp, samples[i].yp);
                }
                if (scene.noise.pixel_sigma > 0.0)
                    v += scene.noise.pixel_sigma * noise.gaussian(frame_base + image_index, i);
                img.data()[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
            out.captures.push_back(std::move(img));
        }
    }
    return out;
}

// ----------------------------------------------------------- flat rendering

ImageU8 render_flat_view(const Scene& scene, const CameraModel& cam, double gain, int blur_len,
                         std::uint64_t frame_index) {
    const DeterministicNoise noise(scene.seed);
    const Vec3 origin = cam.pose.translation;
    const int ss = 4;  // 4x4 supersampling

    std::vector<double> buf(static_cast<std::size_t>(cam.width) * cam.height, 0.0);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            double acc = 0.0;
            for (int sy = 0; sy < ss; ++sy) {
                for (int sx = 0; sx < ss; ++sx) {
                    const double u = x + (sx + 0.5) / ss - 0.5;
                    const double v = y + (sy + 0.5) / ss - 0.5;
                    const Vec3 dir_dev((u - cam.cu) / cam.fu, (v - cam.cv) / cam.fv, 1.0);
                    const Vec3 dir = (cam.pose.rotation * dir_dev).normalized();
                    const auto hit = raycast(scene.surfaces, origin, dir);
                    acc += hit ? hit->albedo : 0.0;
                }
            }
            buf[static_cast<std::size_t>(y) * cam.width + x] = 255.0 * gain * acc / (ss * ss);
        }
    }

    if (blur_len > 1) {
        // horizontal box blur (odd length), replicated borders
        const int half = blur_len / 2;
        std::vector<double> row(cam.width);
        for (int y = 0; y < cam.height; ++y) {
            double* line = buf.data() + static_cast<std::size_t>(y) * cam.width;
            for (int x = 0; x < cam.width; ++x) {
                double acc = 0.0;
                for (int k = -half; k <= half; ++k)
                    acc += line[std::clamp(x + k, 0, cam.width - 1)];
                row[x] = acc / (2 * half + 1);
            }
            std::copy(row.begin(), row.end(), line);
        }
    }

    ImageU8 img(cam.width, cam.height);
    for (std::size_t i = 0; i < buf.size(); ++i) {
        double v = buf[i];
        if (scene.noise.pixel_sigma > 0.0)
            v += scene.noise.pixel_sigma * noise.gaussian(frame_index * 7919 + 11, i);
        img.data()[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
    return img;
}

MarkerViews render_marker_views(const Scene& scene, const RigidTransform& target_pose, double gain,
                                int blur_len, std::uint64_t frame_index) {
    scene.marker.validate();

    Scene marker_scene = scene;
    marker_scene.surfaces.clear();
    PlaneSurface board;
    board.pose = target_pose;
    board.albedo = 0.9;
    CircleTexture tex;
    tex.radius = scene.marker.radius;
    for (const auto& c : scene.marker.centers()) tex.centers.emplace_back(c.x(), c.y());
    tex.circle_albedo = 0.1;
    board.texture = tex;
    marker_scene.surfaces.push_back(board);

    MarkerViews out;
    const auto centers = scene.marker.centers();
    for (int i = 0; i < 3; ++i) {
        const Vec3 world = target_pose.apply(centers[i]);
        Vec2 p1, p2;
        try {
            p1 = project(scene.cam1, world);
            p2 = project(scene.cam2, world);
        } catch (const PointBehindCamera&) {
            throw DegenerateInput("target out of view (circle center behind a camera)");
        }
        if (!scene.cam1.in_image(p1) || !scene.cam2.in_image(p2))
            throw DegenerateInput("target out of view (circle center outside a frustum)");
        out.truth_cam1[i] = p1;
        out.truth_cam2[i] = p2;
    }

    out.view1 = render_flat_view(marker_scene, scene.cam1, gain, blur_len, frame_index * 2);
    out.view2 = render_flat_view(marker_scene, scene.cam2, gain, blur_len, frame_index * 2 + 1);
    return out;
}

BoardViews render_board_views(const Scene& scene, const CalibrationBoard& board,
                              const RigidTransform& board_pose, std::uint64_t frame_index) {
    Scene board_scene = scene;
    board_scene.surfaces.clear();
    PlaneSurface plane;
    plane.pose = board_pose;
    plane.albedo = 0.9;
    CircleTexture tex;
    tex.radius = board.circle_radius;
    for (const auto& g : board.grid()) tex.centers.emplace_back(g.x(), g.y());
    tex.circle_albedo = 0.1;
    plane.texture = tex;
    board_scene.surfaces.push_back(plane);

    BoardViews out;
    const auto grid = board.grid();
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const Vec3 world = board_pose.apply(grid[j]);
        try {
            const Vec2 p1 = project(scene.cam1, world);
            if (scene.cam1.in_image(p1, -2.0)) out.truth_cam1.emplace_back(static_cast<int>(j), p1);
        } catch (const PointBehindCamera&) {
        }
        try {
            const Vec2 p2 = project(scene.cam2, world);
            if (scene.cam2.in_image(p2, -2.0)) out.truth_cam2.emplace_back(static_cast<int>(j), p2);
        } catch (const PointBehindCamera&) {
        }
    }

    out.view1 = render_flat_view(board_scene, scene.cam1, 1.0, 0, frame_index * 2);
    out.view2 = render_flat_view(board_scene, scene.cam2, 1.0, 0, frame_index * 2 + 1);
    return out;
}

// ------------------------------------------------------------- US rendering

namespace {

// tracking error model: per-axis rotation noise about the tracked body's own
// origin plus per-axis translation noise
RigidTransform perturb_pose(const RigidTransform& pose, const NoiseModel& noise,
                            const DeterministicNoise& rng, std::uint64_t stream) {
    if (noise.pose_rot_sigma_deg <= 0.0 && noise.pose_trans_sigma_mm <= 0.0) return pose;
    RigidTransform out = pose;
    if (noise.pose_rot_sigma_deg > 0.0) {
        const Vec3 w = deg2rad(noise.pose_rot_sigma_deg) * rng.gaussian3(stream, 0);
        out.rotation = rotation_from_axis_angle(w) * pose.rotation;
    }
    if (noise.pose_trans_sigma_mm > 0.0)
        out.translation += noise.pose_trans_sigma_mm * rng.gaussian3(stream, 1);
    return out;
}

void apply_speckle_and_quantize(std::vector<double>& buf, ImageU8& img, const NoiseModel& noise,
                                const DeterministicNoise& rng, std::uint64_t stream) {
    for (std::size_t i = 0; i < buf.size(); ++i) {
        double v = buf[i];
        if (noise.speckle_sigma > 0.0 && v > 0.0) {
            const double g = rng.gaussian(stream, i);
            v *= std::exp(noise.speckle_sigma * g - 0.5 * noise.speckle_sigma * noise.speckle_sigma);
        }
        img.data()[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
}

}  // namespace

BScanRender render_bscan_cross(const Scene& scene, const RigidTransform& true_probe_pose,
                               const ProbeCalibration& truth_cal, const Vec3& cross_point,
                               int us_width, int us_height, std::uint64_t frame_index) {
    const DeterministicNoise rng(scene.seed);
    const std::uint64_t base = 0x5000 + frame_index * 16;

    BScanRender out;
    out.true_pose = true_probe_pose;

    // image-plane coordinates of the cross point
    const RigidTransform image_to_world = true_probe_pose * truth_cal.t_T_I;
    const Vec3 q = image_to_world.inverse().apply(cross_point);
    const double u = q.x() / truth_cal.sx;
    const double v = q.y() / truth_cal.sy;
    const bool in_plane = std::abs(q.z()) <= 0.75;  // half slice thickness (mm)
    const bool in_image = u >= 2.0 && u <= us_width - 3.0 && v >= 2.0 && v <= us_height - 3.0;
    out.intersects = in_plane && in_image;
    out.truth_pixel = Vec2(u, v);

    Vec2 spot(u, v);
    if (scene.noise.segmentation_sigma_px > 0.0) {
        spot.x() += scene.noise.segmentation_sigma_px * rng.gaussian(base + 4, 0);
        spot.y() += scene.noise.segmentation_sigma_px * rng.gaussian(base + 4, 1);
    }
    out.noisy_pixel = spot;

    std::vector<double> buf(static_cast<std::size_t>(us_width) * us_height, 0.0);
    if (out.intersects) {
        constexpr double sigma = 2.0;  // echo spot size (px)
        const int x0 = std::max(0, static_cast<int>(spot.x() - 5 * sigma));
        const int x1 = std::min(us_width - 1, static_cast<int>(spot.x() + 5 * sigma));
        const int y0 = std::max(0, static_cast<int>(spot.y() - 5 * sigma));
        const int y1 = std::min(us_height - 1, static_cast<int>(spot.y() + 5 * sigma));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double d2 = (x - spot.x()) * (x - spot.x()) + (y - spot.y()) * (y - spot.y());
                buf[static_cast<std::size_t>(y) * us_width + x] =
                    230.0 * std::exp(-d2 / (2.0 * sigma * sigma));
            }
        }
    }

    out.scan.image = ImageU8(us_width, us_height);
    apply_speckle_and_quantize(buf, out.scan.image, scene.noise, rng, base + 5);
    out.scan.probe_pose = perturb_pose(true_probe_pose, scene.noise, rng, base);
    out.scan.timestamp = static_cast<double>(frame_index);
    return out;
}

BScanRender render_bscan_ring(const Scene& scene, const RigidTransform& true_probe_pose,
                              const ProbeCalibration& truth_cal, const RingPhantom& phantom,
                              int us_width, int us_height, std::uint64_t frame_index) {
    const DeterministicNoise rng(scene.seed);
    const std::uint64_t base = 0x9000 + frame_index * 16;

    BScanRender out;
    out.true_pose = true_probe_pose;

    const RigidTransform image_to_world = true_probe_pose * truth_cal.t_T_I;
    constexpr double wall_sigma = 0.8;  // echo width (mm)

    std::vector<double> buf(static_cast<std::size_t>(us_width) * us_height, 0.0);
    bool any = false;
    for (int y = 0; y < us_height; ++y) {
        for (int x = 0; x < us_width; ++x) {
            const Vec3 world =
                image_to_world.apply(Vec3(truth_cal.sx * x, truth_cal.sy * y, 0.0));
            double dist;
            if (phantom.is_sphere) {
                dist = (world - phantom.center_or_axis_point).norm() - phantom.radius;
            } else {
                const Vec3 r = world - phantom.center_or_axis_point;
                dist = (r - phantom.axis_dir.dot(r) * phantom.axis_dir).norm() - phantom.radius;
            }
            if (std::abs(dist) > 4.0 * wall_sigma) continue;
            buf[static_cast<std::size_t>(y) * us_width + x] =
                220.0 * std::exp(-dist * dist / (2.0 * wall_sigma * wall_sigma));
            any = true;
        }
    }
    out.intersects = any;

    out.scan.image = ImageU8(us_width, us_height);
    apply_speckle_and_quantize(buf, out.scan.image, scene.noise, rng, base + 5);
    out.scan.probe_pose = perturb_pose(true_probe_pose, scene.noise, rng, base);
    out.scan.timestamp = static_cast<double>(frame_index);
    return out;
}

// --------------------------------------------------------------- datasets

ProbeCalibration default_probe_truth() {
    ProbeCalibration cal;
    cal.t_T_I = RigidTransform::from_axis_angle(Vec3(0.3, 1.2, -0.4), Vec3(12.0, -8.0, 45.0));
    cal.sx = 0.125;
    cal.sy = 0.120;
    return cal;
}

CalibrationDataset generate_probe_dataset(const Scene& scene, int frames, std::uint64_t stream,
                                          ProbeDatasetTruth* truth, std::vector<BScanRender>* bscans,
                                          int us_width, int us_height, double nominal_depth_mm) {
    if (frames < 1) throw InvalidArgument("probe dataset needs >= 1 frame");
    const DeterministicNoise rng(scene.seed);
    const ProbeCalibration cal = default_probe_truth();
    const Vec3 cross_point(0.0, 20.0, 690.0);

    // marker facing the cameras; per-frame orientation offsets with growing
    // amplitude so the diversity gate always holds
    const Mat3 base = rotation_from_axis_angle(Vec3(kPi, 0, 0));

    CalibrationDataset data;
    data.image_width = us_width;
    data.image_height = us_height;
    data.nominal_depth_mm = nominal_depth_mm;
    if (truth) {
        truth->calibration = cal;
        truth->cross_point = cross_point;
    }

    for (int i = 0; i < frames; ++i) {
        const std::uint64_t fs = stream * 1000003 + static_cast<std::uint64_t>(i) * 16;
        const double u = us_width * (0.15 + 0.7 * rng.uniform(fs + 7, 0));
        const double v = us_height * (0.15 + 0.7 * rng.uniform(fs + 7, 1));

        // tilt grows with the frame index (diversity gate) but stays under
        // 40 degrees so the projected marker keeps a recognizable right angle
        const Vec3 axis = rng.unit_vector(fs + 8, 0);
        const double angle = deg2rad(5.0 + 35.0 * i / std::max(frames - 1, 1)) *
                             (0.7 + 0.3 * rng.uniform(fs + 8, 1));
        const Mat3 r = rotation_from_axis_angle(axis * angle) * base;

        RigidTransform pose;
        pose.rotation = r;
        pose.translation =
            cross_point - r * cal.t_T_I.apply(Vec3(cal.sx * u, cal.sy * v, 0.0));

        const BScanRender scan =
            render_bscan_cross(scene, pose, cal, cross_point, us_width, us_height,
                               stream * 100000 + static_cast<std::uint64_t>(i));

        CalibrationObservation obs;
        obs.probe_pose = scan.scan.probe_pose;  // carries the pose noise
        obs.pixel = scan.noisy_pixel;           // analytic spot location, exact when noise-free
        data.observations.push_back(obs);

        if (truth) {
            truth->true_poses.push_back(pose);
            truth->true_pixels.emplace_back(u, v);
        }
        if (bscans) bscans->push_back(scan);
    }
    return data;
}

std::vector<BScanRender> generate_ring_sweep(const Scene& scene, const RingPhantom& phantom,
                                             int frames, double station_min, double station_max,
                                             std::uint64_t stream, SweepTruth* truth, int us_width,
                                             int us_height) {
    if (frames < 2) throw InvalidArgument("sweep needs >= 2 frames");
    const DeterministicNoise rng(scene.seed);
    const ProbeCalibration cal = default_probe_truth();
    const Vec3 axis = phantom.axis_dir.normalized();

    // image axes in world: image x -> world y-ish, image y -> world z-ish,
    // plane normal along the phantom axis
    Vec3 ey = axis.unitOrthogonal();
    Vec3 ez = axis.cross(ey);
    Mat3 r_plane;
    r_plane.col(0) = ey;
    r_plane.col(1) = ez;
    r_plane.col(2) = axis;

    const Vec2 image_center_mm(cal.sx * (us_width - 1) / 2.0, cal.sy * (us_height - 1) / 2.0);

    std::vector<BScanRender> out;
    if (truth) {
        truth->calibration = cal;
        truth->phantom = phantom;
    }
    for (int i = 0; i < frames; ++i) {
        const std::uint64_t fs = stream * 2000003 + static_cast<std::uint64_t>(i) * 16;
        const double station =
            station_min + (station_max - station_min) * i / std::max(frames - 1, 1);

        // small orientation jitter keeps slices slightly oblique
        const Vec3 jitter_axis = rng.unit_vector(fs + 3, 0);
        const double jitter_angle = deg2rad(3.0) * (rng.uniform(fs + 3, 1) - 0.5) * 2.0;
        const Mat3 r_img = rotation_from_axis_angle(jitter_axis * jitter_angle) * r_plane;

        const Vec3 wobble = (rng.uniform(fs + 4, 0) - 0.5) * 4.0 * ey +
                            (rng.uniform(fs + 4, 1) - 0.5) * 4.0 * ez;
        const Vec3 slice_center = phantom.center_or_axis_point + station * axis + wobble;

        RigidTransform image_to_world;
        image_to_world.rotation = r_img;
        image_to_world.translation =
            slice_center - r_img * Vec3(image_center_mm.x(), image_center_mm.y(), 0.0);

        const RigidTransform pose = image_to_world * cal.t_T_I.inverse();
        out.push_back(render_bscan_ring(scene, pose, cal, phantom, us_width, us_height,
                                        stream * 100000 + static_cast<std::uint64_t>(i)));
        if (truth) truth->true_poses.push_back(pose);
    }
    return out;
}

std::vector<RigidTransform> board_pose_sweep(const CalibrationBoard& board, int count,
                                             std::uint64_t seed, double stand_off_mm) {
    const DeterministicNoise rng(seed);
    const auto grid = board.grid();
    Vec3 center = Vec3::Zero();
    for (const auto& g : grid) center += g;
    center /= static_cast<double>(grid.size());

    std::vector<RigidTransform> poses;
    poses.reserve(count);
    const Mat3 base = rotation_from_axis_angle(Vec3(kPi, 0, 0));  // face the cameras
    for (int i = 0; i < count; ++i) {
        const std::uint64_t fs = 0xB0A2D + static_cast<std::uint64_t>(i) * 8;
        double tilt_x = deg2rad(70.0) * (rng.uniform(fs, 0) - 0.5);
        double tilt_y = deg2rad(70.0) * (rng.uniform(fs, 1) - 0.5);
        const double tilt_z = deg2rad(40.0) * (rng.uniform(fs, 2) - 0.5);
        // the conic constraints need tilt; push near-fronto poses outward
        if (std::abs(tilt_x) < deg2rad(10.0) && std::abs(tilt_y) < deg2rad(10.0))
            tilt_x += (tilt_x >= 0 ? 1 : -1) * deg2rad(18.0);
        const Mat3 r = rotation_from_axis_angle(Vec3(0, 0, tilt_z)) *
                       rotation_from_axis_angle(Vec3(0, tilt_y, 0)) *
                       rotation_from_axis_angle(Vec3(tilt_x, 0, 0)) * base;

        const Vec3 target(110.0 * (rng.uniform(fs, 3) - 0.5), 80.0 * (rng.uniform(fs, 4) - 0.5),
                          stand_off_mm + 180.0 * (rng.uniform(fs, 5) - 0.5));
        RigidTransform pose;
        pose.rotation = r;
        pose.translation = target - r * center;
        poses.push_back(pose);
    }
    return poses;
}

std::vector<RigidTransform> plane_pose_set() {
    struct Spec {
        double tilt_x_deg, tilt_y_deg, z;
    };
    const Spec specs[5] = {{0, 0, 670}, {8, 0, 693}, {0, -10, 688}, {-12, 6, 672}, {0, 18, 652}};
    std::vector<RigidTransform> poses;
    const Mat3 base = rotation_from_axis_angle(Vec3(kPi, 0, 0));
    for (const auto& s : specs) {
        RigidTransform pose;
        pose.rotation = rotation_from_axis_angle(Vec3(0, deg2rad(s.tilt_y_deg), 0)) *
                        rotation_from_axis_angle(Vec3(deg2rad(s.tilt_x_deg), 0, 0)) * base;
        pose.translation = Vec3(0, 0, s.z);
        poses.push_back(pose);
    }
    return poses;
}

std::vector<PatternSet> make_pattern_stack(const SlRecipe& recipe, int proj_width, int proj_height,
                                           FringeOrientation orientation) {
    std::vector<PatternSet> sets;
    sets.push_back(
        generate_phase_shift_patterns(recipe.phase_steps, recipe.pitch, proj_width, proj_height, orientation));
    sets.push_back(
        generate_gray_code_patterns(recipe.gray_bits, recipe.pitch, proj_width, proj_height, orientation));
    sets.push_back(generate_white_pattern(proj_width, proj_height));
    sets.push_back(generate_black_pattern(proj_width, proj_height));
    if (recipe.centerline) sets.push_back(generate_centerline_pattern(proj_width, proj_height, orientation));
    return sets;
}

}  // namespace mmscan
