#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmscan/geometry.hpp"

namespace mmscan {

/// Modality that produced a point.
enum class SourceTag : std::uint8_t { SL = 0, US = 1 };

/// World-frame point cloud (mm). All clouds in this toolkit live in {W};
/// the `frame` string is written to exports and checked when merging so a
/// cloud can never silently arrive in another coordinate system.
struct PointCloud {
    std::vector<Vec3> points;
    std::vector<SourceTag> tags;  // empty, or one tag per point
    std::string frame = "W";

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }

    void append(const Vec3& p) { points.push_back(p); }
    void append(const Vec3& p, SourceTag tag) {
        if (tags.size() != points.size()) tags.resize(points.size(), SourceTag::SL);
        points.push_back(p);
        tags.push_back(tag);
    }

    /// Axis-aligned bounds; throws on an empty cloud.
    std::pair<Vec3, Vec3> bounding_box() const;
};

/// ASCII PLY by default; `binary` switches to binary_little_endian. A
/// `source` uchar property is written when the cloud carries tags.
void write_ply(const PointCloud& cloud, const std::string& path, bool binary = false);
PointCloud read_ply(const std::string& path);

}  // namespace mmscan
