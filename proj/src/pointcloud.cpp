#include "mmscan/pointcloud.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace mmscan {

std::pair<Vec3, Vec3> PointCloud::bounding_box() const {
    if (points.empty()) throw InvalidArgument("bounding box of empty cloud");
    Vec3 lo = points.front();
    Vec3 hi = points.front();
    for (const auto& p : points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    return {lo, hi};
}

void write_ply(const PointCloud& cloud, const std::string& path, bool binary) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot create " + path);
    const bool with_tags = !cloud.tags.empty();
    if (with_tags && cloud.tags.size() != cloud.points.size())
        throw InvalidArgument("tag count does not match point count");

    out << "ply\n";
    out << (binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n");
    out << "comment frame " << cloud.frame << "\n";
    out << "element vertex " << cloud.points.size() << "\n";
    out << "property double x\nproperty double y\nproperty double z\n";
    if (with_tags) out << "property uchar source\n";
    out << "end_header\n";

    if (binary) {
        for (std::size_t i = 0; i < cloud.points.size(); ++i) {
            const Vec3& p = cloud.points[i];
            double xyz[3] = {p.x(), p.y(), p.z()};
            out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
            if (with_tags) {
                const std::uint8_t t = static_cast<std::uint8_t>(cloud.tags[i]);
                out.write(reinterpret_cast<const char*>(&t), 1);
            }
        }
    } else {
        char line[160];
        for (std::size_t i = 0; i < cloud.points.size(); ++i) {
            const Vec3& p = cloud.points[i];
            if (with_tags) {
                std::snprintf(line, sizeof(line), "%.10g %.10g %.10g %u\n", p.x(), p.y(), p.z(),
                              static_cast<unsigned>(cloud.tags[i]));
            } else {
                std::snprintf(line, sizeof(line), "%.10g %.10g %.10g\n", p.x(), p.y(), p.z());
            }
            out << line;
        }
    }
    if (!out) throw IoError("short write to " + path);
}

PointCloud read_ply(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);

    std::string line;
    if (!std::getline(in, line) || line.substr(0, 3) != "ply") throw IoError(path + ": not a PLY file");

    bool binary = false;
    std::size_t count = 0;
    std::vector<std::string> props;
    PointCloud cloud;
    cloud.frame.clear();
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream is(line);
        std::string word;
        is >> word;
        if (word == "format") {
            is >> word;
            binary = (word == "binary_little_endian");
        } else if (word == "comment") {
            std::string tag, value;
            is >> tag >> value;
            if (tag == "frame") cloud.frame = value;
        } else if (word == "element") {
            std::string kind;
            is >> kind >> count;
            if (kind != "vertex") throw IoError(path + ": only vertex elements supported");
        } else if (word == "property") {
            std::string type, name;
            is >> type >> name;
            props.push_back(name);
        } else if (word == "end_header") {
            break;
        }
    }
    const bool with_tags = props.size() > 3;
    if (props.size() < 3 || props[0] != "x" || props[1] != "y" || props[2] != "z")
        throw IoError(path + ": expected x y z vertex layout");

    cloud.points.reserve(count);
    if (with_tags) cloud.tags.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        double xyz[3];
        unsigned tag = 0;
        if (binary) {
            in.read(reinterpret_cast<char*>(xyz), sizeof(xyz));
            if (with_tags) {
                std::uint8_t t;
                in.read(reinterpret_cast<char*>(&t), 1);
                tag = t;
            }
            if (!in) throw IoError(path + ": truncated binary payload");
        } else {
            if (!std::getline(in, line)) throw IoError(path + ": truncated vertex list");
            std::istringstream is(line);
            if (!(is >> xyz[0] >> xyz[1] >> xyz[2])) throw IoError(path + ": malformed vertex line");
            if (with_tags) is >> tag;
        }
        cloud.points.emplace_back(xyz[0], xyz[1], xyz[2]);
        if (with_tags) cloud.tags.push_back(static_cast<SourceTag>(tag));
    }
    if (cloud.frame.empty()) cloud.frame = "unknown";
    return cloud;
}

}  // namespace mmscan
