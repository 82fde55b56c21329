#include "mmscan/image.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace mmscan {

double ImageU8::sample_bilinear(double x, double y) const {
    x = std::clamp(x, 0.0, static_cast<double>(width_ - 1));
    y = std::clamp(y, 0.0, static_cast<double>(height_ - 1));
    const int x0 = std::min(static_cast<int>(x), width_ - 2 >= 0 ? width_ - 2 : 0);
    const int y0 = std::min(static_cast<int>(y), height_ - 2 >= 0 ? height_ - 2 : 0);
    const int x1 = std::min(x0 + 1, width_ - 1);
    const int y1 = std::min(y0 + 1, height_ - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    const double top = (1.0 - fx) * at(x0, y0) + fx * at(x1, y0);
    const double bot = (1.0 - fx) * at(x0, y1) + fx * at(x1, y1);
    return (1.0 - fy) * top + fy * bot;
}

ImageU8 read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);

    auto next_token = [&in, &path]() -> std::string {
        std::string tok;
        int c = in.get();
        // skip whitespace and '#' comment lines
        while (c != EOF) {
            if (c == '#') {
                while (c != EOF && c != '\n') c = in.get();
            } else if (std::isspace(c)) {
                c = in.get();
            } else {
                break;
            }
        }
        while (c != EOF && !std::isspace(c)) {
            tok.push_back(static_cast<char>(c));
            c = in.get();
        }
        if (tok.empty()) throw IoError("truncated PGM header in " + path);
        return tok;
    };

    if (next_token() != "P5") throw IoError(path + " is not a binary PGM (P5)");
    const int width = std::stoi(next_token());
    const int height = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    if (width <= 0 || height <= 0 || maxval != 255)
        throw IoError(path + ": unsupported PGM geometry or depth");

    ImageU8 img(width, height);
    in.read(reinterpret_cast<char*>(img.data()), static_cast<std::streamsize>(img.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.size()))
        throw IoError(path + ": truncated PGM payload");
    return img;
}

void write_pgm(const ImageU8& img, const std::string& path) {
    if (img.empty()) throw InvalidArgument("cannot write empty image: " + path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot create " + path);
    out << "P5\n" << img.width() << " " << img.height() << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
    if (!out) throw IoError("short write to " + path);
}

}  // namespace mmscan
