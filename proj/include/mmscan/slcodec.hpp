#pragma once

#include <cstdint>
#include <vector>

#include "mmscan/geometry.hpp"
#include "mmscan/image.hpp"
#include "mmscan/pointcloud.hpp"

namespace mmscan {

enum class PatternKind { PhaseShift, GrayCode, Centerline, White, Black };

/// Fringes run along image columns by default (pattern varies with x);
/// Horizontal patterns vary with y and are used for projector calibration.
enum class FringeOrientation { Vertical, Horizontal };

/// One generated pattern stack plus the parameters that define it. The
/// parameters alone determine the continuous pattern (see
/// pattern_intensity); `images` is that function rasterized at pixel
/// centers and quantized to 8 bits.
struct PatternSet {
    PatternKind kind = PatternKind::PhaseShift;
    FringeOrientation orientation = FringeOrientation::Vertical;
    int steps = 0;        // phase-shift steps, or gray-code bit count
    double pitch_px = 0;  // fringe period (px at the projector)
    int width = 0;        // projector resolution
    int height = 0;
    std::vector<ImageU8> images;
};

/// Per-pixel phase with validity mask. Wrapped values live in (-pi, pi].
enum class PhaseKind { Wrapped, Absolute };

struct PhaseMap {
    int width = 0;
    int height = 0;
    PhaseKind kind = PhaseKind::Wrapped;
    std::vector<double> values;
    std::vector<std::uint8_t> mask;

    PhaseMap() = default;
    PhaseMap(int w, int h, PhaseKind k)
        : width(w), height(h), kind(k),
          values(static_cast<std::size_t>(w) * h, 0.0),
          mask(static_cast<std::size_t>(w) * h, 0) {}

    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
    double value(int x, int y) const { return values[index(x, y)]; }
    bool valid(int x, int y) const { return mask[index(x, y)] != 0; }
};

/// Per-pixel integer fringe period index with validity mask.
struct PeriodIndexMap {
    int width = 0;
    int height = 0;
    std::vector<std::int32_t> values;
    std::vector<std::uint8_t> mask;

    PeriodIndexMap() = default;
    PeriodIndexMap(int w, int h)
        : width(w), height(h),
          values(static_cast<std::size_t>(w) * h, 0),
          mask(static_cast<std::size_t>(w) * h, 0) {}

    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

/// Continuous pattern intensity (0..255, unquantized) at a projector
/// coordinate. Phase fringes are ideal sinusoids; gray-code planes are exact
/// step functions of the period index. The discrete images produced by the
/// generators equal this function sampled at pixel centers and quantized.
double pattern_intensity(const PatternSet& set, int image_index, double x, double y);

/// I_n(x) = 127.5 + 127.5 cos(2 pi x / pitch - 2 pi n / steps), quantized.
/// Requires steps >= 3 and pitch >= 4.
PatternSet generate_phase_shift_patterns(int steps, double pitch_px, int width, int height,
                                         FringeOrientation orientation = FringeOrientation::Vertical);

/// `bits` binary planes (MSB first) encoding the gray code of the fringe
/// period index floor(x / pitch). Requires 2^bits * pitch >= width so every
/// column has a unique period index.
PatternSet generate_gray_code_patterns(int bits, double pitch_px, int width, int height,
                                       FringeOrientation orientation = FringeOrientation::Vertical);

/// All-on / all-off reference frames for per-pixel binarization thresholds.
PatternSet generate_white_pattern(int width, int height);
PatternSet generate_black_pattern(int width, int height);

/// Single bright stripe at the projector center column (row for horizontal);
/// seeds spatial unwrapping with a known absolute phase.
PatternSet generate_centerline_pattern(int width, int height,
                                       FringeOrientation orientation = FringeOrientation::Vertical);

/// Stripe center coordinate encoded by the centerline pattern.
double centerline_coordinate(int extent_px);

/// Gray code helpers (exposed for tests and the simulator).
std::uint32_t binary_to_gray(std::uint32_t v);
std::uint32_t gray_to_binary(std::uint32_t g);

/// N-step wrapped phase via the atan2 estimator; pixels whose modulation
/// amplitude falls below `min_modulation` (8-bit units) are masked out.
PhaseMap wrapped_phase(const std::vector<ImageU8>& frames, double min_modulation = 5.0);

/// Decode gray-code bit planes into period indices using per-pixel
/// thresholds (white + black) / 2. Pixels where white <= black are masked.
PeriodIndexMap decode_gray(const std::vector<ImageU8>& bit_planes, const ImageU8& white,
                           const ImageU8& black);

/// Temporal unwrapping: Phi = phi + 2 pi m with the half-period correction
/// (m = k + 1 where phi < 0) and a row-median snap of single-pixel period
/// spikes at code boundaries.
PhaseMap unwrap_absolute(const PhaseMap& wrapped, const PeriodIndexMap& periods);

/// Spatial unwrapping seeded at the detected centerline column, whose
/// absolute phase is pinned to `center_phase` (= 2 pi x_center / pitch).
/// Rows without a detectable seed are filled through column propagation
/// where connected, otherwise masked. Throws DegenerateInput when no row
/// has a usable centerline.
PhaseMap unwrap_centerline(const PhaseMap& wrapped, const ImageU8& centerline, double center_phase);

/// Phase-driven reconstruction: for every valid camera pixel the projector
/// column is x_p = Phi * pitch / (2 pi); the camera ray and the projector
/// column plane are solved jointly for the world point.
PointCloud reconstruct(const PhaseMap& absolute, const CameraModel& cam, const CameraModel& projector,
                       double pitch_px);

}  // namespace mmscan
