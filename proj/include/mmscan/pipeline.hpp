#pragma once

#include <string>
#include <vector>

#include "mmscan/pointcloud.hpp"
#include "mmscan/simulator.hpp"

namespace mmscan {

/// Orchestration layer behind the `mmscan` CLI. Every command reads and
/// writes only the documented on-disk formats; none mutates its inputs.

/// simulate: wraps run_protocol.
void cmd_simulate(const ProtocolOptions& options, const std::string& out_dir);

enum class CalibrateMode { Stereo, Projector, Probe };

/// calibrate: consumes a dataset directory and writes a calibration file
/// plus report keys into `out_path`.
void cmd_calibrate(const std::string& dataset_dir, CalibrateMode mode, const std::string& out_path,
                   bool deterministic = false);

enum class UnwrapMethod { GrayCode, Centerline };

struct ReconstructReport {
    std::size_t point_count = 0;
    Vec3 bbox_min = Vec3::Zero();
    Vec3 bbox_max = Vec3::Zero();
};

/// reconstruct: decode one SL pose of a dataset and export the cloud as PLY.
/// An empty mask produces an empty PLY and a warning on stderr.
ReconstructReport cmd_reconstruct(const std::string& dataset_dir, const std::string& calib_path,
                                  int pose_index, UnwrapMethod method, const std::string& out_ply,
                                  bool binary_ply = false);

/// track: run the classical marker detector over stereo frame directories
/// and write the recovered target poses (poses.txt schema).
void cmd_track(const std::string& dataset_dir, const std::string& calib_path,
               const std::string& out_poses, const MarkerGeometry& marker = {});

struct FuseReport {
    std::size_t sl_points = 0;
    std::size_t us_points = 0;
};

/// fuse: merge SL cloud(s) with B-scan segmentations mapped through the
/// probe calibration; everything stays in {W} by construction. An empty US
/// set degrades to an SL-only export with a warning.
FuseReport cmd_fuse(const std::vector<std::string>& sl_ply_paths, const std::string& us_dataset_dir,
                    const std::string& probe_calib_path, const std::string& out_ply,
                    bool binary_ply = false);

/// evaluate: compute protocol metrics against a truth file and write a
/// key-value report. `inputs` are PLY paths or probe-calibration paths
/// depending on the protocol recorded in the truth file.
void cmd_evaluate(const std::vector<std::string>& inputs, const std::string& truth_path,
                  const std::string& out_report, bool deterministic = false);

/// Dataset recipe as recorded by the simulator (protocol.txt).
SlRecipe load_recipe(const std::string& dataset_dir);

/// Slice a flat capture stack into the per-kind image groups of a recipe.
struct CaptureStack {
    std::vector<ImageU8> phase;
    std::vector<ImageU8> gray;
    ImageU8 white;
    ImageU8 black;
    ImageU8 centerline;  // empty when the recipe has none
};
CaptureStack load_capture_stack(const std::string& pose_dir, const SlRecipe& recipe,
                                const std::string& prefix = "cap_");

}  // namespace mmscan
