#pragma once

#include "mvor/geometry.hpp"
#include "mvor/mat.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mvor {

/// Colored 3D point set standing in for the SLAM reconstruction.
/// Coordinates are in map units (scale-ambiguous); colors live in [0, 1].
struct SemiDenseMap {
    struct Point {
        double x = 0, y = 0, z = 0;
        float r = 0, g = 0, b = 0;
    };
    std::vector<Point> points;
    std::vector<int> keyframe_ids; // optional; empty or one id per point

    std::size_t size() const { return points.size(); }
};

struct FrameRecord {
    int frame_id = 0;
    std::filesystem::path image_path;
    Pose pose; // camera-to-world
    std::optional<double> timestamp;
};

struct Annotation {
    int frame_id = 0;
    BoundingBox box;
    std::string label;
    int object_id = -1; // optional scene-level object identity, -1 if absent
};

struct Scene {
    std::filesystem::path root;
    CameraIntrinsics intrinsics;
    SemiDenseMap map;
    std::vector<FrameRecord> frames;
    std::vector<Annotation> annotations;
};

// ---------------------------------------------------------------------------
// Scene files. Formats:
//   cloud.ply        ASCII PLY, properties x y z red green blue [keyframe]
//   trajectory.txt   one line per frame: frame_id tx ty tz qx qy qz qw  (cam-to-world)
//   intrinsics.txt   fx fy cx cy width height
//   images/frame_NNNNNN.png (or .ppm)
//   annotations.jsonl   one JSON object per line: {"frame","box":[x0,y0,x1,y1],"label",("object")}
// ---------------------------------------------------------------------------

SemiDenseMap load_cloud_ply(const std::filesystem::path& path);
void save_cloud_ply(const SemiDenseMap& map, const std::filesystem::path& path);

/// Loads trajectory rows as (frame_id, pose) without image references.
std::vector<FrameRecord> load_trajectory(const std::filesystem::path& path);
void save_trajectory(const std::vector<FrameRecord>& frames, const std::filesystem::path& path);

CameraIntrinsics load_intrinsics(const std::filesystem::path& path);
void save_intrinsics(const CameraIntrinsics& intr, const std::filesystem::path& path);

std::vector<Annotation> load_annotations(const std::filesystem::path& path);
void save_annotations(const std::vector<Annotation>& annotations,
                      const std::filesystem::path& path);

/// Loads a full scene directory and cross-validates it: every trajectory row
/// must have exactly one image, annotation frames must exist, and annotation
/// boxes must lie within image bounds.
Scene load_scene(const std::filesystem::path& directory);

// ---------------------------------------------------------------------------
// Model containers: a directory holding manifest.json plus raw little-endian
// 32-bit float row-major matrix blobs. Round trips are bit-exact.
// ---------------------------------------------------------------------------

inline constexpr const char* kModelFormatVersion = "mvor-model-1";

struct ModelContainer {
    std::string kind;
    nlohmann::json meta = nlohmann::json::object();
    std::vector<std::pair<std::string, MatF>> mats;

    const MatF& mat(const std::string& name) const;
    bool has_mat(const std::string& name) const;
};

void save_model(const ModelContainer& container, const std::filesystem::path& directory);
ModelContainer load_model(const std::filesystem::path& directory);

} // namespace mvor
