#pragma once

#include "mvor/geometry.hpp"
#include "mvor/mapio.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace mvor {

/// One density cluster of map points, found at one of the four radius levels.
struct ObjectSeed {
    int id = 0;
    int level = 0;               // radius = base_eps * 2^level
    std::vector<int> members;    // indices into SemiDenseMap::points
    Vec3 centroid;               // spatial mean of the members
};

struct ClusterOptions {
    double base_eps = 0.04;     // neighborhood radius at level 0, map units
    double color_weight = 0.5;  // lambda scaling the color axes of the joint space
    int min_pts = 10;           // neighbors (self included) that make a core point
};

/// Density clustering in the joint 6-D space [x, y, z, l*r, l*g, l*b], run
/// once per radius level base_eps * 2^l for l in {0..3}; the result is the
/// union over levels, so the same physical object typically appears at
/// several granularities. Points are scanned in index order and cluster
/// growth is breadth-first, so the outcome is deterministic. An empty map
/// yields an empty list.
std::vector<ObjectSeed> density_cluster(const SemiDenseMap& map,
                                        const ClusterOptions& options = {});

/// One seed seen from one frame.
struct Proposal {
    int seed_id = 0;
    int frame_id = 0;
    BoundingBox box;
    double median_depth = 0.0;  // camera-frame units
    int visible_count = 0;
};

/// Projects every member point through the camera; absent when fewer than
/// min_visible_points land inside the image with positive depth. The box
/// encloses the visible projections; depth is the median of their camera
/// depths (mean of the middle pair for even counts).
std::optional<Proposal> project_seed(const ObjectSeed& seed, const SemiDenseMap& map,
                                     const Pose& cam_to_world, const CameraIntrinsics& intr,
                                     int frame_id, int min_visible_points = 15);

/// The three per-frame culling rules, in order: drop boxes under 20 px on a
/// side, then walk the rest nearest-first (ties: more visible points, then
/// lower seed id) keeping each proposal unless a kept one overlaps it with
/// IoU > 0.5. Output is in that walk order. All inputs must share a frame.
std::vector<Proposal> filter_proposals(const std::vector<Proposal>& proposals,
                                       double iou_thresh = 0.5, double min_side_px = 20.0);

/// JSON lines, one proposal per line; round trips through load_proposals.
void save_proposals(const std::vector<Proposal>& proposals, const std::filesystem::path& path);
std::vector<Proposal> load_proposals(const std::filesystem::path& path);

}  // namespace mvor
