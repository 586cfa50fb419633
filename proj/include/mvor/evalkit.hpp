#pragma once

#include "mvor/geometry.hpp"
#include "mvor/image.hpp"
#include "mvor/mapio.hpp"
#include "mvor/proposals.hpp"
#include "mvor/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mvor {

/// One scored, labeled box in one frame; the unit every detection metric
/// consumes.
struct Detection {
    int frame_id = 0;
    BoundingBox box;
    std::string label;
    double score = 0.0;
};

struct PrPoint {
    double threshold = 0.0; // detections with score >= threshold are counted
    double precision = 0.0;
    double recall = 0.0;
};

struct ClassPr {
    std::string label;
    int num_ground_truth = 0;
    std::vector<PrPoint> points; // one per detection of this class, thresholds descending
    double average_precision = 0.0;
};

/// Per-class precision-recall data plus the cross-class mean. Background
/// annotations and detections are ignored end to end; labels that appear only
/// in detections are listed in `skipped` and excluded from the mean.
struct PrCurve {
    std::vector<ClassPr> classes; // sorted by label
    std::vector<std::string> skipped;
    double mean_average_precision = 0.0;
};

/// Greedy per-frame matching in descending score, one detection per ground
/// truth box at IoU >= iou_thresh. Average precision integrates the full
/// precision envelope (all-points interpolation), so it is invariant under
/// any strictly monotone rescoring.
PrCurve pr_curve(const std::vector<Detection>& detections,
                 const std::vector<Annotation>& truth, double iou_thresh = 0.5);

struct RecallRow {
    double iou_thresh = 0.0;
    double recall = 0.0;
    double mean_proposals_per_frame = 0.0;
};

/// Class-agnostic proposal coverage: a ground truth box is recalled at
/// threshold t when some proposal in its frame reaches IoU >= t. The
/// proposals-per-frame mean averages over the frames present in either input
/// and is constant down the table. Throws on empty ground truth.
std::vector<RecallRow> recall_at_iou(const std::vector<Proposal>& proposals,
                                     const std::vector<Annotation>& truth,
                                     const std::vector<double>& iou_grid);

/// JSON lines, one {"frame","box","label","score"} object per detection;
/// round trips through load_detections. Load errors name the file and line.
void save_detections(const std::vector<Detection>& detections,
                     const std::filesystem::path& path);
std::vector<Detection> load_detections(const std::filesystem::path& path);

void save_pr_csv(const PrCurve& curve, const std::filesystem::path& path);
/// Per-class average precision rows followed by a final "mAP" row.
void save_ap_csv(const PrCurve& curve, const std::filesystem::path& path);
void save_recall_csv(const std::vector<RecallRow>& table, const std::filesystem::path& path);
void save_pr_svg(const PrCurve& curve, const std::filesystem::path& path);
void save_recall_svg(const std::vector<RecallRow>& table, const std::filesystem::path& path);

enum class ShapeKind { kCuboid = 0, kCylinder = 1, kSphere = 2 };

/// One placed primitive. `half_size` holds per-axis half extents: a cuboid
/// uses all three, a cylinder {radius, half height, radius}, a sphere the
/// radius three times. `texture_seed` fixes the per-object pattern phase so
/// repeated renders of the same placement are identical.
struct ObjectPlacement {
    ShapeKind shape = ShapeKind::kCuboid;
    std::string label;
    Pose pose; // object-to-world
    Vec3 half_size;
    std::uint64_t texture_seed = 0;
};

struct SceneSpec {
    int num_objects = 5;
    std::vector<std::string> classes; // empty selects synthetic_class_set()
    int num_frames = 30;
    int width = 320;
    int height = 240;
    int points_per_object = 600;
    double clutter_fraction = 0.1; // clutter cloud points per object point
    double position_noise = 0.0;   // Gaussian sigma on cloud points, map units
    std::uint64_t seed = 1;
};

struct SyntheticScene {
    Scene scene;
    std::vector<ObjectPlacement> placements; // index == annotation object_id
    SceneSpec spec;
};

/// The five texture families whose color and gradient statistics the dense
/// descriptor separates.
const std::vector<std::string>& synthetic_class_set();

/// Places textured primitives on a gray ground plane, orbits a camera around
/// them, ray-casts flat-shaded frames, and samples the cloud from primitive
/// edges and surfaces plus uniform clutter. Writes cloud.ply, trajectory.txt,
/// intrinsics.txt, images/frame_NNNNNN.png, annotations.jsonl and a
/// scene.json manifest under `out_dir`; reruns with one seed are
/// byte-identical. Ground truth boxes enclose the projected geometry clamped
/// to the frame; boxes thinner than 2 px are not annotated. Throws on an
/// invalid spec or when placements cannot be spaced apart.
SyntheticScene generate_scene(const SceneSpec& spec, const std::filesystem::path& out_dir);

/// Renders one primitive of the given class filling most of a size x size
/// crop from a randomized viewpoint, ground plane behind it. The background
/// label renders ground plane only. Feeds classifier training without a full
/// scene.
ImageU8 render_crop(const std::string& label, int size, Rng& rng);

/// Deterministic world-space surface samples of a placed primitive. Cuboid
/// corners and cylinder rims are always included; projected enclosing boxes
/// therefore track the true silhouette to well under a pixel at scene scale.
std::vector<Vec3> surface_samples(const ObjectPlacement& obj, int approx_count);

} // namespace mvor
