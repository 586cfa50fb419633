#pragma once

// Shared wiring between the CLI subcommands: the glue that turns scenes and
// trained model containers into pooled descriptors, proposals, per-frame
// detections, and per-seed decisions. Everything here is a pure function of
// (inputs, config), with cross-thread reductions done in index order.

#include "mvor/aggregation.hpp"
#include "mvor/classifier.hpp"
#include "mvor/codebook.hpp"
#include "mvor/config.hpp"
#include "mvor/encoding.hpp"
#include "mvor/evalkit.hpp"
#include "mvor/features.hpp"
#include "mvor/image.hpp"
#include "mvor/mapio.hpp"
#include "mvor/proposals.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace mvor::cli {

// Config unpacking into the per-module option structs.
ExtractOptions extract_options(const PipelineConfig& config);
ClusterOptions cluster_options(const PipelineConfig& config);
ClassifierConfig classifier_config(const PipelineConfig& config);
PyramidSpec pyramid_spec(const PipelineConfig& config);

// Model container loaders that check the container kind and name the
// directory on every failure.
PcaModel load_pca(const std::filesystem::path& dir);
Vocabulary load_vocab(const std::filesystem::path& dir);
OvaClassifier load_classifier(const std::filesystem::path& dir);

struct Models {
    PcaModel pca;
    Vocabulary vocab;
    OvaClassifier classifier;
};

/// Dense descriptors from every frame of a scene, keeping every
/// keep_every-th row of each frame's field, concatenated in frame order.
/// Frames are processed by a worker pool of config.threads; the reduction
/// order is fixed, so the result is thread-count invariant. When `project`
/// is non-null each row is PCA-projected first.
MatF pooled_descriptors(const Scene& scene, const PipelineConfig& config, int keep_every,
                        const PcaModel* project);

/// Map clustering plus per-frame projection and filtering. The outer vector
/// is indexed like scene.frames; a seed with too few visible points in a
/// frame simply does not appear there.
std::vector<std::vector<Proposal>> scene_proposals(const Scene& scene,
                                                   const PipelineConfig& config);

/// One frame's integral encoding, ready for box queries.
struct EncodedFrame {
    IntegralVladGrid<float> grid;
};

EncodedFrame encode_frame(const ImageU8& image, const PcaModel& pca, const Vocabulary& vocab,
                          const PipelineConfig& config);

/// Spatial-pyramid descriptor of one box, normalized.
VladDescriptor encode_box(const EncodedFrame& frame, const BoundingBox& box,
                          const PipelineConfig& config);

struct TrainingSet {
    MatF x;                           // one normalized box descriptor per row
    std::vector<std::string> labels;  // one per row, kBackgroundLabel for negatives
    MatF pool;                        // extra negatives for hard-negative mining
};

/// Box descriptors for classifier training: every annotated box of every
/// frame, plus negatives_per_frame random boxes with IoU <= 0.3 against all
/// ground truth (labeled background) and pool_per_frame more for the mining
/// pool. Deterministic for config.seed.
TrainingSet collect_training_set(const Scene& scene, const PcaModel& pca,
                                 const Vocabulary& vocab, const PipelineConfig& config,
                                 int negatives_per_frame, int pool_per_frame);

/// Appends src rows to dst (dimensions must agree once dst is non-empty).
void append_training_set(TrainingSet& dst, const TrainingSet& src);

struct Recognition {
    std::vector<std::string> labels;        // classifier label order
    std::vector<ObjectEvidence> evidences;  // one per seed with >= 1 view, by seed id
    std::vector<Detection> detections;      // per-frame argmax boxes, frame order
};

/// The full per-scene pipeline: proposals -> box encoding -> classification
/// -> per-seed evidence accumulation. detections carries one entry per
/// proposal whose argmax is a real class; evidences carries every classified
/// view, so both the multi-view and the per-frame protocols read off one run.
Recognition recognize_scene(const Scene& scene, const Models& models,
                            const PipelineConfig& config);

}  // namespace mvor::cli
