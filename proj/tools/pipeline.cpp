#include "pipeline.hpp"

#include "mvor/parallel.hpp"
#include "mvor/rng.hpp"

#include <algorithm>
#include <exception>
#include <map>
#include <stdexcept>

namespace mvor::cli {

namespace {

/// Runs fn(i) for i in [0, n) on a pool of `threads` workers and rethrows the
/// first (lowest-index) worker exception, since parallel_chunks itself
/// requires non-throwing workers.
void parallel_frames(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    std::vector<std::exception_ptr> errors(n);
    parallel_chunks(n, threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    });
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::vector<float> to_float_row(const VladDescriptor& d) {
    return std::vector<float>(d.v.begin(), d.v.end());
}

}  // namespace

ExtractOptions extract_options(const PipelineConfig& config) {
    ExtractOptions opts;
    opts.step = config.feature_step;
    opts.num_scales = config.feature_scales;
    opts.scale_factor = config.scale_factor;
    return opts;
}

ClusterOptions cluster_options(const PipelineConfig& config) {
    ClusterOptions opts;
    opts.base_eps = config.cluster_base_eps;
    opts.color_weight = config.cluster_color_weight;
    opts.min_pts = config.cluster_min_pts;
    return opts;
}

ClassifierConfig classifier_config(const PipelineConfig& config) {
    ClassifierConfig cc;
    cc.l2_reg_alpha = config.l2_reg_alpha;
    cc.epochs = config.classifier_epochs;
    cc.seed = config.seed;
    cc.hard_negative_epochs = config.hard_negative_epochs;
    cc.threads = config.threads;
    return cc;
}

PyramidSpec pyramid_spec(const PipelineConfig& config) {
    PyramidSpec spec;
    spec.grids = config.pyramid;
    return spec;
}

namespace {

ModelContainer load_kind(const std::filesystem::path& dir, const std::string& kind) {
    ModelContainer c;
    try {
        c = load_model(dir);
    } catch (const std::exception& e) {
        throw std::runtime_error("cannot load " + kind + " model from '" + dir.string() +
                                 "': " + e.what());
    }
    if (c.kind != kind)
        throw std::runtime_error("model in '" + dir.string() + "' has kind '" + c.kind +
                                 "', expected '" + kind + "'");
    return c;
}

}  // namespace

PcaModel load_pca(const std::filesystem::path& dir) {
    return pca_from_container(load_kind(dir, "pca"));
}

Vocabulary load_vocab(const std::filesystem::path& dir) {
    return vocabulary_from_container(load_kind(dir, "vocabulary"));
}

OvaClassifier load_classifier(const std::filesystem::path& dir) {
    return classifier_from_container(load_kind(dir, "ova-classifier"));
}

MatF pooled_descriptors(const Scene& scene, const PipelineConfig& config, int keep_every,
                        const PcaModel* project) {
    if (keep_every < 1) throw std::invalid_argument("pooled_descriptors: keep_every must be >= 1");
    ExtractOptions opts = extract_options(config);
    std::vector<MatF> per_frame(scene.frames.size());
    parallel_frames(scene.frames.size(), config.threads, [&](std::size_t fi) {
        ImageU8 img = load_image(scene.frames[fi].image_path);
        DenseFeatureField field = extract_dense(img, opts);
        if (project) field = apply_pca(*project, field);
        MatF kept(0, field.descriptors.cols);
        for (int r = 0; r < field.descriptors.rows; r += keep_every)
            kept.push_row(field.descriptors.row(r));
        per_frame[fi] = std::move(kept);
    });
    int dim = 0;
    for (const MatF& m : per_frame)
        if (m.cols > 0) dim = m.cols;
    MatF all(0, dim);
    for (const MatF& m : per_frame)
        for (int r = 0; r < m.rows; ++r) all.push_row(m.row(r));
    return all;
}

std::vector<std::vector<Proposal>> scene_proposals(const Scene& scene,
                                                   const PipelineConfig& config) {
    std::vector<ObjectSeed> seeds = density_cluster(scene.map, cluster_options(config));
    std::vector<std::vector<Proposal>> by_frame(scene.frames.size());
    for (std::size_t fi = 0; fi < scene.frames.size(); ++fi) {
        const FrameRecord& frame = scene.frames[fi];
        std::vector<Proposal> raw;
        for (const ObjectSeed& seed : seeds) {
            auto p = project_seed(seed, scene.map, frame.pose, scene.intrinsics, frame.frame_id,
                                  config.min_visible_points);
            if (p) raw.push_back(*p);
        }
        by_frame[fi] = filter_proposals(raw, config.proposal_iou, config.proposal_min_side);
    }
    return by_frame;
}

EncodedFrame encode_frame(const ImageU8& image, const PcaModel& pca, const Vocabulary& vocab,
                          const PipelineConfig& config) {
    DenseFeatureField field = extract_dense(image, extract_options(config));
    field = apply_pca(pca, field);
    return EncodedFrame{IntegralVladGrid<float>(field, vocab, image.width, image.height,
                                                config.flair_cell)};
}

VladDescriptor encode_box(const EncodedFrame& frame, const BoundingBox& box,
                          const PipelineConfig& config) {
    return normalize(query_flair(frame.grid, box, pyramid_spec(config)), config.ssr_alpha);
}

TrainingSet collect_training_set(const Scene& scene, const PcaModel& pca,
                                 const Vocabulary& vocab, const PipelineConfig& config,
                                 int negatives_per_frame, int pool_per_frame) {
    if (negatives_per_frame < 0 || pool_per_frame < 0)
        throw std::invalid_argument("collect_training_set: negative counts must be >= 0");
    std::map<int, std::vector<const Annotation*>> truth_by_frame;
    for (const Annotation& a : scene.annotations) truth_by_frame[a.frame_id].push_back(&a);

    int dim = 0;
    TrainingSet out;
    std::vector<TrainingSet> per_frame(scene.frames.size());
    parallel_frames(scene.frames.size(), config.threads, [&](std::size_t fi) {
        const FrameRecord& frame = scene.frames[fi];
        auto it = truth_by_frame.find(frame.frame_id);
        const std::vector<const Annotation*> truth =
            it == truth_by_frame.end() ? std::vector<const Annotation*>{} : it->second;
        if (truth.empty() && negatives_per_frame == 0 && pool_per_frame == 0) return;

        ImageU8 img = load_image(frame.image_path);
        EncodedFrame enc = encode_frame(img, pca, vocab, config);
        TrainingSet& set = per_frame[fi];
        auto add = [&](MatF& mat, const BoundingBox& box) {
            std::vector<float> row = to_float_row(encode_box(enc, box, config));
            if (mat.cols == 0) mat = MatF(0, static_cast<int>(row.size()));
            mat.push_row(row.data());
        };
        for (const Annotation* a : truth) {
            add(set.x, a->box);
            set.labels.push_back(a->label);
        }

        // Negatives are boxes that overlap no ground truth by more than 0.3,
        // drawn deterministically per frame so thread layout cannot matter.
        Rng rng(config.seed * 1000003ull + static_cast<std::uint64_t>(frame.frame_id));
        double w = scene.intrinsics.width, h = scene.intrinsics.height;
        double min_side = std::max(config.proposal_min_side, 16.0);
        auto draw_negative = [&]() -> std::optional<BoundingBox> {
            for (int attempt = 0; attempt < 60; ++attempt) {
                double bw = rng.uniform(min_side, std::max(min_side + 1.0, w * 0.6));
                double bh = rng.uniform(min_side, std::max(min_side + 1.0, h * 0.6));
                double x0 = rng.uniform(0.0, std::max(1e-6, w - bw));
                double y0 = rng.uniform(0.0, std::max(1e-6, h - bh));
                BoundingBox box{x0, y0, x0 + bw, y0 + bh};
                double worst = 0.0;
                for (const Annotation* a : truth) worst = std::max(worst, iou(box, a->box));
                if (worst <= 0.3) return box;
            }
            return std::nullopt;
        };
        for (int i = 0; i < negatives_per_frame; ++i) {
            if (auto box = draw_negative()) {
                add(set.x, *box);
                set.labels.push_back(kBackgroundLabel);
            }
        }
        for (int i = 0; i < pool_per_frame; ++i)
            if (auto box = draw_negative()) add(set.pool, *box);
    });
    for (const TrainingSet& set : per_frame) {
        if (set.x.cols > 0) dim = set.x.cols;
        append_training_set(out, set);
    }
    if (dim == 0)
        throw std::runtime_error("collect_training_set: scene '" + scene.root.string() +
                                 "' produced no training boxes");
    return out;
}

void append_training_set(TrainingSet& dst, const TrainingSet& src) {
    auto append_mat = [](MatF& a, const MatF& b, const char* what) {
        if (b.rows == 0) return;
        if (a.cols == 0) a = MatF(0, b.cols);
        if (a.cols != b.cols)
            throw std::invalid_argument(std::string("append_training_set: ") + what +
                                        " dimension mismatch");
        for (int r = 0; r < b.rows; ++r) a.push_row(b.row(r));
    };
    append_mat(dst.x, src.x, "descriptor");
    append_mat(dst.pool, src.pool, "pool");
    dst.labels.insert(dst.labels.end(), src.labels.begin(), src.labels.end());
}

Recognition recognize_scene(const Scene& scene, const Models& models,
                            const PipelineConfig& config) {
    PyramidSpec pyramid = pyramid_spec(config);
    int expect = pyramid.bins() * models.vocab.k() * models.vocab.dim();
    if (models.classifier.dim() != expect)
        throw std::runtime_error(
            "classifier dimension " + std::to_string(models.classifier.dim()) +
            " does not match pyramid encoding dimension " + std::to_string(expect));

    std::vector<std::vector<Proposal>> proposals = scene_proposals(scene, config);
    std::vector<std::vector<std::vector<double>>> probs(proposals.size());
    parallel_frames(scene.frames.size(), config.threads, [&](std::size_t fi) {
        if (proposals[fi].empty()) return;
        ImageU8 img = load_image(scene.frames[fi].image_path);
        EncodedFrame enc = encode_frame(img, models.pca, models.vocab, config);
        for (const Proposal& p : proposals[fi]) {
            std::vector<float> row = to_float_row(encode_box(enc, p.box, config));
            probs[fi].push_back(predict_proba(models.classifier, row.data(),
                                              static_cast<int>(row.size()),
                                              config.probability_floor));
        }
    });

    Recognition result;
    result.labels = models.classifier.labels;
    std::map<int, ObjectEvidence> by_seed;
    for (std::size_t fi = 0; fi < proposals.size(); ++fi) {
        for (std::size_t pi = 0; pi < proposals[fi].size(); ++pi) {
            const Proposal& p = proposals[fi][pi];
            const std::vector<double>& pr = probs[fi][pi];
            auto [it, fresh] = by_seed.try_emplace(p.seed_id);
            if (fresh) it->second.seed_id = p.seed_id;
            accumulate(it->second, p.frame_id, pr);
            std::size_t best = std::max_element(pr.begin(), pr.end()) - pr.begin();
            if (result.labels[best] != kBackgroundLabel)
                result.detections.push_back(
                    {p.frame_id, p.box, result.labels[best], pr[best]});
        }
    }
    result.evidences.reserve(by_seed.size());
    for (auto& [id, ev] : by_seed) result.evidences.push_back(std::move(ev));
    return result;
}

}  // namespace mvor::cli
