#pragma once

#include "mvor/mapio.hpp"
#include "mvor/mat.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mvor {

/// Label reserved for windows that belong to no object. It takes part in
/// prediction like any other class but owns no binary classifier: its score
/// is fixed at zero and its examples act as shared negatives for everyone
/// else.
inline constexpr const char* kBackgroundLabel = "background";

struct ClassifierConfig {
    double l2_reg_alpha = 1e-5;
    int epochs = 10;
    std::uint64_t seed = 1;
    int hard_negative_epochs = 2;
    int threads = 1;
};

/// One-vs-all linear classifier. Row c of `weights` scores class labels[c];
/// the background row (if present) stays zero.
struct OvaClassifier {
    MatF weights;             // C x dim
    std::vector<float> bias;  // C
    std::vector<std::string> labels;
    ClassifierConfig config;
    double t0 = 0.0;  // learning-rate schedule offset, from the data-scale heuristic

    /// Per class, per epoch: full-batch objective after that epoch's updates.
    /// Transient (not persisted in the model container).
    std::vector<std::vector<double>> training_log;

    int num_classes() const { return static_cast<int>(labels.size()); }
    int dim() const { return weights.cols; }
    int label_index(const std::string& label) const;  // -1 if absent
};

/// log(1 + exp(-margin)) with the standard overflow-safe split.
double logistic_loss(double margin);
/// d/d(margin) of the above: -sigma(-margin).
double logistic_dloss(double margin);

/// Trains one binary SGD problem per non-background class (positives = that
/// class, negatives = everything else). Learning rate 1/(alpha*(t0+t)) with
/// t0 chosen so the first step has unit-scale effect on typical weights;
/// bias updates skip the regularizer. Rows of x must be finite and already
/// normalized. Throws if fewer than two distinct labels appear or any
/// descriptor entry is not finite (the message names the offending row).
OvaClassifier train(const MatF& x, const std::vector<std::string>& labels,
                    const ClassifierConfig& config = {});

/// Bootstraps extra negatives: each epoch scores the pool, appends every pool
/// row with positive score to that class's negative set, and retrains from
/// the current weights. An epoch that mines nothing stops early and leaves
/// the model untouched. The original training data must be passed back in
/// because retraining re-runs SGD over it.
OvaClassifier mine_hard_negatives(const OvaClassifier& model, const MatF& x,
                                  const std::vector<std::string>& labels, const MatF& pool,
                                  int epochs = 2);

/// Raw per-class scores w_c.x + b_c (background scores 0 by construction).
std::vector<double> decision_scores(const OvaClassifier& model, const float* x, int dim);

/// Per-class sigmoid of the score, clamped to [floor, 1], then renormalized
/// to sum to 1. The clamp keeps downstream log-likelihoods finite; floor
/// must lie in (0, 1e-2].
std::vector<double> predict_proba(const OvaClassifier& model, const float* x, int dim,
                                  double floor = 1e-9);

/// Full-batch objective of class `cls`'s binary problem:
/// mean logistic loss + 0.5*alpha*|w|^2 (bias excluded).
double full_objective(const OvaClassifier& model, const MatF& x,
                      const std::vector<std::string>& labels, const std::string& cls);

/// One CSV row per (class, epoch) with the post-epoch objective.
void save_training_log(const OvaClassifier& model, const std::string& path);

ModelContainer to_container(const OvaClassifier& model);
OvaClassifier classifier_from_container(const ModelContainer& container);

}  // namespace mvor
