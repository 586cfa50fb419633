#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace mvor {

/// Everything recognized about one object seed so far. Class count is fixed
/// by the first view; every later view must match it.
struct ObjectEvidence {
    struct View {
        int frame_id = 0;
        std::vector<double> probabilities;
    };

    int seed_id = 0;
    std::vector<View> views;
    std::vector<double> accumulated;  // per-class sum of log probabilities

    int num_views() const { return static_cast<int>(views.size()); }
};

/// Folds one view's class probabilities into the evidence. Probabilities
/// must be strictly positive (the classifier clamps at 1e-9 exactly so this
/// holds) and sum to 1 within 1e-6.
void accumulate(ObjectEvidence& evidence, int frame_id, const std::vector<double>& probabilities);

struct Decision {
    int label_index = 0;
    std::vector<double> posterior;  // softmax of accumulated, for reporting
};

/// Maximum-likelihood label over all accumulated views, ties to the lowest
/// class index. `prior` weights classes before the argmax; empty means
/// uniform, which changes nothing. Throws "no evidence" with zero views.
Decision decide(const ObjectEvidence& evidence, const std::vector<double>& prior = {});

/// JSON array of {seed, label, views, posterior}, one entry per evidence.
void export_predictions(const std::vector<ObjectEvidence>& evidences,
                        const std::vector<std::string>& labels,
                        const std::filesystem::path& path);

}  // namespace mvor
