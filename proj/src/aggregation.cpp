#include "mvor/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace mvor {

void accumulate(ObjectEvidence& evidence, int frame_id,
                const std::vector<double>& probabilities) {
    if (probabilities.empty()) throw std::invalid_argument("empty probability vector");
    if (!evidence.accumulated.empty() && evidence.accumulated.size() != probabilities.size())
        throw std::invalid_argument("probability vector size changed between views");
    double sum = 0.0;
    for (double p : probabilities) {
        if (!(p > 0.0))
            throw std::invalid_argument(
                "non-positive class probability; the classifier contract clamps at 1e-9");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw std::invalid_argument("class probabilities do not sum to 1");

    if (evidence.accumulated.empty()) evidence.accumulated.assign(probabilities.size(), 0.0);
    for (std::size_t c = 0; c < probabilities.size(); ++c)
        evidence.accumulated[c] += std::log(probabilities[c]);
    evidence.views.push_back({frame_id, probabilities});
}

Decision decide(const ObjectEvidence& evidence, const std::vector<double>& prior) {
    if (evidence.views.empty())
        throw std::runtime_error("no evidence: seed " + std::to_string(evidence.seed_id) +
                                 " has zero accumulated views");
    std::vector<double> scores = evidence.accumulated;
    if (!prior.empty()) {
        if (prior.size() != scores.size())
            throw std::invalid_argument("prior size does not match class count");
        for (std::size_t c = 0; c < scores.size(); ++c) {
            if (!(prior[c] > 0.0)) throw std::invalid_argument("prior entries must be positive");
            scores[c] += std::log(prior[c]);
        }
    }

    Decision d;
    for (std::size_t c = 1; c < scores.size(); ++c)
        if (scores[c] > scores[static_cast<std::size_t>(d.label_index)])
            d.label_index = static_cast<int>(c);

    double peak = scores[static_cast<std::size_t>(d.label_index)];
    double z = 0.0;
    d.posterior.resize(scores.size());
    for (std::size_t c = 0; c < scores.size(); ++c) {
        d.posterior[c] = std::exp(scores[c] - peak);
        z += d.posterior[c];
    }
    for (double& p : d.posterior) p /= z;
    return d;
}

void export_predictions(const std::vector<ObjectEvidence>& evidences,
                        const std::vector<std::string>& labels,
                        const std::filesystem::path& path) {
    nlohmann::json out = nlohmann::json::array();
    for (const ObjectEvidence& e : evidences) {
        Decision d = decide(e);
        if (static_cast<std::size_t>(d.label_index) >= labels.size())
            throw std::invalid_argument("label list is shorter than the class count");
        out.push_back({{"seed", e.seed_id},
                       {"label", labels[static_cast<std::size_t>(d.label_index)]},
                       {"views", e.num_views()},
                       {"posterior", d.posterior}});
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open predictions file for writing: " + path.string());
    f << out.dump(2) << "\n";
    if (!f.good()) throw std::runtime_error("failed to write predictions: " + path.string());
}

}  // namespace mvor
