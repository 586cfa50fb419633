#include "mvor/classifier.hpp"

#include "mvor/parallel.hpp"
#include "mvor/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace mvor {

namespace {

double sigmoid(double s) {
    if (s >= 0) return 1.0 / (1.0 + std::exp(-s));
    double e = std::exp(s);
    return e / (1.0 + e);
}

double dot_row(const float* w, const float* x, int dim) {
    double acc = 0.0;
    for (int j = 0; j < dim; ++j) acc += static_cast<double>(w[j]) * x[j];
    return acc;
}

std::uint64_t class_stream(std::uint64_t seed, int class_index, int round) {
    // Distinct, order-free streams per (class, retrain round) so per-class
    // training can run on any thread layout without changing results.
    std::uint64_t s = seed;
    s ^= 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(class_index + 1);
    s ^= 0xD1B54A32D192ED03ULL * static_cast<std::uint64_t>(round + 1);
    return s;
}

// One binary problem: rows of x with matching label are positive, everything
// else plus the rows of `extra` (always negative) make up the rest.
struct BinaryProblem {
    const MatF& x;
    const std::vector<int>& targets;   // +1 / -1 per row of x
    const MatF* pool = nullptr;        // source of extra negatives
    const std::vector<int>* extra = nullptr;  // row indices into pool

    int size() const {
        return x.rows + (extra ? static_cast<int>(extra->size()) : 0);
    }
    const float* row(int i) const {
        if (i < x.rows) return x.row(i);
        return pool->row((*extra)[i - x.rows]);
    }
    int target(int i) const { return i < x.rows ? targets[i] : -1; }
};

double problem_objective(const BinaryProblem& p, const std::vector<double>& w, double b,
                         double alpha) {
    int dim = p.x.cols;
    double loss = 0.0;
    for (int i = 0; i < p.size(); ++i) {
        const float* xi = p.row(i);
        double f = b;
        for (int j = 0; j < dim; ++j) f += w[j] * xi[j];
        loss += logistic_loss(p.target(i) * f);
    }
    double reg = 0.0;
    for (double v : w) reg += v * v;
    return loss / p.size() + 0.5 * alpha * reg;
}

// SGD over the problem, starting from (w, b) in place. Appends the
// post-epoch full-batch objective to `log` once per epoch.
void sgd_train(const BinaryProblem& p, const ClassifierConfig& config, double t0, Rng& rng,
               std::vector<double>& w, double& b, std::vector<double>& log) {
    int dim = p.x.cols;
    int n = p.size();
    double alpha = config.l2_reg_alpha;
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::uint64_t t = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        for (int i : order) {
            const float* xi = p.row(i);
            int y = p.target(i);
            double f = b;
            for (int j = 0; j < dim; ++j) f += w[j] * xi[j];
            double eta = 1.0 / (alpha * (t0 + static_cast<double>(t)));
            double coef = y * logistic_dloss(y * f);
            for (int j = 0; j < dim; ++j) w[j] -= eta * (alpha * w[j] + coef * xi[j]);
            b -= eta * coef;
            ++t;
        }
        log.push_back(problem_objective(p, w, b, alpha));
    }
}

void validate_examples(const MatF& x, const std::vector<std::string>& labels) {
    if (x.rows == 0) throw std::invalid_argument("training data is empty");
    if (static_cast<std::size_t>(x.rows) != labels.size())
        throw std::invalid_argument("descriptor count does not match label count");
    for (int i = 0; i < x.rows; ++i) {
        const float* xi = x.row(i);
        for (int j = 0; j < x.cols; ++j)
            if (!std::isfinite(xi[j]))
                throw std::invalid_argument("example " + std::to_string(i) +
                                            " descriptor contains a non-finite value");
        if (labels[static_cast<std::size_t>(i)].empty())
            throw std::invalid_argument("example " + std::to_string(i) + " has an empty label");
    }
}

double schedule_offset(double alpha) {
    // Standard data-scale heuristic: the first step moves weights of typical
    // magnitude typw by O(typw).
    double typw = std::sqrt(1.0 / std::sqrt(alpha));
    double eta0 = typw / std::max(1.0, std::abs(logistic_dloss(-typw)));
    return 1.0 / (eta0 * alpha);
}

// Retrains every non-background class of `model` in place, class ci starting
// from its current weights, each over its own problem view.
void train_all(OvaClassifier& model, const MatF& x, const std::vector<int>* targets_per_class,
               const MatF* pool, const std::vector<std::vector<int>>* extras, int round) {
    int c = model.num_classes();
    int dim = x.cols;
    parallel_chunks(static_cast<std::size_t>(c), model.config.threads,
                    [&](std::size_t begin, std::size_t end) {
        for (std::size_t ci = begin; ci < end; ++ci) {
            if (model.labels[ci] == kBackgroundLabel) continue;
            BinaryProblem p{x, targets_per_class[ci], pool,
                            extras ? &(*extras)[ci] : nullptr};
            std::vector<double> w(static_cast<std::size_t>(dim));
            const float* wrow = model.weights.row(static_cast<int>(ci));
            std::copy(wrow, wrow + dim, w.begin());
            double b = model.bias[ci];
            Rng rng(class_stream(model.config.seed, static_cast<int>(ci), round));
            sgd_train(p, model.config, model.t0, rng, w, b, model.training_log[ci]);
            float* out = model.weights.row(static_cast<int>(ci));
            for (int j = 0; j < dim; ++j) out[j] = static_cast<float>(w[j]);
            model.bias[ci] = static_cast<float>(b);
        }
    });
}

std::vector<std::vector<int>> make_targets(const OvaClassifier& model,
                                           const std::vector<std::string>& labels) {
    std::vector<std::vector<int>> targets(static_cast<std::size_t>(model.num_classes()));
    for (int ci = 0; ci < model.num_classes(); ++ci) {
        targets[ci].resize(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i)
            targets[ci][i] = labels[i] == model.labels[ci] ? 1 : -1;
    }
    return targets;
}

}  // namespace

int OvaClassifier::label_index(const std::string& label) const {
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) return static_cast<int>(i);
    return -1;
}

double logistic_loss(double margin) {
    if (margin > 0) return std::log1p(std::exp(-margin));
    return -margin + std::log1p(std::exp(margin));
}

double logistic_dloss(double margin) {
    if (margin > 0) {
        double e = std::exp(-margin);
        return -e / (1.0 + e);
    }
    return -1.0 / (1.0 + std::exp(margin));
}

OvaClassifier train(const MatF& x, const std::vector<std::string>& labels,
                    const ClassifierConfig& config) {
    validate_examples(x, labels);
    std::set<std::string> unique(labels.begin(), labels.end());
    if (unique.size() < 2)
        throw std::invalid_argument("training data contains a single class; need at least two");
    if (config.epochs < 1) throw std::invalid_argument("epochs must be at least 1");
    if (!(config.l2_reg_alpha > 0))
        throw std::invalid_argument("l2_reg_alpha must be positive");

    OvaClassifier model;
    model.labels.assign(unique.begin(), unique.end());
    model.config = config;
    model.t0 = schedule_offset(config.l2_reg_alpha);
    model.weights = MatF(model.num_classes(), x.cols);
    model.bias.assign(static_cast<std::size_t>(model.num_classes()), 0.0f);
    model.training_log.resize(static_cast<std::size_t>(model.num_classes()));

    std::vector<std::vector<int>> targets = make_targets(model, labels);
    train_all(model, x, targets.data(), nullptr, nullptr, 0);
    return model;
}

OvaClassifier mine_hard_negatives(const OvaClassifier& model, const MatF& x,
                                  const std::vector<std::string>& labels, const MatF& pool,
                                  int epochs) {
    validate_examples(x, labels);
    if (pool.rows > 0 && pool.cols != model.dim())
        throw std::invalid_argument("pool descriptor size does not match the model");
    OvaClassifier out = model;
    if (epochs <= 0 || pool.rows == 0) return out;

    std::vector<std::vector<int>> targets = make_targets(out, labels);
    std::vector<std::vector<int>> extras(static_cast<std::size_t>(out.num_classes()));
    for (int epoch = 0; epoch < epochs; ++epoch) {
        bool mined = false;
        for (int i = 0; i < pool.rows; ++i) {
            std::vector<double> scores = decision_scores(out, pool.row(i), pool.cols);
            for (int ci = 0; ci < out.num_classes(); ++ci) {
                if (out.labels[ci] == kBackgroundLabel) continue;
                if (scores[ci] > 0) {
                    extras[ci].push_back(i);
                    mined = true;
                }
            }
        }
        if (!mined) break;  // fixed point: nothing misclassified, nothing to do
        train_all(out, x, targets.data(), &pool, &extras, epoch + 1);
    }
    return out;
}

std::vector<double> decision_scores(const OvaClassifier& model, const float* x, int dim) {
    if (dim != model.dim())
        throw std::invalid_argument("descriptor size " + std::to_string(dim) +
                                    " does not match classifier input size " +
                                    std::to_string(model.dim()));
    std::vector<double> scores(static_cast<std::size_t>(model.num_classes()));
    for (int ci = 0; ci < model.num_classes(); ++ci)
        scores[ci] = dot_row(model.weights.row(ci), x, dim) + model.bias[ci];
    return scores;
}

std::vector<double> predict_proba(const OvaClassifier& model, const float* x, int dim,
                                  double floor) {
    if (!(floor > 0.0) || floor > 1e-2)
        throw std::invalid_argument("predict_proba: floor must be in (0, 1e-2]");
    std::vector<double> p = decision_scores(model, x, dim);
    double sum = 0.0;
    for (double& v : p) {
        v = std::clamp(sigmoid(v), floor, 1.0);
        sum += v;
    }
    for (double& v : p) v /= sum;
    return p;
}

double full_objective(const OvaClassifier& model, const MatF& x,
                      const std::vector<std::string>& labels, const std::string& cls) {
    validate_examples(x, labels);
    int ci = model.label_index(cls);
    if (ci < 0) throw std::invalid_argument("unknown class: " + cls);
    if (cls == kBackgroundLabel)
        throw std::invalid_argument("the background class has no objective of its own");
    std::vector<int> targets(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
        targets[i] = labels[i] == cls ? 1 : -1;
    BinaryProblem p{x, targets, nullptr, nullptr};
    std::vector<double> w(static_cast<std::size_t>(model.dim()));
    const float* wrow = model.weights.row(ci);
    std::copy(wrow, wrow + model.dim(), w.begin());
    return problem_objective(p, w, model.bias[static_cast<std::size_t>(ci)],
                             model.config.l2_reg_alpha);
}

void save_training_log(const OvaClassifier& model, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("cannot open training log for writing: " + path);
    std::fputs("label,epoch,objective\n", f);
    for (int ci = 0; ci < model.num_classes(); ++ci)
        for (std::size_t e = 0; e < model.training_log[ci].size(); ++e)
            std::fprintf(f, "%s,%zu,%.17g\n", model.labels[ci].c_str(), e + 1,
                         model.training_log[ci][e]);
    if (std::fclose(f) != 0) throw std::runtime_error("failed to write training log: " + path);
}

ModelContainer to_container(const OvaClassifier& model) {
    ModelContainer c;
    c.kind = "ova-classifier";
    MatF bias(1, model.num_classes());
    std::copy(model.bias.begin(), model.bias.end(), bias.data.begin());
    c.mats.emplace_back("weights", model.weights);
    c.mats.emplace_back("bias", std::move(bias));
    c.meta["labels"] = model.labels;
    c.meta["l2_reg_alpha"] = model.config.l2_reg_alpha;
    c.meta["epochs"] = model.config.epochs;
    c.meta["seed"] = model.config.seed;
    c.meta["hard_negative_epochs"] = model.config.hard_negative_epochs;
    c.meta["t0"] = model.t0;
    return c;
}

OvaClassifier classifier_from_container(const ModelContainer& container) {
    if (container.kind != "ova-classifier")
        throw std::runtime_error("model container holds '" + container.kind +
                                 "', expected 'ova-classifier'");
    OvaClassifier model;
    model.weights = container.mat("weights");
    MatF bias = container.mat("bias");
    model.labels = container.meta.at("labels").get<std::vector<std::string>>();
    model.config.l2_reg_alpha = container.meta.at("l2_reg_alpha").get<double>();
    model.config.epochs = container.meta.at("epochs").get<int>();
    model.config.seed = container.meta.at("seed").get<std::uint64_t>();
    model.config.hard_negative_epochs = container.meta.at("hard_negative_epochs").get<int>();
    model.t0 = container.meta.at("t0").get<double>();

    if (model.labels.size() < 2) throw std::runtime_error("classifier needs at least 2 classes");
    std::set<std::string> unique(model.labels.begin(), model.labels.end());
    if (unique.size() != model.labels.size())
        throw std::runtime_error("classifier labels are not unique");
    if (model.weights.rows != static_cast<int>(model.labels.size()) || bias.rows != 1 ||
        bias.cols != model.weights.rows)
        throw std::runtime_error("classifier weight shapes are inconsistent");
    for (float v : model.weights.data)
        if (!std::isfinite(v)) throw std::runtime_error("classifier weights are not finite");
    model.bias.assign(bias.data.begin(), bias.data.end());
    model.training_log.resize(model.labels.size());
    return model;
}

}  // namespace mvor
