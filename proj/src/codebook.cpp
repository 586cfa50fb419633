#include "mvor/codebook.hpp"

#include "mvor/parallel.hpp"
#include "mvor/rng.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace mvor {

namespace {

double dist2_f32(const float* a, const float* b, int d) {
    double acc = 0;
    for (int j = 0; j < d; ++j) {
        double diff = static_cast<double>(a[j]) - b[j];
        acc += diff * diff;
    }
    return acc;
}

double dist2_mixed(const float* a, const double* b, int d) {
    double acc = 0;
    for (int j = 0; j < d; ++j) {
        double diff = a[j] - b[j];
        acc += diff * diff;
    }
    return acc;
}

[[noreturn]] void degenerate(const std::string& detail) {
    throw std::runtime_error("degenerate data: " + detail);
}

} // namespace

Vocabulary fit_kmeans(const MatF& samples, int k, std::uint64_t seed, const KmeansOptions& opts) {
    const int n = samples.rows;
    const int d = samples.cols;
    if (k < 2) throw std::invalid_argument("k must be at least 2");
    if (n < k)
        throw std::invalid_argument("need at least k samples, got " + std::to_string(n) +
                                    " for k=" + std::to_string(k));

    Rng rng(seed);
    // Centers stay double until the end; Lloyd's monotonicity argument needs
    // the means and distance scans at one precision.
    std::vector<double> centers(static_cast<std::size_t>(k) * d);
    auto center = [&](int c) { return centers.data() + static_cast<std::size_t>(c) * d; };

    // k-means++: first center uniform, the rest D^2-weighted.
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    {
        int first = static_cast<int>(rng.uniform_int(n));
        const float* row = samples.row(first);
        for (int j = 0; j < d; ++j) center(0)[j] = row[j];
        for (int i = 0; i < n; ++i) best[i] = dist2_mixed(samples.row(i), center(0), d);
    }
    for (int c = 1; c < k; ++c) {
        double total = 0;
        for (int i = 0; i < n; ++i) total += best[i];
        if (!(total > 0)) degenerate("fewer than " + std::to_string(k) + " distinct points");
        double r = rng.uniform() * total;
        double cum = 0;
        int pick = -1;
        for (int i = 0; i < n; ++i) {
            cum += best[i];
            if (cum > r && best[i] > 0) {
                pick = i;
                break;
            }
        }
        if (pick < 0) {
            for (int i = n - 1; i >= 0; --i)
                if (best[i] > 0) {
                    pick = i;
                    break;
                }
        }
        if (pick < 0) degenerate("fewer than " + std::to_string(k) + " distinct points");
        const float* row = samples.row(pick);
        for (int j = 0; j < d; ++j) center(c)[j] = row[j];
        for (int i = 0; i < n; ++i)
            best[i] = std::min(best[i], dist2_mixed(samples.row(i), center(c), d));
    }

    std::vector<int> assignment(n, 0);
    std::vector<double> mindist(n, 0.0);
    auto assign_pass = [&]() {
        parallel_chunks(n, opts.threads, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) {
                const float* row = samples.row(static_cast<int>(i));
                int arg = 0;
                double bestd = dist2_mixed(row, center(0), d);
                for (int c = 1; c < k; ++c) {
                    double dd = dist2_mixed(row, center(c), d);
                    if (dd < bestd) {
                        bestd = dd;
                        arg = c;
                    }
                }
                assignment[i] = arg;
                mindist[i] = bestd;
            }
        });
        double obj = 0;
        for (int i = 0; i < n; ++i) obj += mindist[i]; // fixed order, thread-invariant
        return obj;
    };

    Vocabulary vocab;
    vocab.seed = seed;
    double prev = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        double obj = assign_pass();
        vocab.objective_log.push_back(obj);
        vocab.objective = obj;
        vocab.iterations = iter + 1;
        if (iter > 0 && prev - obj <= opts.rel_tolerance * prev) break;
        prev = obj;
        if (iter + 1 == opts.max_iterations) break; // no point updating unevaluated means

        std::vector<double> sums(static_cast<std::size_t>(k) * d, 0.0);
        std::vector<int> counts(k, 0);
        for (int i = 0; i < n; ++i) {
            const float* row = samples.row(i);
            double* s = sums.data() + static_cast<std::size_t>(assignment[i]) * d;
            for (int j = 0; j < d; ++j) s[j] += row[j];
            ++counts[assignment[i]];
        }
        std::vector<bool> used(n, false);
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                const double* s = sums.data() + static_cast<std::size_t>(c) * d;
                for (int j = 0; j < d; ++j) center(c)[j] = s[j] / counts[c];
            } else {
                // Re-seed from the farthest unclaimed point. Removing an
                // empty center cannot hurt the assignment, so monotonicity
                // survives the swap.
                int far = -1;
                double fard = 0;
                for (int i = 0; i < n; ++i)
                    if (!used[i] && mindist[i] > fard) {
                        fard = mindist[i];
                        far = i;
                    }
                if (far < 0) degenerate("cannot re-seed an empty cluster");
                used[far] = true;
                const float* row = samples.row(far);
                for (int j = 0; j < d; ++j) center(c)[j] = row[j];
            }
        }
    }

    vocab.centers = MatF(k, d);
    for (int c = 0; c < k; ++c)
        for (int j = 0; j < d; ++j) vocab.centers(c, j) = static_cast<float>(center(c)[j]);
    for (int a = 0; a < k; ++a)
        for (int b = a + 1; b < k; ++b)
            if (dist2_f32(vocab.centers.row(a), vocab.centers.row(b), d) == 0.0)
                degenerate("duplicate centers " + std::to_string(a) + " and " + std::to_string(b));
    return vocab;
}

int assign(const Vocabulary& vocab, const float* x, int dim) {
    if (dim != vocab.dim())
        throw std::invalid_argument("descriptor dimension " + std::to_string(dim) +
                                    " does not match vocabulary dimension " +
                                    std::to_string(vocab.dim()));
    int arg = 0;
    double best = dist2_f32(x, vocab.centers.row(0), dim);
    for (int c = 1; c < vocab.k(); ++c) {
        double dd = dist2_f32(x, vocab.centers.row(c), dim);
        if (dd < best) {
            best = dd;
            arg = c;
        }
    }
    return arg;
}

std::vector<int> assign_all(const Vocabulary& vocab, const MatF& samples) {
    std::vector<int> out(samples.rows);
    for (int i = 0; i < samples.rows; ++i) out[i] = assign(vocab, samples.row(i), samples.cols);
    return out;
}

ModelContainer to_container(const Vocabulary& vocab) {
    ModelContainer c;
    c.kind = "vocabulary";
    c.meta["iterations"] = vocab.iterations;
    c.meta["objective"] = vocab.objective;
    c.meta["objective_log"] = vocab.objective_log;
    c.meta["seed"] = vocab.seed;
    c.mats.emplace_back("centers", vocab.centers);
    return c;
}

Vocabulary vocabulary_from_container(const ModelContainer& container) {
    if (container.kind != "vocabulary")
        throw std::runtime_error("expected container kind 'vocabulary', got '" + container.kind +
                                 "'");
    Vocabulary vocab;
    vocab.centers = container.mat("centers");
    vocab.iterations = container.meta.value("iterations", 0);
    vocab.objective = container.meta.value("objective", 0.0);
    if (container.meta.contains("objective_log"))
        vocab.objective_log = container.meta.at("objective_log").get<std::vector<double>>();
    vocab.seed = container.meta.value("seed", std::uint64_t{0});
    if (vocab.k() < 2) throw std::runtime_error("vocabulary must have at least 2 centers");
    for (float v : vocab.centers.data)
        if (!std::isfinite(v)) throw std::runtime_error("vocabulary has non-finite centers");
    return vocab;
}

} // namespace mvor
