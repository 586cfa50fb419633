#pragma once

#include "mvor/mapio.hpp"
#include "mvor/mat.hpp"

#include <cstdint>

namespace mvor {

/// Visual vocabulary: K centers of dimension D. Immutable once fitted.
struct Vocabulary {
    MatF centers; // K x D
    int iterations = 0;
    double objective = 0.0; // sum of squared distances at the final assignment
    std::vector<double> objective_log; // one entry per assignment pass
    std::uint64_t seed = 0;

    int k() const { return centers.rows; }
    int dim() const { return centers.cols; }
};

struct KmeansOptions {
    int max_iterations = 100;
    double rel_tolerance = 1e-4; // stop when the objective improves less than this
    int threads = 1; // assignment scan only; results are thread-count invariant
};

/// k-means++ seeding followed by Lloyd iterations. Deterministic for a seed;
/// empty clusters are re-seeded from the point farthest from its center.
/// Throws when samples.rows < k or the data cannot support k distinct centers.
Vocabulary fit_kmeans(const MatF& samples, int k, std::uint64_t seed,
                      const KmeansOptions& opts = {});

/// Index of the Euclidean-nearest center, lowest index on ties. Distances are
/// accumulated in double so ties are exact, not rounding accidents.
int assign(const Vocabulary& vocab, const float* x, int dim);

/// Per-row assignment of a sample matrix.
std::vector<int> assign_all(const Vocabulary& vocab, const MatF& samples);

ModelContainer to_container(const Vocabulary& vocab);
Vocabulary vocabulary_from_container(const ModelContainer& container);

} // namespace mvor
