#pragma once

#include "mvor/image.hpp"
#include "mvor/mapio.hpp"
#include "mvor/mat.hpp"

#include <vector>

namespace mvor {

struct ExtractOptions {
    int step = 4;               // dense grid step, in pixels of each pyramid level
    int num_scales = 4;         // pyramid levels
    double scale_factor = 1.4142135623730951; // sqrt(2) downsampling per level
    int support = 16;           // descriptor window side at level resolution
    double sigma = 8.0;         // Gaussian window sigma, pixels
    double clip = 0.2;          // per-bin clamp after the first L2 pass
};

/// Dense local descriptors pooled across all pyramid levels. Locations are in
/// base-image pixel coordinates; descriptors are one row each in `descriptors`.
///
/// Raw layout (131-D): 128 gradient bins indexed (v_cell*4 + u_cell)*8 + o_bin
/// over a 4x4 cell grid with 8 orientation bins, then mean window RGB in [0,1].
struct DenseFeatureField {
    struct Sample {
        float u = 0, v = 0; // base-image pixels
        int scale = 0;      // pyramid level index
    };
    std::vector<Sample> samples;
    MatF descriptors; // samples.size() x dim
    ExtractOptions options;
    int skipped_scales = 0; // levels too small to fit one descriptor window

    int dim() const { return descriptors.cols; }
    std::size_t size() const { return samples.size(); }
};

/// Extracts 131-D raw descriptors on a dense grid at every pyramid level.
/// Gradients are central differences on ITU-R 601 luma; the histogram uses
/// trilinear binning with a Gaussian window, then L2 -> clip -> L2. A level
/// whose resampled image cannot fit one window is counted in skipped_scales.
DenseFeatureField extract_dense(const ImageU8& image, const ExtractOptions& opts = {});

/// Linear projection x -> P (x - mean). Rows of `projection` are orthonormal
/// (checked to 1e-6 on load); `mean` is 1 x in_dim, `projection` out_dim x in_dim.
/// `explained_variance` keeps the kept eigenvalues (descending) at full double
/// precision; f32 storage would swamp the tight eigensolver comparisons.
struct PcaModel {
    MatF mean;
    MatF projection;
    std::vector<double> explained_variance;

    int in_dim() const { return mean.cols; }
    int out_dim() const { return projection.rows; }
};

/// Fits PCA on descriptor rows: column mean, covariance with 1/(N-1) scaling,
/// eigenvectors ordered by descending eigenvalue. Sign convention: the
/// largest-magnitude entry of each row is positive (first such entry on ties).
/// Throws if the sample count is insufficient or the data has rank < out_dim.
PcaModel fit_pca(const MatF& samples, int out_dim = 80);

/// Projects every row; throws on dimension mismatch.
MatF apply_pca(const PcaModel& model, const MatF& descriptors);

/// Same projection applied to a field's descriptors; locations and metadata
/// are carried over unchanged.
DenseFeatureField apply_pca(const PcaModel& model, const DenseFeatureField& field);

ModelContainer to_container(const PcaModel& model);
PcaModel pca_from_container(const ModelContainer& container);

} // namespace mvor
