#pragma once

#include "mvor/codebook.hpp"
#include "mvor/features.hpp"
#include "mvor/geometry.hpp"
#include "mvor/mat.hpp"

#include <cstddef>
#include <utility>
#include <vector>

namespace mvor {

/// Spatial pyramid: one KxD block per subdivision, default 1x1 + 2x2 + 4x4.
struct PyramidSpec {
    std::vector<int> grids = {1, 2, 4};

    int bins() const {
        int s = 0;
        for (int g : grids) s += g * g;
        return s;
    }
};

/// Stacked residual descriptor, length bins * K * D, blocks ordered
/// [1x1 | 2x2 row-major | 4x4 row-major]. Raw until normalize() runs.
struct VladDescriptor {
    std::vector<double> v;
    int k = 0;
    int d = 0;
    int bins = 0;
    bool normalized = false;
};

/// Pixel-snapped half-open rectangle.
struct IntBox {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
};

/// Floor/ceil snap of a box to whole pixels. Throws when the box is inverted
/// or exceeds the image rectangle [0, width] x [0, height].
IntBox snap_box(const BoundingBox& box, int width, int height);

/// Half-open range of grid cells whose center pixel lies inside [lo, hi).
/// The center pixel of cell c is c*cell_size + (cell_size-1)/2; this single
/// rule is shared by the integral grid and the naive oracle, which is what
/// makes their outputs comparable bin for bin.
std::pair<int, int> cell_span(double lo, double hi, int cell_size, int cells);

/// Residual aggregation done the direct way: per feature, find the nearest
/// center and add (x - mu) into that codeword's block. Double accumulation.
/// Returns K*D values, codeword-major. Empty input gives the zero vector.
std::vector<double> vlad_naive(const MatF& features, const Vocabulary& vocab);

/// Per-codeword summed-area tables over a cell grid: D residual channels plus
/// one count channel per codeword, exclusive prefix convention (row 0 and
/// column 0 are zero). Cell sums and both prefix passes accumulate in double
/// regardless of S; each stored entry is rounded from the exact sum once.
/// Query cost is a fixed number of table reads, independent of box area.
///
/// With S = float the query error is bounded by four half-ulps at the prefix
/// magnitude. Descriptors here are PCA projections of unit-norm vectors
/// (per-dimension spread ~0.3), so per-channel prefixes stay O(30) even for
/// fields of a few thousand features and the error stays under 1e-5. Feeding
/// the float grid descriptors with much larger per-channel mass degrades
/// that bound; use S = double there.
template <typename S>
class IntegralVladGrid {
public:
    /// Bins every feature by its base-resolution location and builds the
    /// tables. Features outside [0,width) x [0,height) are an upstream bug
    /// and throw. An empty field builds an all-zero grid.
    IntegralVladGrid(const DenseFeatureField& field, const Vocabulary& vocab, int width,
                     int height, int cell_size = 4);

    int cells_x() const { return cells_x_; }
    int cells_y() const { return cells_y_; }
    int cell_size() const { return cell_size_; }
    int width() const { return width_; }
    int height() const { return height_; }
    int k() const { return k_; }
    int d() const { return d_; }
    std::size_t table_bytes() const { return table_.size() * sizeof(S); }

    /// Writes the raw K*D residual sums of one snapped rectangle (4 table
    /// reads per channel) into out. Cells are selected by the cell_span rule.
    void box_sums(const IntBox& box, double* out) const;

    /// Per-codeword feature counts of one snapped rectangle (K values).
    void box_counts(const IntBox& box, double* out) const;

private:
    const S* at(int cy, int cx) const {
        return table_.data() +
               (static_cast<std::size_t>(cy) * (cells_x_ + 1) + cx) * channels_;
    }

    int width_, height_, cell_size_, cells_x_, cells_y_, k_, d_;
    std::size_t channels_; // k * (d + 1), count channel last per codeword
    std::vector<S> table_; // (cells_y+1) x (cells_x+1) x channels
};

/// Spatial-pyramid box descriptor from a built grid: the box is snapped to
/// pixels, each pyramid level splits it into equal integer parts (remainder
/// pixels go to the later bins), and every sub-box contributes one K*D block.
template <typename S>
VladDescriptor query_flair(const IntegralVladGrid<S>& grid, const BoundingBox& box,
                           const PyramidSpec& pyramid = {});

/// Signed square root sign(z)|z|^alpha over the whole stacked vector, then one
/// global L2 normalization (or per-block when per_block_l2 is set). An all-zero
/// vector stays zero but is still marked normalized.
VladDescriptor normalize(VladDescriptor raw, double ssr_alpha = 0.5, bool per_block_l2 = false);

extern template class IntegralVladGrid<float>;
extern template class IntegralVladGrid<double>;
extern template VladDescriptor query_flair<float>(const IntegralVladGrid<float>&,
                                                  const BoundingBox&, const PyramidSpec&);
extern template VladDescriptor query_flair<double>(const IntegralVladGrid<double>&,
                                                   const BoundingBox&, const PyramidSpec&);

} // namespace mvor
