#include "mvor/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mvor {

IntBox snap_box(const BoundingBox& box, int width, int height) {
    if (!box.valid()) throw std::invalid_argument("inverted box");
    if (box.x_min < 0 || box.y_min < 0 || box.x_max > width || box.y_max > height)
        throw std::invalid_argument("box outside image rectangle");
    IntBox out;
    out.x0 = static_cast<int>(std::floor(box.x_min));
    out.y0 = static_cast<int>(std::floor(box.y_min));
    out.x1 = static_cast<int>(std::ceil(box.x_max));
    out.y1 = static_cast<int>(std::ceil(box.y_max));
    return out;
}

std::pair<int, int> cell_span(double lo, double hi, int cell_size, int cells) {
    double half = (cell_size - 1) / 2.0;
    int c0 = static_cast<int>(std::ceil((lo - half) / cell_size));
    int c1 = static_cast<int>(std::ceil((hi - half) / cell_size));
    c0 = std::max(0, std::min(c0, cells));
    c1 = std::max(c0, std::min(c1, cells));
    return {c0, c1};
}

std::vector<double> vlad_naive(const MatF& features, const Vocabulary& vocab) {
    const int d = vocab.dim();
    const int k = vocab.k();
    if (features.rows > 0 && features.cols != d)
        throw std::invalid_argument("feature dimension does not match vocabulary");
    std::vector<double> out(static_cast<std::size_t>(k) * d, 0.0);
    for (int i = 0; i < features.rows; ++i) {
        const float* x = features.row(i);
        int a = assign(vocab, x, d);
        const float* mu = vocab.centers.row(a);
        double* block = out.data() + static_cast<std::size_t>(a) * d;
        for (int j = 0; j < d; ++j) block[j] += static_cast<double>(x[j]) - mu[j];
    }
    return out;
}

template <typename S>
IntegralVladGrid<S>::IntegralVladGrid(const DenseFeatureField& field, const Vocabulary& vocab,
                                      int width, int height, int cell_size)
    : width_(width), height_(height), cell_size_(cell_size), k_(vocab.k()), d_(vocab.dim()) {
    if (width <= 0 || height <= 0) throw std::invalid_argument("empty image rectangle");
    if (cell_size <= 0) throw std::invalid_argument("cell size must be positive");
    if (field.size() > 0 && field.dim() != d_)
        throw std::invalid_argument("feature dimension does not match vocabulary");
    cells_x_ = (width + cell_size - 1) / cell_size;
    cells_y_ = (height + cell_size - 1) / cell_size;
    channels_ = static_cast<std::size_t>(k_) * (d_ + 1);
    table_.assign(static_cast<std::size_t>(cells_y_ + 1) * (cells_x_ + 1) * channels_, S(0));

    const std::size_t n = field.size();
    std::vector<int> cell_x(n), cell_y(n), code(n);
    std::vector<std::size_t> row_offset(cells_y_ + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
        float u = field.samples[i].u, v = field.samples[i].v;
        if (!(u >= 0 && u < width && v >= 0 && v < height))
            throw std::invalid_argument("feature " + std::to_string(i) +
                                        " lies outside the image rectangle");
        cell_x[i] = static_cast<int>(u) / cell_size;
        cell_y[i] = static_cast<int>(v) / cell_size;
        code[i] = assign(vocab, field.descriptors.row(static_cast<int>(i)), d_);
        ++row_offset[cell_y[i] + 1];
    }
    for (int y = 0; y < cells_y_; ++y) row_offset[y + 1] += row_offset[y];
    std::vector<std::size_t> order(n);
    {
        std::vector<std::size_t> cursor(row_offset.begin(), row_offset.end() - 1);
        for (std::size_t i = 0; i < n; ++i) order[cursor[cell_y[i]]++] = i;
    }

    // Stream one cell row at a time: accumulate the row's cell sums, fold them
    // into the running column sums, then prefix horizontally. All in double,
    // so each stored table entry carries exactly one rounding.
    std::vector<double> row_acc(static_cast<std::size_t>(cells_x_) * channels_);
    std::vector<double> col_acc(static_cast<std::size_t>(cells_x_) * channels_, 0.0);
    std::vector<double> h(channels_);
    std::size_t next = 0;
    for (int y = 0; y < cells_y_; ++y) {
        std::fill(row_acc.begin(), row_acc.end(), 0.0);
        while (next < n && cell_y[order[next]] == y) {
            std::size_t i = order[next++];
            const float* x = field.descriptors.row(static_cast<int>(i));
            const float* mu = vocab.centers.row(code[i]);
            double* slab =
                row_acc.data() + cell_x[i] * channels_ + static_cast<std::size_t>(code[i]) * (d_ + 1);
            for (int j = 0; j < d_; ++j) slab[j] += static_cast<double>(x[j]) - mu[j];
            slab[d_] += 1.0;
        }
        for (std::size_t i = 0; i < col_acc.size(); ++i) col_acc[i] += row_acc[i];
        std::fill(h.begin(), h.end(), 0.0);
        S* out_row = table_.data() +
                     (static_cast<std::size_t>(y + 1) * (cells_x_ + 1) + 1) * channels_;
        const double* col = col_acc.data();
        for (int x = 0; x < cells_x_; ++x) {
            for (std::size_t c = 0; c < channels_; ++c) h[c] += col[c];
            for (std::size_t c = 0; c < channels_; ++c) out_row[c] = static_cast<S>(h[c]);
            col += channels_;
            out_row += channels_;
        }
    }
}

template <typename S>
void IntegralVladGrid<S>::box_sums(const IntBox& box, double* out) const {
    auto [cx0, cx1] = cell_span(box.x0, box.x1, cell_size_, cells_x_);
    auto [cy0, cy1] = cell_span(box.y0, box.y1, cell_size_, cells_y_);
    std::fill(out, out + static_cast<std::size_t>(k_) * d_, 0.0);
    if (cx0 >= cx1 || cy0 >= cy1) return;
    const S* a = at(cy1, cx1);
    const S* b = at(cy0, cx0);
    const S* c = at(cy0, cx1);
    const S* e = at(cy1, cx0);
    for (int kk = 0; kk < k_; ++kk) {
        std::size_t base = static_cast<std::size_t>(kk) * (d_ + 1);
        double* block = out + static_cast<std::size_t>(kk) * d_;
        for (int j = 0; j < d_; ++j) {
            std::size_t ch = base + j;
            block[j] = (static_cast<double>(a[ch]) - c[ch]) + (static_cast<double>(b[ch]) - e[ch]);
        }
    }
}

template <typename S>
void IntegralVladGrid<S>::box_counts(const IntBox& box, double* out) const {
    auto [cx0, cx1] = cell_span(box.x0, box.x1, cell_size_, cells_x_);
    auto [cy0, cy1] = cell_span(box.y0, box.y1, cell_size_, cells_y_);
    std::fill(out, out + k_, 0.0);
    if (cx0 >= cx1 || cy0 >= cy1) return;
    const S* a = at(cy1, cx1);
    const S* b = at(cy0, cx0);
    const S* c = at(cy0, cx1);
    const S* e = at(cy1, cx0);
    for (int kk = 0; kk < k_; ++kk) {
        std::size_t ch = static_cast<std::size_t>(kk) * (d_ + 1) + d_;
        out[kk] = (static_cast<double>(a[ch]) - c[ch]) + (static_cast<double>(b[ch]) - e[ch]);
    }
}

namespace {

/// Integer split of [lo, hi) into n parts; the first (n - rem) parts get the
/// base width, the remainder goes to the later bins.
std::vector<int> split_edges(int lo, int hi, int n) {
    int w = hi - lo;
    int base = w / n, rem = w % n;
    std::vector<int> edges(n + 1);
    edges[0] = lo;
    for (int i = 0; i < n; ++i) edges[i + 1] = edges[i] + base + (i >= n - rem ? 1 : 0);
    return edges;
}

} // namespace

template <typename S>
VladDescriptor query_flair(const IntegralVladGrid<S>& grid, const BoundingBox& box,
                           const PyramidSpec& pyramid) {
    IntBox snapped = snap_box(box, grid.width(), grid.height());
    VladDescriptor out;
    out.k = grid.k();
    out.d = grid.d();
    out.bins = pyramid.bins();
    std::size_t kd = static_cast<std::size_t>(out.k) * out.d;
    out.v.assign(kd * out.bins, 0.0);

    double* block = out.v.data();
    for (int g : pyramid.grids) {
        std::vector<int> ex = split_edges(snapped.x0, snapped.x1, g);
        std::vector<int> ey = split_edges(snapped.y0, snapped.y1, g);
        for (int gy = 0; gy < g; ++gy)
            for (int gx = 0; gx < g; ++gx) {
                IntBox sub{ex[gx], ey[gy], ex[gx + 1], ey[gy + 1]};
                grid.box_sums(sub, block);
                block += kd;
            }
    }
    return out;
}

VladDescriptor normalize(VladDescriptor raw, double ssr_alpha, bool per_block_l2) {
    if (raw.normalized) throw std::invalid_argument("descriptor is already normalized");
    for (double& z : raw.v) {
        double a = std::pow(std::abs(z), ssr_alpha);
        z = z < 0 ? -a : a;
    }
    auto l2 = [](double* p, std::size_t n) {
        double norm2 = 0;
        for (std::size_t i = 0; i < n; ++i) norm2 += p[i] * p[i];
        if (norm2 > 0) {
            double inv = 1.0 / std::sqrt(norm2);
            for (std::size_t i = 0; i < n; ++i) p[i] *= inv;
        }
    };
    if (per_block_l2 && raw.bins > 0) {
        std::size_t kd = raw.v.size() / raw.bins;
        for (int b = 0; b < raw.bins; ++b) l2(raw.v.data() + b * kd, kd);
    } else {
        l2(raw.v.data(), raw.v.size());
    }
    raw.normalized = true;
    return raw;
}

template class IntegralVladGrid<float>;
template class IntegralVladGrid<double>;
template VladDescriptor query_flair<float>(const IntegralVladGrid<float>&, const BoundingBox&,
                                           const PyramidSpec&);
template VladDescriptor query_flair<double>(const IntegralVladGrid<double>&, const BoundingBox&,
                                            const PyramidSpec&);

} // namespace mvor
