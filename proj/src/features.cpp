#include "mvor/features.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mvor {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct LevelImage {
    int width = 0;
    int height = 0;
    std::vector<float> r, g, b; // [0, 1]
    std::vector<float> luma;    // [0, 1]
};

float bilinear(const std::vector<float>& ch, int w, int h, double x, double y) {
    x = std::min(std::max(x, 0.0), static_cast<double>(w - 1));
    y = std::min(std::max(y, 0.0), static_cast<double>(h - 1));
    int x0 = static_cast<int>(x);
    int y0 = static_cast<int>(y);
    int x1 = std::min(x0 + 1, w - 1);
    int y1 = std::min(y0 + 1, h - 1);
    double fx = x - x0, fy = y - y0;
    double v0 = ch[y0 * w + x0] * (1 - fx) + ch[y0 * w + x1] * fx;
    double v1 = ch[y1 * w + x0] * (1 - fx) + ch[y1 * w + x1] * fx;
    return static_cast<float>(v0 * (1 - fy) + v1 * fy);
}

LevelImage make_level(const ImageU8& img, int lw, int lh) {
    LevelImage lvl;
    lvl.width = lw;
    lvl.height = lh;
    std::size_t n = static_cast<std::size_t>(lw) * lh;
    lvl.r.resize(n);
    lvl.g.resize(n);
    lvl.b.resize(n);
    lvl.luma.resize(n);

    std::vector<float> sr, sg, sb;
    const std::size_t src_n = static_cast<std::size_t>(img.width) * img.height;
    sr.resize(src_n);
    sg.resize(src_n);
    sb.resize(src_n);
    for (std::size_t i = 0; i < src_n; ++i) {
        sr[i] = img.rgb[3 * i + 0] / 255.0f;
        sg[i] = img.rgb[3 * i + 1] / 255.0f;
        sb[i] = img.rgb[3 * i + 2] / 255.0f;
    }

    // Pixel-center mapping keeps resampling symmetric under image rotation.
    double sx = static_cast<double>(img.width) / lw;
    double sy = static_cast<double>(img.height) / lh;
    for (int y = 0; y < lh; ++y) {
        double syc = (y + 0.5) * sy - 0.5;
        for (int x = 0; x < lw; ++x) {
            double sxc = (x + 0.5) * sx - 0.5;
            std::size_t i = static_cast<std::size_t>(y) * lw + x;
            if (lw == img.width && lh == img.height) {
                std::size_t si = static_cast<std::size_t>(y) * img.width + x;
                lvl.r[i] = sr[si];
                lvl.g[i] = sg[si];
                lvl.b[i] = sb[si];
            } else {
                lvl.r[i] = bilinear(sr, img.width, img.height, sxc, syc);
                lvl.g[i] = bilinear(sg, img.width, img.height, sxc, syc);
                lvl.b[i] = bilinear(sb, img.width, img.height, sxc, syc);
            }
            lvl.luma[i] = 0.299f * lvl.r[i] + 0.587f * lvl.g[i] + 0.114f * lvl.b[i];
        }
    }
    return lvl;
}

} // namespace

DenseFeatureField extract_dense(const ImageU8& image, const ExtractOptions& opts) {
    if (image.width <= 0 || image.height <= 0) throw std::invalid_argument("empty image");
    if (opts.step <= 0 || opts.num_scales <= 0 || opts.support <= 0 || opts.support % 4 != 0)
        throw std::invalid_argument("bad extraction options");

    const int half = opts.support / 2;
    const int cell = opts.support / 4;
    const int dim = 131;

    DenseFeatureField field;
    field.options = opts;

    // Gaussian window over pixel centers, offsets measured from the window
    // center at -0.5 (the set {-half..half-1} + 0.5 is symmetric about 0).
    std::vector<double> win(static_cast<std::size_t>(opts.support) * opts.support);
    for (int dy = -half; dy < half; ++dy)
        for (int dx = -half; dx < half; ++dx) {
            double ox = dx + 0.5, oy = dy + 0.5;
            win[(dy + half) * opts.support + (dx + half)] =
                std::exp(-(ox * ox + oy * oy) / (2.0 * opts.sigma * opts.sigma));
        }

    std::vector<std::vector<float>> desc_rows;
    for (int s = 0; s < opts.num_scales; ++s) {
        double f = std::pow(opts.scale_factor, s);
        int lw = std::max(1, static_cast<int>(std::lround(image.width / f)));
        int lh = std::max(1, static_cast<int>(std::lround(image.height / f)));
        int lo = half + 1;          // gradient needs a 1-px margin around the window
        int hi_x = lw - half - 1;
        int hi_y = lh - half - 1;
        if (hi_x < lo || hi_y < lo) {
            ++field.skipped_scales;
            continue;
        }
        LevelImage lvl = make_level(image, lw, lh);

        // Per-pixel gradient magnitude and orientation-bin coordinate in [0, 8).
        std::vector<float> mag(lvl.luma.size(), 0.0f);
        std::vector<float> obin(lvl.luma.size(), 0.0f);
        for (int y = 1; y < lh - 1; ++y)
            for (int x = 1; x < lw - 1; ++x) {
                std::size_t i = static_cast<std::size_t>(y) * lw + x;
                double gx = 0.5 * (lvl.luma[i + 1] - lvl.luma[i - 1]);
                double gy = 0.5 * (lvl.luma[i + lw] - lvl.luma[i - lw]);
                double m = std::sqrt(gx * gx + gy * gy);
                mag[i] = static_cast<float>(m);
                if (m > 0) {
                    double th = std::atan2(gy, gx);
                    if (th < 0) th += 2.0 * kPi;
                    double ob = th * (8.0 / (2.0 * kPi));
                    if (ob >= 8.0) ob = 0.0;
                    obin[i] = static_cast<float>(ob);
                }
            }

        double bx = static_cast<double>(image.width) / lw;
        double by = static_cast<double>(image.height) / lh;
        int first = ((lo + opts.step - 1) / opts.step) * opts.step;
        for (int cy = first; cy <= hi_y; cy += opts.step) {
            for (int cx = first; cx <= hi_x; cx += opts.step) {
                double hist[128] = {};
                double rs = 0, gs = 0, bs = 0;
                for (int dy = -half; dy < half; ++dy) {
                    int py = cy + dy;
                    const float* mrow = mag.data() + static_cast<std::size_t>(py) * lw;
                    const float* orow = obin.data() + static_cast<std::size_t>(py) * lw;
                    double vb = (dy + 0.5 + half) / cell - 0.5;
                    int v0 = static_cast<int>(std::floor(vb));
                    double vf = vb - v0;
                    for (int dx = -half; dx < half; ++dx) {
                        int px = cx + dx;
                        std::size_t i = static_cast<std::size_t>(py) * lw + px;
                        rs += lvl.r[i];
                        gs += lvl.g[i];
                        bs += lvl.b[i];
                        double m = mrow[px];
                        if (m == 0) continue;
                        m *= win[(dy + half) * opts.support + (dx + half)];
                        double ub = (dx + 0.5 + half) / cell - 0.5;
                        int u0 = static_cast<int>(std::floor(ub));
                        double uf = ub - u0;
                        double ob = orow[px];
                        int o0 = static_cast<int>(ob);
                        double of = ob - o0;
                        int o1 = (o0 + 1) & 7;
                        for (int dv = 0; dv < 2; ++dv) {
                            int vc = v0 + dv;
                            if (vc < 0 || vc > 3) continue;
                            double wv = m * (dv ? vf : 1.0 - vf);
                            for (int du = 0; du < 2; ++du) {
                                int uc = u0 + du;
                                if (uc < 0 || uc > 3) continue;
                                double wu = wv * (du ? uf : 1.0 - uf);
                                double* base = hist + (vc * 4 + uc) * 8;
                                base[o0] += wu * (1.0 - of);
                                base[o1] += wu * of;
                            }
                        }
                    }
                }

                double norm2 = 0;
                for (double h : hist) norm2 += h * h;
                if (norm2 > 1e-24) {
                    double inv = 1.0 / std::sqrt(norm2);
                    double norm2b = 0;
                    for (double& h : hist) {
                        h = std::min(h * inv, opts.clip);
                        norm2b += h * h;
                    }
                    if (norm2b > 1e-24) {
                        double invb = 1.0 / std::sqrt(norm2b);
                        for (double& h : hist) h *= invb;
                    }
                }

                std::vector<float> row(dim);
                for (int i = 0; i < 128; ++i) row[i] = static_cast<float>(hist[i]);
                double area = static_cast<double>(opts.support) * opts.support;
                row[128] = static_cast<float>(rs / area);
                row[129] = static_cast<float>(gs / area);
                row[130] = static_cast<float>(bs / area);
                desc_rows.push_back(std::move(row));

                // The window covers pixels {c-half .. c+half-1}; its geometric
                // center sits at c - 0.5, which is the reported location.
                DenseFeatureField::Sample smp;
                smp.u = static_cast<float>(cx * bx - 0.5);
                smp.v = static_cast<float>(cy * by - 0.5);
                smp.scale = s;
                field.samples.push_back(smp);
            }
        }
    }

    field.descriptors = MatF(static_cast<int>(desc_rows.size()), dim);
    for (std::size_t i = 0; i < desc_rows.size(); ++i)
        std::copy(desc_rows[i].begin(), desc_rows[i].end(),
                  field.descriptors.row(static_cast<int>(i)));
    return field;
}

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

PcaModel fit_pca(const MatF& samples, int out_dim) {
    const int n = samples.rows;
    const int d = samples.cols;
    if (out_dim <= 0 || out_dim > d) throw std::invalid_argument("out_dim out of range");
    if (n < out_dim) throw std::invalid_argument("need at least out_dim samples");

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < n; ++i) {
        const float* row = samples.row(i);
        for (int j = 0; j < d; ++j) mean[j] += row[j];
    }
    mean /= n;

    // Two-pass centered covariance, 1/(N-1) scaling, double accumulation.
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd c(d);
    for (int i = 0; i < n; ++i) {
        const float* row = samples.row(i);
        for (int j = 0; j < d; ++j) c[j] = row[j] - mean[j];
        cov.selfadjointView<Eigen::Lower>().rankUpdate(c, 1.0);
    }
    cov = cov.selfadjointView<Eigen::Lower>();
    cov /= (n > 1) ? (n - 1) : 1;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
    Eigen::VectorXd evals = es.eigenvalues(); // ascending
    Eigen::MatrixXd evecs = es.eigenvectors();

    double lmax = std::max(evals[d - 1], 0.0);
    double tol = lmax * 1e-9;
    int rank = 0;
    for (int i = 0; i < d; ++i)
        if (evals[i] > tol) ++rank;
    if (rank < out_dim)
        throw std::runtime_error("rank-deficient input: rank " + std::to_string(rank) +
                                 " < requested " + std::to_string(out_dim) + " components");

    PcaModel model;
    model.mean = MatF(1, d);
    for (int j = 0; j < d; ++j) model.mean.data[j] = static_cast<float>(mean[j]);
    model.projection = MatF(out_dim, d);
    model.explained_variance.resize(out_dim);
    for (int r = 0; r < out_dim; ++r) {
        Eigen::VectorXd v = evecs.col(d - 1 - r); // descending eigenvalue order
        model.explained_variance[r] = evals[d - 1 - r];
        int arg = 0;
        for (int j = 1; j < d; ++j)
            if (std::abs(v[j]) > std::abs(v[arg])) arg = j;
        if (v[arg] < 0) v = -v;
        for (int j = 0; j < d; ++j) model.projection(r, j) = static_cast<float>(v[j]);
    }
    return model;
}

MatF apply_pca(const PcaModel& model, const MatF& descriptors) {
    const int d = model.in_dim();
    const int k = model.out_dim();
    if (descriptors.cols != d)
        throw std::invalid_argument("descriptor dimension " + std::to_string(descriptors.cols) +
                                    " does not match PCA input dimension " + std::to_string(d));
    MatF out(descriptors.rows, k);
    std::vector<double> centered(static_cast<std::size_t>(d));
    for (int i = 0; i < descriptors.rows; ++i) {
        const float* x = descriptors.row(i);
        for (int j = 0; j < d; ++j) centered[j] = static_cast<double>(x[j]) - model.mean.data[j];
        for (int r = 0; r < k; ++r) {
            const float* p = model.projection.row(r);
            double acc = 0;
            for (int j = 0; j < d; ++j) acc += p[j] * centered[j];
            out(i, r) = static_cast<float>(acc);
        }
    }
    return out;
}

DenseFeatureField apply_pca(const PcaModel& model, const DenseFeatureField& field) {
    DenseFeatureField out;
    out.samples = field.samples;
    out.options = field.options;
    out.skipped_scales = field.skipped_scales;
    out.descriptors = apply_pca(model, field.descriptors);
    return out;
}

ModelContainer to_container(const PcaModel& model) {
    ModelContainer c;
    c.kind = "pca";
    c.meta["in_dim"] = model.in_dim();
    c.meta["out_dim"] = model.out_dim();
    c.meta["explained_variance"] = model.explained_variance;
    c.mats.emplace_back("mean", model.mean);
    c.mats.emplace_back("projection", model.projection);
    return c;
}

PcaModel pca_from_container(const ModelContainer& container) {
    if (container.kind != "pca")
        throw std::runtime_error("expected container kind 'pca', got '" + container.kind + "'");
    PcaModel model;
    model.mean = container.mat("mean");
    model.projection = container.mat("projection");
    if (container.meta.contains("explained_variance"))
        model.explained_variance =
            container.meta.at("explained_variance").get<std::vector<double>>();
    if (model.mean.rows != 1 || model.projection.cols != model.mean.cols)
        throw std::runtime_error("pca container has inconsistent shapes");
    // Orthonormality degrades only through f32 storage; 1e-6 is generous.
    const int k = model.projection.rows, d = model.projection.cols;
    for (int a = 0; a < k; ++a)
        for (int b = a; b < k; ++b) {
            double dot = 0;
            for (int j = 0; j < d; ++j)
                dot += static_cast<double>(model.projection(a, j)) * model.projection(b, j);
            double want = (a == b) ? 1.0 : 0.0;
            if (std::abs(dot - want) > 1e-6)
                throw std::runtime_error("pca projection rows not orthonormal");
        }
    return model;
}

} // namespace mvor
