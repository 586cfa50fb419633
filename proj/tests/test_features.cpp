#include "mvor/features.hpp"

#include "mvor/rng.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <map>
#include <stdexcept>

using namespace mvor;

namespace {

ImageU8 random_image(int w, int h, std::uint64_t seed) {
    ImageU8 img(w, h);
    Rng rng(seed);
    for (auto& b : img.rgb) b = static_cast<std::uint8_t>(rng.uniform_int(256));
    return img;
}

MatF random_mat(int rows, int cols, std::uint64_t seed) {
    MatF m(rows, cols);
    Rng rng(seed);
    for (auto& v : m.data) v = static_cast<float>(rng.gaussian());
    return m;
}

} // namespace

TEST_CASE("constant image gives zero gradients and the constant RGB tail") {
    ImageU8 img(64, 64);
    for (std::size_t i = 0; i < img.rgb.size(); i += 3) {
        img.rgb[i] = 200;
        img.rgb[i + 1] = 100;
        img.rgb[i + 2] = 50;
    }
    DenseFeatureField field = extract_dense(img);
    REQUIRE(field.size() > 0);
    CHECK(field.dim() == 131);
    for (std::size_t i = 0; i < field.size(); ++i) {
        const float* d = field.descriptors.row(static_cast<int>(i));
        for (int j = 0; j < 128; ++j) CHECK(d[j] == 0.0f);
        CHECK(d[128] == doctest::Approx(200.0 / 255.0).epsilon(1e-6));
        CHECK(d[129] == doctest::Approx(100.0 / 255.0).epsilon(1e-6));
        CHECK(d[130] == doctest::Approx(50.0 / 255.0).epsilon(1e-6));
    }
}

TEST_CASE("sample grid matches direct enumeration") {
    ImageU8 img = random_image(640, 480, 3);
    ExtractOptions opts;
    DenseFeatureField field = extract_dense(img, opts);
    CHECK(field.skipped_scales == 0);

    // Enumerate every grid point per level and keep those whose window plus
    // gradient margin fits; compare counts and invariants.
    std::size_t expected = 0;
    int half = opts.support / 2;
    for (int s = 0; s < opts.num_scales; ++s) {
        double f = std::pow(opts.scale_factor, s);
        int lw = std::max(1, static_cast<int>(std::lround(640 / f)));
        int lh = std::max(1, static_cast<int>(std::lround(480 / f)));
        std::size_t count = 0;
        for (int y = 0; y < lh; y += opts.step)
            for (int x = 0; x < lw; x += opts.step)
                if (x >= half + 1 && x <= lw - half - 1 && y >= half + 1 && y <= lh - half - 1)
                    ++count;
        expected += count;
        std::size_t got = 0;
        for (const auto& smp : field.samples)
            if (smp.scale == s) ++got;
        CHECK(got == count);
    }
    CHECK(field.size() == expected);

    for (std::size_t i = 0; i < field.size(); ++i) {
        const auto& smp = field.samples[i];
        CHECK(smp.u >= 0.0f);
        CHECK(smp.v >= 0.0f);
        CHECK(smp.u < 640.0f);
        CHECK(smp.v < 480.0f);
        const float* d = field.descriptors.row(static_cast<int>(i));
        for (int j = 0; j < 128; ++j) CHECK(d[j] >= 0.0f); // gradient bins
    }
}

TEST_CASE("extraction is deterministic") {
    ImageU8 img = random_image(96, 72, 5);
    DenseFeatureField a = extract_dense(img);
    DenseFeatureField b = extract_dense(img);
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.descriptors.data.data(), b.descriptors.data.data(),
                      a.descriptors.data.size() * sizeof(float)) == 0);
}

TEST_CASE("small image skips the scales that cannot fit a window") {
    // 26 px: fits the 18-px requirement at level 0 (26-9 >= 12 needs hi >= lo:
    // 26-9=17 >= 9 yes), level 1 is 18 px (hi 9 >= lo 9, single row), level 2
    // is 13 px (hi 4 < lo 9, skipped), level 3 is 9 px (skipped).
    ImageU8 img = random_image(26, 26, 7);
    DenseFeatureField field = extract_dense(img);
    CHECK(field.skipped_scales == 2);
    CHECK(field.size() > 0);
}

TEST_CASE("90-degree rotation permutes cells and orientation bins") {
    // Square side divisible by 4 so the rotated sample grid lands on itself.
    const int n = 64;
    ImageU8 img = random_image(n, n, 11);
    ImageU8 rot(n, n);
    // rot(a, b) = img(n-1-b, a): a 90-degree turn of the pixel grid.
    for (int b = 0; b < n; ++b)
        for (int a = 0; a < n; ++a)
            std::memcpy(rot.pixel(a, b), img.pixel(n - 1 - b, a), 3);

    DenseFeatureField fi = extract_dense(img);
    DenseFeatureField fr = extract_dense(rot);
    REQUIRE(fi.size() == fr.size());

    std::map<std::pair<long, long>, int> rot_index;
    for (std::size_t i = 0; i < fr.size(); ++i) {
        if (fr.samples[i].scale != 0) continue;
        rot_index[{std::lround(fr.samples[i].u * 8), std::lround(fr.samples[i].v * 8)}] =
            static_cast<int>(i);
    }

    int matched = 0;
    for (std::size_t i = 0; i < fi.size(); ++i) {
        if (fi.samples[i].scale != 0) continue;
        // Location (u, v) maps to (v, n-1-u) under the turn.
        double ru = fi.samples[i].v;
        double rv = n - 1 - fi.samples[i].u;
        auto it = rot_index.find({std::lround(ru * 8), std::lround(rv * 8)});
        if (it == rot_index.end()) continue;
        ++matched;
        const float* di = fi.descriptors.row(static_cast<int>(i));
        const float* dr = fr.descriptors.row(it->second);
        // Cell (uc, vc) -> (vc, 3-uc); orientation bin o -> o-2 mod 8.
        for (int vc = 0; vc < 4; ++vc)
            for (int uc = 0; uc < 4; ++uc)
                for (int o = 0; o < 8; ++o) {
                    int src = (vc * 4 + uc) * 8 + o;
                    int dst = ((3 - uc) * 4 + vc) * 8 + ((o + 6) & 7);
                    CHECK(std::abs(di[src] - dr[dst]) <= 5e-6f);
                }
        for (int j = 128; j < 131; ++j) CHECK(std::abs(di[j] - dr[j]) <= 5e-6f);
    }
    CHECK(matched >= 100);
}

TEST_CASE("pca recovers an exact low-dimensional subspace") {
    // Points on a 2-D affine plane embedded in 131-D.
    const int d = 131, n = 300;
    Rng rng(21);
    std::vector<float> origin(d), e1(d), e2(d);
    for (int j = 0; j < d; ++j) {
        origin[j] = static_cast<float>(rng.gaussian());
        e1[j] = static_cast<float>(rng.gaussian());
        e2[j] = static_cast<float>(rng.gaussian());
    }
    MatF samples(n, d);
    for (int i = 0; i < n; ++i) {
        float a = static_cast<float>(rng.gaussian()), b = static_cast<float>(rng.gaussian());
        for (int j = 0; j < d; ++j) samples(i, j) = origin[j] + a * e1[j] + b * e2[j];
    }
    PcaModel model = fit_pca(samples, 2);
    MatF proj = apply_pca(model, samples);

    // Reconstruct through the orthonormal rows and measure the residual.
    double worst = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
            double rec = model.mean.data[j];
            for (int r = 0; r < 2; ++r) rec += proj(i, r) * model.projection(r, j);
            worst = std::max(worst, std::abs(rec - samples(i, j)));
        }
    }
    CHECK(worst <= 1e-4); // f32 storage of the model bounds this, not the fit
    CHECK(model.explained_variance[0] >= model.explained_variance[1]);

    CHECK_THROWS_WITH_AS(fit_pca(samples, 3), doctest::Contains("rank 2"), std::runtime_error);
}

TEST_CASE("full-dimension pca is an orthonormal basis with exact reconstruction") {
    const int d = 16, n = 200;
    MatF samples = random_mat(n, d, 23);
    PcaModel model = fit_pca(samples, d);

    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
            double dot = 0;
            for (int j = 0; j < d; ++j)
                dot += static_cast<double>(model.projection(a, j)) * model.projection(b, j);
            CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) <= 1e-6);
        }

    MatF proj = apply_pca(model, samples);
    double worst = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) {
            double rec = model.mean.data[j];
            for (int r = 0; r < d; ++r) rec += proj(i, r) * model.projection(r, j);
            worst = std::max(worst, std::abs(rec - samples(i, j)));
        }
    CHECK(worst <= 1e-4); // f32 model storage
}

TEST_CASE("pca eigenvalues match an independent jacobi eigensolver") {
    const int d = 131, n = 500;
    MatF samples(n, d);
    Rng rng(29);
    for (auto& v : samples.data) v = static_cast<float>(rng.uniform(0, 0.5));
    PcaModel model = fit_pca(samples, 80);

    // Form the covariance exactly as documented: two-pass, 1/(N-1).
    std::vector<double> mean(d, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) mean[j] += samples(i, j);
    for (double& m : mean) m /= n;
    std::vector<double> cov(static_cast<std::size_t>(d) * d, 0.0);
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < d; ++a) {
            double ca = samples(i, a) - mean[a];
            for (int b = 0; b < d; ++b) cov[a * d + b] += ca * (samples(i, b) - mean[b]);
        }
    for (double& v : cov) v /= (n - 1);
    std::vector<double> evals = oracle::symmetric_eigenvalues(cov, d);

    REQUIRE(model.explained_variance.size() == 80);
    for (int r = 0; r < 80; ++r)
        CHECK(std::abs(model.explained_variance[r] - evals[r]) <= 1e-8 * std::abs(evals[0]));
    for (int r = 1; r < 80; ++r)
        CHECK(model.explained_variance[r] <= model.explained_variance[r - 1]);
}

TEST_CASE("projection is centered, non-expansive, and dimension-checked") {
    const int d = 131;
    MatF samples = random_mat(400, d, 31);
    PcaModel model = fit_pca(samples, 40);

    MatF mean_row(1, d);
    for (int j = 0; j < d; ++j) mean_row(0, j) = model.mean.data[j];
    MatF z = apply_pca(model, mean_row);
    for (int r = 0; r < 40; ++r) CHECK(std::abs(z(0, r)) <= 1e-6);

    MatF proj = apply_pca(model, samples);
    for (int i = 0; i < samples.rows; ++i) {
        double in2 = 0, out2 = 0;
        for (int j = 0; j < d; ++j) {
            double c = static_cast<double>(samples(i, j)) - model.mean.data[j];
            in2 += c * c;
        }
        for (int r = 0; r < 40; ++r) out2 += static_cast<double>(proj(i, r)) * proj(i, r);
        CHECK(out2 <= in2 * (1.0 + 1e-9) + 1e-9);
    }

    CHECK_THROWS_AS(apply_pca(model, proj), std::invalid_argument); // 40 != 131

    // Projected total variance never exceeds the centered total variance.
    double total_in = 0, total_out = 0;
    for (int i = 0; i < samples.rows; ++i) {
        for (int j = 0; j < d; ++j) {
            double c = static_cast<double>(samples(i, j)) - model.mean.data[j];
            total_in += c * c;
        }
        for (int r = 0; r < 40; ++r) total_out += static_cast<double>(proj(i, r)) * proj(i, r);
    }
    CHECK(total_out <= total_in * (1.0 + 1e-9));
}

TEST_CASE("pca container round trip") {
    MatF samples = random_mat(300, 64, 37);
    PcaModel model = fit_pca(samples, 16);
    ModelContainer c = to_container(model);
    CHECK(c.kind == "pca");
    PcaModel back = pca_from_container(c);
    CHECK(back.mean.data == model.mean.data);
    CHECK(back.projection.data == model.projection.data);
    REQUIRE(back.explained_variance.size() == 16);
    CHECK(back.explained_variance[0] == model.explained_variance[0]);

    // A corrupted projection fails the orthonormality gate.
    c.mats[1].second(0, 0) += 1.0f;
    CHECK_THROWS_WITH_AS(pca_from_container(c), doctest::Contains("orthonormal"),
                         std::runtime_error);
}

TEST_CASE("fit_pca input validation") {
    MatF samples = random_mat(10, 8, 41);
    CHECK_THROWS_AS(fit_pca(samples, 0), std::invalid_argument);
    CHECK_THROWS_AS(fit_pca(samples, 9), std::invalid_argument);
    CHECK_THROWS_AS(fit_pca(random_mat(5, 8, 43), 6), std::invalid_argument);
}
