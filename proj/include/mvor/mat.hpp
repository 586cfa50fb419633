#pragma once

#include <cstddef>
#include <vector>

namespace mvor {

/// Dense row-major matrix, the storage unit for model blobs.
template <typename T>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<T> data;

    Mat() = default;
    Mat(int r, int c, T fill = T{})
        : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

    T& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    const T& operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    T* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
    const T* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }

    /// Appends one row of `cols` values; construct as Mat(0, cols) to grow.
    void push_row(const T* src) {
        data.insert(data.end(), src, src + cols);
        ++rows;
    }

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }
};

using MatF = Mat<float>;
using MatD = Mat<double>;

inline MatD to_double(const MatF& m) {
    MatD out(m.rows, m.cols);
    for (std::size_t i = 0; i < m.data.size(); ++i) out.data[i] = m.data[i];
    return out;
}

inline MatF to_float(const MatD& m) {
    MatF out(m.rows, m.cols);
    for (std::size_t i = 0; i < m.data.size(); ++i) out.data[i] = static_cast<float>(m.data[i]);
    return out;
}

} // namespace mvor
