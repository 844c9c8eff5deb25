#pragma once

#include <cstddef>
#include <vector>

namespace tmflow {

// Field of unit vectors in R^{dim}, one per grid node, stored row-major:
// component k of node (i, j) lives at data[(i * cols + j) * dim + k].
// On the torus rows index y and columns index x; on the cylinder rows
// index the axial coordinate s and columns the angle theta.
struct SphereMapField {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t dim = 3;
    std::vector<double> data;

    SphereMapField() = default;
    SphereMapField(std::size_t rows_, std::size_t cols_, std::size_t dim_)
        : rows(rows_), cols(cols_), dim(dim_), data(rows_ * cols_ * dim_, 0.0) {}

    std::size_t nodes() const { return rows * cols; }
    double* node(std::size_t i, std::size_t j) { return data.data() + (i * cols + j) * dim; }
    const double* node(std::size_t i, std::size_t j) const { return data.data() + (i * cols + j) * dim; }

    // Rescales every nodal value to unit length. Throws NumericalAbort on a
    // zero or non-finite node.
    void normalize();
    // max over nodes of | |u| - 1 |
    double max_norm_defect() const;
    bool all_finite() const;
};

// Periodic index helpers.
inline std::size_t wrap_next(std::size_t i, std::size_t n) { return i + 1 == n ? 0 : i + 1; }
inline std::size_t wrap_prev(std::size_t i, std::size_t n) { return i == 0 ? n - 1 : i - 1; }

double dot(const double* a, const double* b, std::size_t dim);
double dist2(const double* a, const double* b, std::size_t dim);

}  // namespace tmflow
