#pragma once

#include <cstddef>
#include <vector>

#include "waffle/error.hpp"

namespace waffle {

// Row-major dense matrix, double precision. Vectors are 1xN matrices.
struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    DenseMatrix(std::size_t r, std::size_t c, std::vector<double> values);

    static DenseMatrix zeros(std::size_t r, std::size_t c) { return DenseMatrix(r, c); }
    static DenseMatrix filled(std::size_t r, std::size_t c, double v);
    static DenseMatrix identity(std::size_t n);
    static DenseMatrix row_vector(std::vector<double> values);

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }
    bool same_shape(const DenseMatrix& o) const { return rows == o.rows && cols == o.cols; }
};

// a (m,k) x b (k,n) -> (m,n)
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
// a (m,k) x b^T where b is (n,k) -> (m,n)
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);
// a^T (k,m) x b (k,n) -> (m,n)
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);

// param <- param - lr * grad, shape-checked.
void sgd_step(DenseMatrix& param, const DenseMatrix& grad, double lr);
void sgd_step(std::vector<DenseMatrix*> params, const std::vector<const DenseMatrix*>& grads,
              double lr);

// Throws ConsistencyError if any entry is NaN or Inf.
void ensure_finite(const DenseMatrix& m, const char* context);

// Patch extraction for convolution-as-matmul. `chw` holds a single image in
// channel-major (C,H,W) order; the result has C*kh*kw rows and out_h*out_w
// columns so that kernel_matrix x im2col == convolution output.
DenseMatrix im2col(const std::vector<double>& chw, std::size_t channels, std::size_t height,
                   std::size_t width, std::size_t kh, std::size_t kw, std::size_t stride,
                   std::size_t pad);

inline std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t stride,
                                std::size_t pad) {
    if (in + 2 * pad < k) throw ShapeError("kernel larger than padded input");
    return (in + 2 * pad - k) / stride + 1;
}

}  // namespace waffle
