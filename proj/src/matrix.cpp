#include "waffle/matrix.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace waffle {

DenseMatrix::DenseMatrix(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != rows * cols)
        throw ShapeError("DenseMatrix: " + std::to_string(data.size()) + " values for " +
                         std::to_string(rows) + "x" + std::to_string(cols));
}

DenseMatrix DenseMatrix::filled(std::size_t r, std::size_t c, double v) {
    DenseMatrix m(r, c);
    for (auto& x : m.data) x = v;
    return m;
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

DenseMatrix DenseMatrix::row_vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return DenseMatrix(1, n, std::move(values));
}

namespace {

std::string shape_str(const DenseMatrix& m) {
    return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

}  // namespace

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols != b.rows)
        throw ShapeError("matmul: " + shape_str(a) + " x " + shape_str(b));
    DenseMatrix out(a.rows, b.cols);
    // ikj order keeps the inner loop contiguous in both b and out.
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = &a.data[i * a.cols];
        double* orow = &out.data[i * out.cols];
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = &b.data[k * b.cols];
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols != b.cols)
        throw ShapeError("matmul_nt: " + shape_str(a) + " x " + shape_str(b) + "^T");
    DenseMatrix out(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = &a.data[i * a.cols];
        double* orow = &out.data[i * out.cols];
        for (std::size_t j = 0; j < b.rows; ++j) {
            const double* brow = &b.data[j * b.cols];
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
            orow[j] = acc;
        }
    }
    return out;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows != b.rows)
        throw ShapeError("matmul_tn: " + shape_str(a) + "^T x " + shape_str(b));
    DenseMatrix out(a.cols, b.cols);
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double* arow = &a.data[k * a.cols];
        const double* brow = &b.data[k * b.cols];
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double aki = arow[i];
            if (aki == 0.0) continue;
            double* orow = &out.data[i * out.cols];
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aki * brow[j];
        }
    }
    return out;
}

void sgd_step(DenseMatrix& param, const DenseMatrix& grad, double lr) {
    if (!param.same_shape(grad))
        throw ShapeError("sgd_step: param " + shape_str(param) + " vs grad " + shape_str(grad));
    for (std::size_t i = 0; i < param.data.size(); ++i) param.data[i] -= lr * grad.data[i];
}

void sgd_step(std::vector<DenseMatrix*> params, const std::vector<const DenseMatrix*>& grads,
              double lr) {
    if (params.size() != grads.size()) throw ShapeError("sgd_step: param/grad count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) sgd_step(*params[i], *grads[i], lr);
}

void ensure_finite(const DenseMatrix& m, const char* context) {
    for (double v : m.data) {
        if (!std::isfinite(v))
            throw ConsistencyError(std::string("non-finite value in ") + context);
    }
}

DenseMatrix im2col(const std::vector<double>& chw, std::size_t channels, std::size_t height,
                   std::size_t width, std::size_t kh, std::size_t kw, std::size_t stride,
                   std::size_t pad) {
    if (kh < 1 || kw < 1 || stride < 1) throw ContractError("im2col: kernel/stride must be >= 1");
    if (chw.size() != channels * height * width)
        throw ShapeError("im2col: input length does not match (C,H,W)");
    const std::size_t out_h = conv_out_dim(height, kh, stride, pad);
    const std::size_t out_w = conv_out_dim(width, kw, stride, pad);
    DenseMatrix out(channels * kh * kw, out_h * out_w);
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < kh; ++i) {
            for (std::size_t j = 0; j < kw; ++j) {
                const std::size_t row = (c * kh + i) * kw + j;
                double* orow = &out.data[row * out.cols];
                for (std::size_t oh = 0; oh < out_h; ++oh) {
                    const std::ptrdiff_t ih =
                        static_cast<std::ptrdiff_t>(oh * stride + i) - static_cast<std::ptrdiff_t>(pad);
                    for (std::size_t ow = 0; ow < out_w; ++ow) {
                        const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + j) -
                                                  static_cast<std::ptrdiff_t>(pad);
                        double v = 0.0;
                        if (ih >= 0 && ih < static_cast<std::ptrdiff_t>(height) && iw >= 0 &&
                            iw < static_cast<std::ptrdiff_t>(width)) {
                            v = chw[(c * height + static_cast<std::size_t>(ih)) * width +
                                    static_cast<std::size_t>(iw)];
                        }
                        orow[oh * out_w + ow] = v;
                    }
                }
            }
        }
    }
    return out;
}

}  // namespace waffle
