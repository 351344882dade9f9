#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "waffle/matrix.hpp"

namespace waffle {

struct ConvGeom {
    std::size_t channels = 1, height = 1, width = 1;
    std::size_t kh = 1, kw = 1, stride = 1, pad = 0;
    std::size_t out_h() const { return conv_out_dim(height, kh, stride, pad); }
    std::size_t out_w() const { return conv_out_dim(width, kw, stride, pad); }
};

// Define-by-run reverse-mode tape over DenseMatrix values. A tape is built
// fresh per minibatch, owned by one thread, and discarded after backward().
// Node ids are creation-ordered, so reverse id order is a reverse
// topological order of the recorded graph.
class Tape {
public:
    using Id = std::uint32_t;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Id leaf(DenseMatrix v);

    // Linear algebra
    Id matmul(Id a, Id b);     // (m,k)x(k,n)
    Id matmul_nt(Id a, Id b);  // a x b^T, b is (n,k)
    Id scale_cols(Id x, Id v);  // x (R,C) * v (1,C), broadcast down columns
    Id scale_rows(Id x, Id v);  // x (R,C) * v (1,R), broadcast across rows

    // Elementwise, same shape unless noted
    Id add(Id a, Id b);
    Id sub(Id a, Id b);
    Id mul(Id a, Id b);
    Id div(Id a, Id b);
    Id scale(Id a, double s);
    Id add_scalar(Id a, double s);
    Id add_constmat(Id a, const DenseMatrix& m);
    Id exp(Id a);
    Id log(Id a);
    Id log1m(Id a);  // log(1-x)
    Id sigmoid(Id a);
    Id softplus(Id a);
    Id relu(Id a);
    Id clamp(Id a, double lo, double hi);
    Id reciprocal(Id a);
    Id digamma(Id a);

    // Reductions / scans (over the flat row-major buffer)
    Id cumsum(Id a);
    Id sum(Id a);  // 1x1

    // Mean negative log-likelihood with max-subtracted softmax.
    Id softmax_cross_entropy(Id logits, const std::vector<int>& labels);

    // Convolution support. x is a batch (B, C*H*W) of channel-major images.
    Id im2col_batch(Id x, const ConvGeom& g);          // -> (C*kh*kw, B*oh*ow)
    Id cols_to_batch(Id y, std::size_t batch, std::size_t j, std::size_t p);  // (J,B*P)->(B,J*P)
    Id maxpool2(Id x, std::size_t channels, std::size_t height, std::size_t width);

    void backward(Id loss);

    const DenseMatrix& value(Id id) const { return nodes_[id].value; }
    // Gradient accumulated for `id`; exact zeros if the node is unused.
    const DenseMatrix& grad(Id id);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        DenseMatrix value;
        DenseMatrix grad;  // empty until first accumulation
        std::function<void(Tape&)> back;
    };

    std::vector<Node> nodes_;

    Id push(DenseMatrix value, std::function<void(Tape&)> back);
    DenseMatrix& grad_buf(Id id);
    bool grad_ready(Id id) const { return !nodes_[id].grad.empty(); }

    Id unary_elemwise(Id a, double (*f)(double), double (*df)(double, double));
};

// Numerically stable softplus and its inverse (used for variational
// parameter mapping outside the tape).
double stable_softplus(double x);
double softplus_inverse(double y);

// Row-wise softmax of a plain matrix (evaluation / attack features).
DenseMatrix softmax_rows(const DenseMatrix& logits);

}  // namespace waffle
