#include "waffle/tape.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <cmath>
#include <utility>

#include "waffle/error.hpp"

namespace waffle {

Tape::Id Tape::push(DenseMatrix value, std::function<void(Tape&)> back) {
    nodes_.push_back(Node{std::move(value), DenseMatrix{}, std::move(back)});
    return static_cast<Id>(nodes_.size() - 1);
}

DenseMatrix& Tape::grad_buf(Id id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = DenseMatrix::zeros(n.value.rows, n.value.cols);
    return n.grad;
}

const DenseMatrix& Tape::grad(Id id) { return grad_buf(id); }

Tape::Id Tape::leaf(DenseMatrix v) { return push(std::move(v), nullptr); }

Tape::Id Tape::matmul(Id a, Id b) {
    DenseMatrix out = waffle::matmul(value(a), value(b));
    return push(std::move(out), [a, b, o = static_cast<Id>(nodes_.size())](Tape& t) {
        const DenseMatrix& g = t.nodes_[o].grad;
        const DenseMatrix da = waffle::matmul_nt(g, t.value(b));
        const DenseMatrix db = waffle::matmul_tn(t.value(a), g);
        DenseMatrix& ga = t.grad_buf(a);
        DenseMatrix& gb = t.grad_buf(b);
        for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += da.data[i];
        for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += db.data[i];
    });
}

Tape::Id Tape::matmul_nt(Id a, Id b) {
    DenseMatrix out = waffle::matmul_nt(value(a), value(b));
    return push(std::move(out), [a, b, o = static_cast<Id>(nodes_.size())](Tape& t) {
        const DenseMatrix& g = t.nodes_[o].grad;
        const DenseMatrix da = waffle::matmul(g, t.value(b));
        const DenseMatrix db = waffle::matmul_tn(g, t.value(a));
        DenseMatrix& ga = t.grad_buf(a);
        DenseMatrix& gb = t.grad_buf(b);
        for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += da.data[i];
        for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += db.data[i];
    });
}

Tape::Id Tape::scale_cols(Id x, Id v) {
    const DenseMatrix& xv = value(x);
    const DenseMatrix& vv = value(v);
    if (vv.rows != 1 || vv.cols != xv.cols) throw ShapeError("scale_cols: v must be 1 x x.cols");
    DenseMatrix out(xv.rows, xv.cols);
    for (std::size_t r = 0; r < xv.rows; ++r)
        for (std::size_t c = 0; c < xv.cols; ++c) out.at(r, c) = xv.at(r, c) * vv.data[c];
    return push(std::move(out), [x, v, o = static_cast<Id>(nodes_.size())](Tape& t) {
        const DenseMatrix& g = t.nodes_[o].grad;
        const DenseMatrix& xv = t.value(x);
        const DenseMatrix& vv = t.value(v);
        DenseMatrix& gx = t.grad_buf(x);
        DenseMatrix& gv = t.grad_buf(v);
        for (std::size_t r = 0; r < xv.rows; ++r) {
            for (std::size_t c = 0; c < xv.cols; ++c) {
                gx.at(r, c) += g.at(r, c) * vv.data[c];
                gv.data[c] += g.at(r, c) * xv.at(r, c);
            }
        }
    });
}

Tape::Id Tape::scale_rows(Id x, Id v) {
    const DenseMatrix& xv = value(x);
    const DenseMatrix& vv = value(v);
    if (vv.rows != 1 || vv.cols != xv.rows) throw ShapeError("scale_rows: v must be 1 x x.rows");
    DenseMatrix out(xv.rows, xv.cols);
    for (std::size_t r = 0; r < xv.rows; ++r)
        for (std::size_t c = 0; c < xv.cols; ++c) out.at(r, c) = xv.at(r, c) * vv.data[r];
    return push(std::move(out), [x, v, o = static_cast<Id>(nodes_.size())](Tape& t) {
        const DenseMatrix& g = t.nodes_[o].grad;
        const DenseMatrix& xv = t.value(x);
        const DenseMatrix& vv = t.value(v);
        DenseMatrix& gx = t.grad_buf(x);
        DenseMatrix& gv = t.grad_buf(v);
        for (std::size_t r = 0; r < xv.rows; ++r) {
            for (std::size_t c = 0; c < xv.cols; ++c) {
                gx.at(r, c) += g.at(r, c) * vv.data[r];
                gv.data[r] += g.at(r, c) * xv.at(r, c);
            }
        }
    });
}

namespace {
void check_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* op) {
    if (!a.same_shape(b)) throw ShapeError(std::string(op) + ": shape mismatch");
}
}  // namespace

Tape::Id Tape::add(Id a, Id b) {
    check_same_shape(value(a), value(b), "add");
    DenseMatrix out = value(a);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += value(b).data[i];
    return push(std::move(out), [a, b, o = static_cast<Id>(nodes_.size())](Tape& t) {
        const DenseMatrix& g = t.nodes_[o].grad;
        DenseMatrix& ga = t.grad_buf(a);
        DenseMatrix& gb = t.grad_buf(b);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            ga.data[i] += g.data[i];
            gb.data[i] += g.data[i];
        }
    });
}

Tape::Id Tape::sub(Id a, Id b) {
    check_same_shape(value(a), value(b), "sub");
    DenseMatrix out = value(a);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= value(b).data[i];
    return push(std::move(out), [a, b, o = static_cast<Id>(nodes_.size())](Tape& t) {
        const DenseMatrix& g = t.nodes_[o].grad;
        DenseMatrix& ga = t.grad_buf(a);
        DenseMatrix& gb = t.grad_buf(b);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            ga.data[i] += g.data[i];
            gb.data[i] -= g.data[i];
        }
    });
}

Tape::Id Tape::mul(Id a, Id b) {
    check_same_shape(value(a), value(b), "mul");
    DenseMatrix out = value(a);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= value(b).data[i];
    return push(std::move(out), [a, b, o = static_cast<Id>(nodes_.size())](Tape& t) {
        const DenseMatrix& g = t.nodes_[o].grad;
        const DenseMatrix& av = t.value(a);
        const DenseMatrix& bv = t.value(b);
        DenseMatrix& ga = t.grad_buf(a);
        DenseMatrix& gb = t.grad_buf(b);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            ga.data[i] += g.data[i] * bv.data[i];
            gb.data[i] += g.data[i] * av.data[i];
        }
    });
}

Tape::Id Tape::div(Id a, Id b) {
    check_same_shape(value(a), value(b), "div");
    DenseMatrix out = value(a);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] /= value(b).data[i];
    return push(std::move(out), [a, b, o = static_cast<Id>(nodes_.size())](Tape& t) {
        const DenseMatrix& g = t.nodes_[o].grad;
        const DenseMatrix& ov = t.nodes_[o].value;
        const DenseMatrix& bv = t.value(b);
        DenseMatrix& ga = t.grad_buf(a);
        DenseMatrix& gb = t.grad_buf(b);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            ga.data[i] += g.data[i] / bv.data[i];
            gb.data[i] -= g.data[i] * ov.data[i] / bv.data[i];
        }
    });
}

Tape::Id Tape::scale(Id a, double s) {
    DenseMatrix out = value(a);
    for (auto& v : out.data) v *= s;
    return push(std::move(out), [a, s, o = static_cast<Id>(nodes_.size())](Tape& t) {
        const DenseMatrix& g = t.nodes_[o].grad;
        DenseMatrix& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += s * g.data[i];
    });
}

Tape::Id Tape::add_scalar(Id a, double s) {
    DenseMatrix out = value(a);
    for (auto& v : out.data) v += s;
    return push(std::move(out), [a, o = static_cast<Id>(nodes_.size())](Tape& t) {
        const DenseMatrix& g = t.nodes_[o].grad;
        DenseMatrix& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
    });
}

Tape::Id Tape::add_constmat(Id a, const DenseMatrix& m) {
    check_same_shape(value(a), m, "add_constmat");
    DenseMatrix out = value(a);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += m.data[i];
    return push(std::move(out), [a, o = static_cast<Id>(nodes_.size())](Tape& t) {
        const DenseMatrix& g = t.nodes_[o].grad;
        DenseMatrix& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
    });
}

Tape::Id Tape::exp(Id a) {
    DenseMatrix out = value(a);
    for (auto& v : out.data) v = std::exp(v);
    return push(std::move(out), [a, o = static_cast<Id>(nodes_.size())](Tape& t) {
        const DenseMatrix& g = t.nodes_[o].grad;
        const DenseMatrix& ov = t.nodes_[o].value;
        DenseMatrix& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * ov.data[i];
    });
}

Tape::Id Tape::log(Id a) {
    DenseMatrix out = value(a);
    for (auto& v : out.data) v = std::log(v);
    return push(std::move(out), [a, o = static_cast<Id>(nodes_.size())](Tape& t) {
        const DenseMatrix& g = t.nodes_[o].grad;
        const DenseMatrix& av = t.value(a);
        DenseMatrix& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] / av.data[i];
    });
}

Tape::Id Tape::log1m(Id a) {
    DenseMatrix out = value(a);
    for (auto& v : out.data) v = std::log1p(-v);
    return push(std::move(out), [a, o = static_cast<Id>(nodes_.size())](Tape& t) {
        const DenseMatrix& g = t.nodes_[o].grad;
        const DenseMatrix& av = t.value(a);
        DenseMatrix& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < g.data.size(); ++i)
            ga.data[i] -= g.data[i] / (1.0 - av.data[i]);
    });
}

Tape::Id Tape::sigmoid(Id a) {
    DenseMatrix out = value(a);
    for (auto& v : out.data) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                          : std::exp(v) / (1.0 + std::exp(v));
    return push(std::move(out), [a, o = static_cast<Id>(nodes_.size())](Tape& t) {
        const DenseMatrix& g = t.nodes_[o].grad;
        const DenseMatrix& ov = t.nodes_[o].value;
        DenseMatrix& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < g.data.size(); ++i)
            ga.data[i] += g.data[i] * ov.data[i] * (1.0 - ov.data[i]);
    });
}

Tape::Id Tape::softplus(Id a) {
    DenseMatrix out = value(a);
    for (auto& v : out.data) v = stable_softplus(v);
    return push(std::move(out), [a, o = static_cast<Id>(nodes_.size())](Tape& t) {
        const DenseMatrix& g = t.nodes_[o].grad;
        const DenseMatrix& av = t.value(a);
        DenseMatrix& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            const double x = av.data[i];
            const double sig = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                        : std::exp(x) / (1.0 + std::exp(x));
            ga.data[i] += g.data[i] * sig;
        }
    });
}

Tape::Id Tape::relu(Id a) {
    DenseMatrix out = value(a);
    for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
    return push(std::move(out), [a, o = static_cast<Id>(nodes_.size())](Tape& t) {
        const DenseMatrix& g = t.nodes_[o].grad;
        const DenseMatrix& av = t.value(a);
        DenseMatrix& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < g.data.size(); ++i)
            if (av.data[i] > 0.0) ga.data[i] += g.data[i];
    });
}

Tape::Id Tape::clamp(Id a, double lo, double hi) {
    DenseMatrix out = value(a);
    for (auto& v : out.data) v = v < lo ? lo : (v > hi ? hi : v);
    return push(std::move(out), [a, lo, hi, o = static_cast<Id>(nodes_.size())](Tape& t) {
        const DenseMatrix& g = t.nodes_[o].grad;
        const DenseMatrix& av = t.value(a);
        DenseMatrix& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < g.data.size(); ++i)
            if (av.data[i] > lo && av.data[i] < hi) ga.data[i] += g.data[i];
    });
}

Tape::Id Tape::reciprocal(Id a) {
    DenseMatrix out = value(a);
    for (auto& v : out.data) v = 1.0 / v;
    return push(std::move(out), [a, o = static_cast<Id>(nodes_.size())](Tape& t) {
        const DenseMatrix& g = t.nodes_[o].grad;
        const DenseMatrix& ov = t.nodes_[o].value;
        DenseMatrix& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < g.data.size(); ++i)
            ga.data[i] -= g.data[i] * ov.data[i] * ov.data[i];
    });
}

Tape::Id Tape::digamma(Id a) {
    DenseMatrix out = value(a);
    for (auto& v : out.data) v = boost::math::digamma(v);
    return push(std::move(out), [a, o = static_cast<Id>(nodes_.size())](Tape& t) {
        const DenseMatrix& g = t.nodes_[o].grad;
        const DenseMatrix& av = t.value(a);
        DenseMatrix& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < g.data.size(); ++i)
            ga.data[i] += g.data[i] * boost::math::trigamma(av.data[i]);
    });
}

Tape::Id Tape::cumsum(Id a) {
    DenseMatrix out = value(a);
    double acc = 0.0;
    for (auto& v : out.data) {
        acc += v;
        v = acc;
    }
    return push(std::move(out), [a, o = static_cast<Id>(nodes_.size())](Tape& t) {
        const DenseMatrix& g = t.nodes_[o].grad;
        DenseMatrix& ga = t.grad_buf(a);
        double acc = 0.0;
        for (std::size_t i = g.data.size(); i > 0; --i) {
            acc += g.data[i - 1];
            ga.data[i - 1] += acc;
        }
    });
}

Tape::Id Tape::sum(Id a) {
    double acc = 0.0;
    for (double v : value(a).data) acc += v;
    DenseMatrix out(1, 1);
    out.data[0] = acc;
    return push(std::move(out), [a, o = static_cast<Id>(nodes_.size())](Tape& t) {
        const double g = t.nodes_[o].grad.data[0];
        DenseMatrix& ga = t.grad_buf(a);
        for (auto& v : ga.data) v += g;
    });
}

Tape::Id Tape::softmax_cross_entropy(Id logits, const std::vector<int>& labels) {
    const DenseMatrix& z = value(logits);
    const std::size_t batch = z.rows, k = z.cols;
    if (labels.size() != batch)
        throw ContractError("softmax_cross_entropy: one label per batch row required");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= k)
            throw ContractError("softmax_cross_entropy: label out of range");
    DenseMatrix probs(batch, k);
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        double mx = z.at(b, 0);
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, z.at(b, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < k; ++j) denom += std::exp(z.at(b, j) - mx);
        const double log_denom = std::log(denom);
        for (std::size_t j = 0; j < k; ++j) probs.at(b, j) = std::exp(z.at(b, j) - mx) / denom;
        loss -= (z.at(b, static_cast<std::size_t>(labels[b])) - mx - log_denom);
    }
    DenseMatrix out(1, 1);
    out.data[0] = loss / static_cast<double>(batch);
    return push(std::move(out), [logits, labels, probs = std::move(probs),
                                 o = static_cast<Id>(nodes_.size())](Tape& t) {
        const double g = t.nodes_[o].grad.data[0];
        DenseMatrix& gz = t.grad_buf(logits);
        const double inv_b = 1.0 / static_cast<double>(probs.rows);
        for (std::size_t b = 0; b < probs.rows; ++b)
            for (std::size_t j = 0; j < probs.cols; ++j) {
                double d = probs.at(b, j);
                if (j == static_cast<std::size_t>(labels[b])) d -= 1.0;
                gz.at(b, j) += g * d * inv_b;
            }
    });
}

namespace {

// Walks every (patch row, output pixel) pair of a batched im2col layout and
// reports the source index into the flat (B, C*H*W) input, or -1 for padding.
template <typename Fn>
void for_each_im2col_entry(const ConvGeom& g, std::size_t batch, Fn&& fn) {
    const std::size_t oh = g.out_h(), ow = g.out_w();
    const std::size_t img = g.channels * g.height * g.width;
    for (std::size_t c = 0; c < g.channels; ++c)
        for (std::size_t i = 0; i < g.kh; ++i)
            for (std::size_t j = 0; j < g.kw; ++j) {
                const std::size_t row = (c * g.kh + i) * g.kw + j;
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t y = 0; y < oh; ++y) {
                        const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(y * g.stride + i) -
                                                  static_cast<std::ptrdiff_t>(g.pad);
                        for (std::size_t x = 0; x < ow; ++x) {
                            const std::ptrdiff_t iw =
                                static_cast<std::ptrdiff_t>(x * g.stride + j) -
                                static_cast<std::ptrdiff_t>(g.pad);
                            const std::size_t col = b * oh * ow + y * ow + x;
                            std::ptrdiff_t src = -1;
                            if (ih >= 0 && ih < static_cast<std::ptrdiff_t>(g.height) && iw >= 0 &&
                                iw < static_cast<std::ptrdiff_t>(g.width)) {
                                src = static_cast<std::ptrdiff_t>(
                                    b * img + (c * g.height + static_cast<std::size_t>(ih)) * g.width +
                                    static_cast<std::size_t>(iw));
                            }
                            fn(row, col, src);
                        }
                    }
            }
}

}  // namespace

Tape::Id Tape::im2col_batch(Id x, const ConvGeom& g) {
    const DenseMatrix& xv = value(x);
    if (xv.cols != g.channels * g.height * g.width)
        throw ShapeError("im2col_batch: input cols do not match (C,H,W)");
    const std::size_t batch = xv.rows;
    DenseMatrix out(g.channels * g.kh * g.kw, batch * g.out_h() * g.out_w());
    for_each_im2col_entry(g, batch, [&](std::size_t row, std::size_t col, std::ptrdiff_t src) {
        out.at(row, col) = src >= 0 ? xv.data[static_cast<std::size_t>(src)] : 0.0;
    });
    return push(std::move(out), [x, g, batch, o = static_cast<Id>(nodes_.size())](Tape& t) {
        const DenseMatrix& gout = t.nodes_[o].grad;
        DenseMatrix& gx = t.grad_buf(x);
        for_each_im2col_entry(g, batch, [&](std::size_t row, std::size_t col, std::ptrdiff_t src) {
            if (src >= 0) gx.data[static_cast<std::size_t>(src)] += gout.at(row, col);
        });
    });
}

Tape::Id Tape::cols_to_batch(Id y, std::size_t batch, std::size_t j, std::size_t p) {
    const DenseMatrix& yv = value(y);
    if (yv.rows != j || yv.cols != batch * p)
        throw ShapeError("cols_to_batch: expected (J, B*P) input");
    DenseMatrix out(batch, j * p);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t jj = 0; jj < j; ++jj)
            for (std::size_t pp = 0; pp < p; ++pp)
                out.at(b, jj * p + pp) = yv.at(jj, b * p + pp);
    return push(std::move(out), [y, batch, j, p, o = static_cast<Id>(nodes_.size())](Tape& t) {
        const DenseMatrix& g = t.nodes_[o].grad;
        DenseMatrix& gy = t.grad_buf(y);
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t jj = 0; jj < j; ++jj)
                for (std::size_t pp = 0; pp < p; ++pp)
                    gy.at(jj, b * p + pp) += g.at(b, jj * p + pp);
    });
}

Tape::Id Tape::maxpool2(Id x, std::size_t channels, std::size_t height, std::size_t width) {
    const DenseMatrix& xv = value(x);
    if (xv.cols != channels * height * width)
        throw ShapeError("maxpool2: input cols do not match (C,H,W)");
    const std::size_t batch = xv.rows;
    const std::size_t ph = height / 2, pw = width / 2;
    if (ph == 0 || pw == 0) throw ShapeError("maxpool2: spatial dims too small");
    DenseMatrix out(batch, channels * ph * pw);
    std::vector<std::size_t> argmax(out.data.size());
    for (std::size_t b = 0; b < batch; ++b) {
        const double* row = &xv.data[b * xv.cols];
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t y = 0; y < ph; ++y)
                for (std::size_t xcol = 0; xcol < pw; ++xcol) {
                    double best = -1e308;
                    std::size_t best_idx = 0;
                    for (std::size_t dy = 0; dy < 2; ++dy)
                        for (std::size_t dx = 0; dx < 2; ++dx) {
                            const std::size_t idx =
                                (c * height + 2 * y + dy) * width + 2 * xcol + dx;
                            if (row[idx] > best) {  // strict: first index wins ties
                                best = row[idx];
                                best_idx = idx;
                            }
                        }
                    const std::size_t oidx = b * out.cols + (c * ph + y) * pw + xcol;
                    out.data[oidx] = best;
                    argmax[oidx] = b * xv.cols + best_idx;
                }
    }
    return push(std::move(out),
                [x, argmax = std::move(argmax), o = static_cast<Id>(nodes_.size())](Tape& t) {
                    const DenseMatrix& g = t.nodes_[o].grad;
                    DenseMatrix& gx = t.grad_buf(x);
                    for (std::size_t i = 0; i < g.data.size(); ++i)
                        gx.data[argmax[i]] += g.data[i];
                });
}

void Tape::backward(Id loss) {
    const DenseMatrix& lv = value(loss);
    if (lv.rows != 1 || lv.cols != 1) throw ContractError("backward: loss must be scalar");
    grad_buf(loss).data[0] = 1.0;
    // Reverse creation order is a reverse topological order; nodes that never
    // received gradient are skipped, leaving their parameters at exact zero.
    for (std::size_t i = loss + 1; i > 0; --i) {
        Node& n = nodes_[i - 1];
        if (!n.grad.empty() && n.back) n.back(*this);
    }
}

double stable_softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
    if (y <= 0.0) throw ContractError("softplus_inverse: argument must be positive");
    if (y > 30.0) return y + std::log1p(-std::exp(-y));
    return std::log(std::expm1(y));
}

DenseMatrix softmax_rows(const DenseMatrix& logits) {
    DenseMatrix out(logits.rows, logits.cols);
    for (std::size_t b = 0; b < logits.rows; ++b) {
        double mx = logits.at(b, 0);
        for (std::size_t j = 1; j < logits.cols; ++j) mx = std::max(mx, logits.at(b, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) {
            out.at(b, j) = std::exp(logits.at(b, j) - mx);
            denom += out.at(b, j);
        }
        for (std::size_t j = 0; j < logits.cols; ++j) out.at(b, j) /= denom;
    }
    return out;
}

}  // namespace waffle
