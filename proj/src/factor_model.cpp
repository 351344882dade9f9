#include "waffle/factor_model.hpp"

#include <cmath>
#include <string>

#include "waffle/error.hpp"

namespace waffle {

Algorithm algorithm_from_string(std::string_view s) {
    if (s == "waffle") return Algorithm::waffle;
    if (s == "fedavg") return Algorithm::fedavg;
    if (s == "fedprox") return Algorithm::fedprox;
    throw ConfigError("unknown algorithm: " + std::string(s));
}

std::string_view to_string(Algorithm a) {
    switch (a) {
        case Algorithm::waffle: return "waffle";
        case Algorithm::fedavg: return "fedavg";
        case Algorithm::fedprox: return "fedprox";
    }
    return "?";
}

std::vector<std::size_t> ModelConfig::factorized_layers() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < layers.size(); ++i)
        if (layers[i].factorized) out.push_back(i);
    return out;
}

void ModelConfig::validate() const {
    if (layers.empty()) throw ConfigError("model has no layers");
    std::size_t ch = input_channels, h = input_h, w = input_w;
    bool spatial = true;  // conv layers are only legal while spatial dims are tracked
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        if (l.out_dim < 1 || l.in_dim < 1) throw ConfigError("layer dims must be >= 1");
        if (l.factorized && l.num_factors < 1) throw ConfigError("factorized layer needs F >= 1");
        if (l.kind == LayerKind::conv) {
            if (!spatial) throw ConfigError("conv layer after flattening");
            if (l.in_dim != ch) throw ConfigError("conv in_channels mismatch at layer " +
                                                  std::to_string(i));
            h = conv_out_dim(h, l.kh, l.stride, l.pad);
            w = conv_out_dim(w, l.kw, l.stride, l.pad);
            ch = l.out_dim;
            if (l.pool_after) {
                h /= 2;
                w /= 2;
                if (h == 0 || w == 0) throw ConfigError("pooled away all spatial extent");
            }
        } else {
            const std::size_t flat = spatial ? ch * h * w : ch;
            if (l.in_dim != flat)
                throw ConfigError("dense in_dim " + std::to_string(l.in_dim) +
                                  " != incoming width " + std::to_string(flat) + " at layer " +
                                  std::to_string(i));
            spatial = false;
            ch = l.out_dim;
        }
    }
    const std::size_t final_dim = spatial ? ch * h * w : ch;
    if (final_dim != num_classes) throw ConfigError("final layer width != num_classes");
}

ModelConfig ModelConfig::preset(std::string_view name) {
    ModelConfig m;
    m.name = std::string(name);
    if (name == "mnist-mlp") {
        m.input_channels = 1;
        m.input_h = m.input_w = 28;
        m.num_classes = 10;
        m.default_lr = 0.04;
        m.layers = {
            LayerSpec{LayerKind::dense, 200, 784, 0, 0, 1, 0, true, 120, true, false},
            LayerSpec{LayerKind::dense, 10, 200, 0, 0, 1, 0, false, 0, false, false},
        };
    } else if (name == "fmnist-conv") {
        m.input_channels = 1;
        m.input_h = m.input_w = 28;
        m.num_classes = 10;
        m.default_lr = 0.02;
        m.layers = {
            LayerSpec{LayerKind::conv, 16, 1, 5, 5, 1, 2, true, 25, true, true},
            LayerSpec{LayerKind::conv, 32, 16, 5, 5, 1, 2, true, 25, true, true},
            LayerSpec{LayerKind::dense, 10, 1568, 0, 0, 1, 0, false, 0, false, false},
        };
    } else if (name == "cifar-conv") {
        m.input_channels = 3;
        m.input_h = m.input_w = 32;
        m.num_classes = 10;
        m.default_lr = 0.02;
        m.layers = {
            LayerSpec{LayerKind::conv, 16, 3, 3, 3, 1, 1, true, 10, true, true},
            LayerSpec{LayerKind::conv, 16, 16, 3, 3, 1, 1, true, 10, true, true},
            LayerSpec{LayerKind::dense, 80, 1024, 0, 0, 1, 0, true, 80, true, false},
            LayerSpec{LayerKind::dense, 60, 80, 0, 0, 1, 0, true, 40, true, false},
            LayerSpec{LayerKind::dense, 10, 60, 0, 0, 1, 0, false, 0, false, false},
        };
    } else {
        throw ConfigError("unknown model preset: " + std::string(name));
    }
    m.validate();
    return m;
}

ModelConfig ModelConfig::synth_mlp(std::size_t input_dim, std::size_t hidden, std::size_t classes,
                                   std::size_t factors) {
    ModelConfig m;
    m.name = "synth-mlp";
    m.input_channels = 1;
    m.input_h = 1;
    m.input_w = input_dim;
    m.num_classes = classes;
    m.default_lr = 0.05;
    m.layers = {
        LayerSpec{LayerKind::dense, hidden, input_dim, 0, 0, 1, 0, true, factors, true, false},
        LayerSpec{LayerKind::dense, classes, hidden, 0, 0, 1, 0, false, 0, false, false},
    };
    m.validate();
    return m;
}

void ModelConfig::override_factors(const std::vector<std::size_t>& factors) {
    const auto idx = factorized_layers();
    if (factors.empty()) return;
    if (factors.size() != 1 && factors.size() != idx.size())
        throw ConfigError("ibp.factors: expected 1 or " + std::to_string(idx.size()) + " values");
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const std::size_t f = factors.size() == 1 ? factors[0] : factors[i];
        if (f < 1) throw ConfigError("ibp.factors: F must be >= 1");
        layers[idx[i]].num_factors = f;
    }
}

bool FactorDictionary::same_shapes(const FactorDictionary& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerParams& a = layers[i];
        const LayerParams& b = o.layers[i];
        if (a.factorized != b.factorized) return false;
        if (!a.w.same_shape(b.w) || !a.wa.same_shape(b.wa) || !a.wb.same_shape(b.wb) ||
            !a.r.same_shape(b.r))
            return false;
    }
    return true;
}

FactorScores FactorScores::all_ones(const ModelConfig& model) {
    FactorScores s;
    for (std::size_t i : model.factorized_layers())
        s.by_layer[i] = DenseMatrix::filled(1, model.layers[i].num_factors, 1.0);
    return s;
}

DenseMatrix compose_weight(const DenseMatrix& wa, const DenseMatrix& r, const DenseMatrix& b,
                           const DenseMatrix& wb) {
    const std::size_t f = wa.cols;
    if (wb.rows != f || r.size() != f || b.size() != f)
        throw ShapeError("compose_weight: factor dimension mismatch");
    DenseMatrix scaled = wb;  // diag(r.*b) * W_b
    for (std::size_t k = 0; k < f; ++k) {
        const double lambda = r.data[k] * b.data[k];
        for (std::size_t m = 0; m < wb.cols; ++m) scaled.at(k, m) *= lambda;
    }
    return matmul(wa, scaled);
}

std::size_t count_parameters(const ModelConfig& model, Algorithm algorithm) {
    std::size_t total = 0;
    for (const LayerSpec& l : model.layers) {
        const std::size_t j = l.out_dim, m = l.weight_cols();
        if (algorithm == Algorithm::waffle && l.factorized) {
            total += j * l.num_factors + l.num_factors * m + l.num_factors;
        } else {
            total += j * m;
        }
    }
    return total;
}

namespace {

DenseMatrix glorot_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in,
                           std::size_t fan_out, RngStream& rng) {
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseMatrix m(rows, cols);
    for (auto& v : m.data) v = (2.0 * rng.uniform() - 1.0) * s;
    return m;
}

}  // namespace

FactorDictionary init_dictionary(const ModelConfig& model, Algorithm algorithm, RngStream& rng) {
    FactorDictionary dict;
    for (const LayerSpec& l : model.layers) {
        LayerParams p;
        const std::size_t j = l.out_dim, m = l.weight_cols();
        if (algorithm == Algorithm::waffle && l.factorized) {
            const std::size_t f = l.num_factors;
            p.factorized = true;
            p.wa = glorot_uniform(j, f, j, f, rng);
            p.wb = glorot_uniform(f, m, f, m, rng);
            p.r = DenseMatrix::filled(1, f, 1.0);
        } else {
            p.w = glorot_uniform(j, m, j, m, rng);
        }
        dict.layers.push_back(std::move(p));
    }
    return dict;
}

void StagedParams::collect(std::vector<Tape::Id>& out) const {
    for (const Layer& l : layers) {
        if (l.factorized) {
            out.push_back(l.wa);
            out.push_back(l.wb);
            out.push_back(l.r);
        } else {
            out.push_back(l.w);
        }
    }
}

StagedParams stage_params(Tape& tape, const FactorDictionary& dict) {
    StagedParams staged;
    for (const LayerParams& p : dict.layers) {
        StagedParams::Layer l;
        l.factorized = p.factorized;
        if (p.factorized) {
            l.wa = tape.leaf(p.wa);
            l.wb = tape.leaf(p.wb);
            l.r = tape.leaf(p.r);
        } else {
            l.w = tape.leaf(p.w);
        }
        staged.layers.push_back(l);
    }
    return staged;
}

Tape::Id forward_pass(Tape& tape, const ModelConfig& model, const StagedParams& params,
                      const std::map<std::size_t, Tape::Id>& scores, Tape::Id x) {
    if (params.layers.size() != model.layers.size())
        throw ContractError("forward_pass: staged params do not match model");
    const std::size_t batch = tape.value(x).rows;
    std::size_t ch = model.input_channels, h = model.input_h, w = model.input_w;
    Tape::Id cur = x;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const LayerSpec& l = model.layers[i];
        const StagedParams::Layer& sp = params.layers[i];
        // The staged dictionary decides factorization: a FedAvg dictionary
        // runs the same geometry with plain weights.
        const bool factorized = sp.factorized;
        Tape::Id lambda = 0;
        if (factorized) {
            auto it = scores.find(i);
            if (it == scores.end())
                throw ContractError("forward_pass: missing factor scores for layer " +
                                    std::to_string(i));
            lambda = tape.mul(sp.r, it->second);  // r .* b
        }
        if (l.kind == LayerKind::conv) {
            ConvGeom g{ch, h, w, l.kh, l.kw, l.stride, l.pad};
            const std::size_t p = g.out_h() * g.out_w();
            Tape::Id cols = tape.im2col_batch(cur, g);
            Tape::Id y;
            if (factorized) {
                Tape::Id tmid = tape.matmul(sp.wb, cols);       // (F, B*P)
                Tape::Id tsc = tape.scale_rows(tmid, lambda);   // rows are factors
                y = tape.matmul(sp.wa, tsc);                    // (J, B*P)
            } else {
                y = tape.matmul(sp.w, cols);
            }
            cur = tape.cols_to_batch(y, batch, l.out_dim, p);
            ch = l.out_dim;
            h = g.out_h();
            w = g.out_w();
            if (l.relu_after) cur = tape.relu(cur);
            if (l.pool_after) {
                cur = tape.maxpool2(cur, ch, h, w);
                h /= 2;
                w /= 2;
            }
        } else {
            if (factorized) {
                Tape::Id tmid = tape.matmul_nt(cur, sp.wb);     // (B, F)
                Tape::Id tsc = tape.scale_cols(tmid, lambda);
                cur = tape.matmul_nt(tsc, sp.wa);               // (B, J)
            } else {
                cur = tape.matmul_nt(cur, sp.w);
            }
            if (l.relu_after) cur = tape.relu(cur);
        }
    }
    return cur;
}

DenseMatrix forward(const ModelConfig& model, const FactorDictionary& dict,
                    const FactorScores& scores, const DenseMatrix& x) {
    Tape tape;
    Tape::Id xid = tape.leaf(x);
    StagedParams staged = stage_params(tape, dict);
    std::map<std::size_t, Tape::Id> score_ids;
    for (const auto& [layer, b] : scores.by_layer) score_ids[layer] = tape.leaf(b);
    Tape::Id logits = forward_pass(tape, model, staged, score_ids, xid);
    return tape.value(logits);
}

}  // namespace waffle
