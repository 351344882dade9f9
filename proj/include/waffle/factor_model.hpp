#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "waffle/matrix.hpp"
#include "waffle/rng.hpp"
#include "waffle/tape.hpp"

namespace waffle {

enum class Algorithm { waffle, fedavg, fedprox };

Algorithm algorithm_from_string(std::string_view s);
std::string_view to_string(Algorithm a);

enum class LayerKind { dense, conv };

struct LayerSpec {
    LayerKind kind = LayerKind::dense;
    std::size_t out_dim = 0;  // J: dense outputs or conv output channels
    std::size_t in_dim = 0;   // dense inputs or conv input channels
    std::size_t kh = 0, kw = 0, stride = 1, pad = 0;
    bool factorized = false;
    std::size_t num_factors = 0;  // F
    bool relu_after = false;
    bool pool_after = false;  // 2x2 max pool, conv layers only

    // M: columns of the layer's weight matrix. Conv kernels are handled as
    // J x (C_in*kh*kw) matrices, folding the three input dimensions into one.
    std::size_t weight_cols() const {
        return kind == LayerKind::dense ? in_dim : in_dim * kh * kw;
    }
};

struct ModelConfig {
    std::string name;
    std::vector<LayerSpec> layers;
    std::size_t input_channels = 1, input_h = 1, input_w = 1;
    std::size_t num_classes = 0;
    double default_lr = 0.04;

    std::size_t input_dim() const { return input_channels * input_h * input_w; }
    std::vector<std::size_t> factorized_layers() const;
    void validate() const;

    // Named presets: mnist-mlp, fmnist-conv, cifar-conv.
    static ModelConfig preset(std::string_view name);
    static ModelConfig synth_mlp(std::size_t input_dim, std::size_t hidden, std::size_t classes,
                                 std::size_t factors);

    // Replace F on every factorized layer; `factors` holds either one value
    // or one value per factorized layer.
    void override_factors(const std::vector<std::size_t>& factors);
};

// One layer's share of the global parameters.
struct LayerParams {
    bool factorized = false;
    DenseMatrix w;   // J x M when unfactorized
    DenseMatrix wa;  // J x F
    DenseMatrix wb;  // F x M
    DenseMatrix r;   // 1 x F factor strengths
};

// The global dictionary of weight factors plus unfactorized layer weights;
// the only state that ever crosses the client/server boundary.
struct FactorDictionary {
    std::vector<LayerParams> layers;

    bool same_shapes(const FactorDictionary& o) const;
};

// Per-client factor scores b for every factorized layer, values in [0,1].
struct FactorScores {
    std::map<std::size_t, DenseMatrix> by_layer;  // layer index -> 1xF

    static FactorScores all_ones(const ModelConfig& model);
};

// W_a * diag(r .* b) * W_b
DenseMatrix compose_weight(const DenseMatrix& wa, const DenseMatrix& r, const DenseMatrix& b,
                           const DenseMatrix& wb);

std::size_t count_parameters(const ModelConfig& model, Algorithm algorithm);

FactorDictionary init_dictionary(const ModelConfig& model, Algorithm algorithm, RngStream& rng);

// Leaf node ids for every parameter tensor of `dict` staged on a tape.
struct StagedParams {
    struct Layer {
        bool factorized = false;
        Tape::Id w = 0, wa = 0, wb = 0, r = 0;
    };
    std::vector<Layer> layers;

    void collect(std::vector<Tape::Id>& out) const;
};

StagedParams stage_params(Tape& tape, const FactorDictionary& dict);

// Builds the network forward pass on the tape and returns the logits node.
// `scores` maps factorized layer index -> 1xF node (relaxed sample during
// training, hardened constants at evaluation). Factorized layers run in the
// order W_a*((r.*b).*(W_b*h)) without materializing the composed weight.
Tape::Id forward_pass(Tape& tape, const ModelConfig& model, const StagedParams& params,
                      const std::map<std::size_t, Tape::Id>& scores, Tape::Id x);

// Convenience one-shot forward producing logits for a batch.
DenseMatrix forward(const ModelConfig& model, const FactorDictionary& dict,
                    const FactorScores& scores, const DenseMatrix& x);

}  // namespace waffle
