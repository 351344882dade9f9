#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "waffle/factor_model.hpp"
#include "waffle/matrix.hpp"
#include "waffle/rng.hpp"
#include "waffle/tape.hpp"

namespace waffle {

struct PriorConfig {
    double alpha = 1.0;         // IBP concentration
    std::size_t truncation = 1;  // F

    void validate() const;
};

struct RelaxationConfig {
    double temperature = 0.5;
    double hard_threshold = 0.5;

    void validate() const;
};

// Per-client variational parameters, one block per factorized layer.
// Unconstrained storage: pi = sigmoid(logit_pi), c = softplus(raw_c),
// d = softplus(raw_d). Never serialized into update messages.
struct VariationalLayer {
    DenseMatrix logit_pi;  // 1xF
    DenseMatrix raw_c;     // 1xF
    DenseMatrix raw_d;     // 1xF
};

struct ClientVariationalState {
    std::map<std::size_t, VariationalLayer> by_layer;

    bool empty() const { return by_layer.empty(); }

    // Posterior starts at the prior: pi = 0.5, c = alpha, d = 1.
    static ClientVariationalState init(const ModelConfig& model, double alpha);
};

// ---- Plain-vector operations ----

// Stick-breaking cumulative products pi_k = prod_{j<=k} v_j.
std::vector<double> prior_pi(const std::vector<double>& v);

// Inverse-CDF Kumaraswamy sample v = (1-(1-u)^(1/d))^(1/c).
std::vector<double> sample_kumaraswamy(const std::vector<double>& c, const std::vector<double>& d,
                                       const std::vector<double>& u);

// Binary concrete sample b = sigmoid((logit(pi) + logit(u)) / tau).
std::vector<double> sample_relaxed_bernoulli(const std::vector<double>& pi, double tau,
                                             const std::vector<double>& u);

// Deterministic threshold: b_k = 1 iff pi_k > threshold.
std::vector<int> harden(const std::vector<double>& pi, double threshold);

// Closed-form KL(Kumaraswamy(c,d) || Beta(alpha,1)), summed over entries.
// With unit second shape parameter the usual infinite series vanishes, so
// this is exact.
double kl_kumaraswamy_beta(const std::vector<double>& c, const std::vector<double>& d,
                           double alpha);

// Sum_k KL(Bernoulli(pi_q_k) || Bernoulli(pi_p_k)), probabilities clamped
// away from {0,1}.
double kl_bernoulli(const std::vector<double>& pi_q, const std::vector<double>& pi_p);

// Hardened factor scores for evaluation mode.
FactorScores harden_scores(const ModelConfig& model, const ClientVariationalState& var,
                           double threshold);

// ---- Tape assembly ----

struct StagedVarLayer {
    Tape::Id logit_pi = 0, raw_c = 0, raw_d = 0;
};

struct StagedVarState {
    std::map<std::size_t, StagedVarLayer> by_layer;

    void collect(std::vector<Tape::Id>& out) const;
};

StagedVarState stage_varstate(Tape& tape, const ClientVariationalState& var);

struct ElboNodes {
    Tape::Id loss = 0;  // ce + (kl_scale/B) * kl
    Tape::Id ce = 0;    // mean cross-entropy over the batch
    Tape::Id kl = 0;    // R: Bernoulli + Kumaraswamy KL summed over layers
};

// Builds the per-minibatch negative-ELBO estimate on the tape:
//
//   loss = mean-NLL(batch) + (kl_scale / B) * R
//
// the per-example normalization of -(sum-log-lik - kl_scale*R); with
// kl_scale = B/|D_i| one local epoch accumulates exactly one copy of R
// relative to the dataset log-likelihood. Forward passes use fresh relaxed
// Bernoulli samples for b and a single reparameterized Kumaraswamy sample
// per layer for the prior term. Noise draw order: layers ascending, b noise
// then v noise within each layer.
ElboNodes build_elbo(Tape& tape, const ModelConfig& model, const StagedParams& params,
                     const StagedVarState& var, const DenseMatrix& x, const std::vector<int>& y,
                     const PriorConfig& prior, const RelaxationConfig& relax, double kl_scale,
                     RngStream& rng);

}  // namespace waffle
