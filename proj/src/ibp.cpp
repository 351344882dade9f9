#include "waffle/ibp.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <string>

#include "waffle/error.hpp"

namespace waffle {

namespace {

constexpr double kProbEps = 1e-6;
constexpr double kStickEps = 1e-12;
constexpr double kEulerGamma = 0.57721566490153286;

double clamp_prob(double p) {
    return p < kProbEps ? kProbEps : (p > 1.0 - kProbEps ? 1.0 - kProbEps : p);
}

}  // namespace

void PriorConfig::validate() const {
    if (!(alpha > 0.0)) throw ConfigError("ibp.alpha must be positive");
    if (truncation < 1) throw ConfigError("ibp truncation must be >= 1");
}

void RelaxationConfig::validate() const {
    if (!(temperature > 0.0)) throw ConfigError("ibp.temperature must be positive");
    if (!(hard_threshold > 0.0 && hard_threshold < 1.0))
        throw ConfigError("ibp.hard_threshold must be in (0,1)");
}

ClientVariationalState ClientVariationalState::init(const ModelConfig& model, double alpha) {
    if (!(alpha > 0.0)) throw ConfigError("ibp.alpha must be positive");
    ClientVariationalState state;
    for (std::size_t i : model.factorized_layers()) {
        const std::size_t f = model.layers[i].num_factors;
        VariationalLayer layer;
        layer.logit_pi = DenseMatrix::zeros(1, f);
        layer.raw_c = DenseMatrix::filled(1, f, softplus_inverse(alpha));
        layer.raw_d = DenseMatrix::filled(1, f, softplus_inverse(1.0));
        state.by_layer[i] = std::move(layer);
    }
    return state;
}

std::vector<double> prior_pi(const std::vector<double>& v) {
    std::vector<double> pi(v.size());
    double acc = 1.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (!(v[k] > 0.0 && v[k] <= 1.0))
            throw ContractError("prior_pi: stick variable outside (0,1]");
        acc *= v[k];
        pi[k] = acc;
    }
    return pi;
}

std::vector<double> sample_kumaraswamy(const std::vector<double>& c, const std::vector<double>& d,
                                       const std::vector<double>& u) {
    if (c.size() != d.size() || c.size() != u.size())
        throw ShapeError("sample_kumaraswamy: length mismatch");
    std::vector<double> v(c.size());
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (!(c[k] > 0.0 && d[k] > 0.0))
            throw ContractError("sample_kumaraswamy: shapes must be positive");
        if (!(u[k] > 0.0 && u[k] < 1.0))
            throw ContractError("sample_kumaraswamy: u outside (0,1)");
        v[k] = std::pow(1.0 - std::pow(1.0 - u[k], 1.0 / d[k]), 1.0 / c[k]);
    }
    return v;
}

std::vector<double> sample_relaxed_bernoulli(const std::vector<double>& pi, double tau,
                                             const std::vector<double>& u) {
    if (pi.size() != u.size()) throw ShapeError("sample_relaxed_bernoulli: length mismatch");
    if (!(tau > 0.0)) throw ContractError("sample_relaxed_bernoulli: tau must be positive");
    std::vector<double> b(pi.size());
    for (std::size_t k = 0; k < b.size(); ++k) {
        const double p = clamp_prob(pi[k]);
        const double uu = clamp_prob(u[k]);
        const double z = (std::log(p) - std::log1p(-p) + std::log(uu) - std::log1p(-uu)) / tau;
        b[k] = 1.0 / (1.0 + std::exp(-z));
    }
    return b;
}

std::vector<int> harden(const std::vector<double>& pi, double threshold) {
    std::vector<int> b(pi.size());
    for (std::size_t k = 0; k < b.size(); ++k) b[k] = pi[k] > threshold ? 1 : 0;
    return b;
}

double kl_kumaraswamy_beta(const std::vector<double>& c, const std::vector<double>& d,
                           double alpha) {
    if (c.size() != d.size()) throw ShapeError("kl_kumaraswamy_beta: length mismatch");
    if (!(alpha > 0.0)) throw ContractError("kl_kumaraswamy_beta: alpha must be positive");
    double total = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) {
        if (!(c[k] > 0.0 && d[k] > 0.0))
            throw ContractError("kl_kumaraswamy_beta: shapes must be positive");
        const double term = (c[k] - alpha) / c[k] *
                                (-kEulerGamma - boost::math::digamma(d[k]) - 1.0 / d[k]) +
                            std::log(c[k] * d[k]) - std::log(alpha) - (d[k] - 1.0) / d[k];
        total += term;
    }
    return total;
}

double kl_bernoulli(const std::vector<double>& pi_q, const std::vector<double>& pi_p) {
    if (pi_q.size() != pi_p.size()) throw ShapeError("kl_bernoulli: length mismatch");
    double total = 0.0;
    for (std::size_t k = 0; k < pi_q.size(); ++k) {
        const double q = clamp_prob(pi_q[k]);
        const double p = clamp_prob(pi_p[k]);
        total += q * (std::log(q) - std::log(p)) +
                 (1.0 - q) * (std::log1p(-q) - std::log1p(-p));
    }
    return total;
}

FactorScores harden_scores(const ModelConfig& model, const ClientVariationalState& var,
                           double threshold) {
    FactorScores scores;
    for (std::size_t i : model.factorized_layers()) {
        auto it = var.by_layer.find(i);
        if (it == var.by_layer.end())
            throw ContractError("harden_scores: missing variational layer " + std::to_string(i));
        const DenseMatrix& logit = it->second.logit_pi;
        DenseMatrix b(1, logit.cols);
        for (std::size_t k = 0; k < logit.cols; ++k) {
            const double pi = 1.0 / (1.0 + std::exp(-logit.data[k]));
            b.data[k] = pi > threshold ? 1.0 : 0.0;
        }
        scores.by_layer[i] = std::move(b);
    }
    return scores;
}

void StagedVarState::collect(std::vector<Tape::Id>& out) const {
    for (const auto& [layer, nodes] : by_layer) {
        out.push_back(nodes.logit_pi);
        out.push_back(nodes.raw_c);
        out.push_back(nodes.raw_d);
    }
}

StagedVarState stage_varstate(Tape& tape, const ClientVariationalState& var) {
    StagedVarState staged;
    for (const auto& [layer, params] : var.by_layer) {
        StagedVarLayer nodes;
        nodes.logit_pi = tape.leaf(params.logit_pi);
        nodes.raw_c = tape.leaf(params.raw_c);
        nodes.raw_d = tape.leaf(params.raw_d);
        staged.by_layer[layer] = nodes;
    }
    return staged;
}

namespace {

// Relaxed Bernoulli sample node from unconstrained logits and fixed noise.
Tape::Id relaxed_sample_node(Tape& t, Tape::Id logit_pi, const std::vector<double>& u,
                             double tau) {
    const double logit_cap = std::log(1.0 - kProbEps) - std::log(kProbEps);
    DenseMatrix noise(1, u.size());
    for (std::size_t k = 0; k < u.size(); ++k)
        noise.data[k] = std::log(u[k]) - std::log1p(-u[k]);
    Tape::Id capped = t.clamp(logit_pi, -logit_cap, logit_cap);
    Tape::Id pre = t.scale(t.add_constmat(capped, noise), 1.0 / tau);
    return t.sigmoid(pre);
}

// Reparameterized Kumaraswamy sample node, clamped into (0,1).
Tape::Id kumaraswamy_sample_node(Tape& t, Tape::Id raw_c, Tape::Id raw_d,
                                 const std::vector<double>& u) {
    DenseMatrix log1mu(1, u.size());
    for (std::size_t k = 0; k < u.size(); ++k) log1mu.data[k] = std::log1p(-u[k]);
    Tape::Id c = t.softplus(raw_c);
    Tape::Id d = t.softplus(raw_d);
    Tape::Id base = t.exp(t.div(t.leaf(log1mu), d));             // (1-u)^(1/d)
    Tape::Id base_c = t.clamp(base, 0.0, 1.0 - kStickEps);        // keep log1m finite
    Tape::Id v = t.exp(t.div(t.log1m(base_c), c));                // (1-base)^(1/c)
    return t.clamp(v, kStickEps, 1.0 - kStickEps);
}

// Closed-form Kumaraswamy-Beta(alpha,1) KL as a tape scalar.
Tape::Id kl_kumaraswamy_node(Tape& t, Tape::Id raw_c, Tape::Id raw_d, double alpha) {
    Tape::Id c = t.softplus(raw_c);
    Tape::Id d = t.softplus(raw_d);
    Tape::Id inv_d = t.reciprocal(d);
    // -gamma - psi(d) - 1/d
    Tape::Id tail = t.add_scalar(t.scale(t.add(t.digamma(d), inv_d), -1.0), -kEulerGamma);
    // 1 - alpha/c
    Tape::Id coef = t.add_scalar(t.scale(t.reciprocal(c), -alpha), 1.0);
    Tape::Id terms = t.add(t.mul(coef, tail), t.add(t.log(c), t.log(d)));
    terms = t.add(t.add_scalar(terms, -std::log(alpha) - 1.0), inv_d);
    return t.sum(terms);
}

// Sum_k KL(Bern(q_k) || Bern(p_k)) from probability nodes already in (0,1).
Tape::Id kl_bernoulli_node(Tape& t, Tape::Id q, Tape::Id p) {
    Tape::Id term1 = t.mul(q, t.sub(t.log(q), t.log(p)));
    Tape::Id one_minus_q = t.add_scalar(t.scale(q, -1.0), 1.0);
    Tape::Id term2 = t.mul(one_minus_q, t.sub(t.log1m(q), t.log1m(p)));
    return t.sum(t.add(term1, term2));
}

}  // namespace

ElboNodes build_elbo(Tape& tape, const ModelConfig& model, const StagedParams& params,
                     const StagedVarState& var, const DenseMatrix& x, const std::vector<int>& y,
                     const PriorConfig& prior, const RelaxationConfig& relax, double kl_scale,
                     RngStream& rng) {
    prior.validate();
    relax.validate();
    const std::size_t batch = x.rows;
    if (batch == 0) throw ContractError("build_elbo: empty batch");

    std::map<std::size_t, Tape::Id> scores;
    Tape::Id kl_total = 0;
    bool have_kl = false;
    for (std::size_t i : model.factorized_layers()) {
        auto it = var.by_layer.find(i);
        if (it == var.by_layer.end())
            throw ContractError("build_elbo: missing variational state for layer " +
                                std::to_string(i));
        const StagedVarLayer& nodes = it->second;
        const std::size_t f = model.layers[i].num_factors;

        const std::vector<double> u_b = rng.uniforms(f);
        const std::vector<double> u_v = rng.uniforms(f);

        scores[i] = relaxed_sample_node(tape, nodes.logit_pi, u_b, relax.temperature);

        // Posterior activation probabilities, clamped for the KL logs.
        Tape::Id pi_q = tape.clamp(tape.sigmoid(nodes.logit_pi), kProbEps, 1.0 - kProbEps);
        // Single-sample stick-breaking prior: pi_p = cumprod(v_hat).
        Tape::Id v_hat = kumaraswamy_sample_node(tape, nodes.raw_c, nodes.raw_d, u_v);
        Tape::Id pi_p = tape.clamp(tape.exp(tape.cumsum(tape.log(v_hat))), kProbEps,
                                   1.0 - kProbEps);

        Tape::Id layer_kl = tape.add(kl_bernoulli_node(tape, pi_q, pi_p),
                                     kl_kumaraswamy_node(tape, nodes.raw_c, nodes.raw_d,
                                                         prior.alpha));
        kl_total = have_kl ? tape.add(kl_total, layer_kl) : layer_kl;
        have_kl = true;
    }

    Tape::Id xid = tape.leaf(x);
    Tape::Id logits = forward_pass(tape, model, params, scores, xid);
    Tape::Id ce = tape.softmax_cross_entropy(logits, y);

    ElboNodes out;
    out.ce = ce;
    if (have_kl) {
        out.kl = kl_total;
        out.loss = tape.add(ce, tape.scale(kl_total, kl_scale / static_cast<double>(batch)));
    } else {
        out.kl = tape.leaf(DenseMatrix::zeros(1, 1));
        out.loss = ce;
    }
    return out;
}

}  // namespace waffle
