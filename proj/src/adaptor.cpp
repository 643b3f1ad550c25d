#include "maccap/adaptor.hpp"

#include <cmath>
#include <stdexcept>

namespace maccap {

void NoiseConfig::validate() const {
    if (!(sigma >= 0.0) || !std::isfinite(sigma))
        throw std::invalid_argument("NoiseConfig: sigma must be finite and >= 0");
    if (n_cr < 1) throw std::invalid_argument("NoiseConfig: n_cr must be >= 1");
}

void AdaptorConfig::validate() const {
    if (d < 1 || d_l < 1 || n_q < 1 || n_heads < 1)
        throw std::invalid_argument("AdaptorConfig: dimensions must be >= 1");
    if (d % n_heads != 0)
        throw std::invalid_argument("AdaptorConfig: n_heads must divide d");
}

RegionFeatureSequence inject_region_noise(const TextEmbedding& t_c,
                                          const NoiseConfig& cfg, Rng& rng) {
    cfg.validate();
    const Eigen::Index d = t_c.vec.size();
    RegionFeatureSequence out;
    out.rows.resize(cfg.n_cr, d);
    for (int i = 0; i < cfg.n_cr; ++i) {
        Eigen::VectorXd row = t_c.vec;
        if (cfg.sigma > 0.0) {
            for (Eigen::Index k = 0; k < d; ++k) {
                const double n = cfg.distribution == NoiseDistribution::gaussian
                                     ? rng.gaussian() * cfg.sigma
                                     : rng.uniform_centered(cfg.sigma);
                row[k] += n;
            }
        }
        const double norm = row.norm();
        if (norm == 0.0) throw std::runtime_error("inject_region_noise: zero row");
        out.rows.row(i) = row / norm;
    }
    return out;
}

namespace {

void fill_matrix(Eigen::MatrixXd& m, Rng& rng, double scale) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.gaussian() * scale;
}

void init_affine(nn::AffineParams& p, int d_in, int d_out, Rng& rng) {
    p.w.resize(d_in, d_out);
    fill_matrix(p.w, rng, 1.0 / std::sqrt(static_cast<double>(d_in)));
    p.b = Eigen::VectorXd::Zero(d_out);
}

void zero_affine(nn::AffineParams& p, int d_in, int d_out) {
    p.w = Eigen::MatrixXd::Zero(d_in, d_out);
    p.b = Eigen::VectorXd::Zero(d_out);
}

}  // namespace

AdaptorParams AdaptorParams::init(const AdaptorConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    AdaptorParams p;
    p.config = cfg;
    Rng rng(splitmix64(seed ^ 0xADA7ULL));
    p.queries.resize(cfg.n_q, cfg.d);
    fill_matrix(p.queries, rng, 1.0 / std::sqrt(static_cast<double>(cfg.d)));
    p.ln_self = nn::LayerNormParams::ones(cfg.d);
    p.ln_cross = nn::LayerNormParams::ones(cfg.d);
    p.ln_ffn = nn::LayerNormParams::ones(cfg.d);
    for (auto* attn : {&p.self_attn, &p.cross_attn}) {
        init_affine(attn->q, cfg.d, cfg.d, rng);
        init_affine(attn->k, cfg.d, cfg.d, rng);
        init_affine(attn->v, cfg.d, cfg.d, rng);
        init_affine(attn->out, cfg.d, cfg.d, rng);
    }
    init_affine(p.ffn.in, cfg.d, cfg.ffn_width(), rng);
    init_affine(p.ffn.out, cfg.ffn_width(), cfg.d, rng);
    init_affine(p.mlp.in, cfg.d, cfg.mlp_width(), rng);
    init_affine(p.mlp.out, cfg.mlp_width(), cfg.d_l, rng);
    return p;
}

AdaptorParams AdaptorParams::zeros_like(const AdaptorParams& other) {
    const AdaptorConfig& cfg = other.config;
    AdaptorParams p;
    p.config = cfg;
    p.queries = Eigen::MatrixXd::Zero(cfg.n_q, cfg.d);
    for (auto* ln : {&p.ln_self, &p.ln_cross, &p.ln_ffn}) {
        ln->gamma = Eigen::VectorXd::Zero(cfg.d);
        ln->beta = Eigen::VectorXd::Zero(cfg.d);
    }
    for (auto* attn : {&p.self_attn, &p.cross_attn}) {
        zero_affine(attn->q, cfg.d, cfg.d);
        zero_affine(attn->k, cfg.d, cfg.d);
        zero_affine(attn->v, cfg.d, cfg.d);
        zero_affine(attn->out, cfg.d, cfg.d);
    }
    zero_affine(p.ffn.in, cfg.d, cfg.ffn_width());
    zero_affine(p.ffn.out, cfg.ffn_width(), cfg.d);
    zero_affine(p.mlp.in, cfg.d, cfg.mlp_width());
    zero_affine(p.mlp.out, cfg.mlp_width(), cfg.d_l);
    return p;
}

// Vectors are exposed to the visitor as 1-column matrices and written back,
// so one tensor-order definition covers checkpoints, Adam, and counting.
void AdaptorParams::for_each_tensor(
    const std::function<void(const std::string&, Eigen::MatrixXd&)>& fn) {
    fn("queries", queries);
    auto vec_as_mat = [&fn](const std::string& name, Eigen::VectorXd& v) {
        Eigen::MatrixXd m = v;
        fn(name, m);
        v = m.col(0);
    };
    auto do_ln = [&](const std::string& prefix, nn::LayerNormParams& ln) {
        vec_as_mat(prefix + ".gamma", ln.gamma);
        vec_as_mat(prefix + ".beta", ln.beta);
    };
    auto do_affine = [&](const std::string& prefix, nn::AffineParams& a) {
        fn(prefix + ".w", a.w);
        vec_as_mat(prefix + ".b", a.b);
    };
    auto do_attn = [&](const std::string& prefix, nn::AttentionParams& a) {
        do_affine(prefix + ".q", a.q);
        do_affine(prefix + ".k", a.k);
        do_affine(prefix + ".v", a.v);
        do_affine(prefix + ".out", a.out);
    };
    do_ln("ln_self", ln_self);
    do_attn("self_attn", self_attn);
    do_ln("ln_cross", ln_cross);
    do_attn("cross_attn", cross_attn);
    do_ln("ln_ffn", ln_ffn);
    do_affine("ffn.in", ffn.in);
    do_affine("ffn.out", ffn.out);
    do_affine("mlp.in", mlp.in);
    do_affine("mlp.out", mlp.out);
}

void AdaptorParams::for_each_tensor(
    const std::function<void(const std::string&, const Eigen::MatrixXd&)>& fn) const {
    auto& self = const_cast<AdaptorParams&>(*this);
    self.for_each_tensor([&fn](const std::string& name, Eigen::MatrixXd& m) {
        fn(name, m);
    });
}

PrefixEmbedding adaptor_forward(const RegionFeatureSequence& input,
                                const AdaptorParams& params, AdaptorCache* cache) {
    const AdaptorConfig& cfg = params.config;
    if (input.rows.cols() != cfg.d)
        throw std::invalid_argument("adaptor_forward: input row width must equal d");
    if (input.rows.rows() < 1)
        throw std::invalid_argument("adaptor_forward: empty input sequence");

    if (cache) cache->input = input;
    Eigen::MatrixXd x = params.queries;
    const Eigen::MatrixXd n1 =
        nn::layer_norm(x, params.ln_self, cache ? &cache->ln_self : nullptr);
    x += nn::attention(n1, n1, params.self_attn, cfg.n_heads, /*causal=*/false,
                       cache ? &cache->self_attn : nullptr);
    if (cache) cache->x_self = x;
    const Eigen::MatrixXd n2 =
        nn::layer_norm(x, params.ln_cross, cache ? &cache->ln_cross : nullptr);
    x += nn::attention(n2, input.rows, params.cross_attn, cfg.n_heads, /*causal=*/false,
                       cache ? &cache->cross_attn : nullptr);
    if (cache) cache->x_cross = x;
    const Eigen::MatrixXd n3 =
        nn::layer_norm(x, params.ln_ffn, cache ? &cache->ln_ffn : nullptr);
    x += nn::feed_forward(n3, params.ffn, cache ? &cache->ffn : nullptr);
    return PrefixEmbedding{nn::feed_forward(x, params.mlp, cache ? &cache->mlp : nullptr)};
}

AdaptorParams adaptor_backward(const AdaptorParams& params, const AdaptorCache& cache,
                               const Eigen::MatrixXd& dprefix, Eigen::MatrixXd* dinput) {
    AdaptorParams grads = AdaptorParams::zeros_like(params);

    Eigen::MatrixXd dx = nn::feed_forward_backward(dprefix, params.mlp, cache.mlp, &grads.mlp);
    const Eigen::MatrixXd dffn =
        nn::feed_forward_backward(dx, params.ffn, cache.ffn, &grads.ffn);
    dx += nn::layer_norm_backward(dffn, params.ln_ffn, cache.ln_ffn, &grads.ln_ffn);

    Eigen::MatrixXd dkv = Eigen::MatrixXd::Zero(cache.input.rows.rows(), cache.input.rows.cols());
    const Eigen::MatrixXd dq_cross = nn::attention_backward(
        dx, params.cross_attn, params.config.n_heads, cache.cross_attn, &grads.cross_attn, &dkv);
    if (dinput) *dinput = dkv;
    dx += nn::layer_norm_backward(dq_cross, params.ln_cross, cache.ln_cross, &grads.ln_cross);

    Eigen::MatrixXd dself_kv = Eigen::MatrixXd::Zero(dx.rows(), dx.cols());
    const Eigen::MatrixXd dq_self = nn::attention_backward(
        dx, params.self_attn, params.config.n_heads, cache.self_attn, &grads.self_attn,
        &dself_kv);
    dx += nn::layer_norm_backward(dq_self + dself_kv, params.ln_self, cache.ln_self,
                                  &grads.ln_self);
    grads.queries = dx;
    return grads;
}

AdaptorParams adaptor_gradients(const RegionFeatureSequence& input,
                                const AdaptorParams& params, const PrefixLossFn& loss_fn,
                                double* loss_out) {
    AdaptorCache cache;
    const PrefixEmbedding prefix = adaptor_forward(input, params, &cache);
    Eigen::MatrixXd dprefix = Eigen::MatrixXd::Zero(prefix.rows.rows(), prefix.rows.cols());
    const double loss = loss_fn(prefix, &dprefix);
    if (!std::isfinite(loss))
        throw std::runtime_error("adaptor_gradients: non-finite loss " + std::to_string(loss));
    if (loss_out) *loss_out = loss;
    return adaptor_backward(params, cache, dprefix, nullptr);
}

long long count_parameters(const AdaptorParams& params) {
    long long total = 0;
    params.for_each_tensor([&total](const std::string&, const Eigen::MatrixXd& m) {
        total += static_cast<long long>(m.size());
    });
    return total;
}

}  // namespace maccap
