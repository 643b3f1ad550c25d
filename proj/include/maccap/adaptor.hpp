#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "maccap/backbone.hpp"
#include "maccap/nn.hpp"
#include "maccap/rng.hpp"

namespace maccap {

enum class NoiseDistribution { gaussian, uniform };

struct NoiseConfig {
    double sigma = 0.016;
    int n_cr = 10;
    NoiseDistribution distribution = NoiseDistribution::gaussian;

    void validate() const;
};

// N_cr rows in the joint embedding space: noise-perturbed unit-norm text
// copies at train time, subregion-enhanced image rows at inference.
struct RegionFeatureSequence {
    Eigen::MatrixXd rows;  // n_cr x d
};

struct PrefixEmbedding {
    Eigen::MatrixXd rows;  // n_q x d_l
};

struct AdaptorConfig {
    int d = 64;
    int d_l = 32;
    int n_q = 10;
    int n_heads = 8;
    int ffn_hidden = 0;  // 0 -> 4 * d
    int mlp_hidden = 0;  // 0 -> max(d, d_l)

    int ffn_width() const { return ffn_hidden > 0 ? ffn_hidden : 4 * d; }
    int mlp_width() const { return mlp_hidden > 0 ? mlp_hidden : std::max(d, d_l); }
    void validate() const;
};

// Trainable state: learnable queries, one pre-LN decoder block
// (self-attention, cross-attention over the region rows, feed-forward),
// and a two-layer output projection into language-model space.
struct AdaptorParams {
    AdaptorConfig config;
    Eigen::MatrixXd queries;  // n_q x d
    nn::LayerNormParams ln_self, ln_cross, ln_ffn;
    nn::AttentionParams self_attn, cross_attn;
    nn::FeedForwardParams ffn;   // d -> ffn_width -> d
    nn::FeedForwardParams mlp;   // d -> mlp_width -> d_l

    // Visits every trainable tensor in a fixed, documented order.
    void for_each_tensor(const std::function<void(const std::string&, Eigen::MatrixXd&)>& fn);
    void for_each_tensor(const std::function<void(const std::string&, const Eigen::MatrixXd&)>& fn) const;

    static AdaptorParams init(const AdaptorConfig& cfg, std::uint64_t seed);
    static AdaptorParams zeros_like(const AdaptorParams& other);
};

struct AdaptorCache;

RegionFeatureSequence inject_region_noise(const TextEmbedding& t_c,
                                          const NoiseConfig& cfg, Rng& rng);

PrefixEmbedding adaptor_forward(const RegionFeatureSequence& input,
                                const AdaptorParams& params,
                                AdaptorCache* cache = nullptr);

// Gradients of a scalar loss of the prefix embedding with respect to every
// trainable tensor; also returns d(loss)/d(input rows) through `dinput`.
// `dprefix` is d(loss)/d(E) supplied by the caller.
AdaptorParams adaptor_backward(const AdaptorParams& params, const AdaptorCache& cache,
                               const Eigen::MatrixXd& dprefix,
                               Eigen::MatrixXd* dinput = nullptr);

// Convenience wrapper: evaluates loss_fn on the forward output and chains
// loss_fn's prefix gradient through the adaptor.
using PrefixLossFn =
    std::function<double(const PrefixEmbedding&, Eigen::MatrixXd* dprefix)>;
AdaptorParams adaptor_gradients(const RegionFeatureSequence& input,
                                const AdaptorParams& params, const PrefixLossFn& loss_fn,
                                double* loss_out = nullptr);

long long count_parameters(const AdaptorParams& params);

struct AdaptorCache {
    RegionFeatureSequence input;
    nn::LayerNormCache ln_self, ln_cross, ln_ffn;
    nn::AttentionCache self_attn, cross_attn;
    nn::FeedForwardCache ffn, mlp;
    Eigen::MatrixXd x_self, x_cross;  // post-self-attn and post-cross-attn states
};

}  // namespace maccap
