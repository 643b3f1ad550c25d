#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "maccap/nn.hpp"

namespace maccap {

struct LanguageModelSpec {
    int d_l = 32;
    int vocab_size = 256;
    int max_gen_len = 20;
    int bos = 254;
    int eos = 255;

    void validate() const;
    std::uint64_t hash() const;
};

struct TokenSequence {
    std::vector<int> ids;
    std::string text;
};

// Frozen autoregressive decoder consuming a prefix-embedding soft context.
// Implementations must be immutable after construction.
class LanguageModel {
public:
    virtual ~LanguageModel() = default;
    virtual const LanguageModelSpec& spec() const = 0;
    // prefix: n_prefix x d_l (may have zero rows); generated: tokens so far.
    virtual Eigen::VectorXd next_token_logits(const Eigen::MatrixXd& prefix,
                                              const std::vector<int>& generated) const = 0;
    // Sum over positions of log P(target_i | target_<i, prefix), and its
    // gradient with respect to the prefix rows (for adaptor training).
    virtual double sequence_log_prob_with_grad(const Eigen::MatrixXd& prefix,
                                               const std::vector<int>& target,
                                               Eigen::MatrixXd* dprefix) const = 0;
    virtual std::uint64_t weight_checksum() const = 0;
};

double sequence_log_prob(const LanguageModel& lm, const Eigen::MatrixXd& prefix,
                         const std::vector<int>& target);

struct BeamSearchConfig {
    int n_beams = 4;
    int max_len = 16;
    bool length_normalize = false;
};

// Highest-scoring completed hypothesis by summed log-probability. Ties break
// toward the lexicographically smaller token sequence. `context` tokens, when
// given, condition the decode and are not part of the returned sequence.
TokenSequence beam_search(const LanguageModel& lm, const Eigen::MatrixXd& prefix,
                          const BeamSearchConfig& cfg,
                          const std::vector<int>& context = {});

// Byte-level toy tokenizer: ids 0..253 are raw bytes, 254 = bos, 255 = eos.
class ToyTokenizer {
public:
    explicit ToyTokenizer(const LanguageModelSpec& spec) : spec_(spec) {}
    std::vector<int> encode(const std::string& text) const;
    std::string decode(const std::vector<int>& ids) const;
    void save_json(const std::string& path) const;

private:
    LanguageModelSpec spec_;
};

// Frozen reference decoder: token + position embeddings, two pre-LN
// transformer blocks (causal self-attention + feed-forward, residual), final
// layer norm, linear head. All weights drawn once from a seeded stream.
class ToyLanguageModel : public LanguageModel {
public:
    ToyLanguageModel(const LanguageModelSpec& spec, std::uint64_t seed,
                     int n_blocks = 2, int n_heads = 4);

    const LanguageModelSpec& spec() const override { return spec_; }
    Eigen::VectorXd next_token_logits(const Eigen::MatrixXd& prefix,
                                      const std::vector<int>& generated) const override;
    double sequence_log_prob_with_grad(const Eigen::MatrixXd& prefix,
                                       const std::vector<int>& target,
                                       Eigen::MatrixXd* dprefix) const override;
    std::uint64_t weight_checksum() const override;
    std::uint64_t seed() const { return seed_; }

private:
    struct Block {
        nn::LayerNormParams ln_attn, ln_ffn;
        nn::AttentionParams attn;
        nn::FeedForwardParams ffn;
    };

    // Full forward over [prefix rows; emb(bos); emb(target...)]. Returns
    // hidden states; caches are filled when `caches` is non-null.
    struct ForwardCaches;
    Eigen::MatrixXd forward(const Eigen::MatrixXd& prefix, const std::vector<int>& tokens,
                            ForwardCaches* caches) const;

    LanguageModelSpec spec_;
    std::uint64_t seed_;
    int n_blocks_;
    int n_heads_;
    Eigen::MatrixXd token_emb_;  // vocab x d_l
    Eigen::MatrixXd pos_emb_;    // max positions x d_l
    std::vector<Block> blocks_;
    nn::LayerNormParams ln_final_;
    nn::AffineParams head_;  // d_l x vocab
};

}  // namespace maccap
