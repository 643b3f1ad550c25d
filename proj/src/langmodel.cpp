#include "maccap/langmodel.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "maccap/backbone.hpp"
#include "maccap/rng.hpp"

namespace maccap {

namespace {
constexpr int kMaxPositions = 512;

void fill_gaussian(Eigen::MatrixXd& m, Rng& rng, double scale) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.gaussian() * scale;
}

void fill_affine(nn::AffineParams& p, int d_in, int d_out, Rng& rng) {
    p.w.resize(d_in, d_out);
    fill_gaussian(p.w, rng, 1.0 / std::sqrt(static_cast<double>(d_in)));
    p.b = Eigen::VectorXd::Zero(d_out);
}
}  // namespace

void LanguageModelSpec::validate() const {
    if (d_l < 1) throw std::invalid_argument("LanguageModelSpec: d_l must be >= 1");
    if (vocab_size < 2) throw std::invalid_argument("LanguageModelSpec: vocab_size must be >= 2");
    if (bos == eos || bos < 0 || eos < 0 || bos >= vocab_size || eos >= vocab_size)
        throw std::invalid_argument("LanguageModelSpec: bos/eos invalid");
    if (max_gen_len < 1) throw std::invalid_argument("LanguageModelSpec: max_gen_len must be >= 1");
}

std::uint64_t LanguageModelSpec::hash() const {
    std::uint64_t h = 0x4C4DULL;
    for (std::uint64_t v : {std::uint64_t(d_l), std::uint64_t(vocab_size),
                            std::uint64_t(max_gen_len), std::uint64_t(bos), std::uint64_t(eos)})
        h = splitmix64(h ^ v);
    return h;
}

double sequence_log_prob(const LanguageModel& lm, const Eigen::MatrixXd& prefix,
                         const std::vector<int>& target) {
    return lm.sequence_log_prob_with_grad(prefix, target, nullptr);
}

TokenSequence beam_search(const LanguageModel& lm, const Eigen::MatrixXd& prefix,
                          const BeamSearchConfig& cfg, const std::vector<int>& context) {
    if (cfg.n_beams < 1) throw std::invalid_argument("beam_search: n_beams must be >= 1");
    if (cfg.max_len < 1) throw std::invalid_argument("beam_search: max_len must be >= 1");
    const int eos = lm.spec().eos;
    const int vocab = lm.spec().vocab_size;

    struct Hyp {
        std::vector<int> ids;
        double score = 0.0;
        bool done = false;
    };
    auto better = [&](const Hyp& a, const Hyp& b) {
        const double sa = cfg.length_normalize && !a.ids.empty()
                              ? a.score / static_cast<double>(a.ids.size())
                              : a.score;
        const double sb = cfg.length_normalize && !b.ids.empty()
                              ? b.score / static_cast<double>(b.ids.size())
                              : b.score;
        if (sa != sb) return sa > sb;
        return a.ids < b.ids;
    };

    std::vector<Hyp> beams{Hyp{}};
    for (int step = 0; step < cfg.max_len; ++step) {
        bool any_open = false;
        std::vector<Hyp> pool;
        for (const Hyp& h : beams) {
            if (h.done) {
                pool.push_back(h);
                continue;
            }
            any_open = true;
            std::vector<int> conditioned = context;
            conditioned.insert(conditioned.end(), h.ids.begin(), h.ids.end());
            const Eigen::VectorXd logp = nn::log_softmax(lm.next_token_logits(prefix, conditioned));
            for (int t = 0; t < vocab; ++t) {
                Hyp next = h;
                next.score += logp[t];
                if (t == eos) {
                    next.done = true;
                } else {
                    next.ids.push_back(t);
                }
                pool.push_back(std::move(next));
            }
        }
        if (!any_open) break;
        std::sort(pool.begin(), pool.end(), better);
        if (static_cast<int>(pool.size()) > cfg.n_beams)
            pool.resize(static_cast<std::size_t>(cfg.n_beams));
        beams = std::move(pool);
    }
    std::sort(beams.begin(), beams.end(), better);
    return TokenSequence{beams.front().ids, ""};
}

std::vector<int> ToyTokenizer::encode(const std::string& text) const {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) {
        int id = static_cast<int>(c);
        if (id == spec_.bos || id == spec_.eos || id >= spec_.vocab_size)
            id = '?';
        ids.push_back(id);
    }
    return ids;
}

std::string ToyTokenizer::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id == spec_.bos || id == spec_.eos) continue;
        if (id >= 0 && id < 256) out.push_back(static_cast<char>(id));
    }
    return out;
}

void ToyTokenizer::save_json(const std::string& path) const {
    nlohmann::json j;
    j["vocab_size"] = spec_.vocab_size;
    j["bos"] = spec_.bos;
    j["eos"] = spec_.eos;
    nlohmann::json table = nlohmann::json::object();
    for (int id = 0; id < spec_.vocab_size; ++id) {
        std::string key = std::to_string(id);
        if (id == spec_.bos) {
            table[key] = "<bos>";
        } else if (id == spec_.eos) {
            table[key] = "<eos>";
        } else if (id >= 0x20 && id < 0x7F) {
            table[key] = std::string(1, static_cast<char>(id));
        } else {
            char buf[8];
            std::snprintf(buf, sizeof(buf), "<0x%02X>", id);
            table[key] = buf;
        }
    }
    j["id_to_token"] = table;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << j.dump(2) << "\n";
}

struct ToyLanguageModel::ForwardCaches {
    struct BlockCache {
        nn::LayerNormCache ln_attn, ln_ffn;
        nn::AttentionCache attn;
        nn::FeedForwardCache ffn;
        Eigen::MatrixXd x_in, x_mid;  // block input and post-attention state
    };
    std::vector<BlockCache> blocks;
    nn::LayerNormCache ln_final;
    Eigen::MatrixXd hidden;  // pre-final-LN states
};

ToyLanguageModel::ToyLanguageModel(const LanguageModelSpec& spec, std::uint64_t seed,
                                   int n_blocks, int n_heads)
    : spec_(spec), seed_(seed), n_blocks_(n_blocks), n_heads_(n_heads) {
    spec_.validate();
    if (n_blocks < 1 || n_heads < 1 || spec_.d_l % n_heads != 0)
        throw std::invalid_argument("ToyLanguageModel: bad block/head configuration");
    Rng rng(splitmix64(seed ^ 0x4C4DULL));
    token_emb_.resize(spec_.vocab_size, spec_.d_l);
    fill_gaussian(token_emb_, rng, 1.0);
    pos_emb_.resize(kMaxPositions, spec_.d_l);
    fill_gaussian(pos_emb_, rng, 0.1);
    blocks_.resize(static_cast<std::size_t>(n_blocks));
    for (Block& b : blocks_) {
        b.ln_attn = nn::LayerNormParams::ones(spec_.d_l);
        b.ln_ffn = nn::LayerNormParams::ones(spec_.d_l);
        fill_affine(b.attn.q, spec_.d_l, spec_.d_l, rng);
        fill_affine(b.attn.k, spec_.d_l, spec_.d_l, rng);
        fill_affine(b.attn.v, spec_.d_l, spec_.d_l, rng);
        fill_affine(b.attn.out, spec_.d_l, spec_.d_l, rng);
        fill_affine(b.ffn.in, spec_.d_l, 2 * spec_.d_l, rng);
        fill_affine(b.ffn.out, 2 * spec_.d_l, spec_.d_l, rng);
    }
    ln_final_ = nn::LayerNormParams::ones(spec_.d_l);
    fill_affine(head_, spec_.d_l, spec_.vocab_size, rng);
}

Eigen::MatrixXd ToyLanguageModel::forward(const Eigen::MatrixXd& prefix,
                                          const std::vector<int>& tokens,
                                          ForwardCaches* caches) const {
    if (prefix.size() > 0 && prefix.cols() != spec_.d_l)
        throw std::invalid_argument("ToyLanguageModel: prefix width must equal d_l");
    const Eigen::Index n_prefix = prefix.rows();
    const Eigen::Index len = n_prefix + static_cast<Eigen::Index>(tokens.size());
    if (len > kMaxPositions)
        throw std::invalid_argument("ToyLanguageModel: sequence too long");

    Eigen::MatrixXd x(len, spec_.d_l);
    for (Eigen::Index r = 0; r < n_prefix; ++r)
        x.row(r) = prefix.row(r) + pos_emb_.row(r);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const int t = tokens[i];
        if (t < 0 || t >= spec_.vocab_size)
            throw std::invalid_argument("ToyLanguageModel: token id out of range");
        const Eigen::Index r = n_prefix + static_cast<Eigen::Index>(i);
        x.row(r) = token_emb_.row(t) + pos_emb_.row(r);
    }

    if (caches) caches->blocks.resize(blocks_.size());
    for (std::size_t bi = 0; bi < blocks_.size(); ++bi) {
        const Block& b = blocks_[bi];
        auto* bc = caches ? &caches->blocks[bi] : nullptr;
        if (bc) bc->x_in = x;
        const Eigen::MatrixXd normed =
            nn::layer_norm(x, b.ln_attn, bc ? &bc->ln_attn : nullptr);
        x += nn::attention(normed, normed, b.attn, n_heads_, /*causal=*/true,
                           bc ? &bc->attn : nullptr);
        if (bc) bc->x_mid = x;
        const Eigen::MatrixXd normed2 =
            nn::layer_norm(x, b.ln_ffn, bc ? &bc->ln_ffn : nullptr);
        x += nn::feed_forward(normed2, b.ffn, bc ? &bc->ffn : nullptr);
    }
    if (caches) caches->hidden = x;
    return x;
}

Eigen::VectorXd ToyLanguageModel::next_token_logits(const Eigen::MatrixXd& prefix,
                                                    const std::vector<int>& generated) const {
    std::vector<int> tokens;
    tokens.reserve(generated.size() + 1);
    tokens.push_back(spec_.bos);
    tokens.insert(tokens.end(), generated.begin(), generated.end());
    const Eigen::MatrixXd hidden = forward(prefix, tokens, nullptr);
    const Eigen::MatrixXd normed = nn::layer_norm(hidden.bottomRows(1), ln_final_, nullptr);
    return nn::affine(normed, head_).row(0).transpose();
}

double ToyLanguageModel::sequence_log_prob_with_grad(const Eigen::MatrixXd& prefix,
                                                     const std::vector<int>& target,
                                                     Eigen::MatrixXd* dprefix) const {
    if (target.empty())
        throw std::invalid_argument("sequence_log_prob: empty target");
    std::vector<int> tokens;
    tokens.reserve(target.size() + 1);
    tokens.push_back(spec_.bos);
    tokens.insert(tokens.end(), target.begin(), target.end());

    ForwardCaches caches;
    const Eigen::MatrixXd hidden = forward(prefix, tokens, dprefix ? &caches : nullptr);
    const Eigen::Index n_prefix = prefix.rows();

    // Hidden row (n_prefix + i) predicts target[i].
    double total = 0.0;
    Eigen::MatrixXd dhidden;
    if (dprefix) dhidden = Eigen::MatrixXd::Zero(hidden.rows(), hidden.cols());
    nn::LayerNormCache lnc;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const Eigen::Index row = n_prefix + static_cast<Eigen::Index>(i);
        const Eigen::MatrixXd normed =
            nn::layer_norm(hidden.row(row), ln_final_, dprefix ? &lnc : nullptr);
        const Eigen::VectorXd logits = nn::affine(normed, head_).row(0).transpose();
        const Eigen::VectorXd logp = nn::log_softmax(logits);
        total += logp[target[i]];
        if (dprefix) {
            Eigen::VectorXd dlogits = -logp.array().exp();
            dlogits[target[i]] += 1.0;
            const Eigen::MatrixXd dnormed =
                nn::affine_backward(normed, dlogits.transpose(), head_, nullptr);
            dhidden.row(row) += nn::layer_norm_backward(dnormed, ln_final_, lnc, nullptr).row(0);
        }
    }
    if (!dprefix) return total;

    // Backward through the blocks with respect to the input rows only.
    Eigen::MatrixXd dx = dhidden;
    for (std::size_t bi = blocks_.size(); bi-- > 0;) {
        const Block& b = blocks_[bi];
        const auto& bc = caches.blocks[bi];
        const Eigen::MatrixXd dffn = nn::feed_forward_backward(dx, b.ffn, bc.ffn, nullptr);
        dx += nn::layer_norm_backward(dffn, b.ln_ffn, bc.ln_ffn, nullptr);
        Eigen::MatrixXd dkv = Eigen::MatrixXd::Zero(dx.rows(), dx.cols());
        const Eigen::MatrixXd dq =
            nn::attention_backward(dx, b.attn, n_heads_, bc.attn, nullptr, &dkv);
        dx += nn::layer_norm_backward(dq + dkv, b.ln_attn, bc.ln_attn, nullptr);
    }
    *dprefix = dx.topRows(n_prefix);
    return total;
}

std::uint64_t ToyLanguageModel::weight_checksum() const {
    std::uint64_t h = splitmix64(seed_ ^ spec_.hash());
    auto fold = [&h](const Eigen::MatrixXd& m) {
        h = hash_doubles(m.data(), static_cast<std::size_t>(m.size()), h);
    };
    auto fold_v = [&h](const Eigen::VectorXd& v) {
        h = hash_doubles(v.data(), static_cast<std::size_t>(v.size()), h);
    };
    fold(token_emb_);
    fold(pos_emb_);
    for (const Block& b : blocks_) {
        fold_v(b.ln_attn.gamma); fold_v(b.ln_attn.beta);
        for (const auto* a : {&b.attn.q, &b.attn.k, &b.attn.v, &b.attn.out}) {
            fold(a->w); fold_v(a->b);
        }
        fold_v(b.ln_ffn.gamma); fold_v(b.ln_ffn.beta);
        fold(b.ffn.in.w); fold_v(b.ffn.in.b);
        fold(b.ffn.out.w); fold_v(b.ffn.out.b);
    }
    fold_v(ln_final_.gamma); fold_v(ln_final_.beta);
    fold(head_.w); fold_v(head_.b);
    return h;
}

}  // namespace maccap
