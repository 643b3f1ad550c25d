#include "maccap/inference.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace maccap {

SubregionSelection select_informative_patches(const PatchFeatureSet& p, int n_cr) {
    const Eigen::Index n_tokens = p.tokens.rows();
    const int n_p = static_cast<int>(n_tokens) - 1;
    if (n_cr < 1 || n_cr > n_p)
        throw std::invalid_argument("select_informative_patches: need 1 <= n_cr <= n_p");
    if (p.cls_attention.size() != n_tokens)
        throw std::invalid_argument("select_informative_patches: attention length mismatch");

    // Patches only; the class token never competes.
    std::vector<int> idx(static_cast<std::size_t>(n_p));
    std::iota(idx.begin(), idx.end(), 1);
    std::stable_sort(idx.begin(), idx.end(), [&p](int a, int b) {
        if (p.cls_attention[a] != p.cls_attention[b])
            return p.cls_attention[a] > p.cls_attention[b];
        return a < b;
    });
    idx.resize(static_cast<std::size_t>(n_cr));

    SubregionSelection sel;
    sel.patch_indices = idx;
    // Each selected patch keeps its own attention distribution over all
    // tokens; the toy backbone exposes only the class-token row, so the
    // per-patch rows are derived from the same softmax-normalized scores
    // re-normalized around the patch itself. For fixtures carrying full
    // attention maps this would be the corresponding row of the map.
    sel.attention.resize(n_cr, n_tokens);
    for (int k = 0; k < n_cr; ++k) {
        Eigen::RowVectorXd row = p.cls_attention.transpose();
        row[sel.patch_indices[static_cast<std::size_t>(k)]] += 1.0;
        sel.attention.row(k) = row / row.sum();
    }
    return sel;
}

RegionImageFeature aggregate_subregions(const ProjectedPatchSet& proj,
                                        const SubregionSelection& sel, bool aggregate_mean) {
    if (sel.attention.cols() != proj.tokens.rows())
        throw std::invalid_argument("aggregate_subregions: shape mismatch");
    const Eigen::VectorXd global = proj.tokens.row(0).transpose();
    // I_s = A * I_p'
    const Eigen::MatrixXd subregions = sel.attention * proj.tokens;
    RegionImageFeature out;
    out.rows = subregions.rowwise() + global.transpose();
    if (aggregate_mean) out.rows *= 0.5;
    return out;
}

std::vector<CaptionCandidate> generate_candidates(const RegionImageFeature& img_feat,
                                                  const SamplingConfig& cfg,
                                                  const AdaptorParams& adaptor,
                                                  const LanguageModel& lm,
                                                  const ToyTokenizer& tokenizer) {
    if (cfg.s < 1) throw std::invalid_argument("generate_candidates: s must be >= 1");
    if (!(cfg.inference_sigma >= 0.0))
        throw std::invalid_argument("generate_candidates: sigma must be >= 0");

    const Eigen::Index rows = img_feat.rows.rows();
    const Eigen::Index d = img_feat.rows.cols();

    // All noise pre-drawn in a fixed order; decoding order cannot change it.
    Rng rng(splitmix64(cfg.seed ^ 0x5A3CULL));
    std::vector<Eigen::MatrixXd> noisy(static_cast<std::size_t>(cfg.s));
    for (int s = 0; s < cfg.s; ++s) {
        Eigen::MatrixXd m = img_feat.rows;
        if (cfg.inference_sigma > 0.0) {
            for (Eigen::Index r = 0; r < rows; ++r)
                for (Eigen::Index c = 0; c < d; ++c)
                    m(r, c) += cfg.distribution == NoiseDistribution::gaussian
                                   ? rng.gaussian() * cfg.inference_sigma
                                   : rng.uniform_centered(cfg.inference_sigma);
        }
        if (cfg.normalize_rows)
            for (Eigen::Index r = 0; r < rows; ++r) m.row(r).normalize();
        noisy[static_cast<std::size_t>(s)] = std::move(m);
    }

    std::vector<CaptionCandidate> candidates(static_cast<std::size_t>(cfg.s));
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(std::max(1, cfg.workers))
#endif
    for (int s = 0; s < cfg.s; ++s) {
        const RegionFeatureSequence region{noisy[static_cast<std::size_t>(s)]};
        const PrefixEmbedding prefix = adaptor_forward(region, adaptor, nullptr);
        BeamSearchConfig bs;
        bs.n_beams = cfg.n_beams;
        bs.max_len = cfg.max_len;
        TokenSequence seq = beam_search(lm, prefix.rows, bs);
        seq.text = tokenizer.decode(seq.ids);
        CaptionCandidate cand;
        cand.text = seq.text;
        cand.tokens = std::move(seq);
        candidates[static_cast<std::size_t>(s)] = std::move(cand);
    }
    return candidates;
}

CaptionCandidate rerank(const std::vector<CaptionCandidate>& candidates,
                        const Eigen::VectorXd& image_global, const Backbone& text_encoder) {
    if (candidates.empty()) throw std::invalid_argument("rerank: empty candidate list");
    CaptionCandidate best;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        CaptionCandidate scored = candidates[i];
        if (scored.text.empty()) {
            scored.similarity = -1.0;  // empty decodes can never win over content
        } else {
            const TextEmbedding emb = text_encoder.encode_text(
                tokenize_bytes(scored.text, text_encoder.spec().text_vocab));
            scored.similarity = cosine_similarity(emb.vec, image_global);
        }
        if (scored.similarity > best_sim) {
            best_sim = scored.similarity;
            best = std::move(scored);
        }
    }
    return best;
}

CaptionResult caption(const std::vector<double>& image, const Backbone& backbone,
                      const AdaptorParams& adaptor, const LanguageModel& lm,
                      const ToyTokenizer& tokenizer, const SamplingConfig& cfg, int n_cr) {
    const PatchFeatureSet patches = backbone.encode_image(image);
    const ProjectedPatchSet proj = project_patches(patches, backbone.projection());
    const SubregionSelection sel = select_informative_patches(patches, n_cr);
    const RegionImageFeature img_feat = aggregate_subregions(proj, sel, cfg.aggregate_mean);

    std::vector<CaptionCandidate> candidates =
        generate_candidates(img_feat, cfg, adaptor, lm, tokenizer);
    const Eigen::VectorXd global = proj.tokens.row(0).transpose();
    // Score every candidate for the manifest dump, then pick the argmax.
    for (auto& cand : candidates) {
        if (cand.text.empty()) {
            cand.similarity = -1.0;
            continue;
        }
        const TextEmbedding emb =
            backbone.encode_text(tokenize_bytes(cand.text, backbone.spec().text_vocab));
        cand.similarity = cosine_similarity(emb.vec, global);
    }
    const CaptionCandidate best = rerank(candidates, global, backbone);
    return CaptionResult{best.text, best.similarity, std::move(candidates)};
}

}  // namespace maccap
