#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "maccap/adaptor.hpp"
#include "maccap/backbone.hpp"
#include "maccap/langmodel.hpp"

namespace maccap {

// Indices of the top-n_cr patches by class-token attention (class token
// itself excluded), strictly descending by score, ties toward the lower
// index; `attention` holds each selected patch's own attention distribution
// over all tokens.
struct SubregionSelection {
    std::vector<int> patch_indices;   // into tokens 1..n_p
    Eigen::MatrixXd attention;        // n_cr x (n_p + 1), rows sum to 1
};

// Subregion-enhanced rows: row k = I_s^k + I_c.
struct RegionImageFeature {
    Eigen::MatrixXd rows;  // n_cr x d
};

struct CaptionCandidate {
    TokenSequence tokens;
    std::string text;
    double similarity = 0.0;
};

struct SamplingConfig {
    int s = 20;
    double inference_sigma = 0.016;
    NoiseDistribution distribution = NoiseDistribution::gaussian;
    int n_beams = 4;
    int max_len = 16;
    std::uint64_t seed = 0;
    // Eq-as-written default: summed composition, rows left unnormalized.
    bool aggregate_mean = false;
    bool normalize_rows = false;
    int workers = 1;
};

SubregionSelection select_informative_patches(const PatchFeatureSet& p, int n_cr);

RegionImageFeature aggregate_subregions(const ProjectedPatchSet& proj,
                                        const SubregionSelection& sel,
                                        bool aggregate_mean = false);

// S decodes under fresh per-row noise, all draws pulled from one seeded
// stream before any decoding so results do not depend on parallelism.
std::vector<CaptionCandidate> generate_candidates(const RegionImageFeature& img_feat,
                                                  const SamplingConfig& cfg,
                                                  const AdaptorParams& adaptor,
                                                  const LanguageModel& lm,
                                                  const ToyTokenizer& tokenizer);

// Argmax of cosine(text embedding of candidate, image global embedding);
// ties toward the lower candidate index.
CaptionCandidate rerank(const std::vector<CaptionCandidate>& candidates,
                        const Eigen::VectorXd& image_global, const Backbone& text_encoder);

struct CaptionResult {
    std::string caption;
    double similarity = 0.0;
    std::vector<CaptionCandidate> candidates;
};

CaptionResult caption(const std::vector<double>& image, const Backbone& backbone,
                      const AdaptorParams& adaptor, const LanguageModel& lm,
                      const ToyTokenizer& tokenizer, const SamplingConfig& cfg,
                      int n_cr);

}  // namespace maccap
