#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "maccap/backbone.hpp"

namespace maccap {

// One text/image pair in the joint space. proj_tokens row 0 is the global
// (class-token) row; rows 1..n_p are the projected subregion rows.
struct AnalysisPair {
    Eigen::VectorXd text;
    Eigen::MatrixXd proj_tokens;  // (n_p + 1) x d
};

AnalysisPair make_analysis_pair(const SyntheticPair& pair, const PatchProjection& proj);
std::vector<AnalysisPair> make_analysis_pairs(const std::vector<SyntheticPair>& pairs,
                                              const PatchProjection& proj);

// Per-pair embedding differences: global_gap = T - I_c,
// patch_gaps row s = T - proj_tokens row s.
struct GapSample {
    Eigen::VectorXd global_gap;
    Eigen::MatrixXd patch_gaps;
};

GapSample gap_sample(const AnalysisPair& pair);

struct SimilarityStats {
    double mean = 0.0;
    double max = 0.0;
    double min = 0.0;
    std::size_t n_pairs = 0;
};

enum class RepresentationMode { global, mix };
enum class MixRule { best_patch, mean_all_patches };

// Global row plus the best-matching subregion row (unnormalized sum).
// With no subregion rows this degenerates to twice the global row.
Eigen::VectorXd mix_representation(const Eigen::VectorXd& text,
                                   const Eigen::MatrixXd& proj_tokens,
                                   MixRule rule = MixRule::best_patch);

SimilarityStats pair_similarity_stats(const std::vector<AnalysisPair>& pairs,
                                      RepresentationMode mode,
                                      MixRule rule = MixRule::best_patch);

// Fraction of pairs where some subregion row beats the global row on cosine
// similarity to the text (strict inequality; ties go to global).
double subregion_win_fraction(const std::vector<AnalysisPair>& pairs);

enum class GapMode { global, patch };

struct GapHistogram {
    std::vector<double> bin_edges;  // first/last are +-infinity overflow edges
    std::vector<long long> counts;
    double pooled_mean = 0.0;
    std::size_t n_pairs = 0;
    std::size_t dims_pooled = 0;  // entries pooled per pair
};

// Pools all feature dimensions of the gap samples: the global row in global
// mode, the subregion rows (row 0 excluded) in patch mode. 101 uniform bins
// over [-0.2, 0.2] plus two overflow bins.
GapHistogram gap_distribution(const std::vector<AnalysisPair>& pairs, GapMode mode,
                              int interior_bins = 101, double lo = -0.2, double hi = 0.2);

void write_similarity_csv(const std::string& path,
                          const std::vector<std::pair<std::string, SimilarityStats>>& rows,
                          double win_fraction);
void write_histogram_csv(const GapHistogram& hist, const std::string& path);

// 2D linear-projection scatter of text / global-image embeddings: top two
// principal components of the pooled embeddings. CSV rows: x,y,modality.
void write_projection_scatter_csv(const std::vector<AnalysisPair>& pairs,
                                  const std::string& path);

}  // namespace maccap
