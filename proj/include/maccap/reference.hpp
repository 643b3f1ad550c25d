#pragma once

#include <vector>

#include "maccap/adaptor.hpp"
#include "maccap/gap_analysis.hpp"

// Straight-line serial implementations of the batch kernels that the main
// library parallelizes with OpenMP. Tests compare the two paths and the
// benchmark target times them against each other.
namespace maccap::reference {

SimilarityStats pair_similarity_stats_serial(const std::vector<AnalysisPair>& pairs,
                                             RepresentationMode mode,
                                             MixRule rule = MixRule::best_patch);

double subregion_win_fraction_serial(const std::vector<AnalysisPair>& pairs);

GapHistogram gap_distribution_serial(const std::vector<AnalysisPair>& pairs, GapMode mode,
                                     int interior_bins = 101, double lo = -0.2,
                                     double hi = 0.2);

std::vector<PrefixEmbedding> batch_adaptor_forward_serial(
    const std::vector<RegionFeatureSequence>& inputs, const AdaptorParams& params);

// OpenMP counterpart of the batch forward, for the benchmark comparison.
std::vector<PrefixEmbedding> batch_adaptor_forward_parallel(
    const std::vector<RegionFeatureSequence>& inputs, const AdaptorParams& params);

}  // namespace maccap::reference
