#include "maccap/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace maccap::reference {

SimilarityStats pair_similarity_stats_serial(const std::vector<AnalysisPair>& pairs,
                                             RepresentationMode mode, MixRule rule) {
    if (pairs.empty())
        throw std::invalid_argument("pair_similarity_stats_serial: empty pair list");
    SimilarityStats stats;
    stats.n_pairs = pairs.size();
    stats.max = -std::numeric_limits<double>::infinity();
    stats.min = std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (const AnalysisPair& p : pairs) {
        const Eigen::VectorXd rep = mode == RepresentationMode::global
                                        ? Eigen::VectorXd(p.proj_tokens.row(0).transpose())
                                        : mix_representation(p.text, p.proj_tokens, rule);
        const double s = cosine_similarity(p.text, rep);
        sum += s;
        stats.max = std::max(stats.max, s);
        stats.min = std::min(stats.min, s);
    }
    stats.mean = sum / static_cast<double>(stats.n_pairs);
    return stats;
}

double subregion_win_fraction_serial(const std::vector<AnalysisPair>& pairs) {
    if (pairs.empty())
        throw std::invalid_argument("subregion_win_fraction_serial: empty pair list");
    long long wins = 0;
    for (const AnalysisPair& p : pairs) {
        const double global_sim =
            cosine_similarity(p.text, p.proj_tokens.row(0).transpose());
        for (Eigen::Index r = 1; r < p.proj_tokens.rows(); ++r) {
            if (cosine_similarity(p.text, p.proj_tokens.row(r).transpose()) > global_sim) {
                ++wins;
                break;
            }
        }
    }
    return static_cast<double>(wins) / static_cast<double>(pairs.size());
}

GapHistogram gap_distribution_serial(const std::vector<AnalysisPair>& pairs, GapMode mode,
                                     int interior_bins, double lo, double hi) {
    if (pairs.empty())
        throw std::invalid_argument("gap_distribution_serial: empty pair list");
    GapHistogram hist;
    hist.bin_edges.push_back(-std::numeric_limits<double>::infinity());
    for (int b = 0; b <= interior_bins; ++b)
        hist.bin_edges.push_back(lo + (hi - lo) * b / interior_bins);
    hist.bin_edges.push_back(std::numeric_limits<double>::infinity());
    hist.counts.assign(static_cast<std::size_t>(interior_bins) + 2, 0);
    hist.n_pairs = pairs.size();

    const double width = (hi - lo) / interior_bins;
    double sum = 0.0;
    for (const AnalysisPair& p : pairs) {
        const GapSample g = gap_sample(p);
        auto add = [&](double v) {
            sum += v;
            std::size_t bin;
            if (v < lo) {
                bin = 0;
            } else if (v >= hi) {
                bin = hist.counts.size() - 1;
            } else {
                bin = 1 + static_cast<std::size_t>((v - lo) / width);
                bin = std::min(bin, hist.counts.size() - 2);
            }
            ++hist.counts[bin];
        };
        if (mode == GapMode::global) {
            for (Eigen::Index k = 0; k < g.global_gap.size(); ++k) add(g.global_gap[k]);
        } else {
            for (Eigen::Index r = 1; r < g.patch_gaps.rows(); ++r)
                for (Eigen::Index c = 0; c < g.patch_gaps.cols(); ++c)
                    add(g.patch_gaps(r, c));
        }
    }
    const Eigen::Index d = pairs[0].proj_tokens.cols();
    hist.dims_pooled = mode == GapMode::global
                           ? static_cast<std::size_t>(d)
                           : static_cast<std::size_t>(d * (pairs[0].proj_tokens.rows() - 1));
    hist.pooled_mean = sum / (static_cast<double>(hist.n_pairs) *
                              static_cast<double>(hist.dims_pooled));
    return hist;
}

std::vector<PrefixEmbedding> batch_adaptor_forward_serial(
    const std::vector<RegionFeatureSequence>& inputs, const AdaptorParams& params) {
    std::vector<PrefixEmbedding> out(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i)
        out[i] = adaptor_forward(inputs[i], params, nullptr);
    return out;
}

std::vector<PrefixEmbedding> batch_adaptor_forward_parallel(
    const std::vector<RegionFeatureSequence>& inputs, const AdaptorParams& params) {
    std::vector<PrefixEmbedding> out(inputs.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long i = 0; i < static_cast<long long>(inputs.size()); ++i)
        out[static_cast<std::size_t>(i)] =
            adaptor_forward(inputs[static_cast<std::size_t>(i)], params, nullptr);
    return out;
}

}  // namespace maccap::reference
