#include "maccap/gap_analysis.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace maccap {

AnalysisPair make_analysis_pair(const SyntheticPair& pair, const PatchProjection& proj) {
    return AnalysisPair{pair.text.vec, project_patches(pair.patches, proj).tokens};
}

std::vector<AnalysisPair> make_analysis_pairs(const std::vector<SyntheticPair>& pairs,
                                              const PatchProjection& proj) {
    std::vector<AnalysisPair> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(make_analysis_pair(p, proj));
    return out;
}

GapSample gap_sample(const AnalysisPair& pair) {
    GapSample g;
    g.global_gap = pair.text - pair.proj_tokens.row(0).transpose();
    g.patch_gaps = (-pair.proj_tokens).rowwise() + pair.text.transpose();
    return g;
}

Eigen::VectorXd mix_representation(const Eigen::VectorXd& text,
                                   const Eigen::MatrixXd& proj_tokens, MixRule rule) {
    const Eigen::VectorXd global = proj_tokens.row(0).transpose();
    if (proj_tokens.rows() == 1) return global + global;  // no patches to mix in
    if (rule == MixRule::mean_all_patches) {
        const Eigen::Index n_patches = proj_tokens.rows() - 1;
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(proj_tokens.cols());
        for (Eigen::Index r = 1; r < proj_tokens.rows(); ++r)
            mean += proj_tokens.row(r).transpose();
        return global + mean / static_cast<double>(n_patches);
    }
    Eigen::Index best = 1;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 1; r < proj_tokens.rows(); ++r) {
        const double sim = cosine_similarity(text, proj_tokens.row(r).transpose());
        if (sim > best_sim) {
            best_sim = sim;
            best = r;
        }
    }
    return global + proj_tokens.row(best).transpose();
}

SimilarityStats pair_similarity_stats(const std::vector<AnalysisPair>& pairs,
                                      RepresentationMode mode, MixRule rule) {
    if (pairs.empty())
        throw std::invalid_argument("pair_similarity_stats: empty pair list");
    const std::size_t n = pairs.size();
    std::vector<double> sims(n);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        const AnalysisPair& p = pairs[static_cast<std::size_t>(i)];
        const Eigen::VectorXd rep = mode == RepresentationMode::global
                                        ? Eigen::VectorXd(p.proj_tokens.row(0).transpose())
                                        : mix_representation(p.text, p.proj_tokens, rule);
        sims[static_cast<std::size_t>(i)] = cosine_similarity(p.text, rep);
    }
    SimilarityStats stats;
    stats.n_pairs = n;
    stats.max = -std::numeric_limits<double>::infinity();
    stats.min = std::numeric_limits<double>::infinity();
    double sum = 0.0;  // sequential reduction keeps the mean order-stable
    for (double s : sims) {
        sum += s;
        stats.max = std::max(stats.max, s);
        stats.min = std::min(stats.min, s);
    }
    stats.mean = sum / static_cast<double>(n);
    return stats;
}

double subregion_win_fraction(const std::vector<AnalysisPair>& pairs) {
    if (pairs.empty())
        throw std::invalid_argument("subregion_win_fraction: empty pair list");
    const std::size_t n = pairs.size();
    std::vector<char> wins(n, 0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        const AnalysisPair& p = pairs[static_cast<std::size_t>(i)];
        const double global_sim =
            cosine_similarity(p.text, p.proj_tokens.row(0).transpose());
        for (Eigen::Index r = 1; r < p.proj_tokens.rows(); ++r) {
            if (cosine_similarity(p.text, p.proj_tokens.row(r).transpose()) > global_sim) {
                wins[static_cast<std::size_t>(i)] = 1;
                break;
            }
        }
    }
    long long total = 0;
    for (char w : wins) total += w;
    return static_cast<double>(total) / static_cast<double>(n);
}

GapHistogram gap_distribution(const std::vector<AnalysisPair>& pairs, GapMode mode,
                              int interior_bins, double lo, double hi) {
    if (pairs.empty()) throw std::invalid_argument("gap_distribution: empty pair list");
    if (interior_bins < 1 || !(hi > lo))
        throw std::invalid_argument("gap_distribution: bad binning");
    if (mode == GapMode::patch && pairs[0].proj_tokens.rows() < 2)
        throw std::invalid_argument("gap_distribution: patch mode needs subregion rows");

    GapHistogram hist;
    hist.bin_edges.push_back(-std::numeric_limits<double>::infinity());
    for (int b = 0; b <= interior_bins; ++b)
        hist.bin_edges.push_back(lo + (hi - lo) * b / interior_bins);
    hist.bin_edges.push_back(std::numeric_limits<double>::infinity());
    hist.counts.assign(static_cast<std::size_t>(interior_bins) + 2, 0);
    hist.n_pairs = pairs.size();

    const double width = (hi - lo) / interior_bins;
    std::vector<double> pair_sums(pairs.size(), 0.0);
    std::vector<std::vector<long long>> pair_counts(
        pairs.size(), std::vector<long long>(hist.counts.size(), 0));

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long i = 0; i < static_cast<long long>(pairs.size()); ++i) {
        const GapSample g = gap_sample(pairs[static_cast<std::size_t>(i)]);
        auto add = [&](double v) {
            pair_sums[static_cast<std::size_t>(i)] += v;
            std::size_t bin;
            if (v < lo) {
                bin = 0;
            } else if (v >= hi) {
                bin = hist.counts.size() - 1;
            } else {
                bin = 1 + static_cast<std::size_t>((v - lo) / width);
                bin = std::min(bin, hist.counts.size() - 2);
            }
            ++pair_counts[static_cast<std::size_t>(i)][bin];
        };
        if (mode == GapMode::global) {
            for (Eigen::Index k = 0; k < g.global_gap.size(); ++k) add(g.global_gap[k]);
        } else {
            // Row 0 of patch_gaps is the global row; patch mode pools the
            // subregion rows only.
            for (Eigen::Index r = 1; r < g.patch_gaps.rows(); ++r)
                for (Eigen::Index c = 0; c < g.patch_gaps.cols(); ++c)
                    add(g.patch_gaps(r, c));
        }
    }

    const Eigen::Index d = pairs[0].proj_tokens.cols();
    hist.dims_pooled = mode == GapMode::global
                           ? static_cast<std::size_t>(d)
                           : static_cast<std::size_t>(d * (pairs[0].proj_tokens.rows() - 1));
    double sum = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        sum += pair_sums[i];
        for (std::size_t b = 0; b < hist.counts.size(); ++b)
            hist.counts[b] += pair_counts[i][b];
    }
    hist.pooled_mean = sum / (static_cast<double>(hist.n_pairs) *
                              static_cast<double>(hist.dims_pooled));
    return hist;
}

void write_similarity_csv(const std::string& path,
                          const std::vector<std::pair<std::string, SimilarityStats>>& rows,
                          double win_fraction) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "stat,mode,value,n_pairs\n";
    out.precision(12);
    std::size_t n_pairs = 0;
    for (const auto& [mode, stats] : rows) {
        n_pairs = stats.n_pairs;
        out << "mean," << mode << "," << stats.mean << "," << stats.n_pairs << "\n";
        out << "max," << mode << "," << stats.max << "," << stats.n_pairs << "\n";
        out << "min," << mode << "," << stats.min << "," << stats.n_pairs << "\n";
    }
    out << "win_fraction,subregion," << win_fraction << "," << n_pairs << "\n";
}

void write_histogram_csv(const GapHistogram& hist, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "bin_lo,bin_hi,count\n";
    out.precision(12);
    for (std::size_t b = 0; b < hist.counts.size(); ++b)
        out << hist.bin_edges[b] << "," << hist.bin_edges[b + 1] << "," << hist.counts[b]
            << "\n";
    out << "# pooled_mean," << hist.pooled_mean << "\n";
}

void write_projection_scatter_csv(const std::vector<AnalysisPair>& pairs,
                                  const std::string& path) {
    if (pairs.empty())
        throw std::invalid_argument("write_projection_scatter_csv: empty pair list");
    const Eigen::Index d = pairs[0].text.size();
    const std::size_t n = pairs.size();
    Eigen::MatrixXd data(2 * n, d);
    for (std::size_t i = 0; i < n; ++i) {
        data.row(static_cast<Eigen::Index>(2 * i)) = pairs[i].text.transpose();
        data.row(static_cast<Eigen::Index>(2 * i + 1)) = pairs[i].proj_tokens.row(0);
    }
    const Eigen::RowVectorXd mean = data.colwise().mean();
    data.rowwise() -= mean;
    const Eigen::MatrixXd cov = data.transpose() * data / static_cast<double>(data.rows());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    // Last two eigenvectors carry the largest eigenvalues.
    const Eigen::MatrixXd basis = es.eigenvectors().rightCols(2).rowwise().reverse();
    const Eigen::MatrixXd coords = data * basis;

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "x,y,modality\n";
    out.precision(12);
    for (std::size_t i = 0; i < n; ++i) {
        out << coords(static_cast<Eigen::Index>(2 * i), 0) << ","
            << coords(static_cast<Eigen::Index>(2 * i), 1) << ",text\n";
        out << coords(static_cast<Eigen::Index>(2 * i + 1), 0) << ","
            << coords(static_cast<Eigen::Index>(2 * i + 1), 1) << ",image\n";
    }
}

}  // namespace maccap
