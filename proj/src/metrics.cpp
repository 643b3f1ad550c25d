#include "maccap/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace maccap {

namespace {

using NgramCounts = std::map<std::vector<std::string>, long long>;

NgramCounts ngram_counts(const std::vector<std::string>& tokens, int n) {
    NgramCounts counts;
    if (static_cast<int>(tokens.size()) < n) return counts;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i)
        ++counts[std::vector<std::string>(tokens.begin() + static_cast<long>(i),
                                          tokens.begin() + static_cast<long>(i) + n)];
    return counts;
}

}  // namespace

std::vector<std::string> metric_tokenize(const std::string& text) {
    std::string cleaned;
    cleaned.reserve(text.size());
    for (unsigned char c : text) {
        if (std::ispunct(c)) continue;
        cleaned.push_back(static_cast<char>(std::tolower(c)));
    }
    std::vector<std::string> tokens;
    std::string word;
    for (char c : cleaned) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!word.empty()) tokens.push_back(std::move(word));
            word.clear();
        } else {
            word.push_back(c);
        }
    }
    if (!word.empty()) tokens.push_back(std::move(word));
    return tokens;
}

double bleu(const EvalSet& eval_set, int max_n) {
    if (eval_set.items.empty()) throw std::invalid_argument("bleu: empty eval set");
    if (max_n < 1 || max_n > 4) throw std::invalid_argument("bleu: max_n must be in 1..4");
    for (const auto& item : eval_set.items)
        if (item.references.empty())
            throw std::invalid_argument("bleu: item without references");

    std::vector<long long> matched(static_cast<std::size_t>(max_n), 0);
    std::vector<long long> total(static_cast<std::size_t>(max_n), 0);
    long long cand_len = 0, eff_ref_len = 0;

    for (const auto& item : eval_set.items) {
        const auto cand = metric_tokenize(item.candidate);
        std::vector<std::vector<std::string>> refs;
        refs.reserve(item.references.size());
        for (const auto& r : item.references) refs.push_back(metric_tokenize(r));

        cand_len += static_cast<long long>(cand.size());
        // Closest reference length; ties toward the shorter reference.
        long long best_ref = static_cast<long long>(refs[0].size());
        for (const auto& r : refs) {
            const long long len = static_cast<long long>(r.size());
            const long long cur = std::llabs(best_ref - static_cast<long long>(cand.size()));
            const long long alt = std::llabs(len - static_cast<long long>(cand.size()));
            if (alt < cur || (alt == cur && len < best_ref)) best_ref = len;
        }
        eff_ref_len += best_ref;

        for (int n = 1; n <= max_n; ++n) {
            const NgramCounts cand_counts = ngram_counts(cand, n);
            NgramCounts max_ref_counts;
            for (const auto& r : refs)
                for (const auto& [gram, count] : ngram_counts(r, n))
                    max_ref_counts[gram] = std::max(max_ref_counts[gram], count);
            for (const auto& [gram, count] : cand_counts) {
                total[static_cast<std::size_t>(n - 1)] += count;
                const auto it = max_ref_counts.find(gram);
                if (it != max_ref_counts.end())
                    matched[static_cast<std::size_t>(n - 1)] += std::min(count, it->second);
            }
        }
    }

    double log_precision = 0.0;
    for (int n = 0; n < max_n; ++n) {
        if (matched[static_cast<std::size_t>(n)] == 0 ||
            total[static_cast<std::size_t>(n)] == 0)
            return 0.0;
        log_precision += std::log(static_cast<double>(matched[static_cast<std::size_t>(n)]) /
                                  static_cast<double>(total[static_cast<std::size_t>(n)]));
    }
    log_precision /= max_n;
    const double bp = cand_len >= eff_ref_len
                          ? 1.0
                          : std::exp(1.0 - static_cast<double>(eff_ref_len) /
                                               static_cast<double>(cand_len));
    return bp * std::exp(log_precision);
}

double cider(const EvalSet& eval_set, bool cider_d) {
    if (eval_set.items.size() < 2)
        throw std::invalid_argument("cider: needs at least 2 items for a usable IDF corpus");
    for (const auto& item : eval_set.items)
        if (item.references.empty())
            throw std::invalid_argument("cider: item without references");

    constexpr int kMaxN = 4;
    constexpr double kLengthSigma = 6.0;
    const double m_items = static_cast<double>(eval_set.items.size());

    // Document frequency over reference sets, per order.
    std::vector<std::map<std::vector<std::string>, long long>> df(kMaxN);
    for (const auto& item : eval_set.items) {
        std::vector<std::set<std::vector<std::string>>> seen(kMaxN);
        for (const auto& r : item.references) {
            const auto tokens = metric_tokenize(r);
            for (int n = 1; n <= kMaxN; ++n)
                for (const auto& [gram, count] : ngram_counts(tokens, n))
                    seen[static_cast<std::size_t>(n - 1)].insert(gram);
        }
        for (int n = 0; n < kMaxN; ++n)
            for (const auto& gram : seen[static_cast<std::size_t>(n)])
                ++df[static_cast<std::size_t>(n)][gram];
    }
    auto idf = [&](int n, const std::vector<std::string>& gram) {
        const auto it = df[static_cast<std::size_t>(n - 1)].find(gram);
        const double d = it == df[static_cast<std::size_t>(n - 1)].end()
                             ? 1.0
                             : std::max(1.0, static_cast<double>(it->second));
        return std::log(m_items / d);
    };

    double corpus_sum = 0.0;
    for (const auto& item : eval_set.items) {
        const auto cand = metric_tokenize(item.candidate);
        double item_score = 0.0;
        for (int n = 1; n <= kMaxN; ++n) {
            const NgramCounts cand_counts = ngram_counts(cand, n);
            std::map<std::vector<std::string>, double> cand_vec;
            double cand_norm_sq = 0.0;
            for (const auto& [gram, count] : cand_counts) {
                const double w = static_cast<double>(count) * idf(n, gram);
                cand_vec[gram] = w;
                cand_norm_sq += w * w;
            }
            double ref_avg = 0.0;
            for (const auto& r : item.references) {
                const auto ref_tokens = metric_tokenize(r);
                const NgramCounts ref_counts = ngram_counts(ref_tokens, n);
                double dot = 0.0, ref_norm_sq = 0.0;
                for (const auto& [gram, count] : ref_counts) {
                    const double w = static_cast<double>(count) * idf(n, gram);
                    ref_norm_sq += w * w;
                    const auto it = cand_vec.find(gram);
                    if (it != cand_vec.end()) {
                        double cw = it->second;
                        if (cider_d) cw = std::min(cw, w);
                        dot += cw * w;
                    }
                }
                double sim = 0.0;
                if (cand_norm_sq > 0.0 && ref_norm_sq > 0.0)
                    sim = dot / (std::sqrt(cand_norm_sq) * std::sqrt(ref_norm_sq));
                const double delta =
                    static_cast<double>(cand.size()) - static_cast<double>(ref_tokens.size());
                sim *= std::exp(-delta * delta / (2.0 * kLengthSigma * kLengthSigma));
                ref_avg += sim;
            }
            item_score += ref_avg / static_cast<double>(item.references.size());
        }
        corpus_sum += item_score / kMaxN;
    }
    return corpus_sum / m_items;
}

EvalSet read_eval_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    EvalSet set;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        EvalItem item;
        item.candidate = j.at("candidate").get<std::string>();
        item.references = j.at("references").get<std::vector<std::string>>();
        set.items.push_back(std::move(item));
    }
    return set;
}

}  // namespace maccap
