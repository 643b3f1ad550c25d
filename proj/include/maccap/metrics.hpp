#pragma once

#include <string>
#include <vector>

namespace maccap {

struct EvalItem {
    std::string candidate;
    std::vector<std::string> references;
};

struct EvalSet {
    std::vector<EvalItem> items;
};

// Scoring tokenization: lowercase, ASCII punctuation stripped, whitespace
// split.
std::vector<std::string> metric_tokenize(const std::string& text);

// Corpus-level BLEU: clipped modified n-gram precision, geometric mean over
// orders 1..max_n, brevity penalty with closest-reference effective length.
double bleu(const EvalSet& eval_set, int max_n);

// TF-IDF n-gram cosine (n = 1..4, averaged) with a Gaussian length penalty
// (sigma = 6). cider_d additionally clips candidate n-gram counts to the
// reference counts. The x10 reporting convention is not applied.
double cider(const EvalSet& eval_set, bool cider_d = false);

EvalSet read_eval_jsonl(const std::string& path);

}  // namespace maccap
