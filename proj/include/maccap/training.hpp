#pragma once

#include <string>
#include <vector>

#include "maccap/adaptor.hpp"
#include "maccap/backbone.hpp"
#include "maccap/checkpoint.hpp"
#include "maccap/langmodel.hpp"

namespace maccap {

struct TextCorpus {
    std::vector<std::string> captions;
    std::vector<std::vector<int>> tokenized;  // language-model token ids, eos appended
    std::string source_tag;
    std::size_t dropped = 0;  // over-length lines removed by the word filter
};

// Reads plain-text lines or JSON-lines with a "caption" field (auto-detected).
// BOM tolerated, CRLF normalized. Captions with more than max_words
// whitespace-delimited words are dropped.
TextCorpus load_corpus(const std::string& path, const ToyTokenizer& tokenizer,
                       int max_words = 15);
TextCorpus corpus_from_lines(const std::vector<std::string>& lines,
                             const ToyTokenizer& tokenizer, int max_words = 15,
                             const std::string& tag = "memory");

// Seeded caption generator for offline runs: short sentences over a small
// word list.
std::vector<std::string> make_synthetic_captions(int n, std::uint64_t seed);

struct TrainConfig {
    int batch_size = 128;
    double learning_rate = 4e-4;
    int epochs = 10;
    NoiseConfig noise;  // sigma 0.016, n_cr 10
    std::uint64_t seed = 0;
    bool embedding_cache = true;
    int workers = 1;
};

struct TrainReport {
    std::vector<double> epoch_losses;
    double wall_seconds = 0.0;
    std::string checkpoint_path;
    std::size_t corpus_kept = 0;
    std::size_t corpus_dropped = 0;
};

// Eq-style per-token reconstruction loss: -(1/|target|) * sum log P.
double reconstruction_loss(const LanguageModel& lm, const PrefixEmbedding& prefix,
                           const std::vector<int>& target);

struct TrainResult {
    AdaptorParams params;
    TrainReport report;
};

// Text reconstruction training. Backbone and language model stay frozen;
// only the adaptor parameters move. Deterministic given cfg.seed when
// workers == 1; with workers > 1 batch assignment is static so results
// remain run-to-run stable on a fixed thread count.
TrainResult train(const TextCorpus& corpus, const TrainConfig& cfg,
                  const Backbone& backbone, const LanguageModel& lm,
                  const AdaptorConfig& adaptor_cfg);

void write_train_report_json(const TrainReport& report, const TrainConfig& cfg,
                             const std::string& path);

}  // namespace maccap
