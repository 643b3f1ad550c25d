#include "maccap/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "json.hpp"

namespace maccap {

namespace {

int word_count(const std::string& line) {
    int count = 0;
    bool in_word = false;
    for (char c : line) {
        const bool space = c == ' ' || c == '\t';
        if (!space && !in_word) ++count;
        in_word = !space;
    }
    return count;
}

std::string normalize_line(std::string line) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    return line;
}

std::vector<Eigen::MatrixXd> flatten(const AdaptorParams& p) {
    std::vector<Eigen::MatrixXd> out;
    p.for_each_tensor([&out](const std::string&, const Eigen::MatrixXd& m) { out.push_back(m); });
    return out;
}

void assign(AdaptorParams& p, const std::vector<Eigen::MatrixXd>& tensors) {
    std::size_t i = 0;
    p.for_each_tensor([&](const std::string&, Eigen::MatrixXd& m) { m = tensors[i++]; });
}

}  // namespace

TextCorpus corpus_from_lines(const std::vector<std::string>& lines,
                             const ToyTokenizer& tokenizer, int max_words,
                             const std::string& tag) {
    TextCorpus corpus;
    corpus.source_tag = tag;
    for (const std::string& raw : lines) {
        std::string caption = normalize_line(raw);
        if (caption.empty()) continue;
        if (!caption.empty() && caption.front() == '{') {
            const auto j = nlohmann::json::parse(caption, nullptr, false);
            if (!j.is_discarded() && j.contains("caption"))
                caption = j["caption"].get<std::string>();
        }
        if (caption.empty()) continue;
        if (word_count(caption) > max_words) {
            ++corpus.dropped;
            continue;
        }
        std::vector<int> ids = tokenizer.encode(caption);
        corpus.captions.push_back(std::move(caption));
        corpus.tokenized.push_back(std::move(ids));
    }
    if (corpus.captions.empty())
        throw std::runtime_error("invalid corpus: no captions survive the word filter");
    return corpus;
}

TextCorpus load_corpus(const std::string& path, const ToyTokenizer& tokenizer, int max_words) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open corpus file " + path);
    std::vector<std::string> lines;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first) {
            if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
                static_cast<unsigned char>(line[1]) == 0xBB &&
                static_cast<unsigned char>(line[2]) == 0xBF)
                line.erase(0, 3);
            first = false;
        }
        lines.push_back(line);
    }
    return corpus_from_lines(lines, tokenizer, max_words, path);
}

std::vector<std::string> make_synthetic_captions(int n, std::uint64_t seed) {
    static const std::vector<std::string> kWords = {
        "a",    "the",  "dog",   "cat",  "bird",  "red",  "blue", "small",
        "big",  "runs", "sits",  "park", "house", "tree", "river", "car",
        "jumps", "old",  "young", "green"};
    if (n <= 0) throw std::invalid_argument("make_synthetic_captions: n must be > 0");
    Rng rng(splitmix64(seed ^ 0xCA97ULL));
    std::vector<std::string> captions;
    captions.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int len = 3 + static_cast<int>(rng.next_u64() % 6);
        std::string s;
        for (int w = 0; w < len; ++w) {
            if (w) s += ' ';
            s += kWords[rng.next_u64() % kWords.size()];
        }
        captions.push_back(std::move(s));
    }
    return captions;
}

double reconstruction_loss(const LanguageModel& lm, const PrefixEmbedding& prefix,
                           const std::vector<int>& target) {
    if (target.empty()) throw std::invalid_argument("reconstruction_loss: empty target");
    return -sequence_log_prob(lm, prefix.rows, target) / static_cast<double>(target.size());
}

TrainResult train(const TextCorpus& corpus, const TrainConfig& cfg, const Backbone& backbone,
                  const LanguageModel& lm, const AdaptorConfig& adaptor_cfg) {
    if (corpus.captions.empty()) throw std::invalid_argument("train: empty corpus");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (!(cfg.learning_rate > 0.0) && cfg.learning_rate != 0.0)
        throw std::invalid_argument("train: learning_rate must be >= 0");
    cfg.noise.validate();

    const auto t_start = std::chrono::steady_clock::now();
    const std::size_t n = corpus.captions.size();

    // Frozen-backbone embeddings are precomputable; the cache changes speed,
    // never values.
    std::vector<TextEmbedding> embeddings;
    auto embed = [&](std::size_t i) {
        return backbone.encode_text(
            tokenize_bytes(corpus.captions[i], backbone.spec().text_vocab));
    };
    if (cfg.embedding_cache) {
        embeddings.resize(n);
        for (std::size_t i = 0; i < n; ++i) embeddings[i] = embed(i);
    }

    // Targets: language-model token ids with eos appended.
    std::vector<std::vector<int>> targets = corpus.tokenized;
    for (auto& t : targets) t.push_back(lm.spec().eos);

    AdaptorParams params = AdaptorParams::init(adaptor_cfg, cfg.seed);
    std::vector<Eigen::MatrixXd> tensors = flatten(params);
    std::vector<Eigen::MatrixXd> adam_m, adam_v;
    for (const auto& t : tensors) {
        adam_m.push_back(Eigen::MatrixXd::Zero(t.rows(), t.cols()));
        adam_v.push_back(Eigen::MatrixXd::Zero(t.rows(), t.cols()));
    }
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    long long adam_t = 0;

    const std::uint64_t run_seed = splitmix64(cfg.seed ^ 0x7261696EULL);
    TrainReport report;
    report.corpus_kept = n;
    report.corpus_dropped = corpus.dropped;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Seeded per-epoch shuffle.
        Rng shuffle_rng(splitmix64(run_seed + static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = n; i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.next_u64() % i]);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
            const int count = static_cast<int>(end - start);

            std::vector<double> sample_losses(static_cast<std::size_t>(count), 0.0);
            std::vector<std::vector<Eigen::MatrixXd>> sample_grads(
                static_cast<std::size_t>(count));

#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(std::max(1, cfg.workers))
#endif
            for (int b = 0; b < count; ++b) {
                const std::size_t idx = order[start + static_cast<std::size_t>(b)];
                // Fresh noise per sample per epoch, keyed by (seed, epoch, idx)
                // so the draw does not depend on batch order or thread count.
                Rng noise_rng(splitmix64(run_seed ^
                                         (static_cast<std::uint64_t>(epoch) * 0x10001ULL +
                                          static_cast<std::uint64_t>(idx) * 0x7FED31ULL)));
                const TextEmbedding emb = cfg.embedding_cache ? embeddings[idx] : embed(idx);
                const RegionFeatureSequence region =
                    inject_region_noise(emb, cfg.noise, noise_rng);

                AdaptorCache cache;
                const PrefixEmbedding prefix = adaptor_forward(region, params, &cache);
                Eigen::MatrixXd dprefix;
                const std::vector<int>& target = targets[idx];
                const double logp =
                    lm.sequence_log_prob_with_grad(prefix.rows, target, &dprefix);
                const double inv_len = 1.0 / static_cast<double>(target.size());
                sample_losses[static_cast<std::size_t>(b)] = -logp * inv_len;
                dprefix *= -inv_len;
                sample_grads[static_cast<std::size_t>(b)] =
                    flatten(adaptor_backward(params, cache, dprefix, nullptr));
            }

            double batch_loss = 0.0;
            for (double l : sample_losses) batch_loss += l;
            batch_loss /= count;
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch));
            epoch_loss += batch_loss * count;

            // Order-stable gradient average, then one Adam step.
            std::vector<Eigen::MatrixXd> grad = sample_grads[0];
            for (int b = 1; b < count; ++b)
                for (std::size_t t = 0; t < grad.size(); ++t)
                    grad[t] += sample_grads[static_cast<std::size_t>(b)][t];
            for (auto& g : grad) g /= static_cast<double>(count);

            ++adam_t;
            const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(adam_t));
            const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(adam_t));
            for (std::size_t t = 0; t < tensors.size(); ++t) {
                adam_m[t] = kBeta1 * adam_m[t] + (1.0 - kBeta1) * grad[t];
                adam_v[t] = kBeta2 * adam_v[t].array() +
                            (1.0 - kBeta2) * grad[t].array().square();
                const Eigen::ArrayXXd m_hat = adam_m[t].array() / bc1;
                const Eigen::ArrayXXd v_hat = adam_v[t].array() / bc2;
                tensors[t].array() -= cfg.learning_rate * m_hat / (v_hat.sqrt() + kEps);
            }
            assign(params, tensors);
        }
        report.epoch_losses.push_back(epoch_loss / static_cast<double>(n));
    }

    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return TrainResult{std::move(params), std::move(report)};
}

void write_train_report_json(const TrainReport& report, const TrainConfig& cfg,
                             const std::string& path) {
    nlohmann::json j;
    j["losses"] = report.epoch_losses;
    j["wall_seconds"] = report.wall_seconds;
    j["checkpoint"] = report.checkpoint_path;
    j["config"] = {
        {"batch_size", cfg.batch_size},
        {"learning_rate", cfg.learning_rate},
        {"epochs", cfg.epochs},
        {"sigma", cfg.noise.sigma},
        {"n_cr", cfg.noise.n_cr},
        {"distribution",
         cfg.noise.distribution == NoiseDistribution::gaussian ? "gaussian" : "uniform"},
        {"seed", cfg.seed},
        {"embedding_cache", cfg.embedding_cache},
        {"workers", cfg.workers},
    };
    j["corpus_stats"] = {{"kept", report.corpus_kept}, {"dropped", report.corpus_dropped}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << j.dump(2) << "\n";
}

}  // namespace maccap
