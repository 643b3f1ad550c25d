#include "maccap/vqa.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "maccap/nn.hpp"

namespace maccap {

std::string build_prompt(const std::string& caption, const std::string& question) {
    if (caption.empty() || question.empty())
        throw std::invalid_argument("build_prompt: caption and question must be non-empty");
    return caption + " Question: " + question + " Answer:";
}

std::string answer_open_ended(const std::string& prompt, const LanguageModel& lm,
                              const ToyTokenizer& tokenizer, int max_len) {
    const std::vector<int> context = tokenizer.encode(prompt);
    const Eigen::MatrixXd empty_prefix(0, lm.spec().d_l);
    std::vector<int> generated;
    for (int step = 0; step < max_len; ++step) {
        std::vector<int> conditioned = context;
        conditioned.insert(conditioned.end(), generated.begin(), generated.end());
        const Eigen::VectorXd logits = lm.next_token_logits(empty_prefix, conditioned);
        Eigen::Index best = 0;
        logits.maxCoeff(&best);
        const int token = static_cast<int>(best);
        if (token == lm.spec().eos || token == '\n') break;
        generated.push_back(token);
    }
    return tokenizer.decode(generated);
}

CandidateIndex::CandidateIndex(const std::vector<std::string>& candidates,
                               const Backbone& encoder)
    : candidates_(candidates) {
    if (candidates_.empty())
        throw std::invalid_argument("CandidateIndex: empty candidate list");
    embeddings_.resize(static_cast<Eigen::Index>(candidates_.size()), encoder.spec().d);
    for (std::size_t i = 0; i < candidates_.size(); ++i) {
        const TextEmbedding emb = encoder.encode_text(
            tokenize_bytes(candidates_[i], encoder.spec().text_vocab));
        embeddings_.row(static_cast<Eigen::Index>(i)) = emb.vec.transpose();
    }
}

std::vector<std::pair<std::string, double>> CandidateIndex::rank(
    const std::string& generated, const Backbone& encoder) const {
    if (generated.empty())
        throw std::runtime_error("retrieve_answer: no answer generated");
    const TextEmbedding gen =
        encoder.encode_text(tokenize_bytes(generated, encoder.spec().text_vocab));
    std::vector<std::size_t> order(candidates_.size());
    std::vector<double> sims(candidates_.size());
    for (std::size_t i = 0; i < candidates_.size(); ++i) {
        order[i] = i;
        sims[i] = cosine_similarity(gen.vec,
                                    embeddings_.row(static_cast<Eigen::Index>(i)).transpose());
    }
    std::stable_sort(order.begin(), order.end(), [&sims](std::size_t a, std::size_t b) {
        if (sims[a] != sims[b]) return sims[a] > sims[b];
        return a < b;
    });
    std::vector<std::pair<std::string, double>> ranked;
    ranked.reserve(order.size());
    for (std::size_t i : order) ranked.emplace_back(candidates_[i], sims[i]);
    return ranked;
}

std::vector<std::pair<std::string, double>> retrieve_answer(
    const std::string& generated, const std::vector<std::string>& candidates,
    const Backbone& encoder) {
    return CandidateIndex(candidates, encoder).rank(generated, encoder);
}

double topk_accuracy(const std::vector<VqaResult>& results,
                     const std::vector<std::string>& ground_truths, int k) {
    if (k <= 0) throw std::invalid_argument("topk_accuracy: k must be > 0");
    if (results.size() != ground_truths.size())
        throw std::invalid_argument("topk_accuracy: result/ground-truth length mismatch");
    if (results.empty()) throw std::invalid_argument("topk_accuracy: empty result list");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (results[i].no_answer) continue;
        const auto& ranked = results[i].ranked_candidates;
        const std::size_t limit = std::min<std::size_t>(ranked.size(),
                                                        static_cast<std::size_t>(k));
        for (std::size_t r = 0; r < limit; ++r) {
            if (ranked[r].first == ground_truths[i]) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(results.size());
}

std::vector<VqaItem> read_vqa_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<VqaItem> items;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        VqaItem item;
        item.image_path = j.value("image_path", "");
        item.question = j.at("question").get<std::string>();
        item.ground_truth = j.value("answer", "");
        item.question_id = j.value("question_id", 0LL);
        items.push_back(std::move(item));
    }
    return items;
}

std::vector<std::string> read_candidate_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::string> candidates;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (!line.empty()) candidates.push_back(line);
    }
    if (candidates.empty()) throw std::runtime_error("empty candidate list in " + path);
    return candidates;
}

void write_vqa_report_json(const std::string& path, double top1, double top5, double top10,
                           std::size_t n_items) {
    nlohmann::json j = {{"top1", top1}, {"top5", top5}, {"top10", top10}, {"n_items", n_items}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << j.dump(2) << "\n";
}

}  // namespace maccap
