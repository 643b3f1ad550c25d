#pragma once

#include <map>
#include <string>
#include <vector>

#include "maccap/backbone.hpp"
#include "maccap/langmodel.hpp"

namespace maccap {

struct VqaItem {
    std::string image_path;
    std::string question;
    std::string ground_truth;
    long long question_id = 0;
};

struct VqaResult {
    std::string generated_answer;
    std::vector<std::pair<std::string, double>> ranked_candidates;  // similarity desc
    std::map<int, bool> topk_hits;
    bool no_answer = false;
};

// Exact template: "<caption> Question: <question> Answer:".
std::string build_prompt(const std::string& caption, const std::string& question);

// Greedy continuation of the prompt, stripped at the first newline or eos.
std::string answer_open_ended(const std::string& prompt, const LanguageModel& lm,
                              const ToyTokenizer& tokenizer, int max_len);

// Candidate-set embeddings computed once and reused across items.
class CandidateIndex {
public:
    CandidateIndex(const std::vector<std::string>& candidates, const Backbone& encoder);
    const std::vector<std::string>& candidates() const { return candidates_; }

    // Ranks candidates by cosine similarity to the generated answer,
    // descending, ties by candidate index. Throws on empty generated text.
    std::vector<std::pair<std::string, double>> rank(const std::string& generated,
                                                     const Backbone& encoder) const;

private:
    std::vector<std::string> candidates_;
    Eigen::MatrixXd embeddings_;  // one unit row per candidate
};

std::vector<std::pair<std::string, double>> retrieve_answer(
    const std::string& generated, const std::vector<std::string>& candidates,
    const Backbone& encoder);

// Fraction of results whose ground truth appears among the top-k ranked
// candidates. Results flagged no_answer always miss.
double topk_accuracy(const std::vector<VqaResult>& results,
                     const std::vector<std::string>& ground_truths, int k);

std::vector<VqaItem> read_vqa_jsonl(const std::string& path);
std::vector<std::string> read_candidate_lines(const std::string& path);
void write_vqa_report_json(const std::string& path, double top1, double top5, double top10,
                           std::size_t n_items);

}  // namespace maccap
