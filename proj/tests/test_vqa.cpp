#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "maccap/rng.hpp"
#include "maccap/vqa.hpp"
#include "test_util.hpp"

using namespace maccap;

namespace {

BackboneSpec small_spec() {
    BackboneSpec spec;
    spec.d = 8;
    spec.d_v = 8;
    spec.n_p = 4;
    return spec;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out.good());
    out << content;
}

}  // namespace

TEST_CASE("prompt template is byte exact") {
    CHECK(build_prompt("a dog runs", "what animal is this?") ==
          "a dog runs Question: what animal is this? Answer:");
    // Unicode and punctuation pass through untouched.
    CHECK(build_prompt("caf\xC3\xA9 scene", "où?") ==
          "caf\xC3\xA9 scene Question: où? Answer:");
    CHECK_THROWS_AS(build_prompt("", "q"), std::invalid_argument);
    CHECK_THROWS_AS(build_prompt("c", ""), std::invalid_argument);
}

TEST_CASE("open-ended answering follows the greedy path and stops at newline/eos") {
    // Model that always prefers a fixed token, then check the greedy loop.
    LanguageModelSpec spec;
    spec.d_l = 4;
    Eigen::VectorXd logits = Eigen::VectorXd::Zero(256);
    logits['y'] = 5.0;
    const testing::FixedLogitsLm lm(spec, logits);
    ToyTokenizer tok(spec);
    CHECK(answer_open_ended("prompt", lm, tok, 3) == "yyy");
    CHECK(answer_open_ended("prompt", lm, tok, 1) == "y");

    Eigen::VectorXd stop = Eigen::VectorXd::Zero(256);
    stop[spec.eos] = 5.0;
    const testing::FixedLogitsLm eos_lm(spec, stop);
    CHECK(answer_open_ended("prompt", eos_lm, tok, 8).empty());

    Eigen::VectorXd nl = Eigen::VectorXd::Zero(256);
    nl['\n'] = 5.0;
    const testing::FixedLogitsLm nl_lm(spec, nl);
    CHECK(answer_open_ended("prompt", nl_lm, tok, 8).empty());
}

TEST_CASE("greedy answers from the toy model are deterministic") {
    LanguageModelSpec spec;
    spec.d_l = 8;
    ToyLanguageModel lm(spec, 77, 1, 2);
    ToyTokenizer tok(spec);
    const std::string prompt = build_prompt("a red car", "what color is the car?");
    const std::string a = answer_open_ended(prompt, lm, tok, 6);
    const std::string b = answer_open_ended(prompt, lm, tok, 6);
    CHECK(a == b);
    // The prompt conditions the decode: a different prompt may differ, and
    // the answer must never echo prompt control bytes.
    CHECK(a.size() <= 6);
}

TEST_CASE("retrieval ranks a candidate identical to the answer first") {
    ToyBackbone backbone(small_spec(), 5);
    const std::vector<std::string> candidates{"blue", "red", "green", "yellow"};
    const auto ranked = retrieve_answer("green", candidates, backbone);
    REQUIRE(ranked.size() == candidates.size());
    CHECK(ranked[0].first == "green");
    CHECK(ranked[0].second == doctest::Approx(1.0).epsilon(1e-12));
    // Descending similarity.
    for (std::size_t i = 1; i < ranked.size(); ++i)
        CHECK(ranked[i - 1].second >= ranked[i].second);
}

TEST_CASE("retrieval matches a brute-force cosine ranking") {
    ToyBackbone backbone(small_spec(), 6);
    const std::vector<std::string> candidates{"cat", "dog", "bird", "fish", "horse"};
    const CandidateIndex index(candidates, backbone);
    const auto ranked = index.rank("a small dog", backbone);

    const TextEmbedding gen = backbone.encode_text(tokenize_bytes("a small dog", 256));
    std::vector<std::pair<double, std::string>> want;
    for (const std::string& c : candidates) {
        const TextEmbedding emb = backbone.encode_text(tokenize_bytes(c, 256));
        want.emplace_back(cosine_similarity(gen.vec, emb.vec), c);
    }
    std::stable_sort(want.begin(), want.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    REQUIRE(ranked.size() == want.size());
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        CHECK(ranked[i].first == want[i].second);
        CHECK(ranked[i].second == doctest::Approx(want[i].first).epsilon(1e-12));
    }
}

TEST_CASE("duplicate candidates tie and keep the earlier index first") {
    ToyBackbone backbone(small_spec(), 7);
    const std::vector<std::string> candidates{"zebra", "apple", "apple", "zebra"};
    const auto ranked = retrieve_answer("apple", candidates, backbone);
    REQUIRE(ranked.size() == 4);
    CHECK(ranked[0].first == "apple");
    CHECK(ranked[1].first == "apple");
    CHECK(ranked[0].second == ranked[1].second);
    CHECK(ranked[2].first == "zebra");
    CHECK(ranked[3].first == "zebra");
}

TEST_CASE("empty generated answers raise the no-answer error") {
    ToyBackbone backbone(small_spec(), 8);
    CHECK_THROWS_WITH_AS(retrieve_answer("", {"a", "b"}, backbone),
                         doctest::Contains("no answer generated"), std::runtime_error);
    CHECK_THROWS_AS(CandidateIndex({}, backbone), std::invalid_argument);
}

TEST_CASE("top-k accuracy counts hits, monotonically in k") {
    auto make_result = [](std::vector<std::string> order) {
        VqaResult r;
        for (std::size_t i = 0; i < order.size(); ++i)
            r.ranked_candidates.emplace_back(order[i], 1.0 - 0.1 * static_cast<double>(i));
        return r;
    };
    std::vector<VqaResult> results;
    results.push_back(make_result({"red", "blue", "green"}));   // truth red: hit@1
    results.push_back(make_result({"blue", "red", "green"}));   // truth red: hit@2
    results.push_back(make_result({"blue", "green", "red"}));   // truth red: hit@3
    results.push_back(make_result({"blue", "green", "gray"}));  // truth red: miss
    VqaResult skipped = make_result({"red"});
    skipped.no_answer = true;
    results.push_back(skipped);  // no_answer: always a miss

    const std::vector<std::string> truths(5, "red");
    CHECK(topk_accuracy(results, truths, 1) == doctest::Approx(1.0 / 5.0));
    CHECK(topk_accuracy(results, truths, 2) == doctest::Approx(2.0 / 5.0));
    CHECK(topk_accuracy(results, truths, 3) == doctest::Approx(3.0 / 5.0));
    CHECK(topk_accuracy(results, truths, 100) == doctest::Approx(3.0 / 5.0));

    // Monotone in k by construction.
    double prev = 0.0;
    for (int k = 1; k <= 5; ++k) {
        const double acc = topk_accuracy(results, truths, k);
        CHECK(acc >= prev);
        prev = acc;
    }

    CHECK_THROWS_AS(topk_accuracy(results, truths, 0), std::invalid_argument);
    CHECK_THROWS_AS(topk_accuracy(results, {"red"}, 1), std::invalid_argument);
    CHECK_THROWS_AS(topk_accuracy({}, {}, 1), std::invalid_argument);
}

TEST_CASE("question files and candidate lists round-trip from disk") {
    write_file("vqa_items.jsonl",
               "{\"image_path\": \"img0.txt\", \"question\": \"what is shown?\", "
               "\"answer\": \"a tree\", \"question_id\": 42}\n"
               "\n"
               "{\"question\": \"minimal item?\"}\n");
    const std::vector<VqaItem> items = read_vqa_jsonl("vqa_items.jsonl");
    REQUIRE(items.size() == 2);
    CHECK(items[0].image_path == "img0.txt");
    CHECK(items[0].question == "what is shown?");
    CHECK(items[0].ground_truth == "a tree");
    CHECK(items[0].question_id == 42);
    CHECK(items[1].question == "minimal item?");
    CHECK(items[1].ground_truth.empty());
    std::remove("vqa_items.jsonl");

    write_file("cands.txt", "yes\r\nno\n\nmaybe\n");
    const std::vector<std::string> cands = read_candidate_lines("cands.txt");
    CHECK(cands == std::vector<std::string>{"yes", "no", "maybe"});
    std::remove("cands.txt");

    CHECK_THROWS_AS(read_vqa_jsonl("missing.jsonl"), std::runtime_error);
    CHECK_THROWS_AS(read_candidate_lines("missing.txt"), std::runtime_error);
    write_file("empty.txt", "\n\n");
    CHECK_THROWS_AS(read_candidate_lines("empty.txt"), std::runtime_error);
    std::remove("empty.txt");
}

TEST_CASE("vqa report file carries the accuracy fields") {
    write_vqa_report_json("vqa_report.json", 0.25, 0.5, 0.75, 4);
    std::ifstream in("vqa_report.json");
    REQUIRE(in.good());
    std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(body.find("\"top1\": 0.25") != std::string::npos);
    CHECK(body.find("\"top5\": 0.5") != std::string::npos);
    CHECK(body.find("\"top10\": 0.75") != std::string::npos);
    CHECK(body.find("\"n_items\": 4") != std::string::npos);
    std::remove("vqa_report.json");
}
