#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <random>
#include <vector>

#include "json.hpp"
#include "maccap/langmodel.hpp"
#include "maccap/rng.hpp"
#include "test_util.hpp"

using namespace maccap;

namespace {

// Independent re-derivation of the documented draw rule. Kept free of any
// library code so oracle values cannot inherit a library bug.
struct OracleRng {
    std::mt19937_64 eng;
    explicit OracleRng(std::uint64_t seed) : eng(seed) {}
    double uniform01() { return static_cast<double>(eng() >> 11) * 0x1.0p-53; }
    double gaussian() {
        double u1 = uniform01();
        while (u1 == 0.0) u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }
};

std::uint64_t oracle_splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

Eigen::MatrixXd draw_matrix(OracleRng& rng, int rows, int cols, double scale) {
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = rng.gaussian() * scale;
    return m;
}

Eigen::MatrixXd oracle_layer_norm(const Eigen::MatrixXd& x) {
    Eigen::MatrixXd out(x.rows(), x.cols());
    const double n = static_cast<double>(x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mean = x.row(r).sum() / n;
        double var = 0.0;
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            const double d = x(r, c) - mean;
            var += d * d;
        }
        var /= n;
        const double inv = 1.0 / std::sqrt(var + 1e-8);
        for (Eigen::Index c = 0; c < x.cols(); ++c) out(r, c) = (x(r, c) - mean) * inv;
    }
    return out;
}

Eigen::MatrixXd oracle_causal_attention(const Eigen::MatrixXd& x,
                                        const Eigen::MatrixXd& wq, const Eigen::MatrixXd& wk,
                                        const Eigen::MatrixXd& wv, const Eigen::MatrixXd& wo,
                                        int n_heads) {
    const Eigen::Index len = x.rows();
    const Eigen::Index d = wq.cols();
    const Eigen::Index dh = d / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const Eigen::MatrixXd q = x * wq, k = x * wk, v = x * wv;
    Eigen::MatrixXd concat(len, d);
    for (int h = 0; h < n_heads; ++h) {
        for (Eigen::Index r = 0; r < len; ++r) {
            // softmax over keys 0..r only (causal)
            std::vector<double> s(static_cast<std::size_t>(r) + 1);
            double mx = -1e300;
            for (Eigen::Index c = 0; c <= r; ++c) {
                double dot = 0.0;
                for (Eigen::Index j = 0; j < dh; ++j)
                    dot += q(r, h * dh + j) * k(c, h * dh + j);
                s[static_cast<std::size_t>(c)] = dot * scale;
                mx = std::max(mx, s[static_cast<std::size_t>(c)]);
            }
            double denom = 0.0;
            for (double& sv : s) {
                sv = std::exp(sv - mx);
                denom += sv;
            }
            for (Eigen::Index j = 0; j < dh; ++j) {
                double acc = 0.0;
                for (Eigen::Index c = 0; c <= r; ++c)
                    acc += s[static_cast<std::size_t>(c)] / denom * v(c, h * dh + j);
                concat(r, h * dh + j) = acc;
            }
        }
    }
    return concat * wo;
}

double oracle_gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

// Full straight-line replica of ToyLanguageModel(seed, 1 block) next-token
// logits for a given prefix and generated tokens.
Eigen::VectorXd oracle_toy_logits(const LanguageModelSpec& spec, std::uint64_t seed,
                                  int n_heads, const Eigen::MatrixXd& prefix,
                                  const std::vector<int>& generated) {
    OracleRng rng(oracle_splitmix64(seed ^ 0x4C4DULL));
    const int d = spec.d_l;
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    const Eigen::MatrixXd token_emb = draw_matrix(rng, spec.vocab_size, d, 1.0);
    const Eigen::MatrixXd pos_emb = draw_matrix(rng, 512, d, 0.1);
    const Eigen::MatrixXd wq = draw_matrix(rng, d, d, sd);
    const Eigen::MatrixXd wk = draw_matrix(rng, d, d, sd);
    const Eigen::MatrixXd wv = draw_matrix(rng, d, d, sd);
    const Eigen::MatrixXd wo = draw_matrix(rng, d, d, sd);
    const Eigen::MatrixXd w1 = draw_matrix(rng, d, 2 * d, sd);
    const Eigen::MatrixXd w2 = draw_matrix(rng, 2 * d, d, 1.0 / std::sqrt(2.0 * d));
    const Eigen::MatrixXd wh = draw_matrix(rng, d, spec.vocab_size, sd);

    std::vector<int> tokens{spec.bos};
    tokens.insert(tokens.end(), generated.begin(), generated.end());
    const Eigen::Index np = prefix.rows();
    Eigen::MatrixXd x(np + static_cast<Eigen::Index>(tokens.size()), d);
    for (Eigen::Index r = 0; r < np; ++r) x.row(r) = prefix.row(r) + pos_emb.row(r);
    for (std::size_t i = 0; i < tokens.size(); ++i)
        x.row(np + static_cast<Eigen::Index>(i)) =
            token_emb.row(tokens[i]) + pos_emb.row(np + static_cast<Eigen::Index>(i));

    x += oracle_causal_attention(oracle_layer_norm(x), wq, wk, wv, wo, n_heads);
    Eigen::MatrixXd pre = oracle_layer_norm(x) * w1;
    x += pre.unaryExpr([](double v) { return oracle_gelu(v); }) * w2;

    const Eigen::MatrixXd last = oracle_layer_norm(x.bottomRows(1));
    return (last * wh).row(0).transpose();
}

LanguageModelSpec tiny_spec() {
    LanguageModelSpec spec;
    spec.d_l = 4;
    spec.vocab_size = 6;
    spec.bos = 4;
    spec.eos = 5;
    spec.max_gen_len = 8;
    return spec;
}

Eigen::MatrixXd tiny_prefix() {
    Eigen::MatrixXd prefix(2, 4);
    prefix << 0.3, -1.1, 0.7, 0.05,
              -0.4, 0.9, -0.2, 1.3;
    return prefix;
}

double greedy_best(const Eigen::VectorXd& logp, int& arg) {
    arg = 0;
    for (int t = 1; t < logp.size(); ++t)
        if (logp[t] > logp[arg]) arg = t;  // first max = lexicographically smallest
    return logp[arg];
}

// Enumerates every hypothesis a width-unbounded beam search could reach and
// scores it by teacher forcing, keeping beam_search's tie ordering.
TokenSequence exhaustive_best(const LanguageModel& lm, const Eigen::MatrixXd& prefix,
                              int max_len, const std::vector<int>& context) {
    const int vocab = lm.spec().vocab_size;
    const int eos = lm.spec().eos;
    std::vector<int> best_ids;
    double best_score = -1e300;
    bool have = false;
    auto consider = [&](const std::vector<int>& ids, double score) {
        if (!have || score > best_score || (score == best_score && ids < best_ids)) {
            best_ids = ids;
            best_score = score;
            have = true;
        }
    };
    // Depth-first over generated ids; each node's score is the running sum of
    // per-step log-probabilities given `context` + ids so far.
    std::function<void(std::vector<int>&, double, int)> walk =
        [&](std::vector<int>& ids, double score, int steps) {
            std::vector<int> conditioned = context;
            conditioned.insert(conditioned.end(), ids.begin(), ids.end());
            const Eigen::VectorXd logp =
                nn::log_softmax(lm.next_token_logits(prefix, conditioned));
            for (int t = 0; t < vocab; ++t) {
                const double s = score + logp[t];
                if (t == eos) {
                    consider(ids, s);
                } else if (steps + 1 == max_len) {
                    ids.push_back(t);
                    consider(ids, s);
                    ids.pop_back();
                } else {
                    ids.push_back(t);
                    walk(ids, s, steps + 1);
                    ids.pop_back();
                }
            }
        };
    std::vector<int> ids;
    walk(ids, 0.0, 0);
    return TokenSequence{best_ids, ""};
}

}  // namespace

TEST_CASE("toy language model matches the straight-line oracle") {
    const LanguageModelSpec spec = tiny_spec();
    for (std::uint64_t seed : {3ULL, 17ULL, 912ULL}) {
        ToyLanguageModel lm(spec, seed, /*n_blocks=*/1, /*n_heads=*/2);
        const Eigen::MatrixXd prefix = tiny_prefix();
        for (const std::vector<int>& gen :
             {std::vector<int>{}, std::vector<int>{2}, std::vector<int>{0, 3, 1}}) {
            const Eigen::VectorXd got = lm.next_token_logits(prefix, gen);
            const Eigen::VectorXd want = oracle_toy_logits(spec, seed, 2, prefix, gen);
            REQUIRE(got.size() == want.size());
            for (int t = 0; t < got.size(); ++t)
                CHECK(got[t] == doctest::Approx(want[t]).epsilon(1e-10));
        }
        // And with an empty prefix.
        const Eigen::MatrixXd empty(0, spec.d_l);
        const Eigen::VectorXd got = lm.next_token_logits(empty, {1});
        const Eigen::VectorXd want = oracle_toy_logits(spec, seed, 2, empty, {1});
        for (int t = 0; t < got.size(); ++t)
            CHECK(got[t] == doctest::Approx(want[t]).epsilon(1e-10));
    }
}

TEST_CASE("toy language model is deterministic and seed-sensitive") {
    const LanguageModelSpec spec = tiny_spec();
    ToyLanguageModel a(spec, 7, 2, 2), b(spec, 7, 2, 2), c(spec, 8, 2, 2);
    const Eigen::MatrixXd prefix = tiny_prefix();
    const Eigen::VectorXd la = a.next_token_logits(prefix, {1, 2});
    const Eigen::VectorXd lb = b.next_token_logits(prefix, {1, 2});
    const Eigen::VectorXd lc = c.next_token_logits(prefix, {1, 2});
    CHECK((la - lb).cwiseAbs().maxCoeff() == 0.0);
    CHECK((la - lc).cwiseAbs().maxCoeff() > 0.0);
    CHECK(la.allFinite());
    CHECK(a.weight_checksum() == b.weight_checksum());
    CHECK(a.weight_checksum() != c.weight_checksum());
    // Frozen model: checksum unchanged by use.
    const std::uint64_t before = a.weight_checksum();
    (void)a.next_token_logits(prefix, {0, 0, 3});
    (void)sequence_log_prob(a, prefix, {1, 2, 5});
    CHECK(a.weight_checksum() == before);
}

TEST_CASE("toy language model validates its inputs") {
    LanguageModelSpec spec = tiny_spec();
    CHECK_THROWS_AS(ToyLanguageModel(spec, 1, 0, 2), std::invalid_argument);
    CHECK_THROWS_AS(ToyLanguageModel(spec, 1, 1, 3), std::invalid_argument);  // 3 does not divide 4
    ToyLanguageModel lm(spec, 1, 1, 2);
    CHECK_THROWS_AS(lm.next_token_logits(tiny_prefix(), {6}), std::invalid_argument);
    CHECK_THROWS_AS(lm.next_token_logits(tiny_prefix(), {-1}), std::invalid_argument);
    CHECK_THROWS_AS(lm.next_token_logits(Eigen::MatrixXd::Zero(1, 3), {}), std::invalid_argument);
    CHECK_THROWS_AS(sequence_log_prob(lm, tiny_prefix(), {}), std::invalid_argument);

    LanguageModelSpec bad = spec;
    bad.bos = bad.eos;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = spec;
    bad.vocab_size = 1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("sequence log-prob on a uniform model is length * ln(1/V)") {
    const int vocab = 11;
    const testing::FixedLogitsLm lm = testing::uniform_lm(vocab);
    const Eigen::MatrixXd prefix = Eigen::MatrixXd::Zero(2, 4);
    for (std::size_t len : {1u, 3u, 7u}) {
        const std::vector<int> target(len, 5);
        const double got = sequence_log_prob(lm, prefix, target);
        CHECK(got == doctest::Approx(static_cast<double>(len) * std::log(1.0 / vocab))
                         .epsilon(1e-12));
    }
}

TEST_CASE("sequence log-prob of a near-certain model is near zero") {
    LanguageModelSpec spec;
    spec.vocab_size = 8;
    spec.bos = 0;
    spec.eos = 1;
    spec.d_l = 4;
    Eigen::VectorXd logits = Eigen::VectorXd::Zero(8);
    logits[3] = 50.0;
    const testing::FixedLogitsLm lm(spec, logits);
    const double got = sequence_log_prob(lm, Eigen::MatrixXd::Zero(0, 4), {3, 3, 3});
    CHECK(got <= 0.0);
    CHECK(got > -1e-15);
}

TEST_CASE("next-token distribution is normalized and consistent with sequence scoring") {
    const LanguageModelSpec spec = tiny_spec();
    ToyLanguageModel lm(spec, 21, 2, 2);
    const Eigen::MatrixXd prefix = tiny_prefix();

    // Normalization of each step's distribution.
    double mass = 0.0;
    const Eigen::VectorXd logp = nn::log_softmax(lm.next_token_logits(prefix, {2, 0}));
    for (int t = 0; t < spec.vocab_size; ++t) mass += std::exp(logp[t]);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));

    // Chain rule: full-sequence score equals the sum of stepwise scores.
    const std::vector<int> target{2, 0, 3, 5};
    double stepwise = 0.0;
    std::vector<int> seen;
    for (int t : target) {
        const Eigen::VectorXd lp = nn::log_softmax(lm.next_token_logits(prefix, seen));
        stepwise += lp[t];
        seen.push_back(t);
    }
    CHECK(sequence_log_prob(lm, prefix, target) ==
          doctest::Approx(stepwise).epsilon(1e-10));

    // Length-1 continuations form a probability distribution under the
    // sequence scorer too.
    double mass1 = 0.0;
    for (int t = 0; t < spec.vocab_size; ++t)
        mass1 += std::exp(sequence_log_prob(lm, prefix, {t}));
    CHECK(mass1 == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("prefix gradient matches central finite differences") {
    const LanguageModelSpec spec = tiny_spec();
    ToyLanguageModel lm(spec, 5, 1, 2);
    Eigen::MatrixXd prefix = tiny_prefix();
    const std::vector<int> target{2, 0, 5};

    Eigen::MatrixXd grad;
    const double base = lm.sequence_log_prob_with_grad(prefix, target, &grad);
    CHECK(std::isfinite(base));
    REQUIRE(grad.rows() == prefix.rows());
    REQUIRE(grad.cols() == prefix.cols());

    const double eps = 1e-5;
    double max_rel = 0.0;
    for (Eigen::Index r = 0; r < prefix.rows(); ++r) {
        for (Eigen::Index c = 0; c < prefix.cols(); ++c) {
            Eigen::MatrixXd p = prefix;
            p(r, c) += eps;
            const double up = sequence_log_prob(lm, p, target);
            p(r, c) -= 2 * eps;
            const double down = sequence_log_prob(lm, p, target);
            const double fd = (up - down) / (2 * eps);
            const double rel = std::abs(fd - grad(r, c)) /
                               std::max(1e-8, std::max(std::abs(fd), std::abs(grad(r, c))));
            max_rel = std::max(max_rel, rel);
        }
    }
    CHECK(max_rel < 1e-4);
}

TEST_CASE("beam search with one beam reduces to greedy decoding") {
    const LanguageModelSpec spec = tiny_spec();
    for (std::uint64_t seed : {4ULL, 44ULL, 444ULL}) {
        ToyLanguageModel lm(spec, seed, 1, 2);
        const Eigen::MatrixXd prefix = tiny_prefix();
        BeamSearchConfig cfg;
        cfg.n_beams = 1;
        cfg.max_len = 6;
        const TokenSequence got = beam_search(lm, prefix, cfg);

        std::vector<int> greedy;
        for (int step = 0; step < cfg.max_len; ++step) {
            const Eigen::VectorXd lp = nn::log_softmax(lm.next_token_logits(prefix, greedy));
            int arg;
            greedy_best(lp, arg);
            if (arg == spec.eos) break;
            greedy.push_back(arg);
        }
        CHECK(got.ids == greedy);
    }
}

TEST_CASE("wide beam search matches exhaustive enumeration") {
    const LanguageModelSpec spec = tiny_spec();
    BeamSearchConfig cfg;
    cfg.max_len = 3;
    // vocab 6, 3 steps: pool never exceeds 5^2 * 6 open expansions, so this
    // width makes the beam exhaustive.
    cfg.n_beams = 200;
    for (std::uint64_t seed : {1ULL, 2ULL, 9ULL, 33ULL, 71ULL}) {
        ToyLanguageModel lm(spec, seed, 1, 2);
        const Eigen::MatrixXd prefix = tiny_prefix();
        const TokenSequence got = beam_search(lm, prefix, cfg);
        const TokenSequence want = exhaustive_best(lm, prefix, cfg.max_len, {});
        CHECK(got.ids == want.ids);

        // Same property when decoding is conditioned on context tokens.
        const std::vector<int> context{3, 1};
        const TokenSequence got_ctx = beam_search(lm, prefix, cfg, context);
        const TokenSequence want_ctx = exhaustive_best(lm, prefix, cfg.max_len, context);
        CHECK(got_ctx.ids == want_ctx.ids);
    }
}

TEST_CASE("beam search ties break toward the lexicographically smaller sequence") {
    // A uniform model scores every same-length hypothesis identically, so the
    // winner must be the all-smallest-token completion ending in eos.
    LanguageModelSpec spec;
    spec.vocab_size = 5;
    spec.bos = 3;
    spec.eos = 4;
    spec.d_l = 4;
    const testing::FixedLogitsLm lm(spec, Eigen::VectorXd::Zero(5));
    BeamSearchConfig cfg;
    cfg.n_beams = 8;
    cfg.max_len = 4;
    const TokenSequence got = beam_search(lm, Eigen::MatrixXd::Zero(0, 4), cfg);
    CHECK(got.ids.empty());  // "" + eos ties everything, and [] < any other ids
}

TEST_CASE("beam search rejects bad configurations") {
    const testing::FixedLogitsLm lm = testing::uniform_lm(4);
    BeamSearchConfig cfg;
    cfg.n_beams = 0;
    CHECK_THROWS_AS(beam_search(lm, Eigen::MatrixXd::Zero(0, 4), cfg), std::invalid_argument);
    cfg.n_beams = 1;
    cfg.max_len = 0;
    CHECK_THROWS_AS(beam_search(lm, Eigen::MatrixXd::Zero(0, 4), cfg), std::invalid_argument);
}

TEST_CASE("byte tokenizer round-trips plain text and shields control ids") {
    LanguageModelSpec spec;  // defaults: 256 / bos 254 / eos 255
    ToyTokenizer tok(spec);
    const std::string text = "a dog runs fast";
    const std::vector<int> ids = tok.encode(text);
    REQUIRE(ids.size() == text.size());
    CHECK(tok.decode(ids) == text);

    // Bytes that collide with bos/eos encode as '?' instead.
    const std::string tricky = std::string(1, static_cast<char>(0xFE)) +
                               std::string(1, static_cast<char>(0xFF)) + "x";
    const std::vector<int> tids = tok.encode(tricky);
    CHECK(tids == std::vector<int>{'?', '?', 'x'});

    // decode drops bos/eos markers wherever they appear.
    CHECK(tok.decode({spec.bos, 'h', 'i', spec.eos}) == "hi");
}

TEST_CASE("tokenizer vocabulary file is well formed") {
    LanguageModelSpec spec;
    ToyTokenizer tok(spec);
    const std::string path = "toy_vocab.json";
    tok.save_json(path);
    std::ifstream in(path);
    REQUIRE(in.good());
    nlohmann::json j;
    in >> j;
    CHECK(j["vocab_size"] == 256);
    CHECK(j["id_to_token"]["254"] == "<bos>");
    CHECK(j["id_to_token"]["255"] == "<eos>");
    CHECK(j["id_to_token"]["97"] == "a");
    CHECK(j["id_to_token"]["10"] == "<0x0A>");
    CHECK(j["id_to_token"].size() == 256);
}
