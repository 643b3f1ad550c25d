#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>

#include "maccap/backbone.hpp"

using namespace maccap;

namespace {

BackboneSpec small_spec() {
    BackboneSpec spec;
    spec.d = 16;
    spec.d_v = 16;
    spec.n_p = 8;
    spec.max_text_len = 32;
    return spec;
}

// Straight-line re-implementation of the documented toy text-encoding rule.
Eigen::VectorXd oracle_encode_text(const BackboneSpec& spec, std::uint64_t seed,
                                   const std::vector<int>& tokens) {
    const std::uint64_t h = splitmix64(seed ^ 0x74657874ULL);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(spec.d);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const std::uint64_t mixed =
            splitmix64(static_cast<std::uint64_t>(i) * 0x100000001B3ULL +
                       static_cast<std::uint64_t>(tokens[i]));
        Rng rng(splitmix64(h ^ mixed));
        for (int k = 0; k < spec.d; ++k) v[k] += rng.gaussian();
    }
    return v / v.norm();
}

}  // namespace

TEST_CASE("encode_text is deterministic, unit norm, and matches the oracle") {
    const BackboneSpec spec = small_spec();
    ToyBackbone backbone(spec, 7);
    const std::vector<int> tokens = {3, 1, 4};

    const TextEmbedding a = backbone.encode_text(tokens);
    const TextEmbedding b = backbone.encode_text(tokens);
    CHECK(a.vec == b.vec);
    CHECK(a.vec.norm() == doctest::Approx(1.0).epsilon(1e-5));

    const Eigen::VectorXd expect = oracle_encode_text(spec, 7, tokens);
    CHECK((a.vec - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("encode_text input handling") {
    ToyBackbone backbone(small_spec(), 1);
    CHECK_THROWS_AS(backbone.encode_text({}), std::invalid_argument);

    // Over-length input truncates to max_text_len rather than erroring.
    std::vector<int> long_tokens(100, 5);
    std::vector<int> cut(long_tokens.begin(), long_tokens.begin() + 32);
    CHECK(backbone.encode_text(long_tokens).vec == backbone.encode_text(cut).vec);
}

TEST_CASE("encode_image produces normalized attention and distinct outputs") {
    const BackboneSpec spec = small_spec();
    ToyBackbone backbone(spec, 7);
    const std::vector<double> img_a(8, 0.25);
    std::vector<double> img_b(8, 0.25);
    img_b[3] = 0.75;

    const PatchFeatureSet pa = backbone.encode_image(img_a);
    CHECK(pa.tokens.rows() == spec.n_p + 1);
    CHECK(pa.cls_attention.sum() == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(pa.cls_attention.minCoeff() >= 0.0);

    const PatchFeatureSet pb = backbone.encode_image(img_b);
    CHECK(pa.tokens != pb.tokens);
    CHECK(backbone.encode_image(img_a).tokens == pa.tokens);

    CHECK_THROWS_AS(backbone.encode_image(std::vector<double>(3, 0.0)),
                    std::invalid_argument);
}

TEST_CASE("encode_image matches the documented hash rule") {
    const BackboneSpec spec = small_spec();
    ToyBackbone backbone(spec, 7);
    const std::vector<double> img(8, 0.5);
    const PatchFeatureSet p = backbone.encode_image(img);

    std::uint64_t dh = splitmix64(7ULL ^ 0x696D6167ULL);
    for (double x : img) dh = splitmix64(dh ^ std::bit_cast<std::uint64_t>(x));
    Rng rng(splitmix64(dh + 0ULL * 0x9E3779B1ULL));
    for (int c = 0; c < spec.d_v; ++c)
        CHECK(p.tokens(0, c) == doctest::Approx(rng.gaussian()).epsilon(1e-12));
}

TEST_CASE("project_patches is the shared linear map") {
    BackboneSpec spec = small_spec();
    ToyBackbone identity(spec, 3, /*identity_projection=*/true);
    const PatchFeatureSet p = identity.encode_image(std::vector<double>(8, 1.0));
    CHECK(project_patches(p, identity.projection()).tokens == p.tokens);

    // Random 4x3 weight against a hand matrix multiply.
    PatchProjection proj;
    proj.weight.resize(4, 3);
    proj.weight << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12;
    PatchFeatureSet q;
    q.tokens.resize(5, 3);
    q.tokens << 1, 0, 0, 0, 1, 0, 0, 0, 1, 1, 1, 1, 2, -1, 0.5;
    q.cls_attention = Eigen::VectorXd::Constant(5, 0.2);
    const ProjectedPatchSet out = project_patches(q, proj);
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 4; ++c) {
            double expect = 0.0;
            for (int k = 0; k < 3; ++k) expect += proj.weight(c, k) * q.tokens(r, k);
            CHECK(out.tokens(r, c) == doctest::Approx(expect).epsilon(1e-12));
        }

    // Linearity.
    PatchFeatureSet scaled = q;
    scaled.tokens *= 3.5;
    CHECK((project_patches(scaled, proj).tokens - 3.5 * out.tokens).cwiseAbs().maxCoeff() <
          1e-12);
}

TEST_CASE("cosine_similarity basics") {
    Eigen::VectorXd v(3);
    v << 1, -2, 0.5;
    CHECK(cosine_similarity(v, v) == doctest::Approx(1.0));
    CHECK(cosine_similarity(v, Eigen::VectorXd(-v)) == doctest::Approx(-1.0));

    Eigen::VectorXd a(2), b(2);
    a << 1, 0;
    b << 1, 1;
    CHECK(cosine_similarity(a, b) == doctest::Approx(0.7071).epsilon(1e-4));

    CHECK_THROWS_AS(cosine_similarity(a, Eigen::VectorXd::Zero(2)), std::invalid_argument);
    CHECK_THROWS_AS(cosine_similarity(a, v), std::invalid_argument);
}

TEST_CASE("generate_synthetic_pairs zero-noise and determinism") {
    BackboneSpec spec = small_spec();
    SyntheticPairConfig cfg;
    cfg.gap_sigma = 0.0;
    cfg.patch_noise_sigma = 0.0;
    cfg.seed = 9;
    cfg.n_pairs = 5;
    const auto pairs = generate_synthetic_pairs(spec, cfg);
    REQUIRE(pairs.size() == 5);
    for (const auto& p : pairs) {
        CHECK((p.patches.tokens.row(0).transpose() - p.text.vec).cwiseAbs().maxCoeff() <
              1e-12);
        CHECK(cosine_similarity(p.text.vec, p.patches.tokens.row(0).transpose()) ==
              doctest::Approx(1.0).epsilon(1e-5));
    }

    const auto again = generate_synthetic_pairs(spec, cfg);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        CHECK(pairs[i].tokens == again[i].tokens);
        CHECK(pairs[i].text.vec == again[i].text.vec);
        CHECK(pairs[i].patches.tokens == again[i].patches.tokens);
    }

    cfg.n_pairs = 0;
    CHECK_THROWS_AS(generate_synthetic_pairs(spec, cfg), std::invalid_argument);
}

TEST_CASE("synthetic gap draws have near-zero empirical mean") {
    BackboneSpec spec = small_spec();
    SyntheticPairConfig cfg;
    cfg.gap_sigma = 0.1;
    cfg.patch_noise_sigma = 0.0;
    cfg.seed = 21;
    cfg.n_pairs = 10000;
    const auto pairs = generate_synthetic_pairs(spec, cfg);
    // Recover the raw (pre-normalization) gap direction estimate via
    // row0 * |row0-ish scale| is not available; test the generator contract
    // through the normalized rows instead: mean of (global - text) per
    // dimension stays near zero.
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& p : pairs) {
        const Eigen::VectorXd gap = p.patches.tokens.row(0).transpose() - p.text.vec;
        sum += gap.sum();
        count += static_cast<std::size_t>(gap.size());
    }
    const double mean = sum / static_cast<double>(count);
    const double bound = 3.0 * 0.1 / std::sqrt(10000.0 * spec.d);
    CHECK(std::abs(mean) < bound + 1e-3);
}

TEST_CASE("fixture jsonl round trip") {
    BackboneSpec spec = small_spec();
    SyntheticPairConfig cfg;
    cfg.seed = 4;
    cfg.n_pairs = 3;
    const auto pairs = generate_synthetic_pairs(spec, cfg);
    const std::string path =
        (std::filesystem::temp_directory_path() / "maccap_fixture_test.jsonl").string();
    write_fixture_jsonl(pairs, path);
    const auto loaded = read_fixture_jsonl(path);
    REQUIRE(loaded.size() == pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        CHECK(loaded[i].tokens == pairs[i].tokens);
        CHECK((loaded[i].text.vec - pairs[i].text.vec).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((loaded[i].patches.tokens - pairs[i].patches.tokens).cwiseAbs().maxCoeff() <
              1e-12);
    }
    std::remove(path.c_str());
}
