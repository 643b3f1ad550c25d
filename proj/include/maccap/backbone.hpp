#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "maccap/rng.hpp"

namespace maccap {

// Dimensions of a contrastive vision-language encoder pair.
//   d     : joint embedding dimensionality
//   d_v   : vision encoder internal dimensionality
//   n_p   : patch count per image (class token excluded)
struct BackboneSpec {
    int d = 64;
    int d_v = 64;
    int n_p = 16;
    int text_vocab = 256;
    int max_text_len = 64;

    void validate() const;
    std::uint64_t hash() const;
};

// Unit L2-norm text vector in the joint embedding space.
struct TextEmbedding {
    Eigen::VectorXd vec;
};

// Final-layer vision tokens. Row 0 is the class token. cls_attention holds
// the class token's attention weights over all tokens, averaged over heads;
// nonnegative, sums to 1.
struct PatchFeatureSet {
    Eigen::MatrixXd tokens;         // (n_p + 1) x d_v
    Eigen::VectorXd cls_attention;  // n_p + 1
};

// Vision tokens mapped into the joint space by the shared linear projection.
struct ProjectedPatchSet {
    Eigen::MatrixXd tokens;  // (n_p + 1) x d
};

// The shared d_v -> d linear map applied to every vision token.
struct PatchProjection {
    Eigen::MatrixXd weight;  // d x d_v
};

ProjectedPatchSet project_patches(const PatchFeatureSet& p,
                                  const PatchProjection& proj);

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Test-fixture generator config: synthetic text/image pairs where the image
// side is the text vector plus per-dimension Gaussian offsets.
struct SyntheticPairConfig {
    double gap_sigma = 0.05;
    double patch_noise_sigma = 0.05;
    std::uint64_t seed = 0;
    int n_pairs = 1;
    // When true, the first patch row of every pair is drawn with
    // low_noise_sigma instead of patch_noise_sigma.
    bool low_noise_patch = false;
    double low_noise_sigma = 0.0;
};

struct SyntheticPair {
    std::vector<int> tokens;
    TextEmbedding text;
    PatchFeatureSet patches;  // d_v == d for synthetic fixtures
};

class Backbone {
public:
    virtual ~Backbone() = default;
    virtual const BackboneSpec& spec() const = 0;
    virtual TextEmbedding encode_text(const std::vector<int>& tokens) const = 0;
    virtual PatchFeatureSet encode_image(const std::vector<double>& image) const = 0;
    virtual const PatchProjection& projection() const = 0;
    // Checksum over all frozen state, for the frozen-weights contract.
    virtual std::uint64_t weight_checksum() const = 0;
};

// Deterministic hash-projection backbone. The encoding rules are spelled out
// below so an oracle can recompute any output from the seed alone.
//
// Text: v = sum over (position i, token t) of the d Gaussians drawn from
//   Rng(splitmix64(h_text ^ splitmix64(i * 0x100000001B3 + t)))
// with h_text = splitmix64(seed ^ 0x74657874), then v is L2-normalized.
//
// Image: dh = fold of splitmix64(acc ^ bit_cast<u64>(value)) over the image
// values, starting from h_img = splitmix64(seed ^ 0x696D6167). Token row k
// holds the d_v Gaussians of Rng(splitmix64(dh + k * 0x9E3779B1)).
// cls_attention: n_p + 1 draws e_k = -ln(uniform01) from
// Rng(splitmix64(dh ^ 0xA77E17)), normalized to sum 1.
//
// Projection weight entries: Gaussians of Rng(splitmix64(seed ^ 0x70726F6A))
// in row-major order, scaled by 1/sqrt(d_v); identity when d == d_v and
// identity_projection is set.
class ToyBackbone : public Backbone {
public:
    ToyBackbone(const BackboneSpec& spec, std::uint64_t seed,
                bool identity_projection = false);

    const BackboneSpec& spec() const override { return spec_; }
    TextEmbedding encode_text(const std::vector<int>& tokens) const override;
    PatchFeatureSet encode_image(const std::vector<double>& image) const override;
    const PatchProjection& projection() const override { return projection_; }
    std::uint64_t weight_checksum() const override;
    std::uint64_t seed() const { return seed_; }

private:
    BackboneSpec spec_;
    std::uint64_t seed_;
    PatchProjection projection_;
};

std::vector<SyntheticPair> generate_synthetic_pairs(const BackboneSpec& spec,
                                                    const SyntheticPairConfig& cfg);

// JSON-lines fixture dump, one record per pair:
// {"text_tokens": [...], "text_emb": [...], "patch_tokens": [[...]],
//  "cls_attention": [...]}
void write_fixture_jsonl(const std::vector<SyntheticPair>& pairs,
                         const std::string& path);
std::vector<SyntheticPair> read_fixture_jsonl(const std::string& path);

// Byte-level token ids for a string, capped below `limit` when >= 0.
std::vector<int> tokenize_bytes(const std::string& text, int limit = -1);

std::uint64_t hash_doubles(const double* data, std::size_t n,
                           std::uint64_t h = 0xCBF29CE484222325ULL);

}  // namespace maccap
