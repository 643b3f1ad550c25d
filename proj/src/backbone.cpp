#include "maccap/backbone.hpp"

#include <bit>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "json.hpp"

namespace maccap {

namespace {
constexpr std::uint64_t kTextTag = 0x74657874ULL;  // "text"
constexpr std::uint64_t kImageTag = 0x696D6167ULL; // "imag"
constexpr std::uint64_t kProjTag = 0x70726F6AULL;  // "proj"
constexpr std::uint64_t kAttnTag = 0xA77E17ULL;
}  // namespace

void BackboneSpec::validate() const {
    if (d < 1 || d_v < 1 || n_p < 1)
        throw std::invalid_argument("BackboneSpec: d, d_v, n_p must be >= 1");
    if (text_vocab < 1 || max_text_len < 1)
        throw std::invalid_argument("BackboneSpec: vocab and max_text_len must be >= 1");
}

std::uint64_t BackboneSpec::hash() const {
    std::uint64_t h = 0x42ULL;
    for (std::uint64_t v : {std::uint64_t(d), std::uint64_t(d_v), std::uint64_t(n_p),
                            std::uint64_t(text_vocab), std::uint64_t(max_text_len)})
        h = splitmix64(h ^ v);
    return h;
}

std::uint64_t hash_doubles(const double* data, std::size_t n, std::uint64_t h) {
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t bits = std::bit_cast<std::uint64_t>(data[i]);
        h = (h ^ bits) * 0x100000001B3ULL;
    }
    return h;
}

ProjectedPatchSet project_patches(const PatchFeatureSet& p, const PatchProjection& proj) {
    if (p.tokens.cols() != proj.weight.cols())
        throw std::invalid_argument("project_patches: dimension mismatch");
    return ProjectedPatchSet{p.tokens * proj.weight.transpose()};
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("cosine_similarity: length mismatch");
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0)
        throw std::invalid_argument("cosine_similarity: zero vector");
    return a.dot(b) / (na * nb);
}

ToyBackbone::ToyBackbone(const BackboneSpec& spec, std::uint64_t seed,
                         bool identity_projection)
    : spec_(spec), seed_(seed) {
    spec_.validate();
    if (identity_projection) {
        if (spec_.d != spec_.d_v)
            throw std::invalid_argument("identity projection requires d == d_v");
        projection_.weight = Eigen::MatrixXd::Identity(spec_.d, spec_.d_v);
    } else {
        Rng rng(splitmix64(seed ^ kProjTag));
        projection_.weight.resize(spec_.d, spec_.d_v);
        const double scale = 1.0 / std::sqrt(static_cast<double>(spec_.d_v));
        for (int r = 0; r < spec_.d; ++r)
            for (int c = 0; c < spec_.d_v; ++c)
                projection_.weight(r, c) = rng.gaussian() * scale;
    }
}

TextEmbedding ToyBackbone::encode_text(const std::vector<int>& tokens) const {
    if (tokens.empty())
        throw std::invalid_argument("encode_text: empty token sequence");
    std::size_t len = tokens.size();
    if (len > static_cast<std::size_t>(spec_.max_text_len)) {
        std::cerr << "maccap: warning: text of " << len
                  << " tokens truncated to " << spec_.max_text_len << "\n";
        len = static_cast<std::size_t>(spec_.max_text_len);
    }
    const std::uint64_t h = splitmix64(seed_ ^ kTextTag);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(spec_.d);
    for (std::size_t i = 0; i < len; ++i) {
        const std::uint64_t mixed =
            splitmix64(static_cast<std::uint64_t>(i) * 0x100000001B3ULL +
                       static_cast<std::uint64_t>(tokens[i]));
        Rng rng(splitmix64(h ^ mixed));
        for (int k = 0; k < spec_.d; ++k) v[k] += rng.gaussian();
    }
    const double norm = v.norm();
    if (norm == 0.0)
        throw std::runtime_error("encode_text: degenerate zero embedding");
    return TextEmbedding{v / norm};
}

PatchFeatureSet ToyBackbone::encode_image(const std::vector<double>& image) const {
    if (image.size() != static_cast<std::size_t>(spec_.n_p))
        throw std::invalid_argument("encode_image: descriptor must have n_p values");
    std::uint64_t dh = splitmix64(seed_ ^ kImageTag);
    for (double x : image) dh = splitmix64(dh ^ std::bit_cast<std::uint64_t>(x));

    PatchFeatureSet out;
    out.tokens.resize(spec_.n_p + 1, spec_.d_v);
    for (int k = 0; k <= spec_.n_p; ++k) {
        Rng rng(splitmix64(dh + static_cast<std::uint64_t>(k) * 0x9E3779B1ULL));
        for (int c = 0; c < spec_.d_v; ++c) out.tokens(k, c) = rng.gaussian();
    }
    Rng arng(splitmix64(dh ^ kAttnTag));
    out.cls_attention.resize(spec_.n_p + 1);
    for (int k = 0; k <= spec_.n_p; ++k) {
        double u = arng.uniform01();
        while (u == 0.0) u = arng.uniform01();
        out.cls_attention[k] = -std::log(u);
    }
    out.cls_attention /= out.cls_attention.sum();
    return out;
}

std::uint64_t ToyBackbone::weight_checksum() const {
    std::uint64_t h = splitmix64(seed_ ^ spec_.hash());
    return hash_doubles(projection_.weight.data(),
                        static_cast<std::size_t>(projection_.weight.size()), h);
}

std::vector<SyntheticPair> generate_synthetic_pairs(const BackboneSpec& spec,
                                                    const SyntheticPairConfig& cfg) {
    spec.validate();
    if (spec.d != spec.d_v)
        throw std::invalid_argument("generate_synthetic_pairs: requires d == d_v");
    if (cfg.n_pairs <= 0)
        throw std::invalid_argument("generate_synthetic_pairs: n_pairs must be > 0");
    if (!(cfg.gap_sigma >= 0.0) || !std::isfinite(cfg.gap_sigma) ||
        !(cfg.patch_noise_sigma >= 0.0) || !std::isfinite(cfg.patch_noise_sigma))
        throw std::invalid_argument("generate_synthetic_pairs: sigmas must be finite and >= 0");

    std::vector<SyntheticPair> pairs;
    pairs.reserve(static_cast<std::size_t>(cfg.n_pairs));
    Rng rng(splitmix64(cfg.seed ^ 0x5AB7ULL));
    for (int i = 0; i < cfg.n_pairs; ++i) {
        SyntheticPair pair;
        const int len = 3 + static_cast<int>(rng.next_u64() % 6);
        pair.tokens.resize(static_cast<std::size_t>(len));
        for (int& t : pair.tokens)
            t = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(spec.text_vocab));

        Eigen::VectorXd u(spec.d);
        for (int k = 0; k < spec.d; ++k) u[k] = rng.gaussian();
        u.normalize();
        pair.text.vec = u;

        pair.patches.tokens.resize(spec.n_p + 1, spec.d);
        // Row 0 is the global (class-token) row: text vector plus the gap draw.
        Eigen::VectorXd global = u;
        for (int k = 0; k < spec.d; ++k) global[k] += rng.gaussian() * cfg.gap_sigma;
        global.normalize();
        pair.patches.tokens.row(0) = global;
        for (int p = 1; p <= spec.n_p; ++p) {
            double sigma = cfg.patch_noise_sigma;
            if (cfg.low_noise_patch && p == 1) sigma = cfg.low_noise_sigma;
            Eigen::VectorXd row = u;
            for (int k = 0; k < spec.d; ++k) row[k] += rng.gaussian() * sigma;
            row.normalize();
            pair.patches.tokens.row(p) = row;
        }
        pair.patches.cls_attention.resize(spec.n_p + 1);
        for (int p = 0; p <= spec.n_p; ++p) {
            double v = rng.uniform01();
            while (v == 0.0) v = rng.uniform01();
            pair.patches.cls_attention[p] = -std::log(v);
        }
        pair.patches.cls_attention /= pair.patches.cls_attention.sum();
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

void write_fixture_jsonl(const std::vector<SyntheticPair>& pairs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    for (const auto& pair : pairs) {
        nlohmann::json rec;
        rec["text_tokens"] = pair.tokens;
        rec["text_emb"] = std::vector<double>(pair.text.vec.data(),
                                              pair.text.vec.data() + pair.text.vec.size());
        std::vector<std::vector<double>> tokens;
        for (Eigen::Index r = 0; r < pair.patches.tokens.rows(); ++r) {
            tokens.emplace_back(pair.patches.tokens.row(r).begin(),
                                pair.patches.tokens.row(r).end());
        }
        rec["patch_tokens"] = tokens;
        rec["cls_attention"] = std::vector<double>(
            pair.patches.cls_attention.data(),
            pair.patches.cls_attention.data() + pair.patches.cls_attention.size());
        out << rec.dump() << "\n";
    }
}

std::vector<SyntheticPair> read_fixture_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<SyntheticPair> pairs;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto rec = nlohmann::json::parse(line);
        SyntheticPair pair;
        pair.tokens = rec.value("text_tokens", std::vector<int>{});
        const auto emb = rec.at("text_emb").get<std::vector<double>>();
        pair.text.vec = Eigen::Map<const Eigen::VectorXd>(emb.data(),
                                                          static_cast<Eigen::Index>(emb.size()));
        const auto tokens = rec.at("patch_tokens").get<std::vector<std::vector<double>>>();
        if (tokens.empty()) throw std::runtime_error("fixture record with no patch tokens");
        pair.patches.tokens.resize(static_cast<Eigen::Index>(tokens.size()),
                                   static_cast<Eigen::Index>(tokens[0].size()));
        for (std::size_t r = 0; r < tokens.size(); ++r)
            pair.patches.tokens.row(static_cast<Eigen::Index>(r)) =
                Eigen::Map<const Eigen::VectorXd>(tokens[r].data(),
                                                  static_cast<Eigen::Index>(tokens[r].size()));
        const auto attn = rec.at("cls_attention").get<std::vector<double>>();
        pair.patches.cls_attention = Eigen::Map<const Eigen::VectorXd>(
            attn.data(), static_cast<Eigen::Index>(attn.size()));
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

std::vector<int> tokenize_bytes(const std::string& text, int limit) {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) {
        int id = static_cast<int>(c);
        if (limit >= 0 && id >= limit) id = id % limit;
        ids.push_back(id);
    }
    return ids;
}

}  // namespace maccap
