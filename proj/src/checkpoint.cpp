#include "maccap/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace maccap {

namespace {
constexpr char kMagic[8] = {'M', 'C', 'A', 'P', 'C', 'K', 'P', 'T'};

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

void write_string(std::ostream& out, const std::string& s) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
    const auto len = read_pod<std::uint32_t>(in);
    if (len > (1u << 20)) throw std::runtime_error("checkpoint: bad string length");
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return s;
}
}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    out.write(kMagic, sizeof(kMagic));
    const CheckpointHeader& h = ckpt.header;
    write_pod(out, h.format_version);
    write_pod(out, h.backbone_hash);
    write_pod(out, h.lm_hash);
    write_pod(out, h.noise.sigma);
    write_pod<std::int32_t>(out, h.noise.n_cr);
    write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(h.noise.distribution));
    write_pod(out, h.seed);
    for (int v : {h.adaptor.d, h.adaptor.d_l, h.adaptor.n_q, h.adaptor.n_heads,
                  h.adaptor.ffn_hidden, h.adaptor.mlp_hidden})
        write_pod<std::int32_t>(out, v);

    std::uint32_t n_tensors = 0;
    ckpt.params.for_each_tensor(
        [&n_tensors](const std::string&, const Eigen::MatrixXd&) { ++n_tensors; });
    write_pod(out, n_tensors);
    ckpt.params.for_each_tensor([&out](const std::string& name, const Eigen::MatrixXd& m) {
        write_string(out, name);
        write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
        write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
        out.write(reinterpret_cast<const char*>(m.data()),
                  static_cast<std::streamsize>(sizeof(double) * m.size()));
    });
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path, std::uint64_t expect_backbone_hash,
                           std::uint64_t expect_lm_hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);

    Checkpoint ckpt;
    CheckpointHeader& h = ckpt.header;
    h.format_version = read_pod<std::uint32_t>(in);
    if (h.format_version != 1)
        throw std::runtime_error("checkpoint: unsupported format version");
    h.backbone_hash = read_pod<std::uint64_t>(in);
    h.lm_hash = read_pod<std::uint64_t>(in);
    h.noise.sigma = read_pod<double>(in);
    h.noise.n_cr = read_pod<std::int32_t>(in);
    h.noise.distribution = static_cast<NoiseDistribution>(read_pod<std::uint8_t>(in));
    h.seed = read_pod<std::uint64_t>(in);
    h.adaptor.d = read_pod<std::int32_t>(in);
    h.adaptor.d_l = read_pod<std::int32_t>(in);
    h.adaptor.n_q = read_pod<std::int32_t>(in);
    h.adaptor.n_heads = read_pod<std::int32_t>(in);
    h.adaptor.ffn_hidden = read_pod<std::int32_t>(in);
    h.adaptor.mlp_hidden = read_pod<std::int32_t>(in);

    if (expect_backbone_hash != 0 && h.backbone_hash != expect_backbone_hash)
        throw std::runtime_error("incompatible checkpoint: backbone spec hash mismatch");
    if (expect_lm_hash != 0 && h.lm_hash != expect_lm_hash)
        throw std::runtime_error("incompatible checkpoint: language model spec hash mismatch");

    ckpt.params = AdaptorParams::zeros_like(AdaptorParams{h.adaptor, {}, {}, {}, {}, {}, {}, {}, {}});
    const std::uint32_t n_tensors = read_pod<std::uint32_t>(in);
    std::uint32_t seen = 0;
    ckpt.params.for_each_tensor([&](const std::string& name, Eigen::MatrixXd& m) {
        const std::string stored = read_string(in);
        if (stored != name)
            throw std::runtime_error("checkpoint: tensor order mismatch at " + name);
        const auto rows = read_pod<std::uint64_t>(in);
        const auto cols = read_pod<std::uint64_t>(in);
        m.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        in.read(reinterpret_cast<char*>(m.data()),
                static_cast<std::streamsize>(sizeof(double) * m.size()));
        if (!in) throw std::runtime_error("checkpoint: truncated tensor payload");
        ++seen;
    });
    if (seen != n_tensors)
        throw std::runtime_error("checkpoint: tensor count mismatch");
    return ckpt;
}

}  // namespace maccap
