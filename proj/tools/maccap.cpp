// maccap: zero-shot captioning toolkit over a frozen contrastive backbone and
// a frozen autoregressive decoder. Subcommands cover embedding-space analysis,
// adaptor training, captioning, caption-mediated VQA, metric evaluation, and
// ablation sweeps. Every run writes its resolved configuration next to its
// outputs so it can be reproduced from the artifact alone.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "maccap/checkpoint.hpp"
#include "maccap/gap_analysis.hpp"
#include "maccap/inference.hpp"
#include "maccap/metrics.hpp"
#include "maccap/training.hpp"
#include "maccap/vqa.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace maccap;

namespace {

// Fixed seeds for the frozen toy stack: training and inference must agree on
// the exact same backbone/decoder weights, and checkpoints verify this via
// the stored checksums.
constexpr std::uint64_t kBackboneSeed = 0xB0B1;
constexpr std::uint64_t kLmSeed = 0x10A2;

struct RunConfig {
    std::string backend = "toy";
    double sigma = 0.016;
    int n_cr = 10;
    int n_q = 10;
    int samples = 20;
    int beams = 4;
    std::uint64_t seed = 0;
    std::string corpus;
    std::string checkpoint;
    std::string out_dir = "runs/latest";
    int workers = 1;
    std::string distribution = "gaussian";
    std::string aggregate = "sum";

    // analyze
    int pairs = 1000;
    double gap_sigma = 0.05;
    double patch_sigma = 0.05;

    // train
    int batch_size = 128;
    double learning_rate = 4e-4;
    int epochs = 10;

    // caption / vqa
    std::vector<std::string> images;
    std::string manifest;
    std::string questions;
    std::string candidates;
    int max_len = 16;

    // eval
    std::string eval_input;

    // ablate
    std::string mode = "sigma";
    std::vector<double> sigma_values{0.0, 0.016, 0.1};
    std::vector<int> patch_values{1, 10, 49};

    // toy stack shape
    int d = 16;
    int n_p = 16;
    int d_l = 16;
};

json run_config_json(const RunConfig& cfg, const std::string& command) {
    return json{
        {"command", command},
        {"backend", cfg.backend},
        {"sigma", cfg.sigma},
        {"n_cr", cfg.n_cr},
        {"n_q", cfg.n_q},
        {"samples", cfg.samples},
        {"beams", cfg.beams},
        {"seed", cfg.seed},
        {"corpus", cfg.corpus},
        {"checkpoint", cfg.checkpoint},
        {"out_dir", cfg.out_dir},
        {"workers", cfg.workers},
        {"distribution", cfg.distribution},
        {"aggregate", cfg.aggregate},
        {"pairs", cfg.pairs},
        {"gap_sigma", cfg.gap_sigma},
        {"patch_sigma", cfg.patch_sigma},
        {"batch_size", cfg.batch_size},
        {"learning_rate", cfg.learning_rate},
        {"epochs", cfg.epochs},
        {"images", cfg.images},
        {"manifest", cfg.manifest},
        {"questions", cfg.questions},
        {"candidates", cfg.candidates},
        {"max_len", cfg.max_len},
        {"eval_input", cfg.eval_input},
        {"mode", cfg.mode},
        {"sigma_values", cfg.sigma_values},
        {"patch_values", cfg.patch_values},
        {"d", cfg.d},
        {"n_p", cfg.n_p},
        {"d_l", cfg.d_l},
    };
}

void write_run_config(const RunConfig& cfg, const std::string& command) {
    fs::create_directories(cfg.out_dir);
    const fs::path path = fs::path(cfg.out_dir) / "run_config.json";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << run_config_json(cfg, command).dump(2) << "\n";
}

NoiseDistribution parse_distribution(const std::string& name) {
    if (name == "gaussian") return NoiseDistribution::gaussian;
    if (name == "uniform") return NoiseDistribution::uniform;
    throw CLI::ValidationError("--distribution must be gaussian or uniform");
}

BackboneSpec backbone_spec(const RunConfig& cfg) {
    BackboneSpec spec;
    spec.d = cfg.d;
    spec.d_v = cfg.d;
    spec.n_p = cfg.n_p;
    return spec;
}

LanguageModelSpec lm_spec(const RunConfig& cfg) {
    LanguageModelSpec spec;
    spec.d_l = cfg.d_l;
    return spec;
}

AdaptorConfig adaptor_config(const RunConfig& cfg) {
    AdaptorConfig a;
    a.d = cfg.d;
    a.d_l = cfg.d_l;
    a.n_q = cfg.n_q;
    a.n_heads = 4;
    return a;
}

std::vector<double> read_image_file(const std::string& path, int expected) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open image descriptor " + path);
    std::vector<double> values;
    double v;
    while (in >> v) values.push_back(v);
    if (static_cast<int>(values.size()) != expected)
        throw std::runtime_error("image descriptor " + path + " has " +
                                 std::to_string(values.size()) + " values, expected " +
                                 std::to_string(expected));
    return values;
}

std::string asset_dir() {
    const char* env = std::getenv("MACCAP_ASSET_DIR");
    return env ? std::string(env) : std::string();
}

// Assembles analysis pairs for the selected backend. The toy path draws a
// synthetic testbed; the real path reads precomputed embedding fixtures from
// MACCAP_ASSET_DIR (pairs.jsonl written by an offline export).
std::vector<AnalysisPair> analysis_pairs(const RunConfig& cfg) {
    if (cfg.backend == "toy") {
        SyntheticPairConfig synth;
        synth.n_pairs = cfg.pairs;
        synth.seed = cfg.seed;
        synth.gap_sigma = cfg.gap_sigma;
        synth.patch_noise_sigma = cfg.patch_sigma;
        PatchProjection identity;
        identity.weight = Eigen::MatrixXd::Identity(cfg.d, cfg.d);
        return make_analysis_pairs(generate_synthetic_pairs(backbone_spec(cfg), synth),
                                   identity);
    }
    const std::string dir = asset_dir();
    if (dir.empty())
        throw std::runtime_error(
            "--backend real requires MACCAP_ASSET_DIR pointing at exported embeddings");
    const std::string path = (fs::path(dir) / "pairs.jsonl").string();
    const std::vector<SyntheticPair> fixtures = read_fixture_jsonl(path);
    if (fixtures.empty()) throw std::runtime_error("no pairs in " + path);
    std::vector<AnalysisPair> pairs;
    pairs.reserve(fixtures.size());
    const std::size_t limit =
        std::min<std::size_t>(fixtures.size(), static_cast<std::size_t>(cfg.pairs));
    for (std::size_t i = 0; i < limit; ++i) {
        // Exported fixtures are already in the joint space.
        pairs.push_back(AnalysisPair{fixtures[i].text.vec, fixtures[i].patches.tokens});
    }
    return pairs;
}

int cmd_analyze(const RunConfig& cfg) {
    write_run_config(cfg, "analyze");
    const std::vector<AnalysisPair> pairs = analysis_pairs(cfg);

    const SimilarityStats global = pair_similarity_stats(pairs, RepresentationMode::global);
    const SimilarityStats mix = pair_similarity_stats(pairs, RepresentationMode::mix);
    const double wins = subregion_win_fraction(pairs);
    write_similarity_csv((fs::path(cfg.out_dir) / "similarity.csv").string(),
                         {{"global", global}, {"mix", mix}}, wins);

    write_histogram_csv(gap_distribution(pairs, GapMode::global),
                        (fs::path(cfg.out_dir) / "gap_global.csv").string());
    write_histogram_csv(gap_distribution(pairs, GapMode::patch),
                        (fs::path(cfg.out_dir) / "gap_patch.csv").string());
    write_projection_scatter_csv(pairs, (fs::path(cfg.out_dir) / "scatter.csv").string());

    std::cout << "analyze: " << pairs.size() << " pairs, global mean " << global.mean
              << ", mix mean " << mix.mean << ", win fraction " << wins << "\n";
    return 0;
}

TrainConfig train_config(const RunConfig& cfg) {
    TrainConfig t;
    t.batch_size = cfg.batch_size;
    t.learning_rate = cfg.learning_rate;
    t.epochs = cfg.epochs;
    t.noise.sigma = cfg.sigma;
    t.noise.n_cr = cfg.n_cr;
    t.noise.distribution = parse_distribution(cfg.distribution);
    t.seed = cfg.seed;
    t.workers = cfg.workers;
    return t;
}

int cmd_train(const RunConfig& cfg) {
    if (cfg.backend != "toy")
        throw std::runtime_error("train: only the toy backend trains locally; "
                                 "real-backbone runs use exported embeddings");
    write_run_config(cfg, "train");
    ToyBackbone backbone(backbone_spec(cfg), kBackboneSeed);
    ToyLanguageModel lm(lm_spec(cfg), kLmSeed);
    ToyTokenizer tokenizer(lm_spec(cfg));

    TextCorpus corpus = cfg.corpus.empty()
                            ? corpus_from_lines(make_synthetic_captions(256, cfg.seed),
                                                tokenizer, 15, "synthetic")
                            : load_corpus(cfg.corpus, tokenizer);

    TrainResult result = train(corpus, train_config(cfg), backbone, lm, adaptor_config(cfg));

    Checkpoint ckpt;
    ckpt.header.backbone_hash = backbone.weight_checksum();
    ckpt.header.lm_hash = lm.weight_checksum();
    ckpt.header.noise = train_config(cfg).noise;
    ckpt.header.seed = cfg.seed;
    ckpt.header.adaptor = adaptor_config(cfg);
    ckpt.params = std::move(result.params);
    const std::string ckpt_path = (fs::path(cfg.out_dir) / "adaptor.ckpt").string();
    save_checkpoint(ckpt, ckpt_path);
    result.report.checkpoint_path = ckpt_path;
    write_train_report_json(result.report, train_config(cfg),
                            (fs::path(cfg.out_dir) / "train_report.json").string());
    std::cout << "train: " << corpus.captions.size() << " captions, first-epoch loss "
              << result.report.epoch_losses.front() << ", last-epoch loss "
              << result.report.epoch_losses.back() << ", checkpoint " << ckpt_path << "\n";
    return 0;
}

SamplingConfig sampling_config(const RunConfig& cfg) {
    SamplingConfig s;
    s.s = cfg.samples;
    s.inference_sigma = cfg.sigma;
    s.distribution = parse_distribution(cfg.distribution);
    s.n_beams = cfg.beams;
    s.max_len = cfg.max_len;
    s.seed = cfg.seed;
    s.aggregate_mean = cfg.aggregate == "mean";
    s.workers = cfg.workers;
    return s;
}

AdaptorParams load_adaptor(const RunConfig& cfg, const ToyBackbone& backbone,
                           const ToyLanguageModel& lm) {
    if (cfg.checkpoint.empty())
        throw std::runtime_error("a trained --checkpoint is required");
    return load_checkpoint(cfg.checkpoint, backbone.weight_checksum(), lm.weight_checksum())
        .params;
}

std::vector<std::string> image_list(const RunConfig& cfg) {
    std::vector<std::string> paths = cfg.images;
    if (!cfg.manifest.empty()) {
        std::ifstream in(cfg.manifest);
        if (!in) throw std::runtime_error("cannot open manifest " + cfg.manifest);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            paths.push_back(json::parse(line).at("image_path").get<std::string>());
        }
    }
    if (paths.empty())
        throw std::runtime_error("no images: pass --image or --manifest");
    return paths;
}

int cmd_caption(const RunConfig& cfg) {
    if (cfg.backend != "toy")
        throw std::runtime_error("caption: the real backend needs exported assets; "
                                 "only the toy backend is runnable here");
    write_run_config(cfg, "caption");
    ToyBackbone backbone(backbone_spec(cfg), kBackboneSeed);
    ToyLanguageModel lm(lm_spec(cfg), kLmSeed);
    ToyTokenizer tokenizer(lm_spec(cfg));
    const AdaptorParams adaptor = load_adaptor(cfg, backbone, lm);

    const std::vector<std::string> paths = image_list(cfg);
    const fs::path out_path = fs::path(cfg.out_dir) / "captions.jsonl";
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot open " + out_path.string() + " for writing");

    for (const std::string& path : paths) {
        const std::vector<double> image = read_image_file(path, cfg.n_p);
        const CaptionResult result = caption(image, backbone, adaptor, lm, tokenizer,
                                             sampling_config(cfg), cfg.n_cr);
        json cands = json::array();
        for (const auto& c : result.candidates)
            cands.push_back({{"text", c.text}, {"similarity", c.similarity}});
        // Toy-tokenizer text is raw bytes, not guaranteed UTF-8.
        out << json{{"image_path", path},
                    {"caption", result.caption},
                    {"similarity", result.similarity},
                    {"candidates", cands}}
                   .dump(-1, ' ', false, json::error_handler_t::replace)
            << "\n";
    }
    std::cout << "caption: " << paths.size() << " images -> " << out_path.string() << "\n";
    return 0;
}

int cmd_vqa(const RunConfig& cfg) {
    if (cfg.backend != "toy")
        throw std::runtime_error("vqa: only the toy backend is runnable here");
    write_run_config(cfg, "vqa");
    ToyBackbone backbone(backbone_spec(cfg), kBackboneSeed);
    ToyLanguageModel lm(lm_spec(cfg), kLmSeed);
    ToyTokenizer tokenizer(lm_spec(cfg));
    const AdaptorParams adaptor = load_adaptor(cfg, backbone, lm);

    if (cfg.questions.empty()) throw std::runtime_error("vqa: --questions is required");
    if (cfg.candidates.empty()) throw std::runtime_error("vqa: --candidates is required");
    const std::vector<VqaItem> items = read_vqa_jsonl(cfg.questions);
    if (items.empty()) throw std::runtime_error("vqa: no questions in " + cfg.questions);
    const CandidateIndex index(read_candidate_lines(cfg.candidates), backbone);

    std::vector<VqaResult> results;
    std::vector<std::string> truths;
    const fs::path detail_path = fs::path(cfg.out_dir) / "vqa_items.jsonl";
    std::ofstream detail(detail_path);
    if (!detail)
        throw std::runtime_error("cannot open " + detail_path.string() + " for writing");

    for (const VqaItem& item : items) {
        const std::vector<double> image = read_image_file(item.image_path, cfg.n_p);
        const CaptionResult cap = caption(image, backbone, adaptor, lm, tokenizer,
                                          sampling_config(cfg), cfg.n_cr);
        VqaResult result;
        if (cap.caption.empty()) {
            result.no_answer = true;
        } else {
            const std::string prompt = build_prompt(cap.caption, item.question);
            result.generated_answer = answer_open_ended(prompt, lm, tokenizer, cfg.max_len);
            if (result.generated_answer.empty()) {
                result.no_answer = true;
            } else {
                result.ranked_candidates = index.rank(result.generated_answer, backbone);
            }
        }
        detail << json{{"question_id", item.question_id},
                       {"caption", cap.caption},
                       {"answer", result.generated_answer},
                       {"no_answer", result.no_answer},
                       {"top_candidate", result.ranked_candidates.empty()
                                             ? ""
                                             : result.ranked_candidates.front().first}}
                      .dump(-1, ' ', false, json::error_handler_t::replace)
               << "\n";
        results.push_back(std::move(result));
        truths.push_back(item.ground_truth);
    }
    const double top1 = topk_accuracy(results, truths, 1);
    const double top5 = topk_accuracy(results, truths, 5);
    const double top10 = topk_accuracy(results, truths, 10);
    write_vqa_report_json((fs::path(cfg.out_dir) / "vqa_report.json").string(), top1, top5,
                          top10, results.size());
    std::cout << "vqa: " << results.size() << " questions, top1 " << top1 << ", top5 "
              << top5 << ", top10 " << top10 << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    if (cfg.eval_input.empty()) throw std::runtime_error("eval: --input is required");
    write_run_config(cfg, "eval");
    const EvalSet set = read_eval_jsonl(cfg.eval_input);
    if (set.items.empty()) throw std::runtime_error("eval: no items in " + cfg.eval_input);
    json report;
    for (int n = 1; n <= 4; ++n) report["bleu" + std::to_string(n)] = bleu(set, n);
    if (set.items.size() >= 2) {
        report["cider"] = cider(set, false);
        report["cider_d"] = cider(set, true);
    } else {
        report["cider"] = nullptr;  // IDF needs at least two items
        report["cider_d"] = nullptr;
    }
    report["n_items"] = set.items.size();
    const fs::path path = fs::path(cfg.out_dir) / "metrics.json";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << report.dump(2) << "\n";
    std::cout << "eval: " << set.items.size() << " items, bleu4 " << report["bleu4"]
              << " -> " << path.string() << "\n";
    return 0;
}

std::uint64_t config_hash(const json& j) {
    const std::string dump = j.dump();
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : dump) h = splitmix64(h ^ c);
    return h;
}

// Shared tiny training run used by the ablation grids; small enough that a
// full sweep stays interactive on one core.
double ablation_train_loss(const RunConfig& cfg, double sigma, int n_cr) {
    ToyBackbone backbone(backbone_spec(cfg), kBackboneSeed);
    ToyLanguageModel lm(lm_spec(cfg), kLmSeed);
    ToyTokenizer tokenizer(lm_spec(cfg));
    const TextCorpus corpus =
        corpus_from_lines(make_synthetic_captions(32, cfg.seed), tokenizer, 15, "ablate");
    TrainConfig t = train_config(cfg);
    t.noise.sigma = sigma;
    t.noise.n_cr = n_cr;
    t.batch_size = 16;
    t.epochs = std::min(cfg.epochs, 3);
    t.learning_rate = 1e-3;
    const TrainResult result = train(corpus, t, backbone, lm, adaptor_config(cfg));
    return result.report.epoch_losses.back();
}

int cmd_ablate(const RunConfig& cfg) {
    write_run_config(cfg, "ablate");
    const fs::path csv_path = fs::path(cfg.out_dir) / ("ablate_" + cfg.mode + ".csv");
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("cannot open " + csv_path.string() + " for writing");
    out.precision(12);

    if (cfg.mode == "sigma") {
        out << "sigma,final_loss\n";
        for (double sigma : cfg.sigma_values)
            out << sigma << "," << ablation_train_loss(cfg, sigma, cfg.n_cr) << "\n";
    } else if (cfg.mode == "patches") {
        out << "patches,mean_similarity\n";
        // Caption a few toy images with varying subregion counts and record
        // the mean reranked similarity.
        RunConfig wide = cfg;
        wide.n_p = *std::max_element(cfg.patch_values.begin(), cfg.patch_values.end());
        ToyBackbone backbone(backbone_spec(wide), kBackboneSeed);
        ToyLanguageModel lm(lm_spec(wide), kLmSeed);
        ToyTokenizer tokenizer(lm_spec(wide));
        const AdaptorParams adaptor =
            cfg.checkpoint.empty() ? AdaptorParams::init(adaptor_config(wide), cfg.seed)
                                   : load_adaptor(wide, backbone, lm);
        for (int patches : cfg.patch_values) {
            double sim_sum = 0.0;
            const int n_images = 4;
            for (int i = 0; i < n_images; ++i) {
                Rng rng(splitmix64(cfg.seed + static_cast<std::uint64_t>(i)));
                std::vector<double> image(static_cast<std::size_t>(wide.n_p));
                for (double& v : image) v = rng.gaussian();
                const CaptionResult result = caption(image, backbone, adaptor, lm,
                                                     tokenizer, sampling_config(wide),
                                                     patches);
                sim_sum += result.similarity;
            }
            out << patches << "," << sim_sum / n_images << "\n";
        }
    } else if (cfg.mode == "presets") {
        // Four training modes: {single, multiple} region rows x {with,
        // without} injected noise.
        out << "preset,config_hash,final_loss\n";
        const struct {
            const char* name;
            int n_cr;
            double sigma;
        } presets[] = {
            {"single_wo_noise", 1, 0.0},
            {"single_w_noise", 1, cfg.sigma},
            {"multiple_wo_noise", cfg.n_cr, 0.0},
            {"multiple_w_noise", cfg.n_cr, cfg.sigma},
        };
        for (const auto& preset : presets) {
            RunConfig resolved = cfg;
            resolved.sigma = preset.sigma;
            resolved.n_cr = preset.n_cr;
            const json j = run_config_json(resolved, std::string("ablate:") + preset.name);
            out << preset.name << "," << config_hash(j) << ","
                << ablation_train_loss(cfg, preset.sigma, preset.n_cr) << "\n";
        }
    } else {
        throw CLI::ValidationError("--mode must be sigma, patches, or presets");
    }
    std::cout << "ablate: wrote " << csv_path.string() << "\n";
    return 0;
}

// Config-file support: values from --config fill in every flag the user did
// not pass explicitly, so precedence is flags > file > defaults.
void apply_config_file(const CLI::App& sub, const std::string& path, RunConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    json j;
    in >> j;

    auto fill = [&](const char* flag, auto& member) {
        const CLI::Option* opt = sub.get_option_no_throw(flag);
        const std::string key = std::string(flag).substr(2);
        if (opt != nullptr && opt->count() == 0 && j.contains(key))
            member = j.at(key).get<std::decay_t<decltype(member)>>();
    };
    fill("--backend", cfg.backend);
    fill("--sigma", cfg.sigma);
    fill("--n-cr", cfg.n_cr);
    fill("--n-q", cfg.n_q);
    fill("--samples", cfg.samples);
    fill("--beams", cfg.beams);
    fill("--seed", cfg.seed);
    fill("--corpus", cfg.corpus);
    fill("--checkpoint", cfg.checkpoint);
    fill("--out-dir", cfg.out_dir);
    fill("--workers", cfg.workers);
    fill("--distribution", cfg.distribution);
    fill("--aggregate", cfg.aggregate);
    fill("--pairs", cfg.pairs);
    fill("--gap-sigma", cfg.gap_sigma);
    fill("--patch-sigma", cfg.patch_sigma);
    fill("--batch", cfg.batch_size);
    fill("--lr", cfg.learning_rate);
    fill("--epochs", cfg.epochs);
    fill("--manifest", cfg.manifest);
    fill("--questions", cfg.questions);
    fill("--candidates", cfg.candidates);
    fill("--max-len", cfg.max_len);
    fill("--input", cfg.eval_input);
    fill("--mode", cfg.mode);
    fill("--d", cfg.d);
    fill("--n-p", cfg.n_p);
    fill("--d-l", cfg.d_l);
}

void add_common_options(CLI::App& sub, RunConfig& cfg, std::string& config_path) {
    sub.add_option("--config", config_path, "JSON config file (flags take precedence)");
    sub.add_option("--backend", cfg.backend, "toy or real")
        ->check(CLI::IsMember({"toy", "real"}));
    sub.add_option("--sigma", cfg.sigma, "noise standard deviation");
    sub.add_option("--n-cr", cfg.n_cr, "region feature rows");
    sub.add_option("--n-q", cfg.n_q, "learnable query count");
    sub.add_option("--samples", cfg.samples, "noisy decodes per image");
    sub.add_option("--beams", cfg.beams, "beam width");
    sub.add_option("--seed", cfg.seed, "run seed");
    sub.add_option("--corpus", cfg.corpus, "text corpus path");
    sub.add_option("--checkpoint", cfg.checkpoint, "adaptor checkpoint path");
    sub.add_option("--out-dir", cfg.out_dir, "output directory");
    sub.add_option("--workers", cfg.workers, "worker threads")->check(CLI::PositiveNumber);
    sub.add_option("--distribution", cfg.distribution, "noise distribution")
        ->check(CLI::IsMember({"gaussian", "uniform"}));
    sub.add_option("--aggregate", cfg.aggregate, "subregion composition rule")
        ->check(CLI::IsMember({"sum", "mean"}));
    sub.add_option("--d", cfg.d, "joint embedding width (toy stack)");
    sub.add_option("--n-p", cfg.n_p, "patches per image (toy stack)");
    sub.add_option("--d-l", cfg.d_l, "decoder width (toy stack)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"zero-shot captioning toolkit (analysis / training / inference)"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    RunConfig cfg;
    std::string config_path;

    CLI::App* analyze = app.add_subcommand("analyze", "embedding-space gap analysis");
    add_common_options(*analyze, cfg, config_path);
    analyze->add_option("--pairs", cfg.pairs, "pair count")->check(CLI::PositiveNumber);
    analyze->add_option("--gap-sigma", cfg.gap_sigma, "synthetic global gap sigma");
    analyze->add_option("--patch-sigma", cfg.patch_sigma, "synthetic patch noise sigma");

    CLI::App* train_cmd = app.add_subcommand("train", "adaptor text-reconstruction training");
    add_common_options(*train_cmd, cfg, config_path);
    train_cmd->add_option("--batch", cfg.batch_size, "batch size")->check(CLI::PositiveNumber);
    train_cmd->add_option("--lr", cfg.learning_rate, "learning rate");
    train_cmd->add_option("--epochs", cfg.epochs, "epoch count")->check(CLI::PositiveNumber);

    CLI::App* caption_cmd = app.add_subcommand("caption", "caption image descriptors");
    add_common_options(*caption_cmd, cfg, config_path);
    caption_cmd->add_option("--image", cfg.images, "image descriptor file(s)");
    caption_cmd->add_option("--manifest", cfg.manifest, "JSONL manifest of image paths");
    caption_cmd->add_option("--max-len", cfg.max_len, "maximum caption tokens");

    CLI::App* vqa_cmd = app.add_subcommand("vqa", "caption-mediated visual QA");
    add_common_options(*vqa_cmd, cfg, config_path);
    vqa_cmd->add_option("--questions", cfg.questions, "JSONL question file");
    vqa_cmd->add_option("--candidates", cfg.candidates, "answer candidate list (one per line)");
    vqa_cmd->add_option("--max-len", cfg.max_len, "maximum generated tokens");

    CLI::App* eval_cmd = app.add_subcommand("eval", "caption metric evaluation");
    add_common_options(*eval_cmd, cfg, config_path);
    eval_cmd->add_option("--input", cfg.eval_input, "JSONL of candidates and references");

    CLI::App* ablate_cmd = app.add_subcommand("ablate", "sweeps over sigma / patch count / presets");
    add_common_options(*ablate_cmd, cfg, config_path);
    ablate_cmd->add_option("--mode", cfg.mode, "sigma, patches, or presets")
        ->check(CLI::IsMember({"sigma", "patches", "presets"}));
    ablate_cmd->add_option("--sigma-values", cfg.sigma_values, "sigma sweep grid");
    ablate_cmd->add_option("--patch-values", cfg.patch_values, "patch-count sweep grid");
    ablate_cmd->add_option("--epochs", cfg.epochs, "epochs per grid point")
        ->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // help text, exit 0
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;  // usage error
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        if (!config_path.empty()) apply_config_file(*sub, config_path, cfg);
        if (sub == analyze) return cmd_analyze(cfg);
        if (sub == train_cmd) return cmd_train(cfg);
        if (sub == caption_cmd) return cmd_caption(cfg);
        if (sub == vqa_cmd) return cmd_vqa(cfg);
        if (sub == eval_cmd) return cmd_eval(cfg);
        if (sub == ablate_cmd) return cmd_ablate(cfg);
        std::cerr << "error: unknown subcommand\n";
        return 2;
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
