// mitodet — synthetic-corpus generation, two-stage training (style
// transfer module, then detector), tiled inference and F1 evaluation,
// driven by one binary with subcommands.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>

#include "mitodet/core/error.hpp"
#include "mitodet/corpus/corpus_io.hpp"
#include "mitodet/eval/eval.hpp"
#include "mitodet/pipeline/train.hpp"
#include "mitodet/transfer/transfer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mitodet;

namespace {

constexpr int kManifestVersion = 1;

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

void write_manifest(const std::string& path, const std::string& command,
                    const json& config, uint64_t seed,
                    const std::vector<std::string>& artifacts, double wall_clock) {
    json m;
    m["format_version"] = kManifestVersion;
    m["command"] = command;
    m["config"] = config;
    m["seed"] = seed;
    m["artifacts"] = artifacts;
    m["wall_clock_seconds"] = wall_clock;
    std::ofstream os(path);
    if (!os) throw Error("cannot write manifest: " + path);
    os << m.dump(2) << "\n";
}

corpus::Corpus load_corpus_checked(const std::string& dir) {
    if (!fs::exists(fs::path(dir) / "meta.json")) {
        throw Error("corpus not found at " + dir + " (missing meta.json)");
    }
    return corpus::read_corpus(dir);
}

void write_transfer_history(const std::string& path,
                            const std::vector<transfer::TransferLossEntry>& history) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write loss history: " + path);
    os << "iteration,loss_d,loss_adv,loss_cls_real,grad_penalty,loss_g,loss_cls_fake,"
          "loss_rec\n";
    for (const auto& e : history) {
        os << e.iteration << "," << e.loss_d << "," << e.loss_adv << ","
           << e.loss_cls_real << "," << e.grad_penalty << "," << e.loss_g << ","
           << e.loss_cls_fake << "," << e.loss_rec << "\n";
    }
}

void write_detector_history(const std::string& path,
                            const std::vector<pipeline::DetectorTrainEntry>& history) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write loss history: " + path);
    os << "iteration,loss,cls,reg,lr,n_foreground\n";
    for (const auto& e : history) {
        os << e.iteration << "," << e.loss << "," << e.cls << "," << e.reg << "," << e.lr
           << "," << e.n_foreground << "\n";
    }
}

// ---- gen-data ----------------------------------------------------------

struct GenDataArgs {
    std::string out;
    uint64_t seed = 0;
    int slides_per_scanner = 20;
    int slide_size = 1024;
    int mitoses_per_slide = 12;
    int distractors = -1;
    int patch_size = 64;
};

int run_gen_data(const GenDataArgs& a) {
    Stopwatch watch;
    corpus::CorpusSpec spec;
    spec.seed = a.seed;
    spec.slides_per_scanner = a.slides_per_scanner;
    spec.slide_size = a.slide_size;
    spec.mitoses_per_slide = a.mitoses_per_slide;
    spec.distractors_per_slide = a.distractors;
    spec.patch_size = a.patch_size;

    corpus::Corpus c = corpus::build_corpus(spec);
    corpus::write_corpus(c, a.out);

    size_t mitoses = 0;
    for (const auto& s : c.slides) mitoses += s.mitoses.size();
    std::cout << "corpus: " << c.slides.size() << " slides ("
              << a.slides_per_scanner << " per scanner x 5 scanners), "
              << mitoses << " mitoses, " << a.slide_size << "x" << a.slide_size
              << " px\n";

    json cfg{{"out", a.out},
             {"slides_per_scanner", a.slides_per_scanner},
             {"slide_size", a.slide_size},
             {"mitoses_per_slide", a.mitoses_per_slide},
             {"distractors", a.distractors},
             {"patch_size", a.patch_size}};
    write_manifest((fs::path(a.out) / "manifest.json").string(), "gen-data", cfg, a.seed,
                   {a.out}, watch.seconds());
    return 0;
}

// ---- train-transfer ----------------------------------------------------

struct TrainTransferArgs {
    std::string corpus_dir;
    std::string out;
    uint64_t seed = 0;
    transfer::TransferConfig cfg;
};

int run_train_transfer(const TrainTransferArgs& a) {
    Stopwatch watch;
    corpus::Corpus c = load_corpus_checked(a.corpus_dir);
    transfer::TransferConfig cfg = a.cfg;
    if (cfg.patch_size == 0) cfg.patch_size = c.meta.patch_size;
    cfg.seed = a.seed;

    Rng rng(a.seed);
    auto result = transfer::train_transfer(cfg, c, rng);
    transfer::save_transfer_checkpoint(a.out, result.trained);
    write_transfer_history(a.out + ".history.csv", result.history);

    const auto& last = result.history.back();
    std::cout << "transfer trained: " << cfg.iterations << " iterations, final loss_d="
              << last.loss_d << " loss_g=" << last.loss_g << " rec=" << last.loss_rec
              << "\n";

    json cfgj{{"corpus", a.corpus_dir},       {"out", a.out},
              {"iterations", cfg.iterations}, {"batch_size", cfg.batch_size},
              {"lambda_cls", cfg.lambda_cls}, {"lambda_rec", cfg.lambda_rec},
              {"lambda_gp", cfg.lambda_gp},   {"lr_g", cfg.lr_g},
              {"lr_d", cfg.lr_d},             {"d_steps_per_g", cfg.d_steps_per_g},
              {"patch_size", cfg.patch_size}, {"gen_channels", cfg.gen_channels},
              {"disc_channels", cfg.disc_channels}};
    write_manifest(a.out + ".manifest.json", "train-transfer", cfgj, a.seed,
                   {a.out, a.out + ".history.csv"}, watch.seconds());
    return 0;
}

// ---- train-detector ----------------------------------------------------

struct TrainDetectorArgs {
    std::string corpus_dir;
    std::string out;
    std::string transfer_checkpoint;
    std::string resume;
    uint64_t seed = 0;
    pipeline::TrainConfig cfg;
};

json train_config_to_json(const pipeline::TrainConfig& cfg) {
    return json{{"bg_fg_ratio", cfg.bg_fg_ratio},
                {"style_prob", cfg.style_prob},
                {"iterations", cfg.iterations},
                {"batch_size", cfg.batch_size},
                {"lr_start", cfg.lr_start},
                {"lr_milestone_fractions",
                 {cfg.lr_milestone_fractions[0], cfg.lr_milestone_fractions[1]}},
                {"lr_decay", cfg.lr_decay},
                {"momentum", cfg.momentum},
                {"patch_size", cfg.patch_size},
                {"seed", cfg.seed}};
}

pipeline::TrainConfig train_config_from_json(const json& j) {
    pipeline::TrainConfig cfg;
    cfg.bg_fg_ratio = j.at("bg_fg_ratio").get<double>();
    cfg.style_prob = j.at("style_prob").get<double>();
    cfg.iterations = j.at("iterations").get<int>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.lr_start = j.at("lr_start").get<double>();
    cfg.lr_milestone_fractions[0] = j.at("lr_milestone_fractions").at(0).get<double>();
    cfg.lr_milestone_fractions[1] = j.at("lr_milestone_fractions").at(1).get<double>();
    cfg.lr_decay = j.at("lr_decay").get<double>();
    cfg.momentum = j.at("momentum").get<double>();
    cfg.patch_size = j.at("patch_size").get<int>();
    cfg.seed = j.at("seed").get<uint64_t>();
    return cfg;
}

int run_train_detector(const TrainDetectorArgs& a) {
    Stopwatch watch;
    corpus::Corpus c = load_corpus_checked(a.corpus_dir);
    pipeline::TrainConfig cfg = a.cfg;
    if (cfg.patch_size == 0) cfg.patch_size = c.meta.patch_size;
    cfg.seed = a.seed;

    if (cfg.style_prob > 0.0 && a.transfer_checkpoint.empty()) {
        throw Error(
            "train-detector: --style-prob > 0 requires --transfer-checkpoint; the "
            "transfer module is trained first, then the detector (two-stage "
            "ordering)");
    }

    transfer::TrainedTransfer trained_transfer;
    std::unique_ptr<pipeline::GeneratorAugmenter> augmenter;
    if (!a.transfer_checkpoint.empty()) {
        if (!fs::exists(a.transfer_checkpoint)) {
            throw Error("transfer checkpoint not found: " + a.transfer_checkpoint);
        }
        trained_transfer = transfer::load_transfer_checkpoint(a.transfer_checkpoint);
        augmenter = std::make_unique<pipeline::GeneratorAugmenter>(
            trained_transfer.generator);
    }

    pipeline::DetectorTrainResult result;
    if (!a.resume.empty()) {
        if (!fs::exists(a.resume)) throw Error("resume checkpoint not found: " + a.resume);
        auto ckpt = detector::load_detector_checkpoint(a.resume);
        pipeline::TrainConfig resumed = train_config_from_json(
            json::parse(ckpt.train_config_json));
        resumed.iterations = cfg.iterations;  // extend to the new target
        result = pipeline::resume_detector_training(c, augmenter.get(), resumed, ckpt);
        cfg = resumed;
    } else {
        Rng rng(a.seed);
        result = pipeline::train_detector(c, augmenter.get(), cfg, rng);
    }

    detector::DetectorCheckpoint ckpt;
    ckpt.arch = result.model.arch();
    ckpt.patch_size = cfg.patch_size;
    ckpt.model = std::move(result.model);
    ckpt.has_trainer_state = true;
    ckpt.iteration = result.iterations_done;
    ckpt.run_seed = result.run_seed;
    ckpt.train_config_json = train_config_to_json(cfg).dump();
    ckpt.momentum = std::move(result.momentum);
    detector::save_detector_checkpoint(a.out, ckpt);
    write_detector_history(a.out + ".history.csv", result.history);

    std::cout << "detector trained: iterations " << result.history.front().iteration
              << ".." << result.history.back().iteration << ", final loss "
              << result.history.back().loss << "\n";

    json cfgj = train_config_to_json(cfg);
    cfgj["corpus"] = a.corpus_dir;
    cfgj["out"] = a.out;
    cfgj["transfer_checkpoint"] = a.transfer_checkpoint;
    cfgj["resume"] = a.resume;
    write_manifest(a.out + ".manifest.json", "train-detector", cfgj, a.seed,
                   {a.out, a.out + ".history.csv"}, watch.seconds());
    return 0;
}

// ---- infer -------------------------------------------------------------

struct InferArgs {
    std::string corpus_dir;
    std::string checkpoint;
    std::string out;
    int scanner = -1;
    int patch_size = 0;
    eval::EvalConfig cfg;
};

int run_infer(const InferArgs& a) {
    Stopwatch watch;
    corpus::Corpus c = load_corpus_checked(a.corpus_dir);
    if (!fs::exists(a.checkpoint)) {
        throw Error("detector checkpoint not found: " + a.checkpoint);
    }
    auto ckpt = detector::load_detector_checkpoint(a.checkpoint);
    const int patch_size = a.patch_size > 0 ? a.patch_size : ckpt.patch_size;

    json preds = json::object();
    int n_slides = 0;
    size_t n_dets = 0;
    for (const auto& slide : c.slides) {
        if (a.scanner >= 0 && slide.scanner.id != a.scanner) continue;
        const auto dets = eval::infer_slide(ckpt.model, slide, a.cfg, patch_size);
        json arr = json::array();
        for (const auto& d : dets) {
            arr.push_back(json{{"x", d.x}, {"y", d.y}, {"score", d.score}});
        }
        preds[slide.slide_id] = arr;
        ++n_slides;
        n_dets += dets.size();
    }
    {
        std::ofstream os(a.out);
        if (!os) throw Error("cannot write predictions: " + a.out);
        os << preds.dump(2) << "\n";
    }
    std::cout << "inferred " << n_slides << " slides, " << n_dets << " detections\n";

    json cfgj{{"corpus", a.corpus_dir},
              {"checkpoint", a.checkpoint},
              {"out", a.out},
              {"scanner", a.scanner},
              {"patch_size", patch_size},
              {"score_threshold", a.cfg.score_threshold},
              {"nms_iou", a.cfg.nms_iou},
              {"tile_overlap", a.cfg.tile_overlap}};
    write_manifest(a.out + ".manifest.json", "infer", cfgj, 0, {a.out}, watch.seconds());
    return 0;
}

// ---- eval --------------------------------------------------------------

struct EvalArgs {
    std::string corpus_dir;
    std::string predictions;
    std::string report;
    int scanner = -1;
    eval::EvalConfig cfg;
};

int run_eval(const EvalArgs& a) {
    Stopwatch watch;
    corpus::Corpus c = load_corpus_checked(a.corpus_dir);
    if (!fs::exists(a.predictions)) {
        throw Error("predictions file not found: " + a.predictions);
    }

    json preds;
    {
        std::ifstream is(a.predictions);
        try {
            preds = json::parse(is);
        } catch (const json::exception& e) {
            throw Error("bad predictions file " + a.predictions + ": " + e.what());
        }
    }

    // Validate prediction ids against the whole corpus before filtering.
    std::string unknown;
    for (auto it = preds.begin(); it != preds.end(); ++it) {
        if (!c.find(it.key())) unknown += unknown.empty() ? it.key() : ", " + it.key();
    }
    if (!unknown.empty()) {
        throw Error("eval: predictions reference unknown slide ids: " + unknown);
    }

    std::map<std::string, std::vector<Detection>> det_map;
    std::map<std::string, std::vector<GroundTruthBox>> gt_map;
    for (const auto& slide : c.slides) {
        if (a.scanner >= 0 && slide.scanner.id != a.scanner) continue;
        gt_map[slide.slide_id] = slide.mitoses;
        if (preds.contains(slide.slide_id)) {
            std::vector<Detection> dets;
            for (const auto& d : preds[slide.slide_id]) {
                dets.push_back({d.at("x").get<double>(), d.at("y").get<double>(),
                                d.at("score").get<double>()});
            }
            det_map[slide.slide_id] = std::move(dets);
        }
    }

    const eval::EvalReport report = eval::evaluate(det_map, gt_map, a.cfg);
    std::cout << "tp=" << report.tp << " fp=" << report.fp << " fn=" << report.fn
              << "\nprecision=" << report.precision << " recall=" << report.recall
              << " f1=" << report.f1 << "\n";

    const std::string report_path =
        a.report.empty() ? a.predictions + ".report.json" : a.report;
    json rj{{"tp", report.tp},
            {"fp", report.fp},
            {"fn", report.fn},
            {"precision", report.precision},
            {"recall", report.recall},
            {"f1", report.f1}};
    json per_slide = json::object();
    for (const auto& [id, sc] : report.per_slide) {
        per_slide[id] = json{{"tp", sc.tp}, {"fp", sc.fp}, {"fn", sc.fn}};
    }
    rj["per_slide"] = per_slide;
    {
        std::ofstream os(report_path);
        if (!os) throw Error("cannot write report: " + report_path);
        os << rj.dump(2) << "\n";
    }

    json cfgj{{"corpus", a.corpus_dir},
              {"predictions", a.predictions},
              {"report", report_path},
              {"scanner", a.scanner},
              {"score_threshold", a.cfg.score_threshold},
              {"match_radius", a.cfg.match_radius}};
    write_manifest(report_path + ".manifest.json", "eval", cfgj, 0, {report_path},
                   watch.seconds());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mitodet: domain-robust mitotic-figure detection on a synthetic "
                 "multi-scanner corpus"};
    app.require_subcommand(1);
    app.set_config("--config", "", "INI config file; sections per subcommand");

    GenDataArgs gen;
    auto* cmd_gen = app.add_subcommand("gen-data", "Generate the synthetic corpus");
    cmd_gen->add_option("--out", gen.out, "Output corpus directory")->required();
    cmd_gen->add_option("--seed", gen.seed, "Corpus seed");
    cmd_gen->add_option("--slides-per-scanner", gen.slides_per_scanner);
    cmd_gen->add_option("--slide-size", gen.slide_size);
    cmd_gen->add_option("--mitoses-per-slide", gen.mitoses_per_slide);
    cmd_gen->add_option("--distractors", gen.distractors,
                        "Distractor nuclei per slide (-1: scale with area)");
    cmd_gen->add_option("--patch-size", gen.patch_size);

    TrainTransferArgs tt;
    tt.cfg.patch_size = 0;  // resolve from corpus meta
    auto* cmd_tt = app.add_subcommand("train-transfer", "Train the style-transfer module");
    cmd_tt->add_option("--corpus", tt.corpus_dir)->required();
    cmd_tt->add_option("--out", tt.out, "Checkpoint path")->required();
    cmd_tt->add_option("--seed", tt.seed);
    cmd_tt->add_option("--iterations", tt.cfg.iterations);
    cmd_tt->add_option("--batch-size", tt.cfg.batch_size);
    cmd_tt->add_option("--lr-g", tt.cfg.lr_g);
    cmd_tt->add_option("--lr-d", tt.cfg.lr_d);
    cmd_tt->add_option("--lambda-cls", tt.cfg.lambda_cls);
    cmd_tt->add_option("--lambda-rec", tt.cfg.lambda_rec);
    cmd_tt->add_option("--lambda-gp", tt.cfg.lambda_gp);
    cmd_tt->add_option("--d-steps", tt.cfg.d_steps_per_g);
    cmd_tt->add_option("--patch-size", tt.cfg.patch_size, "0 = corpus default");
    cmd_tt->add_option("--gen-channels", tt.cfg.gen_channels);
    cmd_tt->add_option("--disc-channels", tt.cfg.disc_channels);

    TrainDetectorArgs td;
    td.cfg.patch_size = 0;
    auto* cmd_td = app.add_subcommand("train-detector", "Train the detection network");
    cmd_td->add_option("--corpus", td.corpus_dir)->required();
    cmd_td->add_option("--out", td.out, "Checkpoint path")->required();
    cmd_td->add_option("--transfer-checkpoint", td.transfer_checkpoint,
                       "Trained transfer module (required when --style-prob > 0)");
    cmd_td->add_option("--resume", td.resume, "Detector checkpoint to continue from");
    cmd_td->add_option("--seed", td.seed);
    cmd_td->add_option("--iterations", td.cfg.iterations);
    cmd_td->add_option("--batch-size", td.cfg.batch_size);
    cmd_td->add_option("--style-prob", td.cfg.style_prob);
    cmd_td->add_option("--bg-fg-ratio", td.cfg.bg_fg_ratio);
    cmd_td->add_option("--lr-start", td.cfg.lr_start);
    cmd_td->add_option("--momentum", td.cfg.momentum);
    cmd_td->add_option("--patch-size", td.cfg.patch_size, "0 = corpus default");

    InferArgs inf;
    auto* cmd_inf = app.add_subcommand("infer", "Run tiled slide inference");
    cmd_inf->add_option("--corpus", inf.corpus_dir)->required();
    cmd_inf->add_option("--checkpoint", inf.checkpoint)->required();
    cmd_inf->add_option("--out", inf.out, "Predictions JSON path")->required();
    cmd_inf->add_option("--scanner", inf.scanner, "Restrict to one scanner id");
    cmd_inf->add_option("--patch-size", inf.patch_size, "0 = checkpoint default");
    cmd_inf->add_option("--score-threshold", inf.cfg.score_threshold);
    cmd_inf->add_option("--nms-iou", inf.cfg.nms_iou);
    cmd_inf->add_option("--tile-overlap", inf.cfg.tile_overlap);

    EvalArgs ev;
    auto* cmd_ev = app.add_subcommand("eval", "Score predictions against ground truth");
    cmd_ev->add_option("--corpus", ev.corpus_dir)->required();
    cmd_ev->add_option("--predictions", ev.predictions)->required();
    cmd_ev->add_option("--report", ev.report,
                       "Report path (default: <predictions>.report.json)");
    cmd_ev->add_option("--scanner", ev.scanner, "Restrict to one scanner id");
    cmd_ev->add_option("--score-threshold", ev.cfg.score_threshold);
    cmd_ev->add_option("--match-radius", ev.cfg.match_radius);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;  // usage error
    }

    try {
        if (cmd_gen->parsed()) return run_gen_data(gen);
        if (cmd_tt->parsed()) return run_train_transfer(tt);
        if (cmd_td->parsed()) return run_train_detector(td);
        if (cmd_inf->parsed()) return run_infer(inf);
        if (cmd_ev->parsed()) return run_eval(ev);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
