#include "mitodet/corpus/corpus_io.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "mitodet/core/error.hpp"
#include "mitodet/core/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mitodet::corpus {

namespace {

json preset_to_json(const ScannerStylePreset& p) {
    return json{{"gain", p.gain},
                {"bias", p.bias},
                {"gamma", p.gamma},
                {"saturation", p.saturation}};
}

ScannerStylePreset preset_from_json(const json& j) {
    ScannerStylePreset p;
    p.gain = j.at("gain").get<std::array<double, 3>>();
    p.bias = j.at("bias").get<std::array<double, 3>>();
    p.gamma = j.at("gamma").get<double>();
    p.saturation = j.at("saturation").get<double>();
    return p;
}

std::string slide_name(int scanner, int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sc%d_%03d", scanner, index);
    return buf;
}

}  // namespace

std::vector<const Slide*> Corpus::by_scanner(int scanner_id) const {
    std::vector<const Slide*> out;
    for (const auto& s : slides) {
        if (s.scanner.id == scanner_id) out.push_back(&s);
    }
    return out;
}

const Slide* Corpus::find(const std::string& slide_id) const {
    for (const auto& s : slides) {
        if (s.slide_id == slide_id) return &s;
    }
    return nullptr;
}

Corpus build_corpus(const CorpusSpec& spec) {
    Corpus corpus;
    corpus.meta.corpus_seed = spec.seed;
    corpus.meta.patch_size = spec.patch_size;

    const int distractors =
        spec.distractors_per_slide >= 0
            ? spec.distractors_per_slide
            : static_cast<int>(120.0 * spec.slide_size / 1024.0 * spec.slide_size /
                               1024.0);

    for (int sc = 0; sc <= ScannerDomain::kHeldOut; ++sc) {
        for (int i = 0; i < spec.slides_per_scanner; ++i) {
            const uint64_t slide_seed =
                splitmix64(spec.seed ^ splitmix64(static_cast<uint64_t>(sc) * 100000 +
                                                  static_cast<uint64_t>(i) + 1));
            Rng count_rng(slide_seed);
            const int lo = std::max(0, spec.mitoses_per_slide * 2 / 3);
            const int hi = spec.mitoses_per_slide * 4 / 3;
            const int n_mit =
                spec.mitoses_per_slide == 0
                    ? 0
                    : lo + static_cast<int>(count_rng.uniform_int(
                               static_cast<uint64_t>(hi - lo + 1)));
            Slide s = generate_slide(slide_seed + 1, ScannerDomain{sc}, spec.slide_size,
                                     n_mit, distractors);
            s.slide_id = slide_name(sc, i);
            corpus.slides.push_back(std::move(s));
        }
    }
    std::sort(corpus.slides.begin(), corpus.slides.end(),
              [](const Slide& a, const Slide& b) { return a.slide_id < b.slide_id; });
    return corpus;
}

void write_corpus(const Corpus& corpus, const std::string& directory) {
    fs::create_directories(fs::path(directory) / "images");

    json meta;
    meta["format_version"] = corpus.meta.format_version;
    meta["patch_size"] = corpus.meta.patch_size;
    meta["corpus_seed"] = corpus.meta.corpus_seed;
    json presets = json::array();
    for (const auto& p : corpus.meta.presets) presets.push_back(preset_to_json(p));
    meta["presets"] = presets;
    {
        std::ofstream os(fs::path(directory) / "meta.json");
        if (!os) throw CorpusFormatError("write_corpus: cannot write meta.json in " +
                                         directory);
        os << meta.dump(2) << "\n";
    }

    json ann = json::object();
    for (const auto& s : corpus.slides) {
        json boxes = json::array();
        for (const auto& m : s.mitoses) boxes.push_back(json::array({m.x, m.y}));
        ann[s.slide_id] = json{{"scanner", s.scanner.id}, {"mitoses", boxes}};
        png_write((fs::path(directory) / "images" / (s.slide_id + ".png")).string(),
                  s.image);
    }
    {
        std::ofstream os(fs::path(directory) / "annotations.json");
        if (!os) throw CorpusFormatError(
            "write_corpus: cannot write annotations.json in " + directory);
        os << ann.dump(2) << "\n";
    }
}

Corpus read_corpus(const std::string& directory) {
    const fs::path meta_path = fs::path(directory) / "meta.json";
    const fs::path ann_path = fs::path(directory) / "annotations.json";

    Corpus corpus;
    try {
        std::ifstream is(meta_path);
        if (!is) throw CorpusFormatError("read_corpus: missing " + meta_path.string());
        json meta = json::parse(is);
        corpus.meta.format_version = meta.at("format_version").get<int>();
        if (corpus.meta.format_version != 1) {
            throw CorpusFormatError("read_corpus: unsupported format_version " +
                                    std::to_string(corpus.meta.format_version) +
                                    " in " + meta_path.string());
        }
        corpus.meta.patch_size = meta.at("patch_size").get<int>();
        corpus.meta.corpus_seed = meta.at("corpus_seed").get<uint64_t>();
        const auto& presets = meta.at("presets");
        if (presets.size() != 5) {
            throw CorpusFormatError("read_corpus: expected 5 presets in " +
                                    meta_path.string());
        }
        for (size_t i = 0; i < 5; ++i) {
            corpus.meta.presets[i] = preset_from_json(presets[i]);
        }
    } catch (const json::exception& e) {
        throw CorpusFormatError("read_corpus: bad meta.json at " + meta_path.string() +
                                ": " + e.what());
    }

    json ann;
    try {
        std::ifstream is(ann_path);
        if (!is) throw CorpusFormatError("read_corpus: missing " + ann_path.string());
        ann = json::parse(is);
    } catch (const json::exception& e) {
        throw CorpusFormatError("read_corpus: bad annotations.json at " +
                                ann_path.string() + ": " + e.what());
    }

    for (auto it = ann.begin(); it != ann.end(); ++it) {
        Slide s;
        s.slide_id = it.key();
        try {
            s.scanner.id = it.value().at("scanner").get<int>();
            for (const auto& m : it.value().at("mitoses")) {
                s.mitoses.push_back({m.at(0).get<double>(), m.at(1).get<double>()});
            }
        } catch (const json::exception& e) {
            throw CorpusFormatError("read_corpus: bad annotation entry '" + s.slide_id +
                                    "' in " + ann_path.string() + ": " + e.what());
        }
        if (!s.scanner.is_valid()) {
            throw CorpusFormatError("read_corpus: unknown scanner id " +
                                    std::to_string(s.scanner.id) + " for slide '" +
                                    s.slide_id + "' in " + ann_path.string());
        }
        const fs::path img_path = fs::path(directory) / "images" / (s.slide_id + ".png");
        try {
            s.image = png_read(img_path.string());
        } catch (const Error& e) {
            throw CorpusFormatError(std::string("read_corpus: ") + e.what());
        }
        corpus.slides.push_back(std::move(s));
    }
    std::sort(corpus.slides.begin(), corpus.slides.end(),
              [](const Slide& a, const Slide& b) { return a.slide_id < b.slide_id; });
    return corpus;
}

}  // namespace mitodet::corpus
