#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mitodet/corpus/synth.hpp"

namespace mitodet::corpus {

struct CorpusMeta {
    int format_version = 1;
    int patch_size = 64;
    std::array<ScannerStylePreset, 5> presets = default_presets();
    uint64_t corpus_seed = 0;
};

struct Corpus {
    CorpusMeta meta;
    std::vector<Slide> slides;  // sorted by slide_id

    std::vector<const Slide*> by_scanner(int scanner_id) const;
    const Slide* find(const std::string& slide_id) const;
};

struct CorpusSpec {
    uint64_t seed = 0;
    int slides_per_scanner = 20;
    int slide_size = 1024;
    int mitoses_per_slide = 12;  // actual counts vary ~±1/3 around this
    int distractors_per_slide = -1;  // -1: scale with area
    int patch_size = 64;
};

// Generates the full 5-scanner corpus. Each slide derives its own seed from
// (corpus seed, scanner, index) so generation order never matters.
Corpus build_corpus(const CorpusSpec& spec);

// On-disk layout:
//   <dir>/meta.json         {format_version, patch_size, presets, corpus_seed}
//   <dir>/images/<id>.png   lossless RGB
//   <dir>/annotations.json  {<id>: {scanner: int, mitoses: [[x,y], ...]}}
void write_corpus(const Corpus& corpus, const std::string& directory);
Corpus read_corpus(const std::string& directory);

}  // namespace mitodet::corpus
