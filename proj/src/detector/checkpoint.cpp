#include "mitodet/detector/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "mitodet/nn/serialize.hpp"

using nlohmann::json;

namespace mitodet::detector {

namespace {
constexpr char kMagic[8] = {'M', 'D', 'D', 'C', 'K', 'P', 'T', '1'};
}

void save_detector_checkpoint(const std::string& path, DetectorCheckpoint& ckpt) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot open checkpoint for write: " + path);
    os.write(kMagic, 8);

    json header;
    header["arch"] = {{"stem", ckpt.arch.stem_channels},
                      {"stages", {ckpt.arch.stage_channels[0], ckpt.arch.stage_channels[1],
                                  ckpt.arch.stage_channels[2]}},
                      {"fpn", ckpt.arch.fpn_channels},
                      {"prior_score", ckpt.arch.prior_score}};
    header["patch_size"] = ckpt.patch_size;
    header["has_trainer_state"] = ckpt.has_trainer_state;
    if (ckpt.has_trainer_state) {
        header["iteration"] = ckpt.iteration;
        header["run_seed"] = ckpt.run_seed;
        header["train_config"] = ckpt.train_config_json;
    }
    nn::write_string(os, header.dump());

    auto params = ckpt.model.params();
    auto buffers = ckpt.model.buffers();
    uint32_t count = static_cast<uint32_t>(params.size() + buffers.size());
    if (ckpt.has_trainer_state) count += static_cast<uint32_t>(ckpt.momentum.size());
    nn::write_u32(os, count);
    for (const auto& p : params) nn::write_tensor(os, p.name, *p.w);
    for (const auto& b : buffers) nn::write_tensor(os, b.name, *b.b);
    if (ckpt.has_trainer_state) {
        for (size_t i = 0; i < ckpt.momentum.size(); ++i) {
            nn::write_float_vec(os, "opt.momentum." + std::to_string(i),
                                ckpt.momentum[i]);
        }
    }
    if (!os) throw CheckpointError("write failed: " + path);
}

DetectorCheckpoint load_detector_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0) {
        throw CheckpointError("not a detector checkpoint: " + path);
    }

    DetectorCheckpoint ckpt;
    try {
        json header = json::parse(nn::read_string(is));
        const auto& arch = header.at("arch");
        ckpt.arch.stem_channels = arch.at("stem").get<int>();
        for (int i = 0; i < 3; ++i) {
            ckpt.arch.stage_channels[i] = arch.at("stages").at(static_cast<size_t>(i)).get<int>();
        }
        ckpt.arch.fpn_channels = arch.at("fpn").get<int>();
        ckpt.arch.prior_score = arch.at("prior_score").get<double>();
        ckpt.patch_size = header.at("patch_size").get<int>();
        ckpt.has_trainer_state = header.at("has_trainer_state").get<bool>();
        if (ckpt.has_trainer_state) {
            ckpt.iteration = header.at("iteration").get<int>();
            ckpt.run_seed = header.at("run_seed").get<uint64_t>();
            ckpt.train_config_json = header.at("train_config").get<std::string>();
        }
    } catch (const json::exception& e) {
        throw CheckpointError("bad checkpoint header in " + path + ": " + e.what());
    }

    ckpt.model = DetectorModel<float>(ckpt.arch);
    const uint32_t count = nn::read_u32(is);
    std::map<std::string, nn::Tensor<float>> tensors;
    for (uint32_t i = 0; i < count; ++i) {
        std::string name;
        nn::Tensor<float> t = nn::read_tensor(is, name);
        tensors.emplace(std::move(name), std::move(t));
    }

    auto params = ckpt.model.params();
    for (auto& p : params) {
        auto it = tensors.find(p.name);
        if (it == tensors.end()) {
            throw CheckpointError("missing tensor '" + p.name + "' in " + path);
        }
        if (!it->second.same_shape(*p.w)) {
            throw CheckpointError("shape mismatch for '" + p.name + "' in " + path);
        }
        *p.w = it->second;
    }
    for (auto& b : ckpt.model.buffers()) {
        auto it = tensors.find(b.name);
        if (it == tensors.end()) {
            throw CheckpointError("missing buffer '" + b.name + "' in " + path);
        }
        *b.b = it->second;
    }
    if (ckpt.has_trainer_state) {
        for (uint32_t i = 0;; ++i) {
            auto it = tensors.find("opt.momentum." + std::to_string(i));
            if (it == tensors.end()) break;
            ckpt.momentum.push_back(it->second.v);
        }
    }
    return ckpt;
}

}  // namespace mitodet::detector
