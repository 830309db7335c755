#include "mitodet/transfer/transfer.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "mitodet/nn/serialize.hpp"

using nlohmann::json;

namespace mitodet::transfer {

namespace {

constexpr char kMagic[8] = {'M', 'D', 'T', 'C', 'K', 'P', 'T', '1'};

Tensor<float> to_batch(const std::vector<Patch>& patches) {
    const int n = static_cast<int>(patches.size());
    const int s = patches.front().size;
    Tensor<float> t(n, 3, s, s);
    for (int i = 0; i < n; ++i) {
        if (patches[static_cast<size_t>(i)].size != s) {
            throw ShapeError("to_batch: mixed patch sizes");
        }
        std::copy(patches[static_cast<size_t>(i)].pixels.begin(),
                  patches[static_cast<size_t>(i)].pixels.end(),
                  t.data() + static_cast<size_t>(i) * 3 * s * s);
    }
    return t;
}

Tensor<float> slice_rgb(const Tensor<float>& t) {
    Tensor<float> out(t.n, 3, t.h, t.w);
    const size_t plane = static_cast<size_t>(t.h) * t.w;
    for (int in = 0; in < t.n; ++in) {
        std::copy(t.data() + static_cast<size_t>(in) * t.c * plane,
                  t.data() + static_cast<size_t>(in) * t.c * plane + 3 * plane,
                  out.data() + static_cast<size_t>(in) * 3 * plane);
    }
    return out;
}

json config_to_json(const TransferConfig& c) {
    return json{{"lambda_cls", c.lambda_cls},
                {"lambda_rec", c.lambda_rec},
                {"lambda_gp", c.lambda_gp},
                {"lr_g", c.lr_g},
                {"lr_d", c.lr_d},
                {"iterations", c.iterations},
                {"batch_size", c.batch_size},
                {"d_steps_per_g", c.d_steps_per_g},
                {"patch_size", c.patch_size},
                {"gen_channels", c.gen_channels},
                {"disc_channels", c.disc_channels},
                {"seed", c.seed}};
}

TransferConfig config_from_json(const json& j) {
    TransferConfig c;
    c.lambda_cls = j.at("lambda_cls").get<double>();
    c.lambda_rec = j.at("lambda_rec").get<double>();
    c.lambda_gp = j.at("lambda_gp").get<double>();
    c.lr_g = j.at("lr_g").get<double>();
    c.lr_d = j.at("lr_d").get<double>();
    c.iterations = j.at("iterations").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.d_steps_per_g = j.at("d_steps_per_g").get<int>();
    c.patch_size = j.at("patch_size").get<int>();
    c.gen_channels = j.at("gen_channels").get<int>();
    c.disc_channels = j.at("disc_channels").get<int>();
    c.seed = j.at("seed").get<uint64_t>();
    return c;
}

// Uniformly samples a patch window from a random slide of the given domain.
Patch sample_domain_patch(const corpus::Corpus& corpus,
                          const std::vector<std::vector<const corpus::Slide*>>& pools,
                          int domain, int patch_size, Rng& rng) {
    const auto& pool = pools[static_cast<size_t>(domain)];
    const auto* slide = pool[rng.uniform_int(pool.size())];
    const int max_off = slide->image.w - patch_size;
    const int x0 = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(max_off + 1)));
    const int y0 = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(max_off + 1)));
    return make_patch(slide->image.rgb.data(), slide->image.w, slide->image.h, x0, y0,
                      patch_size, slide->slide_id, slide->scanner);
}

}  // namespace

Patch generator_forward(Generator<float>& g, const Patch& patch,
                        const StyleCode& code) {
    if (!code.is_valid()) {
        throw Error("generator_forward: invalid style code");
    }
    Tensor<float> x = to_batch({patch});
    Tensor<float> y = g.infer(concat_style_planes(x, {code}));
    Patch out = patch;
    std::copy(y.v.begin(), y.v.end(), out.pixels.begin());
    return out;
}

std::pair<double, double> classification_losses(Discriminator<float>& d,
                                                const Tensor<float>& real_batch,
                                                const std::vector<int>& true_domains,
                                                const Tensor<float>& fake_batch,
                                                const std::vector<int>& target_domains) {
    for (int dom : true_domains) {
        if (dom < 0 || dom >= ScannerDomain::kNumTraining) {
            throw InvalidDomain("classification_losses: domain " + std::to_string(dom));
        }
    }
    for (int dom : target_domains) {
        if (dom < 0 || dom >= ScannerDomain::kNumTraining) {
            throw InvalidDomain("classification_losses: domain " + std::to_string(dom));
        }
    }
    typename Discriminator<float>::Ctx ctx_r, ctx_f;
    auto out_r = d.forward(real_batch, ctx_r);
    auto out_f = d.forward(fake_batch, ctx_f);
    const double l_r = nn::softmax_ce<float>(out_r.cls_logits, true_domains, nullptr);
    const double l_f = nn::softmax_ce<float>(out_f.cls_logits, target_domains, nullptr);
    return {l_r, l_f};
}

std::pair<double, double> adversarial_loss(Discriminator<float>& d,
                                           const Tensor<float>& real_batch,
                                           const Tensor<float>& fake_batch, Rng& rng) {
    if (!real_batch.same_shape(fake_batch)) {
        throw ShapeError("adversarial_loss: real " + real_batch.shape_str() +
                         " vs fake " + fake_batch.shape_str());
    }
    typename Discriminator<float>::Ctx ctx_r, ctx_f;
    auto out_r = d.forward(real_batch, ctx_r);
    auto out_f = d.forward(fake_batch, ctx_f);
    const auto sr = Discriminator<float>::critic_scores(out_r.adv_map);
    const auto sf = Discriminator<float>::critic_scores(out_f.adv_map);
    double l_adv = 0.0;
    for (size_t i = 0; i < sr.size(); ++i) {
        l_adv += static_cast<double>(sr[i]) - static_cast<double>(sf[i]);
    }
    l_adv /= static_cast<double>(sr.size());

    Tensor<float> x_hat = Tensor<float>::zeros_like(real_batch);
    const size_t per = real_batch.size() / static_cast<size_t>(real_batch.n);
    for (int in = 0; in < real_batch.n; ++in) {
        const float eps = static_cast<float>(rng.uniform());
        const float* rp = real_batch.data() + static_cast<size_t>(in) * per;
        const float* fp = fake_batch.data() + static_cast<size_t>(in) * per;
        float* xp = x_hat.data() + static_cast<size_t>(in) * per;
        for (size_t i = 0; i < per; ++i) xp[i] = eps * rp[i] + (1.0f - eps) * fp[i];
    }
    const double gp = d.gradient_penalty(x_hat, 0.0f);  // loss value only
    return {l_adv, gp};
}

TransferTrainResult train_transfer(const TransferConfig& cfg,
                                   const corpus::Corpus& corpus, Rng& rng) {
    cfg.validate();

    std::vector<std::vector<const corpus::Slide*>> pools(ScannerDomain::kNumTraining);
    for (int dom = 0; dom < ScannerDomain::kNumTraining; ++dom) {
        pools[static_cast<size_t>(dom)] = corpus.by_scanner(dom);
        if (pools[static_cast<size_t>(dom)].empty()) {
            throw InsufficientDomains("train_transfer: corpus has no slides for domain " +
                                      std::to_string(dom));
        }
        for (const auto* s : pools[static_cast<size_t>(dom)]) {
            if (s->image.w < cfg.patch_size || s->image.h < cfg.patch_size) {
                throw InsufficientDomains("train_transfer: slide " + s->slide_id +
                                          " smaller than patch size");
            }
        }
    }

    TransferTrainResult result;
    result.trained.config = cfg;
    result.trained.generator = Generator<float>(cfg.gen_channels);
    result.trained.discriminator = Discriminator<float>(cfg.disc_channels, cfg.patch_size);
    auto& g = result.trained.generator;
    auto& d = result.trained.discriminator;
    g.init(rng);
    d.init(rng);

    auto g_params = g.params();
    auto d_params = d.params();
    nn::Adam<float> adam_g(cfg.lr_g, 0.5, 0.999);
    nn::Adam<float> adam_d(cfg.lr_d, 0.5, 0.999);

    const uint64_t run_seed = rng.next_u64();
    const int n = cfg.batch_size;
    const float lambda_cls = static_cast<float>(cfg.lambda_cls);
    const float lambda_rec = static_cast<float>(cfg.lambda_rec);

    double last_g = 0.0, last_cls_f = 0.0, last_rec = 0.0;
    result.history.reserve(static_cast<size_t>(cfg.iterations));

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        Rng it_rng = Rng::child(run_seed, static_cast<uint64_t>(iter));

        // Constant rate for the first half, then linear decay to zero
        // (the training recipe of the multi-domain GAN this follows).
        const int half = cfg.iterations / 2;
        const double decay =
            iter < half ? 1.0
                        : static_cast<double>(cfg.iterations - iter) /
                              std::max(1, cfg.iterations - half);
        adam_d.set_lr(cfg.lr_d * decay);
        adam_g.set_lr(cfg.lr_g * decay);

        // Balanced real batch with true domains, plus uniform targets.
        std::vector<Patch> real_patches;
        std::vector<int> true_domains, target_domains;
        std::vector<StyleCode> target_codes, source_codes;
        for (int i = 0; i < n; ++i) {
            const int dom = static_cast<int>(it_rng.uniform_int(4));
            real_patches.push_back(
                sample_domain_patch(corpus, pools, dom, cfg.patch_size, it_rng));
            true_domains.push_back(dom);
            const int target = static_cast<int>(it_rng.uniform_int(4));
            target_domains.push_back(target);
            target_codes.push_back(one_hot_code(ScannerDomain{target}));
            source_codes.push_back(one_hot_code(ScannerDomain{dom}));
        }
        Tensor<float> real = to_batch(real_patches);

        // ---- critic update -------------------------------------------
        nn::zero_grads(d_params);
        Tensor<float> fake = g.infer(concat_style_planes(real, target_codes));

        typename Discriminator<float>::Ctx dctx_r, dctx_f;
        auto out_r = d.forward(real, dctx_r);
        auto out_f = d.forward(fake, dctx_f);
        const auto scores_r = Discriminator<float>::critic_scores(out_r.adv_map);
        const auto scores_f = Discriminator<float>::critic_scores(out_f.adv_map);
        double l_adv = 0.0;
        for (int i = 0; i < n; ++i) {
            l_adv += static_cast<double>(scores_r[static_cast<size_t>(i)]) -
                     static_cast<double>(scores_f[static_cast<size_t>(i)]);
        }
        l_adv /= n;

        Tensor<float> dcls;
        const double l_cls_r = nn::softmax_ce<float>(out_r.cls_logits, true_domains, &dcls);
        for (auto& v : dcls.v) v *= lambda_cls;

        const float map_scale =
            1.0f / static_cast<float>(n * out_r.adv_map.h * out_r.adv_map.w);
        Tensor<float> d_adv_r = Tensor<float>::zeros_like(out_r.adv_map);
        d_adv_r.fill(-map_scale);  // d(-L_adv)/d(real map)
        d.backward(d_adv_r, dcls, dctx_r);

        Tensor<float> d_adv_f = Tensor<float>::zeros_like(out_f.adv_map);
        d_adv_f.fill(map_scale);
        Tensor<float> zero_cls = Tensor<float>::zeros_like(out_f.cls_logits);
        d.backward(d_adv_f, zero_cls, dctx_f);

        Tensor<float> x_hat = Tensor<float>::zeros_like(real);
        const size_t per = real.size() / static_cast<size_t>(n);
        for (int i = 0; i < n; ++i) {
            const float eps = static_cast<float>(it_rng.uniform());
            const float* rp = real.data() + static_cast<size_t>(i) * per;
            const float* fp = fake.data() + static_cast<size_t>(i) * per;
            float* xp = x_hat.data() + static_cast<size_t>(i) * per;
            for (size_t j = 0; j < per; ++j) xp[j] = eps * rp[j] + (1.0f - eps) * fp[j];
        }
        const double gp =
            d.gradient_penalty(x_hat, static_cast<float>(cfg.lambda_gp));
        adam_d.step(d_params);

        const double l_d = -l_adv + cfg.lambda_cls * l_cls_r + cfg.lambda_gp * gp;

        // ---- generator update every d_steps_per_g iterations ----------
        if ((iter + 1) % cfg.d_steps_per_g == 0) {
            nn::zero_grads(g_params);

            typename Generator<float>::Ctx gctx1, gctx2;
            Tensor<float> fake_g = g.forward(concat_style_planes(real, target_codes), gctx1);

            typename Discriminator<float>::Ctx dctx_g;
            auto out_g = d.forward(fake_g, dctx_g);
            Tensor<float> dcls_f;
            const double l_cls_f =
                nn::softmax_ce<float>(out_g.cls_logits, target_domains, &dcls_f);
            for (auto& v : dcls_f.v) v *= lambda_cls;

            Tensor<float> rec =
                g.forward(concat_style_planes(fake_g, source_codes), gctx2);
            double l_rec = 0.0;
            Tensor<float> d_rec = Tensor<float>::zeros_like(rec);
            const float rec_scale = lambda_rec / static_cast<float>(rec.size());
            for (size_t i = 0; i < rec.size(); ++i) {
                const float diff = real.v[i] - rec.v[i];
                l_rec += std::abs(static_cast<double>(diff));
                d_rec.v[i] = (diff > 0.0f ? -rec_scale : (diff < 0.0f ? rec_scale : 0.0f));
            }
            l_rec /= static_cast<double>(rec.size());

            Tensor<float> d_fake = slice_rgb(g.backward(d_rec, gctx2));

            Tensor<float> d_adv_g = Tensor<float>::zeros_like(out_g.adv_map);
            d_adv_g.fill(-1.0f / static_cast<float>(n * out_g.adv_map.h * out_g.adv_map.w));
            d_fake += d.backward(d_adv_g, dcls_f, dctx_g);

            g.backward(d_fake, gctx1);
            adam_g.step(g_params);

            const auto scores_g = Discriminator<float>::critic_scores(out_g.adv_map);
            double mean_fake = 0.0;
            for (float s : scores_g) mean_fake += s;
            mean_fake /= n;
            double mean_real = 0.0;
            for (float s : scores_r) mean_real += s;
            mean_real /= n;
            last_cls_f = l_cls_f;
            last_rec = l_rec;
            last_g = (mean_real - mean_fake) + cfg.lambda_cls * l_cls_f +
                     cfg.lambda_rec * l_rec;
        }

        TransferLossEntry entry;
        entry.iteration = iter;
        entry.loss_d = l_d;
        entry.loss_adv = l_adv;
        entry.loss_cls_real = l_cls_r;
        entry.grad_penalty = gp;
        entry.loss_g = last_g;
        entry.loss_cls_fake = last_cls_f;
        entry.loss_rec = last_rec;
        result.history.push_back(entry);
    }
    return result;
}

void save_transfer_checkpoint(const std::string& path, const TrainedTransfer& t) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot open checkpoint for write: " + path);
    os.write(kMagic, 8);
    nn::write_string(os, config_to_json(t.config).dump());

    // const_cast: params() is non-const because it exposes mutable views;
    // serialization only reads.
    auto& self = const_cast<TrainedTransfer&>(t);
    auto gp = self.generator.params();
    auto dp = self.discriminator.params();
    nn::write_u32(os, static_cast<uint32_t>(gp.size() + dp.size()));
    for (const auto& p : gp) nn::write_tensor(os, p.name, *p.w);
    for (const auto& p : dp) nn::write_tensor(os, p.name, *p.w);
    if (!os) throw CheckpointError("write failed: " + path);
}

TrainedTransfer load_transfer_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0) {
        throw CheckpointError("not a transfer checkpoint: " + path);
    }
    TrainedTransfer t;
    try {
        t.config = config_from_json(json::parse(nn::read_string(is)));
    } catch (const json::exception& e) {
        throw CheckpointError("bad checkpoint header in " + path + ": " + e.what());
    }
    t.generator = Generator<float>(t.config.gen_channels);
    t.discriminator = Discriminator<float>(t.config.disc_channels, t.config.patch_size);

    const uint32_t count = nn::read_u32(is);
    std::map<std::string, Tensor<float>> tensors;
    for (uint32_t i = 0; i < count; ++i) {
        std::string name;
        Tensor<float> tensor = nn::read_tensor(is, name);
        tensors.emplace(std::move(name), std::move(tensor));
    }

    auto load_into = [&](std::vector<nn::ParamView<float>> params) {
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
    };
    load_into(t.generator.params());
    load_into(t.discriminator.params());
    return t;
}

}  // namespace mitodet::transfer
