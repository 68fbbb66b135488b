#include "tomo/gan.hpp"

#include <cmath>

#include "tomo/rng.hpp"

namespace tomo {

namespace {

constexpr int kSide = 28;

void check_unit_range(const Tensor& t, const char* who) {
    for (float v : t.data)
        if (!(v >= 0.0f && v <= 1.0f))
            throw ValidationError(std::string(who) + ": values must lie in [0,1]");
}

// d(-log s)/ds and d(-log(1-s))/ds with the score clamped away from 0/1
float bce_grad_real(float s, float inv_batch) {
    const float c = s < 1e-6f ? 1e-6f : s;
    return -inv_batch / c;
}
float bce_grad_fake(float s, float inv_batch) {
    const float c = s > 1.0f - 1e-6f ? 1.0f - 1e-6f : s;
    return inv_batch / (1.0f - c);
}

double bce_loss(const Tensor& scores, bool target_real) {
    double acc = 0.0;
    for (float s : scores.data) {
        const double c = std::min(std::max(static_cast<double>(s), 1e-6), 1.0 - 1e-6);
        acc += target_real ? -std::log(c) : -std::log(1.0 - c);
    }
    return acc / static_cast<double>(scores.data.size());
}

void add_grads(ParamGrads& into, const ParamGrads& other) {
    for (auto& [k, g] : into) {
        const Tensor& o = other.at(k);
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += o[i];
    }
}

}  // namespace

void GanConfig::validate() const {
    if (latent_dim < 2) throw ValidationError("gan: latent_dim must be >= 2");
    if (batch_size < 2) throw ValidationError("gan: batch_size must be >= 2");
    if (base_channels < 2 || base_channels % 2 != 0)
        throw ValidationError("gan: base_channels must be even and >= 2");
    if (epochs < 0) throw ValidationError("gan: epochs must be >= 0");
}

Net build_generator(const GanConfig& cfg, uint64_t init_seed) {
    cfg.validate();
    const int k = cfg.latent_dim;
    const int bc = cfg.base_channels;
    std::vector<LayerSpec> layers = {
        LayerSpec::dense(k, 2 * bc * 7 * 7),
        LayerSpec::reshape(2 * bc, 7, 7),
        LayerSpec::batchnorm(2 * bc),
        LayerSpec::relu(),
        LayerSpec::deconv2d(2 * bc, bc, 5, 2, 2, 14, 14),
        LayerSpec::batchnorm(bc),
        LayerSpec::relu(),
        LayerSpec::deconv2d(bc, bc / 2, 5, 2, 2, kSide, kSide),
        LayerSpec::batchnorm(bc / 2),
        LayerSpec::relu(),
        LayerSpec::conv2d(bc / 2, 1, 3, 1, 1),
        LayerSpec::tanh_out(),
    };
    return build_net(layers, init_seed);
}

Net build_discriminator(const GanConfig& cfg, uint64_t init_seed) {
    cfg.validate();
    const int bc = cfg.base_channels;
    std::vector<LayerSpec> layers = {
        LayerSpec::conv2d(1, bc, 5, 2, 2),
        LayerSpec::lrelu(0.2f),
        LayerSpec::conv2d(bc, 2 * bc, 5, 2, 2),
        LayerSpec::lrelu(0.2f),
        LayerSpec::dense(2 * bc * 7 * 7, 1),
        LayerSpec::sigmoid_out(),
    };
    return build_net(layers, init_seed);
}

Tensor gen_forward(const Net& gen, const Tensor& z_batch, Tape* tape) {
    Tensor out = forward(gen, z_batch, Mode::Eval, tape);
    for (float& v : out.data) v = 0.5f * (v + 1.0f);
    return out;
}

Tensor gen_backward(const Net& gen, const Tape& tape, const Tensor& grad_mapped) {
    Tensor up = grad_mapped;
    for (float& v : up.data) v *= 0.5f;
    return backward(gen, tape, up, nullptr);
}

static Tensor train_forward_mapped(const Net& gen, const Tensor& z_batch, Tape& tape) {
    Tensor out = forward(gen, z_batch, Mode::Train, &tape);
    for (float& v : out.data) v = 0.5f * (v + 1.0f);
    return out;
}

Net train_dcgan_with_disc(const ImageSet& data, const GanConfig& cfg,
                          NetCheckpoint& out_ckpt, const std::string& ckpt_path) {
    cfg.validate();
    check_unit_range(data.images, "train_dcgan");
    if (data.side() != kSide)
        throw ValidationError("train_dcgan: expected " + std::to_string(kSide) +
                              "x" + std::to_string(kSide) + " images, got side " +
                              std::to_string(data.side()));
    if (data.count() < cfg.batch_size)
        throw ValidationError("train_dcgan: fewer images than one batch");

    Net gen = build_generator(cfg, cfg.seed + 1);
    Net disc = build_discriminator(cfg, cfg.seed + 2);
    Rng rng(cfg.seed);

    const int b = cfg.batch_size;
    const int k = cfg.latent_dim;
    const float inv_b = 1.0f / static_cast<float>(b);
    const int64_t n = data.count();
    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

    auto draw_z = [&](int count) {
        Tensor z({count, k});
        for (float& v : z.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        return z;
    };

    out_ckpt = NetCheckpoint{};
    out_ckpt.latent_dim = k;
    out_ckpt.base_channels = cfg.base_channels;
    out_ckpt.image_side = kSide;
    out_ckpt.seed = cfg.seed;
    out_ckpt.data_tag = data.source;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        const int64_t batches = n / b;
        for (int64_t bi = 0; bi < batches; ++bi) {
            try {
                Tensor real({b, 1, kSide, kSide});
                for (int s = 0; s < b; ++s)
                    std::copy_n(data.images.ptr() + order[static_cast<size_t>(bi * b + s)] *
                                                        kSide * kSide,
                                kSide * kSide, real.ptr() + static_cast<int64_t>(s) * kSide * kSide);

                // discriminator step: one real batch up, one fake batch down
                Tape tape_gen;
                Tensor fake = train_forward_mapped(gen, draw_z(b), tape_gen);
                update_running_stats(gen, tape_gen);

                Tape tape_real, tape_fake;
                Tensor s_real = forward(disc, real, Mode::Train, &tape_real);
                Tensor s_fake = forward(disc, fake, Mode::Train, &tape_fake);
                const double loss_d = bce_loss(s_real, true) + bce_loss(s_fake, false);
                if (!std::isfinite(loss_d))
                    throw NumericError("non-finite discriminator loss");

                Tensor up_real(s_real.dims), up_fake(s_fake.dims);
                for (int64_t i = 0; i < s_real.numel(); ++i)
                    up_real[i] = bce_grad_real(s_real[i], inv_b);
                for (int64_t i = 0; i < s_fake.numel(); ++i)
                    up_fake[i] = bce_grad_fake(s_fake[i], inv_b);
                ParamGrads gd, gd_fake;
                backward(disc, tape_real, up_real, &gd);
                backward(disc, tape_fake, up_fake, &gd_fake);
                add_grads(gd, gd_fake);
                adam_step(disc, gd, cfg.lr, cfg.beta1);

                // generator step: non-saturating loss on fresh noise
                Tape tape_gen2;
                Tensor fake2 = train_forward_mapped(gen, draw_z(b), tape_gen2);
                update_running_stats(gen, tape_gen2);
                Tape tape_d2;
                Tensor s_g = forward(disc, fake2, Mode::Train, &tape_d2);
                const double loss_g = bce_loss(s_g, true);
                if (!std::isfinite(loss_g))
                    throw NumericError("non-finite generator loss");
                Tensor up_g(s_g.dims);
                for (int64_t i = 0; i < s_g.numel(); ++i)
                    up_g[i] = bce_grad_real(s_g[i], inv_b);
                Tensor g_img = backward(disc, tape_d2, up_g, nullptr);
                for (float& v : g_img.data) v *= 0.5f;  // through (t+1)/2
                ParamGrads gg;
                backward(gen, tape_gen2, g_img, &gg);
                adam_step(gen, gg, cfg.lr, cfg.beta1);
            } catch (const NumericError& e) {
                throw NumericError("train_dcgan: epoch " + std::to_string(epoch) +
                                   " batch " + std::to_string(bi) + ": " + e.what());
            }
        }
        out_ckpt.net = gen;
        out_ckpt.epoch = epoch + 1;
        if (!ckpt_path.empty()) save_ntc(out_ckpt, ckpt_path);
    }
    out_ckpt.net = gen;
    out_ckpt.epoch = cfg.epochs;
    return disc;
}

NetCheckpoint train_dcgan(const ImageSet& data, const GanConfig& cfg,
                          const std::string& ckpt_path) {
    NetCheckpoint ckpt;
    train_dcgan_with_disc(data, cfg, ckpt, ckpt_path);
    return ckpt;
}

Image generate(const NetCheckpoint& ckpt, const Tensor& z) {
    if (z.rank() != 1 || z.dim(0) != ckpt.latent_dim)
        throw ValidationError("generate: expected z of dim " +
                              std::to_string(ckpt.latent_dim) + ", got " + z.shape_str());
    for (float v : z.data)
        if (!(v >= -1.0f && v <= 1.0f))
            throw ValidationError("generate: z outside [-1,1] box");
    Tensor batch = z.reshaped({1, ckpt.latent_dim});
    Tensor img = gen_forward(ckpt.net, batch, nullptr);
    return img.reshaped({ckpt.image_side, ckpt.image_side});
}

Tensor generate_batch(const NetCheckpoint& ckpt, const Tensor& zs) {
    if (zs.rank() != 2 || zs.dim(1) != ckpt.latent_dim)
        throw ValidationError("generate_batch: expected [n," +
                              std::to_string(ckpt.latent_dim) + "], got " + zs.shape_str());
    for (float v : zs.data)
        if (!(v >= -1.0f && v <= 1.0f))
            throw ValidationError("generate_batch: z outside [-1,1] box");
    Tensor img = gen_forward(ckpt.net, zs, nullptr);
    return img.reshaped({zs.dim(0), ckpt.image_side, ckpt.image_side});
}

NtcTensor encode_arch(const std::vector<LayerSpec>& layers) {
    std::vector<int64_t> rows;
    for (const LayerSpec& l : layers) {
        int64_t r[10] = {0};
        switch (l.kind) {
            case LayerKind::Dense:
                r[0] = 0; r[1] = l.in_features; r[2] = l.out_features;
                break;
            case LayerKind::Conv2d:
                r[0] = 1; r[1] = l.in_ch; r[2] = l.out_ch; r[3] = l.kh;
                r[4] = l.stride; r[5] = l.pad;
                break;
            case LayerKind::Deconv2d:
                r[0] = 2; r[1] = l.in_ch; r[2] = l.out_ch; r[3] = l.kh;
                r[4] = l.stride; r[5] = l.pad; r[6] = l.out_h; r[7] = l.out_w;
                break;
            case LayerKind::BatchNorm:
                r[0] = 3; r[1] = l.channels;
                break;
            case LayerKind::Relu: r[0] = 4; break;
            case LayerKind::LeakyRelu:
                r[0] = 5; r[1] = std::llround(static_cast<double>(l.alpha) * 1e6);
                break;
            case LayerKind::Tanh: r[0] = 6; break;
            case LayerKind::Sigmoid: r[0] = 7; break;
            case LayerKind::MaskMul:
                r[0] = 8; r[1] = l.rs_c; r[2] = l.rs_h; r[3] = l.rs_w;
                break;
            case LayerKind::AddShortcut: r[0] = 9; break;
            case LayerKind::Reshape:
                r[0] = 10; r[1] = l.rs_c; r[2] = l.rs_h; r[3] = l.rs_w;
                break;
        }
        rows.insert(rows.end(), r, r + 10);
    }
    return NtcTensor::from_i64(rows, {static_cast<int64_t>(layers.size()), 10});
}

std::vector<LayerSpec> decode_arch(const NtcTensor& t) {
    if (t.dims.size() != 2 || t.dims[1] != 10)
        throw ValidationError("checkpoint: malformed arch tensor " +
                              Tensor::shape_str(t.dims));
    const std::vector<int64_t> v = t.to_i64();
    std::vector<LayerSpec> layers;
    for (int64_t i = 0; i < t.dims[0]; ++i) {
        const int64_t* r = v.data() + i * 10;
        switch (r[0]) {
            case 0: layers.push_back(LayerSpec::dense(static_cast<int>(r[1]),
                                                      static_cast<int>(r[2]))); break;
            case 1: layers.push_back(LayerSpec::conv2d(static_cast<int>(r[1]),
                                                       static_cast<int>(r[2]),
                                                       static_cast<int>(r[3]),
                                                       static_cast<int>(r[4]),
                                                       static_cast<int>(r[5]))); break;
            case 2: layers.push_back(LayerSpec::deconv2d(static_cast<int>(r[1]),
                                                         static_cast<int>(r[2]),
                                                         static_cast<int>(r[3]),
                                                         static_cast<int>(r[4]),
                                                         static_cast<int>(r[5]),
                                                         static_cast<int>(r[6]),
                                                         static_cast<int>(r[7]))); break;
            case 3: layers.push_back(LayerSpec::batchnorm(static_cast<int>(r[1]))); break;
            case 4: layers.push_back(LayerSpec::relu()); break;
            case 5: layers.push_back(LayerSpec::lrelu(static_cast<float>(r[1]) * 1e-6f)); break;
            case 6: layers.push_back(LayerSpec::tanh_out()); break;
            case 7: layers.push_back(LayerSpec::sigmoid_out()); break;
            case 8: layers.push_back(LayerSpec::mask_mul(static_cast<int>(r[1]),
                                                         static_cast<int>(r[2]),
                                                         static_cast<int>(r[3]))); break;
            case 9: layers.push_back(LayerSpec::add_shortcut()); break;
            case 10: layers.push_back(LayerSpec::reshape(static_cast<int>(r[1]),
                                                         static_cast<int>(r[2]),
                                                         static_cast<int>(r[3]))); break;
            default:
                throw ValidationError("checkpoint: unknown layer opcode " +
                                      std::to_string(r[0]));
        }
    }
    return layers;
}

void save_ntc(const NetCheckpoint& ckpt, const std::string& path) {
    NtcFile f;
    f.put("arch", encode_arch(ckpt.net.layers));
    for (const auto& [k, t] : ckpt.net.params) f.put(k, NtcTensor::from_f32(t));
    for (const auto& [k, t] : ckpt.net.running) f.put(k, NtcTensor::from_f32(t));
    f.put("meta.latent_dim", NtcTensor::scalar_i64(ckpt.latent_dim));
    f.put("meta.base_channels", NtcTensor::scalar_i64(ckpt.base_channels));
    f.put("meta.image_side", NtcTensor::scalar_i64(ckpt.image_side));
    f.put("meta.epoch", NtcTensor::scalar_i64(ckpt.epoch));
    f.put("meta.seed", NtcTensor::scalar_i64(static_cast<int64_t>(ckpt.seed)));
    f.put("meta.data_tag", NtcTensor::from_string(ckpt.data_tag));
    ntc_save(f, path);
}

NetCheckpoint load_ntc(const std::string& path) {
    const NtcFile f = ntc_load(path);
    NetCheckpoint ckpt;
    ckpt.net.layers = decode_arch(f.get("arch"));
    // a skeleton built from the descriptor pins the expected key set
    Net skeleton = build_net(ckpt.net.layers, 0);
    for (const auto& [k, t] : skeleton.params) {
        const NtcTensor& stored = f.get(k);
        Tensor loaded = stored.to_f32();
        if (!loaded.same_dims(t))
            throw ValidationError("checkpoint: " + path + ": tensor " + k +
                                  " has dims " + loaded.shape_str() + ", expected " +
                                  t.shape_str());
        ckpt.net.params[k] = std::move(loaded);
    }
    for (const auto& [k, t] : skeleton.running) {
        Tensor loaded = f.get(k).to_f32();
        if (!loaded.same_dims(t))
            throw ValidationError("checkpoint: " + path + ": running stat " + k +
                                  " has wrong dims");
        ckpt.net.running[k] = std::move(loaded);
    }
    for (const auto& [k, t] : f.tensors) {
        if (k == "arch" || k.rfind("meta.", 0) == 0) continue;
        if (!skeleton.params.count(k) && !skeleton.running.count(k))
            throw ValidationError("checkpoint: " + path + ": unexpected tensor " + k);
    }
    ckpt.net.opt_m = skeleton.opt_m;
    ckpt.net.opt_v = skeleton.opt_v;
    ckpt.latent_dim = static_cast<int>(f.get("meta.latent_dim").scalar_as_i64());
    ckpt.base_channels = static_cast<int>(f.get("meta.base_channels").scalar_as_i64());
    ckpt.image_side = static_cast<int>(f.get("meta.image_side").scalar_as_i64());
    ckpt.epoch = f.get("meta.epoch").scalar_as_i64();
    ckpt.seed = static_cast<uint64_t>(f.get("meta.seed").scalar_as_i64());
    ckpt.data_tag = f.get("meta.data_tag").to_string();
    return ckpt;
}

}  // namespace tomo
