#pragma once

#include <cstdint>
#include <string>

#include "tomo/datasets.hpp"
#include "tomo/net.hpp"
#include "tomo/ntc.hpp"

namespace tomo {

struct GanConfig {
    int latent_dim = 64;
    int base_channels = 32;  // must be even
    int epochs = 10;
    int batch_size = 64;
    float lr = 2e-4f;
    float beta1 = 0.5f;
    uint64_t seed = 0;

    void validate() const;
};

struct NetCheckpoint {
    Net net;  // generator
    int latent_dim = 64;
    int base_channels = 32;
    int image_side = 28;
    int64_t epoch = 0;
    uint64_t seed = 0;
    std::string data_tag;
};

// z (k) -> dense -> reshape -> two stride-2 deconv blocks (batchnorm +
// relu) -> 3x3 conv -> tanh; callers map the tanh output to [0,1].
Net build_generator(const GanConfig& cfg, uint64_t init_seed);
// 28x28 -> two stride-2 convs (leaky-relu 0.2) -> dense -> sigmoid.
Net build_discriminator(const GanConfig& cfg, uint64_t init_seed);

// Eval-mode generator forward over a [n,k] latent batch; returns [n,1,s,s]
// images mapped to [0,1] via (t+1)/2.
Tensor gen_forward(const Net& gen, const Tensor& z_batch, Tape* tape);
// Chain rule through the [0,1] mapping and the net; returns [n,k].
Tensor gen_backward(const Net& gen, const Tape& tape, const Tensor& grad_mapped);

// Alternating non-saturating steps (one discriminator step, one generator
// step per batch), z ~ U(-1,1)^k. Deterministic for a fixed seed and
// thread count. When ckpt_path is non-empty the latest checkpoint is
// rewritten there after every epoch.
NetCheckpoint train_dcgan(const ImageSet& data, const GanConfig& cfg,
                          const std::string& ckpt_path = "");

// Discriminator access for held-out scoring (training returns only G).
Net train_dcgan_with_disc(const ImageSet& data, const GanConfig& cfg,
                          NetCheckpoint& out_ckpt, const std::string& ckpt_path = "");

// Eval-mode sample; rejects any |z_i| > 1.
Image generate(const NetCheckpoint& ckpt, const Tensor& z);
Tensor generate_batch(const NetCheckpoint& ckpt, const Tensor& zs);

void save_ntc(const NetCheckpoint& ckpt, const std::string& path);
NetCheckpoint load_ntc(const std::string& path);

// Architecture descriptor codec shared with the surrogate persistence.
NtcTensor encode_arch(const std::vector<LayerSpec>& layers);
std::vector<LayerSpec> decode_arch(const NtcTensor& t);

}  // namespace tomo
