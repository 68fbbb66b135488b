#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tomo/tensor.hpp"

namespace tomo {

// Reverse-mode differentiation over a static chain of layers: enough for
// the DCGAN generator/discriminator and the shallow corruption surrogate,
// nothing more. Activations are cached per layer (tape), gradients are
// exact adjoints of the forward ops.

enum class LayerKind {
    Dense,
    Conv2d,
    Deconv2d,
    BatchNorm,
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
    MaskMul,
    AddShortcut,
    Reshape,
};

const char* kind_name(LayerKind k);

struct LayerSpec {
    LayerKind kind{};
    int in_ch = 0, out_ch = 0;   // conv/deconv channels
    int kh = 0, kw = 0;          // kernel extents (odd, 3 or 5)
    int stride = 1, pad = 0;
    int out_h = 0, out_w = 0;    // deconv2d declared output size
    int in_features = 0, out_features = 0;  // dense
    int channels = 0;            // batchnorm
    float alpha = 0.0f;          // leaky-relu slope
    int rs_c = 0, rs_h = 0, rs_w = 0;  // reshape target (per sample)

    static LayerSpec dense(int in_f, int out_f);
    static LayerSpec conv2d(int in_ch, int out_ch, int k, int stride, int pad);
    // out_h/out_w: spatial size of the output; the layer is the exact
    // adjoint of conv2d(out_ch->in_ch, k, stride, pad) applied to that size
    static LayerSpec deconv2d(int in_ch, int out_ch, int k, int stride, int pad,
                              int out_h, int out_w);
    static LayerSpec batchnorm(int channels);
    static LayerSpec relu();
    static LayerSpec lrelu(float alpha);
    static LayerSpec tanh_out();
    static LayerSpec sigmoid_out();
    static LayerSpec mask_mul(int c, int h, int w);
    static LayerSpec add_shortcut();
    static LayerSpec reshape(int c, int h, int w);
};

enum class Mode { Train, Eval };

struct Net {
    std::vector<LayerSpec> layers;
    // "layer{i}.{weight|bias|gamma|beta|mask}"
    std::map<std::string, Tensor> params;
    // "layer{i}.{running_mean|running_var}" (batch-norm inference stats)
    std::map<std::string, Tensor> running;
    // Adam state, keyed identically to params
    std::map<std::string, Tensor> opt_m, opt_v;
    int64_t opt_t = 0;
};

// Gaussian(0, 0.02) weights, zero biases, gamma=1/beta=0, mask=1.
Net build_net(const std::vector<LayerSpec>& layers, uint64_t seed);

std::string param_key(int layer, const char* name);

struct Tape {
    bool valid = false;
    Mode mode = Mode::Eval;
    std::vector<Tensor> acts;              // acts[i] = input of layer i
    std::map<int, Tensor> bn_mean, bn_var; // train-mode batch stats
    std::map<int, Tensor> bn_xhat;
};

// Forward pass. Never mutates the net (batch-norm running stats are
// updated separately, see update_running_stats). Layer outputs are scanned
// for non-finite values; a hit raises NumericError naming the layer.
Tensor forward(const Net& net, const Tensor& input, Mode mode, Tape* tape = nullptr);

using ParamGrads = std::map<std::string, Tensor>;

// Reverse-mode gradients of <upstream, forward(net, input)> w.r.t. the
// input and (when param_grads is non-null) every parameter. Requires the
// tape filled by the matching forward call.
Tensor backward(const Net& net, const Tape& tape, const Tensor& upstream,
                ParamGrads* param_grads);

// Blend train-mode batch stats into the running averages:
// running = momentum * running + (1 - momentum) * batch.
void update_running_stats(Net& net, const Tape& tape, float momentum = 0.9f);

void adam_step(Net& net, const ParamGrads& grads, float lr, float beta1 = 0.9f,
               float beta2 = 0.999f, float eps = 1e-8f);
void sgd_step(Net& net, const ParamGrads& grads, float lr);

// Standalone Adam slot for tensors that live outside a net (latent codes).
struct AdamState {
    Tensor m, v;
    int64_t t = 0;
    void step(Tensor& w, const Tensor& g, float lr, float beta1 = 0.9f,
              float beta2 = 0.999f, float eps = 1e-8f);
};

}  // namespace tomo
