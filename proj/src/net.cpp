#include "tomo/net.hpp"

#include <cblas.h>

#include <cmath>
#include <cstring>

#include "tomo/parallel.hpp"
#include "tomo/rng.hpp"

namespace tomo {

namespace {

// OpenBLAS must not spin up its own pool: batch parallelism lives in
// parallel_chunks and nested BLAS threading would break run-to-run
// determinism for a fixed --threads value.
struct BlasSingleThread {
    BlasSingleThread() { openblas_set_num_threads(1); }
} g_blas_single_thread;

int conv_out(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

void check(bool ok, int layer, LayerKind kind, const std::string& msg) {
    if (!ok)
        throw ValidationError("layer" + std::to_string(layer) + " (" +
                              kind_name(kind) + "): " + msg);
}

// col[(c*kh+ky)*kw+kx, oy*ow+ox] = x[c, oy*s-p+ky, ox*s-p+kx], 0 outside
void im2col(const float* x, int ch, int h, int w, int kh, int kw, int stride,
            int pad, int oh, int ow, float* col) {
    for (int c = 0; c < ch; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                float* dst = col + (static_cast<size_t>((c * kh + ky) * kw + kx)) *
                                       (static_cast<size_t>(oh) * ow);
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) {
                        std::memset(dst + static_cast<size_t>(oy) * ow, 0,
                                    sizeof(float) * static_cast<size_t>(ow));
                        continue;
                    }
                    const float* src = x + (static_cast<size_t>(c) * h + iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        dst[static_cast<size_t>(oy) * ow + ox] =
                            (ix < 0 || ix >= w) ? 0.0f : src[ix];
                    }
                }
            }
        }
    }
}

// scatter-add transpose of im2col
void col2im(const float* col, int ch, int h, int w, int kh, int kw, int stride,
            int pad, int oh, int ow, float* x) {
    std::memset(x, 0, sizeof(float) * static_cast<size_t>(ch) * h * w);
    for (int c = 0; c < ch; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                const float* src = col + (static_cast<size_t>((c * kh + ky) * kw + kx)) *
                                             (static_cast<size_t>(oh) * ow);
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    float* dst = x + (static_cast<size_t>(c) * h + iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w)
                            dst[ix] += src[static_cast<size_t>(oy) * ow + ox];
                    }
                }
            }
        }
    }
}

void sgemm_rm(bool ta, bool tb, int m, int n, int k, const float* a, int lda,
              const float* b, int ldb, float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
                tb ? CblasTrans : CblasNoTrans, m, n, k, 1.0f, a, lda, b, ldb,
                beta, c, ldc);
}

struct ConvDims {
    int n, cin, h, w, oh, ow;
};

ConvDims conv_dims(const Tensor& x, const LayerSpec& l, int idx) {
    check(x.rank() == 4, idx, l.kind, "expected rank-4 input, got " + x.shape_str());
    check(x.dims[1] == l.in_ch, idx, l.kind,
          "expected " + std::to_string(l.in_ch) + " channels, got " + x.shape_str());
    ConvDims d;
    d.n = static_cast<int>(x.dims[0]);
    d.cin = static_cast<int>(x.dims[1]);
    d.h = static_cast<int>(x.dims[2]);
    d.w = static_cast<int>(x.dims[3]);
    d.oh = conv_out(d.h, l.kh, l.stride, l.pad);
    d.ow = conv_out(d.w, l.kw, l.stride, l.pad);
    check(d.oh > 0 && d.ow > 0, idx, l.kind, "kernel larger than padded input");
    return d;
}

}  // namespace

const char* kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Dense: return "dense";
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::Deconv2d: return "deconv2d";
        case LayerKind::BatchNorm: return "batchnorm";
        case LayerKind::Relu: return "relu";
        case LayerKind::LeakyRelu: return "lrelu";
        case LayerKind::Tanh: return "tanh";
        case LayerKind::Sigmoid: return "sigmoid";
        case LayerKind::MaskMul: return "mask_mul";
        case LayerKind::AddShortcut: return "add_shortcut";
        case LayerKind::Reshape: return "reshape";
    }
    return "?";
}

static void check_kernel(int k, int stride) {
    if (k != 3 && k != 5)
        throw ValidationError("conv kernels must be 3 or 5, got " + std::to_string(k));
    if (stride != 1 && stride != 2)
        throw ValidationError("conv stride must be 1 or 2, got " + std::to_string(stride));
}

LayerSpec LayerSpec::dense(int in_f, int out_f) {
    LayerSpec l;
    l.kind = LayerKind::Dense;
    l.in_features = in_f;
    l.out_features = out_f;
    return l;
}
LayerSpec LayerSpec::conv2d(int in_ch, int out_ch, int k, int stride, int pad) {
    check_kernel(k, stride);
    LayerSpec l;
    l.kind = LayerKind::Conv2d;
    l.in_ch = in_ch;
    l.out_ch = out_ch;
    l.kh = l.kw = k;
    l.stride = stride;
    l.pad = pad;
    return l;
}
LayerSpec LayerSpec::deconv2d(int in_ch, int out_ch, int k, int stride, int pad,
                              int out_h, int out_w) {
    check_kernel(k, stride);
    LayerSpec l;
    l.kind = LayerKind::Deconv2d;
    l.in_ch = in_ch;
    l.out_ch = out_ch;
    l.kh = l.kw = k;
    l.stride = stride;
    l.pad = pad;
    l.out_h = out_h;
    l.out_w = out_w;
    return l;
}
LayerSpec LayerSpec::batchnorm(int channels) {
    LayerSpec l;
    l.kind = LayerKind::BatchNorm;
    l.channels = channels;
    return l;
}
LayerSpec LayerSpec::relu() {
    LayerSpec l;
    l.kind = LayerKind::Relu;
    return l;
}
LayerSpec LayerSpec::lrelu(float alpha) {
    LayerSpec l;
    l.kind = LayerKind::LeakyRelu;
    l.alpha = alpha;
    return l;
}
LayerSpec LayerSpec::tanh_out() {
    LayerSpec l;
    l.kind = LayerKind::Tanh;
    return l;
}
LayerSpec LayerSpec::sigmoid_out() {
    LayerSpec l;
    l.kind = LayerKind::Sigmoid;
    return l;
}
LayerSpec LayerSpec::mask_mul(int c, int h, int w) {
    LayerSpec l;
    l.kind = LayerKind::MaskMul;
    l.rs_c = c;
    l.rs_h = h;
    l.rs_w = w;
    return l;
}
LayerSpec LayerSpec::add_shortcut() {
    LayerSpec l;
    l.kind = LayerKind::AddShortcut;
    return l;
}
LayerSpec LayerSpec::reshape(int c, int h, int w) {
    LayerSpec l;
    l.kind = LayerKind::Reshape;
    l.rs_c = c;
    l.rs_h = h;
    l.rs_w = w;
    return l;
}

std::string param_key(int layer, const char* name) {
    return "layer" + std::to_string(layer) + "." + name;
}

Net build_net(const std::vector<LayerSpec>& layers, uint64_t seed) {
    Net net;
    net.layers = layers;
    Rng rng(seed);
    auto gauss = [&rng](Tensor& t) {
        for (float& v : t.data) v = static_cast<float>(rng.gaussian() * 0.02);
    };
    for (size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        const int li = static_cast<int>(i);
        switch (l.kind) {
            case LayerKind::Dense: {
                Tensor w({l.out_features, l.in_features});
                gauss(w);
                net.params[param_key(li, "weight")] = std::move(w);
                net.params[param_key(li, "bias")] = Tensor({l.out_features});
                break;
            }
            case LayerKind::Conv2d: {
                Tensor w({l.out_ch, l.in_ch, l.kh, l.kw});
                gauss(w);
                net.params[param_key(li, "weight")] = std::move(w);
                net.params[param_key(li, "bias")] = Tensor({l.out_ch});
                break;
            }
            case LayerKind::Deconv2d: {
                Tensor w({l.in_ch, l.out_ch, l.kh, l.kw});
                gauss(w);
                net.params[param_key(li, "weight")] = std::move(w);
                net.params[param_key(li, "bias")] = Tensor({l.out_ch});
                break;
            }
            case LayerKind::BatchNorm: {
                Tensor g({l.channels});
                g.fill(1.0f);
                net.params[param_key(li, "gamma")] = std::move(g);
                net.params[param_key(li, "beta")] = Tensor({l.channels});
                net.running[param_key(li, "running_mean")] = Tensor({l.channels});
                Tensor rv({l.channels});
                rv.fill(1.0f);
                net.running[param_key(li, "running_var")] = std::move(rv);
                break;
            }
            case LayerKind::MaskMul: {
                Tensor m({l.rs_c, l.rs_h, l.rs_w});
                m.fill(1.0f);
                net.params[param_key(li, "mask")] = std::move(m);
                break;
            }
            default:
                break;
        }
    }
    for (const auto& [k, v] : net.params) {
        net.opt_m[k] = Tensor(v.dims);
        net.opt_v[k] = Tensor(v.dims);
    }
    return net;
}

static const Tensor& param(const Net& net, int layer, const char* name) {
    auto it = net.params.find(param_key(layer, name));
    if (it == net.params.end())
        throw ValidationError("missing parameter " + param_key(layer, name));
    return it->second;
}

static const Tensor& running_stat(const Net& net, int layer, const char* name) {
    auto it = net.running.find(param_key(layer, name));
    if (it == net.running.end())
        throw ValidationError("missing running stat " + param_key(layer, name));
    return it->second;
}

static constexpr float kBnEps = 1e-5f;

Tensor forward(const Net& net, const Tensor& input, Mode mode, Tape* tape) {
    Tape local;
    Tape& tp = tape ? *tape : local;
    tp.valid = false;
    tp.mode = mode;
    tp.acts.assign(net.layers.size() + 1, Tensor());
    tp.bn_mean.clear();
    tp.bn_var.clear();
    tp.bn_xhat.clear();

    if (!all_finite(input)) throw NumericError("forward: non-finite input");
    tp.acts[0] = input;

    for (size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& l = net.layers[i];
        const int li = static_cast<int>(i);
        const Tensor& x = tp.acts[i];
        Tensor y;
        switch (l.kind) {
            case LayerKind::Dense: {
                check(x.rank() >= 2, li, l.kind, "expected batched input");
                const int n = static_cast<int>(x.dims[0]);
                const int64_t feat = x.numel() / n;
                check(feat == l.in_features, li, l.kind,
                      "expected " + std::to_string(l.in_features) +
                          " features, got " + x.shape_str());
                const Tensor& w = param(net, li, "weight");
                const Tensor& b = param(net, li, "bias");
                y = Tensor({n, l.out_features});
                // per-sample gemv keeps batched and single-sample results
                // bit-identical
                parallel_for(n, [&](int64_t s) {
                    const float* xs = x.ptr() + s * l.in_features;
                    float* ys = y.ptr() + s * l.out_features;
                    cblas_sgemv(CblasRowMajor, CblasNoTrans, l.out_features,
                                l.in_features, 1.0f, w.ptr(), l.in_features, xs, 1,
                                0.0f, ys, 1);
                    for (int j = 0; j < l.out_features; ++j) ys[j] += b[j];
                });
                break;
            }
            case LayerKind::Conv2d: {
                const ConvDims d = conv_dims(x, l, li);
                const Tensor& w = param(net, li, "weight");
                const Tensor& b = param(net, li, "bias");
                const int ckk = l.in_ch * l.kh * l.kw;
                y = Tensor({d.n, l.out_ch, d.oh, d.ow});
                parallel_chunks(d.n, [&](int, int64_t s0, int64_t s1) {
                    std::vector<float> col(static_cast<size_t>(ckk) * d.oh * d.ow);
                    for (int64_t s = s0; s < s1; ++s) {
                        const float* xs = x.ptr() + s * d.cin * d.h * d.w;
                        float* ys = y.ptr() + s * l.out_ch * d.oh * d.ow;
                        im2col(xs, d.cin, d.h, d.w, l.kh, l.kw, l.stride, l.pad,
                               d.oh, d.ow, col.data());
                        sgemm_rm(false, false, l.out_ch, d.oh * d.ow, ckk, w.ptr(),
                                 ckk, col.data(), d.oh * d.ow, 0.0f, ys, d.oh * d.ow);
                        for (int c = 0; c < l.out_ch; ++c) {
                            float* yc = ys + static_cast<size_t>(c) * d.oh * d.ow;
                            for (int p = 0; p < d.oh * d.ow; ++p) yc[p] += b[c];
                        }
                    }
                });
                break;
            }
            case LayerKind::Deconv2d: {
                check(x.rank() == 4 && x.dims[1] == l.in_ch, li, l.kind,
                      "expected [N," + std::to_string(l.in_ch) + ",h,w], got " +
                          x.shape_str());
                const int n = static_cast<int>(x.dims[0]);
                const int h = static_cast<int>(x.dims[2]);
                const int w_in = static_cast<int>(x.dims[3]);
                check(conv_out(l.out_h, l.kh, l.stride, l.pad) == h &&
                          conv_out(l.out_w, l.kw, l.stride, l.pad) == w_in,
                      li, l.kind, "input " + x.shape_str() +
                          " inconsistent with declared output size");
                const Tensor& v = param(net, li, "weight");
                const Tensor& b = param(net, li, "bias");
                const int ckk = l.out_ch * l.kh * l.kw;
                y = Tensor({n, l.out_ch, l.out_h, l.out_w});
                parallel_chunks(n, [&](int, int64_t s0, int64_t s1) {
                    std::vector<float> col(static_cast<size_t>(ckk) * h * w_in);
                    for (int64_t s = s0; s < s1; ++s) {
                        const float* xs = x.ptr() + s * l.in_ch * h * w_in;
                        float* ys = y.ptr() + s * l.out_ch * l.out_h * l.out_w;
                        // adjoint of conv2d: col = V^T x, then scatter
                        sgemm_rm(true, false, ckk, h * w_in, l.in_ch, v.ptr(), ckk,
                                 xs, h * w_in, 0.0f, col.data(), h * w_in);
                        col2im(col.data(), l.out_ch, l.out_h, l.out_w, l.kh, l.kw,
                               l.stride, l.pad, h, w_in, ys);
                        for (int c = 0; c < l.out_ch; ++c) {
                            float* yc = ys + static_cast<size_t>(c) * l.out_h * l.out_w;
                            for (int p = 0; p < l.out_h * l.out_w; ++p) yc[p] += b[c];
                        }
                    }
                });
                break;
            }
            case LayerKind::BatchNorm: {
                check(x.rank() == 2 || x.rank() == 4, li, l.kind,
                      "expected rank 2 or 4, got " + x.shape_str());
                const int n = static_cast<int>(x.dims[0]);
                const int c = static_cast<int>(x.dims[1]);
                check(c == l.channels, li, l.kind,
                      "expected " + std::to_string(l.channels) + " channels, got " +
                          x.shape_str());
                const int sp = static_cast<int>(x.numel() / (n * c));
                const Tensor& gamma = param(net, li, "gamma");
                const Tensor& beta = param(net, li, "beta");
                y = Tensor(x.dims);
                if (mode == Mode::Train) {
                    Tensor mean({c}), var({c}), xhat(x.dims);
                    for (int ch = 0; ch < c; ++ch) {
                        double acc = 0.0, acc2 = 0.0;
                        for (int s = 0; s < n; ++s) {
                            const float* xs = x.ptr() + (static_cast<size_t>(s) * c + ch) * sp;
                            for (int p = 0; p < sp; ++p) {
                                acc += xs[p];
                                acc2 += static_cast<double>(xs[p]) * xs[p];
                            }
                        }
                        const double m = acc / (static_cast<double>(n) * sp);
                        const double va = acc2 / (static_cast<double>(n) * sp) - m * m;
                        mean[ch] = static_cast<float>(m);
                        var[ch] = static_cast<float>(va < 0 ? 0 : va);
                        const float inv = 1.0f / std::sqrt(var[ch] + kBnEps);
                        for (int s = 0; s < n; ++s) {
                            const size_t off = (static_cast<size_t>(s) * c + ch) * sp;
                            for (int p = 0; p < sp; ++p) {
                                const float xh = (x.data[off + p] - mean[ch]) * inv;
                                xhat.data[off + p] = xh;
                                y.data[off + p] = gamma[ch] * xh + beta[ch];
                            }
                        }
                    }
                    tp.bn_mean[li] = std::move(mean);
                    tp.bn_var[li] = std::move(var);
                    tp.bn_xhat[li] = std::move(xhat);
                } else {
                    const Tensor& rm = running_stat(net, li, "running_mean");
                    const Tensor& rv = running_stat(net, li, "running_var");
                    for (int ch = 0; ch < c; ++ch) {
                        const float inv = 1.0f / std::sqrt(rv[ch] + kBnEps);
                        for (int s = 0; s < n; ++s) {
                            const size_t off = (static_cast<size_t>(s) * c + ch) * sp;
                            for (int p = 0; p < sp; ++p)
                                y.data[off + p] =
                                    gamma[ch] * ((x.data[off + p] - rm[ch]) * inv) +
                                    beta[ch];
                        }
                    }
                }
                break;
            }
            case LayerKind::Relu: {
                y = Tensor(x.dims);
                for (size_t j = 0; j < x.data.size(); ++j)
                    y.data[j] = x.data[j] > 0.0f ? x.data[j] : 0.0f;
                break;
            }
            case LayerKind::LeakyRelu: {
                y = Tensor(x.dims);
                for (size_t j = 0; j < x.data.size(); ++j)
                    y.data[j] = x.data[j] > 0.0f ? x.data[j] : l.alpha * x.data[j];
                break;
            }
            case LayerKind::Tanh: {
                y = Tensor(x.dims);
                for (size_t j = 0; j < x.data.size(); ++j)
                    y.data[j] = std::tanh(x.data[j]);
                break;
            }
            case LayerKind::Sigmoid: {
                y = Tensor(x.dims);
                for (size_t j = 0; j < x.data.size(); ++j)
                    y.data[j] = 1.0f / (1.0f + std::exp(-x.data[j]));
                break;
            }
            case LayerKind::MaskMul: {
                const Tensor& m = param(net, li, "mask");
                check(x.rank() == 4 && x.dims[1] == l.rs_c && x.dims[2] == l.rs_h &&
                          x.dims[3] == l.rs_w,
                      li, l.kind, "expected [N," + m.shape_str() + "], got " +
                          x.shape_str());
                y = Tensor(x.dims);
                const int64_t per = m.numel();
                for (int64_t s = 0; s < x.dims[0]; ++s)
                    for (int64_t j = 0; j < per; ++j)
                        y.data[s * per + j] = m.data[j] * x.data[s * per + j];
                break;
            }
            case LayerKind::AddShortcut: {
                const Tensor& in0 = tp.acts[0];
                check(x.same_dims(in0), li, l.kind,
                      "shortcut dims " + in0.shape_str() + " vs " + x.shape_str());
                y = Tensor(x.dims);
                for (size_t j = 0; j < x.data.size(); ++j)
                    y.data[j] = x.data[j] + in0.data[j];
                break;
            }
            case LayerKind::Reshape: {
                const int n = static_cast<int>(x.dims[0]);
                check(x.numel() / n == static_cast<int64_t>(l.rs_c) * l.rs_h * l.rs_w,
                      li, l.kind, "cannot reshape " + x.shape_str());
                y = x.reshaped({n, l.rs_c, l.rs_h, l.rs_w});
                break;
            }
        }
        if (!all_finite(y))
            throw NumericError("layer" + std::to_string(li) + " (" +
                               kind_name(l.kind) + "): non-finite activation");
        tp.acts[i + 1] = std::move(y);
    }
    tp.valid = true;
    return tp.acts.back();
}

Tensor backward(const Net& net, const Tape& tape, const Tensor& upstream,
                ParamGrads* param_grads) {
    if (!tape.valid)
        throw ValidationError("backward: no cached forward activations");
    if (!upstream.same_dims(tape.acts.back()))
        throw ValidationError("backward: upstream dims " + upstream.shape_str() +
                              " do not match output " + tape.acts.back().shape_str());

    if (param_grads) {
        param_grads->clear();
        for (const auto& [k, v] : net.params) (*param_grads)[k] = Tensor(v.dims);
    }

    Tensor g = upstream;
    Tensor shortcut_acc;
    for (int i = static_cast<int>(net.layers.size()) - 1; i >= 0; --i) {
        const LayerSpec& l = net.layers[i];
        const Tensor& x = tape.acts[i];
        const Tensor& out = tape.acts[i + 1];
        Tensor gx;
        switch (l.kind) {
            case LayerKind::Dense: {
                const int n = static_cast<int>(x.dims[0]);
                const Tensor& w = param(net, i, "weight");
                gx = Tensor(x.dims);
                if (param_grads) {
                    Tensor& gw = (*param_grads)[param_key(i, "weight")];
                    Tensor& gb = (*param_grads)[param_key(i, "bias")];
                    const int nc = chunk_count(n);
                    std::vector<Tensor> gw_c(nc, Tensor(w.dims));
                    std::vector<Tensor> gb_c(nc, Tensor({l.out_features}));
                    parallel_chunks(n, [&](int c, int64_t s0, int64_t s1) {
                        for (int64_t s = s0; s < s1; ++s) {
                            const float* gy = g.ptr() + s * l.out_features;
                            const float* xs = x.ptr() + s * l.in_features;
                            cblas_sger(CblasRowMajor, l.out_features, l.in_features,
                                       1.0f, gy, 1, xs, 1, gw_c[c].ptr(),
                                       l.in_features);
                            for (int j = 0; j < l.out_features; ++j)
                                gb_c[c][j] += gy[j];
                        }
                    });
                    for (int c = 0; c < nc; ++c) {
                        for (int64_t j = 0; j < gw.numel(); ++j) gw[j] += gw_c[c][j];
                        for (int j = 0; j < l.out_features; ++j) gb[j] += gb_c[c][j];
                    }
                }
                parallel_for(n, [&](int64_t s) {
                    cblas_sgemv(CblasRowMajor, CblasTrans, l.out_features,
                                l.in_features, 1.0f, w.ptr(), l.in_features,
                                g.ptr() + s * l.out_features, 1, 0.0f,
                                gx.ptr() + s * l.in_features, 1);
                });
                break;
            }
            case LayerKind::Conv2d: {
                const ConvDims d = conv_dims(x, l, i);
                const Tensor& w = param(net, i, "weight");
                const int ckk = l.in_ch * l.kh * l.kw;
                gx = Tensor(x.dims);
                const int nc = chunk_count(d.n);
                std::vector<Tensor> gw_c, gb_c;
                if (param_grads) {
                    gw_c.assign(nc, Tensor(w.dims));
                    gb_c.assign(nc, Tensor({l.out_ch}));
                }
                parallel_chunks(d.n, [&](int c, int64_t s0, int64_t s1) {
                    std::vector<float> col(static_cast<size_t>(ckk) * d.oh * d.ow);
                    for (int64_t s = s0; s < s1; ++s) {
                        const float* gy = g.ptr() + s * l.out_ch * d.oh * d.ow;
                        if (param_grads) {
                            const float* xs = x.ptr() + s * d.cin * d.h * d.w;
                            im2col(xs, d.cin, d.h, d.w, l.kh, l.kw, l.stride, l.pad,
                                   d.oh, d.ow, col.data());
                            sgemm_rm(false, true, l.out_ch, ckk, d.oh * d.ow, gy,
                                     d.oh * d.ow, col.data(), d.oh * d.ow, 1.0f,
                                     gw_c[c].ptr(), ckk);
                            for (int ch = 0; ch < l.out_ch; ++ch) {
                                const float* gyc = gy + static_cast<size_t>(ch) * d.oh * d.ow;
                                float acc = 0.0f;
                                for (int p = 0; p < d.oh * d.ow; ++p) acc += gyc[p];
                                gb_c[c][ch] += acc;
                            }
                        }
                        sgemm_rm(true, false, ckk, d.oh * d.ow, l.out_ch, w.ptr(),
                                 ckk, gy, d.oh * d.ow, 0.0f, col.data(), d.oh * d.ow);
                        col2im(col.data(), d.cin, d.h, d.w, l.kh, l.kw, l.stride,
                               l.pad, d.oh, d.ow, gx.ptr() + s * d.cin * d.h * d.w);
                    }
                });
                if (param_grads) {
                    Tensor& gw = (*param_grads)[param_key(i, "weight")];
                    Tensor& gb = (*param_grads)[param_key(i, "bias")];
                    for (int c = 0; c < nc; ++c) {
                        for (int64_t j = 0; j < gw.numel(); ++j) gw[j] += gw_c[c][j];
                        for (int j = 0; j < l.out_ch; ++j) gb[j] += gb_c[c][j];
                    }
                }
                break;
            }
            case LayerKind::Deconv2d: {
                const int n = static_cast<int>(x.dims[0]);
                const int h = static_cast<int>(x.dims[2]);
                const int w_in = static_cast<int>(x.dims[3]);
                const Tensor& v = param(net, i, "weight");
                const int ckk = l.out_ch * l.kh * l.kw;
                gx = Tensor(x.dims);
                const int nc = chunk_count(n);
                std::vector<Tensor> gv_c, gb_c;
                if (param_grads) {
                    gv_c.assign(nc, Tensor(v.dims));
                    gb_c.assign(nc, Tensor({l.out_ch}));
                }
                parallel_chunks(n, [&](int c, int64_t s0, int64_t s1) {
                    std::vector<float> col(static_cast<size_t>(ckk) * h * w_in);
                    for (int64_t s = s0; s < s1; ++s) {
                        const float* gy = g.ptr() + s * l.out_ch * l.out_h * l.out_w;
                        // grad wrt input is the conv forward of gy
                        im2col(gy, l.out_ch, l.out_h, l.out_w, l.kh, l.kw, l.stride,
                               l.pad, h, w_in, col.data());
                        sgemm_rm(false, false, l.in_ch, h * w_in, ckk, v.ptr(), ckk,
                                 col.data(), h * w_in, 0.0f,
                                 gx.ptr() + s * l.in_ch * h * w_in, h * w_in);
                        if (param_grads) {
                            const float* xs = x.ptr() + s * l.in_ch * h * w_in;
                            sgemm_rm(false, true, l.in_ch, ckk, h * w_in, xs,
                                     h * w_in, col.data(), h * w_in, 1.0f,
                                     gv_c[c].ptr(), ckk);
                            for (int ch = 0; ch < l.out_ch; ++ch) {
                                const float* gyc =
                                    gy + static_cast<size_t>(ch) * l.out_h * l.out_w;
                                float acc = 0.0f;
                                for (int p = 0; p < l.out_h * l.out_w; ++p)
                                    acc += gyc[p];
                                gb_c[c][ch] += acc;
                            }
                        }
                    }
                });
                if (param_grads) {
                    Tensor& gv = (*param_grads)[param_key(i, "weight")];
                    Tensor& gb = (*param_grads)[param_key(i, "bias")];
                    for (int c = 0; c < nc; ++c) {
                        for (int64_t j = 0; j < gv.numel(); ++j) gv[j] += gv_c[c][j];
                        for (int j = 0; j < l.out_ch; ++j) gb[j] += gb_c[c][j];
                    }
                }
                break;
            }
            case LayerKind::BatchNorm: {
                const int n = static_cast<int>(x.dims[0]);
                const int c = static_cast<int>(x.dims[1]);
                const int sp = static_cast<int>(x.numel() / (n * c));
                const Tensor& gamma = param(net, i, "gamma");
                gx = Tensor(x.dims);
                Tensor* dgamma = nullptr;
                Tensor* dbeta = nullptr;
                if (param_grads) {
                    dgamma = &(*param_grads)[param_key(i, "gamma")];
                    dbeta = &(*param_grads)[param_key(i, "beta")];
                }
                if (tape.mode == Mode::Train) {
                    const Tensor& var = tape.bn_var.at(i);
                    const Tensor& xhat = tape.bn_xhat.at(i);
                    const double m = static_cast<double>(n) * sp;
                    for (int ch = 0; ch < c; ++ch) {
                        double sum_dy = 0.0, sum_dy_xh = 0.0;
                        for (int s = 0; s < n; ++s) {
                            const size_t off = (static_cast<size_t>(s) * c + ch) * sp;
                            for (int p = 0; p < sp; ++p) {
                                sum_dy += g.data[off + p];
                                sum_dy_xh += static_cast<double>(g.data[off + p]) *
                                             xhat.data[off + p];
                            }
                        }
                        if (dgamma) {
                            (*dgamma)[ch] += static_cast<float>(sum_dy_xh);
                            (*dbeta)[ch] += static_cast<float>(sum_dy);
                        }
                        const double inv = 1.0 / std::sqrt(static_cast<double>(var[ch]) + kBnEps);
                        const double ga = gamma[ch];
                        for (int s = 0; s < n; ++s) {
                            const size_t off = (static_cast<size_t>(s) * c + ch) * sp;
                            for (int p = 0; p < sp; ++p) {
                                const double dxh = static_cast<double>(g.data[off + p]) * ga;
                                gx.data[off + p] = static_cast<float>(
                                    inv * (dxh - (ga / m) * sum_dy -
                                           xhat.data[off + p] * (ga / m) * sum_dy_xh));
                            }
                        }
                    }
                } else {
                    const Tensor& rm = running_stat(net, i, "running_mean");
                    const Tensor& rv = running_stat(net, i, "running_var");
                    for (int ch = 0; ch < c; ++ch) {
                        const float inv = 1.0f / std::sqrt(rv[ch] + kBnEps);
                        double sum_dy = 0.0, sum_dy_xh = 0.0;
                        for (int s = 0; s < n; ++s) {
                            const size_t off = (static_cast<size_t>(s) * c + ch) * sp;
                            for (int p = 0; p < sp; ++p) {
                                gx.data[off + p] = g.data[off + p] * gamma[ch] * inv;
                                sum_dy += g.data[off + p];
                                sum_dy_xh += static_cast<double>(g.data[off + p]) *
                                             ((x.data[off + p] - rm[ch]) * inv);
                            }
                        }
                        if (dgamma) {
                            (*dgamma)[ch] += static_cast<float>(sum_dy_xh);
                            (*dbeta)[ch] += static_cast<float>(sum_dy);
                        }
                    }
                }
                break;
            }
            case LayerKind::Relu: {
                gx = Tensor(x.dims);
                for (size_t j = 0; j < x.data.size(); ++j)
                    gx.data[j] = x.data[j] > 0.0f ? g.data[j] : 0.0f;
                break;
            }
            case LayerKind::LeakyRelu: {
                gx = Tensor(x.dims);
                for (size_t j = 0; j < x.data.size(); ++j)
                    gx.data[j] = x.data[j] > 0.0f ? g.data[j] : l.alpha * g.data[j];
                break;
            }
            case LayerKind::Tanh: {
                gx = Tensor(x.dims);
                for (size_t j = 0; j < x.data.size(); ++j)
                    gx.data[j] = g.data[j] * (1.0f - out.data[j] * out.data[j]);
                break;
            }
            case LayerKind::Sigmoid: {
                gx = Tensor(x.dims);
                for (size_t j = 0; j < x.data.size(); ++j)
                    gx.data[j] = g.data[j] * out.data[j] * (1.0f - out.data[j]);
                break;
            }
            case LayerKind::MaskMul: {
                const Tensor& m = param(net, i, "mask");
                gx = Tensor(x.dims);
                const int64_t per = m.numel();
                if (param_grads) {
                    Tensor& gm = (*param_grads)[param_key(i, "mask")];
                    for (int64_t s = 0; s < x.dims[0]; ++s)
                        for (int64_t j = 0; j < per; ++j)
                            gm.data[j] += x.data[s * per + j] * g.data[s * per + j];
                }
                for (int64_t s = 0; s < x.dims[0]; ++s)
                    for (int64_t j = 0; j < per; ++j)
                        gx.data[s * per + j] = m.data[j] * g.data[s * per + j];
                break;
            }
            case LayerKind::AddShortcut: {
                if (shortcut_acc.numel() == 0) {
                    shortcut_acc = g;
                } else {
                    for (size_t j = 0; j < g.data.size(); ++j)
                        shortcut_acc.data[j] += g.data[j];
                }
                gx = g;
                break;
            }
            case LayerKind::Reshape: {
                gx = g.reshaped(x.dims);
                break;
            }
        }
        g = std::move(gx);
    }
    if (shortcut_acc.numel() != 0) {
        for (size_t j = 0; j < g.data.size(); ++j) g.data[j] += shortcut_acc.data[j];
    }
    return g;
}

void update_running_stats(Net& net, const Tape& tape, float momentum) {
    if (!tape.valid || tape.mode != Mode::Train)
        throw ValidationError("update_running_stats: needs a train-mode tape");
    for (const auto& [li, mean] : tape.bn_mean) {
        Tensor& rm = net.running.at(param_key(li, "running_mean"));
        Tensor& rv = net.running.at(param_key(li, "running_var"));
        const Tensor& var = tape.bn_var.at(li);
        for (int64_t c = 0; c < rm.numel(); ++c) {
            rm[c] = momentum * rm[c] + (1.0f - momentum) * mean[c];
            rv[c] = momentum * rv[c] + (1.0f - momentum) * var[c];
        }
    }
}

static void check_keys(const Net& net, const ParamGrads& grads) {
    if (grads.size() != net.params.size())
        throw ValidationError("optimizer: gradient key count " +
                              std::to_string(grads.size()) + " != parameter count " +
                              std::to_string(net.params.size()));
    for (const auto& [k, v] : net.params) {
        auto it = grads.find(k);
        if (it == grads.end())
            throw ValidationError("optimizer: missing gradient for " + k);
        if (!it->second.same_dims(v))
            throw ValidationError("optimizer: gradient dims mismatch for " + k);
    }
}

void adam_step(Net& net, const ParamGrads& grads, float lr, float beta1,
               float beta2, float eps) {
    check_keys(net, grads);
    net.opt_t += 1;
    const double bc1 = 1.0 - std::pow(static_cast<double>(beta1), static_cast<double>(net.opt_t));
    const double bc2 = 1.0 - std::pow(static_cast<double>(beta2), static_cast<double>(net.opt_t));
    for (auto& [k, p] : net.params) {
        const Tensor& gr = grads.at(k);
        Tensor& m = net.opt_m.at(k);
        Tensor& v = net.opt_v.at(k);
        for (int64_t j = 0; j < p.numel(); ++j) {
            m[j] = beta1 * m[j] + (1.0f - beta1) * gr[j];
            v[j] = beta2 * v[j] + (1.0f - beta2) * gr[j] * gr[j];
            const float mhat = static_cast<float>(m[j] / bc1);
            const float vhat = static_cast<float>(v[j] / bc2);
            p[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

void sgd_step(Net& net, const ParamGrads& grads, float lr) {
    check_keys(net, grads);
    for (auto& [k, p] : net.params) {
        const Tensor& gr = grads.at(k);
        for (int64_t j = 0; j < p.numel(); ++j) p[j] -= lr * gr[j];
    }
}

void AdamState::step(Tensor& w, const Tensor& g, float lr, float beta1,
                     float beta2, float eps) {
    if (m.numel() == 0) {
        m = Tensor(w.dims);
        v = Tensor(w.dims);
    }
    if (!g.same_dims(w))
        throw ValidationError("adam: gradient dims " + g.shape_str() +
                              " != parameter dims " + w.shape_str());
    t += 1;
    const double bc1 = 1.0 - std::pow(static_cast<double>(beta1), static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(static_cast<double>(beta2), static_cast<double>(t));
    for (int64_t j = 0; j < w.numel(); ++j) {
        m[j] = beta1 * m[j] + (1.0f - beta1) * g[j];
        v[j] = beta2 * v[j] + (1.0f - beta2) * g[j] * g[j];
        const float mhat = static_cast<float>(m[j] / bc1);
        const float vhat = static_cast<float>(v[j] / bc2);
        w[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

}  // namespace tomo
