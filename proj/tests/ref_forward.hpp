// Test-only reference evaluator: straightforward nested loops in double
// precision, written independently of the BLAS/im2col implementation it
// checks. Used as the convolution oracle and as the 64-bit forward for
// central finite-difference gradient tests.
#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "tomo/net.hpp"

namespace ref {

using DPlane = std::vector<double>;

struct DNet {
    std::vector<tomo::LayerSpec> layers;
    std::map<std::string, DPlane> params;
    std::map<std::string, DPlane> running;
};

inline DNet to_double(const tomo::Net& net) {
    DNet d;
    d.layers = net.layers;
    for (const auto& [k, t] : net.params)
        d.params[k] = DPlane(t.data.begin(), t.data.end());
    for (const auto& [k, t] : net.running)
        d.running[k] = DPlane(t.data.begin(), t.data.end());
    return d;
}

// forward over one batch; dims tracked as [n, c, h, w] (dense collapses to
// [n, f, 1, 1]). When `kink_signs` is given, the sign of every relu /
// leaky-relu input is appended so finite-difference callers can reject
// steps that cross the kink.
inline DPlane forward(const DNet& net, DPlane x, int n, std::vector<int64_t> xd,
                      tomo::Mode mode, std::vector<int8_t>* kink_signs = nullptr) {
    using tomo::LayerKind;
    const DPlane input0 = x;
    for (size_t li = 0; li < net.layers.size(); ++li) {
        const tomo::LayerSpec& l = net.layers[li];
        const std::string key = "layer" + std::to_string(li) + ".";
        switch (l.kind) {
            case LayerKind::Dense: {
                const DPlane& w = net.params.at(key + "weight");
                const DPlane& b = net.params.at(key + "bias");
                const int fi = l.in_features, fo = l.out_features;
                DPlane y(static_cast<size_t>(n) * fo, 0.0);
                for (int s = 0; s < n; ++s)
                    for (int o = 0; o < fo; ++o) {
                        double acc = b[o];
                        for (int i = 0; i < fi; ++i)
                            acc += w[static_cast<size_t>(o) * fi + i] * x[static_cast<size_t>(s) * fi + i];
                        y[static_cast<size_t>(s) * fo + o] = acc;
                    }
                x = std::move(y);
                xd = {n, fo};
                break;
            }
            case LayerKind::Conv2d: {
                const DPlane& w = net.params.at(key + "weight");
                const DPlane& b = net.params.at(key + "bias");
                const int ci = l.in_ch, co = l.out_ch, h = static_cast<int>(xd[2]),
                          wi = static_cast<int>(xd[3]);
                const int oh = (h + 2 * l.pad - l.kh) / l.stride + 1;
                const int ow = (wi + 2 * l.pad - l.kw) / l.stride + 1;
                DPlane y(static_cast<size_t>(n) * co * oh * ow, 0.0);
                for (int s = 0; s < n; ++s)
                    for (int oc = 0; oc < co; ++oc)
                        for (int oy = 0; oy < oh; ++oy)
                            for (int ox = 0; ox < ow; ++ox) {
                                double acc = b[oc];
                                for (int ic = 0; ic < ci; ++ic)
                                    for (int ky = 0; ky < l.kh; ++ky)
                                        for (int kx = 0; kx < l.kw; ++kx) {
                                            const int iy = oy * l.stride - l.pad + ky;
                                            const int ix = ox * l.stride - l.pad + kx;
                                            if (iy < 0 || iy >= h || ix < 0 || ix >= wi)
                                                continue;
                                            acc += w[((static_cast<size_t>(oc) * ci + ic) * l.kh + ky) * l.kw + kx] *
                                                   x[((static_cast<size_t>(s) * ci + ic) * h + iy) * wi + ix];
                                        }
                                y[((static_cast<size_t>(s) * co + oc) * oh + oy) * ow + ox] = acc;
                            }
                x = std::move(y);
                xd = {n, co, oh, ow};
                break;
            }
            case LayerKind::Deconv2d: {
                const DPlane& w = net.params.at(key + "weight");
                const DPlane& b = net.params.at(key + "bias");
                const int ci = l.in_ch, co = l.out_ch, h = static_cast<int>(xd[2]),
                          wi = static_cast<int>(xd[3]);
                DPlane y(static_cast<size_t>(n) * co * l.out_h * l.out_w, 0.0);
                // scatter: each input cell distributes through the kernel
                for (int s = 0; s < n; ++s) {
                    for (int ic = 0; ic < ci; ++ic)
                        for (int iy = 0; iy < h; ++iy)
                            for (int ix = 0; ix < wi; ++ix) {
                                const double v =
                                    x[((static_cast<size_t>(s) * ci + ic) * h + iy) * wi + ix];
                                for (int oc = 0; oc < co; ++oc)
                                    for (int ky = 0; ky < l.kh; ++ky)
                                        for (int kx = 0; kx < l.kw; ++kx) {
                                            const int oy = iy * l.stride - l.pad + ky;
                                            const int ox = ix * l.stride - l.pad + kx;
                                            if (oy < 0 || oy >= l.out_h || ox < 0 ||
                                                ox >= l.out_w)
                                                continue;
                                            y[((static_cast<size_t>(s) * co + oc) * l.out_h + oy) * l.out_w + ox] +=
                                                v * w[((static_cast<size_t>(ic) * co + oc) * l.kh + ky) * l.kw + kx];
                                        }
                            }
                    for (int oc = 0; oc < co; ++oc)
                        for (int p = 0; p < l.out_h * l.out_w; ++p)
                            y[(static_cast<size_t>(s) * co + oc) * l.out_h * l.out_w + p] += b[oc];
                }
                x = std::move(y);
                xd = {n, co, l.out_h, l.out_w};
                break;
            }
            case LayerKind::BatchNorm: {
                const DPlane& gamma = net.params.at(key + "gamma");
                const DPlane& beta = net.params.at(key + "beta");
                const int c = l.channels;
                const int sp = static_cast<int>(x.size() / (static_cast<size_t>(n) * c));
                DPlane y(x.size());
                for (int ch = 0; ch < c; ++ch) {
                    double mean, var;
                    if (mode == tomo::Mode::Train) {
                        double acc = 0, acc2 = 0;
                        for (int s = 0; s < n; ++s)
                            for (int p = 0; p < sp; ++p) {
                                const double v = x[(static_cast<size_t>(s) * c + ch) * sp + p];
                                acc += v;
                                acc2 += v * v;
                            }
                        mean = acc / (static_cast<double>(n) * sp);
                        var = acc2 / (static_cast<double>(n) * sp) - mean * mean;
                        if (var < 0) var = 0;
                    } else {
                        mean = net.running.at(key + "running_mean")[ch];
                        var = net.running.at(key + "running_var")[ch];
                    }
                    const double inv = 1.0 / std::sqrt(var + 1e-5);
                    for (int s = 0; s < n; ++s)
                        for (int p = 0; p < sp; ++p) {
                            const size_t i = (static_cast<size_t>(s) * c + ch) * sp + p;
                            y[i] = gamma[ch] * ((x[i] - mean) * inv) + beta[ch];
                        }
                }
                x = std::move(y);
                break;
            }
            case LayerKind::Relu:
                for (double& v : x) {
                    if (kink_signs) kink_signs->push_back(v > 0 ? 1 : 0);
                    v = v > 0 ? v : 0;
                }
                break;
            case LayerKind::LeakyRelu:
                for (double& v : x) {
                    if (kink_signs) kink_signs->push_back(v > 0 ? 1 : 0);
                    v = v > 0 ? v : l.alpha * v;
                }
                break;
            case LayerKind::Tanh:
                for (double& v : x) v = std::tanh(v);
                break;
            case LayerKind::Sigmoid:
                for (double& v : x) v = 1.0 / (1.0 + std::exp(-v));
                break;
            case LayerKind::MaskMul: {
                const DPlane& m = net.params.at(key + "mask");
                const size_t per = m.size();
                for (int s = 0; s < n; ++s)
                    for (size_t j = 0; j < per; ++j)
                        x[static_cast<size_t>(s) * per + j] *= m[j];
                break;
            }
            case LayerKind::AddShortcut:
                for (size_t j = 0; j < x.size(); ++j) x[j] += input0[j];
                break;
            case LayerKind::Reshape:
                xd = {n, l.rs_c, l.rs_h, l.rs_w};
                break;
        }
    }
    return x;
}

inline DPlane forward(const DNet& net, const tomo::Tensor& input, tomo::Mode mode,
                      std::vector<int8_t>* kink_signs = nullptr) {
    DPlane x(input.data.begin(), input.data.end());
    return forward(net, std::move(x), static_cast<int>(input.dims[0]), input.dims,
                   mode, kink_signs);
}

}  // namespace ref
