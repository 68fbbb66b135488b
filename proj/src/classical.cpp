#include "tomo/classical.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <vector>

#include "tomo/parallel.hpp"
#include "tomo/rng.hpp"

namespace tomo {

namespace {

constexpr double kPi = 3.14159265358979323846;

// FFTW plan creation is not thread-safe; execution on private buffers is.
std::mutex g_fftw_mutex;

int next_pow2(int n) {
    int p = 1;
    while (p < n) p <<= 1;
    return p;
}

// D^T D x for R(x) = sum of squared forward differences
void smoothness_op(const float* x, int d, float* out) {
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            double acc = 0.0;
            if (j + 1 < d) acc += static_cast<double>(x[i * d + j]) - x[i * d + j + 1];
            if (j > 0) acc += static_cast<double>(x[i * d + j]) - x[i * d + j - 1];
            if (i + 1 < d) acc += static_cast<double>(x[i * d + j]) - x[(i + 1) * d + j];
            if (i > 0) acc += static_cast<double>(x[i * d + j]) - x[(i - 1) * d + j];
            out[i * d + j] = static_cast<float>(acc);
        }
    }
}

double smoothness_penalty(const float* x, int d) {
    double acc = 0.0;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            if (j + 1 < d) {
                const double h = static_cast<double>(x[i * d + j + 1]) - x[i * d + j];
                acc += h * h;
            }
            if (i + 1 < d) {
                const double v = static_cast<double>(x[(i + 1) * d + j]) - x[i * d + j];
                acc += v * v;
            }
        }
    return acc;
}

void reg_apply(const Tensor& x, RlsConfig::Reg reg, Tensor& out) {
    const int d = static_cast<int>(x.dim(0));
    if (reg == RlsConfig::Reg::Smoothness) {
        smoothness_op(x.ptr(), d, out.ptr());
    } else {
        out = x;
    }
}

double reg_penalty(const Tensor& x, RlsConfig::Reg reg) {
    const int d = static_cast<int>(x.dim(0));
    return reg == RlsConfig::Reg::Smoothness ? smoothness_penalty(x.ptr(), d)
                                             : sum_sq(x);
}

// Hessian/2 of the objective: A^T A x + lambda * reg(x)
Image objective_curvature(const Image& x, const Geometry& geom,
                          const RlsConfig& cfg) {
    Image ata = back_project(forward_project(x, geom));
    if (cfg.lambda > 0.0) {
        Image rx(x.dims);
        reg_apply(x, cfg.reg, rx);
        for (int64_t i = 0; i < ata.numel(); ++i)
            ata[i] += static_cast<float>(cfg.lambda) * rx[i];
    }
    return ata;
}

// Lipschitz constant of the objective gradient: 2 * lambda_max of
// A^T A + lambda * reg, the eigenvalue estimated by 50 power iterations.
// The factor 2 keeps descent monotone even when the power estimate is
// slightly below the true eigenvalue.
double estimate_lipschitz(const Geometry& geom, const RlsConfig& cfg) {
    const int d = geom.image_side;
    Image v({d, d});
    Rng rng(0xC0FFEEu);
    for (auto& e : v.data) e = static_cast<float>(rng.uniform(-1.0, 1.0));
    double lam = 1.0;
    for (int it = 0; it < 50; ++it) {
        Image hv = objective_curvature(v, geom, cfg);
        const double nrm = std::sqrt(sum_sq(hv));
        if (nrm < 1e-30) return 1.0;  // zero operator; any step works
        lam = nrm;
        for (int64_t i = 0; i < v.numel(); ++i)
            v[i] = static_cast<float>(hv[i] / nrm);
    }
    return 2.0 * lam;
}

Image rls_with_step(const Sinogram& sino, const RlsConfig& cfg, double step,
                    std::vector<double>* obj_trace = nullptr) {
    const Geometry& geom = sino.geom;
    const int d = geom.image_side;
    Image x({d, d});
    Tensor rx(x.dims);
    double prev_obj = 0.0;
    int bad_steps = 0;

    for (int it = 0; it < cfg.iters; ++it) {
        Sinogram ax = forward_project(x, geom);
        for (int64_t i = 0; i < ax.data.numel(); ++i) ax.data[i] -= sino.data[i];
        double obj = sum_sq(ax.data);
        if (cfg.lambda > 0.0) obj += cfg.lambda * reg_penalty(x, cfg.reg);
        if (!std::isfinite(obj))
            throw NumericError("rls: non-finite objective at iteration " +
                               std::to_string(it));
        if (it > 0 && obj > prev_obj) {
            if (++bad_steps >= 10)
                throw NumericError("rls: objective increased 10 consecutive steps "
                                   "(step size estimate " + std::to_string(step) + ")");
        } else {
            bad_steps = 0;
        }
        prev_obj = obj;
        if (obj_trace) obj_trace->push_back(obj);

        Image grad = back_project(ax);
        if (cfg.lambda > 0.0) {
            reg_apply(x, cfg.reg, rx);
            for (int64_t i = 0; i < grad.numel(); ++i)
                grad[i] += static_cast<float>(cfg.lambda) * rx[i];
        }
        for (int64_t i = 0; i < x.numel(); ++i) {
            x[i] -= static_cast<float>(2.0 * step * grad[i]);
            if (cfg.nonneg && x[i] < 0.0f) x[i] = 0.0f;
        }
    }
    clamp01(x);
    return x;
}

}  // namespace

void RlsConfig::validate() const {
    if (lambda < 0.0) throw ValidationError("rls: lambda must be >= 0");
    if (iters < 1) throw ValidationError("rls: iters must be >= 1");
}

Image fbp(const Sinogram& sino, FbpWindow window) {
    const Geometry& geom = sino.geom;
    geom.validate();
    if (geom.beam != Beam::Parallel)
        throw ValidationError("fbp: fan-beam geometry is not supported");
    if (sino.data.rank() != 2 || sino.data.dim(0) != geom.views() ||
        sino.data.dim(1) != geom.detector_count)
        throw ValidationError("fbp: sinogram dims " + sino.data.shape_str() +
                              " do not match geometry");

    const int v = geom.views();
    const int nb = geom.detector_count;
    const int p = next_pow2(2 * nb);
    const int nf = p / 2 + 1;

    std::vector<double> in(static_cast<size_t>(p));
    std::vector<fftw_complex> spec(static_cast<size_t>(nf));
    fftw_plan fwd, inv;
    {
        std::lock_guard<std::mutex> lock(g_fftw_mutex);
        fwd = fftw_plan_dft_r2c_1d(p, in.data(), spec.data(), FFTW_ESTIMATE);
        inv = fftw_plan_dft_c2r_1d(p, spec.data(), in.data(), FFTW_ESTIMATE);
    }

    // |f| ramp, unity at Nyquist; Hann tapers it to zero there
    std::vector<double> filt(static_cast<size_t>(nf));
    for (int i = 0; i < nf; ++i) {
        const double f = static_cast<double>(i) / p;
        filt[i] = 2.0 * f;
        if (window == FbpWindow::Hann) filt[i] *= 0.5 * (1.0 + std::cos(2.0 * kPi * f));
    }

    Sinogram filtered;
    filtered.geom = geom;
    filtered.data = Tensor({v, nb});
    for (int view = 0; view < v; ++view) {
        std::fill(in.begin(), in.end(), 0.0);
        for (int b = 0; b < nb; ++b) in[b] = sino.data.at2(view, b);
        fftw_execute(fwd);
        for (int i = 0; i < nf; ++i) {
            spec[i][0] *= filt[i];
            spec[i][1] *= filt[i];
        }
        fftw_execute(inv);
        for (int b = 0; b < nb; ++b)
            filtered.data.at2(view, b) = static_cast<float>(in[b] / p);
    }
    {
        std::lock_guard<std::mutex> lock(g_fftw_mutex);
        fftw_destroy_plan(fwd);
        fftw_destroy_plan(inv);
    }

    Image out = back_project(filtered);
    const double scale = kPi / (2.0 * v);
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = static_cast<float>(out[i] * scale);
    clamp01(out);
    return out;
}

Image rls(const Sinogram& sino, const RlsConfig& cfg,
          std::vector<double>* obj_trace) {
    cfg.validate();
    sino.geom.validate();
    const double lips = estimate_lipschitz(sino.geom, cfg);
    return rls_with_step(sino, cfg, 0.9 / lips, obj_trace);
}

Tensor fbp_set(const Tensor& sinos, const Geometry& geom, FbpWindow window) {
    const int64_t n = sinos.dim(0);
    const int d = geom.image_side;
    const int64_t in_sz = static_cast<int64_t>(geom.views()) * geom.detector_count;
    Tensor out({n, d, d});
    parallel_for(n, [&](int64_t i) {
        Sinogram s;
        s.geom = geom;
        s.data = Tensor({geom.views(), geom.detector_count});
        std::copy_n(sinos.ptr() + i * in_sz, in_sz, s.data.ptr());
        const Image img = fbp(s, window);
        std::copy_n(img.ptr(), static_cast<int64_t>(d) * d,
                    out.ptr() + i * d * d);
    });
    return out;
}

Tensor rls_set(const Tensor& sinos, const Geometry& geom, const RlsConfig& cfg) {
    cfg.validate();
    geom.validate();
    const int64_t n = sinos.dim(0);
    const int d = geom.image_side;
    const int64_t in_sz = static_cast<int64_t>(geom.views()) * geom.detector_count;
    const double step = 0.9 / estimate_lipschitz(geom, cfg);
    Tensor out({n, d, d});
    parallel_for(n, [&](int64_t i) {
        Sinogram s;
        s.geom = geom;
        s.data = Tensor({geom.views(), geom.detector_count});
        std::copy_n(sinos.ptr() + i * in_sz, in_sz, s.data.ptr());
        const Image img = rls_with_step(s, cfg, step);
        std::copy_n(img.ptr(), static_cast<int64_t>(d) * d,
                    out.ptr() + i * d * d);
    });
    return out;
}

}  // namespace tomo
