#include "tomo/prior.hpp"

#include <cmath>

#include "tomo/rng.hpp"

namespace tomo {

namespace {

void clamp_box(Tensor& z) {
    for (float& v : z.data) v = v < -1.0f ? -1.0f : (v > 1.0f ? 1.0f : v);
}

void check_seed_image(const Image& seed, const NetCheckpoint& ckpt, const char* who) {
    if (seed.rank() != 2 || seed.dim(0) != ckpt.image_side ||
        seed.dim(1) != ckpt.image_side)
        throw ValidationError(std::string(who) + ": seed image dims " +
                              seed.shape_str() + " do not match checkpoint side " +
                              std::to_string(ckpt.image_side));
    for (float v : seed.data)
        if (!(v >= 0.0f && v <= 1.0f))
            throw ValidationError(std::string(who) + ": seed image must lie in [0,1]");
}

// mean-squared difference and its gradient w.r.t. a, both over a [1,1,s,s]
// tensor against an [s,s] reference
double loss_and_upstream(const Tensor& a, const Image& ref, Tensor& up) {
    const int64_t n = ref.numel();
    up = Tensor(a.dims);
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(ref[i]);
        acc += d * d;
        up[i] = static_cast<float>(2.0 * d / static_cast<double>(n));
    }
    return acc / static_cast<double>(n);
}

std::vector<Tensor> draw_restarts(Rng& rng, int restarts, int k) {
    std::vector<Tensor> z0;
    for (int r = 0; r < restarts; ++r) {
        Tensor z({k});
        for (float& v : z.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        z0.push_back(std::move(z));
    }
    return z0;
}

Tensor as_batch(const Tensor& z, int k) { return z.reshaped({1, k}); }

int pick_best(const std::vector<std::vector<double>>& traces,
              const std::vector<bool>& ok, const char* who) {
    int best = -1;
    for (size_t r = 0; r < traces.size(); ++r) {
        if (!ok[r]) continue;
        if (best < 0 || traces[r].back() < traces[static_cast<size_t>(best)].back())
            best = static_cast<int>(r);
    }
    if (best < 0)
        throw NumericError(std::string(who) + ": all restarts aborted with "
                           "non-finite losses");
    return best;
}

void finalize(ProjectionResult& res, const NetCheckpoint& ckpt,
              std::vector<Tensor>& zs, const char* who) {
    res.restart_index = pick_best(res.restart_traces, res.restart_ok, who);
    res.z_star = zs[static_cast<size_t>(res.restart_index)];
    // provenance: the reported image is generate(ckpt, z_star), on the
    // manifold by construction
    res.x_star = generate(ckpt, res.z_star);
}

}  // namespace

void PlainOpts::validate() const {
    if (steps < 0) throw ValidationError("project: steps must be >= 0");
    if (restarts < 1) throw ValidationError("project: restarts must be >= 1");
}

double latent_image_loss(const NetCheckpoint& ckpt, const Tensor& z,
                         const Image& seed_img, Tensor* grad_z) {
    Tape tape;
    const Tensor img = gen_forward(ckpt.net, as_batch(z, ckpt.latent_dim),
                                   grad_z ? &tape : nullptr);
    Tensor up;
    const double loss = loss_and_upstream(img, seed_img, up);
    if (grad_z)
        *grad_z = gen_backward(ckpt.net, tape, up).reshaped({ckpt.latent_dim});
    return loss;
}

double latent_surrogate_loss(const NetCheckpoint& ckpt, const Net& surrogate,
                             const Tensor& z, const Image& seed_img, Tensor* grad_z) {
    Tape tape_g, tape_s;
    const Tensor img = gen_forward(ckpt.net, as_batch(z, ckpt.latent_dim),
                                   grad_z ? &tape_g : nullptr);
    const Tensor out = forward(surrogate, img, Mode::Eval, grad_z ? &tape_s : nullptr);
    Tensor up;
    const double loss = loss_and_upstream(out, seed_img, up);
    if (grad_z) {
        const Tensor g_img = backward(surrogate, tape_s, up, nullptr);
        *grad_z = gen_backward(ckpt.net, tape_g, g_img).reshaped({ckpt.latent_dim});
    }
    return loss;
}

double latent_measurement_loss(const NetCheckpoint& ckpt, const Tensor& z,
                               const Sinogram& sino, Tensor* grad_z) {
    const int s = ckpt.image_side;
    Tape tape;
    const Tensor img4 = gen_forward(ckpt.net, as_batch(z, ckpt.latent_dim),
                                    grad_z ? &tape : nullptr);
    Sinogram ax = forward_project(img4.reshaped({s, s}), sino.geom);
    const int64_t nmeas = sino.data.numel();
    double acc = 0.0;
    for (int64_t i = 0; i < nmeas; ++i) {
        const double d = static_cast<double>(ax.data[i]) - sino.data[i];
        acc += d * d;
        ax.data[i] = static_cast<float>(2.0 * d / static_cast<double>(nmeas));
    }
    if (grad_z) {
        const Tensor g_img = back_project(ax).reshaped({1, 1, s, s});
        *grad_z = gen_backward(ckpt.net, tape, g_img).reshaped({ckpt.latent_dim});
    }
    return acc / static_cast<double>(nmeas);
}

void RobustOpts::validate() const {
    if (t1 < 1 || t2 < 1 || cycles < 1 || restarts < 1)
        throw ValidationError("project_robust: t1, t2, cycles, restarts must be >= 1");
}

ProjectionResult project_plain(const Image& seed_img, const NetCheckpoint& ckpt,
                               const PlainOpts& opts) {
    opts.validate();
    check_seed_image(seed_img, ckpt, "project_plain");

    Rng rng(opts.seed);
    std::vector<Tensor> zs = draw_restarts(rng, opts.restarts, ckpt.latent_dim);

    ProjectionResult res;
    res.restart_traces.assign(static_cast<size_t>(opts.restarts), {});
    res.restart_ok.assign(static_cast<size_t>(opts.restarts), true);

    for (int r = 0; r < opts.restarts; ++r) {
        Tensor& z = zs[static_cast<size_t>(r)];
        auto& trace = res.restart_traces[static_cast<size_t>(r)];
        AdamState adam;
        Tensor gz;
        try {
            for (int step = 0; step < opts.steps; ++step) {
                trace.push_back(latent_image_loss(ckpt, z, seed_img, &gz));
                adam.step(z, gz, opts.lr);
                clamp_box(z);
            }
            trace.push_back(latent_image_loss(ckpt, z, seed_img, nullptr));
        } catch (const NumericError&) {
            res.restart_ok[static_cast<size_t>(r)] = false;
        }
    }
    finalize(res, ckpt, zs, "project_plain");
    return res;
}

Net build_surrogate(uint64_t seed) {
    std::vector<LayerSpec> layers = {
        LayerSpec::conv2d(1, 16, 3, 1, 1),
        LayerSpec::relu(),
        LayerSpec::conv2d(16, 1, 3, 1, 1),
        LayerSpec::mask_mul(1, 28, 28),
        LayerSpec::add_shortcut(),
    };
    return build_net(layers, seed);
}

ProjectionResult project_robust(const Image& seed_img, const NetCheckpoint& ckpt,
                                const RobustOpts& opts) {
    opts.validate();
    check_seed_image(seed_img, ckpt, "project_robust");

    Rng rng(opts.seed);
    std::vector<Tensor> zs = draw_restarts(rng, opts.restarts, ckpt.latent_dim);

    Net sur = build_surrogate(opts.seed + 1);
    if (opts.identity_surrogate) {
        for (auto& [k, t] : sur.params)
            if (k.find("mask") == std::string::npos) t.fill(0.0f);
    }

    ProjectionResult res;
    res.restart_traces.assign(static_cast<size_t>(opts.restarts), {});
    res.restart_ok.assign(static_cast<size_t>(opts.restarts), true);

    std::vector<AdamState> adam_z(static_cast<size_t>(opts.restarts));
    double initial_sur_loss = -1.0;
    bool reinitialized = false;

    for (int cycle = 0; cycle < opts.cycles; ++cycle) {
        // phase 1: fit the surrogate to the current manifold candidates
        std::vector<Tensor> imgs(static_cast<size_t>(opts.restarts));
        int live = 0;
        for (int r = 0; r < opts.restarts; ++r) {
            if (!res.restart_ok[static_cast<size_t>(r)]) continue;
            try {
                imgs[static_cast<size_t>(r)] = gen_forward(
                    ckpt.net, zs[static_cast<size_t>(r)].reshaped({1, ckpt.latent_dim}),
                    nullptr);
                ++live;
            } catch (const NumericError&) {
                res.restart_ok[static_cast<size_t>(r)] = false;
            }
        }
        if (live == 0) break;

        bool cycle_diverged = true;
        for (int t = 0; t < opts.t1; ++t) {
            ParamGrads mean_grads;
            for (const auto& [k, v] : sur.params) mean_grads[k] = Tensor(v.dims);
            double mean_loss = 0.0;
            Tape tape;
            Tensor up;
            ParamGrads pg;
            for (int r = 0; r < opts.restarts; ++r) {
                if (!res.restart_ok[static_cast<size_t>(r)]) continue;
                Tensor out = forward(sur, imgs[static_cast<size_t>(r)], Mode::Eval, &tape);
                mean_loss += loss_and_upstream(out, seed_img, up) / live;
                backward(sur, tape, up, &pg);
                for (auto& [k, g] : mean_grads) {
                    const Tensor& src = pg.at(k);
                    for (int64_t i = 0; i < g.numel(); ++i)
                        g[i] += src[i] / static_cast<float>(live);
                }
            }
            res.surrogate_trace.push_back(mean_loss);
            if (initial_sur_loss < 0.0) initial_sur_loss = mean_loss;
            if (mean_loss <= 10.0 * initial_sur_loss) cycle_diverged = false;
            adam_step(sur, mean_grads, opts.lr_surrogate);
        }
        if (cycle_diverged && initial_sur_loss > 0.0) {
            if (reinitialized)
                throw NumericError("project_robust: surrogate diverged twice "
                                   "(loss above 10x initial for a full cycle)");
            sur = build_surrogate(opts.seed + 2);
            reinitialized = true;
        }

        // phase 2: latent descent against the frozen surrogate
        for (int r = 0; r < opts.restarts; ++r) {
            if (!res.restart_ok[static_cast<size_t>(r)]) continue;
            Tensor& z = zs[static_cast<size_t>(r)];
            auto& trace = res.restart_traces[static_cast<size_t>(r)];
            Tensor gz;
            try {
                for (int t = 0; t < opts.t2; ++t) {
                    trace.push_back(latent_surrogate_loss(ckpt, sur, z, seed_img, &gz));
                    adam_z[static_cast<size_t>(r)].step(z, gz, opts.lr_latent);
                    clamp_box(z);
                }
            } catch (const NumericError&) {
                res.restart_ok[static_cast<size_t>(r)] = false;
            }
        }
    }

    // final selection loss under the final surrogate
    for (int r = 0; r < opts.restarts; ++r) {
        if (!res.restart_ok[static_cast<size_t>(r)]) continue;
        try {
            res.restart_traces[static_cast<size_t>(r)].push_back(
                latent_surrogate_loss(ckpt, sur, zs[static_cast<size_t>(r)], seed_img,
                                      nullptr));
        } catch (const NumericError&) {
            res.restart_ok[static_cast<size_t>(r)] = false;
        }
    }

    finalize(res, ckpt, zs, "project_robust");
    res.surrogate = std::move(sur);
    res.has_surrogate = true;
    return res;
}

ProjectionResult project_measurement(const Sinogram& sino, const NetCheckpoint& ckpt,
                                     const PlainOpts& opts) {
    opts.validate();
    sino.geom.validate();
    if (sino.geom.image_side != ckpt.image_side)
        throw ValidationError("project_measurement: geometry side " +
                              std::to_string(sino.geom.image_side) +
                              " != checkpoint side " + std::to_string(ckpt.image_side));

    Rng rng(opts.seed);
    std::vector<Tensor> zs = draw_restarts(rng, opts.restarts, ckpt.latent_dim);

    ProjectionResult res;
    res.restart_traces.assign(static_cast<size_t>(opts.restarts), {});
    res.restart_ok.assign(static_cast<size_t>(opts.restarts), true);

    const int s = ckpt.image_side;
    const int64_t nmeas = sino.data.numel();

    auto loss_grad = [&](const Tensor& img4, Tensor& grad_img, bool want_grad) {
        Image img = img4.reshaped({s, s});
        Sinogram ax = forward_project(img, sino.geom);
        double acc = 0.0;
        for (int64_t i = 0; i < nmeas; ++i) {
            const double d = static_cast<double>(ax.data[i]) - sino.data[i];
            acc += d * d;
            ax.data[i] = static_cast<float>(2.0 * d / static_cast<double>(nmeas));
        }
        if (want_grad) {
            Image bp = back_project(ax);
            grad_img = bp.reshaped({1, 1, s, s});
        }
        return acc / static_cast<double>(nmeas);
    };

    for (int r = 0; r < opts.restarts; ++r) {
        Tensor& z = zs[static_cast<size_t>(r)];
        auto& trace = res.restart_traces[static_cast<size_t>(r)];
        AdamState adam;
        Tape tape;
        try {
            for (int step = 0; step < opts.steps; ++step) {
                Tensor img = gen_forward(ckpt.net, z.reshaped({1, ckpt.latent_dim}), &tape);
                Tensor g_img;
                trace.push_back(loss_grad(img, g_img, true));
                Tensor gz = gen_backward(ckpt.net, tape, g_img);
                gz = gz.reshaped({ckpt.latent_dim});
                adam.step(z, gz, opts.lr);
                clamp_box(z);
            }
            Tensor img = gen_forward(ckpt.net, z.reshaped({1, ckpt.latent_dim}), nullptr);
            Tensor unused;
            trace.push_back(loss_grad(img, unused, false));
        } catch (const NumericError&) {
            res.restart_ok[static_cast<size_t>(r)] = false;
        }
    }
    finalize(res, ckpt, zs, "project_measurement");
    return res;
}

}  // namespace tomo
