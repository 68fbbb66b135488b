#pragma once

#include <cstdint>
#include <vector>

#include "tomo/gan.hpp"
#include "tomo/projector.hpp"

namespace tomo {

// Latent codes live in the box [-1,1]^k; every optimizer step is followed
// by a componentwise clamp back onto it.

struct PlainOpts {
    int steps = 2520;  // compute-matched to the robust default (2 * cycles * t2)
    float lr = 0.08f;
    int restarts = 4;
    uint64_t seed = 0;

    void validate() const;
};

struct RobustOpts {
    int t1 = 15;       // surrogate steps per cycle
    int t2 = 15;       // latent steps per cycle
    float lr_surrogate = 0.01f;
    float lr_latent = 0.08f;
    int cycles = 84;   // 84 * (15 + 15) = 2520 alternating iterations
    int restarts = 4;
    uint64_t seed = 0;
    // zeroed conv weights turn the surrogate into the identity map; with
    // lr_surrogate = 0 the robust projection reduces to the plain one
    bool identity_surrogate = false;

    void validate() const;
    int total_iterations() const { return cycles * (t1 + t2); }
};

struct ProjectionResult {
    Image x_star;
    Tensor z_star;
    int restart_index = -1;
    // latent-step loss per restart: entry i is the loss before step i,
    // plus one final entry after the last step. Aborted restarts keep
    // their truncated trace and are excluded from selection.
    std::vector<std::vector<double>> restart_traces;
    std::vector<bool> restart_ok;
    std::vector<double> surrogate_trace;  // robust only, mean loss per T1 step
    Net surrogate;                        // robust only
    bool has_surrogate = false;

    const std::vector<double>& loss_trace() const {
        return restart_traces.at(static_cast<size_t>(restart_index));
    }
};

// min_z || G(z) - seed ||^2 (mean-squared) by Adam + box clamp, best of
// `restarts` independent initializations.
ProjectionResult project_plain(const Image& seed_img, const NetCheckpoint& ckpt,
                               const PlainOpts& opts);

// Shallow corruption surrogate: conv 3x3 (1->16) + relu, conv 3x3 (16->1),
// learned pixel mask, identity shortcut. With zero conv weights it is the
// identity regardless of the mask.
Net build_surrogate(uint64_t seed);

// Corruption mimicking: alternate T1 surrogate steps (shared across
// restarts, minimizing the mean of ||f(G(z_r)) - seed||^2) with T2 latent
// steps per restart, for `cycles` rounds. The reported x_star is the clean
// manifold point G(z_star), not the surrogate output.
ProjectionResult project_robust(const Image& seed_img, const NetCheckpoint& ckpt,
                                const RobustOpts& opts);

// min_z || A(G(z)) - y ||^2: the measurement-domain variant; gradients
// chain the projector adjoint into the generator.
ProjectionResult project_measurement(const Sinogram& sino, const NetCheckpoint& ckpt,
                                     const PlainOpts& opts);

// Loss-and-gradient cores used by the projections; exposed so gradient
// checks can probe the exact chains the optimizers step on. grad_z may be
// null. z is [k].
double latent_image_loss(const NetCheckpoint& ckpt, const Tensor& z,
                         const Image& seed_img, Tensor* grad_z);
double latent_surrogate_loss(const NetCheckpoint& ckpt, const Net& surrogate,
                             const Tensor& z, const Image& seed_img, Tensor* grad_z);
double latent_measurement_loss(const NetCheckpoint& ckpt, const Tensor& z,
                               const Sinogram& sino, Tensor* grad_z);

}  // namespace tomo
