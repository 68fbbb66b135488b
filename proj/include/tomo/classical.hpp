#pragma once

#include "tomo/projector.hpp"
#include "tomo/tensor.hpp"

namespace tomo {

enum class FbpWindow { RamLak, Hann };

// Filtered backprojection, parallel beam only: per-view frequency-domain
// ramp filtering (rows zero-padded to the next power of two >= 2d),
// backprojection, pi/(2v) scaling, clamp to [0,1].
Image fbp(const Sinogram& sino, FbpWindow window = FbpWindow::RamLak);

struct RlsConfig {
    enum class Reg { Smoothness, Identity };
    double lambda = 0.01;
    int iters = 200;
    bool nonneg = true;
    Reg reg = Reg::Smoothness;

    void validate() const;
};

// Gradient descent on ||Ax - y||^2 + lambda * R(x) from x = 0, step
// 0.9/L with L estimated by 50 power iterations on the objective's
// Hessian operator. Raises NumericError if the objective increases for
// 10 consecutive steps. Result clamped to [0,1]. When obj_trace is given
// it receives the per-iteration objective values.
Image rls(const Sinogram& sino, const RlsConfig& cfg,
          std::vector<double>* obj_trace = nullptr);

// Batch forms over [n,v,d] sinogram stacks sharing one geometry.
Tensor fbp_set(const Tensor& sinos, const Geometry& geom, FbpWindow window);
Tensor rls_set(const Tensor& sinos, const Geometry& geom, const RlsConfig& cfg);

}  // namespace tomo
