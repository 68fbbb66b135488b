#pragma once

#include <cstdint>
#include <vector>

#include "tomo/tensor.hpp"

namespace tomo {

enum class Beam { Parallel, Fan };

// Acquisition description: one row of the sinogram per angle, one column
// per detector bin. Unit pixels, unit detector pitch, rotation center at
// the image center.
struct Geometry {
    Beam beam = Beam::Parallel;
    std::vector<double> angles_deg;
    int detector_count = 0;
    int image_side = 0;
    double fan_dso = 0.0;  // source-to-center distance, fan only

    int views() const { return static_cast<int>(angles_deg.size()); }
    void validate() const;
};

struct Sinogram {
    Tensor data;  // [views, detector_count]
    Geometry geom;
};

// angles {0, step, 2*step, ...} strictly below arc_deg; default detector
// count and image side are both d
Geometry make_limited_geometry(Beam beam, double arc_deg, double step_deg, int d);

// Discretized line integrals: bilinear interpolation sampled every 0.5 px
// along each ray (Joseph-style), zero outside the grid. Linear in the
// image; back_project is its exact transpose.
Sinogram forward_project(const Image& image, const Geometry& geom);
Image back_project(const Sinogram& sino);

// Batch forms over [n,d,d] image stacks; parallel across images.
Tensor forward_project_set(const Tensor& images, const Geometry& geom);
Tensor back_project_set(const Tensor& sinos, const Geometry& geom);

}  // namespace tomo
