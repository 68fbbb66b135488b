#include "tomo/projector.hpp"

#include <cmath>

#include "tomo/parallel.hpp"

namespace tomo {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kStep = 0.5;  // ray sampling step in pixels

struct Ray {
    double ox, oy;  // origin
    double dx, dy;  // unit direction
    double t0, t1;  // sampling interval
};

// One ray per (view, bin). Parallel: lines offset s from center along the
// detector axis. Fan: lines from the source through a flat detector
// through the rotation center.
Ray make_ray(const Geometry& g, int view, int bin) {
    const double c = (g.image_side - 1) / 2.0;
    const double th = g.angles_deg[static_cast<size_t>(view)] * kPi / 180.0;
    const double ct = std::cos(th), st = std::sin(th);
    const double s = bin - (g.detector_count - 1) / 2.0;
    Ray r;
    if (g.beam == Beam::Parallel) {
        const double half = g.image_side / std::sqrt(2.0) + 1.0;
        r.ox = c + s * ct;
        r.oy = c + s * st;
        r.dx = -st;
        r.dy = ct;
        r.t0 = -half;
        r.t1 = half;
    } else {
        const double sx = c + g.fan_dso * ct;
        const double sy = c + g.fan_dso * st;
        const double bx = c - s * st;  // detector axis is (-sin, cos)
        const double by = c + s * ct;
        const double len = std::hypot(bx - sx, by - sy);
        r.ox = sx;
        r.oy = sy;
        r.dx = (bx - sx) / len;
        r.dy = (by - sy) / len;
        const double half = g.image_side / std::sqrt(2.0) + 1.0;
        r.t0 = len - half;
        r.t1 = len + half;
    }
    return r;
}

}  // namespace

void Geometry::validate() const {
    if (views() < 1) throw ValidationError("geometry: need at least one view");
    for (double a : angles_deg)
        if (!std::isfinite(a)) throw ValidationError("geometry: non-finite angle");
    if (detector_count < 1 || image_side < 1)
        throw ValidationError("geometry: detector_count and image_side must be >= 1");
    if (beam == Beam::Fan && fan_dso <= image_side / std::sqrt(2.0))
        throw ValidationError("geometry: fan source must lie outside the image "
                              "(fan_dso > image_side/sqrt(2))");
}

Geometry make_limited_geometry(Beam beam, double arc_deg, double step_deg, int d) {
    if (!(arc_deg > 0.0) || arc_deg > 180.0)
        throw ValidationError("make_limited_geometry: arc must be in (0, 180], got " +
                              std::to_string(arc_deg));
    if (!(step_deg > 0.0))
        throw ValidationError("make_limited_geometry: step must be positive");
    Geometry g;
    g.beam = beam;
    g.detector_count = d;
    g.image_side = d;
    g.fan_dso = 2.0 * d;
    const int v = static_cast<int>(std::ceil(arc_deg / step_deg - 1e-12));
    for (int i = 0; i < v; ++i) g.angles_deg.push_back(i * step_deg);
    g.validate();
    return g;
}

Sinogram forward_project(const Image& image, const Geometry& geom) {
    geom.validate();
    if (image.rank() != 2 || image.dim(0) != geom.image_side ||
        image.dim(1) != geom.image_side)
        throw ValidationError("forward_project: image dims " + image.shape_str() +
                              " do not match geometry side " +
                              std::to_string(geom.image_side));
    if (!all_finite(image))
        throw NumericError("forward_project: non-finite image");

    const int d = geom.image_side;
    const int v = geom.views();
    const int nb = geom.detector_count;
    Sinogram out;
    out.geom = geom;
    out.data = Tensor({v, nb});
    const float* img = image.ptr();

    parallel_for(v, [&](int64_t view) {
        for (int bin = 0; bin < nb; ++bin) {
            const Ray r = make_ray(geom, static_cast<int>(view), bin);
            const int m = static_cast<int>(std::ceil((r.t1 - r.t0) / kStep));
            double acc = 0.0;
            for (int i = 0; i < m; ++i) {
                const double t = r.t0 + (i + 0.5) * kStep;
                const double x = r.ox + t * r.dx;
                const double y = r.oy + t * r.dy;
                const int x0 = static_cast<int>(std::floor(x));
                const int y0 = static_cast<int>(std::floor(y));
                if (x0 < -1 || x0 >= d || y0 < -1 || y0 >= d) continue;
                const double fx = x - x0, fy = y - y0;
                if (x0 >= 0 && y0 >= 0) acc += (1 - fx) * (1 - fy) * img[y0 * d + x0];
                if (x0 + 1 < d && y0 >= 0) acc += fx * (1 - fy) * img[y0 * d + x0 + 1];
                if (x0 >= 0 && y0 + 1 < d) acc += (1 - fx) * fy * img[(y0 + 1) * d + x0];
                if (x0 + 1 < d && y0 + 1 < d) acc += fx * fy * img[(y0 + 1) * d + x0 + 1];
            }
            out.data.at2(view, bin) = static_cast<float>(acc * kStep);
        }
    });
    return out;
}

Image back_project(const Sinogram& sino) {
    const Geometry& geom = sino.geom;
    geom.validate();
    if (sino.data.rank() != 2 || sino.data.dim(0) != geom.views() ||
        sino.data.dim(1) != geom.detector_count)
        throw ValidationError("back_project: sinogram dims " + sino.data.shape_str() +
                              " do not match geometry [" +
                              std::to_string(geom.views()) + "," +
                              std::to_string(geom.detector_count) + "]");

    const int d = geom.image_side;
    const int v = geom.views();
    const int nb = geom.detector_count;
    std::vector<double> acc(static_cast<size_t>(d) * d, 0.0);

    // transpose of forward_project: scatter the same interpolation weights
    for (int view = 0; view < v; ++view) {
        for (int bin = 0; bin < nb; ++bin) {
            const double val = sino.data.at2(view, bin) * kStep;
            if (val == 0.0) continue;
            const Ray r = make_ray(geom, view, bin);
            const int m = static_cast<int>(std::ceil((r.t1 - r.t0) / kStep));
            for (int i = 0; i < m; ++i) {
                const double t = r.t0 + (i + 0.5) * kStep;
                const double x = r.ox + t * r.dx;
                const double y = r.oy + t * r.dy;
                const int x0 = static_cast<int>(std::floor(x));
                const int y0 = static_cast<int>(std::floor(y));
                if (x0 < -1 || x0 >= d || y0 < -1 || y0 >= d) continue;
                const double fx = x - x0, fy = y - y0;
                if (x0 >= 0 && y0 >= 0) acc[y0 * d + x0] += (1 - fx) * (1 - fy) * val;
                if (x0 + 1 < d && y0 >= 0) acc[y0 * d + x0 + 1] += fx * (1 - fy) * val;
                if (x0 >= 0 && y0 + 1 < d) acc[(y0 + 1) * d + x0] += (1 - fx) * fy * val;
                if (x0 + 1 < d && y0 + 1 < d)
                    acc[(y0 + 1) * d + x0 + 1] += fx * fy * val;
            }
        }
    }
    Image out({d, d});
    for (size_t i = 0; i < acc.size(); ++i) out[static_cast<int64_t>(i)] = static_cast<float>(acc[i]);
    return out;
}

Tensor forward_project_set(const Tensor& images, const Geometry& geom) {
    if (images.rank() != 3)
        throw ValidationError("forward_project_set: expected [n,d,d], got " +
                              images.shape_str());
    const int64_t n = images.dim(0);
    const int d = geom.image_side;
    Tensor out({n, geom.views(), geom.detector_count});
    const int64_t in_sz = static_cast<int64_t>(d) * d;
    const int64_t out_sz = static_cast<int64_t>(geom.views()) * geom.detector_count;
    parallel_for(n, [&](int64_t i) {
        Image img({d, d});
        std::copy_n(images.ptr() + i * in_sz, in_sz, img.ptr());
        const Sinogram s = forward_project(img, geom);
        std::copy_n(s.data.ptr(), out_sz, out.ptr() + i * out_sz);
    });
    return out;
}

Tensor back_project_set(const Tensor& sinos, const Geometry& geom) {
    if (sinos.rank() != 3)
        throw ValidationError("back_project_set: expected [n,v,d], got " +
                              sinos.shape_str());
    const int64_t n = sinos.dim(0);
    const int d = geom.image_side;
    const int64_t in_sz = static_cast<int64_t>(geom.views()) * geom.detector_count;
    const int64_t out_sz = static_cast<int64_t>(d) * d;
    Tensor out({n, d, d});
    parallel_for(n, [&](int64_t i) {
        Sinogram s;
        s.geom = geom;
        s.data = Tensor({geom.views(), geom.detector_count});
        std::copy_n(sinos.ptr() + i * in_sz, in_sz, s.data.ptr());
        const Image img = back_project(s);
        std::copy_n(img.ptr(), out_sz, out.ptr() + i * out_sz);
    });
    return out;
}

}  // namespace tomo
