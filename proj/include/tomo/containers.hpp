#pragma once

#include <string>

#include "tomo/datasets.hpp"
#include "tomo/ntc.hpp"
#include "tomo/projector.hpp"

namespace tomo {

// NTC file schemas shared by the CLI, tests, and batch pipeline:
//   image sets:    "images" [n,d,d] (+ "source", "seed")
//   sinogram sets: "sino" [n,v,d], "angles" [v], "beam" scalar,
//                  geometry scalars, optional "images" ground truth

void put_imageset(NtcFile& f, const ImageSet& set);
ImageSet get_imageset(const NtcFile& f);
void save_imageset(const ImageSet& set, const std::string& path);
ImageSet load_imageset(const std::string& path);

void put_geometry(NtcFile& f, const Geometry& g);
Geometry get_geometry(const NtcFile& f);

struct SinogramSet {
    Tensor sinos;  // [n, v, d]
    Geometry geom;
    Tensor ground_truth;  // [n, d, d] when available, empty otherwise

    bool has_ground_truth() const { return ground_truth.numel() > 0; }
};

void save_sinogram_set(const SinogramSet& s, const std::string& path);
SinogramSet load_sinogram_set(const std::string& path);

}  // namespace tomo
