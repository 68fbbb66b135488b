#include "tomo/containers.hpp"

namespace tomo {

void put_imageset(NtcFile& f, const ImageSet& set) {
    if (set.images.rank() != 3)
        throw ValidationError("imageset: expected [n,d,d], got " +
                              set.images.shape_str());
    f.put("images", NtcTensor::from_f32(set.images));
    f.put("source", NtcTensor::from_string(set.source));
    f.put("seed", NtcTensor::scalar_i64(static_cast<int64_t>(set.seed)));
}

ImageSet get_imageset(const NtcFile& f) {
    ImageSet set;
    set.images = f.get("images").to_f32();
    if (set.images.rank() != 3)
        throw ValidationError("imageset: stored \"images\" is not [n,d,d]");
    if (f.has("source")) set.source = f.get("source").to_string();
    if (f.has("seed")) set.seed = static_cast<uint64_t>(f.get("seed").scalar_as_i64());
    return set;
}

void save_imageset(const ImageSet& set, const std::string& path) {
    NtcFile f;
    put_imageset(f, set);
    ntc_save(f, path);
}

ImageSet load_imageset(const std::string& path) {
    return get_imageset(ntc_load(path));
}

void put_geometry(NtcFile& f, const Geometry& g) {
    f.put("angles", NtcTensor::from_f64(g.angles_deg,
                                        {static_cast<int64_t>(g.angles_deg.size())}));
    f.put("beam", NtcTensor::scalar_i64(g.beam == Beam::Parallel ? 0 : 1));
    f.put("geom.detector_count", NtcTensor::scalar_i64(g.detector_count));
    f.put("geom.image_side", NtcTensor::scalar_i64(g.image_side));
    f.put("geom.fan_dso", NtcTensor::scalar_f64(g.fan_dso));
}

Geometry get_geometry(const NtcFile& f) {
    Geometry g;
    g.angles_deg = f.get("angles").to_f64();
    g.beam = f.get("beam").scalar_as_i64() == 0 ? Beam::Parallel : Beam::Fan;
    g.detector_count = static_cast<int>(f.get("geom.detector_count").scalar_as_i64());
    g.image_side = static_cast<int>(f.get("geom.image_side").scalar_as_i64());
    g.fan_dso = f.get("geom.fan_dso").scalar_as_f64();
    g.validate();
    return g;
}

void save_sinogram_set(const SinogramSet& s, const std::string& path) {
    NtcFile f;
    f.put("sino", NtcTensor::from_f32(s.sinos));
    put_geometry(f, s.geom);
    if (s.has_ground_truth())
        f.put("images", NtcTensor::from_f32(s.ground_truth));
    ntc_save(f, path);
}

SinogramSet load_sinogram_set(const std::string& path) {
    const NtcFile f = ntc_load(path);
    SinogramSet s;
    s.sinos = f.get("sino").to_f32();
    s.geom = get_geometry(f);
    if (f.has("images")) s.ground_truth = f.get("images").to_f32();
    if (s.sinos.rank() != 3 || s.sinos.dim(1) != s.geom.views() ||
        s.sinos.dim(2) != s.geom.detector_count)
        throw ValidationError("sinogram set: " + path + ": \"sino\" dims " +
                              s.sinos.shape_str() + " do not match geometry");
    return s;
}

}  // namespace tomo
