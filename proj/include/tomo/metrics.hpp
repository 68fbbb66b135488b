#pragma once

#include <string>
#include <vector>

#include "tomo/datasets.hpp"
#include "tomo/tensor.hpp"

namespace tomo {

// 10*log10(1/MSE) for images in [0,1]; +inf when the images are identical.
double psnr(const Image& a, const Image& b);

// Mean local SSIM: 7x7 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
// L=1, symmetric-reflect borders. The 11x11 default would be mostly
// border at 28x28.
double ssim(const Image& a, const Image& b);

struct EvalRow {
    int64_t id = 0;
    std::string method;
    double arc_deg = 0.0;
    double psnr_db = 0.0;  // +inf flags identical images
    double ssim = 0.0;
};

struct EvalAggregate {
    std::string method;
    double arc_deg = 0.0;
    double psnr_mean = 0.0, psnr_std = 0.0, psnr_median = 0.0;
    double ssim_mean = 0.0, ssim_std = 0.0, ssim_median = 0.0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::vector<EvalAggregate> aggregates() const;
};

EvalReport batch_eval(const ImageSet& pred, const ImageSet& gt,
                      const std::string& method, double arc_deg);

// CSV with header "id,method,arc,psnr,ssim", '.' decimal separator,
// max-precision doubles so parse-back reproduces the report exactly.
std::string to_csv(const EvalReport& report);
EvalReport parse_csv(const std::string& csv);
void save_csv(const EvalReport& report, const std::string& path);
EvalReport load_csv(const std::string& path);

}  // namespace tomo
