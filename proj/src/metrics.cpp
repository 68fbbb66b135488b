#include "tomo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace tomo {

namespace {

constexpr int kWin = 7;       // window extent
constexpr int kHalf = 3;
constexpr double kSigma = 1.5;
constexpr double kK1 = 0.01, kK2 = 0.03;  // stabilizers, L = 1

// symmetric reflection with edge duplication: -1 -> 0, d -> d-1
int reflect(int i, int d) {
    if (i < 0) i = -i - 1;
    if (i >= d) i = 2 * d - i - 1;
    return i;
}

const std::vector<double>& gauss1d() {
    static const std::vector<double> k = [] {
        std::vector<double> v(kWin);
        double s = 0.0;
        for (int i = 0; i < kWin; ++i) {
            const double x = i - kHalf;
            v[static_cast<size_t>(i)] = std::exp(-x * x / (2.0 * kSigma * kSigma));
            s += v[static_cast<size_t>(i)];
        }
        for (double& e : v) e /= s;
        return v;
    }();
    return k;
}

// separable Gaussian blur with reflected borders, double precision
std::vector<double> blur(const std::vector<double>& img, int h, int w) {
    const auto& k = gauss1d();
    std::vector<double> tmp(img.size()), out(img.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int t = -kHalf; t <= kHalf; ++t)
                acc += k[static_cast<size_t>(t + kHalf)] *
                       img[static_cast<size_t>(y) * w + reflect(x + t, w)];
            tmp[static_cast<size_t>(y) * w + x] = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int t = -kHalf; t <= kHalf; ++t)
                acc += k[static_cast<size_t>(t + kHalf)] *
                       tmp[static_cast<size_t>(reflect(y + t, h)) * w + x];
            out[static_cast<size_t>(y) * w + x] = acc;
        }
    return out;
}

void check_pair(const Image& a, const Image& b, const char* who) {
    if (!a.same_dims(b))
        throw ValidationError(std::string(who) + ": dims mismatch " + a.shape_str() +
                              " vs " + b.shape_str());
    if (a.rank() != 2) throw ValidationError(std::string(who) + ": expected 2-d images");
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
    check_pair(a, b, "psnr");
    const double m = mse(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / m);
}

double ssim(const Image& a, const Image& b) {
    check_pair(a, b, "ssim");
    const int h = static_cast<int>(a.dim(0));
    const int w = static_cast<int>(a.dim(1));
    const size_t n = static_cast<size_t>(h) * w;

    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (size_t i = 0; i < n; ++i) {
        x[i] = a.data[i];
        y[i] = b.data[i];
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto mu_x = blur(x, h, w);
    const auto mu_y = blur(y, h, w);
    const auto m_xx = blur(xx, h, w);
    const auto m_yy = blur(yy, h, w);
    const auto m_xy = blur(xy, h, w);

    const double c1 = kK1 * kK1, c2 = kK2 * kK2;
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double vx = m_xx[i] - mu_x[i] * mu_x[i];
        const double vy = m_yy[i] - mu_y[i] * mu_y[i];
        const double cxy = m_xy[i] - mu_x[i] * mu_y[i];
        acc += ((2.0 * mu_x[i] * mu_y[i] + c1) * (2.0 * cxy + c2)) /
               ((mu_x[i] * mu_x[i] + mu_y[i] * mu_y[i] + c1) * (vx + vy + c2));
    }
    return acc / static_cast<double>(n);
}

EvalReport batch_eval(const ImageSet& pred, const ImageSet& gt,
                      const std::string& method, double arc_deg) {
    if (pred.count() != gt.count() || pred.side() != gt.side())
        throw ValidationError("batch_eval: prediction/ground-truth shape mismatch");
    EvalReport r;
    for (int64_t i = 0; i < pred.count(); ++i) {
        const Image p = pred.get(i);
        const Image g = gt.get(i);
        r.rows.push_back({i, method, arc_deg, psnr(p, g), ssim(p, g)});
    }
    return r;
}

std::vector<EvalAggregate> EvalReport::aggregates() const {
    std::vector<EvalAggregate> out;
    for (const auto& row : rows) {
        auto it = std::find_if(out.begin(), out.end(), [&](const EvalAggregate& a) {
            return a.method == row.method && a.arc_deg == row.arc_deg;
        });
        if (it == out.end())
            out.push_back({row.method, row.arc_deg, 0, 0, 0, 0, 0, 0});
    }
    for (auto& agg : out) {
        std::vector<double> ps, ss;
        for (const auto& row : rows)
            if (row.method == agg.method && row.arc_deg == agg.arc_deg) {
                ps.push_back(row.psnr_db);
                ss.push_back(row.ssim);
            }
        const double np = static_cast<double>(ps.size());
        for (double v : ps) agg.psnr_mean += v / np;
        for (double v : ss) agg.ssim_mean += v / np;
        for (double v : ps) agg.psnr_std += (v - agg.psnr_mean) * (v - agg.psnr_mean) / np;
        for (double v : ss) agg.ssim_std += (v - agg.ssim_mean) * (v - agg.ssim_mean) / np;
        agg.psnr_std = std::sqrt(agg.psnr_std);
        agg.ssim_std = std::sqrt(agg.ssim_std);
        agg.psnr_median = median_of(ps);
        agg.ssim_median = median_of(ss);
    }
    return out;
}

std::string to_csv(const EvalReport& report) {
    std::string out = "id,method,arc,psnr,ssim\n";
    for (const auto& r : report.rows) {
        out += std::to_string(r.id) + "," + r.method + "," + fmt_double(r.arc_deg) +
               "," + fmt_double(r.psnr_db) + "," + fmt_double(r.ssim) + "\n";
    }
    return out;
}

EvalReport parse_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line) || line != "id,method,arc,psnr,ssim")
        throw ValidationError("csv: bad header: " + line);
    EvalReport r;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        EvalRow row;
        std::string field;
        std::getline(ls, field, ',');
        row.id = std::stoll(field);
        std::getline(ls, row.method, ',');
        std::getline(ls, field, ',');
        row.arc_deg = std::stod(field);
        std::getline(ls, field, ',');
        row.psnr_db = std::stod(field);
        std::getline(ls, field, ',');
        row.ssim = std::stod(field);
        r.rows.push_back(std::move(row));
    }
    return r;
}

void save_csv(const EvalReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("csv: cannot write " + path);
    out << to_csv(report);
}

EvalReport load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("csv: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str());
}

}  // namespace tomo
