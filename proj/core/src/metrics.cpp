#include "e3d/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace e3d {

namespace {

void check_finite(const DensityMap& map) {
    for (double v : map.grid) {
        if (!std::isfinite(v)) throw std::invalid_argument("count_of: non-finite cell in map");
    }
}

}  // namespace

double count_of(const DensityMap& map) {
    check_finite(map);
    return map.sum();
}

double count_of(const DensityMap& map, const RoiMask& roi) {
    check_finite(map);
    if (map.h != roi.h || map.w != roi.w) {
        throw std::invalid_argument("count_of: ROI dims do not match map");
    }
    double acc = 0.0;
    for (index_t y = 0; y < map.h; ++y)
        for (index_t x = 0; x < map.w; ++x)
            if (roi.inside(y, x)) acc += map.at(y, x);
    return acc;
}

double mae(const std::vector<CountRecord>& records) {
    if (records.empty()) throw std::invalid_argument("mae: empty record set");
    double acc = 0.0;
    for (const auto& r : records) acc += std::abs(r.truth - r.estimate);
    return acc / static_cast<double>(records.size());
}

double mse(const std::vector<CountRecord>& records) {
    if (records.empty()) throw std::invalid_argument("mse: empty record set");
    double acc = 0.0;
    for (const auto& r : records) {
        const double d = r.truth - r.estimate;
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(records.size()));
}

double game_frame(const DensityMap& pred, const DensityMap& gt, int level) {
    if (pred.h != gt.h || pred.w != gt.w) {
        throw std::invalid_argument("game: prediction and GT shapes differ");
    }
    if (level < 0) throw std::invalid_argument("game: level must be >= 0");
    const index_t cells = index_t(1) << level;
    if (cells > pred.h || cells > pred.w) {
        throw std::invalid_argument("game: level " + std::to_string(level) +
                                    " yields empty regions on a " + std::to_string(pred.h) + "x" +
                                    std::to_string(pred.w) + " map");
    }
    const index_t base_h = pred.h / cells;
    const index_t base_w = pred.w / cells;
    double score = 0.0;
    for (index_t ry = 0; ry < cells; ++ry) {
        const index_t y0 = ry * base_h;
        const index_t y1 = (ry == cells - 1) ? pred.h : y0 + base_h;
        for (index_t rx = 0; rx < cells; ++rx) {
            const index_t x0 = rx * base_w;
            const index_t x1 = (rx == cells - 1) ? pred.w : x0 + base_w;
            double p = 0.0, g = 0.0;
            for (index_t y = y0; y < y1; ++y)
                for (index_t x = x0; x < x1; ++x) {
                    p += pred.at(y, x);
                    g += gt.at(y, x);
                }
            score += std::abs(p - g);
        }
    }
    return score;
}

double game(const std::vector<DensityMap>& preds, const std::vector<DensityMap>& gts, int level) {
    if (preds.size() != gts.size() || preds.empty()) {
        throw std::invalid_argument("game: need equal, nonempty frame lists");
    }
    double acc = 0.0;
    for (size_t i = 0; i < preds.size(); ++i) acc += game_frame(preds[i], gts[i], level);
    return acc / static_cast<double>(preds.size());
}

}  // namespace e3d
