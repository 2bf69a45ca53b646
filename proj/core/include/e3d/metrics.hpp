#pragma once

#include <string>
#include <vector>

#include "e3d/density.hpp"

namespace e3d {

struct CountRecord {
    std::string frame_id;
    double truth = 0.0;     // from the GT map sum
    double estimate = 0.0;  // from the predicted map sum
};

// Sum of all cells; masks with roi first when one is supplied.
double count_of(const DensityMap& map);
double count_of(const DensityMap& map, const RoiMask& roi);

double mae(const std::vector<CountRecord>& records);
// Sqrt of the mean squared count error (an RMSE despite the name).
double mse(const std::vector<CountRecord>& records);

// Per-frame GAME: the map is split into a 2^L x 2^L grid (floor-sized cells,
// remainder pixels absorbed by the last row/column) and absolute region count
// errors are summed.
double game_frame(const DensityMap& pred, const DensityMap& gt, int level);

// Dataset score: mean of game_frame over aligned frame pairs.
double game(const std::vector<DensityMap>& preds, const std::vector<DensityMap>& gts, int level);

}  // namespace e3d
