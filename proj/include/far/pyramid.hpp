// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "far/types.hpp"

namespace far {

/// One scale of a per-view feature grid. Cells are stored row-major,
/// one matrix row per cell (row index y * width + x), one column per
/// channel. A cell (x, y) covers full-image pixels
/// [x*stride, (x+1)*stride) x [y*stride, (y+1)*stride); its sampling
/// position is the cell center.
struct FeatureLevel {
    int stride = 0;
    int width = 0;
    int height = 0;
    MatX data;  // (height*width) x channels

    int channels() const { return static_cast<int>(data.cols()); }
    void validate() const;

    Eigen::Ref<const Eigen::RowVectorXd> cell(int x, int y) const {
        return data.row(static_cast<Eigen::Index>(y) * width + x);
    }
};

/// Multi-scale grids for every view of a rig, strides strictly
/// increasing and the channel count shared everywhere.
struct FeaturePyramid {
    std::vector<std::vector<FeatureLevel>> views;

    int n_views() const { return static_cast<int>(views.size()); }
    int n_levels() const { return views.empty() ? 0 : static_cast<int>(views.front().size()); }
    int channels() const;
    void validate() const;
};

/// Binary debug dump: u32 view count, then per view u32 level count,
/// then per level u32 stride/height/width/channels followed by
/// height*width*channels row-major float32 values.
void dump_pyramid(const FeaturePyramid& pyr, const std::string& path);
FeaturePyramid load_pyramid(const std::string& path);

}  // namespace far
