// SPDX-License-Identifier: Apache-2.0
#include "far/pyramid.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace far {

void FeatureLevel::validate() const {
    if (stride < 1 || width < 1 || height < 1)
        throw std::invalid_argument("pyramid: level dims must be positive");
    if (data.rows() != static_cast<Eigen::Index>(height) * width || data.cols() < 1)
        throw std::invalid_argument("pyramid: level data shape mismatch");
    if (!data.allFinite()) throw std::invalid_argument("pyramid: nonfinite feature values");
}

int FeaturePyramid::channels() const {
    if (views.empty() || views.front().empty()) return 0;
    return views.front().front().channels();
}

void FeaturePyramid::validate() const {
    if (views.empty()) throw std::invalid_argument("pyramid: no views");
    const int c = channels();
    const int levels = n_levels();
    for (const auto& view : views) {
        if (static_cast<int>(view.size()) != levels)
            throw std::invalid_argument("pyramid: level count differs across views");
        int prev_stride = 0;
        for (const auto& level : view) {
            level.validate();
            if (level.stride <= prev_stride)
                throw std::invalid_argument("pyramid: strides must strictly increase");
            if (level.channels() != c)
                throw std::invalid_argument("pyramid: channel count differs across levels");
            prev_stride = level.stride;
        }
    }
}

namespace {

void write_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::ifstream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw std::runtime_error("pyramid dump: truncated header");
    return v;
}

}  // namespace

void dump_pyramid(const FeaturePyramid& pyr, const std::string& path) {
    pyr.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("pyramid dump: cannot open " + path);
    write_u32(out, static_cast<std::uint32_t>(pyr.views.size()));
    for (const auto& view : pyr.views) {
        write_u32(out, static_cast<std::uint32_t>(view.size()));
        for (const auto& level : view) {
            write_u32(out, static_cast<std::uint32_t>(level.stride));
            write_u32(out, static_cast<std::uint32_t>(level.height));
            write_u32(out, static_cast<std::uint32_t>(level.width));
            write_u32(out, static_cast<std::uint32_t>(level.channels()));
            for (Eigen::Index r = 0; r < level.data.rows(); ++r)
                for (Eigen::Index c = 0; c < level.data.cols(); ++c) {
                    const float f = static_cast<float>(level.data(r, c));
                    out.write(reinterpret_cast<const char*>(&f), sizeof(f));
                }
        }
    }
    if (!out) throw std::runtime_error("pyramid dump: write failed for " + path);
}

FeaturePyramid load_pyramid(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("pyramid dump: cannot open " + path);
    FeaturePyramid pyr;
    const std::uint32_t n_views = read_u32(in);
    pyr.views.resize(n_views);
    for (auto& view : pyr.views) {
        const std::uint32_t n_levels = read_u32(in);
        view.resize(n_levels);
        for (auto& level : view) {
            level.stride = static_cast<int>(read_u32(in));
            level.height = static_cast<int>(read_u32(in));
            level.width = static_cast<int>(read_u32(in));
            const int channels = static_cast<int>(read_u32(in));
            level.data.resize(static_cast<Eigen::Index>(level.height) * level.width, channels);
            for (Eigen::Index r = 0; r < level.data.rows(); ++r)
                for (Eigen::Index c = 0; c < channels; ++c) {
                    float f = 0.0f;
                    in.read(reinterpret_cast<char*>(&f), sizeof(f));
                    if (!in) throw std::runtime_error("pyramid dump: truncated data");
                    level.data(r, c) = static_cast<double>(f);
                }
        }
    }
    pyr.validate();
    return pyr;
}

}  // namespace far
