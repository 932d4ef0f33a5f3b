#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace bridgelab {

// Dense row-major tensor of doubles. The workhorse for checkpoint IO and
// for carrying per-element statistics (e.g. a mean grid) around.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> shape_, double fill = 0.0);

    std::size_t size() const { return data.size(); }
    bool all_finite() const;
};

std::size_t numel(const std::vector<std::size_t>& shape);

// A [C,H,W] latent with zero padding on the width axis beyond true_width.
// Element layout is row-major: index = (c*height + h)*width + w.
struct LatentGrid {
    int channels = 0;
    int height = 0;
    int width = 0;       // padded width
    int true_width = 0;  // columns >= true_width are exactly zero
    std::vector<double> data;

    LatentGrid() = default;
    LatentGrid(int channels, int height, int width, int true_width);

    double& at(int c, int h, int w) { return data[(static_cast<std::size_t>(c) * height + h) * width + w]; }
    double at(int c, int h, int w) const { return data[(static_cast<std::size_t>(c) * height + h) * width + w]; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const LatentGrid& other) const;

    // Rewrites every column at index >= true_width with exact zeros.
    void rezero_padding();
    bool padding_is_zero() const;
    bool all_finite() const;
};

// Throws std::invalid_argument when the two grids differ in shape.
void require_same_shape(const LatentGrid& a, const LatentGrid& b, const std::string& where);

// Channel-averaged H x W feature map, the output of the toy decoder.
struct FeatureMap {
    int height = 0;
    int width = 0;
    std::vector<double> data;  // row-major [h][w]

    double& at(int h, int w) { return data[static_cast<std::size_t>(h) * width + w]; }
    double at(int h, int w) const { return data[static_cast<std::size_t>(h) * width + w]; }
};

}  // namespace bridgelab
