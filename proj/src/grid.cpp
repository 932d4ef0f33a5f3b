#include "bridgelab/grid.hpp"

#include <cmath>
#include <stdexcept>

namespace bridgelab {

std::size_t numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

Tensor::Tensor(std::vector<std::size_t> shape_, double fill)
    : shape(std::move(shape_)), data(numel(shape), fill) {}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

LatentGrid::LatentGrid(int channels_, int height_, int width_, int true_width_)
    : channels(channels_), height(height_), width(width_), true_width(true_width_) {
    if (channels <= 0 || height <= 0 || width <= 0)
        throw std::invalid_argument("LatentGrid: extents must be positive");
    if (true_width < 1 || true_width > width)
        throw std::invalid_argument("LatentGrid: true_width must be in [1, width]");
    data.assign(static_cast<std::size_t>(channels) * height * width, 0.0);
}

bool LatentGrid::same_shape(const LatentGrid& other) const {
    return channels == other.channels && height == other.height && width == other.width;
}

void LatentGrid::rezero_padding() {
    for (int c = 0; c < channels; ++c)
        for (int h = 0; h < height; ++h)
            for (int w = true_width; w < width; ++w) at(c, h, w) = 0.0;
}

bool LatentGrid::padding_is_zero() const {
    for (int c = 0; c < channels; ++c)
        for (int h = 0; h < height; ++h)
            for (int w = true_width; w < width; ++w)
                if (at(c, h, w) != 0.0) return false;
    return true;
}

bool LatentGrid::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

void require_same_shape(const LatentGrid& a, const LatentGrid& b, const std::string& where) {
    if (!a.same_shape(b))
        throw std::invalid_argument(where + ": shape mismatch [" + std::to_string(a.channels) + "," +
                                    std::to_string(a.height) + "," + std::to_string(a.width) + "] vs [" +
                                    std::to_string(b.channels) + "," + std::to_string(b.height) + "," +
                                    std::to_string(b.width) + "]");
}

}  // namespace bridgelab
