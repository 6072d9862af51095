#pragma once

#include <algorithm>
#include <vector>

#include "infomatch/common.hpp"

namespace infomatch {

// Channel-planar float image, values in [0,1]. pix[(c*H + y)*W + x].
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> pix;

    Image() = default;
    Image(int h, int w, int c, float fill = 0.0f)
        : height(h), width(w), channels(c), pix(static_cast<size_t>(h) * w * c, fill) {}

    float at(int c, int y, int x) const {
        return pix[(static_cast<size_t>(c) * height + y) * width + x];
    }
    float& at(int c, int y, int x) {
        return pix[(static_cast<size_t>(c) * height + y) * width + x];
    }

    size_t size() const { return pix.size(); }

    bool same_shape(const Image& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

inline float clamp01(float v) { return std::min(1.0f, std::max(0.0f, v)); }

inline void clamp01_inplace(Image& im) {
    for (float& v : im.pix) v = clamp01(v);
}

inline Image hflip(const Image& im) {
    Image out(im.height, im.width, im.channels);
    for (int c = 0; c < im.channels; ++c)
        for (int y = 0; y < im.height; ++y)
            for (int x = 0; x < im.width; ++x) out.at(c, y, x) = im.at(c, y, im.width - 1 - x);
    return out;
}

inline std::vector<float> make_one_hot(int k, int cls) {
    require(cls >= 0 && cls < k, "make_one_hot: class out of range");
    std::vector<float> v(k, 0.0f);
    v[cls] = 1.0f;
    return v;
}

inline int one_hot_index(const std::vector<float>& label) {
    for (size_t j = 0; j < label.size(); ++j)
        if (label[j] == 1.0f) return static_cast<int>(j);
    throw ContractError("one_hot_index: label has no entry equal to 1");
}

}  // namespace infomatch
