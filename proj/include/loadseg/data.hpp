#pragma once

// Synthetic segmentation datasets: geometric shapes over a textured
// background, deterministic splitting, and horizontal-flip augmentation.
// Everything here is a pure function of (inputs, seed).

#include <cstdint>
#include <string>
#include <vector>

#include "loadseg/common.hpp"
#include "loadseg/tensor.hpp"

namespace loadseg {

struct ImageSample {
    int height = 0;
    int width = 0;
    std::vector<float> rgb;  // H*W*3, values in [0,1]

    float& at(int h, int w, int c) { return rgb[(static_cast<size_t>(h) * width + w) * 3 + c]; }
    float at(int h, int w, int c) const { return rgb[(static_cast<size_t>(h) * width + w) * 3 + c]; }

    Tensor as_tensor() const { return Tensor({height, width, 3}, std::vector<float>(rgb)); }
};

struct LabelMap {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> classes;  // H*W

    uint8_t& at(int h, int w) { return classes[static_cast<size_t>(h) * width + w]; }
    uint8_t at(int h, int w) const { return classes[static_cast<size_t>(h) * width + w]; }
};

struct Sample {
    ImageSample image;
    LabelMap label;
};

struct Dataset {
    std::vector<Sample> samples;
    int height = 0;
    int width = 0;
    int classes = 0;  // K
    uint64_t seed = 0;

    size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
};

struct SplitIndices {
    std::vector<size_t> train;
    std::vector<size_t> val;
    std::vector<size_t> holdout;
};

// Background (class 0) plus 1..3 non-overlapping filled shapes from classes
// 1..K-1. The first shape of sample i has class 1 + (i mod (K-1)), so every
// class appears whenever M >= K-1. Identical seeds give identical bytes.
Dataset generate_shapes_dataset(uint64_t seed, int samples, int height, int width, int classes);

// Diagnostic dataset where the class is readable off the dominant color
// channel; linearly separable, used for capacity checks and oracle evals.
Dataset generate_color_coded_dataset(uint64_t seed, int samples, int height, int width, int classes);

// Floor sizing with the remainder assigned to train; hold-out indices are
// drawn from the validation block.
SplitIndices split_dataset(const Dataset& dataset, double train_fraction, double val_fraction,
                           double holdout_fraction_of_val, uint64_t seed);

Dataset subset(const Dataset& dataset, const std::vector<size_t>& indices);

// Mirrors image and map together horizontally with probability 1/2.
Sample random_flip(const Sample& sample, uint64_t seed);

Sample flip_horizontal(const Sample& sample);

// Binary container: magic "LDSD", version, H, W, K, M, then per sample
// H*W*3 rgb bytes (scaled to [0,255]) and H*W class bytes.
void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace loadseg
