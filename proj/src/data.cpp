#include "loadseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace loadseg {

namespace {

struct ShapePlacement {
    int kind = 0;  // 0 rectangle, 1 disk, 2 triangle
    int cx = 0, cy = 0, half = 0;
    uint8_t cls = 0;
};

bool overlaps(const ShapePlacement& a, const ShapePlacement& b) {
    // Bounding-box test with a one-pixel margin keeps shapes visually distinct.
    const int m = 1;
    return std::abs(a.cx - b.cx) <= a.half + b.half + m &&
           std::abs(a.cy - b.cy) <= a.half + b.half + m;
}

bool inside_shape(const ShapePlacement& s, int h, int w) {
    const int dx = w - s.cx;
    const int dy = h - s.cy;
    switch (s.kind) {
        case 0:  // rectangle
            return std::abs(dx) <= s.half && std::abs(dy) <= s.half;
        case 1:  // disk
            return dx * dx + dy * dy <= s.half * s.half;
        default:  // apex-up isoceles triangle
            if (dy < -s.half || dy > s.half) return false;
            // Width grows linearly from apex (top) to base (bottom).
            return std::abs(dx) * 2 * s.half <= (dy + s.half) * s.half;
    }
}

// Fixed palette; class-correlated hues with room for K up to 16 via rotation.
void class_color(int cls, int classes, float* out) {
    static const float palette[8][3] = {
        {0.20f, 0.20f, 0.22f},  // background: dark gray
        {0.85f, 0.25f, 0.20f},  // red
        {0.20f, 0.80f, 0.25f},  // green
        {0.20f, 0.30f, 0.85f},  // blue
        {0.85f, 0.80f, 0.20f},  // yellow
        {0.75f, 0.25f, 0.80f},  // magenta
        {0.20f, 0.80f, 0.80f},  // cyan
        {0.95f, 0.55f, 0.20f},  // orange
    };
    const float* base = palette[cls % 8];
    const float shift = 0.08f * static_cast<float>(cls / 8);
    for (int c = 0; c < 3; ++c) out[c] = std::min(1.0f, base[c] + shift);
    (void)classes;
}

float clamp01(float v) { return std::min(1.0f, std::max(0.0f, v)); }

void validate_dims(int samples, int height, int width, int classes) {
    if (classes < 2) throw ContractViolation("dataset: class count must be >= 2");
    if (samples < 1) throw ContractViolation("dataset: sample count must be >= 1");
    if (height < 8 || width < 8) throw ContractViolation("dataset: height and width must be >= 8");
    if (classes > 255) throw ContractViolation("dataset: class count must fit one byte");
}

}  // namespace

Dataset generate_shapes_dataset(uint64_t seed, int samples, int height, int width, int classes) {
    validate_dims(samples, height, width, classes);
    Dataset ds;
    ds.height = height;
    ds.width = width;
    ds.classes = classes;
    ds.seed = seed;
    ds.samples.resize(samples);

    // Shape sizes chosen so foreground classes carry a meaningful pixel share
    // and per-class frequencies stay roughly balanced.
    const int min_half = std::max(2, std::min(height, width) / 8);
    const int max_half = std::max(min_half + 1, std::min(height, width) / 3);

    for (int i = 0; i < samples; ++i) {
        Rng rng(derive_seed(seed, seed_purpose::kDatasetSample, static_cast<uint64_t>(i)));
        Sample& s = ds.samples[i];
        s.image.height = height;
        s.image.width = width;
        s.image.rgb.assign(static_cast<size_t>(height) * width * 3, 0.0f);
        s.label.height = height;
        s.label.width = width;
        s.label.classes.assign(static_cast<size_t>(height) * width, 0);

        const int shape_count = rng.range_int(1, 3);
        std::vector<ShapePlacement> placed;
        for (int k = 0; k < shape_count; ++k) {
            ShapePlacement sp;
            // Cycle the first shape's class so small datasets still cover all classes.
            sp.cls = (k == 0) ? static_cast<uint8_t>(1 + i % (classes - 1))
                              : static_cast<uint8_t>(rng.range_int(1, classes - 1));
            bool ok = false;
            for (int attempt = 0; attempt < 40 && !ok; ++attempt) {
                sp.kind = rng.range_int(0, 2);
                sp.half = rng.range_int(min_half, max_half);
                sp.cx = rng.range_int(sp.half, width - 1 - sp.half);
                sp.cy = rng.range_int(sp.half, height - 1 - sp.half);
                ok = true;
                for (const auto& other : placed)
                    if (overlaps(sp, other)) {
                        ok = false;
                        break;
                    }
            }
            if (ok) placed.push_back(sp);
        }

        float bg[3], fg[3];
        class_color(0, classes, bg);
        for (int h = 0; h < height; ++h) {
            for (int w = 0; w < width; ++w) {
                uint8_t cls = 0;
                const float* color = bg;
                for (const auto& sp : placed) {
                    if (inside_shape(sp, h, w)) {
                        cls = sp.cls;
                        class_color(cls, classes, fg);
                        color = fg;
                        break;
                    }
                }
                s.label.at(h, w) = cls;
                for (int c = 0; c < 3; ++c) {
                    const float noise = static_cast<float>(rng.uniform(-0.05, 0.05));
                    s.image.at(h, w, c) = clamp01(color[c] + noise);
                }
            }
        }
    }
    return ds;
}

Dataset generate_color_coded_dataset(uint64_t seed, int samples, int height, int width, int classes) {
    validate_dims(samples, height, width, classes);
    Dataset ds;
    ds.height = height;
    ds.width = width;
    ds.classes = classes;
    ds.seed = seed;
    ds.samples.resize(samples);
    for (int i = 0; i < samples; ++i) {
        Rng rng(derive_seed(seed, seed_purpose::kDatasetSample, static_cast<uint64_t>(i)));
        Sample& s = ds.samples[i];
        s.image.height = height;
        s.image.width = width;
        s.image.rgb.assign(static_cast<size_t>(height) * width * 3, 0.0f);
        s.label.height = height;
        s.label.width = width;
        s.label.classes.assign(static_cast<size_t>(height) * width, 0);
        // Blocky regions so label maps have some structure.
        const int block = std::max(2, std::min(height, width) / 4);
        for (int h = 0; h < height; h += block) {
            for (int w = 0; w < width; w += block) {
                const uint8_t cls = static_cast<uint8_t>(rng.range_int(0, classes - 1));
                for (int hh = h; hh < std::min(height, h + block); ++hh)
                    for (int ww = w; ww < std::min(width, w + block); ++ww) s.label.at(hh, ww) = cls;
            }
        }
        for (int h = 0; h < height; ++h) {
            for (int w = 0; w < width; ++w) {
                const int cls = s.label.at(h, w);
                for (int c = 0; c < 3; ++c) {
                    // Class 0 is dark; classes 1..3 light up one channel each;
                    // higher classes combine channels by bit pattern.
                    const bool on = cls > 0 && ((cls - 1) % 3 == c || (cls > 3 && ((cls >> c) & 1)));
                    const float base = on ? 0.8f : 0.1f;
                    s.image.at(h, w, c) = clamp01(base + static_cast<float>(rng.uniform(-0.05, 0.05)));
                }
            }
        }
    }
    return ds;
}

SplitIndices split_dataset(const Dataset& dataset, double train_fraction, double val_fraction,
                           double holdout_fraction_of_val, uint64_t seed) {
    if (dataset.empty()) throw ContractViolation("split: empty dataset");
    if (std::abs(train_fraction + val_fraction - 1.0) > 1e-9)
        throw ContractViolation("split: train and val fractions must sum to 1");
    if (train_fraction < 0 || val_fraction < 0)
        throw ContractViolation("split: fractions must be nonnegative");
    if (holdout_fraction_of_val <= 0 || holdout_fraction_of_val >= 1)
        throw ContractViolation("split: holdout fraction must be in (0,1)");

    const size_t n = dataset.size();
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(derive_seed(seed, seed_purpose::kSplit));
    for (size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);

    const size_t val_total = static_cast<size_t>(std::floor(val_fraction * static_cast<double>(n)));
    const size_t holdout_n =
        static_cast<size_t>(std::floor(holdout_fraction_of_val * static_cast<double>(val_total)));
    const size_t train_n = n - val_total;  // remainder goes to train

    SplitIndices out;
    out.train.assign(idx.begin(), idx.begin() + train_n);
    out.val.assign(idx.begin() + train_n, idx.end() - holdout_n);
    out.holdout.assign(idx.end() - holdout_n, idx.end());
    return out;
}

Dataset subset(const Dataset& dataset, const std::vector<size_t>& indices) {
    Dataset out;
    out.height = dataset.height;
    out.width = dataset.width;
    out.classes = dataset.classes;
    out.seed = dataset.seed;
    out.samples.reserve(indices.size());
    for (size_t i : indices) {
        if (i >= dataset.size()) throw ContractViolation("subset: index out of range");
        out.samples.push_back(dataset.samples[i]);
    }
    return out;
}

Sample flip_horizontal(const Sample& sample) {
    if (sample.image.height != sample.label.height || sample.image.width != sample.label.width)
        throw ContractViolation("flip: image/label dimension mismatch");
    Sample out = sample;
    const int H = sample.image.height, W = sample.image.width;
    for (int h = 0; h < H; ++h) {
        for (int w = 0; w < W; ++w) {
            out.label.at(h, w) = sample.label.at(h, W - 1 - w);
            for (int c = 0; c < 3; ++c) out.image.at(h, w, c) = sample.image.at(h, W - 1 - w, c);
        }
    }
    return out;
}

Sample random_flip(const Sample& sample, uint64_t seed) {
    Rng rng(derive_seed(seed, seed_purpose::kFlip));
    if (rng.uniform01() < 0.5) return flip_horizontal(sample);
    return sample;
}

void save_dataset(const Dataset& dataset, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw IoError("cannot open '" + tmp + "' for writing");
        const char magic[4] = {'L', 'D', 'S', 'D'};
        f.write(magic, 4);
        const uint32_t version = 1;
        const uint32_t h = static_cast<uint32_t>(dataset.height);
        const uint32_t w = static_cast<uint32_t>(dataset.width);
        const uint32_t k = static_cast<uint32_t>(dataset.classes);
        const uint32_t m = static_cast<uint32_t>(dataset.size());
        for (uint32_t v : {version, h, w, k, m}) f.write(reinterpret_cast<const char*>(&v), 4);
        std::vector<uint8_t> row;
        for (const Sample& s : dataset.samples) {
            row.resize(s.image.rgb.size());
            for (size_t i = 0; i < s.image.rgb.size(); ++i)
                row[i] = static_cast<uint8_t>(std::lround(clamp01(s.image.rgb[i]) * 255.0f));
            f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
            f.write(reinterpret_cast<const char*>(s.label.classes.data()),
                    static_cast<std::streamsize>(s.label.classes.size()));
        }
        if (!f) throw IoError("short write to '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw IoError("cannot rename '" + tmp + "' to '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "LDSD", 4) != 0) throw IoError("'" + path + "' is not a dataset file");
    uint32_t version = 0, h = 0, w = 0, k = 0, m = 0;
    for (uint32_t* v : {&version, &h, &w, &k, &m}) f.read(reinterpret_cast<char*>(v), 4);
    if (!f || version != 1) throw IoError("unsupported dataset version in '" + path + "'");
    Dataset ds;
    ds.height = static_cast<int>(h);
    ds.width = static_cast<int>(w);
    ds.classes = static_cast<int>(k);
    ds.samples.resize(m);
    std::vector<uint8_t> row(static_cast<size_t>(h) * w * 3);
    for (uint32_t i = 0; i < m; ++i) {
        Sample& s = ds.samples[i];
        s.image.height = ds.height;
        s.image.width = ds.width;
        s.image.rgb.resize(row.size());
        f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        for (size_t j = 0; j < row.size(); ++j) s.image.rgb[j] = static_cast<float>(row[j]) / 255.0f;
        s.label.height = ds.height;
        s.label.width = ds.width;
        s.label.classes.resize(static_cast<size_t>(h) * w);
        f.read(reinterpret_cast<char*>(s.label.classes.data()),
               static_cast<std::streamsize>(s.label.classes.size()));
    }
    if (!f) throw IoError("truncated dataset file '" + path + "'");
    return ds;
}

}  // namespace loadseg
