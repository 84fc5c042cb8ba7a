#pragma once

// Toy segmentor and conditional discriminator, class-split channel stacking,
// bit-exact snapshot/restore, and the checkpoint container.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "loadseg/common.hpp"
#include "loadseg/data.hpp"
#include "loadseg/optim.hpp"
#include "loadseg/tape.hpp"
#include "loadseg/tensor.hpp"

namespace loadseg {

enum class ModelKind : uint8_t { segmentor = 1, discriminator = 2 };

struct ArchDesc {
    ModelKind kind = ModelKind::segmentor;
    int height = 0;
    int width = 0;
    int classes = 0;           // K
    std::vector<int> hidden;   // per-layer channel counts

    bool operator==(const ArchDesc& o) const {
        return kind == o.kind && height == o.height && width == o.width && classes == o.classes &&
               hidden == o.hidden;
    }
};

enum class SnapTag : uint8_t { start = 1, peak = 2, ending = 3 };

const char* snap_tag_name(SnapTag tag);

// Deep immutable copy of a parameter set taken at a point in time.
struct ModelSnapshot {
    uint64_t id = 0;
    SnapTag tag = SnapTag::start;
    std::vector<std::pair<std::string, Tensor>> params;
};

ModelSnapshot snapshot(const ParameterSet& params, SnapTag tag);

// Byte-restores the snapshot payload and resets optimizer slots to zero.
void restore(const ModelSnapshot& snap, ParameterSet& into);

bool parameters_equal(const ParameterSet& a, const ModelSnapshot& snap);
bool parameters_equal(const ParameterSet& a, const ParameterSet& b);

// Generator: stack of same-resolution 3x3 convs with relu, then a 1x1 head
// to K logits.
struct SegmentorModel {
    ArchDesc arch;
    ParameterSet params;

    static SegmentorModel create(int height, int width, int classes, std::vector<int> hidden,
                                 uint64_t seed);
};

// Discriminator: strided 3x3 convs over the 3K-channel conditioning stack,
// global average pool, dense head, sigmoid.
struct DiscriminatorModel {
    ArchDesc arch;
    ParameterSet params;

    int input_channels() const { return 3 * arch.classes; }

    static DiscriminatorModel create(int height, int width, int classes, std::vector<int> hidden,
                                     uint64_t seed);
};

// Forward builders shared by the float training path and the double
// gradient-check path. `param_nodes` must follow the model's parameter order.
template <typename T>
typename TapeT<T>::NodeId build_segmentor_logits(TapeT<T>& tape, const ArchDesc& arch,
                                                 const std::vector<typename TapeT<T>::NodeId>& param_nodes,
                                                 typename TapeT<T>::NodeId image);

template <typename T>
typename TapeT<T>::NodeId build_discriminator_score(TapeT<T>& tape, const ArchDesc& arch,
                                                    const std::vector<typename TapeT<T>::NodeId>& param_nodes,
                                                    typename TapeT<T>::NodeId stacked);

// Inference-only forward pass; logits H x W x K.
Tensor segmentor_forward(const SegmentorModel& model, const ImageSample& image);

// Conditional score in (0,1) for an H x W x 3K stack.
float discriminator_forward(const DiscriminatorModel& model, const Tensor& stacked);

// Per-pixel argmax; ties break to the lowest class index.
LabelMap predict_label_map(const Tensor& logits);

// Channel group c of the result is the image masked by the class-c weight
// plane. Weights must lie in [0,1] and sum to 1 (+-1e-6) per pixel.
Tensor class_split_stack(const ImageSample& image, const Tensor& class_weights);

// One-hot weight planes for a stored label map.
Tensor one_hot_weights(const LabelMap& map, int classes);

// Checkpoint container: magic "LOAD", version, arch descriptor, then per
// parameter (name, rank, dims, raw little-endian float32). Byte-exact.
void save_checkpoint(const ArchDesc& arch, const ParameterSet& params, const std::string& path);

struct Checkpoint {
    ArchDesc arch;
    ParameterSet params;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace loadseg
