#include "loadseg/models.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace loadseg {

namespace {

std::atomic<uint64_t> g_snapshot_counter{0};

Tensor he_uniform(const std::vector<int>& shape, int fan_in, uint64_t seed) {
    Tensor t(shape);
    Rng rng(seed);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (float& v : t.v) v = static_cast<float>(rng.uniform(-limit, limit));
    return t;
}

void check_arch(const ArchDesc& arch) {
    if (arch.height < 8 || arch.width < 8) throw ContractViolation("model: resolution too small");
    if (arch.classes < 2) throw ContractViolation("model: class count must be >= 2");
    if (arch.hidden.empty()) throw ContractViolation("model: no hidden layers");
    for (int c : arch.hidden)
        if (c < 1) throw ContractViolation("model: bad channel count");
}

}  // namespace

const char* snap_tag_name(SnapTag tag) {
    switch (tag) {
        case SnapTag::start: return "start";
        case SnapTag::peak: return "peak";
        case SnapTag::ending: return "ending";
    }
    return "?";
}

ModelSnapshot snapshot(const ParameterSet& params, SnapTag tag) {
    if (!params.all_finite()) throw NumericFailure("snapshot: parameters contain non-finite values");
    ModelSnapshot snap;
    snap.id = ++g_snapshot_counter;
    snap.tag = tag;
    snap.params.reserve(params.size());
    for (size_t i = 0; i < params.size(); ++i)
        snap.params.emplace_back(params.at(i).name, params.at(i).value);
    return snap;
}

void restore(const ModelSnapshot& snap, ParameterSet& into) {
    if (snap.params.size() != into.size())
        throw ContractViolation("restore: parameter count mismatch");
    for (size_t i = 0; i < into.size(); ++i) {
        auto& p = into.at(i);
        const auto& [name, value] = snap.params[i];
        if (p.name != name || p.value.shape != value.shape)
            throw ContractViolation("restore: architecture mismatch at '" + p.name + "'");
    }
    for (size_t i = 0; i < into.size(); ++i) into.at(i).value = snap.params[i].second;
    into.clear_grads();
    into.reset_slots();
}

bool parameters_equal(const ParameterSet& a, const ModelSnapshot& snap) {
    if (a.size() != snap.params.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        const auto& p = a.at(i);
        const auto& [name, value] = snap.params[i];
        if (p.name != name || p.value.shape != value.shape) return false;
        if (std::memcmp(p.value.data(), value.data(), p.value.size() * sizeof(float)) != 0)
            return false;
    }
    return true;
}

bool parameters_equal(const ParameterSet& a, const ParameterSet& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (a.at(i).name != b.at(i).name || a.at(i).value.shape != b.at(i).value.shape) return false;
        if (std::memcmp(a.at(i).value.data(), b.at(i).value.data(),
                        a.at(i).value.size() * sizeof(float)) != 0)
            return false;
    }
    return true;
}

SegmentorModel SegmentorModel::create(int height, int width, int classes, std::vector<int> hidden,
                                      uint64_t seed) {
    SegmentorModel m;
    m.arch = {ModelKind::segmentor, height, width, classes, std::move(hidden)};
    check_arch(m.arch);
    int in_ch = 3;
    uint64_t pi = 0;
    for (size_t i = 0; i < m.arch.hidden.size(); ++i) {
        const int out_ch = m.arch.hidden[i];
        const std::string base = "conv" + std::to_string(i);
        m.params.add(base + ".w", he_uniform({3, 3, in_ch, out_ch}, 9 * in_ch,
                                             derive_seed(seed, seed_purpose::kSegmentorInit, pi++)));
        m.params.add(base + ".b", Tensor({out_ch}));
        ++pi;
        in_ch = out_ch;
    }
    m.params.add("head.w", he_uniform({1, 1, in_ch, classes}, in_ch,
                                      derive_seed(seed, seed_purpose::kSegmentorInit, pi++)));
    m.params.add("head.b", Tensor({classes}));
    return m;
}

DiscriminatorModel DiscriminatorModel::create(int height, int width, int classes,
                                              std::vector<int> hidden, uint64_t seed) {
    DiscriminatorModel m;
    m.arch = {ModelKind::discriminator, height, width, classes, std::move(hidden)};
    check_arch(m.arch);
    int in_ch = 3 * classes;
    int res_h = height, res_w = width;
    uint64_t pi = 0;
    for (size_t i = 0; i < m.arch.hidden.size(); ++i) {
        const int out_ch = m.arch.hidden[i];
        const std::string base = "conv" + std::to_string(i);
        m.params.add(base + ".w", he_uniform({3, 3, in_ch, out_ch}, 9 * in_ch,
                                             derive_seed(seed, seed_purpose::kDiscriminatorInit, pi++)));
        m.params.add(base + ".b", Tensor({out_ch}));
        ++pi;
        in_ch = out_ch;
        res_h = kernels::conv_out_dim(res_h, 3, 2, 1);
        res_w = kernels::conv_out_dim(res_w, 3, 2, 1);
        if (res_h < 1 || res_w < 1) throw ContractViolation("discriminator: too many strided layers");
    }
    m.params.add("head.w", he_uniform({in_ch, 1}, in_ch,
                                      derive_seed(seed, seed_purpose::kDiscriminatorInit, pi++)));
    m.params.add("head.b", Tensor({1}));
    return m;
}

template <typename T>
typename TapeT<T>::NodeId build_segmentor_logits(TapeT<T>& tape, const ArchDesc& arch,
                                                 const std::vector<typename TapeT<T>::NodeId>& param_nodes,
                                                 typename TapeT<T>::NodeId image) {
    if (arch.kind != ModelKind::segmentor) throw ContractViolation("build_segmentor_logits: wrong arch");
    const auto& shape = tape.value(image).shape;
    if (shape.size() != 3 || shape[0] != arch.height || shape[1] != arch.width || shape[2] != 3)
        throw ContractViolation("segmentor: input shape " + shape_string(shape) + " does not match " +
                                shape_string({arch.height, arch.width, 3}));
    if (param_nodes.size() != 2 * arch.hidden.size() + 2)
        throw ContractViolation("segmentor: parameter node count mismatch");
    auto x = image;
    size_t pi = 0;
    for (size_t i = 0; i < arch.hidden.size(); ++i) {
        x = tape.conv2d(x, param_nodes[pi], param_nodes[pi + 1], 1, 1);
        pi += 2;
        x = tape.relu(x);
    }
    return tape.conv2d(x, param_nodes[pi], param_nodes[pi + 1], 1, 0);
}

template <typename T>
typename TapeT<T>::NodeId build_discriminator_score(TapeT<T>& tape, const ArchDesc& arch,
                                                    const std::vector<typename TapeT<T>::NodeId>& param_nodes,
                                                    typename TapeT<T>::NodeId stacked) {
    if (arch.kind != ModelKind::discriminator)
        throw ContractViolation("build_discriminator_score: wrong arch");
    const auto& shape = tape.value(stacked).shape;
    if (shape.size() != 3 || shape[2] != 3 * arch.classes)
        throw ContractViolation("discriminator: expected " + std::to_string(3 * arch.classes) +
                                " channels, got " + shape_string(shape));
    if (param_nodes.size() != 2 * arch.hidden.size() + 2)
        throw ContractViolation("discriminator: parameter node count mismatch");
    auto x = stacked;
    size_t pi = 0;
    for (size_t i = 0; i < arch.hidden.size(); ++i) {
        x = tape.conv2d(x, param_nodes[pi], param_nodes[pi + 1], 2, 1);
        pi += 2;
        x = tape.relu(x);
    }
    x = tape.spatial_mean(x);
    x = tape.dense(x, param_nodes[pi], param_nodes[pi + 1]);
    return tape.sigmoid(x);
}

template Tape::NodeId build_segmentor_logits<float>(Tape&, const ArchDesc&,
                                                    const std::vector<Tape::NodeId>&, Tape::NodeId);
template TapeT<double>::NodeId build_segmentor_logits<double>(TapeT<double>&, const ArchDesc&,
                                                              const std::vector<TapeT<double>::NodeId>&,
                                                              TapeT<double>::NodeId);
template Tape::NodeId build_discriminator_score<float>(Tape&, const ArchDesc&,
                                                       const std::vector<Tape::NodeId>&, Tape::NodeId);
template TapeT<double>::NodeId build_discriminator_score<double>(TapeT<double>&, const ArchDesc&,
                                                                 const std::vector<TapeT<double>::NodeId>&,
                                                                 TapeT<double>::NodeId);

Tensor segmentor_forward(const SegmentorModel& model, const ImageSample& image) {
    Tape tape;
    auto params = bind_parameters(tape, model.params, /*trainable=*/false);
    auto img = tape.constant(image.as_tensor());
    auto logits = build_segmentor_logits(tape, model.arch, params, img);
    return tape.value(logits);
}

float discriminator_forward(const DiscriminatorModel& model, const Tensor& stacked) {
    Tape tape;
    auto params = bind_parameters(tape, model.params, /*trainable=*/false);
    auto in = tape.constant(stacked);
    auto score = build_discriminator_score(tape, model.arch, params, in);
    return tape.value(score).v[0];
}

LabelMap predict_label_map(const Tensor& logits) {
    if (logits.shape.size() != 3) throw ContractViolation("predict: logits must be H x W x K");
    const int H = logits.shape[0], W = logits.shape[1], K = logits.shape[2];
    LabelMap map;
    map.height = H;
    map.width = W;
    map.classes.resize(static_cast<size_t>(H) * W);
    for (size_t i = 0; i < map.classes.size(); ++i) {
        const float* row = logits.data() + i * K;
        int best = 0;
        float best_v = row[0];
        if (std::isnan(best_v)) throw NumericFailure("predict: NaN logit");
        for (int c = 1; c < K; ++c) {
            if (std::isnan(row[c])) throw NumericFailure("predict: NaN logit");
            if (row[c] > best_v) {  // strict: ties keep the lowest class
                best_v = row[c];
                best = c;
            }
        }
        map.classes[i] = static_cast<uint8_t>(best);
    }
    return map;
}

Tensor class_split_stack(const ImageSample& image, const Tensor& class_weights) {
    if (class_weights.shape.size() != 3 || class_weights.shape[0] != image.height ||
        class_weights.shape[1] != image.width)
        throw ContractViolation("class_split_stack: weight plane shape mismatch");
    const int K = class_weights.shape[2];
    const size_t HW = static_cast<size_t>(image.height) * image.width;
    for (size_t i = 0; i < HW; ++i) {
        double sum = 0.0;
        for (int c = 0; c < K; ++c) {
            const float w = class_weights.v[i * K + c];
            if (w < 0.0f || w > 1.0f)
                throw ContractViolation("class_split_stack: weight outside [0,1]");
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw ContractViolation("class_split_stack: weights do not sum to 1");
    }
    Tensor out({image.height, image.width, 3 * K});
    for (size_t i = 0; i < HW; ++i)
        for (int c = 0; c < K; ++c)
            for (int r = 0; r < 3; ++r)
                out.v[(i * K + c) * 3 + r] = image.rgb[i * 3 + r] * class_weights.v[i * K + c];
    return out;
}

Tensor one_hot_weights(const LabelMap& map, int classes) {
    Tensor out({map.height, map.width, classes});
    for (size_t i = 0; i < map.classes.size(); ++i) {
        const int c = map.classes[i];
        if (c >= classes) throw ContractViolation("one_hot_weights: class out of range");
        out.v[i * classes + c] = 1.0f;
    }
    return out;
}

namespace {

void write_u32(std::ofstream& f, uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }
void write_i32(std::ofstream& f, int32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }

uint32_t read_u32(std::ifstream& f) {
    uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
int32_t read_i32(std::ifstream& f) {
    int32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

}  // namespace

void save_checkpoint(const ArchDesc& arch, const ParameterSet& params, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw IoError("cannot open '" + tmp + "' for writing");
        f.write("LOAD", 4);
        write_u32(f, 1);  // format version
        const uint8_t kind = static_cast<uint8_t>(arch.kind);
        f.write(reinterpret_cast<const char*>(&kind), 1);
        write_i32(f, arch.height);
        write_i32(f, arch.width);
        write_i32(f, arch.classes);
        write_u32(f, static_cast<uint32_t>(arch.hidden.size()));
        for (int c : arch.hidden) write_i32(f, c);
        write_u32(f, static_cast<uint32_t>(params.size()));
        for (size_t i = 0; i < params.size(); ++i) {
            const auto& p = params.at(i);
            write_u32(f, static_cast<uint32_t>(p.name.size()));
            f.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
            write_u32(f, static_cast<uint32_t>(p.value.shape.size()));
            for (int d : p.value.shape) write_i32(f, d);
            f.write(reinterpret_cast<const char*>(p.value.data()),
                    static_cast<std::streamsize>(p.value.size() * sizeof(float)));
        }
        if (!f) throw IoError("short write to '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw IoError("cannot rename '" + tmp + "' to '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint '" + path + "'");
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "LOAD", 4) != 0)
        throw IoError("'" + path + "' is not a checkpoint file");
    if (read_u32(f) != 1) throw IoError("unsupported checkpoint version in '" + path + "'");
    Checkpoint ck;
    uint8_t kind = 0;
    f.read(reinterpret_cast<char*>(&kind), 1);
    ck.arch.kind = static_cast<ModelKind>(kind);
    ck.arch.height = read_i32(f);
    ck.arch.width = read_i32(f);
    ck.arch.classes = read_i32(f);
    const uint32_t nh = read_u32(f);
    if (!f || nh > 64) throw IoError("corrupt checkpoint '" + path + "'");
    ck.arch.hidden.resize(nh);
    for (uint32_t i = 0; i < nh; ++i) ck.arch.hidden[i] = read_i32(f);
    const uint32_t np = read_u32(f);
    if (!f || np > 4096) throw IoError("corrupt checkpoint '" + path + "'");
    for (uint32_t i = 0; i < np; ++i) {
        const uint32_t len = read_u32(f);
        if (!f || len > 4096) throw IoError("corrupt checkpoint '" + path + "'");
        std::string name(len, '\0');
        f.read(name.data(), len);
        const uint32_t rank = read_u32(f);
        if (!f || rank > 8) throw IoError("corrupt checkpoint '" + path + "'");
        std::vector<int> dims(rank);
        for (uint32_t d = 0; d < rank; ++d) dims[d] = read_i32(f);
        Tensor t(dims);
        f.read(reinterpret_cast<char*>(t.data()),
               static_cast<std::streamsize>(t.size() * sizeof(float)));
        ck.params.add(std::move(name), std::move(t));
    }
    if (!f) throw IoError("truncated checkpoint '" + path + "'");
    return ck;
}

}  // namespace loadseg
