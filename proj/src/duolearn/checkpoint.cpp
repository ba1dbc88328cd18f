// SPDX-License-Identifier: Apache-2.0
#include "duolearn/checkpoint.h"

#include <cstring>
#include <fstream>

#include "duolearn/errors.h"

namespace duolearn {

namespace {

constexpr char kMagic[4] = {'D', 'U', 'O', 'L'};
constexpr uint32_t kVersion = 1;

// All multi-byte fields are little-endian on disk.
template <typename T>
void put(std::ostream& out, T v) {
    unsigned char buf[sizeof(T)];
    for (size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((static_cast<uint64_t>(v) >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

void put_f64(std::ostream& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put<uint64_t>(out, bits);
}

void put_f32(std::ostream& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put<uint32_t>(out, bits);
}

template <typename T>
T get(std::istream& in) {
    unsigned char buf[sizeof(T)];
    in.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!in) throw data_error("checkpoint: truncated file");
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return static_cast<T>(v);
}

double get_f64(std::istream& in) {
    const uint64_t bits = get<uint64_t>(in);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

float get_f32(std::istream& in) {
    const uint32_t bits = get<uint32_t>(in);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

void put_string(std::ostream& out, const std::string& s) {
    put<uint32_t>(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
    const uint32_t n = get<uint32_t>(in);
    if (n > (1u << 20)) throw data_error("checkpoint: implausible string length");
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw data_error("checkpoint: truncated file");
    return s;
}

ModelConfig get_config(std::istream& in) {
    ModelConfig c;
    c.vocab_size = get<int64_t>(in);
    c.layers = get<int64_t>(in);
    c.heads = get<int64_t>(in);
    c.width = get<int64_t>(in);
    c.ffn_width = get<int64_t>(in);
    c.max_seq = get<int64_t>(in);
    c.init_seed = get<uint64_t>(in);
    return c;
}

}  // namespace

void save_checkpoint(const CausalLM& model, const std::string& path, const CheckpointMeta& meta,
                     CheckpointDtype dtype) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write checkpoint: " + path);
    out.write(kMagic, 4);
    put<uint32_t>(out, kVersion);
    const ModelConfig& c = model.config();
    put<int64_t>(out, c.vocab_size);
    put<int64_t>(out, c.layers);
    put<int64_t>(out, c.heads);
    put<int64_t>(out, c.width);
    put<int64_t>(out, c.ffn_width);
    put<int64_t>(out, c.max_seq);
    put<uint64_t>(out, c.init_seed);
    put<int64_t>(out, meta.step);
    put_string(out, meta.method);
    put<uint64_t>(out, meta.seed);
    put<uint64_t>(out, model.params().size());
    for (const Param& p : model.params()) {
        put_string(out, p.name);
        put<uint8_t>(out, static_cast<uint8_t>(dtype));
        put<uint8_t>(out, static_cast<uint8_t>(p.value.ndim()));
        for (int i = 0; i < p.value.ndim(); ++i) put<int64_t>(out, p.value.dim(i));
        if (dtype == CheckpointDtype::f64)
            for (int64_t i = 0; i < p.value.numel(); ++i) put_f64(out, p.value[i]);
        else
            for (int64_t i = 0; i < p.value.numel(); ++i)
                put_f32(out, static_cast<float>(p.value[i]));
    }
    if (!out) throw data_error("write failed for checkpoint: " + path);
}

namespace {

void load_tensors(std::istream& in, CausalLM& model) {
    const uint64_t n_tensors = get<uint64_t>(in);
    if (n_tensors != model.params().size())
        throw data_error("checkpoint: expected " + std::to_string(model.params().size()) +
                         " tensors, file has " + std::to_string(n_tensors));
    for (uint64_t t = 0; t < n_tensors; ++t) {
        const std::string name = get_string(in);
        Param& p = model.param(name);  // throws on unknown name
        const auto dtype = static_cast<CheckpointDtype>(get<uint8_t>(in));
        if (dtype != CheckpointDtype::f64 && dtype != CheckpointDtype::f32)
            throw data_error("checkpoint: unknown dtype code for tensor '" + name + "'");
        const uint8_t rank = get<uint8_t>(in);
        std::vector<int64_t> dims(rank);
        for (auto& d : dims) d = get<int64_t>(in);
        if (dims != p.value.shape())
            throw data_error("checkpoint: shape mismatch for tensor '" + name + "'");
        if (dtype == CheckpointDtype::f64)
            for (int64_t i = 0; i < p.value.numel(); ++i) p.value[i] = get_f64(in);
        else
            for (int64_t i = 0; i < p.value.numel(); ++i)
                p.value[i] = static_cast<double>(get_f32(in));
    }
}

std::ifstream open_and_check_header(const std::string& path, ModelConfig& cfg,
                                    CheckpointMeta& meta) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw data_error("not a duolearn checkpoint (bad magic): " + path);
    const uint32_t version = get<uint32_t>(in);
    if (version != kVersion)
        throw data_error("checkpoint version " + std::to_string(version) + " unsupported (want " +
                         std::to_string(kVersion) + "): " + path);
    cfg = get_config(in);
    meta.step = get<int64_t>(in);
    meta.method = get_string(in);
    meta.seed = get<uint64_t>(in);
    return in;
}

}  // namespace

CausalLM load_checkpoint(const std::string& path, CheckpointMeta* meta_out) {
    ModelConfig cfg;
    CheckpointMeta meta;
    std::ifstream in = open_and_check_header(path, cfg, meta);
    CausalLM model(cfg);
    load_tensors(in, model);
    if (meta_out) *meta_out = meta;
    return model;
}

void load_checkpoint_into(CausalLM& model, const std::string& path, CheckpointMeta* meta_out) {
    ModelConfig cfg;
    CheckpointMeta meta;
    std::ifstream in = open_and_check_header(path, cfg, meta);
    load_tensors(in, model);  // shape checks against the expected config, by name
    if (meta_out) *meta_out = meta;
}

}  // namespace duolearn
