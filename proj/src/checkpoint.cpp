#include "hsitl/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

#include "hsitl/errors.hpp"

namespace hsitl {
namespace {

constexpr char kMagic[4] = {'H', 'S', 'I', 'M'};
constexpr uint8_t kVersion = 1;

class Writer {
public:
    explicit Writer(std::vector<uint8_t>& out) : out_(out) {}
    void u8(uint8_t v) { out_.push_back(v); }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(uint8_t(v >> (8 * i)));
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(uint8_t(v >> (8 * i)));
    }
    void f32(float v) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    void f64(double v) {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void bytes(const void* p, size_t n) {
        const uint8_t* b = static_cast<const uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void str(const std::string& s) {
        u32(uint32_t(s.size()));
        bytes(s.data(), s.size());
    }
    void tensor(const std::string& name, const Tensor<float>& t) {
        str(name);
        u8(uint8_t(t.shape.size()));
        for (uint32_t d : t.shape) u32(d);
        for (float v : t.v) f32(v);
    }

private:
    std::vector<uint8_t>& out_;
};

class Reader {
public:
    Reader(const uint8_t* p, size_t n) : p_(p), end_(p + n) {}
    uint8_t u8() {
        need(1);
        return *p_++;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(p_[i]) << (8 * i);
        p_ += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(p_[i]) << (8 * i);
        p_ += 8;
        return v;
    }
    float f32() {
        uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double f64() {
        uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str() {
        uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(p_), n);
        p_ += n;
        return s;
    }
    std::pair<std::string, Tensor<float>> tensor() {
        std::string name = str();
        Tensor<float> t;
        uint8_t rank = u8();
        size_t count = 1;
        for (uint8_t i = 0; i < rank; ++i) {
            t.shape.push_back(u32());
            count *= t.shape.back();
        }
        t.v.resize(count);
        for (size_t i = 0; i < count; ++i) t.v[i] = f32();
        return {std::move(name), std::move(t)};
    }
    bool done() const { return p_ == end_; }

private:
    void need(size_t n) {
        if (size_t(end_ - p_) < n) throw DataError("model: truncated checkpoint");
    }
    const uint8_t* p_;
    const uint8_t* end_;
};

void append_trainable(Writer& w, ModelParams<float>& params) {
    auto refs = trainable_tensors(params);
    w.u32(uint32_t(refs.size()));
    for (auto& ref : refs) w.tensor(ref.name, *ref.tensor);
}

}  // namespace

void save_model(const ModelParams<float>& params, const std::string& path,
                const AdamState<float>* optimizer) {
    std::vector<uint8_t> buf;
    Writer w(buf);
    w.bytes(kMagic, 4);
    w.u8(kVersion);

    nlohmann::json meta;
    meta["arch"] = nlohmann::json::parse(arch_to_json(params.arch));
    meta["input_bands"] = params.input_bands;
    w.str(meta.dump());

    auto& mutable_params = const_cast<ModelParams<float>&>(params);
    append_trainable(w, mutable_params);

    bool has_running = params.arch.use_batch_norm && !params.blocks.empty();
    w.u8(has_running ? 1 : 0);
    if (has_running) {
        w.u32(uint32_t(params.blocks.size() * 2));
        for (size_t i = 0; i < params.blocks.size(); ++i) {
            std::string prefix = "block" + std::to_string(i) + ".bn.";
            w.tensor(prefix + "run_mean", params.blocks[i].run_mean);
            w.tensor(prefix + "run_var", params.blocks[i].run_var);
        }
    }

    w.u8(params.input_norm ? 1 : 0);
    if (params.input_norm) {
        const Normalizer& n = *params.input_norm;
        w.u8(n.mode == NormMode::ZScore ? 0 : 1);
        w.u32(uint32_t(n.shift.size()));
        for (double v : n.shift) w.f64(v);
        for (double v : n.scale) w.f64(v);
    }

    w.u8(optimizer ? 1 : 0);
    if (optimizer) {
        w.u64(optimizer->t);
        w.u32(uint32_t(optimizer->m.size()));
        auto refs = trainable_tensors(mutable_params);
        if (refs.size() != optimizer->m.size())
            throw DataError("model: optimizer state does not match parameters");
        for (size_t i = 0; i < refs.size(); ++i) {
            w.tensor("m:" + refs[i].name, optimizer->m[i]);
            w.tensor("v:" + refs[i].name, optimizer->v[i]);
        }
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("model: cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
    if (!out) throw DataError("model: write failed for " + path);
}

LoadedModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("model: cannot open " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
    if (buf.size() < 5 || std::memcmp(buf.data(), kMagic, 4) != 0)
        throw DataError("model: bad magic in " + path);
    if (buf[4] != kVersion)
        throw DataError("model: unsupported version " + std::to_string(buf[4]));
    Reader r(buf.data() + 5, buf.size() - 5);

    std::string meta_text = r.str();
    ArchitectureConfig arch;
    uint32_t input_bands = 0;
    try {
        auto meta = nlohmann::json::parse(meta_text);
        arch = arch_from_json(meta.at("arch").dump());
        input_bands = meta.at("input_bands").get<uint32_t>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model: bad metadata block: ") + e.what());
    }

    LoadedModel loaded;
    loaded.params = init_params<float>(arch, input_bands, 0);

    uint32_t tensor_count = r.u32();
    std::map<std::string, Tensor<float>> by_name;
    for (uint32_t i = 0; i < tensor_count; ++i) {
        auto [name, tensor] = r.tensor();
        by_name.emplace(std::move(name), std::move(tensor));
    }
    auto refs = trainable_tensors(loaded.params);
    for (auto& ref : refs) {
        auto it = by_name.find(ref.name);
        if (it == by_name.end()) throw DataError("model: missing tensor " + ref.name);
        if (it->second.shape != ref.tensor->shape)
            throw DataError("model: shape mismatch for tensor " + ref.name);
        *ref.tensor = std::move(it->second);
    }

    if (r.u8()) {  // running stats
        uint32_t count = r.u32();
        for (uint32_t i = 0; i < count; ++i) {
            auto [name, tensor] = r.tensor();
            bool assigned = false;
            for (size_t b = 0; b < loaded.params.blocks.size(); ++b) {
                std::string prefix = "block" + std::to_string(b) + ".bn.";
                if (name == prefix + "run_mean") {
                    loaded.params.blocks[b].run_mean = std::move(tensor);
                    assigned = true;
                } else if (name == prefix + "run_var") {
                    loaded.params.blocks[b].run_var = std::move(tensor);
                    assigned = true;
                }
                if (assigned) break;
            }
            if (!assigned) throw DataError("model: unexpected running-stat tensor " + name);
        }
    }

    if (r.u8()) {  // normalizer
        Normalizer n;
        n.mode = r.u8() == 0 ? NormMode::ZScore : NormMode::MinMax;
        uint32_t bands = r.u32();
        n.shift.resize(bands);
        n.scale.resize(bands);
        for (uint32_t i = 0; i < bands; ++i) n.shift[i] = r.f64();
        for (uint32_t i = 0; i < bands; ++i) n.scale[i] = r.f64();
        loaded.params.input_norm = std::move(n);
    }

    if (r.u8()) {  // optimizer state
        AdamState<float> state;
        state.t = r.u64();
        uint32_t count = r.u32();
        if (count != refs.size()) throw DataError("model: optimizer state count mismatch");
        state.m.resize(count);
        state.v.resize(count);
        for (uint32_t i = 0; i < count; ++i) {
            auto [mname, mt] = r.tensor();
            auto [vname, vt] = r.tensor();
            if (mname != "m:" + refs[i].name || vname != "v:" + refs[i].name)
                throw DataError("model: optimizer tensors out of order");
            state.m[i] = std::move(mt);
            state.v[i] = std::move(vt);
        }
        loaded.optimizer = std::move(state);
    }

    if (!r.done()) throw DataError("model: trailing bytes in " + path);
    return loaded;
}

std::vector<uint8_t> extractor_bytes(const ModelParams<float>& params) {
    std::vector<uint8_t> buf;
    Writer w(buf);
    for (size_t i = 0; i < params.blocks.size(); ++i) {
        const auto& b = params.blocks[i];
        std::string prefix = "block" + std::to_string(i) + ".";
        w.tensor(prefix + "conv.w", b.w);
        w.tensor(prefix + "conv.b", b.b);
        if (params.arch.use_batch_norm) {
            w.tensor(prefix + "bn.gamma", b.gamma);
            w.tensor(prefix + "bn.beta", b.beta);
            w.tensor(prefix + "bn.run_mean", b.run_mean);
            w.tensor(prefix + "bn.run_var", b.run_var);
        }
    }
    return buf;
}

std::vector<uint8_t> params_bytes(const ModelParams<float>& params) {
    std::vector<uint8_t> buf = extractor_bytes(params);
    Writer w(buf);
    for (size_t j = 0; j < params.head.size(); ++j) {
        std::string prefix = "head" + std::to_string(j) + ".";
        w.tensor(prefix + "w", params.head[j].w);
        w.tensor(prefix + "b", params.head[j].b);
    }
    return buf;
}

}  // namespace hsitl
