#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "infomatch/common.hpp"
#include "infomatch/model.hpp"
#include "infomatch/threshold.hpp"

namespace infomatch {

// Training snapshot: everything needed to continue a run bit-exactly. All
// randomness derives from (seed, step), so the rng section is just the seed.
struct TrainState {
    ModelParams params;
    ModelParams ema_shadow;
    ModelParams momentum;  // SGD velocity, block-aligned with params
    ThresholdState threshold;
    std::int64_t step = 0;
    std::int64_t total_steps = 0;
    std::uint64_t seed = 0;
};

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace ckpt {

constexpr char kMagic[8] = {'I', 'N', 'F', 'O', 'M', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

// Little-endian scalar I/O. The build targets little-endian hosts; float
// blocks are raw 32-bit, per the checkpoint contract.
class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary), path_(path) {
        if (!out_) throw IoError(cat("checkpoint: cannot open ", path, " for writing"));
    }

    void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void u64(std::uint64_t v) { raw(&v, sizeof v); }
    void i64(std::int64_t v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    void f32_block(const std::vector<float>& v) {
        u64(v.size());
        raw(v.data(), v.size() * sizeof(float));
    }
    void section(const std::string& name) { str(name); }

    void finish() {
        out_.flush();
        if (!out_) throw IoError(cat("checkpoint: write failed for ", path_));
    }

private:
    void raw(const void* p, size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }

    std::ofstream out_;
    std::string path_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw IoError(cat("checkpoint: cannot open ", path));
    }

    void set_section(const std::string& name) { section_ = name; }

    std::uint8_t u8() {
        std::uint8_t v;
        raw(&v, sizeof v);
        return v;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        raw(&v, sizeof v);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        raw(&v, sizeof v);
        return v;
    }
    std::int64_t i64() {
        std::int64_t v;
        raw(&v, sizeof v);
        return v;
    }
    double f64() {
        double v;
        raw(&v, sizeof v);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        if (n > (1u << 24)) fail("string length is implausible");
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }
    std::vector<float> f32_block() {
        const std::uint64_t n = u64();
        if (n > (1ull << 32)) fail("block length is implausible");
        std::vector<float> v(n);
        raw(v.data(), n * sizeof(float));
        return v;
    }
    void expect_section(const std::string& name) {
        set_section(name);
        const std::string got = str();
        if (got != name) fail(cat("expected section tag '", name, "', found '", got, "'"));
    }

    [[noreturn]] void fail(const std::string& what) {
        throw CheckpointError(cat("checkpoint ", path_, ": section '", section_, "': ", what));
    }

private:
    void raw(void* p, size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<size_t>(in_.gcount()) != n) fail("truncated file");
    }

    std::ifstream in_;
    std::string path_;
    std::string section_ = "header";
};

inline void write_blocks(Writer& w, const ModelParams& p) {
    w.u32(static_cast<std::uint32_t>(p.blocks.size()));
    for (const auto& b : p.blocks) {
        w.str(b.name);
        w.u32(static_cast<std::uint32_t>(b.shape.size()));
        for (int d : b.shape) w.u32(static_cast<std::uint32_t>(d));
        w.u8(b.trainable ? 1 : 0);
        w.u8(b.decay ? 1 : 0);
        w.f32_block(b.v);
    }
}

inline ModelParams read_blocks(Reader& r, const ArchSpec& arch) {
    ModelParams p;
    p.arch = arch;
    const std::uint32_t count = r.u32();
    if (count > 4096) r.fail("block count is implausible");
    for (std::uint32_t i = 0; i < count; ++i) {
        ParamBlockT<float> b;
        b.name = r.str();
        const std::uint32_t nd = r.u32();
        if (nd > 8) r.fail(cat("block '", b.name, "': too many dimensions"));
        std::int64_t expect = 1;
        for (std::uint32_t d = 0; d < nd; ++d) {
            b.shape.push_back(static_cast<int>(r.u32()));
            expect *= b.shape.back();
        }
        b.trainable = r.u8() != 0;
        b.decay = r.u8() != 0;
        b.v = r.f32_block();
        if (static_cast<std::int64_t>(b.v.size()) != expect)
            r.fail(cat("block '", b.name, "': data size does not match shape"));
        p.blocks.push_back(std::move(b));
    }
    return p;
}

}  // namespace ckpt

inline void save_checkpoint(const TrainState& state, const std::string& path) {
    ckpt::Writer w(path);
    w.u32(0);  // placeholder keeps magic 8-aligned after it
    // magic written as raw section for a recognizable file head
    for (char c : ckpt::kMagic) w.u8(static_cast<std::uint8_t>(c));
    w.u32(ckpt::kVersion);
    w.section("arch");
    w.str(state.params.arch.to_json().dump());
    w.section("meta");
    w.i64(state.step);
    w.i64(state.total_steps);
    w.u64(state.seed);
    w.section("params");
    ckpt::write_blocks(w, state.params);
    w.section("ema");
    ckpt::write_blocks(w, state.ema_shadow);
    w.section("momentum");
    ckpt::write_blocks(w, state.momentum);
    w.section("threshold");
    w.u8(state.threshold.mode == ThresholdMode::kFixed ? 0 : 1);
    w.f64(state.threshold.fixed_value);
    w.f64(state.threshold.momentum);
    w.f64(state.threshold.tau);
    w.u32(static_cast<std::uint32_t>(state.threshold.ptilde.size()));
    for (double v : state.threshold.ptilde) w.f64(v);
    w.section("rng");
    w.u64(state.seed);
    w.finish();
}

inline TrainState load_checkpoint(const std::string& path) {
    ckpt::Reader r(path);
    if (r.u32() != 0) r.fail("bad preamble");
    for (char c : ckpt::kMagic)
        if (r.u8() != static_cast<std::uint8_t>(c)) r.fail("bad magic (not a checkpoint file)");
    const std::uint32_t version = r.u32();
    if (version != ckpt::kVersion)
        r.fail(cat("format version ", version, " is not supported (expected ", ckpt::kVersion, ")"));

    r.expect_section("arch");
    ArchSpec arch;
    try {
        arch = ArchSpec::from_json(nlohmann::json::parse(r.str()));
    } catch (const nlohmann::json::exception& e) {
        r.fail(cat("malformed architecture descriptor: ", e.what()));
    }

    TrainState state;
    r.expect_section("meta");
    state.step = r.i64();
    state.total_steps = r.i64();
    state.seed = r.u64();
    r.expect_section("params");
    state.params = ckpt::read_blocks(r, arch);
    r.expect_section("ema");
    state.ema_shadow = ckpt::read_blocks(r, arch);
    r.expect_section("momentum");
    state.momentum = ckpt::read_blocks(r, arch);
    r.expect_section("threshold");
    state.threshold.mode = r.u8() == 0 ? ThresholdMode::kFixed : ThresholdMode::kAdaptive;
    state.threshold.fixed_value = r.f64();
    state.threshold.momentum = r.f64();
    state.threshold.tau = r.f64();
    const std::uint32_t k = r.u32();
    if (k > 100000) r.fail("class count is implausible");
    state.threshold.ptilde.resize(k);
    for (auto& v : state.threshold.ptilde) v = r.f64();
    r.expect_section("rng");
    if (r.u64() != state.seed) r.fail("rng seed disagrees with meta section");
    return state;
}

}  // namespace infomatch
