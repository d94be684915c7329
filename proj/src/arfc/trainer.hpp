#pragma once

#include "arc.hpp"
#include "featureio.hpp"
#include "mos.hpp"
#include "schedule.hpp"

#include <json.hpp>

#include <chrono>
#include <optional>
#include <ostream>

namespace arfc {

using nlohmann::json;

// ─── Training configuration ───────────────────────────────────

struct TrainConfig {
    ArcConfig arc;
    MosConfig mos;
    int M = 5;               // aux decoders per cluster
    double lambda = 0.5;
    int batch = 32;
    int arc_steps = 2000;
    int mos_steps = 1000;
    int ratios_per_step = 3;
    ScheduleMode schedule = ScheduleMode::progressive;
    uint64_t seed = 1;
    double lr = 0.001;
    double lr_min = -1.0;    // >= 0 enables cosine decay to this floor
    double grad_clip = 1.0;
    // The grid point j=T (r=0) has measure zero under continuous
    // ratio sampling, so its decoder cluster would starve; every
    // step's ratio set therefore includes r=0 alongside the
    // sampled ratios.
    bool always_include_r0 = true;

    void validate() const {
        arc.validate();
        mos.validate();
        check(lambda >= 0.0, "train config: lambda must be >= 0");
        check(batch >= 2 && batch % 2 == 0, "train config: batch must be even and >= 2");
        check(M >= 1, "train config: M must be >= 1");
        check(ratios_per_step >= 1 && ratios_per_step <= arc.T,
              "train config: ratios_per_step must be in [1, T]");
        check(mos.D == arc.D, "train config: mos width must equal feature dim");
    }
};

inline void to_json(json& j, const TrainConfig& c) {
    j = json{{"D", c.arc.D},
             {"T", c.arc.T},
             {"W", c.arc.W},
             {"layers", c.arc.layers},
             {"heads", c.arc.heads},
             {"ffn_mult", c.arc.ffn_mult},
             {"K", c.mos.K},
             {"L", c.mos.L},
             {"mos_heads", c.mos.heads},
             {"M", c.M},
             {"lambda", c.lambda},
             {"batch", c.batch},
             {"arc_steps", c.arc_steps},
             {"mos_steps", c.mos_steps},
             {"ratios_per_step", c.ratios_per_step},
             {"schedule", to_string(c.schedule)},
             {"seed", c.seed},
             {"lr", c.lr},
             {"lr_min", c.lr_min},
             {"grad_clip", c.grad_clip},
             {"always_include_r0", c.always_include_r0}};
}

inline void from_json(const json& j, TrainConfig& c) {
    c.arc.D = j.at("D");
    c.arc.T = j.at("T");
    c.arc.W = j.at("W");
    c.arc.layers = j.at("layers");
    c.arc.heads = j.at("heads");
    c.arc.ffn_mult = j.at("ffn_mult");
    c.mos.D = c.arc.D;
    c.mos.K = j.at("K");
    c.mos.L = j.at("L");
    c.mos.heads = j.at("mos_heads");
    c.M = j.at("M");
    c.lambda = j.at("lambda");
    c.batch = j.at("batch");
    c.arc_steps = j.at("arc_steps");
    c.mos_steps = j.at("mos_steps");
    c.ratios_per_step = j.at("ratios_per_step");
    c.schedule = schedule_mode_from(j.at("schedule").get<std::string>());
    c.seed = j.at("seed");
    c.lr = j.at("lr");
    c.lr_min = j.at("lr_min");
    c.grad_clip = j.at("grad_clip");
    c.always_include_r0 = j.at("always_include_r0");
}

// ─── Checkpoint ───────────────────────────────────────────────
// magic "ARFC", u32 version, length-prefixed canonical JSON
// ({"config": ..., "state": ...}), then length-prefixed named
// parameter blobs (UTF-8 name, u32 rank + extents, f32 LE data).
// Optimizer moments ride along as blobs under opt1./opt2.

constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    TrainConfig config;
    LayerParams stage1;     // arc.* + arcpool.*
    LayerParams stage2;     // mos.* + mospool.* (empty before stage 2)
    AdamW opt1, opt2;
    int arc_step = 0;
    int mos_step = 0;
    Rng rng1{0}, rng2{0};   // training-stream state at checkpoint time

    bool has_mos() const { return !stage2.by_name.empty(); }
};

namespace detail_ckpt {

using detail_io::get;
using detail_io::put;

inline void put_blob(std::string& buf, const std::string& name,
                     const std::vector<int>& shape, const std::vector<double>& data) {
    put<uint32_t>(buf, (uint32_t)name.size());
    buf.append(name);
    put<uint32_t>(buf, (uint32_t)shape.size());
    for (int e : shape) put<uint32_t>(buf, (uint32_t)e);
    for (double v : data) put<float>(buf, (float)v);
}

struct Blob {
    std::string name;
    std::vector<int> shape;
    std::vector<double> data;
};

inline Blob get_blob(const std::string& buf, size_t& off) {
    Blob b;
    uint32_t nlen = get<uint32_t>(buf, off);
    if (off + nlen > buf.size()) throw IoError("truncated checkpoint blob name");
    b.name = buf.substr(off, nlen);
    off += nlen;
    uint32_t rank = get<uint32_t>(buf, off);
    b.shape.resize(rank);
    size_t n = 1;
    for (auto& e : b.shape) {
        e = (int)get<uint32_t>(buf, off);
        n *= (size_t)e;
    }
    b.data.resize(n);
    for (auto& v : b.data) v = (double)get<float>(buf, off);
    return b;
}

inline void put_opt(std::string& buf, const std::string& ns, const AdamW& opt) {
    for (const auto& [name, m] : opt.m)
        put_blob(buf, ns + ".m." + name, {(int)m.size()}, m);
    for (const auto& [name, v] : opt.v)
        put_blob(buf, ns + ".v." + name, {(int)v.size()}, v);
    for (const auto& [name, t] : opt.steps)
        put_blob(buf, ns + ".t." + name, {1}, {(double)t});
}

} // namespace detail_ckpt

inline std::string serialize_checkpoint(const Checkpoint& ck) {
    using namespace detail_ckpt;
    json meta;
    meta["config"] = ck.config;
    meta["state"] = {{"arc_step", ck.arc_step},
                     {"mos_step", ck.mos_step},
                     {"rng1", {ck.rng1.seed, ck.rng1.ctr_lo, ck.rng1.ctr_hi}},
                     {"rng2", {ck.rng2.seed, ck.rng2.ctr_lo, ck.rng2.ctr_hi}}};
    std::string cfg = meta.dump();

    std::string buf;
    buf.append("ARFC", 4);
    put<uint32_t>(buf, kCheckpointVersion);
    put<uint32_t>(buf, (uint32_t)cfg.size());
    buf.append(cfg);
    for (const auto& [name, t] : ck.stage1.by_name) put_blob(buf, name, t->shape, t->data);
    for (const auto& [name, t] : ck.stage2.by_name) put_blob(buf, name, t->shape, t->data);
    put_opt(buf, "opt1", ck.opt1);
    put_opt(buf, "opt2", ck.opt2);
    return buf;
}

inline Checkpoint deserialize_checkpoint(const std::string& buf) {
    using namespace detail_ckpt;
    if (buf.size() < 4 || buf.compare(0, 4, "ARFC") != 0)
        throw IoError("bad magic: not an ARFC checkpoint file");
    size_t off = 4;
    uint32_t version = get<uint32_t>(buf, off);
    if (version != kCheckpointVersion)
        throw IoError("unsupported checkpoint version: " + std::to_string(version));
    uint32_t clen = get<uint32_t>(buf, off);
    if (off + clen > buf.size()) throw IoError("truncated checkpoint config");
    json meta = json::parse(buf.substr(off, clen));
    off += clen;

    Checkpoint ck;
    ck.config = meta.at("config").get<TrainConfig>();
    const auto& st = meta.at("state");
    ck.arc_step = st.at("arc_step");
    ck.mos_step = st.at("mos_step");
    ck.rng1.seed = st.at("rng1")[0];
    ck.rng1.ctr_lo = st.at("rng1")[1];
    ck.rng1.ctr_hi = st.at("rng1")[2];
    ck.rng2.seed = st.at("rng2")[0];
    ck.rng2.ctr_lo = st.at("rng2")[1];
    ck.rng2.ctr_hi = st.at("rng2")[2];

    auto place_opt = [&](AdamW& opt, const std::string& kind, const std::string& rest,
                         detail_ckpt::Blob& b) {
        if (kind == "m")
            opt.m[rest] = std::move(b.data);
        else if (kind == "v")
            opt.v[rest] = std::move(b.data);
        else if (kind == "t")
            opt.steps[rest] = (int64_t)b.data[0];
        else
            throw IoError("unknown optimizer blob kind: " + kind);
    };
    while (off < buf.size()) {
        auto b = get_blob(buf, off);
        if (b.name.rfind("opt1.", 0) == 0 || b.name.rfind("opt2.", 0) == 0) {
            AdamW& opt = b.name[3] == '1' ? ck.opt1 : ck.opt2;
            std::string kind = b.name.substr(5, 1);
            place_opt(opt, kind, b.name.substr(7), b);
        } else if (b.name.rfind("mos", 0) == 0) {
            ck.stage2.add(b.name, make_tensor(b.shape, std::move(b.data)));
        } else {
            ck.stage1.add(b.name, make_tensor(b.shape, std::move(b.data)));
        }
    }
    return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    detail_io::write_file(path, serialize_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::string& path) {
    return deserialize_checkpoint(detail_io::read_file(path));
}

// ─── Training loops (Algorithm: two stages) ───────────────────

struct TrainLogRecord {
    std::string stage;
    int step = 0;
    std::vector<double> ratios;
    LossParts loss;
    double wall_ms = 0.0;
};

inline void write_log_line(std::ostream& os, const TrainLogRecord& rec) {
    json j{{"stage", rec.stage},       {"step", rec.step},
           {"ratios", rec.ratios},     {"l_rec", rec.loss.l_rec},
           {"l_aux", rec.loss.l_aux},  {"l_ergc", rec.loss.l_ergc},
           {"total", rec.loss.total},  {"wall_ms", rec.wall_ms}};
    os << j.dump() << "\n";
}

inline double lr_at(const TrainConfig& cfg, int step, int total) {
    if (cfg.lr_min < 0.0 || total <= 1) return cfg.lr;
    double t = (double)step / (double)(total - 1);
    return cfg.lr_min + 0.5 * (cfg.lr - cfg.lr_min) * (1.0 + std::cos(M_PI * t));
}

inline std::vector<double> step_ratios(const TrainConfig& cfg, const BetaSchedule& sched,
                                       int step, Rng& rng) {
    std::vector<double> ratios = sample_batch_ratios(sched, step, cfg.ratios_per_step, rng);
    if (cfg.always_include_r0 &&
        std::find(ratios.begin(), ratios.end(), 0.0) == ratios.end())
        ratios.insert(ratios.begin(), 0.0);
    return ratios;
}

// Stage 1: ARC + its decoder pool under the configured schedule.
inline Checkpoint train_arc(const TrainConfig& cfg, const FeatureDataset& ds,
                            std::ostream* log = nullptr) {
    cfg.validate();
    check(ds.size() > 0 && ds.D == (uint32_t)cfg.arc.D,
          "train_arc: dataset empty or dim mismatch");
    Checkpoint ck;
    ck.config = cfg;
    ck.rng1 = Rng(cfg.seed);
    Rng init_rng(Rng::mix(cfg.seed) ^ 0x1157ULL);
    init_arc_params(ck.stage1, cfg.arc, init_rng);
    DecoderPool pool = make_pool({cfg.arc.D, cfg.arc.T, cfg.M}, "arcpool");
    pool.init(ck.stage1, init_rng);
    ck.opt1.lr = cfg.lr;

    BatchStream bs(ds, cfg.batch, Rng::mix(cfg.seed) ^ 0xBA7CULL, /*paired=*/true);
    BetaSchedule sched;
    sched.T = cfg.arc.T;
    sched.total_steps = std::max(cfg.arc_steps, 1);
    sched.mode = cfg.schedule;

    for (int step = 0; step < cfg.arc_steps; ++step) {
        auto t0 = std::chrono::steady_clock::now();
        ck.opt1.lr = lr_at(cfg, step, cfg.arc_steps);
        Tensor f = gather_features(ds, bs.next());
        auto ratios = step_ratios(cfg, sched, step, ck.rng1);
        ck.stage1.zero_grad();
        LossParts parts;
        Tensor loss = arc_forward_loss(ck.stage1, cfg.arc, pool, f, ratios, cfg.lambda,
                                       ck.rng1, /*train=*/true, &parts);
        if (!std::isfinite(parts.total)) {
            if (log) write_log_line(*log, {"arc", step, ratios, parts, 0.0});
            throw NumericalError("non-finite loss at arc step " + std::to_string(step));
        }
        backward(loss);
        clip_grad_norm(ck.stage1, cfg.grad_clip);
        ck.opt1.step(ck.stage1);
        ck.arc_step = step + 1;
        if (log) {
            double ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
            write_log_line(*log, {"arc", step, ratios, parts, ms});
        }
    }
    return ck;
}

// Stage 2: freeze ARC, train MoS + its decoder pool with uniform
// ratio sampling.
inline void train_mos(Checkpoint& ck, const FeatureDataset& ds,
                      std::ostream* log = nullptr) {
    const TrainConfig& cfg = ck.config;
    cfg.validate();
    check(ds.size() > 0 && ds.D == (uint32_t)cfg.arc.D,
          "train_mos: dataset empty or dim mismatch");
    ck.rng2 = Rng(Rng::mix(cfg.seed) ^ 0x305EULL);
    Rng init_rng(Rng::mix(cfg.seed) ^ 0x305E1157ULL);
    if (!ck.has_mos()) {
        init_mos_params(ck.stage2, cfg.mos, init_rng);
        DecoderPool pool = make_pool({cfg.arc.D, cfg.arc.T, cfg.M}, "mospool");
        pool.init(ck.stage2, init_rng);
    }
    DecoderPool pool = make_pool({cfg.arc.D, cfg.arc.T, cfg.M}, "mospool");
    ck.opt2.lr = cfg.lr;

    BatchStream bs(ds, cfg.batch, Rng::mix(cfg.seed) ^ 0xBA7C305EULL, /*paired=*/true);
    BetaSchedule sched;
    sched.T = cfg.arc.T;
    sched.total_steps = std::max(cfg.mos_steps, 1);
    sched.mode = ScheduleMode::uniform;

    for (int step = 0; step < cfg.mos_steps; ++step) {
        auto t0 = std::chrono::steady_clock::now();
        ck.opt2.lr = lr_at(cfg, step, cfg.mos_steps);
        Tensor f = gather_features(ds, bs.next());
        auto ratios = step_ratios(cfg, sched, step, ck.rng2);
        ck.stage2.zero_grad();
        ck.stage1.zero_grad(); // frozen — must stay grad-free
        LossParts parts;
        Tensor loss = mos_forward_loss(ck.stage1, cfg.arc, ck.stage2, cfg.mos, pool, f,
                                       ratios, cfg.lambda, ck.rng2, /*train=*/true,
                                       &parts);
        if (!std::isfinite(parts.total)) {
            if (log) write_log_line(*log, {"mos", step, ratios, parts, 0.0});
            throw NumericalError("non-finite loss at mos step " + std::to_string(step));
        }
        backward(loss);
        for (const auto& [name, t] : ck.stage1.by_name)
            check(t->grad.empty(), "train_mos: gradient leaked into frozen ARC: " + name);
        clip_grad_norm(ck.stage2, cfg.grad_clip);
        ck.opt2.step(ck.stage2);
        ck.mos_step = step + 1;
        if (log) {
            double ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
            write_log_line(*log, {"mos", step, ratios, parts, ms});
        }
    }
}

// ─── Inference ────────────────────────────────────────────────
// Eval-mode compression: decoders never run. With MoS the full-
// length code is generated (the refiner consumes all of f_cmp,
// and its eval-mode solutions are K identical copies), without it
// only the needed prefix tokens are generated.
inline Tensor compress(const Checkpoint& ck, const Tensor& features, double r,
                       bool use_mos) {
    check(features->dim(1) == ck.config.arc.D, "compress: feature dim mismatch");
    check(r >= 0.0 && r < 1.0, "compress: ratio must be in [0,1)");
    NoGradGuard ng;
    int T = ck.config.arc.T;
    int j = ratio_to_token_count(r, T);
    if (!use_mos) return arc_generate(ck.stage1, ck.config.arc, features, j);
    check(ck.has_mos(), "compress: checkpoint has no trained MoS stage");
    Tensor f_cmp = arc_generate(ck.stage1, ck.config.arc, features, T);
    Rng dummy(0);
    Tensor sol = make_solutions(f_cmp, ck.config.mos.K, dummy, /*train=*/false);
    return truncate_batch(mos_refine(ck.stage2, ck.config.mos, sol), r, T);
}

} // namespace arfc
