#pragma once

#include "ops.hpp"
#include "rng.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace arfc {

// ─── Feature datasets ─────────────────────────────────────────
// Synthetic paired-embedding generation plus the ARFD on-disk
// format. A record is one embedding tagged with modality
// (0 = visual-like, 1 = text-like), class label and pair id; the
// two modalities of a pair are adjacent (A at 2i, B at 2i+1).

struct FeatureRecord {
    uint8_t modality = 0;
    uint32_t label = 0;
    uint32_t pair_id = 0;
    std::vector<double> values;
};

struct FeatureDataset {
    uint32_t D = 0;
    std::vector<FeatureRecord> records;

    size_t size() const { return records.size(); }

    uint32_t num_classes() const {
        uint32_t c = 0;
        for (const auto& r : records) c = std::max(c, r.label + 1);
        return c;
    }
};

struct SynthConfig {
    int classes = 16;
    int pairs_per_class = 32;
    int D = 64;
    int latent = 64;
    double noise = 0.1;       // cross-modal noise sigma
    double spread = 1.0;      // within-class latent spread
    uint64_t seed = 1;
};

// Both modality maps share a common random linear map plus a
// smaller per-modality component, so paired views stay close in
// cosine space while remaining distinct; calibrated so raw
// cross-modal R@1 on the default config is ~100%.
inline constexpr double kModalityMix = 0.25;

inline FeatureDataset generate_synthetic(const SynthConfig& cfg) {
    check(cfg.latent >= 1 && cfg.latent <= cfg.D, "synth: latent dim must be in [1, D]");
    check(cfg.noise >= 0.0, "synth: noise must be >= 0");
    Rng rng(cfg.seed);
    int D = cfg.D, lat = cfg.latent;
    double s = 1.0 / std::sqrt((double)lat);

    std::vector<double> P((size_t)D * lat), EA((size_t)D * lat), EB((size_t)D * lat);
    for (auto& v : P) v = s * rng.normal();
    for (auto& v : EA) v = s * rng.normal();
    for (auto& v : EB) v = s * rng.normal();

    auto apply_map = [&](const std::vector<double>& E, const std::vector<double>& z,
                         std::vector<double>& out) {
        for (int i = 0; i < D; ++i) {
            double acc = 0.0;
            const double* p = P.data() + (size_t)i * lat;
            const double* e = E.data() + (size_t)i * lat;
            for (int k = 0; k < lat; ++k) acc += (p[k] + kModalityMix * e[k]) * z[k];
            out[i] = acc + cfg.noise * rng.normal();
        }
        double n = 0.0;
        for (double v : out) n += v * v;
        n = std::sqrt(n);
        // store at f32 precision so in-memory data matches a
        // saved-and-reloaded file bitwise
        for (double& v : out) v = (double)(float)(v / n);
    };

    FeatureDataset ds;
    ds.D = (uint32_t)D;
    ds.records.reserve((size_t)cfg.classes * cfg.pairs_per_class * 2);
    std::vector<double> center(lat), z(lat), fa(D), fb(D);
    uint32_t pair_id = 0;
    for (int c = 0; c < cfg.classes; ++c) {
        for (auto& v : center) v = rng.normal();
        for (int pp = 0; pp < cfg.pairs_per_class; ++pp) {
            for (int k = 0; k < lat; ++k) z[k] = center[k] + cfg.spread * rng.normal();
            apply_map(EA, z, fa);
            apply_map(EB, z, fb);
            ds.records.push_back({0, (uint32_t)c, pair_id, fa});
            ds.records.push_back({1, (uint32_t)c, pair_id, fb});
            ++pair_id;
        }
    }
    return ds;
}

// ─── ARFD file format ─────────────────────────────────────────
// magic "ARFD", u32 version, u64 N, u32 D, u8 dtype (0 = f32),
// then N records of (u8 modality, u32 label, u32 pair_id, D f32),
// everything little-endian.

constexpr uint32_t kArfdVersion = 1;

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail_io {

template <class T>
void put(std::string& buf, T v) {
    char tmp[sizeof(T)];
    std::memcpy(tmp, &v, sizeof(T));
    buf.append(tmp, sizeof(T));
}

template <class T>
T get(const std::string& buf, size_t& off) {
    if (off + sizeof(T) > buf.size()) throw IoError("truncated file");
    T v;
    std::memcpy(&v, buf.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    return std::string(std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write file: " + path);
    out.write(bytes.data(), (std::streamsize)bytes.size());
    if (!out) throw IoError("write failed: " + path);
}

} // namespace detail_io

inline std::string serialize_dataset(const FeatureDataset& ds) {
    using namespace detail_io;
    std::string buf;
    buf.append("ARFD", 4);
    put<uint32_t>(buf, kArfdVersion);
    put<uint64_t>(buf, (uint64_t)ds.records.size());
    put<uint32_t>(buf, ds.D);
    put<uint8_t>(buf, 0); // dtype f32
    for (const auto& r : ds.records) {
        check(r.values.size() == ds.D, "dataset record dim mismatch");
        put<uint8_t>(buf, r.modality);
        put<uint32_t>(buf, r.label);
        put<uint32_t>(buf, r.pair_id);
        for (double v : r.values) put<float>(buf, (float)v);
    }
    return buf;
}

inline FeatureDataset deserialize_dataset(const std::string& buf) {
    using namespace detail_io;
    if (buf.size() < 4 || buf.compare(0, 4, "ARFD") != 0)
        throw IoError("bad magic: not an ARFD dataset file");
    size_t off = 4;
    uint32_t version = get<uint32_t>(buf, off);
    if (version != kArfdVersion)
        throw IoError("unsupported ARFD version: " + std::to_string(version));
    uint64_t n = get<uint64_t>(buf, off);
    FeatureDataset ds;
    ds.D = get<uint32_t>(buf, off);
    uint8_t dtype = get<uint8_t>(buf, off);
    if (dtype != 0) throw IoError("unsupported ARFD dtype: " + std::to_string(dtype));
    ds.records.resize(n);
    for (auto& r : ds.records) {
        r.modality = get<uint8_t>(buf, off);
        r.label = get<uint32_t>(buf, off);
        r.pair_id = get<uint32_t>(buf, off);
        r.values.resize(ds.D);
        for (auto& v : r.values) v = (double)get<float>(buf, off);
    }
    if (off != buf.size()) throw IoError("trailing bytes after dataset payload");
    return ds;
}

inline void save_dataset(const FeatureDataset& ds, const std::string& path) {
    detail_io::write_file(path, serialize_dataset(ds));
}

inline FeatureDataset load_dataset(const std::string& path) {
    return deserialize_dataset(detail_io::read_file(path));
}

// ─── Deterministic batching ───────────────────────────────────
// Seeded reshuffle every epoch; paired mode shuffles pairs and
// emits both members adjacently so relation-graph batches always
// mix modalities.

struct BatchStream {
    const FeatureDataset* ds = nullptr;
    int B = 0;
    bool paired = false;
    Rng rng{0};
    std::vector<size_t> order; // record or pair indices
    size_t pos = 0;

    BatchStream(const FeatureDataset& d, int batch, uint64_t seed, bool pair_mode)
        : ds(&d), B(batch), paired(pair_mode), rng(seed) {
        check(batch >= 1 && (size_t)batch <= d.size(), "batches: B must be in [1, N]");
        if (paired) {
            check(batch % 2 == 0, "batches: paired mode needs an even batch size");
            check(d.size() % 2 == 0, "batches: paired mode needs an even record count");
            order.resize(d.size() / 2);
        } else {
            order.resize(d.size());
        }
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
    }

    // next B record indices into ds->records
    std::vector<size_t> next() {
        size_t unit = paired ? (size_t)B / 2 : (size_t)B;
        if (pos + unit > order.size()) { // drop the short tail, new epoch
            rng.shuffle(order);
            pos = 0;
        }
        std::vector<size_t> out;
        out.reserve(B);
        for (size_t i = 0; i < unit; ++i) {
            size_t idx = order[pos + i];
            if (paired) {
                out.push_back(2 * idx);
                out.push_back(2 * idx + 1);
            } else {
                out.push_back(idx);
            }
        }
        pos += unit;
        return out;
    }
};

// assemble a (B, D) tensor from record indices
inline Tensor gather_features(const FeatureDataset& ds, const std::vector<size_t>& idx) {
    Tensor t = make_tensor({(int)idx.size(), (int)ds.D});
    for (size_t i = 0; i < idx.size(); ++i)
        std::copy(ds.records[idx[i]].values.begin(), ds.records[idx[i]].values.end(),
                  t->data.begin() + i * ds.D);
    return t;
}

} // namespace arfc
