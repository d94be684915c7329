#pragma once

#include "trainer.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <iomanip>
#include <sstream>

namespace arfc {

// ─── Retrieval & classification metrics ───────────────────────

struct RetrievalReport {
    std::string direction; // "t2i" or "i2t"
    double r1 = 0.0, r5 = 0.0, r10 = 0.0;
    size_t queries = 0;
};

// Rank the gallery by cosine per query; R@k = % of queries whose
// paired item lands in the top k. Ties broken by gallery index.
inline RetrievalReport recall_at_k(const std::vector<std::vector<double>>& queries,
                                   const std::vector<uint32_t>& query_pair_ids,
                                   const std::vector<std::vector<double>>& gallery,
                                   const std::vector<uint32_t>& gallery_pair_ids,
                                   const std::string& direction = "") {
    check(!queries.empty() && !gallery.empty(), "recall_at_k: empty input");
    check(queries[0].size() == gallery[0].size(), "recall_at_k: code length mismatch");
    auto norm = [](const std::vector<double>& v) {
        double n = 0;
        for (double x : v) n += x * x;
        return std::sqrt(n);
    };
    std::vector<double> gnorm(gallery.size());
    for (size_t g = 0; g < gallery.size(); ++g) gnorm[g] = norm(gallery[g]);

    size_t hit1 = 0, hit5 = 0, hit10 = 0;
    for (size_t q = 0; q < queries.size(); ++q) {
        double qn = norm(queries[q]);
        size_t target = gallery.size();
        std::vector<double> sims(gallery.size());
        for (size_t g = 0; g < gallery.size(); ++g) {
            double dot = 0;
            for (size_t i = 0; i < queries[q].size(); ++i)
                dot += queries[q][i] * gallery[g][i];
            sims[g] = dot / (qn * gnorm[g]);
            if (gallery_pair_ids[g] == query_pair_ids[q]) target = g;
        }
        check(target < gallery.size(), "recall_at_k: query's pair missing from gallery");
        // rank of the target under (similarity desc, index asc)
        size_t rank = 1;
        for (size_t g = 0; g < gallery.size(); ++g)
            if (sims[g] > sims[target] || (sims[g] == sims[target] && g < target)) ++rank;
        if (rank <= 1) ++hit1;
        if (rank <= 5) ++hit5;
        if (rank <= 10) ++hit10;
    }
    double nq = (double)queries.size();
    return {direction, 100.0 * hit1 / nq, 100.0 * hit5 / nq, 100.0 * hit10 / nq,
            queries.size()};
}

// Per-class mean of train codes; classify test codes by max
// cosine to the centroids.
inline double nearest_centroid_accuracy(const std::vector<std::vector<double>>& train,
                                        const std::vector<uint32_t>& train_labels,
                                        const std::vector<std::vector<double>>& test,
                                        const std::vector<uint32_t>& test_labels) {
    check(!train.empty() && !test.empty(), "nearest_centroid: empty input");
    uint32_t C = 0;
    for (uint32_t l : train_labels) C = std::max(C, l + 1);
    for (uint32_t l : test_labels)
        check(l < C, "nearest_centroid: test label unseen in train");
    size_t dim = train[0].size();
    std::vector<std::vector<double>> centroid(C, std::vector<double>(dim, 0.0));
    std::vector<size_t> count(C, 0);
    for (size_t i = 0; i < train.size(); ++i) {
        for (size_t k = 0; k < dim; ++k) centroid[train_labels[i]][k] += train[i][k];
        ++count[train_labels[i]];
    }
    for (uint32_t c = 0; c < C; ++c) {
        check(count[c] > 0, "nearest_centroid: class with no train samples");
        for (double& v : centroid[c]) v /= (double)count[c];
    }
    auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
        double d = 0, na = 0, nb = 0;
        for (size_t i = 0; i < a.size(); ++i) {
            d += a[i] * b[i];
            na += a[i] * a[i];
            nb += b[i] * b[i];
        }
        return d / (std::sqrt(na) * std::sqrt(nb) + 1e-300);
    };
    size_t correct = 0;
    for (size_t i = 0; i < test.size(); ++i) {
        uint32_t best = 0;
        double best_sim = -2.0;
        for (uint32_t c = 0; c < C; ++c) {
            double s = cosine(test[i], centroid[c]);
            if (s > best_sim) {
                best_sim = s;
                best = c;
            }
        }
        if (best == test_labels[i]) ++correct;
    }
    return 100.0 * (double)correct / (double)test.size();
}

// ─── PCA oracle ───────────────────────────────────────────────
// Exact eigendecomposition of the training covariance: the
// optimal linear compressor under squared error, used as the
// quality floor the learned compressor is held against.

struct PcaBasis {
    std::vector<double> mean;               // D
    std::vector<std::vector<double>> comps; // k rows of length D, eigenvalue desc
    std::vector<double> eigenvalues;        // all D, descending
};

inline PcaBasis pca_fit(const std::vector<std::vector<double>>& data, int k) {
    check(!data.empty(), "pca_fit: empty data");
    int D = (int)data[0].size();
    check(k >= 1 && k <= D, "pca_fit: k must be in [1, D]");
    size_t N = data.size();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(D);
    for (const auto& row : data)
        mean += Eigen::Map<const Eigen::VectorXd>(row.data(), D);
    mean /= (double)N;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(D, D);
    for (const auto& row : data) {
        Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(row.data(), D) - mean;
        cov.noalias() += x * x.transpose();
    }
    cov /= (double)N;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    check(es.info() == Eigen::Success, "pca_fit: eigendecomposition failed");

    PcaBasis basis;
    basis.mean.assign(mean.data(), mean.data() + D);
    basis.eigenvalues.resize(D);
    for (int i = 0; i < D; ++i) basis.eigenvalues[i] = es.eigenvalues()(D - 1 - i);
    basis.comps.resize(k, std::vector<double>(D));
    for (int i = 0; i < k; ++i) {
        Eigen::VectorXd v = es.eigenvectors().col(D - 1 - i);
        // deterministic sign: largest-magnitude entry positive
        int arg = 0;
        for (int j = 1; j < D; ++j)
            if (std::abs(v(j)) > std::abs(v(arg))) arg = j;
        if (v(arg) < 0) v = -v;
        for (int j = 0; j < D; ++j) basis.comps[i][j] = v(j);
    }
    return basis;
}

inline std::vector<double> pca_compress(const PcaBasis& basis,
                                        const std::vector<double>& f, int k) {
    check(k >= 1 && k <= (int)basis.comps.size(), "pca_compress: k exceeds basis");
    std::vector<double> code(k, 0.0);
    for (int i = 0; i < k; ++i)
        for (size_t j = 0; j < f.size(); ++j)
            code[i] += basis.comps[i][j] * (f[j] - basis.mean[j]);
    return code;
}

inline std::vector<double> pca_reconstruct(const PcaBasis& basis,
                                           const std::vector<double>& code) {
    std::vector<double> f = basis.mean;
    for (size_t i = 0; i < code.size(); ++i)
        for (size_t j = 0; j < f.size(); ++j) f[j] += code[i] * basis.comps[i][j];
    return f;
}

// mean over samples of ‖f − reconstruct(compress(f, k))‖²
inline double pca_reconstruction_mse(const PcaBasis& basis,
                                     const std::vector<std::vector<double>>& data,
                                     int k) {
    double total = 0.0;
    for (const auto& f : data) {
        auto rec = pca_reconstruct(basis, pca_compress(basis, f, k));
        for (size_t j = 0; j < f.size(); ++j)
            total += (f[j] - rec[j]) * (f[j] - rec[j]);
    }
    return total / (double)data.size();
}

// ─── Pipeline evaluation ──────────────────────────────────────

struct EvalRow {
    double ratio = 0.0;
    std::string direction;
    double r1 = 0, r5 = 0, r10 = 0;
    double mse = 0.0;          // reconstruction through the stage decoder
    double centroid_acc = 0.0;
    double relation_err = 0.0; // mean |E_ori - E_cmp| off-diagonal
    double pca_mse = 0.0;      // oracle at matched retained dimension
};

// batched eval-mode compression of every record
inline std::vector<std::vector<double>> compress_dataset(const Checkpoint& ck,
                                                         const FeatureDataset& ds,
                                                         double r, bool use_mos,
                                                         int chunk = 64) {
    std::vector<std::vector<double>> out(ds.size());
    for (size_t start = 0; start < ds.size(); start += (size_t)chunk) {
        size_t end = std::min(ds.size(), start + (size_t)chunk);
        std::vector<size_t> idx(end - start);
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
        Tensor codes = compress(ck, gather_features(ds, idx), r, use_mos);
        int width = codes->dim(1);
        for (size_t i = 0; i < idx.size(); ++i)
            out[start + i].assign(codes->data.begin() + i * width,
                                  codes->data.begin() + (i + 1) * width);
    }
    return out;
}

// reconstruction MSE through the checkpoint's stage decoders
inline double decoder_mse(const Checkpoint& ck, const FeatureDataset& ds,
                          const std::vector<std::vector<double>>& codes, double r,
                          bool use_mos) {
    NoGradGuard ng;
    int T = ck.config.arc.T;
    int j = ratio_to_token_count(r, T);
    const LayerParams& p = use_mos ? ck.stage2 : ck.stage1;
    std::string prefix = use_mos ? "mospool" : "arcpool";
    const Tensor& w = p.at(DecoderPool::main_name(prefix, j) + ".w");
    const Tensor& b = p.at(DecoderPool::main_name(prefix, j) + ".b");
    double total = 0.0;
    for (size_t i = 0; i < ds.size(); ++i) {
        Tensor code = make_tensor({1, (int)codes[i].size()},
                                  std::vector<double>(codes[i]));
        Tensor rec = linear(code, w, b);
        for (size_t k = 0; k < ds.records[i].values.size(); ++k) {
            double d = ds.records[i].values[k] - rec->data[k];
            total += d * d;
        }
    }
    return total / (double)ds.size();
}

inline double mean_relation_err(const std::vector<std::vector<double>>& original,
                                const std::vector<std::vector<double>>& compressed) {
    size_t N = original.size();
    int Do = (int)original[0].size(), Dc = (int)compressed[0].size();
    EMat O(N, Do), Cm(N, Dc);
    for (size_t i = 0; i < N; ++i) {
        O.row(i) = Eigen::Map<const Eigen::RowVectorXd>(original[i].data(), Do);
        O.row(i) /= O.row(i).norm();
        Cm.row(i) = Eigen::Map<const Eigen::RowVectorXd>(compressed[i].data(), Dc);
        Cm.row(i) /= Cm.row(i).norm();
    }
    EMat diff = (O * O.transpose() - Cm * Cm.transpose()).cwiseAbs();
    double sum = diff.sum() - diff.diagonal().sum();
    return sum / (double)(N * (N - 1));
}

inline std::vector<EvalRow> evaluate_pipeline(const Checkpoint& ck,
                                              const FeatureDataset& ds,
                                              const std::vector<double>& ratios,
                                              bool use_mos) {
    check(ds.D == (uint32_t)ck.config.arc.D, "evaluate: checkpoint/dataset dim mismatch");
    int T = ck.config.arc.T, d = ck.config.arc.d();

    std::vector<std::vector<double>> raw(ds.size());
    std::vector<uint32_t> labels(ds.size());
    for (size_t i = 0; i < ds.size(); ++i) {
        raw[i] = ds.records[i].values;
        labels[i] = ds.records[i].label;
    }
    PcaBasis basis = pca_fit(raw, ck.config.arc.D);

    std::vector<EvalRow> rows;
    for (double r : ratios) {
        double snapped = snap_ratio(r, T);
        int j = ratio_to_token_count(r, T);
        auto codes = compress_dataset(ck, ds, snapped, use_mos);

        std::vector<std::vector<double>> img, txt;
        std::vector<uint32_t> img_pid, txt_pid, img_lab, txt_lab;
        for (size_t i = 0; i < ds.size(); ++i) {
            if (ds.records[i].modality == 0) {
                img.push_back(codes[i]);
                img_pid.push_back(ds.records[i].pair_id);
                img_lab.push_back(labels[i]);
            } else {
                txt.push_back(codes[i]);
                txt_pid.push_back(ds.records[i].pair_id);
                txt_lab.push_back(labels[i]);
            }
        }
        double mse = decoder_mse(ck, ds, codes, snapped, use_mos);
        double cacc = nearest_centroid_accuracy(codes, labels, codes, labels);
        double rel = mean_relation_err(raw, codes);
        double pmse = pca_reconstruction_mse(basis, raw, j * d);

        RetrievalReport t2i = recall_at_k(txt, txt_pid, img, img_pid, "t2i");
        RetrievalReport i2t = recall_at_k(img, img_pid, txt, txt_pid, "i2t");
        for (const auto& rep : {t2i, i2t})
            rows.push_back({snapped, rep.direction, rep.r1, rep.r5, rep.r10, mse, cacc,
                            rel, pmse});
    }
    return rows;
}

inline json eval_rows_to_json(const std::vector<EvalRow>& rows) {
    json out = json::array();
    for (const auto& r : rows)
        out.push_back({{"ratio", r.ratio},
                       {"direction", r.direction},
                       {"r1", r.r1},
                       {"r5", r.r5},
                       {"r10", r.r10},
                       {"mse", r.mse},
                       {"centroid_acc", r.centroid_acc},
                       {"relation_err", r.relation_err},
                       {"pca_mse", r.pca_mse}});
    return out;
}

inline std::string eval_rows_to_csv(const std::vector<EvalRow>& rows) {
    std::ostringstream os;
    os << "ratio,direction,r1,r5,r10,mse,centroid_acc,relation_err,pca_mse\n";
    os << std::setprecision(17);
    for (const auto& r : rows)
        os << r.ratio << ',' << r.direction << ',' << r.r1 << ',' << r.r5 << ',' << r.r10
           << ',' << r.mse << ',' << r.centroid_acc << ',' << r.relation_err << ','
           << r.pca_mse << "\n";
    return os.str();
}

// Spearman rank correlation over a short series (ties get their
// first-occurrence rank; adequate for trend checks on 4 points)
inline double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<double> r(v.size());
        for (size_t i = 0; i < v.size(); ++i) {
            size_t less = 0;
            for (size_t j = 0; j < v.size(); ++j)
                if (v[j] < v[i] || (v[j] == v[i] && j < i)) ++less;
            r[i] = (double)less;
        }
        return r;
    };
    auto rx = ranks(xs), ry = ranks(ys);
    double mx = 0, my = 0;
    for (size_t i = 0; i < rx.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= rx.size();
    my /= ry.size();
    double num = 0, dx = 0, dy = 0;
    for (size_t i = 0; i < rx.size(); ++i) {
        num += (rx[i] - mx) * (ry[i] - my);
        dx += (rx[i] - mx) * (rx[i] - mx);
        dy += (ry[i] - my) * (ry[i] - my);
    }
    return num / (std::sqrt(dx * dy) + 1e-300);
}

} // namespace arfc
