// arfc — compress fixed-length feature vectors to any prefix-
// truncatable length with one trained model.
//
// Commands: gen-data | train | compress | evaluate | inspect
// Exit codes: 0 ok, 1 usage, 2 data error, 3 numerical failure.
// Informational output goes to stderr; files/stdout carry only
// machine-readable artifacts.

#include "../arfc/ablation.hpp"
#include "../arfc/evalkit.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

using namespace arfc;

namespace {

std::vector<double> parse_ratios(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        double r = std::stod(item);
        if (r < 0.0 || r >= 1.0) throw CLI::ValidationError("ratios must be in [0,1)");
        out.push_back(r);
    }
    if (out.empty()) throw CLI::ValidationError("empty ratio list");
    return out;
}

void echo_config(const json& j) { std::cerr << "config: " << j.dump() << "\n"; }

int cmd_gen_data(const SynthConfig& cfg, const std::string& out_path) {
    json echo{{"classes", cfg.classes},   {"pairs_per_class", cfg.pairs_per_class},
              {"dim", cfg.D},             {"latent", cfg.latent},
              {"noise", cfg.noise},       {"spread", cfg.spread},
              {"seed", cfg.seed},         {"out", out_path}};
    echo_config(echo);
    FeatureDataset ds = generate_synthetic(cfg);
    save_dataset(ds, out_path);
    std::cerr << "wrote " << ds.size() << " records (D=" << ds.D << ", classes="
              << ds.num_classes() << ") to " << out_path << "\n";
    return 0;
}

int cmd_train(const std::string& data_path, const std::string& config_path,
              const std::string& stage, const std::string& schedule,
              const std::string& out_path, const std::string& log_path,
              const std::string& resume_path, uint64_t seed_override, bool have_seed) {
    TrainConfig cfg;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw IoError("cannot open config: " + config_path);
        json j = json::parse(in);
        cfg = j.get<TrainConfig>();
    }
    if (!schedule.empty()) cfg.schedule = schedule_mode_from(schedule);
    if (have_seed) cfg.seed = seed_override;
    json jc = cfg;
    echo_config(jc);

    FeatureDataset ds = load_dataset(data_path);
    std::ofstream log;
    std::ostream* log_ptr = nullptr;
    if (!log_path.empty()) {
        log.open(log_path, std::ios::trunc);
        if (!log) throw IoError("cannot open log for writing: " + log_path);
        log_ptr = &log;
    }

    Checkpoint ck;
    if (stage == "arc" || stage == "both") {
        ck = train_arc(cfg, ds, log_ptr);
    } else { // mos resumes from an existing ARC checkpoint
        if (resume_path.empty())
            throw CLI::ValidationError("--stage mos requires --resume <arc checkpoint>");
        ck = load_checkpoint(resume_path);
    }
    if (stage == "mos" || stage == "both") train_mos(ck, ds, log_ptr);
    save_checkpoint(ck, out_path);
    std::cerr << "checkpoint written to " << out_path << " (arc_step=" << ck.arc_step
              << ", mos_step=" << ck.mos_step << ")\n";
    return 0;
}

int cmd_compress(const std::string& ckpt_path, const std::string& in_path, double ratio,
                 bool use_mos, const std::string& out_path) {
    Checkpoint ck = load_checkpoint(ckpt_path);
    FeatureDataset ds = load_dataset(in_path);
    double snapped = snap_ratio(ratio, ck.config.arc.T);
    echo_config(json{{"ckpt", ckpt_path},
                     {"ratio", ratio},
                     {"effective_ratio", snapped},
                     {"use_mos", use_mos},
                     {"seed", ck.config.seed}});
    auto codes = compress_dataset(ck, ds, snapped, use_mos);

    FeatureDataset out;
    out.D = (uint32_t)codes[0].size();
    out.records.resize(ds.size());
    for (size_t i = 0; i < ds.size(); ++i) {
        out.records[i].modality = ds.records[i].modality;
        out.records[i].label = ds.records[i].label;
        out.records[i].pair_id = ds.records[i].pair_id;
        out.records[i].values = codes[i];
    }
    save_dataset(out, out_path);
    std::cerr << "wrote " << out.size() << " codes of dim " << out.D << " to "
              << out_path << "\n";
    return 0;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& data_path,
                 const std::string& ratios_str, bool use_mos, bool raw,
                 const std::string& report_path) {
    FeatureDataset ds = load_dataset(data_path);
    echo_config(json{{"ckpt", ckpt_path}, {"data", data_path}, {"ratios", ratios_str},
                     {"use_mos", use_mos}, {"raw", raw}});

    json report;
    if (raw) {
        std::vector<std::vector<double>> img, txt, all;
        std::vector<uint32_t> img_pid, txt_pid, labels;
        for (const auto& rec : ds.records) {
            all.push_back(rec.values);
            labels.push_back(rec.label);
            if (rec.modality == 0) {
                img.push_back(rec.values);
                img_pid.push_back(rec.pair_id);
            } else {
                txt.push_back(rec.values);
                txt_pid.push_back(rec.pair_id);
            }
        }
        auto t2i = recall_at_k(txt, txt_pid, img, img_pid, "t2i");
        auto i2t = recall_at_k(img, img_pid, txt, txt_pid, "i2t");
        double cacc = nearest_centroid_accuracy(all, labels, all, labels);
        report = json::array();
        for (const auto& rep : {t2i, i2t})
            report.push_back({{"ratio", 0.0}, {"direction", rep.direction},
                              {"r1", rep.r1}, {"r5", rep.r5}, {"r10", rep.r10},
                              {"centroid_acc", cacc}});
    } else {
        Checkpoint ck = load_checkpoint(ckpt_path);
        auto rows = evaluate_pipeline(ck, ds, parse_ratios(ratios_str), use_mos);
        report = eval_rows_to_json(rows);
        if (!report_path.empty())
            detail_io::write_file(report_path + ".csv", eval_rows_to_csv(rows));
    }
    std::string text = report.dump(2) + "\n";
    if (!report_path.empty()) detail_io::write_file(report_path, text);
    std::cout << text;
    return 0;
}

int cmd_inspect(const std::string& ckpt_path, const std::string& data_path,
                int graph_batch) {
    if (!ckpt_path.empty()) {
        Checkpoint ck = load_checkpoint(ckpt_path);
        size_t arc_n = 0, pool1_n = 0, mos_n = 0, pool2_n = 0;
        for (const auto& [name, t] : ck.stage1.by_name)
            (name.rfind("arcpool", 0) == 0 ? pool1_n : arc_n) += t->size();
        for (const auto& [name, t] : ck.stage2.by_name)
            (name.rfind("mospool", 0) == 0 ? pool2_n : mos_n) += t->size();
        DecoderPool pool = make_pool({ck.config.arc.D, ck.config.arc.T, ck.config.M}, "");
        json j{{"config", json(ck.config)},
               {"arc_step", ck.arc_step},
               {"mos_step", ck.mos_step},
               {"arc_params", arc_n},
               {"arc_params_expected", arc_param_count(ck.config.arc)},
               {"arc_pool_params", pool1_n},
               {"pool_params_expected", pool.param_count()},
               {"mos_params", mos_n},
               {"mos_params_expected",
                ck.has_mos() ? mos_param_count(ck.config.mos) : 0},
               {"mos_pool_params", pool2_n}};
        std::cout << j.dump(2) << "\n";
    }
    if (!data_path.empty()) {
        FeatureDataset ds = load_dataset(data_path);
        if (graph_batch >= 0) {
            // CSV relation graph of one paired batch
            BatchStream bs(ds, std::min<size_t>(16, ds.size()), 0, true);
            std::vector<size_t> idx;
            for (int b = 0; b <= graph_batch; ++b) idx = bs.next();
            NoGradGuard ng;
            Tensor g = build_graph(gather_features(ds, idx));
            int B = g->dim(0);
            for (int i = 0; i < B; ++i) std::cout << "b" << i << (i + 1 < B ? "," : "\n");
            std::cout << std::setprecision(17);
            for (int i = 0; i < B; ++i)
                for (int c = 0; c < B; ++c)
                    std::cout << g->data[i * B + c] << (c + 1 < B ? "," : "\n");
        } else {
            json j{{"n", ds.size()}, {"dim", ds.D}, {"classes", ds.num_classes()}};
            std::cout << j.dump(2) << "\n";
        }
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"arbitrary-ratio feature compression toolkit"};
    app.require_subcommand(1);

    // gen-data
    SynthConfig synth;
    std::string gen_out = "data.arfd";
    double spread = 1.0;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic paired dataset");
    gen->add_option("--classes", synth.classes);
    gen->add_option("--pairs-per-class", synth.pairs_per_class);
    gen->add_option("--dim", synth.D);
    gen->add_option("--latent", synth.latent);
    gen->add_option("--noise", synth.noise);
    gen->add_option("--spread", spread);
    gen->add_option("--seed", synth.seed);
    gen->add_option("--out", gen_out);

    // train
    std::string tr_data, tr_config, tr_stage = "both", tr_schedule, tr_out = "model.arfc";
    std::string tr_log, tr_resume;
    uint64_t tr_seed = 0;
    auto* tr = app.add_subcommand("train", "run the two-stage training pipeline");
    tr->add_option("--data", tr_data)->required();
    tr->add_option("--config", tr_config);
    tr->add_option("--stage", tr_stage)->check(CLI::IsMember({"arc", "mos", "both"}));
    tr->add_option("--schedule", tr_schedule)
        ->check(CLI::IsMember({"progressive", "uniform", "full-grid"}));
    tr->add_option("--out", tr_out);
    tr->add_option("--log", tr_log);
    tr->add_option("--resume", tr_resume);
    auto* seed_opt = tr->add_option("--seed", tr_seed);

    // compress
    std::string cp_ckpt, cp_in, cp_out = "codes.arfd";
    double cp_ratio = 0.5;
    bool cp_mos = false;
    auto* cp = app.add_subcommand("compress", "compress features at a ratio");
    cp->add_option("--ckpt", cp_ckpt)->required();
    cp->add_option("--in", cp_in)->required();
    cp->add_option("--ratio", cp_ratio);
    cp->add_flag("--use-mos", cp_mos);
    cp->add_option("--out", cp_out);

    // evaluate
    std::string ev_ckpt, ev_data, ev_ratios = "0,0.5,0.75,0.875", ev_report;
    bool ev_mos = false, ev_raw = false;
    auto* ev = app.add_subcommand("evaluate", "retrieval/classification report");
    ev->add_option("--ckpt", ev_ckpt);
    ev->add_option("--data", ev_data)->required();
    ev->add_option("--ratios", ev_ratios);
    ev->add_flag("--use-mos", ev_mos);
    ev->add_flag("--raw", ev_raw);
    ev->add_option("--report", ev_report);

    // inspect
    std::string in_ckpt, in_data;
    int in_graph = -1;
    auto* ins = app.add_subcommand("inspect", "dump checkpoint/dataset/graph details");
    ins->add_option("--ckpt", in_ckpt);
    ins->add_option("--data", in_data);
    ins->add_option("--graph", in_graph);

    try {
        app.parse(argc, argv);
        if (gen->parsed()) {
            SynthConfig c = synth;
            c.spread = spread;
            return cmd_gen_data(c, gen_out);
        }
        if (tr->parsed())
            return cmd_train(tr_data, tr_config, tr_stage, tr_schedule, tr_out, tr_log,
                             tr_resume, tr_seed, seed_opt->count() > 0);
        if (cp->parsed()) return cmd_compress(cp_ckpt, cp_in, cp_ratio, cp_mos, cp_out);
        if (ev->parsed())
            return cmd_evaluate(ev_ckpt, ev_data, ev_ratios, ev_mos, ev_raw, ev_report);
        if (ins->parsed()) return cmd_inspect(in_ckpt, in_data, in_graph);
        return 1;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
