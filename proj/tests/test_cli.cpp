#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "arfc/trainer.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace arfc;

namespace {

std::string cli() {
    const char* p = std::getenv("ARFC_CLI");
    REQUIRE_MESSAGE(p != nullptr, "ARFC_CLI must point at the arfc binary");
    return p;
}

const std::string dir = "/tmp/arfc_cli_test";

int run(const std::string& args, const std::string& stdout_file = "/dev/null") {
    std::string cmd = cli() + " " + args + " > " + stdout_file + " 2> " + dir + "/err";
    int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_tiny_config(const std::string& path, uint64_t seed, double lr = 0.001) {
    TrainConfig cfg;
    cfg.arc.D = 16;
    cfg.arc.T = 4;
    cfg.arc.W = 16;
    cfg.arc.layers = 1;
    cfg.arc.heads = 2;
    cfg.arc.ffn_mult = 2;
    cfg.mos.D = 16;
    cfg.mos.K = 2;
    cfg.mos.L = 1;
    cfg.mos.heads = 2;
    cfg.mos.ffn_mult = 2;
    cfg.M = 1;
    cfg.batch = 4;
    cfg.arc_steps = 8;
    cfg.mos_steps = 4;
    cfg.ratios_per_step = 2;
    cfg.seed = seed;
    cfg.lr = lr;
    std::ofstream out(path);
    out << json(cfg).dump(2) << "\n";
}

struct Fixture {
    Fixture() {
        std::system(("rm -rf " + dir + " && mkdir -p " + dir).c_str());
        write_tiny_config(dir + "/cfg.json", 77);
        REQUIRE(run("gen-data --classes 2 --pairs-per-class 6 --dim 16 --latent 8 "
                    "--seed 3 --out " + dir + "/data.arfd") == 0);
    }
};

} // namespace

TEST_CASE_FIXTURE(Fixture, "usage errors exit 1") {
    CHECK(run("") == 1);
    CHECK(run("frobnicate") == 1);
    CHECK(run("train") == 1);                       // missing required --data
    CHECK(run("compress --ckpt x") == 1);           // missing required --in
    CHECK(run("train --data x --stage bogus") == 1);
    CHECK(run("--help") == 0);
}

TEST_CASE_FIXTURE(Fixture, "gen-data: deterministic per seed, inspectable") {
    CHECK(run("gen-data --classes 2 --pairs-per-class 6 --dim 16 --latent 8 --seed 3 "
              "--out " + dir + "/data2.arfd") == 0);
    CHECK(slurp(dir + "/data2.arfd") == slurp(dir + "/data.arfd"));
    CHECK(run("gen-data --classes 2 --pairs-per-class 6 --dim 16 --latent 8 --seed 4 "
              "--out " + dir + "/data3.arfd") == 0);
    CHECK(slurp(dir + "/data3.arfd") != slurp(dir + "/data.arfd"));

    CHECK(run("inspect --data " + dir + "/data.arfd", dir + "/insp.json") == 0);
    auto j = json::parse(slurp(dir + "/insp.json"));
    CHECK(j.at("n") == 24);
    CHECK(j.at("dim") == 16);
    CHECK(j.at("classes") == 2);

    // graph dump: header + B rows of B comma-separated cosines
    CHECK(run("inspect --data " + dir + "/data.arfd --graph 0", dir + "/g.csv") == 0);
    std::istringstream g(slurp(dir + "/g.csv"));
    std::string line;
    int lines = 0, commas = -1;
    while (std::getline(g, line)) {
        ++lines;
        commas = (int)std::count(line.begin(), line.end(), ',');
    }
    CHECK(lines == 17); // header + 16 rows
    CHECK(commas == 15);
}

TEST_CASE_FIXTURE(Fixture, "train / compress / evaluate round trip") {
    CHECK(run("train --data " + dir + "/data.arfd --config " + dir + "/cfg.json "
              "--stage both --out " + dir + "/m.arfc --log " + dir + "/m.log") == 0);

    // training is reproducible byte-for-byte
    CHECK(run("train --data " + dir + "/data.arfd --config " + dir + "/cfg.json "
              "--stage both --out " + dir + "/m2.arfc") == 0);
    CHECK(slurp(dir + "/m.arfc") == slurp(dir + "/m2.arfc"));
    // --seed overrides the config
    CHECK(run("train --data " + dir + "/data.arfd --config " + dir + "/cfg.json "
              "--stage both --seed 78 --out " + dir + "/m3.arfc") == 0);
    CHECK(slurp(dir + "/m3.arfc") != slurp(dir + "/m.arfc"));

    // log has one JSONL line per step
    std::istringstream log(slurp(dir + "/m.log"));
    std::string line;
    int n = 0;
    while (std::getline(log, line)) {
        json j = json::parse(line);
        CHECK(j.contains("total"));
        ++n;
    }
    CHECK(n == 8 + 4);

    // inspect: parameter counts match the closed forms
    CHECK(run("inspect --ckpt " + dir + "/m.arfc", dir + "/ck.json") == 0);
    auto j = json::parse(slurp(dir + "/ck.json"));
    CHECK(j.at("arc_step") == 8);
    CHECK(j.at("mos_step") == 4);
    CHECK(j.at("arc_params") == j.at("arc_params_expected"));
    CHECK(j.at("arc_pool_params") == j.at("pool_params_expected"));
    CHECK(j.at("mos_params") == j.at("mos_params_expected"));

    // compress at r=0.5: 16 -> 8 dims, codes load as a dataset
    CHECK(run("compress --ckpt " + dir + "/m.arfc --in " + dir + "/data.arfd "
              "--ratio 0.5 --out " + dir + "/codes.arfd") == 0);
    auto codes = load_dataset(dir + "/codes.arfd");
    CHECK(codes.D == 8);
    CHECK(codes.size() == 24);
    CHECK(codes.records[5].label == load_dataset(dir + "/data.arfd").records[5].label);
    // refined codes keep full width then truncate identically
    CHECK(run("compress --ckpt " + dir + "/m.arfc --in " + dir + "/data.arfd "
              "--ratio 0 --use-mos --out " + dir + "/codes_mos.arfd") == 0);
    CHECK(load_dataset(dir + "/codes_mos.arfd").D == 16);

    // evaluate: JSON rows on stdout, report + CSV on disk
    CHECK(run("evaluate --ckpt " + dir + "/m.arfc --data " + dir + "/data.arfd "
              "--ratios 0,0.5 --use-mos --report " + dir + "/rep.json",
              dir + "/eval.json") == 0);
    auto rows = json::parse(slurp(dir + "/eval.json"));
    CHECK(rows.size() == 4); // 2 ratios x 2 directions
    CHECK(rows[0].at("ratio") == 0.0);
    CHECK(json::parse(slurp(dir + "/rep.json")) == rows);
    CHECK(slurp(dir + "/rep.json.csv").rfind("ratio,direction,", 0) == 0);

    // stage mos resumes from the arc checkpoint
    CHECK(run("train --data " + dir + "/data.arfd --config " + dir + "/cfg.json "
              "--stage arc --out " + dir + "/arc_only.arfc") == 0);
    CHECK(run("train --data " + dir + "/data.arfd --config " + dir + "/cfg.json "
              "--stage mos --resume " + dir + "/arc_only.arfc --out " +
              dir + "/resumed.arfc") == 0);
    CHECK(run("inspect --ckpt " + dir + "/resumed.arfc", dir + "/r.json") == 0);
    CHECK(json::parse(slurp(dir + "/r.json")).at("mos_step") == 4);
    CHECK(run("train --data " + dir + "/data.arfd --config " + dir + "/cfg.json "
              "--stage mos --out " + dir + "/x.arfc") == 1); // no --resume
}

TEST_CASE_FIXTURE(Fixture, "raw evaluation on clean data is perfect") {
    CHECK(run("gen-data --classes 2 --pairs-per-class 6 --dim 16 --latent 8 --noise 0 "
              "--seed 3 --out " + dir + "/clean.arfd") == 0);
    CHECK(run("evaluate --data " + dir + "/clean.arfd --raw", dir + "/raw.json") == 0);
    auto rows = json::parse(slurp(dir + "/raw.json"));
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].at("r1") == 100.0);
    CHECK(rows[1].at("r1") == 100.0);
}

TEST_CASE_FIXTURE(Fixture, "data errors exit 2") {
    CHECK(run("compress --ckpt /nonexistent.arfc --in " + dir + "/data.arfd") == 2);
    CHECK(run("train --data /nonexistent.arfd") == 2);

    std::ofstream bad(dir + "/bad.arfd", std::ios::binary);
    bad << "not a dataset at all";
    bad.close();
    CHECK(run("train --data " + dir + "/bad.arfd") == 2);
    CHECK(run("inspect --data " + dir + "/bad.arfd") == 2);
}

TEST_CASE_FIXTURE(Fixture, "numerical failure exits 3") {
    write_tiny_config(dir + "/hot.json", 77, /*lr=*/1e9);
    // blow up the clip threshold so divergence actually happens
    auto j = json::parse(slurp(dir + "/hot.json"));
    j["grad_clip"] = 1e18;
    j["arc_steps"] = 40;
    std::ofstream(dir + "/hot.json") << j.dump() << "\n";
    CHECK(run("train --data " + dir + "/data.arfd --config " + dir + "/hot.json "
              "--stage arc --out " + dir + "/hot.arfc") == 3);
}
