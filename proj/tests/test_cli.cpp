// End-to-end checks of the command-line tool: exit-code contract, byte
// reproducibility of generated cohorts, and the full generate / train /
// evaluate / compare / subgroup workflow on a small cohort. The binary path
// arrives through the PRIORISK_CLI_BIN compile definition.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "doctest.h"

#ifndef PRIORISK_CLI_BIN
#error "PRIORISK_CLI_BIN must point at the command-line binary"
#endif

namespace {

int run_cli(const std::string& args) {
    std::string cmd = std::string(PRIORISK_CLI_BIN) + " " + args + " >cli_test_stdout.txt 2>&1";
    int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

bool exists(const std::string& path) { return std::ifstream(path).good(); }

struct Cleanup {
    std::vector<std::string> paths;
    ~Cleanup() {
        for (const auto& p : paths) std::remove(p.c_str());
        std::remove("cli_test_stdout.txt");
    }
    const char* add(const std::string& p) {
        paths.push_back(p);
        return paths.back().c_str();
    }
};

}  // namespace

TEST_CASE("usage and configuration problems exit with code 2") {
    Cleanup files;
    CHECK(run_cli("") == 2);
    CHECK(run_cli("no_such_subcommand") == 2);
    CHECK(run_cli("synth --seed") == 2);           // missing option value
    CHECK(run_cli("train --variant prime") == 2);  // missing required --data

    spit(files.add("cli_bad_config.json"), "{\"n_patients\": 0}\n");
    CHECK(run_cli("synth --config cli_bad_config.json --out cli_never_written.csv") == 2);
    CHECK_FALSE(exists("cli_never_written.csv"));
}

TEST_CASE("missing or malformed data exits with code 3") {
    Cleanup files;
    CHECK(run_cli("train --data cli_no_such.csv --variant prime --out cli_x.ckpt") == 3);
    CHECK(run_cli("eval --data cli_no_such.csv --model cli_x.ckpt --out cli_s.csv") == 3);
    CHECK(run_cli("subgroup --scores cli_no_such_scores.csv") == 3);

    spit(files.add("cli_garbage.csv"), "this,is,not\na,cohort,file\n");
    CHECK(run_cli("train --data cli_garbage.csv --variant prime --out cli_x.ckpt") == 3);
}

TEST_CASE("cohort synthesis is byte identical per seed") {
    Cleanup files;
    files.add("cli_synth_a.csv");
    files.add("cli_synth_b.csv");
    files.add("cli_synth_c.csv");
    CHECK(run_cli("synth --seed 5 --n-patients 30 --out cli_synth_a.csv") == 0);
    CHECK(run_cli("synth --seed 5 --n-patients 30 --out cli_synth_b.csv") == 0);
    CHECK(run_cli("synth --seed 6 --n-patients 30 --out cli_synth_c.csv") == 0);

    auto a = slurp("cli_synth_a.csv");
    REQUIRE_FALSE(a.empty());
    CHECK(a == slurp("cli_synth_b.csv"));
    CHECK(a != slurp("cli_synth_c.csv"));
}

TEST_CASE("the full workflow runs end to end on a small cohort") {
    Cleanup files;
    files.add("cli_flow.csv");
    files.add("cli_flow_oracle.csv");
    files.add("cli_flow_config.json");
    files.add("cli_flow.ckpt");
    files.add("cli_flow_history.csv");
    files.add("cli_flow_scores.csv");
    files.add("cli_flow_report.csv");
    files.add("cli_flow_oracle_scores.csv");
    files.add("cli_flow_cmp.csv");
    files.add("cli_flow_subgroup.csv");

    REQUIRE(run_cli("synth --seed 12 --n-patients 60 --out cli_flow.csv "
                    "--oracle cli_flow_oracle.csv --write-config cli_flow_config.json") == 0);
    REQUIRE(exists("cli_flow.csv"));
    REQUIRE(exists("cli_flow_oracle.csv"));
    REQUIRE(exists("cli_flow_config.json"));

    REQUIRE(run_cli("train --data cli_flow.csv --variant prime --out cli_flow.ckpt "
                    "--history cli_flow_history.csv --steps 150 --batch 16 --horizon 3 "
                    "--seed 7") == 0);
    REQUIRE(exists("cli_flow.ckpt"));
    CHECK(slurp("cli_flow_history.csv").rfind("step,lr,loss", 0) == 0);

    REQUIRE(run_cli("eval --data cli_flow.csv --model cli_flow.ckpt "
                    "--out cli_flow_scores.csv --report cli_flow_report.csv "
                    "--bootstrap 50 --seed 3 --name smoke") == 0);
    REQUIRE(exists("cli_flow_scores.csv"));
    CHECK(slurp("cli_flow_report.csv")
              .rfind("subgroup,metric,horizon,point,lo,hi", 0) == 0);

    REQUIRE(run_cli("eval --data cli_flow.csv --oracle cli_flow_oracle.csv "
                    "--oracle-horizon 3 --out cli_flow_oracle_scores.csv") == 0);
    REQUIRE(exists("cli_flow_oracle_scores.csv"));

    // a model compared with itself: zero difference, p = 1
    REQUIRE(run_cli("compare --scores-a cli_flow_scores.csv --scores-b cli_flow_scores.csv "
                    "--out cli_flow_cmp.csv --name-a self --name-b self") == 0);
    std::string cmp = slurp("cli_flow_cmp.csv");
    CHECK(cmp.rfind("metric,horizon,value_a,value_b,diff,z,p,defined", 0) == 0);
    auto second_line = cmp.substr(cmp.find('\n') + 1);
    second_line = second_line.substr(0, second_line.find('\n'));
    CHECK(second_line.rfind("c_index,3,", 0) == 0);
    CHECK(second_line.find(",0,0,1,1") != std::string::npos);  // diff 0, z 0, p 1

    // both paths score the same subjects, so the cross-comparison aligns
    CHECK(run_cli("compare --scores-a cli_flow_scores.csv "
                  "--scores-b cli_flow_oracle_scores.csv") == 0);

    // a horizon mismatch between score sets is a data error
    files.add("cli_flow_oracle_scores4.csv");
    REQUIRE(run_cli("eval --data cli_flow.csv --oracle cli_flow_oracle.csv "
                    "--oracle-horizon 4 --out cli_flow_oracle_scores4.csv") == 0);
    CHECK(run_cli("compare --scores-a cli_flow_scores.csv "
                  "--scores-b cli_flow_oracle_scores4.csv") == 3);

    REQUIRE(run_cli("subgroup --scores cli_flow_scores.csv --out cli_flow_subgroup.csv "
                    "--bootstrap 40 --seed 2") == 0);
    std::string sub = slurp("cli_flow_subgroup.csv");
    CHECK(sub.find("\nexcl_180d,") != std::string::npos);
    CHECK(sub.find("\nchange,") != std::string::npos);
    CHECK(sub.find("\ndense,") != std::string::npos);
}

TEST_CASE("a diverging run exits with the numeric code and keeps a checkpoint") {
    Cleanup files;
    files.add("cli_blowup.csv");
    files.add("cli_blowup.ckpt");
    REQUIRE(run_cli("synth --seed 3 --n-patients 40 --out cli_blowup.csv") == 0);
    CHECK(run_cli("train --data cli_blowup.csv --variant prime --out cli_blowup.ckpt "
                  "--steps 60 --lr0 1e18 --horizon 3") == 4);
    CHECK(exists("cli_blowup.ckpt"));  // rolled-back parameters are still saved
    std::string log = slurp("cli_test_stdout.txt");
    CHECK(log.find("aborted") != std::string::npos);
}

TEST_CASE("training rejects invalid optimizer settings with code 2") {
    Cleanup files;
    files.add("cli_badopt.csv");
    REQUIRE(run_cli("synth --seed 4 --n-patients 30 --out cli_badopt.csv") == 0);
    CHECK(run_cli("train --data cli_badopt.csv --variant prime --out cli_x.ckpt "
                  "--steps 0") == 2);
    CHECK(run_cli("train --data cli_badopt.csv --variant prime --out cli_x.ckpt "
                  "--lr0 -0.5") == 2);
    CHECK(run_cli("train --data cli_badopt.csv --variant prime --out cli_x.ckpt "
                  "--momentum 1.0") == 2);
    CHECK(run_cli("train --data cli_badopt.csv --variant nosuch --out cli_x.ckpt") == 2);
}
