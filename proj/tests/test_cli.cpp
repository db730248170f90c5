// Copyright 2026 The RepKit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;
};

fs::path scratch_dir() {
    const auto dir = fs::temp_directory_path() / "repkit_cli_tests";
    fs::create_directories(dir);
    return dir;
}

RunResult run_cli(const std::string& args) {
    const fs::path out_file = scratch_dir() / "last_output.txt";
    const std::string cmd =
        std::string(REPKIT_CLI_PATH) + " " + args + " > " + out_file.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult result;
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out_file);
    std::ostringstream os;
    os << in.rdbuf();
    result.output = os.str();
    return result;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

const char* kElanConfig = R"({
  "block": "elan",
  "in_channels": 16,
  "branch_width": 8,
  "stack_depth": 2,
  "transition_out": 16,
  "activation": "silu",
  "seed": 42
})";

const char* kRepConfig = R"({
  "block": "planned-rep-elan",
  "variant": "c",
  "seed": 1
})";

}  // namespace

TEST_CASE("build is byte-deterministic for a fixed config and seed") {
    const auto dir = scratch_dir();
    write_file(dir / "elan.json", kElanConfig);

    const std::string base = "build --config " + (dir / "elan.json").string();
    const RunResult first = run_cli(base + " --graph-out " + (dir / "g1.json").string() +
                                    " --weights-out " + (dir / "w1.rpkw").string());
    REQUIRE(first.exit_code == 0);
    const RunResult second = run_cli(base + " --graph-out " + (dir / "g2.json").string() +
                                     " --weights-out " + (dir / "w2.rpkw").string());
    REQUIRE(second.exit_code == 0);
    CHECK(slurp(dir / "g1.json") == slurp(dir / "g2.json"));
    CHECK(slurp(dir / "w1.rpkw") == slurp(dir / "w2.rpkw"));
}

TEST_CASE("build rejects unknown config keys with exit 2 naming the key") {
    const auto dir = scratch_dir();
    write_file(dir / "bad_key.json", R"({
        "block": "elan", "in_channels": 16, "branch_width": 8,
        "stack_depth": 2, "transition_out": 16, "bogus_knob": 3 })");
    const RunResult result = run_cli("build --config " + (dir / "bad_key.json").string() +
                                     " --graph-out " + (dir / "never.json").string() +
                                     " --weights-out " + (dir / "never.rpkw").string());
    CHECK(result.exit_code == 2);
    CHECK(result.output.find("bogus_knob") != std::string::npos);
}

TEST_CASE("build surfaces builder violations with exit 3") {
    const auto dir = scratch_dir();
    write_file(dir / "bad_groups.json", R"({
        "block": "eelan", "in_channels": 16, "branch_width": 12,
        "stack_depth": 2, "transition_out": 16, "groups": 8, "multiplier": 1 })");
    const RunResult result = run_cli("build --config " + (dir / "bad_groups.json").string() +
                                     " --graph-out " + (dir / "never.json").string() +
                                     " --weights-out " + (dir / "never.rpkw").string());
    CHECK(result.exit_code == 3);
}

TEST_CASE("fuse reports equivalence and exits 0 on a rep-block graph") {
    const auto dir = scratch_dir();
    write_file(dir / "rep.json", kRepConfig);
    REQUIRE(run_cli("build --config " + (dir / "rep.json").string() + " --graph-out " +
                    (dir / "rep_g.json").string() + " --weights-out " +
                    (dir / "rep_w.rpkw").string())
                .exit_code == 0);

    const RunResult fuse = run_cli(
        "fuse --graph " + (dir / "rep_g.json").string() + " --weights " +
        (dir / "rep_w.rpkw").string() + " --graph-out " + (dir / "fused_g.json").string() +
        " --weights-out " + (dir / "fused_w.rpkw").string() + " --input-size 16 --report " +
        (dir / "fuse_report.json").string());
    CHECK(fuse.exit_code == 0);
    CHECK(fuse.output.find("PASS") != std::string::npos);
    CHECK(slurp(dir / "fuse_report.json").find("\"pass\": true") != std::string::npos);
}

TEST_CASE("fuse on a graph without rep blocks still folds batch norms and passes") {
    const auto dir = scratch_dir();
    write_file(dir / "elan2.json", kElanConfig);
    REQUIRE(run_cli("build --config " + (dir / "elan2.json").string() + " --graph-out " +
                    (dir / "plain_g.json").string() + " --weights-out " +
                    (dir / "plain_w.rpkw").string())
                .exit_code == 0);
    const RunResult fuse =
        run_cli("fuse --graph " + (dir / "plain_g.json").string() + " --weights " +
                (dir / "plain_w.rpkw").string() + " --input-size 16");
    CHECK(fuse.exit_code == 0);
}

TEST_CASE("corrupted weight containers exit 2") {
    const auto dir = scratch_dir();
    write_file(dir / "rep2.json", kRepConfig);
    REQUIRE(run_cli("build --config " + (dir / "rep2.json").string() + " --graph-out " +
                    (dir / "ok_g.json").string() + " --weights-out " +
                    (dir / "ok_w.rpkw").string())
                .exit_code == 0);
    std::string bytes = slurp(dir / "ok_w.rpkw");
    bytes[0] = 'X';  // break the magic
    write_file(dir / "broken.rpkw", bytes);
    const RunResult fuse = run_cli("fuse --graph " + (dir / "ok_g.json").string() +
                                   " --weights " + (dir / "broken.rpkw").string());
    CHECK(fuse.exit_code == 2);
}

TEST_CASE("missing files exit 2") {
    const RunResult result = run_cli("plan --graph /nonexistent/graph.json");
    CHECK(result.exit_code == 2);
}

TEST_CASE("check-equiv flags weight mismatches with exit 4") {
    const auto dir = scratch_dir();
    write_file(dir / "elan3.json", kElanConfig);
    REQUIRE(run_cli("build --config " + (dir / "elan3.json").string() + " --graph-out " +
                    (dir / "a_g.json").string() + " --weights-out " + (dir / "a_w.rpkw").string())
                .exit_code == 0);
    write_file(dir / "elan4.json", std::string(kElanConfig).replace(
                                       std::string(kElanConfig).find("42"), 2, "43"));
    REQUIRE(run_cli("build --config " + (dir / "elan4.json").string() + " --graph-out " +
                    (dir / "b_g.json").string() + " --weights-out " + (dir / "b_w.rpkw").string())
                .exit_code == 0);

    const RunResult same = run_cli("check-equiv --graph-a " + (dir / "a_g.json").string() +
                                   " --weights-a " + (dir / "a_w.rpkw").string() +
                                   " --graph-b " + (dir / "a_g.json").string() +
                                   " --weights-b " + (dir / "a_w.rpkw").string() +
                                   " --input-size 8");
    CHECK(same.exit_code == 0);

    const RunResult differ = run_cli("check-equiv --graph-a " + (dir / "a_g.json").string() +
                                     " --weights-a " + (dir / "a_w.rpkw").string() +
                                     " --graph-b " + (dir / "b_g.json").string() +
                                     " --weights-b " + (dir / "b_w.rpkw").string() +
                                     " --input-size 8");
    CHECK(differ.exit_code == 4);
}

TEST_CASE("scale emits ratio columns and a machine-readable report") {
    const auto dir = scratch_dir();
    write_file(dir / "scale_base.json", R"({
        "block": "elan", "in_channels": 64, "branch_width": 32,
        "stack_depth": 2, "transition_out": 64 })");
    const RunResult result = run_cli(
        "scale --config " + (dir / "scale_base.json").string() +
        " --mode compound --depth 1.5 --width 1.25 --out " + (dir / "scale.json").string());
    CHECK(result.exit_code == 0);
    CHECK(result.output.find("transition out/in") != std::string::npos);
    CHECK(slurp(dir / "scale.json").find("\"ratio_induced\"") != std::string::npos);

    const RunResult bad = run_cli("scale --config " + (dir / "scale_base.json").string() +
                                  " --mode compound --depth -1 --width 1");
    CHECK(bad.exit_code == 3);
}

TEST_CASE("scale handles eelan configs and keeps the group parameters") {
    const auto dir = scratch_dir();
    write_file(dir / "scale_eelan.json", R"({
        "block": "eelan", "in_channels": 64, "branch_width": 32,
        "stack_depth": 2, "transition_out": 64, "groups": 2, "multiplier": 2 })");
    const RunResult result = run_cli("scale --config " + (dir / "scale_eelan.json").string() +
                                     " --mode depth-only --depth 2.0");
    CHECK(result.exit_code == 0);
    CHECK(result.output.find("[drift]") != std::string::npos);
}

TEST_CASE("count reports the analytic parameter total for a canonical conv") {
    const auto dir = scratch_dir();
    // single conv graph written directly in the text format
    write_file(dir / "conv_g.json", R"({
  "magic": "repkit-graph",
  "version": 1,
  "nodes": [
    {"id": 0, "kind": "input", "name": "x", "channels": 3},
    {"id": 1, "kind": "conv", "in": 3, "out": 16, "groups": 1,
     "kernel": [3, 3], "stride": [1, 1], "padding": [1, 1]},
    {"id": 2, "kind": "output", "name": "y"}
  ],
  "edges": [[0, 0, 1, 0], [1, 0, 2, 0]]
}
)");
    const RunResult result = run_cli("count --graph " + (dir / "conv_g.json").string() +
                                     " --input-size 32");
    CHECK(result.exit_code == 0);
    CHECK(result.output.find("448") != std::string::npos);
    CHECK(result.output.find("442368") != std::string::npos);
}

TEST_CASE("assign on a zero-gt scenario writes an empty target file and exits 0") {
    const auto dir = scratch_dir();
    write_file(dir / "empty_scenario.json", R"({
        "image_size": [64, 64], "num_classes": 2, "seed": 3,
        "levels": [ { "stride": 8, "anchors": [[16, 16], [32, 24]] } ],
        "gts": [] })");
    const RunResult result = run_cli("assign --scenario " +
                                     (dir / "empty_scenario.json").string() + " --out " +
                                     (dir / "targets.txt").string());
    CHECK(result.exit_code == 0);
    const std::string targets = slurp(dir / "targets.txt");
    CHECK(targets.find("positives: 0") != std::string::npos);
}

TEST_CASE("assign produces targets and grid dumps for a populated scenario") {
    const auto dir = scratch_dir();
    write_file(dir / "scenario.json", R"({
        "image_size": [64, 64], "num_classes": 2, "seed": 3,
        "levels": [ { "stride": 8, "anchors": [[16, 16], [30, 26]] } ],
        "gts": [ { "class": 0, "cx": 0.5, "cy": 0.5, "w": 0.3, "h": 0.3 } ] })");
    const RunResult result = run_cli(
        "assign --scenario " + (dir / "scenario.json").string() + " --out " +
        (dir / "targets2.txt").string() + " --grids-out " + (dir / "grids.txt").string());
    CHECK(result.exit_code == 0);
    CHECK(result.output.find("fine") != std::string::npos);
    CHECK(slurp(dir / "grids.txt").find("level 0 stride 8") != std::string::npos);

    // identical runs produce identical bytes
    const RunResult again = run_cli(
        "assign --scenario " + (dir / "scenario.json").string() + " --out " +
        (dir / "targets3.txt").string() + " --grids-out " + (dir / "grids2.txt").string());
    REQUIRE(again.exit_code == 0);
    CHECK(slurp(dir / "targets2.txt") == slurp(dir / "targets3.txt"));
    CHECK(slurp(dir / "grids.txt") == slurp(dir / "grids2.txt"));
}

TEST_CASE("bad flags exit 2") {
    CHECK(run_cli("definitely-not-a-subcommand").exit_code == 2);
    CHECK(run_cli("scale --mode sideways").exit_code == 2);
}

TEST_CASE("plan prints one verdict per 3x3 conv") {
    const auto dir = scratch_dir();
    write_file(dir / "rep3.json", kRepConfig);
    REQUIRE(run_cli("build --config " + (dir / "rep3.json").string() + " --graph-out " +
                    (dir / "plan_g.json").string() + " --weights-out " +
                    (dir / "plan_w.rpkw").string())
                .exit_code == 0);
    const RunResult result = run_cli("plan --graph " + (dir / "plan_g.json").string());
    CHECK(result.exit_code == 0);
    CHECK(result.output.find("RepConv") != std::string::npos);
}
