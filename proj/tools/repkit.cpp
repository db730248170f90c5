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

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "repkit/assign.hpp"
#include "repkit/blocks.hpp"
#include "repkit/error.hpp"
#include "repkit/prng.hpp"
#include "repkit/reparam.hpp"
#include "repkit/scaling.hpp"
#include "repkit/serialize.hpp"

namespace {

using repkit::Error;
using ordered_json = nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitDomain = 3;
constexpr int kExitVerify = 4;
constexpr double kEquivTolerance = 1e-4;
constexpr uint64_t kEvalSeed = 0x5eed0001;

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) repkit::fail_input(repkit::strf("cannot open \"%s\" for writing", path.c_str()));
    out.write(text.data(), std::streamsize(text.size()));
}

// seeded random activations for every declared graph input
std::map<std::string, repkit::Tensor> random_inputs(const repkit::Graph& g, int hw,
                                                    uint64_t seed) {
    repkit::Xoshiro256 rng(seed);
    std::map<std::string, repkit::Tensor> inputs;
    for (const repkit::Node& n : g.nodes) {
        if (const auto* in = std::get_if<repkit::InputNode>(&n.kind)) {
            repkit::Tensor t(1, in->channels, hw, hw);
            for (float& v : t.data) v = rng.uniform_f(-1.0f, 1.0f);
            inputs[in->name] = std::move(t);
        }
    }
    return inputs;
}

struct Deviation {
    double max_abs = 0.0;
    double max_rel = 0.0;
};

Deviation compare_outputs(const std::map<std::string, repkit::Tensor>& a,
                          const std::map<std::string, repkit::Tensor>& b) {
    Deviation dev;
    for (const auto& [name, ta] : a) {
        const auto it = b.find(name);
        if (it == b.end() || !it->second.same_shape(ta)) {
            repkit::fail_domain(repkit::strf("output \"%s\" missing or shaped differently",
                                             name.c_str()));
        }
        for (size_t i = 0; i < ta.data.size(); ++i) {
            const double va = double(ta.data[i]);
            const double vb = double(it->second.data[i]);
            const double abs_dev = std::abs(va - vb);
            dev.max_abs = std::max(dev.max_abs, abs_dev);
            const double denom = std::max(std::abs(va), std::abs(vb));
            if (denom > 1e-12) dev.max_rel = std::max(dev.max_rel, abs_dev / denom);
        }
    }
    return dev;
}

Deviation equivalence_check(const repkit::Graph& a, const repkit::Graph& b, int rounds, int hw) {
    Deviation worst;
    for (int round = 0; round < rounds; ++round) {
        const auto inputs = random_inputs(a, hw, kEvalSeed + uint64_t(round));
        const Deviation dev = compare_outputs(repkit::eval_graph(a, inputs),
                                              repkit::eval_graph(b, inputs));
        worst.max_abs = std::max(worst.max_abs, dev.max_abs);
        worst.max_rel = std::max(worst.max_rel, dev.max_rel);
    }
    return worst;
}

// ---- build ----------------------------------------------------------------

int cmd_build(const std::string& config_path, const std::string& graph_out,
              const std::string& weights_out) {
    const repkit::ModelConfig cfg = repkit::load_model_config(config_path);
    repkit::Graph g = repkit::build_from_config(cfg);
    repkit::randomize_weights(g, cfg.seed);
    repkit::save_graph(graph_out, g);
    repkit::save_weights(weights_out, repkit::collect_weights(g));
    const repkit::ParamReport params = repkit::count_params(g);
    printf("built %zu nodes, %lld parameters (seed %" PRIu64 ")\n", g.nodes.size(),
           (long long)params.total, cfg.seed);
    return kExitOk;
}

// ---- plan -----------------------------------------------------------------

int64_t expanded_delta(const repkit::Graph& g, const repkit::PlannedPlacement& p) {
    const repkit::Node* node = g.find(p.node);
    const auto* conv = std::get_if<repkit::ConvSpec>(&node->kind);
    if (!conv || p.verdict == repkit::Verdict::no_replacement) return 0;
    const bool identity = p.verdict == repkit::Verdict::rep_conv &&
                          conv->in_channels == conv->out_channels && conv->sh == 1;
    const repkit::RepBlockSpec rep = repkit::RepBlockSpec::zeros(
        conv->in_channels, conv->out_channels, conv->sh, identity);
    return rep.param_count() - conv->param_count();
}

int cmd_plan(const std::string& graph_path, const std::string& out_path) {
    const repkit::Graph g = repkit::load_graph(graph_path);
    const auto placements = repkit::plan_reparam(g);

    std::string table = repkit::strf("%-6s %-14s %-14s %12s\n", "node", "verdict", "rule",
                                     "param-delta");
    ordered_json doc;
    ordered_json rows = ordered_json::array();
    for (const auto& p : placements) {
        const int64_t delta = expanded_delta(g, p);
        table += repkit::strf("%-6d %-14s %-14s %+12lld\n", p.node,
                              repkit::to_string(p.verdict).c_str(), p.rule.c_str(),
                              (long long)delta);
        ordered_json row;
        row["node"] = p.node;
        row["verdict"] = repkit::to_string(p.verdict);
        row["rule"] = p.rule;
        row["param_delta"] = delta;
        rows.push_back(std::move(row));
    }
    doc["placements"] = std::move(rows);
    fputs(table.c_str(), stdout);
    if (!out_path.empty()) write_text_file(out_path, doc.dump(2) + "\n");
    return kExitOk;
}

// ---- fuse / check-equiv ----------------------------------------------------

int cmd_fuse(const std::string& graph_path, const std::string& weights_path,
             const std::string& graph_out, const std::string& weights_out,
             const std::string& report_out, int input_size) {
    repkit::Graph g = repkit::load_graph(graph_path);
    repkit::bind_weights(g, repkit::load_weights(weights_path));

    const auto placements = repkit::plan_reparam(g);
    const repkit::Graph fused = repkit::apply_reparam(g, placements, repkit::ReparamMode::fuse);

    const Deviation dev = equivalence_check(g, fused, 8, input_size);
    const int64_t params_before = repkit::count_params(g).total;
    const int64_t params_after = repkit::count_params(fused).total;
    const bool pass = dev.max_abs <= kEquivTolerance;

    if (!graph_out.empty()) repkit::save_graph(graph_out, fused);
    if (!weights_out.empty()) {
        repkit::save_weights(weights_out, repkit::collect_weights(fused));
    }

    std::string report;
    report += repkit::strf("nodes:      %zu -> %zu\n", g.nodes.size(), fused.nodes.size());
    report += repkit::strf("params:     %lld -> %lld\n", (long long)params_before,
                           (long long)params_after);
    report += repkit::strf("eval:       8 seeded inputs, %dx%d\n", input_size, input_size);
    report += repkit::strf("max-abs:    %.3e\n", dev.max_abs);
    report += repkit::strf("max-rel:    %.3e\n", dev.max_rel);
    report += repkit::strf("equivalence: %s (tolerance %.0e)\n", pass ? "PASS" : "FAIL",
                           kEquivTolerance);
    fputs(report.c_str(), stdout);
    if (!report_out.empty()) {
        ordered_json doc;
        doc["nodes_before"] = g.nodes.size();
        doc["nodes_after"] = fused.nodes.size();
        doc["params_before"] = params_before;
        doc["params_after"] = params_after;
        doc["max_abs"] = dev.max_abs;
        doc["max_rel"] = dev.max_rel;
        doc["pass"] = pass;
        write_text_file(report_out, doc.dump(2) + "\n");
    }
    return pass ? kExitOk : kExitVerify;
}

int cmd_check_equiv(const std::string& graph_a, const std::string& weights_a,
                    const std::string& graph_b, const std::string& weights_b, int rounds,
                    int input_size) {
    repkit::Graph a = repkit::load_graph(graph_a);
    repkit::bind_weights(a, repkit::load_weights(weights_a));
    repkit::Graph b = repkit::load_graph(graph_b);
    repkit::bind_weights(b, repkit::load_weights(weights_b));
    const Deviation dev = equivalence_check(a, b, rounds, input_size);
    const bool pass = dev.max_abs <= kEquivTolerance;
    printf("max-abs: %.3e\nmax-rel: %.3e\nequivalence: %s (tolerance %.0e)\n", dev.max_abs,
           dev.max_rel, pass ? "PASS" : "FAIL", kEquivTolerance);
    return pass ? kExitOk : kExitVerify;
}

// ---- scale ------------------------------------------------------------------

int cmd_scale(const std::string& config_path, const std::string& mode_name, double depth,
              double width, int input_size, const std::string& out_path) {
    const repkit::ModelConfig cfg = repkit::load_model_config(config_path);
    const auto* elan = std::get_if<repkit::ELANConfig>(&cfg.block);
    const auto* eelan = std::get_if<repkit::EELANConfig>(&cfg.block);
    if (!elan && !eelan) {
        repkit::fail_domain("scale works on elan and eelan configurations");
    }
    const repkit::ELANConfig base = elan ? *elan : eelan->elan;

    repkit::ELANConfig scaled = base;
    ordered_json doc;
    if (mode_name == "compound") {
        auto [cfg2, plan] = repkit::compound_scale(base, depth, width);
        scaled = cfg2;
        doc["mode"] = "compound";
        doc["depth_factor"] = plan.depth_factor;
        doc["width_factor"] = plan.width_factor;
        doc["induced_width_factor"] = plan.induced_width_factor;
        doc["induced_transition"] = plan.induced_transition;
        doc["ratio_base"] = plan.old_ratio;
        doc["ratio_scaled"] = plan.new_ratio;
        doc["ratio_induced"] = plan.induced_ratio;
        doc["drift_flagged"] = plan.drift.any_flagged();
        printf("induced width factor: %.4f (transition %d -> %d if applied)\n",
               plan.induced_width_factor, plan.old_transition, plan.induced_transition);
    } else {
        const repkit::ScaleMode mode = mode_name == "width-only" ? repkit::ScaleMode::width_only
                                                                 : repkit::ScaleMode::depth_only;
        const double factor = mode == repkit::ScaleMode::width_only ? width : depth;
        auto [cfg2, drift] = repkit::naive_scale(base, mode, factor);
        scaled = cfg2;
        doc["mode"] = mode_name;
        doc["factor"] = factor;
        doc["drift_flagged"] = drift.any_flagged();
        for (const auto& t : drift.transitions) {
            printf("transition in %d -> %d, out %d -> %d, ratio %.4f -> %.4f%s\n", t.in_before,
                   t.in_after, t.out_before, t.out_after, t.ratio_before, t.ratio_after,
                   t.flagged ? "  [drift]" : "");
        }
    }

    repkit::ScalingComparison cmp;
    if (eelan) {
        repkit::EELANConfig scaled_eelan = *eelan;
        scaled_eelan.elan = scaled;
        cmp = repkit::scaling_report(*eelan, scaled_eelan, input_size, input_size);
    } else {
        cmp = repkit::scaling_report(base, scaled, input_size, input_size);
    }
    fputs(cmp.to_text().c_str(), stdout);

    if (!out_path.empty()) {
        ordered_json rows = ordered_json::array();
        for (const auto& row : cmp.rows) {
            ordered_json r;
            r["quantity"] = row.label;
            r["base"] = row.value_base;
            r["scaled"] = row.value_scaled;
            rows.push_back(std::move(r));
        }
        doc["rows"] = std::move(rows);
        doc["transition_ratio_base"] = cmp.ratio_base;
        doc["transition_ratio_scaled"] = cmp.ratio_scaled;
        write_text_file(out_path, doc.dump(2) + "\n");
    }
    return kExitOk;
}

// ---- count ------------------------------------------------------------------

int cmd_count(const std::string& graph_path, int input_size, const std::string& out_path) {
    const repkit::Graph g = repkit::load_graph(graph_path);
    const repkit::ValidationReport vr = repkit::validate(g);
    if (!vr.ok()) {
        repkit::fail_domain("graph does not validate:\n" + vr.to_string());
    }
    const repkit::ParamReport params = repkit::count_params(g);
    const repkit::FlopReport flops = repkit::count_flops(g, input_size, input_size);

    std::map<repkit::NodeId, int64_t> macs;
    for (const auto& e : flops.per_node) macs[e.node] = e.macs;

    printf("%-6s %14s %16s\n", "node", "params", "macs");
    for (const auto& [id, count] : params.per_node) {
        printf("%-6d %14lld %16lld\n", id, (long long)count, (long long)macs[id]);
    }
    printf("%-6s %14lld %16lld  (flops %lld)\n", "total", (long long)params.total,
           (long long)flops.total_macs, (long long)flops.total_flops);

    if (!out_path.empty()) {
        ordered_json doc;
        ordered_json rows = ordered_json::array();
        for (const auto& [id, count] : params.per_node) {
            ordered_json row;
            row["node"] = id;
            row["params"] = count;
            row["macs"] = macs[id];
            rows.push_back(std::move(row));
        }
        doc["nodes"] = std::move(rows);
        doc["total_params"] = params.total;
        doc["total_macs"] = flops.total_macs;
        doc["total_flops"] = flops.total_flops;
        write_text_file(out_path, doc.dump(2) + "\n");
    }
    return kExitOk;
}

// ---- assign -----------------------------------------------------------------

int cmd_assign(const std::string& scenario_path, const std::string& out_path,
               const std::string& grids_out) {
    const repkit::Scenario sc = repkit::load_scenario(scenario_path);
    const repkit::LeadAuxTargets targets =
        repkit::assign_coarse_to_fine(sc.levels, sc.gts, sc.image, sc.assign);
    const repkit::AssignmentResult aux =
        repkit::apply_objectness_bound(targets.aux, sc.assign.bound_radius);

    auto record_lines = [](const repkit::AssignmentResult& result, const char* head) {
        std::string text = repkit::strf("# %s\n%-5s %-6s %-4s %-4s %-3s %-11s %-9s %-5s %-9s\n",
                                        head, "level", "anchor", "gy", "gx", "gt", "provenance",
                                        "obj", "class", "bound");
        int positives = 0;
        for (const auto& level : result.per_level) {
            for (const auto& rec : level) {
                text += repkit::strf("%-5d %-6d %-4d %-4d %-3d %-11s %-9.5f %-5d %-9.5f\n",
                                     rec.level, rec.anchor, rec.gy, rec.gx, rec.gt_index,
                                     rec.provenance == repkit::Provenance::fine ? "fine"
                                                                                : "coarse-only",
                                     double(rec.objectness), rec.class_target,
                                     double(rec.upper_bound));
                ++positives;
            }
        }
        text += repkit::strf("# positives: %d\n", positives);
        return text;
    };

    std::string text = record_lines(targets.lead, "lead targets (fine)");
    text += record_lines(aux, "aux targets (coarse, bounded)");
    fputs(text.c_str(), stdout);
    if (!out_path.empty()) write_text_file(out_path, text);

    if (!grids_out.empty()) {
        // numeric objectness-target grid per level: max target per cell
        std::string dump;
        for (size_t level = 0; level < sc.levels.size(); ++level) {
            const auto& grid = sc.levels[level];
            std::vector<double> cellmax(size_t(grid.grid_h) * grid.grid_w, 0.0);
            for (const auto& rec : aux.per_level[level]) {
                auto& slot = cellmax[size_t(rec.gy) * grid.grid_w + rec.gx];
                slot = std::max(slot, double(rec.objectness));
            }
            dump += repkit::strf("level %zu stride %g grid %dx%d\n", level, grid.stride,
                                 grid.grid_h, grid.grid_w);
            for (int gy = 0; gy < grid.grid_h; ++gy) {
                for (int gx = 0; gx < grid.grid_w; ++gx) {
                    dump += repkit::strf(gx + 1 == grid.grid_w ? "%.4f" : "%.4f ",
                                         cellmax[size_t(gy) * grid.grid_w + gx]);
                }
                dump += "\n";
            }
        }
        write_text_file(grids_out, dump);
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"repkit: re-parameterizable block workbench"};
    app.require_subcommand(1);

    // build
    auto* build = app.add_subcommand("build", "build a block from a config file");
    std::string build_config, build_graph = "graph.json", build_weights = "weights.rpkw";
    build->add_option("--config", build_config, "model config file")->required();
    build->add_option("--graph-out", build_graph, "output graph file");
    build->add_option("--weights-out", build_weights, "output weight container");

    // plan
    auto* plan = app.add_subcommand("plan", "re-parameterization placement report");
    std::string plan_graph, plan_out;
    plan->add_option("--graph", plan_graph, "graph file")->required();
    plan->add_option("--out", plan_out, "machine-readable report path");

    // fuse
    auto* fuse = app.add_subcommand("fuse", "fuse rep blocks and fold batch norms");
    std::string fuse_graph, fuse_weights, fuse_graph_out, fuse_weights_out, fuse_report;
    int fuse_size = 32;
    fuse->add_option("--graph", fuse_graph, "graph file")->required();
    fuse->add_option("--weights", fuse_weights, "weight container")->required();
    fuse->add_option("--graph-out", fuse_graph_out, "fused graph path");
    fuse->add_option("--weights-out", fuse_weights_out, "fused weights path");
    fuse->add_option("--report", fuse_report, "machine-readable report path");
    fuse->add_option("--input-size", fuse_size, "spatial size of the equivalence inputs");

    // scale
    auto* scale = app.add_subcommand("scale", "scaling plan and comparison report");
    std::string scale_config, scale_mode = "compound", scale_out;
    double scale_depth = 1.0, scale_width = 1.0;
    int scale_size = 32;
    scale->add_option("--config", scale_config, "model config file (elan/eelan)")->required();
    scale->add_option("--mode", scale_mode, "compound | width-only | depth-only")
        ->check(CLI::IsMember({"compound", "width-only", "depth-only"}));
    scale->add_option("--depth", scale_depth, "depth factor");
    scale->add_option("--width", scale_width, "width factor");
    scale->add_option("--input-size", scale_size, "spatial size for MAC accounting");
    scale->add_option("--out", scale_out, "machine-readable report path");

    // count
    auto* count = app.add_subcommand("count", "parameter and MAC accounting");
    std::string count_graph, count_out;
    int count_size = 32;
    count->add_option("--graph", count_graph, "graph file")->required();
    count->add_option("--input-size", count_size, "spatial size for MAC accounting");
    count->add_option("--out", count_out, "machine-readable report path");

    // assign
    auto* assign = app.add_subcommand("assign", "coarse-to-fine label assignment");
    std::string assign_scenario, assign_out, assign_grids;
    assign->add_option("--scenario", assign_scenario, "scenario file")->required();
    assign->add_option("--out", assign_out, "targets text file");
    assign->add_option("--grids-out", assign_grids, "objectness-target grid dump");

    // check-equiv
    auto* check = app.add_subcommand("check-equiv", "evaluate two models on shared inputs");
    std::string ce_graph_a, ce_weights_a, ce_graph_b, ce_weights_b;
    int ce_rounds = 8, ce_size = 32;
    check->add_option("--graph-a", ce_graph_a)->required();
    check->add_option("--weights-a", ce_weights_a)->required();
    check->add_option("--graph-b", ce_graph_b)->required();
    check->add_option("--weights-b", ce_weights_b)->required();
    check->add_option("--rounds", ce_rounds, "number of random inputs");
    check->add_option("--input-size", ce_size, "spatial size of the inputs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInput;
    }

    try {
        if (build->parsed()) return cmd_build(build_config, build_graph, build_weights);
        if (plan->parsed()) return cmd_plan(plan_graph, plan_out);
        if (fuse->parsed()) {
            return cmd_fuse(fuse_graph, fuse_weights, fuse_graph_out, fuse_weights_out,
                            fuse_report, fuse_size);
        }
        if (scale->parsed()) {
            return cmd_scale(scale_config, scale_mode, scale_depth, scale_width, scale_size,
                             scale_out);
        }
        if (count->parsed()) return cmd_count(count_graph, count_size, count_out);
        if (assign->parsed()) return cmd_assign(assign_scenario, assign_out, assign_grids);
        if (check->parsed()) {
            return cmd_check_equiv(ce_graph_a, ce_weights_a, ce_graph_b, ce_weights_b, ce_rounds,
                                   ce_size);
        }
    } catch (const Error& e) {
        fprintf(stderr, "error: %s\n", e.what());
        return e.kind() == Error::Kind::input ? kExitInput : kExitDomain;
    } catch (const std::exception& e) {
        fprintf(stderr, "error: %s\n", e.what());
        return kExitInput;
    }
    return kExitOk;
}
