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

#include "repkit/blocks.hpp"

#include <set>

#include "repkit/error.hpp"

namespace repkit {

void ELANConfig::check() const {
    if (in_channels < 1) fail_domain(strf("elan in_channels %d must be >= 1", in_channels));
    if (branch_width < 1) fail_domain(strf("elan branch_width %d must be >= 1", branch_width));
    if (stack_depth < 0) fail_domain(strf("elan stack_depth %d must be >= 0", stack_depth));
    if (transition_out < 1) {
        fail_domain(strf("elan transition_out %d must be >= 1", transition_out));
    }
}

void EELANConfig::check() const {
    elan.check();
    if (groups < 1) fail_domain(strf("eelan groups %d must be >= 1", groups));
    if (multiplier < 1) fail_domain(strf("eelan multiplier %d must be >= 1", multiplier));
    if (elan.branch_width % groups != 0) {
        fail_domain(strf("eelan branch_width %d not divisible by groups %d", elan.branch_width,
                         groups));
    }
}

namespace {

ConvSpec make_conv(int in_c, int out_c, int k, int stride, int pad, int groups = 1) {
    ConvSpec conv;
    conv.in_channels = in_c;
    conv.out_channels = out_c;
    conv.groups = groups;
    conv.kh = conv.kw = k;
    conv.sh = conv.sw = stride;
    conv.ph = conv.pw = pad;
    conv.weight.assign(size_t(conv.weight_count()), 0.0f);
    conv.bias.assign(size_t(out_c), 0.0f);
    return conv;
}

BatchNormSpec make_bn(int channels) {
    BatchNormSpec bn = BatchNormSpec::neutral(channels);
    bn.eps = 1e-5f;
    return bn;
}

// conv -> bn -> act chain; returns the activation node
NodeId conv_bn_act(Graph& g, NodeId src, ConvSpec conv, Activation act,
                   const std::string& annotation, int src_port = 0) {
    const int out_c = conv.out_channels;
    NodeId conv_id = g.add(std::move(conv), annotation);
    g.connect(src, conv_id, 0, src_port);
    NodeId bn_id = g.add(make_bn(out_c));
    g.connect(conv_id, bn_id);
    NodeId act_id = g.add(ActivationNode{act});
    g.connect(bn_id, act_id);
    return act_id;
}

NodeId rep_bn_act(Graph& g, NodeId src, RepBlockSpec rep, Activation act,
                  const std::string& annotation) {
    NodeId rep_id = g.add(std::move(rep), annotation);
    g.connect(src, rep_id);
    NodeId act_id = g.add(ActivationNode{act});
    g.connect(rep_id, act_id);
    return act_id;
}

RepBlockSpec neutral_rep(int channels, bool identity) {
    RepBlockSpec rep = RepBlockSpec::zeros(channels, channels, 1, identity);
    rep.bn3x3 = make_bn(channels);
    rep.bn1x1 = make_bn(channels);
    if (identity) rep.identity_bn = make_bn(channels);
    return rep;
}

}  // namespace

Graph build_elan(const ELANConfig& cfg) {
    cfg.check();
    const int c = cfg.branch_width;
    Graph g;
    NodeId input = g.add(InputNode{"x", cfg.in_channels});

    NodeId stem1 = conv_bn_act(g, input, make_conv(cfg.in_channels, c, 1, 1, 0), cfg.act,
                               "computational-block");
    NodeId stem2 = conv_bn_act(g, input, make_conv(cfg.in_channels, c, 1, 1, 0), cfg.act,
                               "computational-block");

    std::vector<NodeId> taps{stem1, stem2};
    NodeId prev = stem2;
    for (int unit = 0; unit < cfg.stack_depth; ++unit) {
        NodeId a = conv_bn_act(g, prev, make_conv(c, c, 3, 1, 1), cfg.act, "computational-block");
        NodeId b = conv_bn_act(g, a, make_conv(c, c, 3, 1, 1), cfg.act, "computational-block");
        taps.push_back(b);
        prev = b;
    }

    NodeId concat = g.add(ConcatNode{});
    for (size_t i = 0; i < taps.size(); ++i) g.connect(taps[i], concat, int(i));

    NodeId transition = conv_bn_act(g, concat, make_conv(cfg.concat_width(), cfg.transition_out,
                                                         1, 1, 0),
                                    cfg.act, "transition");
    NodeId output = g.add(OutputNode{"y"});
    g.connect(transition, output);
    return g;
}

Graph build_eelan(const EELANConfig& cfg) {
    cfg.check();
    const int c = cfg.elan.branch_width;
    const int g_count = cfg.groups;
    const int expanded = g_count * cfg.multiplier * c;  // cardinality x per-group multiplier
    const int merged_in = g_count * c;                  // split/add restores c per tap

    Graph g;
    NodeId input = g.add(InputNode{"x", cfg.elan.in_channels});

    NodeId stem1 = conv_bn_act(g, input, make_conv(cfg.elan.in_channels, c, 1, 1, 0),
                               cfg.elan.act, "computational-block");
    NodeId stem2 = conv_bn_act(g, input, make_conv(cfg.elan.in_channels, c, 1, 1, 0),
                               cfg.elan.act, "computational-block");

    std::vector<NodeId> taps{stem1, stem2};
    NodeId prev = stem2;
    for (int unit = 0; unit < cfg.elan.stack_depth; ++unit) {
        NodeId a = conv_bn_act(g, prev, make_conv(c, expanded, 3, 1, 1, g_count), cfg.elan.act,
                               "computational-block");
        NodeId b = conv_bn_act(g, a, make_conv(expanded, merged_in, 3, 1, 1, g_count),
                               cfg.elan.act, "computational-block");

        NodeId shuffle = g.add(ShuffleNode{g_count});
        g.connect(b, shuffle);
        NodeId split = g.add(SplitNode{g_count});
        g.connect(shuffle, split);
        NodeId merge = g.add(AddNode{});
        for (int p = 0; p < g_count; ++p) g.connect(split, merge, p, p);

        taps.push_back(merge);
        prev = merge;
    }

    NodeId concat = g.add(ConcatNode{});
    for (size_t i = 0; i < taps.size(); ++i) g.connect(taps[i], concat, int(i));

    NodeId transition = conv_bn_act(g, concat, make_conv(cfg.elan.concat_width(),
                                                         cfg.elan.transition_out, 1, 1, 0),
                                    cfg.elan.act, "transition");
    NodeId output = g.add(OutputNode{"y"});
    g.connect(transition, output);
    return g;
}

ELANConfig planned_rep_elan_config() {
    ELANConfig cfg;
    cfg.in_channels = 64;
    cfg.branch_width = 32;
    cfg.stack_depth = 3;
    cfg.transition_out = 64;
    cfg.act = Activation::silu;
    return cfg;
}

Graph build_planned_rep_elan(RepElanVariant variant) {
    const ELANConfig cfg = planned_rep_elan_config();
    const int c = cfg.branch_width;

    std::set<int> rep_units;  // which unit taps carry RepBlocks, 0-based
    switch (variant) {
        case RepElanVariant::base: break;
        case RepElanVariant::a: rep_units = {2}; break;
        case RepElanVariant::b: rep_units = {1, 2}; break;
        case RepElanVariant::c: rep_units = {0, 1, 2}; break;
        case RepElanVariant::d: rep_units = {0}; break;
        case RepElanVariant::e: rep_units = {0, 2}; break;
    }

    Graph g;
    NodeId input = g.add(InputNode{"x", cfg.in_channels});
    NodeId stem1 = conv_bn_act(g, input, make_conv(cfg.in_channels, c, 1, 1, 0), cfg.act,
                               "computational-block");
    NodeId stem2 = conv_bn_act(g, input, make_conv(cfg.in_channels, c, 1, 1, 0), cfg.act,
                               "computational-block");

    std::vector<NodeId> taps{stem1, stem2};
    NodeId prev = stem2;
    for (int unit = 0; unit < cfg.stack_depth; ++unit) {
        NodeId a = conv_bn_act(g, prev, make_conv(c, c, 3, 1, 1), cfg.act, "computational-block");
        NodeId b;
        if (rep_units.count(unit)) {
            // the tap conv feeds the concat: identity branch forbidden
            b = rep_bn_act(g, a, neutral_rep(c, /*identity=*/false), cfg.act,
                           "computational-block");
        } else {
            b = conv_bn_act(g, a, make_conv(c, c, 3, 1, 1), cfg.act, "computational-block");
        }
        taps.push_back(b);
        prev = b;
    }

    NodeId concat = g.add(ConcatNode{});
    for (size_t i = 0; i < taps.size(); ++i) g.connect(taps[i], concat, int(i));
    NodeId transition = conv_bn_act(g, concat, make_conv(cfg.concat_width(), cfg.transition_out,
                                                         1, 1, 0),
                                    cfg.act, "transition");
    NodeId output = g.add(OutputNode{"y"});
    g.connect(transition, output);
    return g;
}

Graph build_csp_dark_block(CspKind kind, int channels, bool rep) {
    if (channels < 2 || channels % 2 != 0) {
        fail_domain(strf("csp block channels %d must be even and >= 2", channels));
    }
    const int half = channels / 2;
    const Activation act = Activation::silu;

    Graph g;
    NodeId input = g.add(InputNode{"x", channels});

    NodeId shortcut = conv_bn_act(g, input, make_conv(channels, half, 1, 1, 0), act,
                                  "computational-block");
    NodeId dense = conv_bn_act(g, input, make_conv(channels, half, 1, 1, 0), act,
                               "computational-block");

    // residual unit: dark is 1x1 -> 3x3 (the 3x3 meets the add), reversed
    // is 3x3 -> 1x1 (the 3x3 sits at the unit input)
    NodeId unit_out;
    if (kind == CspKind::dark) {
        NodeId first = conv_bn_act(g, dense, make_conv(half, half, 1, 1, 0), act,
                                   "computational-block");
        NodeId second;
        if (rep) {
            second = rep_bn_act(g, first, neutral_rep(half, /*identity=*/false), act,
                                "computational-block");
        } else {
            second = conv_bn_act(g, first, make_conv(half, half, 3, 1, 1), act,
                                 "computational-block");
        }
        unit_out = second;
    } else {
        NodeId first;
        if (rep) {
            first = rep_bn_act(g, dense, neutral_rep(half, /*identity=*/true), act,
                               "computational-block");
        } else {
            first = conv_bn_act(g, dense, make_conv(half, half, 3, 1, 1), act,
                                "computational-block");
        }
        NodeId second = conv_bn_act(g, first, make_conv(half, half, 1, 1, 0), act,
                                    "computational-block");
        unit_out = second;
    }

    NodeId residual = g.add(AddNode{});
    g.connect(unit_out, residual, 0);
    g.connect(dense, residual, 1);

    NodeId concat = g.add(ConcatNode{});
    g.connect(shortcut, concat, 0);
    g.connect(residual, concat, 1);

    NodeId transition = conv_bn_act(g, concat, make_conv(channels, channels, 1, 1, 0), act,
                                    "transition");
    NodeId output = g.add(OutputNode{"y"});
    g.connect(transition, output);
    return g;
}

}  // namespace repkit
