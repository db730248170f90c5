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

#include "repkit/serialize.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "repkit/error.hpp"
#include "repkit/prng.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary containers assume a little-endian host");

namespace repkit {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr uint32_t kFormatVersion = 1;

void write_bytes(std::ostream& out, const void* data, size_t len) {
    out.write(static_cast<const char*>(data), std::streamsize(len));
}

void read_bytes(std::istream& in, void* data, size_t len, const char* what) {
    in.read(static_cast<char*>(data), std::streamsize(len));
    if (size_t(in.gcount()) != len) fail_input(strf("truncated stream while reading %s", what));
}

void write_u32(std::ostream& out, uint32_t v) { write_bytes(out, &v, 4); }
void write_u16(std::ostream& out, uint16_t v) { write_bytes(out, &v, 2); }
void write_u8(std::ostream& out, uint8_t v) { write_bytes(out, &v, 1); }

uint32_t read_u32(std::istream& in, const char* what) {
    uint32_t v = 0;
    read_bytes(in, &v, 4, what);
    return v;
}
uint16_t read_u16(std::istream& in, const char* what) {
    uint16_t v = 0;
    read_bytes(in, &v, 2, what);
    return v;
}
uint8_t read_u8(std::istream& in, const char* what) {
    uint8_t v = 0;
    read_bytes(in, &v, 1, what);
    return v;
}

void expect_magic(std::istream& in, const char* magic) {
    char buf[4];
    read_bytes(in, buf, 4, "magic");
    if (std::memcmp(buf, magic, 4) != 0) {
        fail_input(strf("bad magic: expected \"%s\", found \"%.4s\"", magic, buf));
    }
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail_input(strf("cannot open \"%s\" for writing", path.c_str()));
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_input(strf("cannot open \"%s\"", path.c_str()));
    return in;
}

std::string read_file(const std::string& path) {
    std::ifstream in = open_in(path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

// ---- RPKT tensors --------------------------------------------------------

void write_tensor(std::ostream& out, const Tensor& t) {
    write_bytes(out, "RPKT", 4);
    write_u32(out, kFormatVersion);
    write_u32(out, uint32_t(t.n));
    write_u32(out, uint32_t(t.c));
    write_u32(out, uint32_t(t.h));
    write_u32(out, uint32_t(t.w));
    write_bytes(out, t.data.data(), t.data.size() * sizeof(float));
}

Tensor read_tensor(std::istream& in) {
    expect_magic(in, "RPKT");
    const uint32_t version = read_u32(in, "version");
    if (version != kFormatVersion) fail_input(strf("unsupported tensor version %u", version));
    const uint32_t n = read_u32(in, "dims");
    const uint32_t c = read_u32(in, "dims");
    const uint32_t h = read_u32(in, "dims");
    const uint32_t w = read_u32(in, "dims");
    if (n < 1 || c < 1 || h < 1 || w < 1 || uint64_t(n) * c * h * w > (1ULL << 31)) {
        fail_input(strf("tensor dims (%u, %u, %u, %u) out of range", n, c, h, w));
    }
    Tensor t(static_cast<int>(n), static_cast<int>(c), static_cast<int>(h),
             static_cast<int>(w));
    read_bytes(in, t.data.data(), t.data.size() * sizeof(float), "tensor payload");
    return t;
}

void save_tensor(const std::string& path, const Tensor& t) {
    std::ofstream out = open_out(path);
    write_tensor(out, t);
}

Tensor load_tensor(const std::string& path) {
    std::ifstream in = open_in(path);
    return read_tensor(in);
}

// ---- RPKW weights ----------------------------------------------------------

void write_weights(std::ostream& out, const WeightSet& ws) {
    write_bytes(out, "RPKW", 4);
    write_u32(out, kFormatVersion);
    write_u32(out, uint32_t(ws.size()));
    for (const WeightRecord& rec : ws) {
        if (rec.name.size() > 0xffff) fail_input("weight record name too long");
        write_u16(out, uint16_t(rec.name.size()));
        write_bytes(out, rec.name.data(), rec.name.size());
        write_u8(out, uint8_t(rec.dims.size()));
        uint64_t count = 1;
        for (uint32_t d : rec.dims) {
            write_u32(out, d);
            count *= d;
        }
        if (count != rec.data.size()) {
            fail_input(strf("record \"%s\" payload %zu does not match dims product %llu",
                            rec.name.c_str(), rec.data.size(), (unsigned long long)count));
        }
        write_bytes(out, rec.data.data(), rec.data.size() * sizeof(float));
    }
}

WeightSet read_weights(std::istream& in) {
    expect_magic(in, "RPKW");
    const uint32_t version = read_u32(in, "version");
    if (version != kFormatVersion) fail_input(strf("unsupported weights version %u", version));
    const uint32_t count = read_u32(in, "record count");
    WeightSet ws;
    ws.reserve(count);
    std::set<std::string> names;
    for (uint32_t r = 0; r < count; ++r) {
        WeightRecord rec;
        const uint16_t name_len = read_u16(in, "record name length");
        rec.name.resize(name_len);
        read_bytes(in, rec.name.data(), name_len, "record name");
        if (!names.insert(rec.name).second) {
            fail_input(strf("duplicate weight record \"%s\"", rec.name.c_str()));
        }
        const uint8_t rank = read_u8(in, "record rank");
        uint64_t total = 1;
        for (uint8_t d = 0; d < rank; ++d) {
            const uint32_t dim = read_u32(in, "record dims");
            rec.dims.push_back(dim);
            total *= dim;
        }
        if (total > (1ULL << 31)) fail_input(strf("record \"%s\" too large", rec.name.c_str()));
        rec.data.resize(size_t(total));
        read_bytes(in, rec.data.data(), rec.data.size() * sizeof(float), "record payload");
        ws.push_back(std::move(rec));
    }
    return ws;
}

void save_weights(const std::string& path, const WeightSet& ws) {
    std::ofstream out = open_out(path);
    write_weights(out, ws);
}

WeightSet load_weights(const std::string& path) {
    std::ifstream in = open_in(path);
    return read_weights(in);
}

// ---- json plumbing ---------------------------------------------------------

namespace {

[[noreturn]] void fail_json(const std::string& text, size_t byte, const std::string& what) {
    size_t line = 1, col = 1;
    for (size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    fail_input(strf("parse error at line %zu, column %zu: %s", line, col, what.c_str()));
}

ordered_json parse_json(const std::string& text) {
    try {
        return ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        fail_json(text, e.byte > 0 ? e.byte - 1 : 0, e.what());
    }
}

void require_keys(const ordered_json& j, const std::set<std::string>& allowed,
                  const std::set<std::string>& required, const char* where) {
    for (const auto& item : j.items()) {
        if (!allowed.count(item.key())) {
            fail_input(strf("unknown key \"%s\" in %s", item.key().c_str(), where));
        }
    }
    for (const std::string& key : required) {
        if (!j.contains(key)) fail_input(strf("missing key \"%s\" in %s", key.c_str(), where));
    }
}

int get_int(const ordered_json& j, const char* key) {
    if (!j.at(key).is_number_integer()) {
        fail_input(strf("key \"%s\" must be an integer", key));
    }
    return j.at(key).get<int>();
}

double get_double(const ordered_json& j, const char* key) {
    if (!j.at(key).is_number()) fail_input(strf("key \"%s\" must be a number", key));
    return j.at(key).get<double>();
}

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::leaky_relu: return "leaky_relu";
        case Activation::silu: return "silu";
    }
    return "?";
}

Activation activation_from(const std::string& name) {
    if (name == "identity") return Activation::identity;
    if (name == "leaky_relu") return Activation::leaky_relu;
    if (name == "silu") return Activation::silu;
    fail_input(strf("unknown activation \"%s\"", name.c_str()));
}

}  // namespace

// ---- graph text format -------------------------------------------------

std::string graph_to_text(const Graph& g) {
    ordered_json doc;
    doc["magic"] = "repkit-graph";
    doc["version"] = kFormatVersion;
    ordered_json nodes = ordered_json::array();
    for (const Node& n : g.nodes) {
        ordered_json jn;
        jn["id"] = n.id;
        std::visit(
            [&](const auto& kind) {
                using T = std::decay_t<decltype(kind)>;
                if constexpr (std::is_same_v<T, InputNode>) {
                    jn["kind"] = "input";
                    jn["name"] = kind.name;
                    jn["channels"] = kind.channels;
                } else if constexpr (std::is_same_v<T, OutputNode>) {
                    jn["kind"] = "output";
                    jn["name"] = kind.name;
                } else if constexpr (std::is_same_v<T, ConvSpec>) {
                    jn["kind"] = "conv";
                    jn["in"] = kind.in_channels;
                    jn["out"] = kind.out_channels;
                    jn["groups"] = kind.groups;
                    jn["kernel"] = {kind.kh, kind.kw};
                    jn["stride"] = {kind.sh, kind.sw};
                    jn["padding"] = {kind.ph, kind.pw};
                } else if constexpr (std::is_same_v<T, BatchNormSpec>) {
                    jn["kind"] = "batchnorm";
                    jn["channels"] = kind.channels();
                    jn["eps"] = kind.eps;
                } else if constexpr (std::is_same_v<T, ActivationNode>) {
                    jn["kind"] = "activation";
                    jn["fn"] = activation_name(kind.fn);
                } else if constexpr (std::is_same_v<T, AddNode>) {
                    jn["kind"] = "add";
                } else if constexpr (std::is_same_v<T, ConcatNode>) {
                    jn["kind"] = "concat";
                } else if constexpr (std::is_same_v<T, ShuffleNode>) {
                    jn["kind"] = "shuffle";
                    jn["groups"] = kind.groups;
                } else if constexpr (std::is_same_v<T, SplitNode>) {
                    jn["kind"] = "split";
                    jn["ways"] = kind.ways;
                } else if constexpr (std::is_same_v<T, RepBlockSpec>) {
                    jn["kind"] = "repblock";
                    jn["in"] = kind.in_channels;
                    jn["out"] = kind.out_channels;
                    jn["stride"] = kind.stride;
                    jn["identity"] = kind.has_identity;
                    jn["conv1x1"] = kind.has_conv1x1;
                    jn["eps3"] = kind.bn3x3.eps;
                    jn["eps1"] = kind.has_conv1x1 ? kind.bn1x1.eps : 0.0f;
                    jn["eps_id"] = kind.has_identity ? kind.identity_bn.eps : 0.0f;
                } else if constexpr (std::is_same_v<T, MaxPoolNode>) {
                    jn["kind"] = "maxpool";
                } else if constexpr (std::is_same_v<T, UpsampleNode>) {
                    jn["kind"] = "upsample";
                }
            },
            n.kind);
        if (!n.annotation.empty()) jn["annotation"] = n.annotation;
        nodes.push_back(std::move(jn));
    }
    doc["nodes"] = std::move(nodes);
    ordered_json edges = ordered_json::array();
    for (const Edge& e : g.edges) {
        edges.push_back({e.from, e.from_port, e.to, e.to_slot});
    }
    doc["edges"] = std::move(edges);
    return doc.dump(2) + "\n";
}

Graph graph_from_text(const std::string& text) {
    const ordered_json doc = parse_json(text);
    if (!doc.contains("magic") || doc["magic"] != "repkit-graph") {
        fail_input("not a repkit graph file (missing magic)");
    }
    if (!doc.contains("version") || doc["version"] != kFormatVersion) {
        fail_input("unsupported graph version");
    }
    Graph g;
    for (const ordered_json& jn : doc.at("nodes")) {
        Node node;
        node.id = get_int(jn, "id");
        const std::string kind = jn.at("kind").get<std::string>();
        if (kind == "input") {
            node.kind = InputNode{jn.at("name").get<std::string>(), get_int(jn, "channels")};
        } else if (kind == "output") {
            node.kind = OutputNode{jn.at("name").get<std::string>()};
        } else if (kind == "conv") {
            ConvSpec conv;
            conv.in_channels = get_int(jn, "in");
            conv.out_channels = get_int(jn, "out");
            conv.groups = get_int(jn, "groups");
            conv.kh = jn.at("kernel").at(0).get<int>();
            conv.kw = jn.at("kernel").at(1).get<int>();
            conv.sh = jn.at("stride").at(0).get<int>();
            conv.sw = jn.at("stride").at(1).get<int>();
            conv.ph = jn.at("padding").at(0).get<int>();
            conv.pw = jn.at("padding").at(1).get<int>();
            conv.weight.assign(size_t(conv.weight_count()), 0.0f);
            conv.bias.assign(size_t(conv.out_channels), 0.0f);
            node.kind = std::move(conv);
        } else if (kind == "batchnorm") {
            BatchNormSpec bn = BatchNormSpec::neutral(get_int(jn, "channels"));
            bn.eps = jn.at("eps").get<float>();
            node.kind = std::move(bn);
        } else if (kind == "activation") {
            node.kind = ActivationNode{activation_from(jn.at("fn").get<std::string>())};
        } else if (kind == "add") {
            node.kind = AddNode{};
        } else if (kind == "concat") {
            node.kind = ConcatNode{};
        } else if (kind == "shuffle") {
            node.kind = ShuffleNode{get_int(jn, "groups")};
        } else if (kind == "split") {
            node.kind = SplitNode{get_int(jn, "ways")};
        } else if (kind == "repblock") {
            RepBlockSpec rep = RepBlockSpec::zeros(get_int(jn, "in"), get_int(jn, "out"),
                                                   get_int(jn, "stride"),
                                                   jn.at("identity").get<bool>(),
                                                   jn.at("conv1x1").get<bool>());
            rep.bn3x3.eps = jn.at("eps3").get<float>();
            if (rep.has_conv1x1) rep.bn1x1.eps = jn.at("eps1").get<float>();
            if (rep.has_identity) rep.identity_bn.eps = jn.at("eps_id").get<float>();
            node.kind = std::move(rep);
        } else if (kind == "maxpool") {
            node.kind = MaxPoolNode{};
        } else if (kind == "upsample") {
            node.kind = UpsampleNode{};
        } else {
            fail_input(strf("unknown node kind \"%s\"", kind.c_str()));
        }
        if (jn.contains("annotation")) node.annotation = jn.at("annotation").get<std::string>();
        g.nodes.push_back(std::move(node));
    }
    for (const ordered_json& je : doc.at("edges")) {
        if (!je.is_array() || je.size() != 4) fail_input("edge entries must be 4-tuples");
        g.edges.push_back(Edge{je.at(0).get<int>(), je.at(1).get<int>(), je.at(2).get<int>(),
                               je.at(3).get<int>()});
    }
    return g;
}

void save_graph(const std::string& path, const Graph& g) {
    std::ofstream out = open_out(path);
    const std::string text = graph_to_text(g);
    out.write(text.data(), std::streamsize(text.size()));
}

Graph load_graph(const std::string& path) { return graph_from_text(read_file(path)); }

// ---- graph weights -------------------------------------------------------

namespace {

WeightRecord conv_weight_record(const std::string& prefix, const ConvSpec& conv) {
    WeightRecord rec;
    rec.name = prefix + ".weight";
    rec.dims = {uint32_t(conv.out_channels), uint32_t(conv.in_channels / conv.groups),
                uint32_t(conv.kh), uint32_t(conv.kw)};
    rec.data = conv.weight;
    return rec;
}

WeightRecord vec_record(const std::string& name, const std::vector<float>& values) {
    return WeightRecord{name, {uint32_t(values.size())}, values};
}

void collect_bn(WeightSet& ws, const std::string& prefix, const BatchNormSpec& bn) {
    ws.push_back(vec_record(prefix + ".gamma", bn.gamma));
    ws.push_back(vec_record(prefix + ".beta", bn.beta));
    ws.push_back(vec_record(prefix + ".mean", bn.running_mean));
    ws.push_back(vec_record(prefix + ".var", bn.running_var));
}

}  // namespace

WeightSet collect_weights(const Graph& g) {
    WeightSet ws;
    for (const Node& n : g.nodes) {
        const std::string prefix = strf("node%d", n.id);
        if (const auto* conv = std::get_if<ConvSpec>(&n.kind)) {
            ws.push_back(conv_weight_record(prefix, *conv));
            ws.push_back(vec_record(prefix + ".bias", conv->bias));
        } else if (const auto* bn = std::get_if<BatchNormSpec>(&n.kind)) {
            collect_bn(ws, prefix, *bn);
        } else if (const auto* rep = std::get_if<RepBlockSpec>(&n.kind)) {
            ws.push_back(conv_weight_record(prefix + ".b3", rep->conv3x3));
            ws.push_back(vec_record(prefix + ".b3.bias", rep->conv3x3.bias));
            collect_bn(ws, prefix + ".b3", rep->bn3x3);
            if (rep->has_conv1x1) {
                ws.push_back(conv_weight_record(prefix + ".b1", rep->conv1x1));
                ws.push_back(vec_record(prefix + ".b1.bias", rep->conv1x1.bias));
                collect_bn(ws, prefix + ".b1", rep->bn1x1);
            }
            if (rep->has_identity) collect_bn(ws, prefix + ".idbn", rep->identity_bn);
        }
    }
    return ws;
}

namespace {

class WeightBinder {
public:
    explicit WeightBinder(const WeightSet& ws) {
        for (size_t i = 0; i < ws.size(); ++i) records_[ws[i].name] = &ws[i];
    }

    std::vector<float> take(const std::string& name, size_t expected) {
        auto it = records_.find(name);
        if (it == records_.end()) fail_input(strf("missing weight record \"%s\"", name.c_str()));
        const WeightRecord* rec = it->second;
        if (rec->data.size() != expected) {
            fail_input(strf("weight record \"%s\" holds %zu values, expected %zu", name.c_str(),
                            rec->data.size(), expected));
        }
        used_.insert(name);
        return rec->data;
    }

    void bind_bn(const std::string& prefix, BatchNormSpec& bn) {
        const size_t c = bn.gamma.size();
        bn.gamma = take(prefix + ".gamma", c);
        bn.beta = take(prefix + ".beta", c);
        bn.running_mean = take(prefix + ".mean", c);
        bn.running_var = take(prefix + ".var", c);
    }

    void check_exhausted() const {
        for (const auto& [name, rec] : records_) {
            if (!used_.count(name)) {
                fail_input(strf("weight record \"%s\" matches no graph parameter", name.c_str()));
            }
        }
    }

private:
    std::map<std::string, const WeightRecord*> records_;
    std::set<std::string> used_;
};

}  // namespace

void bind_weights(Graph& g, const WeightSet& ws) {
    WeightBinder binder(ws);
    for (Node& n : g.nodes) {
        const std::string prefix = strf("node%d", n.id);
        if (auto* conv = std::get_if<ConvSpec>(&n.kind)) {
            conv->weight = binder.take(prefix + ".weight", size_t(conv->weight_count()));
            conv->bias = binder.take(prefix + ".bias", size_t(conv->out_channels));
        } else if (auto* bn = std::get_if<BatchNormSpec>(&n.kind)) {
            binder.bind_bn(prefix, *bn);
        } else if (auto* rep = std::get_if<RepBlockSpec>(&n.kind)) {
            rep->conv3x3.weight =
                binder.take(prefix + ".b3.weight", size_t(rep->conv3x3.weight_count()));
            rep->conv3x3.bias = binder.take(prefix + ".b3.bias", size_t(rep->out_channels));
            binder.bind_bn(prefix + ".b3", rep->bn3x3);
            if (rep->has_conv1x1) {
                rep->conv1x1.weight =
                    binder.take(prefix + ".b1.weight", size_t(rep->conv1x1.weight_count()));
                rep->conv1x1.bias = binder.take(prefix + ".b1.bias", size_t(rep->out_channels));
                binder.bind_bn(prefix + ".b1", rep->bn1x1);
            }
            if (rep->has_identity) binder.bind_bn(prefix + ".idbn", rep->identity_bn);
        }
    }
    binder.check_exhausted();
}

namespace {

void randomize_conv(Xoshiro256& rng, ConvSpec& conv) {
    for (float& v : conv.weight) v = rng.uniform_f(-0.1f, 0.1f);
    for (float& v : conv.bias) v = rng.uniform_f(-0.1f, 0.1f);
}

void randomize_bn(Xoshiro256& rng, BatchNormSpec& bn) {
    for (float& v : bn.gamma) v = rng.uniform_f(0.5f, 1.5f);
    for (float& v : bn.beta) v = rng.uniform_f(-0.1f, 0.1f);
    for (float& v : bn.running_mean) v = rng.uniform_f(-0.1f, 0.1f);
    for (float& v : bn.running_var) v = rng.uniform_f(0.5f, 1.5f);
}

}  // namespace

void randomize_weights(Graph& g, uint64_t seed) {
    Xoshiro256 rng(seed);
    for (Node& n : g.nodes) {
        if (auto* conv = std::get_if<ConvSpec>(&n.kind)) {
            randomize_conv(rng, *conv);
        } else if (auto* bn = std::get_if<BatchNormSpec>(&n.kind)) {
            randomize_bn(rng, *bn);
        } else if (auto* rep = std::get_if<RepBlockSpec>(&n.kind)) {
            randomize_conv(rng, rep->conv3x3);
            randomize_bn(rng, rep->bn3x3);
            if (rep->has_conv1x1) {
                randomize_conv(rng, rep->conv1x1);
                randomize_bn(rng, rep->bn1x1);
            }
            if (rep->has_identity) randomize_bn(rng, rep->identity_bn);
        }
    }
}

// ---- model config --------------------------------------------------------

ModelConfig parse_model_config(const std::string& text) {
    const ordered_json doc = parse_json(text);
    if (!doc.is_object()) fail_input("model config must be a JSON object");
    if (!doc.contains("block")) fail_input("missing key \"block\" in model config");
    const std::string block = doc.at("block").get<std::string>();

    ModelConfig cfg;
    auto read_elan = [&](const ordered_json& j) {
        ELANConfig elan;
        elan.in_channels = get_int(j, "in_channels");
        elan.branch_width = get_int(j, "branch_width");
        elan.stack_depth = get_int(j, "stack_depth");
        elan.transition_out = get_int(j, "transition_out");
        if (j.contains("activation")) {
            elan.act = activation_from(j.at("activation").get<std::string>());
        }
        return elan;
    };

    if (block == "elan") {
        require_keys(doc,
                     {"block", "in_channels", "branch_width", "stack_depth", "transition_out",
                      "activation", "seed"},
                     {"block", "in_channels", "branch_width", "stack_depth", "transition_out"},
                     "model config");
        cfg.block = read_elan(doc);
    } else if (block == "eelan") {
        require_keys(doc,
                     {"block", "in_channels", "branch_width", "stack_depth", "transition_out",
                      "activation", "seed", "groups", "multiplier"},
                     {"block", "in_channels", "branch_width", "stack_depth", "transition_out",
                      "groups", "multiplier"},
                     "model config");
        EELANConfig eelan;
        eelan.elan = read_elan(doc);
        eelan.groups = get_int(doc, "groups");
        eelan.multiplier = get_int(doc, "multiplier");
        cfg.block = eelan;
    } else if (block == "planned-rep-elan") {
        require_keys(doc, {"block", "variant", "seed"}, {"block", "variant"}, "model config");
        const std::string v = doc.at("variant").get<std::string>();
        RepElanVariant variant;
        if (v == "base") variant = RepElanVariant::base;
        else if (v == "a") variant = RepElanVariant::a;
        else if (v == "b") variant = RepElanVariant::b;
        else if (v == "c") variant = RepElanVariant::c;
        else if (v == "d") variant = RepElanVariant::d;
        else if (v == "e") variant = RepElanVariant::e;
        else fail_input(strf("unknown variant \"%s\"", v.c_str()));
        cfg.block = variant;
    } else if (block == "csp-dark" || block == "csp-reversed") {
        require_keys(doc, {"block", "channels", "rep", "seed"}, {"block", "channels"},
                     "model config");
        CspConfig csp;
        csp.kind = block == "csp-dark" ? CspKind::dark : CspKind::reversed;
        csp.channels = get_int(doc, "channels");
        if (doc.contains("rep")) csp.rep = doc.at("rep").get<bool>();
        cfg.block = csp;
    } else {
        fail_input(strf("unknown block kind \"%s\"", block.c_str()));
    }
    if (doc.contains("seed")) {
        if (!doc.at("seed").is_number_integer()) fail_input("key \"seed\" must be an integer");
        cfg.seed = doc.at("seed").get<uint64_t>();
    }
    return cfg;
}

ModelConfig load_model_config(const std::string& path) {
    return parse_model_config(read_file(path));
}

Graph build_from_config(const ModelConfig& cfg) {
    if (const auto* elan = std::get_if<ELANConfig>(&cfg.block)) {
        return build_elan(*elan);
    }
    if (const auto* eelan = std::get_if<EELANConfig>(&cfg.block)) {
        return build_eelan(*eelan);
    }
    if (const auto* variant = std::get_if<RepElanVariant>(&cfg.block)) {
        return build_planned_rep_elan(*variant);
    }
    const auto& csp = std::get<CspConfig>(cfg.block);
    return build_csp_dark_block(csp.kind, csp.channels, csp.rep);
}

// ---- scenarios -----------------------------------------------------------

Scenario parse_scenario(const std::string& text, const std::string& base_dir) {
    const ordered_json doc = parse_json(text);
    require_keys(doc, {"image_size", "num_classes", "seed", "levels", "gts", "assign"},
                 {"image_size", "num_classes", "levels", "gts"}, "scenario");

    Scenario sc;
    const auto& size = doc.at("image_size");
    if (!size.is_array() || size.size() != 2) fail_input("image_size must be [width, height]");
    sc.image.w = size.at(0).get<int>();
    sc.image.h = size.at(1).get<int>();
    if (sc.image.w < 1 || sc.image.h < 1) fail_input("image_size entries must be positive");
    sc.num_classes = get_int(doc, "num_classes");
    if (sc.num_classes < 1) fail_input("num_classes must be >= 1");
    if (doc.contains("seed")) sc.seed = doc.at("seed").get<uint64_t>();

    if (doc.contains("assign")) {
        const auto& ja = doc.at("assign");
        require_keys(ja,
                     {"anchor_gate", "iou_weight", "topk", "bound_radius", "fine_neighbors",
                      "coarse_neighbors"},
                     {}, "assign overrides");
        if (ja.contains("anchor_gate")) sc.assign.anchor_gate = get_double(ja, "anchor_gate");
        if (ja.contains("iou_weight")) sc.assign.iou_cost_weight = get_double(ja, "iou_weight");
        if (ja.contains("topk")) sc.assign.dynamic_k_top = get_int(ja, "topk");
        if (ja.contains("bound_radius")) sc.assign.bound_radius = get_double(ja, "bound_radius");
        if (ja.contains("fine_neighbors")) {
            sc.assign.fine_neighbors = get_int(ja, "fine_neighbors");
        }
        if (ja.contains("coarse_neighbors")) {
            sc.assign.coarse_neighbors = get_int(ja, "coarse_neighbors");
        }
        if (sc.assign.anchor_gate <= 1.0 || sc.assign.iou_cost_weight < 0.0 ||
            sc.assign.dynamic_k_top < 1 || sc.assign.bound_radius <= 0.0 ||
            sc.assign.fine_neighbors < 0 || sc.assign.fine_neighbors > 2 ||
            sc.assign.coarse_neighbors < 0 || sc.assign.coarse_neighbors > 4) {
            fail_input("assign overrides out of range");
        }
    }

    Xoshiro256 rng(sc.seed);
    for (const ordered_json& jl : doc.at("levels")) {
        require_keys(jl, {"stride", "anchors", "predictions"}, {"stride", "anchors"},
                     "scenario level");
        PredictionGrid grid;
        grid.stride = get_double(jl, "stride");
        if (grid.stride <= 0) fail_input("level stride must be positive");
        for (const ordered_json& ja : jl.at("anchors")) {
            if (!ja.is_array() || ja.size() != 2) fail_input("anchors must be [w, h] pairs");
            grid.anchors.emplace_back(ja.at(0).get<double>(), ja.at(1).get<double>());
        }
        if (std::fmod(double(sc.image.w), grid.stride) != 0.0 ||
            std::fmod(double(sc.image.h), grid.stride) != 0.0) {
            fail_input(strf("stride %g does not divide the %dx%d image", grid.stride, sc.image.w,
                            sc.image.h));
        }
        grid.grid_w = int(sc.image.w / grid.stride);
        grid.grid_h = int(sc.image.h / grid.stride);
        grid.num_classes = sc.num_classes;
        const int64_t raw_len =
            int64_t(grid.anchors.size()) * grid.grid_h * grid.grid_w * grid.fields();
        if (jl.contains("predictions")) {
            const std::string rel = jl.at("predictions").get<std::string>();
            const std::filesystem::path path = std::filesystem::path(base_dir) / rel;
            const Tensor t = load_tensor(path.string());
            if (t.size() != raw_len || t.n != int(grid.anchors.size()) || t.c != grid.grid_h ||
                t.h != grid.grid_w || t.w != grid.fields()) {
                fail_input(strf("prediction tensor \"%s\" dims (%d,%d,%d,%d) do not match "
                                "(anchors=%zu, gh=%d, gw=%d, fields=%d)",
                                rel.c_str(), t.n, t.c, t.h, t.w, grid.anchors.size(), grid.grid_h,
                                grid.grid_w, grid.fields()));
            }
            grid.raw = t.data;
        } else {
            grid.raw.resize(size_t(raw_len));
            for (float& v : grid.raw) v = rng.uniform_f(-2.0f, 2.0f);
        }
        grid.check();
        sc.levels.push_back(std::move(grid));
    }
    if (sc.levels.empty()) fail_input("scenario needs at least one level");

    for (const ordered_json& jg : doc.at("gts")) {
        require_keys(jg, {"class", "cx", "cy", "w", "h"}, {"class", "cx", "cy", "w", "h"},
                     "ground-truth box");
        GroundTruthBox gt;
        gt.class_id = get_int(jg, "class");
        gt.cx = get_double(jg, "cx");
        gt.cy = get_double(jg, "cy");
        gt.w = get_double(jg, "w");
        gt.h = get_double(jg, "h");
        if (gt.class_id < 0 || gt.class_id >= sc.num_classes) {
            fail_input(strf("gt class %d outside [0, %d)", gt.class_id, sc.num_classes));
        }
        if (gt.w <= 0 || gt.h <= 0 || gt.cx < 0 || gt.cx > 1 || gt.cy < 0 || gt.cy > 1) {
            fail_input("gt boxes need positive size and centers inside [0,1]^2");
        }
        sc.gts.push_back(gt);
    }
    return sc;
}

Scenario load_scenario(const std::string& path) {
    const std::string dir = std::filesystem::path(path).parent_path().string();
    return parse_scenario(read_file(path), dir.empty() ? "." : dir);
}

}  // namespace repkit
