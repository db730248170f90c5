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

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "repkit/assign.hpp"
#include "repkit/blocks.hpp"
#include "repkit/graph.hpp"
#include "repkit/weights.hpp"

namespace repkit {

// ---- binary containers ------------------------------------------------
//
// RPKT tensor: "RPKT", u32 version=1, u32 n/c/h/w, float32 LE payload.
// RPKW weights: "RPKW", u32 version=1, u32 record count; per record
//   u16 name length + bytes, u8 rank, rank * u32 dims, float32 LE payload.

void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

void write_weights(std::ostream& out, const WeightSet& ws);
WeightSet read_weights(std::istream& in);
void save_weights(const std::string& path, const WeightSet& ws);
WeightSet load_weights(const std::string& path);

// ---- graph text format -------------------------------------------------

std::string graph_to_text(const Graph& g);
Graph graph_from_text(const std::string& text);
void save_graph(const std::string& path, const Graph& g);
Graph load_graph(const std::string& path);

// Graph parameters <-> named records ("node<id>.weight", ...), node order.
WeightSet collect_weights(const Graph& g);
void bind_weights(Graph& g, const WeightSet& ws);

// Seeded init: conv weights/biases uniform in [-0.1, 0.1]; BN gamma and
// variance in [0.5, 1.5], beta/mean in [-0.1, 0.1].
void randomize_weights(Graph& g, uint64_t seed);

// ---- model config ------------------------------------------------------

struct CspConfig {
    CspKind kind = CspKind::dark;
    int channels = 64;
    bool rep = false;
};

struct ModelConfig {
    std::variant<ELANConfig, EELANConfig, RepElanVariant, CspConfig> block;
    uint64_t seed = 0;
};

ModelConfig parse_model_config(const std::string& text);
ModelConfig load_model_config(const std::string& path);
Graph build_from_config(const ModelConfig& cfg);  // structure only, zero weights

// ---- assignment scenario -----------------------------------------------

struct Scenario {
    ImageSize image;
    int num_classes = 1;
    uint64_t seed = 0;
    std::vector<PredictionGrid> levels;     // raw filled from files or PRNG
    std::vector<GroundTruthBox> gts;
    AssignConfig assign;
};

// base_dir resolves relative prediction-tensor paths.
Scenario parse_scenario(const std::string& text, const std::string& base_dir);
Scenario load_scenario(const std::string& path);

}  // namespace repkit
