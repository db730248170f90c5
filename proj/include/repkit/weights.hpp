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
#include <string>
#include <vector>

namespace repkit {

// One named float array. The in-memory form of an RPKW container record.
struct WeightRecord {
    std::string name;
    std::vector<uint32_t> dims;
    std::vector<float> data;
};

using WeightSet = std::vector<WeightRecord>;

// Exponential moving average of two congruent weight-sets:
// out = decay * ema + (1 - decay) * fresh, per scalar.
WeightSet ema_update(const WeightSet& ema, const WeightSet& fresh, double decay);

}  // namespace repkit
