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
#include <vector>

namespace repkit {

// Dense NCHW tensor, float32 storage. All operations accumulate in
// float64 and round once on store, with a fixed accumulation order
// (input channel, then kernel row, then kernel column), so results are
// bit-reproducible across runs and thread counts.
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<float> data;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_, float fill = 0.0f);

    int64_t size() const { return int64_t(n) * c * h * w; }

    int64_t index(int in, int ic, int iy, int ix) const {
        return ((int64_t(in) * c + ic) * h + iy) * w + ix;
    }

    float& at(int in, int ic, int iy, int ix) { return data[index(in, ic, iy, ix)]; }
    float at(int in, int ic, int iy, int ix) const { return data[index(in, ic, iy, ix)]; }

    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
};

// 2-D convolution parameters. weight is laid out
// (out_channels, in_channels / groups, kh, kw), bias has one entry per
// output channel.
struct ConvSpec {
    int in_channels = 0;
    int out_channels = 0;
    int groups = 1;
    int kh = 1, kw = 1;
    int sh = 1, sw = 1;
    int ph = 0, pw = 0;
    std::vector<float> weight;
    std::vector<float> bias;

    int64_t weight_count() const {
        return int64_t(out_channels) * (in_channels / groups) * kh * kw;
    }
    int64_t param_count() const { return weight_count() + out_channels; }
    void check() const;  // throws on inconsistent shapes
};

// Inference-time batch-norm statistics. eps may be zero as long as
// every running_var entry keeps the denominator positive.
struct BatchNormSpec {
    std::vector<float> gamma, beta, running_mean, running_var;
    float eps = 1e-5f;

    int channels() const { return int(gamma.size()); }
    void check() const;

    static BatchNormSpec neutral(int channels);  // gamma 1, rest 0, var 1, eps 0
};

enum class Activation { identity, leaky_relu, silu };

enum class EltwiseOp { add, concat_channels };

Tensor conv2d(const Tensor& input, const ConvSpec& spec);
Tensor batchnorm(const Tensor& input, const BatchNormSpec& spec);
Tensor channel_shuffle(const Tensor& input, int groups);
Tensor eltwise(EltwiseOp op, const std::vector<const Tensor*>& inputs);
Tensor activation(const Tensor& input, Activation kind);

// Pooling / upsampling companions: 2x2 stride-2 max (first element wins
// ties) and nearest-neighbour 2x.
Tensor max_pool_2x2(const Tensor& input);
Tensor upsample_nearest_2x(const Tensor& input);

// Output spatial extent of a convolution; throws when it would collapse
// below one pixel.
void conv_output_dims(const Tensor& input, const ConvSpec& spec, int* oh, int* ow);

}  // namespace repkit
