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

#include <cstdarg>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace repkit {

// input: unreadable/malformed external data (files, configs, flags).
// domain: a well-formed request that violates an operation contract.
class Error : public std::runtime_error {
public:
    enum class Kind { input, domain };

    Error(Kind kind, std::string message)
        : std::runtime_error(std::move(message)), kind_(kind) {}

    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

inline std::string strf(const char* fmt, ...) {
    va_list args;
    va_start(args, fmt);
    char buf[1024];
    vsnprintf(buf, sizeof(buf), fmt, args);
    va_end(args);
    return std::string(buf);
}

[[noreturn]] inline void fail_input(const std::string& msg) {
    throw Error(Error::Kind::input, msg);
}

[[noreturn]] inline void fail_domain(const std::string& msg) {
    throw Error(Error::Kind::domain, msg);
}

}  // namespace repkit
