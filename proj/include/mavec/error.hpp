/*
 * Copyright 2026 The mavec-mapper Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mavec {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* kind() const noexcept { return "error"; }
};

class CodecError : public Error {
public:
    explicit CodecError(const std::string& what) : Error(what) {}
    CodecError(const std::string& what, std::uint8_t nibble)
        : Error(what + " (nibble " + std::to_string(nibble) + ")"), nibble_(nibble) {}
    const char* kind() const noexcept override { return "codec"; }
    int nibble() const { return nibble_; }

private:
    int nibble_ = -1;
};

class MappingError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "mapping"; }
};

class ScheduleError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "schedule"; }
};

class SimulationError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "simulation"; }
};

class ModelError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "model"; }
};

class WorkloadError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "workload"; }
};

} // namespace mavec
