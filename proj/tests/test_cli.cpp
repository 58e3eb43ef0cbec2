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

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#ifndef MAVEC_BIN
#error "MAVEC_BIN must point at the mavec executable"
#endif

namespace fs = std::filesystem;

namespace {

struct Result {
    int rc = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("mavec-cli-" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Result run(const std::string& args, const std::string& env = "") {
    const auto err = fs::temp_directory_path() / "mavec-cli-stderr.txt";
    const std::string cmd = env + (env.empty() ? "" : " ") + "'" MAVEC_BIN "' " + args + " 2>'" + err.string() + "'";
    Result r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    std::array<char, 4096> buf;
    std::size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
    const int status = pclose(p);
    r.rc = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(err);
    return r;
}

nlohmann::json error_of(const Result& r) {
    auto j = nlohmann::json::parse(r.err, nullptr, false);
    EXPECT_FALSE(j.is_discarded()) << r.err;
    return j.is_discarded() ? nlohmann::json{} : j.at("error");
}

} // namespace

TEST(Cli, VerifyRandomLayers) {
    const auto r = run("verify --random-layers 100 --seed 7");
    EXPECT_EQ(r.rc, 0) << r.err;
    EXPECT_EQ(r.out, "100/100 bit-exact vs staged oracle\n");
}

TEST(Cli, MapCaseStudy) {
    const auto r = run("map --preset case-study --array 4x24");
    ASSERT_EQ(r.rc, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    ASSERT_EQ(j.at("layers").size(), 1u);
    EXPECT_EQ(j["layers"][0].at("array"), "4 X 24");
}

TEST(Cli, ErrorsAreJson) {
    struct Case {
        std::string args;
        int rc;
        std::string kind;
    };
    const Case cases[] = {
        {"", 2, "usage"},
        {"frobnicate", 2, "usage"},
        {"simulate --preset nope", 1, "workload"},
        {"simulate --preset case-study --array 4by4", 2, "usage"},
        {"estimate --preset case-study --calib /nonexistent/calibration.json", 1, "model"},
        {"sweep-io --preset case-study --pcie 9x16 --calib /nonexistent/calibration.json", 1, "model"},
        {"simulate --workload /nonexistent.jsonl", 1, "workload"},
    };
    for (const auto& c : cases) {
        const auto r = run(c.args);
        EXPECT_EQ(r.rc, c.rc) << c.args << "\n" << r.err;
        const auto e = error_of(r);
        EXPECT_EQ(e.value("kind", ""), c.kind) << c.args << "\n" << r.err;
        EXPECT_FALSE(e.value("message", "").empty()) << c.args;
    }
}

TEST(Cli, UncalibratedEstimateExplainsItself) {
    const auto r = run("estimate --preset vgg19-conv --calib /nonexistent/calibration.json");
    EXPECT_NE(error_of(r).value("message", "").find("mavec calibrate"), std::string::npos) << r.err;
}

TEST(Cli, EnvironmentSuppliesFlags) {
    const auto a = run("simulate", "MAVEC_PRESET=case-study MAVEC_ARRAY=4x24");
    const auto b = run("simulate --preset case-study --array 4x24");
    ASSERT_EQ(a.rc, 0) << a.err;
    EXPECT_EQ(a.out, b.out);
}

TEST(Cli, OutputsAreReproducible) {
    const auto d1 = scratch("rep1");
    const auto d2 = scratch("rep2");
    for (const auto& d : {d1, d2}) {
        const auto r = run("simulate --preset case-study --array 4x24 --seed 3 --out '" + d.string() + "'");
        ASSERT_EQ(r.rc, 0) << r.err;
    }
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(d1)) {
        ++files;
        const auto other = d2 / e.path().filename();
        ASSERT_TRUE(fs::exists(other)) << other;
        EXPECT_EQ(slurp(e.path()), slurp(other)) << e.path().filename();
    }
    EXPECT_TRUE(fs::exists(d1 / "report.csv"));
    EXPECT_GE(files, 2u);
    EXPECT_EQ(run("schedule --preset case-study --array 4x24").out,
              run("schedule --preset case-study --array 4x24").out);
}

TEST(Cli, SeedChangesData) {
    const auto a = run("schedule --preset case-study --array 4x24 --seed 1");
    const auto b = run("schedule --preset case-study --array 4x24 --seed 2");
    ASSERT_EQ(a.rc, 0);
    EXPECT_NE(a.out, b.out);
}
