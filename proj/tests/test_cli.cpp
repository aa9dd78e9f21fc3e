#include "support.hpp"
#include "../tools/fixture_synth.hpp"

#include <doctest.h>
#include <json.hpp>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <sys/wait.h>

using nlohmann::json;

namespace {

struct RunResult {
    int status = -1;
    std::string out;
};

std::string quote(const std::string& s) {
    std::string q = "'";
    for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return q + "'";
}

RunResult run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " + quote(FACEGATE_CLI_PATH) + " " + args + " 2>/dev/null";
    RunResult r;
    FILE* p = ::popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
    const int st = ::pclose(p);
    r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

std::string corpus(const std::string& name) { return quote(testsupport::corpus_dir() + "/" + name); }
std::string face12() { return "--model " + quote(testsupport::fixture_path("face12.xml")); }

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("detect and detect-enhanced report the planted face") {
    testsupport::TempDir dir("cli-detect");
    facegate::RgbImage img = facegate::synth::background(128, 128, 70, 0, 0, 1);
    facegate::synth::draw_face(img, {31, 31, 66, 66}, facegate::synth::Identity{});
    facegate::write_netpbm_file((dir / "face.ppm").string(), img);

    auto r = run("detect " + face12() + " " + quote((dir / "face.ppm").string()));
    REQUIRE(r.status == 0);
    auto j = json::parse(r.out);
    REQUIRE(j["detections"].size() == 1);
    CHECK(std::abs(j["detections"][0]["x"].get<int>() - 31) <= 2);
    CHECK(j["params"]["min_neighbors"] == 3);

    r = run("detect-enhanced " + face12() + " " + quote((dir / "face.ppm").string()));
    REQUIRE(r.status == 0);
    j = json::parse(r.out);
    CHECK(j["face"]["used_params"] == "1.10/10");
    CHECK(j["passes"].size() == 1);
    CHECK(j["schedule"] == "1.10/10,1.09/9,1.08/8,1.07/7,1.06/6,1.05/5,1.04/4,1.03/3,1.02/2,1.01/1");

    r = run("detect-enhanced " + face12() + " " + corpus("nonface1.ppm"));
    REQUIRE(r.status == 0);
    j = json::parse(r.out);
    CHECK(j["face"].is_null());
    CHECK(j["passes"].size() == 10);
}

TEST_CASE("encode reproduces the bundled encodings") {
    const auto r = run("encode " + face12() + " --manifest " + corpus("manifest.csv"));
    REQUIRE(r.status == 0);
    CHECK(r.out == testsupport::read_text(testsupport::corpus_dir() + "/encodings.jsonl"));
}

TEST_CASE("eval reports are identical across modes and job counts") {
    testsupport::TempDir dir("cli-eval");
    std::string csv;
    std::string pipeline_json;
    for (int jobs : {1, 4}) {
        const auto out = dir / ("p" + std::to_string(jobs) + ".json");
        const auto r = run("eval " + face12() + " --manifest " + corpus("manifest.csv") + " --jobs " +
                           std::to_string(jobs) + " --out-json " + quote(out.string()));
        REQUIRE(r.status == 0);
        if (csv.empty()) csv = r.out;
        CHECK(r.out == csv);
        const auto text = testsupport::read_text(out);
        if (pipeline_json.empty()) pipeline_json = text;
        CHECK(text == pipeline_json);
    }
    const auto pre = run("eval --manifest " + corpus("manifest.csv") + " --encodings " + corpus("encodings.jsonl"));
    REQUIRE(pre.status == 0);
    auto a = json::parse(pre.out);
    auto b = json::parse(pipeline_json);
    CHECK(a["mode"] == "precomputed");
    CHECK(b["mode"] == "pipeline");
    a.erase("mode");
    b.erase("mode");
    CHECK(a == b);
    CHECK(a["comparisons"] == 132);
    CHECK(csv.rfind("schema,row,", 0) == 0);

    const auto sweep = run("eval --manifest " + corpus("manifest.csv") + " --encodings " + corpus("encodings.jsonl") +
                           " --threshold-sweep 50:100:25");
    REQUIRE(sweep.status == 0);
    CHECK(json::parse(sweep.out)["threshold_sweep"].size() == 3);
}

TEST_CASE("match exit codes") {
    auto r = run("match " + face12() + " " + corpus("alice1.ppm") + " " + corpus("alice2.ppm"));
    REQUIRE(r.status == 0);
    CHECK(json::parse(r.out)["match"] == true);
    r = run("match " + face12() + " " + corpus("alice1.ppm") + " " + corpus("erin1.ppm"));
    REQUIRE(r.status == 0);
    CHECK(json::parse(r.out)["match"] == false);
    CHECK(run("match " + face12() + " " + corpus("alice1.ppm") + " " + corpus("nonface1.ppm")).status == 2);
    CHECK(run("match " + face12() + " " + corpus("alice1.ppm")).status == 1);
    CHECK(run("match " + face12() + " " + corpus("alice1.ppm") + " /nonexistent.ppm").status == 2);
    CHECK(run("bogus-command").status == 1);
    CHECK(run("").status == 1);
    CHECK(run("detect --cascade-variant alt2 " + corpus("alice1.ppm")).status == 2);
    CHECK(run("detect --cascade-variant nope " + corpus("alice1.ppm")).status == 1);
    CHECK(run("detect --scale-factor 1.0 " + corpus("alice1.ppm")).status == 1);
}

TEST_CASE("config file values apply unless a flag overrides them") {
    testsupport::TempDir dir("cli-config");
    testsupport::write_text(dir / "cfg.toml", "[match]\nd-max = 0.2\n");
    const std::string pair = corpus("alice1.ppm") + " " + corpus("alice2.ppm");
    const std::string cfg = "--config " + quote((dir / "cfg.toml").string());
    auto r = run(cfg + " match " + face12() + " " + pair);
    REQUIRE(r.status == 0);
    CHECK(json::parse(r.out)["match"] == false);
    r = run(cfg + " match " + face12() + " --d-max 1 " + pair);
    REQUIRE(r.status == 0);
    CHECK(json::parse(r.out)["match"] == true);
}

TEST_CASE("enroll and identify through the command line") {
    testsupport::TempDir dir("cli-gate");
    const std::string store = "--store " + quote((dir / "people.jsonl").string());
    auto r = run("enroll " + face12() + " " + store + " --name Alice --id alice --info team=red " + corpus("alice1.ppm"));
    REQUIRE(r.status == 0);
    CHECK(json::parse(r.out)["personId"] == "alice");
    CHECK(run("enroll " + face12() + " " + store + " --name X " + corpus("nonface1.ppm")).status == 2);

    r = run("identify " + face12() + " " + store + " " + corpus("alice2.ppm"));
    REQUIRE(r.status == 0);
    auto j = json::parse(r.out);
    CHECK(j["status"] == "recognized");
    CHECK(j["displayName"] == "Alice");
    CHECK(j["alert"].is_null());

    const std::string log = quote((dir / "alerts.jsonl").string());
    r = run("identify " + face12() + " " + store + " --alert-log " + log + " --frame-ref gate-1 " + corpus("erin2.ppm"),
            "GATEPASS_ALERT_URL=http://127.0.0.1:1/unreachable");
    REQUIRE(r.status == 0);
    j = json::parse(r.out);
    CHECK(j["status"] == "unknown");
    CHECK(j["alert"] == "unknown-person");
    const auto alert = json::parse(testsupport::read_text(dir / "alerts.jsonl"));
    CHECK(alert["frameRef"] == "gate-1");
}

TEST_CASE("corpus generator output is reproducible and matches the bundled corpus") {
    testsupport::TempDir dir("cli-corpus");
    const std::string cmd = quote(FACEGATE_CORPUS_TOOL) + " --out " + quote(dir.path().string()) + " --cascade " +
                            quote(testsupport::fixture_path("face12.xml")) + " >/dev/null 2>&1";
    REQUIRE(std::system(cmd.c_str()) == 0);
    std::size_t files = 0;
    for (const auto& entry : std::filesystem::directory_iterator(testsupport::corpus_dir())) {
        ++files;
        const auto name = entry.path().filename().string();
        CAPTURE(name);
        CHECK(testsupport::read_text(entry.path()) == testsupport::read_text(dir / name));
    }
    CHECK(files == 15);
}

}
