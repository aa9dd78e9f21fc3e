#include "support.hpp"
#include "../tools/fixture_synth.hpp"

#include "facegate/registry.hpp"

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <mutex>
#include <random>
#include <thread>

using namespace facegate;
using nlohmann::json;

namespace {

FaceEncoding random_encoding(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(128);
    for (auto& x : v) x = u(rng);
    return FaceEncoding(v);
}

std::string random_text(std::mt19937_64& rng) {
    static const std::string alphabet = "abcXYZ019 _-\"\\/\xC3\xA9";
    std::string s;
    const std::size_t n = rng() % 12;
    for (std::size_t i = 0; i < n; ++i) s += alphabet[rng() % (alphabet.size() - 2)];
    if (rng() % 5 == 0) s += "\xC3\xA9";  // a complete UTF-8 sequence
    return s;
}

void fill_random(PersonStore& store, std::mt19937_64& rng) {
    const std::size_t people = rng() % 8;
    for (std::size_t p = 0; p < people; ++p) {
        const std::string id = "id-" + std::to_string(p) + random_text(rng);
        const std::size_t encs = 1 + rng() % 4;
        for (std::size_t k = 0; k < encs; ++k) {
            std::map<std::string, std::string> info;
            for (std::size_t i = rng() % 3; i > 0; --i) info[random_text(rng)] = random_text(rng);
            store.add_encoding(id, k == 0 || rng() % 2 ? random_text(rng) : "", info,
                               rng() % 5 == 0 ? "other-v2" : "reference-v1", random_encoding(rng),
                               static_cast<std::int64_t>(rng() % 2000000000000ULL));
        }
    }
}

const CascadeModel& face12() {
    static const CascadeModel m = load_cascade_file(testsupport::fixture_path("face12.xml"));
    return m;
}

RgbImage corpus_image(const std::string& name) { return read_rgb_file(testsupport::corpus_dir() + "/" + name); }

struct Captured {
    std::vector<AlertEvent> events;
    std::vector<std::string> log;
};

GatePassConfig capturing_config(Captured& c) {
    GatePassConfig cfg;
    cfg.clock = [] { return std::int64_t{1700000000123}; };
    cfg.on_alert = [&c](const AlertEvent& a) { c.events.push_back(a); };
    cfg.log = [&c](std::string_view m) { c.log.emplace_back(m); };
    return cfg;
}

}  // namespace

TEST_SUITE("gatepass_registry") {

TEST_CASE("store survives reopen and compaction for random contents") {
    std::mt19937_64 rng(100);
    for (int trial = 0; trial < 100; ++trial) {
        testsupport::TempDir dir("store");
        std::vector<PersonRecord> expected;
        {
            PersonStore store(dir / "people.jsonl");
            try {
                fill_random(store, rng);
            } catch (const DataError&) {
                // A random provider clash is rejected without touching the store.
            }
            expected = store.snapshot();
            store.persist_to(dir / "compact.jsonl");
        }
        PersonStore reopened(dir / "people.jsonl");
        CHECK(reopened.snapshot() == expected);
        CHECK(reopened.warnings().empty());
        PersonStore compact(dir / "compact.jsonl");
        CHECK(compact.snapshot() == expected);
        const auto text = testsupport::read_text(dir / "compact.jsonl");
        CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == expected.size());
    }
}

TEST_CASE("later lines append encodings, replace names and merge info") {
    testsupport::TempDir dir("replay");
    std::mt19937_64 rng(1);
    const auto e1 = random_encoding(rng), e2 = random_encoding(rng);
    {
        PersonStore s(dir / "s.jsonl");
        s.add_encoding("p1", "Ann", {{"dept", "ops"}, {"floor", "2"}}, "reference-v1", e1, 10);
        const auto r = s.add_encoding("p1", "", {{"floor", "3"}}, "reference-v1", e2, 99);
        CHECK(r.display_name == "Ann");
        CHECK(r.enrolled_at_ms == 10);
        CHECK_THROWS_AS(s.add_encoding("p1", "", {}, "other", e2, 100), DataError);
        CHECK_THROWS_AS(s.add_encoding("", "", {}, "reference-v1", e2, 100), std::invalid_argument);
    }
    PersonStore s(dir / "s.jsonl");
    const auto r = s.find("p1");
    REQUIRE(r);
    CHECK(r->encodings == std::vector<FaceEncoding>{e1, e2});
    CHECK(r->info == std::map<std::string, std::string>{{"dept", "ops"}, {"floor", "3"}});
    CHECK(r->display_name == "Ann");
    CHECK(r->enrolled_at_ms == 10);
    CHECK(s.size() == 1);
    CHECK_FALSE(s.contains("p2"));
}

TEST_CASE("a torn final line is cut off with a warning") {
    testsupport::TempDir dir("torn");
    std::mt19937_64 rng(2);
    {
        PersonStore s(dir / "s.jsonl");
        s.add_encoding("a", "A", {}, "reference-v1", random_encoding(rng), 1);
        s.add_encoding("b", "B", {}, "reference-v1", random_encoding(rng), 2);
    }
    const auto good = testsupport::read_text(dir / "s.jsonl");
    testsupport::write_text(dir / "s.jsonl", good + R"({"schema":1,"personId":"c","displ)");
    {
        PersonStore s(dir / "s.jsonl");
        CHECK(s.size() == 2);
        REQUIRE(s.warnings().size() == 1);
        CHECK(s.warnings()[0].find("line 3") != std::string::npos);
        CHECK(testsupport::read_text(dir / "s.jsonl") == good);
        s.add_encoding("c", "C", {}, "reference-v1", random_encoding(rng), 3);
    }
    PersonStore s(dir / "s.jsonl");
    CHECK(s.size() == 3);
    CHECK(s.warnings().empty());
}

TEST_CASE("a complete final line without newline is kept and terminated") {
    testsupport::TempDir dir("nonl");
    std::mt19937_64 rng(3);
    {
        PersonStore s(dir / "s.jsonl");
        s.add_encoding("a", "A", {}, "reference-v1", random_encoding(rng), 1);
    }
    auto text = testsupport::read_text(dir / "s.jsonl");
    text.pop_back();
    testsupport::write_text(dir / "s.jsonl", text);
    {
        PersonStore s(dir / "s.jsonl");
        CHECK(s.size() == 1);
        s.add_encoding("b", "B", {}, "reference-v1", random_encoding(rng), 2);
    }
    CHECK(PersonStore(dir / "s.jsonl").size() == 2);
}

TEST_CASE("corruption before the last line is an error naming the line") {
    testsupport::TempDir dir("corrupt");
    std::mt19937_64 rng(4);
    {
        PersonStore s(dir / "s.jsonl");
        s.add_encoding("a", "A", {}, "reference-v1", random_encoding(rng), 1);
        s.add_encoding("b", "B", {}, "reference-v1", random_encoding(rng), 2);
    }
    const auto text = testsupport::read_text(dir / "s.jsonl");
    testsupport::write_text(dir / "s.jsonl", "garbage\n" + text);
    try {
        PersonStore s(dir / "s.jsonl");
        FAIL("expected a ParseError");
    } catch (const ParseError& e) {
        CHECK(e.kind() == ParseErrorKind::MalformedRow);
        CHECK(e.offset() == 1);
    }
}

TEST_CASE("line codec") {
    std::mt19937_64 rng(5);
    PersonRecord r{"x", "Name \"quoted\"", {{"k", "v"}}, "reference-v1", {random_encoding(rng)}, 42};
    CHECK(parse_person_line(person_line_json(r)) == r);
    CHECK_THROWS_AS(parse_person_line("{}"), std::invalid_argument);
    CHECK_THROWS_AS(parse_person_line("nope"), std::invalid_argument);
    auto doc = json::parse(person_line_json(r));
    doc["schema"] = 2;
    CHECK_THROWS_AS(parse_person_line(doc.dump()), std::invalid_argument);
    doc["schema"] = 1;
    doc["encodings"] = json::array();
    CHECK_THROWS_AS(parse_person_line(doc.dump()), std::invalid_argument);
}

TEST_CASE("concurrent readers and a writer") {
    PersonStore store;
    std::mt19937_64 rng(6);
    std::vector<FaceEncoding> encs;
    for (int i = 0; i < 200; ++i) encs.push_back(random_encoding(rng));
    std::atomic<bool> done{false};
    std::atomic<int> bad{0};
    std::vector<std::jthread> readers;
    for (int t = 0; t < 4; ++t) {
        readers.emplace_back([&] {
            while (!done) {
                const auto snap = store.snapshot();
                for (const auto& p : snap) {
                    if (p.encodings.empty()) ++bad;
                }
            }
        });
    }
    for (int i = 0; i < 200; ++i) store.add_encoding("p" + std::to_string(i % 17), "", {}, "reference-v1", encs[i], i);
    done = true;
    readers.clear();
    CHECK(bad == 0);
    CHECK(store.size() == 17);
    std::size_t total = 0;
    for (const auto& p : store.snapshot()) total += p.encodings.size();
    CHECK(total == 200);
}

TEST_CASE("nearest person: ties go to the earliest enrollment, then id") {
    std::vector<double> z(128, 0.0), far(128, 0.0);
    far[0] = 0.9;
    const FaceEncoding e0(z), ef(far);
    std::vector<PersonRecord> people{
        {"zed", "", {}, "reference-v1", {e0}, 5},
        {"amy", "", {}, "reference-v1", {e0}, 5},
        {"bob", "", {}, "reference-v1", {e0}, 3},
        {"odd", "", {}, "other", {e0}, 1},
    };
    auto r = nearest_person(people, e0, "reference-v1", {});
    CHECK(r.status == IdStatus::Recognized);
    CHECK(*r.person_id == "bob");
    CHECK(*r.similarity_pct == 100.0);
    people[2].enrolled_at_ms = 9;
    CHECK(*nearest_person(people, e0, "reference-v1", {}).person_id == "amy");
    CHECK(*nearest_person(people, e0, "other", {}).person_id == "odd");
    r = nearest_person(people, ef, "reference-v1", {});
    CHECK(r.status == IdStatus::Unknown);
    CHECK_FALSE(r.person_id);
    CHECK(*r.similarity_pct == doctest::Approx(35.0));
    CHECK(nearest_person({}, e0, "reference-v1", {}).status == IdStatus::Unknown);
}

TEST_CASE("enroll then identify on fixture images") {
    const ReferenceEmbedder embedder;
    PersonStore store;
    Captured cap;
    GatePass gate(face12(), embedder, store, capturing_config(cap));
    const auto rec = gate.enroll("alice", "Alice", {{"badge", "17"}}, corpus_image("alice1.ppm"));
    CHECK(rec.encodings.size() == 1);
    CHECK(rec.enrolled_at_ms == 1700000000123);

    const auto same = gate.identify(corpus_image("alice1.ppm"), "cam1/0001");
    CHECK(same.status == IdStatus::Recognized);
    CHECK(*same.person_id == "alice");
    CHECK(*same.similarity_pct == 100.0);
    CHECK_FALSE(same.alert);

    const auto other_view = gate.identify(corpus_image("alice2.ppm"));
    CHECK(other_view.status == IdStatus::Recognized);
    CHECK(cap.events.empty());

    const auto unknown = gate.identify(corpus_image("bob1.ppm"), "cam1/0002");
    CHECK(unknown.status == IdStatus::Unknown);
    REQUIRE(unknown.alert);
    REQUIRE(cap.events.size() == 1);
    CHECK(cap.events[0].reason == AlertReason::UnknownPerson);
    CHECK(cap.events[0].frame_ref == "cam1/0002");
    CHECK(cap.events[0].timestamp_ms == 1700000000123);
    CHECK(*cap.events[0].best_similarity < 75.0);

    const auto none = gate.identify(corpus_image("nonface1.ppm"));
    CHECK(none.status == IdStatus::NoFace);
    REQUIRE(cap.events.size() == 2);
    CHECK(cap.events[1].reason == AlertReason::NoFace);
    CHECK_FALSE(cap.events[1].best_similarity);

    CHECK_THROWS_AS(gate.enroll("", "", {}, corpus_image("nonface1.ppm")), NoFaceError);
    CHECK(store.size() == 1);
    const auto generated = gate.enroll("", "Bob", {}, corpus_image("bob1.ppm"));
    CHECK(generated.person_id == "person-0002");
    CHECK(gate.identify(corpus_image("bob2.ppm")).person_id == std::optional<std::string>("person-0002"));
}

TEST_CASE("alerts go to the log file and the HTTP endpoint") {
    httplib::Server server;
    std::mutex m;
    std::vector<std::string> bodies;
    server.Post("/alerts", [&](const httplib::Request& req, httplib::Response& res) {
        std::lock_guard lock(m);
        bodies.push_back(req.body);
        res.status = 204;
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::jthread listener([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    testsupport::TempDir dir("alerts");
    const ReferenceEmbedder embedder;
    PersonStore store;
    Captured cap;
    auto cfg = capturing_config(cap);
    cfg.alert_log = dir / "alerts.jsonl";
    cfg.alert_url = "http://127.0.0.1:" + std::to_string(port) + "/alerts";
    GatePass gate(face12(), embedder, store, cfg);
    gate.enroll("alice", "Alice", {}, corpus_image("alice1.ppm"));
    gate.identify(corpus_image("alice2.ppm"), "known");
    gate.identify(corpus_image("carol1.ppm"), "stranger");
    server.stop();
    listener.join();

    REQUIRE(bodies.size() == 1);
    const auto posted = json::parse(bodies[0]);
    CHECK(posted["frameRef"] == "stranger");
    CHECK(posted["reason"] == "unknown-person");
    CHECK(posted["timestampMs"] == 1700000000123);
    const auto log = testsupport::read_text(dir / "alerts.jsonl");
    CHECK(log == bodies[0] + "\n");
    CHECK(cap.events.size() == 1);
    CHECK(cap.log.empty());
}

TEST_CASE("failed alert delivery is logged, not thrown") {
    const ReferenceEmbedder embedder;
    PersonStore store;
    Captured cap;
    auto cfg = capturing_config(cap);
    cfg.alert_url = "https://example.invalid/hook";
    GatePass gate(face12(), embedder, store, cfg);
    CHECK_NOTHROW(gate.identify(corpus_image("dave1.ppm")));
    CHECK(cap.events.size() == 1);
    REQUIRE(cap.log.size() == 1);
    CHECK(cap.log[0].find("http://") != std::string::npos);
    CHECK(post_json("http://127.0.0.1:1/none", "{}").has_value());
}

TEST_CASE("alert serialisation") {
    AlertEvent a{5, "f", 12.5, AlertReason::UnknownPerson};
    CHECK(alert_json(a) == R"({"timestampMs":5,"frameRef":"f","bestSimilarity":12.5,"reason":"unknown-person"})");
    a.best_similarity.reset();
    a.reason = AlertReason::NoFace;
    CHECK(alert_json(a) == R"({"timestampMs":5,"frameRef":"f","bestSimilarity":null,"reason":"no-face"})");
    CHECK(to_string(IdStatus::NoFace) == "no-face");
}

}
