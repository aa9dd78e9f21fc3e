#include "facegate/registry.hpp"

#include <httplib.h>
#include <json.hpp>

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <iterator>
#include <mutex>

namespace facegate {

using json = nlohmann::ordered_json;

namespace {

void append_line(const std::filesystem::path& path, const std::string& line) {
    const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0) throw DataError("cannot open " + path.string() + ": " + std::strerror(errno));
    const char* p = line.data();
    std::size_t left = line.size();
    while (left > 0) {
        const ssize_t n = ::write(fd, p, left);
        if (n < 0) {
            if (errno == EINTR) continue;
            const int err = errno;
            ::close(fd);
            throw DataError("write to " + path.string() + " failed: " + std::strerror(err));
        }
        p += n;
        left -= static_cast<std::size_t>(n);
    }
    if (::fsync(fd) != 0) {
        const int err = errno;
        ::close(fd);
        throw DataError("fsync of " + path.string() + " failed: " + std::strerror(err));
    }
    ::close(fd);
}

}  // namespace

std::string person_line_json(const PersonRecord& rec) {
    json doc;
    doc["schema"] = 1;
    doc["personId"] = rec.person_id;
    doc["displayName"] = rec.display_name;
    doc["info"] = json::object();
    for (const auto& [k, v] : rec.info) doc["info"][k] = v;
    doc["provider"] = rec.provider;
    json encs = json::array();
    for (const auto& e : rec.encodings) {
        const auto v = e.values();
        encs.push_back(std::vector<double>(v.begin(), v.end()));
    }
    doc["encodings"] = std::move(encs);
    doc["enrolledAtMs"] = rec.enrolled_at_ms;
    return doc.dump();
}

PersonRecord parse_person_line(std::string_view line) {
    json doc;
    try {
        doc = json::parse(line);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("invalid JSON: ") + e.what());
    }
    try {
        if (doc.at("schema").get<int>() != 1) throw std::invalid_argument("unsupported schema version");
        PersonRecord rec;
        rec.person_id = doc.at("personId").get<std::string>();
        rec.display_name = doc.at("displayName").get<std::string>();
        for (const auto& [k, v] : doc.at("info").items()) rec.info[k] = v.get<std::string>();
        rec.provider = doc.at("provider").get<std::string>();
        for (const auto& e : doc.at("encodings")) rec.encodings.emplace_back(e.get<std::vector<double>>());
        rec.enrolled_at_ms = doc.at("enrolledAtMs").get<std::int64_t>();
        if (rec.person_id.empty()) throw std::invalid_argument("empty personId");
        if (rec.encodings.empty()) throw std::invalid_argument("record without encodings");
        return rec;
    } catch (const json::exception& e) {
        throw std::invalid_argument(e.what());
    }
}

PersonStore::PersonStore() = default;

PersonStore::PersonStore(std::filesystem::path path) : path_(std::move(path)) {
    std::error_code ec;
    if (!std::filesystem::exists(*path_, ec)) return;
    std::ifstream in(*path_, std::ios::binary);
    if (!in) throw DataError("cannot read person store " + path_->string());
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw DataError("cannot read person store " + path_->string());
    replay(text);
}

void PersonStore::replay(std::string_view text) {
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
        const auto nl = text.find('\n', pos);
        const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
        const std::string_view line = text.substr(pos, end - pos);
        const std::size_t line_start = pos;
        pos = nl == std::string_view::npos ? text.size() : nl + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

        const bool last = text.find_first_not_of(" \t\r\n", pos) == std::string_view::npos;
        try {
            apply(parse_person_line(line));
        } catch (const std::invalid_argument& e) {
            if (!last) {
                throw ParseError(ParseErrorKind::MalformedRow, line_no,
                                 path_->string() + ": corrupt record: " + e.what());
            }
            warnings_.push_back(path_->string() + ": dropped corrupt trailing line " + std::to_string(line_no) + " (" +
                                e.what() + ")");
            std::filesystem::resize_file(*path_, line_start);
            return;
        }
        if (last && nl == std::string_view::npos) {
            // A complete final record without its newline: terminate it so
            // the next append starts on a fresh line.
            append_line(*path_, "\n");
        }
    }
}

void PersonStore::apply(PersonRecord&& line) {
    auto it = people_.find(line.person_id);
    if (it == people_.end()) {
        people_.emplace(line.person_id, std::move(line));
        return;
    }
    auto& rec = it->second;
    if (rec.provider != line.provider) {
        throw std::invalid_argument("person '" + rec.person_id + "' mixes providers " + rec.provider + " and " +
                                    line.provider);
    }
    if (!line.display_name.empty()) rec.display_name = line.display_name;
    for (auto& [k, v] : line.info) rec.info[k] = v;
    for (auto& e : line.encodings) rec.encodings.push_back(std::move(e));
}

PersonRecord PersonStore::add_encoding(const std::string& person_id, const std::string& display_name,
                                       const std::map<std::string, std::string>& info, const std::string& provider,
                                       const FaceEncoding& encoding, std::int64_t now_ms) {
    if (person_id.empty()) throw std::invalid_argument("person id must not be empty");
    std::unique_lock turn(turnstile_);
    std::unique_lock lock(mutex_);
    turn.unlock();
    PersonRecord line;
    line.person_id = person_id;
    line.display_name = display_name;
    line.info = info;
    line.provider = provider;
    line.encodings.push_back(encoding);
    line.enrolled_at_ms = now_ms;

    const auto it = people_.find(person_id);
    if (it != people_.end()) {
        if (it->second.provider != provider) {
            throw DataError("person '" + person_id + "' was enrolled with provider " + it->second.provider +
                            ", not " + provider);
        }
        line.enrolled_at_ms = it->second.enrolled_at_ms;
    }
    if (path_) append_line(*path_, person_line_json(line) + "\n");
    apply(std::move(line));
    return people_.at(person_id);
}

std::optional<PersonRecord> PersonStore::find(const std::string& person_id) const {
    std::shared_lock lock = read_lock();
    const auto it = people_.find(person_id);
    if (it == people_.end()) return std::nullopt;
    return it->second;
}

bool PersonStore::contains(const std::string& person_id) const {
    std::shared_lock lock = read_lock();
    return people_.contains(person_id);
}

std::vector<PersonRecord> PersonStore::snapshot() const {
    std::shared_lock lock = read_lock();
    std::vector<PersonRecord> out;
    out.reserve(people_.size());
    for (const auto& [id, rec] : people_) out.push_back(rec);
    return out;
}

std::size_t PersonStore::size() const {
    std::shared_lock lock = read_lock();
    return people_.size();
}

void PersonStore::persist_to(const std::filesystem::path& path) const {
    std::string text;
    {
        std::shared_lock lock = read_lock();
        for (const auto& [id, rec] : people_) text += person_line_json(rec) + "\n";
    }
    auto tmp = path;
    tmp += ".tmp";
    std::filesystem::remove(tmp);
    if (!text.empty()) {
        append_line(tmp, text);
    } else {
        std::ofstream(tmp, std::ios::binary | std::ios::trunc);
    }
    std::filesystem::rename(tmp, path);
}

std::string_view to_string(IdStatus s) {
    switch (s) {
        case IdStatus::Recognized: return "recognized";
        case IdStatus::Unknown: return "unknown";
        case IdStatus::NoFace: return "no-face";
    }
    return "?";
}

std::string_view to_string(AlertReason r) {
    switch (r) {
        case AlertReason::UnknownPerson: return "unknown-person";
        case AlertReason::NoFace: return "no-face";
    }
    return "?";
}

std::string alert_json(const AlertEvent& a) {
    json doc;
    doc["timestampMs"] = a.timestamp_ms;
    doc["frameRef"] = a.frame_ref;
    doc["bestSimilarity"] = a.best_similarity ? json(*a.best_similarity) : json(nullptr);
    doc["reason"] = std::string(to_string(a.reason));
    return doc.dump();
}

std::int64_t system_clock_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

std::optional<std::string> post_json(const std::string& url, const std::string& body) {
    constexpr std::string_view scheme = "http://";
    if (!url.starts_with(scheme)) return "only http:// alert URLs are supported: " + url;
    const auto slash = url.find('/', scheme.size());
    const std::string host = url.substr(0, slash);
    const std::string target = slash == std::string::npos ? "/" : url.substr(slash);

    httplib::Client client(host);
    client.set_connection_timeout(5, 0);
    client.set_read_timeout(5, 0);
    client.set_write_timeout(5, 0);
    const auto res = client.Post(target, body, "application/json");
    if (!res) return "POST " + url + " failed: " + httplib::to_string(res.error());
    if (res->status < 200 || res->status >= 300) {
        return "POST " + url + " returned HTTP " + std::to_string(res->status);
    }
    return std::nullopt;
}

IdentificationResult nearest_person(std::span<const PersonRecord> people, const FaceEncoding& probe,
                                    const std::string& provider, const MatcherConfig& cfg) {
    const PersonRecord* best = nullptr;
    double best_d = 0.0;
    for (const auto& rec : people) {
        if (rec.provider != provider) continue;
        for (const auto& e : rec.encodings) {
            const double d = euclidean_distance(probe, e);
            const bool better = best == nullptr || d < best_d ||
                                (d == best_d && (rec.enrolled_at_ms < best->enrolled_at_ms ||
                                                 (rec.enrolled_at_ms == best->enrolled_at_ms &&
                                                  rec.person_id < best->person_id)));
            if (better) {
                best = &rec;
                best_d = d;
            }
        }
    }
    IdentificationResult r;
    r.status = IdStatus::Unknown;
    if (best == nullptr) return r;
    r.d_face = best_d;
    r.similarity_pct = similarity_pct(best_d, cfg);
    if (*r.similarity_pct >= cfg.threshold_pct) {
        r.status = IdStatus::Recognized;
        r.person_id = best->person_id;
    }
    return r;
}

GatePass::GatePass(const CascadeModel& model, const EmbeddingProvider& provider, PersonStore& store,
                   GatePassConfig config)
    : model_(model), provider_(provider), store_(store), config_(std::move(config)) {
    config_.matcher.validate();
    if (!config_.clock) config_.clock = system_clock_ms;
    for (const auto& w : store_.warnings()) log(w);
}

void GatePass::log(std::string_view msg) const {
    if (config_.log) {
        config_.log(msg);
    } else {
        std::cerr << "facegate: " << msg << '\n';
    }
}

PersonRecord GatePass::enroll(const std::string& person_id, const std::string& display_name,
                              const std::map<std::string, std::string>& info, const RgbImage& image) {
    const auto res = encode_pipeline(model_, image, provider_, config_.pipeline);
    if (!res.encoding) throw NoFaceError("no face found in enrollment image");

    std::string id = person_id;
    if (id.empty()) {
        for (std::size_t n = store_.size() + 1;; ++n) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "person-%04zu", n);
            if (!store_.contains(buf)) {
                id = buf;
                break;
            }
        }
    }
    return store_.add_encoding(id, display_name, info, provider_.id(), *res.encoding, config_.clock());
}

IdentificationResult GatePass::identify(const RgbImage& frame, const std::string& frame_ref) {
    const auto res = encode_pipeline(model_, frame, provider_, config_.pipeline);
    IdentificationResult r;
    AlertEvent alert;
    alert.frame_ref = frame_ref;
    if (!res.encoding) {
        r.status = IdStatus::NoFace;
        alert.reason = AlertReason::NoFace;
    } else {
        const auto people = store_.snapshot();
        r = nearest_person(people, *res.encoding, provider_.id(), config_.matcher);
        alert.reason = AlertReason::UnknownPerson;
        alert.best_similarity = r.similarity_pct;
    }
    if (r.status != IdStatus::Recognized) {
        alert.timestamp_ms = config_.clock();
        emit(alert);
        r.alert = alert;
    }
    return r;
}

void GatePass::emit(const AlertEvent& a) {
    const std::string body = alert_json(a);
    if (config_.alert_log) {
        try {
            append_line(*config_.alert_log, body + "\n");
        } catch (const std::exception& e) {
            log(std::string("alert log: ") + e.what());
        }
    }
    if (config_.alert_url) {
        if (auto err = post_json(*config_.alert_url, body)) log("alert callback: " + *err);
    }
    if (config_.on_alert) config_.on_alert(a);
}

}  // namespace facegate
