#pragma once

#include "facegate/cascade.hpp"
#include "facegate/encoding.hpp"
#include "facegate/error.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

namespace facegate {

struct PersonRecord {
    std::string person_id;
    std::string display_name;
    std::map<std::string, std::string> info;
    std::string provider;
    std::vector<FaceEncoding> encodings;
    /// Milliseconds since the Unix epoch of the first enrollment.
    std::int64_t enrolled_at_ms = 0;

    friend bool operator==(const PersonRecord&, const PersonRecord&) = default;
};

/// Raised when an enrollment image yields no face; the store is not touched.
class NoFaceError : public DataError {
public:
    using DataError::DataError;
};

/// Person store backed by an append-only JSON-lines log.
///
/// Each line holds a person id, display name, info, provider, a list of
/// encodings and a timestamp. Replaying the log in order rebuilds the store:
/// the first line for an id creates the person, later lines append encodings
/// and replace the name and info. A line is written with a single append
/// and flushed to disk before the in-memory state changes.
///
/// One writer at a time; readers may run concurrently with each other.
class PersonStore {
public:
    /// In-memory store with no backing file.
    PersonStore();
    /// Opens (or lazily creates) the log at `path` and replays it. A corrupt
    /// final line is cut off and reported through `warnings()`; corruption
    /// anywhere else is a ParseError naming the line.
    explicit PersonStore(std::filesystem::path path);

    PersonStore(const PersonStore&) = delete;
    PersonStore& operator=(const PersonStore&) = delete;

    /// Appends `encoding` to `person_id`, creating the person if needed.
    /// An empty display name keeps the current one; `info` keys are merged.
    /// Throws DataError if the person was enrolled with another provider.
    PersonRecord add_encoding(const std::string& person_id, const std::string& display_name,
                              const std::map<std::string, std::string>& info, const std::string& provider,
                              const FaceEncoding& encoding, std::int64_t now_ms);

    std::optional<PersonRecord> find(const std::string& person_id) const;
    /// Records ordered by person id.
    std::vector<PersonRecord> snapshot() const;
    std::size_t size() const;
    bool contains(const std::string& person_id) const;

    /// Writes a compacted log (one line per person) atomically via rename.
    void persist_to(const std::filesystem::path& path) const;

    const std::vector<std::string>& warnings() const noexcept { return warnings_; }
    const std::optional<std::filesystem::path>& path() const noexcept { return path_; }

private:
    // Readers pass through the turnstile before taking the shared lock, so a
    // waiting writer blocks new readers instead of being starved by them.
    std::shared_lock<std::shared_mutex> read_lock() const {
        std::lock_guard turn(turnstile_);
        return std::shared_lock(mutex_);
    }

    void replay(std::string_view text);
    void apply(PersonRecord&& line);

    std::optional<std::filesystem::path> path_;
    std::map<std::string, PersonRecord> people_;
    std::vector<std::string> warnings_;
    mutable std::shared_mutex mutex_;
    mutable std::mutex turnstile_;
};

/// One log line for `rec` (no trailing newline).
std::string person_line_json(const PersonRecord& rec);
/// Parses one log line; throws std::invalid_argument on bad content.
PersonRecord parse_person_line(std::string_view line);

enum class IdStatus { Recognized, Unknown, NoFace };
std::string_view to_string(IdStatus s);

enum class AlertReason { UnknownPerson, NoFace };
std::string_view to_string(AlertReason r);

struct AlertEvent {
    std::int64_t timestamp_ms = 0;
    std::string frame_ref;
    std::optional<double> best_similarity;
    AlertReason reason = AlertReason::UnknownPerson;
};

std::string alert_json(const AlertEvent& a);

struct IdentificationResult {
    IdStatus status = IdStatus::Unknown;
    std::optional<std::string> person_id;
    std::optional<double> similarity_pct;
    std::optional<double> d_face;
    /// Present exactly when status is not Recognized.
    std::optional<AlertEvent> alert;
};

using Clock = std::function<std::int64_t()>;
/// Wall clock in milliseconds since the Unix epoch.
std::int64_t system_clock_ms();

using LogSink = std::function<void(std::string_view)>;

struct GatePassConfig {
    PipelineConfig pipeline;
    MatcherConfig matcher;
    /// Alerts are appended here as JSON lines when set.
    std::optional<std::filesystem::path> alert_log;
    /// Alerts are also POSTed here (plain http) when set.
    std::optional<std::string> alert_url;
    /// Extra in-process alert hook.
    std::function<void(const AlertEvent&)> on_alert;
    Clock clock = system_clock_ms;
    /// Diagnostics (failed callbacks, truncated logs). Defaults to stderr.
    LogSink log;
};

/// POST `body` as JSON to an http:// URL with a 5 s timeout; returns an
/// error description on failure.
std::optional<std::string> post_json(const std::string& url, const std::string& body);

/// Enrollment and identification over a PersonStore.
class GatePass {
public:
    /// `model`, `provider` and `store` are referenced, not copied, and must
    /// outlive the GatePass.
    GatePass(const CascadeModel& model, const EmbeddingProvider& provider, PersonStore& store,
             GatePassConfig config = {});
    GatePass(CascadeModel&&, const EmbeddingProvider&, PersonStore&, GatePassConfig = {}) = delete;
    GatePass(const CascadeModel&, EmbeddingProvider&&, PersonStore&, GatePassConfig = {}) = delete;

    /// Detects and encodes the face in `image`, then appends it to the store.
    /// A person id is generated from the store size when `person_id` is empty.
    /// Throws NoFaceError when no face is found.
    PersonRecord enroll(const std::string& person_id, const std::string& display_name,
                        const std::map<std::string, std::string>& info, const RgbImage& image);

    /// Nearest stored encoding (ties: earliest enrollment, then person id)
    /// gated by the match threshold. Never modifies the store.
    IdentificationResult identify(const RgbImage& frame, const std::string& frame_ref = "");

private:
    void emit(const AlertEvent& a);
    void log(std::string_view msg) const;

    const CascadeModel& model_;
    const EmbeddingProvider& provider_;
    PersonStore& store_;
    GatePassConfig config_;
};

/// Nearest-neighbour decision over a set of records (exposed for testing).
IdentificationResult nearest_person(std::span<const PersonRecord> people, const FaceEncoding& probe,
                                    const std::string& provider, const MatcherConfig& cfg);

}  // namespace facegate
