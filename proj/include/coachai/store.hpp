#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "coachai/json_support.hpp"
#include "coachai/time.hpp"

namespace coachai::store {

struct StoreRecord {
    std::string record_type;
    std::string record_id;
    std::int64_t version = 0;
    Json payload;
    Timestamp updated_at{};

    friend bool operator==(const StoreRecord&, const StoreRecord&) = default;
};

struct QuarantineEntry {
    std::string source;  // file name, or "record <type>/<id>"
    int line = 0;
    std::string error;
    std::string excerpt;

    friend bool operator==(const QuarantineEntry&, const QuarantineEntry&) = default;
};

struct StoreOptions {
    bool sync = true;                   // fsync after every append
    std::size_t snapshot_every = 5000;  // appends between automatic snapshots; 0 = never
};

// CRC-32 (zlib) of a log line body.
std::uint32_t checksum(std::string_view data);

// Single-writer document store: an append-only log (events.jsonl, one
// "<crc32> <json>" line per write) plus snapshot.json, replaced atomically.
// Every put is appended before it is acknowledged. Corrupt log lines are
// quarantined on load and skipped.
class Store {
public:
    Store() = default;  // in memory, nothing persisted
    static Store open(const std::filesystem::path& dir, StoreOptions options = {});

    Store(Store&&) noexcept;
    Store& operator=(Store&&) noexcept;
    Store(const Store&) = delete;
    Store& operator=(const Store&) = delete;
    ~Store();

    const StoreRecord* get(const std::string& type, const std::string& id) const;
    std::vector<const StoreRecord*> list(const std::string& type) const;
    const std::map<std::pair<std::string, std::string>, StoreRecord>& records() const noexcept { return records_; }

    // Writes a new version. With expected_version set, a mismatch with the
    // current version (0 for absent) throws stale_write.
    std::int64_t put(const std::string& type, const std::string& id, Json payload, Timestamp now,
                     std::optional<std::int64_t> expected_version = std::nullopt);

    void snapshot();
    void add_quarantine(QuarantineEntry entry) { quarantine_.push_back(std::move(entry)); }
    const std::vector<QuarantineEntry>& quarantine() const noexcept { return quarantine_; }
    std::uint64_t sequence() const noexcept { return seq_; }
    bool persistent() const noexcept { return log_ != nullptr; }
    const std::filesystem::path& directory() const noexcept { return dir_; }

private:
    void load();
    void append(const StoreRecord& record);
    void close();

    std::filesystem::path dir_;
    StoreOptions options_;
    std::FILE* log_ = nullptr;
    std::map<std::pair<std::string, std::string>, StoreRecord> records_;
    std::vector<QuarantineEntry> quarantine_;
    std::uint64_t seq_ = 0;
    std::size_t appends_since_snapshot_ = 0;
};

void to_json(Json& j, const StoreRecord& r);
void from_json(const Json& j, StoreRecord& r);
void to_json(Json& j, const QuarantineEntry& q);

}  // namespace coachai::store
