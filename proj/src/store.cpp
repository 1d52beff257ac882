#include "coachai/store.hpp"

#include <array>
#include <fstream>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include "coachai/error.hpp"
#include "coachai/log.hpp"

namespace coachai::store {

namespace fs = std::filesystem;

namespace {

constexpr const char* kLogName = "events.jsonl";
constexpr const char* kSnapshotName = "snapshot.json";

std::string hex8(std::uint32_t v) {
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08x", v);
    return buf;
}

void fsync_path(const fs::path& p) {
    int fd = ::open(p.c_str(), O_RDONLY);
    if (fd >= 0) {
        ::fsync(fd);
        ::close(fd);
    }
}

std::string excerpt(const std::string& line) { return line.size() > 120 ? line.substr(0, 120) + "..." : line; }

}  // namespace

std::uint32_t checksum(std::string_view data) {
    return static_cast<std::uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size())));
}

Store Store::open(const fs::path& dir, StoreOptions options) {
    Store s;
    s.dir_ = dir;
    s.options_ = options;
    fs::create_directories(dir);
    s.load();
    const fs::path log_path = dir / kLogName;
    // Terminate a torn final line so the next append starts cleanly.
    bool needs_newline = false;
    if (fs::exists(log_path) && fs::file_size(log_path) > 0) {
        std::ifstream in(log_path, std::ios::binary);
        in.seekg(-1, std::ios::end);
        needs_newline = in.get() != '\n';
    }
    s.log_ = std::fopen(log_path.c_str(), "ab");
    if (!s.log_)
        throw Error(ErrorKind::invalid_state, "cannot open " + log_path.string());
    if (needs_newline)
        std::fputc('\n', s.log_);
    return s;
}

Store::Store(Store&& other) noexcept { *this = std::move(other); }

Store& Store::operator=(Store&& other) noexcept {
    if (this != &other) {
        close();
        dir_ = std::move(other.dir_);
        options_ = other.options_;
        log_ = std::exchange(other.log_, nullptr);
        records_ = std::move(other.records_);
        quarantine_ = std::move(other.quarantine_);
        seq_ = other.seq_;
        appends_since_snapshot_ = other.appends_since_snapshot_;
    }
    return *this;
}

Store::~Store() { close(); }

void Store::close() {
    if (log_) {
        std::fclose(log_);
        log_ = nullptr;
    }
}

void Store::load() {
    const fs::path snap = dir_ / kSnapshotName;
    if (fs::exists(snap)) {
        std::ifstream in(snap, std::ios::binary);
        std::stringstream buf;
        buf << in.rdbuf();
        Json doc = Json::parse(buf.str(), nullptr, false);
        try {
            if (doc.is_discarded() || doc.value("format", "") != "coachai-store")
                throw Error(ErrorKind::domain, "snapshot is not a store document");
            const std::string body = doc.at("records").dump();
            if (doc.value("crc", "") != hex8(checksum(body)))
                throw Error(ErrorKind::domain, "snapshot checksum mismatch");
            for (const auto& r : doc.at("records")) {
                auto rec = r.get<StoreRecord>();
                records_[{rec.record_type, rec.record_id}] = std::move(rec);
            }
            seq_ = doc.at("seq").get<std::uint64_t>();
        } catch (const std::exception& e) {
            records_.clear();
            quarantine_.push_back({kSnapshotName, 0, e.what(), excerpt(buf.str())});
            log::error(std::string("snapshot quarantined: ") + e.what());
        }
    }
    const fs::path log_path = dir_ / kLogName;
    if (!fs::exists(log_path))
        return;
    std::ifstream in(log_path, std::ios::binary);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        try {
            if (line.size() < 10 || line[8] != ' ')
                throw Error(ErrorKind::domain, "missing checksum");
            const std::string body = line.substr(9);
            if (line.substr(0, 8) != hex8(checksum(body)))
                throw Error(ErrorKind::domain, "checksum mismatch");
            Json entry = Json::parse(body);
            const auto seq = entry.at("seq").get<std::uint64_t>();
            if (seq <= seq_)
                continue;  // already folded into the snapshot
            auto rec = entry.at("record").get<StoreRecord>();
            records_[{rec.record_type, rec.record_id}] = std::move(rec);
            seq_ = seq;
        } catch (const std::exception& e) {
            quarantine_.push_back({kLogName, line_no, e.what(), excerpt(line)});
            log::error("log line " + std::to_string(line_no) + " quarantined: " + e.what());
        }
    }
}

const StoreRecord* Store::get(const std::string& type, const std::string& id) const {
    auto it = records_.find({type, id});
    return it == records_.end() ? nullptr : &it->second;
}

std::vector<const StoreRecord*> Store::list(const std::string& type) const {
    std::vector<const StoreRecord*> out;
    for (auto it = records_.lower_bound({type, ""}); it != records_.end() && it->first.first == type; ++it)
        out.push_back(&it->second);
    return out;
}

std::int64_t Store::put(const std::string& type, const std::string& id, Json payload, Timestamp now,
                        std::optional<std::int64_t> expected_version) {
    const StoreRecord* current = get(type, id);
    const std::int64_t version = current ? current->version : 0;
    if (expected_version && *expected_version != version)
        throw Error(ErrorKind::stale_write, type + "/" + id + " is at version " + std::to_string(version) +
                                                ", write expected " + std::to_string(*expected_version));
    StoreRecord rec{type, id, version + 1, std::move(payload), now};
    append(rec);
    records_[{type, id}] = std::move(rec);
    if (log_ && options_.snapshot_every && ++appends_since_snapshot_ >= options_.snapshot_every)
        snapshot();
    return version + 1;
}

void Store::append(const StoreRecord& record) {
    ++seq_;
    if (!log_)
        return;
    const std::string body = Json{{"seq", seq_}, {"record", record}}.dump();
    const std::string line = hex8(checksum(body)) + " " + body + "\n";
    if (std::fwrite(line.data(), 1, line.size(), log_) != line.size() || std::fflush(log_) != 0)
        throw Error(ErrorKind::invalid_state, "append to the event log failed");
    if (options_.sync)
        ::fsync(fileno(log_));
}

void Store::snapshot() {
    if (!log_)
        return;
    Json records = Json::array();
    for (const auto& [key, rec] : records_)
        records.push_back(rec);
    const std::string body = records.dump();
    Json doc{{"format", "coachai-store"}, {"version", 1}, {"seq", seq_}, {"crc", hex8(checksum(body))},
             {"records", std::move(records)}};
    const fs::path tmp = dir_ / (std::string(kSnapshotName) + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << doc.dump() << '\n';
        if (!out)
            throw Error(ErrorKind::invalid_state, "writing the snapshot failed");
    }
    if (options_.sync)
        fsync_path(tmp);
    fs::rename(tmp, dir_ / kSnapshotName);
    if (options_.sync)
        fsync_path(dir_);
    // Entries up to seq_ now live in the snapshot; start a fresh log.
    std::fclose(log_);
    log_ = std::fopen((dir_ / kLogName).c_str(), "wb");
    if (!log_)
        throw Error(ErrorKind::invalid_state, "cannot reopen the event log");
    appends_since_snapshot_ = 0;
}

void to_json(Json& j, const StoreRecord& r) {
    j = Json{{"type", r.record_type},
             {"id", r.record_id},
             {"version", r.version},
             {"payload", r.payload},
             {"updated_at", r.updated_at}};
}

void from_json(const Json& j, StoreRecord& r) {
    r.record_type = require_field<std::string>(j, "type");
    r.record_id = require_field<std::string>(j, "id");
    r.version = require_field<std::int64_t>(j, "version");
    r.payload = j.at("payload");
    r.updated_at = require_field<Timestamp>(j, "updated_at");
}

void to_json(Json& j, const QuarantineEntry& q) {
    j = Json{{"source", q.source}, {"line", q.line}, {"error", q.error}, {"excerpt", q.excerpt}};
}

}  // namespace coachai::store
