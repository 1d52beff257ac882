#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "coachai/domain.hpp"
#include "coachai/messages.hpp"
#include "coachai/time.hpp"

namespace coachai::gateway {

struct DeliveryReceipt {
    std::string channel;
    std::string chat_id;
    std::string message_id;
    std::string correlation_id;
    int attempts = 1;

    friend bool operator==(const DeliveryReceipt&, const DeliveryReceipt&) = default;
};

// Transport errors (ErrorKind::transport) are retryable; routing errors are not.
class Channel {
public:
    virtual ~Channel() = default;
    virtual std::string name() const = 0;
    virtual DeliveryReceipt deliver(const OutboundMessage& message) = 0;
    // Raw inbound updates since the last poll, possibly duplicated or out of order.
    virtual std::vector<InboundMessage> poll() = 0;
};

class ConsoleChannel : public Channel {
public:
    std::string name() const override { return "console"; }
    DeliveryReceipt deliver(const OutboundMessage& message) override;
    std::vector<InboundMessage> poll() override;

    // Queues a user reply; update ids increase per channel.
    InboundMessage inject(const std::string& chat_id, const std::string& text, Timestamp at);
    // Queues a raw update as given, for duplicate/reorder tests.
    void inject_raw(InboundMessage message);

    const std::vector<OutboundMessage>& transcript(const std::string& chat_id) const;
    std::size_t delivered_count() const;

    // The next `n` deliveries throw a transport error.
    void fail_next(int n) { failures_ = n; }

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::vector<OutboundMessage>> transcripts_;
    std::deque<InboundMessage> inbox_;
    std::int64_t next_update_ = 1;
    std::uint64_t next_message_ = 1;
    int failures_ = 0;
};

struct WebhookOptions {
    std::string base_url;  // e.g. http://127.0.0.1:8081/bot<token>
    int timeout_seconds = 10;
    bool poll_updates = false;  // use getUpdates instead of webhook ingestion
};

// COACHAI_BOT_BASE_URL, else https://api.telegram.org/bot<COACHAI_BOT_TOKEN>.
std::optional<std::string> base_url_from_environment();

// Outbound sendMessage request body for `message`.
Json send_message_body(const OutboundMessage& message);

// Parses {update_id, message:{chat:{id}, text, date}}; nullopt when malformed.
std::optional<InboundMessage> parse_update(const Json& update);

class WebhookChannel : public Channel {
public:
    explicit WebhookChannel(WebhookOptions options);
    ~WebhookChannel() override;

    std::string name() const override { return "telegram"; }
    DeliveryReceipt deliver(const OutboundMessage& message) override;
    std::vector<InboundMessage> poll() override;

    // Webhook ingestion. Malformed bodies are logged and skipped.
    bool ingest(const std::string& body);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct SequencerOptions {
    std::size_t buffer = 16;
    Duration max_hold = std::chrono::seconds{2};
};

// De-duplicates and reorders inbound updates. Delivers contiguous update ids
// at once; a gap is held until the buffer overflows or the oldest buffered
// update has waited max_hold. Updates at or below the delivered watermark
// are dropped.
class InboundSequencer {
public:
    explicit InboundSequencer(SequencerOptions options = {}) : options_(options) {}

    std::vector<InboundMessage> accept(std::vector<InboundMessage> batch, Timestamp now);
    std::vector<InboundMessage> flush();

    std::optional<std::int64_t> watermark() const noexcept { return delivered_; }
    std::size_t dropped() const noexcept { return dropped_; }
    std::size_t pending() const noexcept { return buffer_.size(); }

private:
    std::vector<InboundMessage> drain(Timestamp now, bool force);

    SequencerOptions options_;
    std::optional<std::int64_t> delivered_;
    std::map<std::int64_t, InboundMessage> buffer_;
    std::size_t dropped_ = 0;
};

struct RetryPolicy {
    int attempts = 3;
    std::chrono::milliseconds first_backoff{200};
    double multiplier = 2.0;
};

struct DeadLetter {
    OutboundMessage message;
    std::string error;
    int attempts = 0;
    Timestamp at{};
};

struct RoutedInbound {
    UserId user_id;
    InboundMessage message;
};

class Gateway {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit Gateway(std::shared_ptr<Channel> channel, RetryPolicy retry = {}, SequencerOptions sequencing = {});

    void bind(const std::string& chat_id, const UserId& user);
    void unbind(const std::string& chat_id);
    std::optional<UserId> user_for(const std::string& chat_id) const;

    // Validates, routes and hands off with retries. On exhaustion records a
    // dead letter and throws transport. Unbound chat: routing error.
    DeliveryReceipt send(const OutboundMessage& message, Timestamp now);

    // Ordered, de-duplicated inbound for bound chats.
    std::vector<RoutedInbound> receive(Timestamp now);

    std::vector<DeadLetter> take_dead_letters();
    Channel& channel() { return *channel_; }
    void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

private:
    std::mutex& chat_mutex(const std::string& chat_id);

    std::shared_ptr<Channel> channel_;
    RetryPolicy retry_;
    Sleeper sleeper_;
    mutable std::mutex mutex_;
    std::map<std::string, UserId> bindings_;
    std::map<std::string, std::unique_ptr<std::mutex>> chat_mutexes_;
    InboundSequencer sequencer_;
    std::vector<DeadLetter> dead_letters_;
};

// Checks the OutboundMessage invariants: non-empty text, unique keyboard labels.
void check(const OutboundMessage& message);

}  // namespace coachai::gateway
