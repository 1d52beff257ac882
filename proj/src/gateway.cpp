#include "coachai/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <set>
#include <thread>

#include <httplib.h>

#include "coachai/error.hpp"
#include "coachai/log.hpp"

namespace coachai::gateway {

void check(const OutboundMessage& message) {
    if (message.text.empty())
        throw Error(ErrorKind::domain, "outbound text is empty");
    std::set<std::string> labels;
    for (const auto& label : message.keyboard)
        if (!labels.insert(label).second)
            throw Error(ErrorKind::domain, "duplicate keyboard label '" + label + "'");
}

// --- console -----------------------------------------------------------------

DeliveryReceipt ConsoleChannel::deliver(const OutboundMessage& message) {
    std::lock_guard lock(mutex_);
    if (failures_ > 0) {
        --failures_;
        throw Error(ErrorKind::transport, "console channel unavailable");
    }
    transcripts_[message.chat_id].push_back(message);
    return {name(), message.chat_id, "console-" + std::to_string(next_message_++), message.correlation_id, 1};
}

std::vector<InboundMessage> ConsoleChannel::poll() {
    std::lock_guard lock(mutex_);
    std::vector<InboundMessage> out(inbox_.begin(), inbox_.end());
    inbox_.clear();
    return out;
}

InboundMessage ConsoleChannel::inject(const std::string& chat_id, const std::string& text, Timestamp at) {
    std::lock_guard lock(mutex_);
    InboundMessage m{chat_id, text, at, next_update_++};
    inbox_.push_back(m);
    return m;
}

void ConsoleChannel::inject_raw(InboundMessage message) {
    std::lock_guard lock(mutex_);
    next_update_ = std::max(next_update_, message.update_id + 1);
    inbox_.push_back(std::move(message));
}

const std::vector<OutboundMessage>& ConsoleChannel::transcript(const std::string& chat_id) const {
    static const std::vector<OutboundMessage> empty;
    std::lock_guard lock(mutex_);
    auto it = transcripts_.find(chat_id);
    return it == transcripts_.end() ? empty : it->second;
}

std::size_t ConsoleChannel::delivered_count() const {
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (const auto& [chat, msgs] : transcripts_)
        n += msgs.size();
    return n;
}

// --- webhook -----------------------------------------------------------------

std::optional<std::string> base_url_from_environment() {
    if (const char* base = std::getenv("COACHAI_BOT_BASE_URL"); base && *base)
        return std::string(base);
    if (const char* token = std::getenv("COACHAI_BOT_TOKEN"); token && *token)
        return "https://api.telegram.org/bot" + std::string(token);
    return std::nullopt;
}

namespace {

bool is_integer_text(const std::string& s) {
    if (s.empty())
        return false;
    std::size_t i = s[0] == '-' ? 1 : 0;
    if (i == s.size())
        return false;
    return std::all_of(s.begin() + static_cast<std::ptrdiff_t>(i), s.end(),
                       [](unsigned char c) { return std::isdigit(c); });
}

}  // namespace

Json send_message_body(const OutboundMessage& message) {
    Json body;
    if (is_integer_text(message.chat_id) && message.chat_id.size() < 19)
        body["chat_id"] = std::stoll(message.chat_id);
    else
        body["chat_id"] = message.chat_id;
    body["text"] = message.text;
    if (!message.keyboard.empty())
        body["reply_markup"] = Json{{"keyboard", Json::array({message.keyboard})}, {"one_time_keyboard", true}};
    return body;
}

std::optional<InboundMessage> parse_update(const Json& update) {
    if (!update.is_object() || !update.contains("update_id") || !update["update_id"].is_number_integer())
        return std::nullopt;
    if (!update.contains("message") || !update["message"].is_object())
        return std::nullopt;
    const Json& msg = update["message"];
    if (!msg.contains("chat") || !msg["chat"].is_object() || !msg["chat"].contains("id"))
        return std::nullopt;
    if (!msg.contains("text") || !msg["text"].is_string())
        return std::nullopt;
    InboundMessage out;
    out.update_id = update["update_id"].get<std::int64_t>();
    const Json& id = msg["chat"]["id"];
    if (id.is_number_integer())
        out.chat_id = std::to_string(id.get<std::int64_t>());
    else if (id.is_string())
        out.chat_id = id.get<std::string>();
    else
        return std::nullopt;
    out.text = msg["text"].get<std::string>();
    if (msg.contains("date") && msg["date"].is_number_integer())
        out.received_at = Timestamp{std::chrono::seconds{msg["date"].get<std::int64_t>()}};
    return out;
}

struct WebhookChannel::Impl {
    WebhookOptions options;
    std::string origin;  // scheme://host[:port]
    std::string prefix;  // path before /sendMessage
    std::mutex mutex;
    std::deque<InboundMessage> inbox;
    std::int64_t offset = 0;

    httplib::Client client() const {
        httplib::Client c(origin);
        c.set_connection_timeout(options.timeout_seconds, 0);
        c.set_read_timeout(options.timeout_seconds, 0);
        c.set_write_timeout(options.timeout_seconds, 0);
        return c;
    }
};

WebhookChannel::WebhookChannel(WebhookOptions options) : impl_(std::make_unique<Impl>()) {
    impl_->options = std::move(options);
    const std::string& url = impl_->options.base_url;
    const auto scheme = url.find("://");
    if (scheme == std::string::npos)
        throw Error(ErrorKind::domain, "bot base URL needs a scheme: " + url);
    const auto path = url.find('/', scheme + 3);
    impl_->origin = url.substr(0, path);
    impl_->prefix = path == std::string::npos ? "" : url.substr(path);
    while (!impl_->prefix.empty() && impl_->prefix.back() == '/')
        impl_->prefix.pop_back();
}

WebhookChannel::~WebhookChannel() = default;

DeliveryReceipt WebhookChannel::deliver(const OutboundMessage& message) {
    auto client = impl_->client();
    auto res = client.Post(impl_->prefix + "/sendMessage", send_message_body(message).dump(), "application/json");
    if (!res)
        throw Error(ErrorKind::transport, "sendMessage failed: " + httplib::to_string(res.error()));
    if (res->status >= 500 || res->status == 429)
        throw Error(ErrorKind::transport, "sendMessage returned HTTP " + std::to_string(res->status));
    Json reply = Json::parse(res->body, nullptr, false);
    if (res->status >= 400 || reply.is_discarded() || !reply.value("ok", false)) {
        std::string description = reply.is_object() ? reply.value("description", "") : "";
        throw Error(ErrorKind::routing, "sendMessage rejected for chat " + message.chat_id + " (HTTP " +
                                            std::to_string(res->status) + ") " + description);
    }
    std::string message_id;
    if (reply.contains("result") && reply["result"].is_object() && reply["result"].contains("message_id"))
        message_id = reply["result"]["message_id"].dump();
    return {name(), message.chat_id, message_id, message.correlation_id, 1};
}

bool WebhookChannel::ingest(const std::string& body) {
    Json update = Json::parse(body, nullptr, false);
    auto parsed = update.is_discarded() ? std::nullopt : parse_update(update);
    if (!parsed) {
        log::warn("skipping malformed update: " + body.substr(0, 200));
        return false;
    }
    std::lock_guard lock(impl_->mutex);
    impl_->inbox.push_back(*parsed);
    return true;
}

std::vector<InboundMessage> WebhookChannel::poll() {
    if (impl_->options.poll_updates) {
        auto client = impl_->client();
        auto res = client.Get(impl_->prefix + "/getUpdates?offset=" + std::to_string(impl_->offset));
        if (!res || res->status != 200)
            throw Error(ErrorKind::transport, "getUpdates failed");
        Json reply = Json::parse(res->body, nullptr, false);
        if (!reply.is_discarded() && reply.contains("result") && reply["result"].is_array()) {
            for (const auto& update : reply["result"]) {
                if (update.contains("update_id") && update["update_id"].is_number_integer())
                    impl_->offset = std::max(impl_->offset, update["update_id"].get<std::int64_t>() + 1);
                if (!ingest(update.dump()))
                    continue;
            }
        }
    }
    std::lock_guard lock(impl_->mutex);
    std::vector<InboundMessage> out(impl_->inbox.begin(), impl_->inbox.end());
    impl_->inbox.clear();
    return out;
}

// --- sequencing ----------------------------------------------------------------

std::vector<InboundMessage> InboundSequencer::accept(std::vector<InboundMessage> batch, Timestamp now) {
    for (auto& m : batch) {
        if ((delivered_ && m.update_id <= *delivered_) || buffer_.count(m.update_id)) {
            log::write(log::Level::debug, "dropping repeated update " + std::to_string(m.update_id));
            ++dropped_;
            continue;
        }
        buffer_.emplace(m.update_id, std::move(m));
    }
    return drain(now, false);
}

std::vector<InboundMessage> InboundSequencer::flush() { return drain(Timestamp{}, true); }

std::vector<InboundMessage> InboundSequencer::drain(Timestamp now, bool force) {
    std::vector<InboundMessage> out;
    auto release_front = [&] {
        auto it = buffer_.begin();
        if (delivered_ && it->first != *delivered_ + 1)
            log::warn("gap before update " + std::to_string(it->first) + "; earlier updates will be dropped");
        delivered_ = it->first;
        out.push_back(std::move(it->second));
        buffer_.erase(it);
    };
    while (!buffer_.empty()) {
        const auto& [id, msg] = *buffer_.begin();
        const bool contiguous = !delivered_ || id == *delivered_ + 1;
        // With no history the first batch defines the start of the stream.
        if (contiguous || force || buffer_.size() > options_.buffer || now - msg.received_at >= options_.max_hold)
            release_front();
        else
            break;
    }
    return out;
}

// --- gateway -------------------------------------------------------------------

Gateway::Gateway(std::shared_ptr<Channel> channel, RetryPolicy retry, SequencerOptions sequencing)
    : channel_(std::move(channel)),
      retry_(retry),
      sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }),
      sequencer_(sequencing) {}

void Gateway::bind(const std::string& chat_id, const UserId& user) {
    std::lock_guard lock(mutex_);
    bindings_[chat_id] = user;
}

void Gateway::unbind(const std::string& chat_id) {
    std::lock_guard lock(mutex_);
    bindings_.erase(chat_id);
}

std::optional<UserId> Gateway::user_for(const std::string& chat_id) const {
    std::lock_guard lock(mutex_);
    auto it = bindings_.find(chat_id);
    if (it == bindings_.end())
        return std::nullopt;
    return it->second;
}

std::mutex& Gateway::chat_mutex(const std::string& chat_id) {
    std::lock_guard lock(mutex_);
    auto& slot = chat_mutexes_[chat_id];
    if (!slot)
        slot = std::make_unique<std::mutex>();
    return *slot;
}

DeliveryReceipt Gateway::send(const OutboundMessage& message, Timestamp now) {
    check(message);
    if (!user_for(message.chat_id))
        throw Error(ErrorKind::routing, "chat " + message.chat_id + " is not bound to a user");
    std::lock_guard chat_lock(chat_mutex(message.chat_id));
    auto backoff = retry_.first_backoff;
    std::string last_error;
    for (int attempt = 1; attempt <= retry_.attempts; ++attempt) {
        try {
            auto receipt = channel_->deliver(message);
            receipt.attempts = attempt;
            return receipt;
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::transport)
                throw;
            last_error = e.what();
        }
        if (attempt < retry_.attempts) {
            sleeper_(backoff);
            backoff = std::chrono::milliseconds{static_cast<long>(backoff.count() * retry_.multiplier)};
        }
    }
    {
        std::lock_guard lock(mutex_);
        dead_letters_.push_back({message, last_error, retry_.attempts, now});
    }
    throw Error(ErrorKind::transport, "giving up on chat " + message.chat_id + " after " +
                                          std::to_string(retry_.attempts) + " attempts: " + last_error);
}

std::vector<RoutedInbound> Gateway::receive(Timestamp now) {
    auto ordered = sequencer_.accept(channel_->poll(), now);
    std::vector<RoutedInbound> out;
    for (auto& m : ordered) {
        auto user = user_for(m.chat_id);
        if (!user) {
            log::warn("inbound from unbound chat " + m.chat_id + " ignored");
            continue;
        }
        out.push_back({*user, std::move(m)});
    }
    return out;
}

std::vector<DeadLetter> Gateway::take_dead_letters() {
    std::lock_guard lock(mutex_);
    return std::exchange(dead_letters_, {});
}

}  // namespace coachai::gateway
