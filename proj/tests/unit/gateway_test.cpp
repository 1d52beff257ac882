#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "coachai/error.hpp"
#include "coachai/gateway.hpp"
#include "coachai/rng.hpp"
#include "test_support.hpp"

using namespace coachai;
using namespace coachai::gateway;
using coachai::testing::read_fixture;

namespace {

Timestamp t0() { return at(make_date(2024, 1, 1), TimeOfDay::hm(9, 0)); }

InboundMessage update(std::int64_t id, Timestamp when = t0()) { return {"c1", "msg" + std::to_string(id), when, id}; }

std::vector<std::int64_t> ids(const std::vector<InboundMessage>& ms) {
    std::vector<std::int64_t> out;
    for (const auto& m : ms)
        out.push_back(m.update_id);
    return out;
}

// Minimal bot-platform stub recording every sendMessage body.
class StubBotServer {
public:
    StubBotServer() {
        server_.Post("/botTEST/sendMessage", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(mutex_);
            bodies_.push_back(req.body);
            if (fail_ > 0) {
                --fail_;
                res.status = 503;
                return;
            }
            if (reject_) {
                res.status = 400;
                res.set_content(R"({"ok":false,"description":"Bad Request: chat not found"})", "application/json");
                return;
            }
            res.set_content(R"({"ok":true,"result":{"message_id":)" + std::to_string(bodies_.size()) + "}}",
                            "application/json");
        });
        server_.Get("/botTEST/getUpdates", [](const httplib::Request& req, httplib::Response& res) {
            const auto offset = req.get_param_value("offset");
            if (offset == "0")
                res.set_content(R"({"ok":true,"result":[{"update_id":5,"message":{"chat":{"id":7},"text":"hi","date":1}},
                                 {"update_id":6,"message":{"chat":{"id":7}}}]})",
                                "application/json");
            else
                res.set_content(R"({"ok":true,"result":[]})", "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubBotServer() {
        server_.stop();
        thread_.join();
    }
    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/botTEST"; }
    std::vector<std::string> bodies() {
        std::lock_guard lock(mutex_);
        return bodies_;
    }
    void fail(int n) { fail_ = n; }
    void reject(bool r) { reject_ = r; }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::mutex mutex_;
    std::vector<std::string> bodies_;
    std::atomic<int> fail_{0};
    std::atomic<bool> reject_{false};
};

}  // namespace

TEST(Console, SendAppendsToTranscript) {
    auto console = std::make_shared<ConsoleChannel>();
    Gateway gw(console);
    gw.bind("c1", "u1");
    OutboundMessage m{"c1", "Hello", {"A", "B"}, "s1:1"};
    auto receipt = gw.send(m, t0());
    EXPECT_EQ(receipt.channel, "console");
    EXPECT_EQ(receipt.correlation_id, "s1:1");
    ASSERT_EQ(console->transcript("c1").size(), 1u);
    EXPECT_EQ(console->transcript("c1")[0], m);
}

TEST(Console, RoutingAndInvariants) {
    auto console = std::make_shared<ConsoleChannel>();
    Gateway gw(console);
    try {
        gw.send({"nobody", "Hi", {}, ""}, t0());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::routing);
    }
    gw.bind("c1", "u1");
    EXPECT_THROW(gw.send({"c1", "", {}, ""}, t0()), Error);
    EXPECT_THROW(gw.send({"c1", "Pick", {"A", "A"}, ""}, t0()), Error);
    gw.unbind("c1");
    EXPECT_THROW(gw.send({"c1", "Hi", {}, ""}, t0()), Error);
}

TEST(Console, RetryThenDeadLetter) {
    auto console = std::make_shared<ConsoleChannel>();
    Gateway gw(console);
    std::vector<std::chrono::milliseconds> sleeps;
    gw.set_sleeper([&](std::chrono::milliseconds d) { sleeps.push_back(d); });
    gw.bind("c1", "u1");
    console->fail_next(2);
    auto receipt = gw.send({"c1", "Hi", {}, ""}, t0());
    EXPECT_EQ(receipt.attempts, 3);
    EXPECT_EQ(sleeps, (std::vector<std::chrono::milliseconds>{std::chrono::milliseconds{200},
                                                              std::chrono::milliseconds{400}}));
    console->fail_next(3);
    try {
        gw.send({"c1", "Again", {}, ""}, t0());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::transport);
    }
    auto dead = gw.take_dead_letters();
    ASSERT_EQ(dead.size(), 1u);
    EXPECT_EQ(dead[0].message.text, "Again");
    EXPECT_EQ(dead[0].attempts, 3);
    EXPECT_TRUE(gw.take_dead_letters().empty());
    EXPECT_EQ(console->transcript("c1").size(), 1u);
}

TEST(Console, PerChatFifoUnderConcurrentSenders) {
    auto console = std::make_shared<ConsoleChannel>();
    Gateway gw(console);
    for (int c = 0; c < 4; ++c)
        gw.bind("c" + std::to_string(c), "u" + std::to_string(c));
    std::vector<std::thread> threads;
    for (int c = 0; c < 4; ++c)
        threads.emplace_back([&, c] {
            for (int i = 0; i < 200; ++i)
                gw.send({"c" + std::to_string(c), std::to_string(i), {}, ""}, t0());
        });
    for (auto& t : threads)
        t.join();
    for (int c = 0; c < 4; ++c) {
        const auto& tr = console->transcript("c" + std::to_string(c));
        ASSERT_EQ(tr.size(), 200u);
        for (int i = 0; i < 200; ++i)
            EXPECT_EQ(tr[static_cast<std::size_t>(i)].text, std::to_string(i));
    }
}

TEST(Receive, DuplicatesReorderAndEmpty) {
    auto console = std::make_shared<ConsoleChannel>();
    Gateway gw(console);
    gw.bind("c1", "u1");
    EXPECT_TRUE(gw.receive(t0()).empty());
    console->inject_raw(update(7));
    console->inject_raw(update(6));
    console->inject_raw(update(7));
    auto got = gw.receive(t0());
    ASSERT_EQ(got.size(), 2u);
    EXPECT_EQ(got[0].message.update_id, 6);
    EXPECT_EQ(got[1].message.update_id, 7);
    EXPECT_EQ(got[0].user_id, "u1");
    console->inject_raw(update(7));
    EXPECT_TRUE(gw.receive(t0()).empty());
    console->inject("other", "who?", t0());
    EXPECT_TRUE(gw.receive(t0()).empty());
}

TEST(Sequencer, HoldsGapsUntilFilled) {
    InboundSequencer seq;
    EXPECT_EQ(ids(seq.accept({update(5)}, t0())), (std::vector<std::int64_t>{5}));
    EXPECT_TRUE(seq.accept({update(7)}, t0()).empty());
    EXPECT_EQ(seq.pending(), 1u);
    EXPECT_EQ(ids(seq.accept({update(6)}, t0())), (std::vector<std::int64_t>{6, 7}));
}

TEST(Sequencer, ForcedDeliveryOnOverflowAndTimeout) {
    InboundSequencer seq;
    seq.accept({update(1)}, t0());
    std::vector<InboundMessage> batch;
    for (int id = 3; id <= 19; ++id)
        batch.push_back(update(id));
    auto out = seq.accept(batch, t0());
    EXPECT_EQ(out.front().update_id, 3);
    EXPECT_EQ(out.size(), 17u);
    EXPECT_TRUE(seq.accept({update(2)}, t0()).empty());
    EXPECT_EQ(seq.dropped(), 1u);

    InboundSequencer timed;
    timed.accept({update(1)}, t0());
    EXPECT_TRUE(timed.accept({update(3)}, t0()).empty());
    EXPECT_EQ(ids(timed.accept({}, t0() + std::chrono::seconds{5})), (std::vector<std::int64_t>{3}));
}

TEST(Sequencer, StrictlyIncreasingUnderBoundedReorderingAndDuplicates) {
    Rng rng(31);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<InboundMessage> stream;
        for (std::int64_t id = 1; id <= 200; ++id)
            stream.push_back(update(id));
        // Bounded reordering: swap within windows of 8, then sprinkle duplicates.
        for (std::size_t i = 0; i + 1 < stream.size(); ++i)
            std::swap(stream[i], stream[std::min(stream.size() - 1, i + rng.below(8))]);
        for (int d = 0; d < 40; ++d)
            stream.insert(stream.begin() + static_cast<long>(rng.below(stream.size())),
                          stream[rng.below(stream.size())]);
        InboundSequencer seq;
        std::vector<std::int64_t> delivered;
        std::size_t pos = 0;
        while (pos < stream.size()) {
            const std::size_t n = 1 + rng.below(10);
            std::vector<InboundMessage> batch(stream.begin() + static_cast<long>(pos),
                                              stream.begin() + static_cast<long>(std::min(stream.size(), pos + n)));
            pos += n;
            for (const auto& m : seq.accept(batch, t0()))
                delivered.push_back(m.update_id);
        }
        for (const auto& m : seq.flush())
            delivered.push_back(m.update_id);
        for (std::size_t i = 1; i < delivered.size(); ++i)
            ASSERT_LT(delivered[i - 1], delivered[i]);
    }
}

TEST(Webhook, ParseUpdate) {
    auto parsed = parse_update(Json::parse(read_fixture("golden/update.json")));
    ASSERT_TRUE(parsed);
    EXPECT_EQ(parsed->update_id, 900001);
    EXPECT_EQ(parsed->chat_id, "424242");
    EXPECT_EQ(parsed->text, "Partly");
    EXPECT_EQ(parsed->received_at, at(make_date(2024, 1, 1), TimeOfDay::hm(9, 0)));
    EXPECT_FALSE(parse_update(Json::parse(R"({"update_id": 1})")));
    EXPECT_FALSE(parse_update(Json::parse(R"({"update_id": 1, "message": {"chat": {"id": 1}}})")));
    EXPECT_FALSE(parse_update(Json::parse("[1,2]")));
}

TEST(Webhook, GoldenSendMessageRequest) {
    StubBotServer stub;
    auto channel = std::make_shared<WebhookChannel>(WebhookOptions{stub.base_url()});
    Gateway gw(channel);
    gw.bind("424242", "u1");
    auto receipt = gw.send({"424242", "How was your walk today?", {"Yes", "Partly", "No"}, "s1:2"}, t0());
    EXPECT_EQ(receipt.message_id, "1");
    EXPECT_EQ(receipt.channel, "telegram");
    ASSERT_EQ(stub.bodies().size(), 1u);
    EXPECT_EQ(Json::parse(stub.bodies()[0]), Json::parse(read_fixture("golden/send_message.json")));
    EXPECT_EQ(send_message_body({"abc", "x", {}, ""}), (Json{{"chat_id", "abc"}, {"text", "x"}}));
}

TEST(Webhook, TransportRetriesAndRoutingRejection) {
    StubBotServer stub;
    auto channel = std::make_shared<WebhookChannel>(WebhookOptions{stub.base_url()});
    Gateway gw(channel);
    gw.set_sleeper([](std::chrono::milliseconds) {});
    gw.bind("1", "u1");
    stub.fail(2);
    EXPECT_EQ(gw.send({"1", "retry me", {}, ""}, t0()).attempts, 3);
    stub.reject(true);
    try {
        gw.send({"1", "nope", {}, ""}, t0());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::routing);
    }
    auto down = std::make_shared<WebhookChannel>(WebhookOptions{"http://127.0.0.1:1/botX", 1});
    Gateway dead(down);
    dead.set_sleeper([](std::chrono::milliseconds) {});
    dead.bind("1", "u1");
    EXPECT_THROW(dead.send({"1", "hello", {}, ""}, t0()), Error);
    EXPECT_EQ(dead.take_dead_letters().size(), 1u);
}

TEST(Webhook, IngestionAndPolling) {
    StubBotServer stub;
    WebhookChannel hook(WebhookOptions{stub.base_url()});
    EXPECT_TRUE(hook.ingest(read_fixture("golden/update.json")));
    EXPECT_FALSE(hook.ingest("not json"));
    EXPECT_FALSE(hook.ingest(R"({"update_id": "x"})"));
    auto got = hook.poll();
    ASSERT_EQ(got.size(), 1u);
    EXPECT_EQ(got[0].text, "Partly");

    WebhookChannel polling(WebhookOptions{stub.base_url(), 5, true});
    auto polled = polling.poll();
    ASSERT_EQ(polled.size(), 1u);
    EXPECT_EQ(polled[0].chat_id, "7");
    EXPECT_TRUE(polling.poll().empty());
}
