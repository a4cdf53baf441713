#pragma once

// Minimal scriptable chat-completions server for retry and auth tests.

#include <atomic>
#include <functional>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace xrec::test {

class FakeChatServer {
public:
    // `script` maps the 1-based request number to an HTTP status; 200 returns
    // a well-formed completion.
    explicit FakeChatServer(std::function<int(int)> script, std::string reply_text = "fake reply")
        : script_(std::move(script)), reply_text_(std::move(reply_text)) {
        server_.Post("/chat/completions", [this](const httplib::Request& req,
                                                 httplib::Response& res) {
            int n = ++requests_;
            last_body_ = req.body;
            if (req.has_header("Authorization")) {
                last_auth_ = req.get_header_value("Authorization");
            }
            int status = script_(n);
            if (status == 200) {
                nlohmann::json body{
                    {"choices",
                     nlohmann::json::array(
                         {{{"message", {{"role", "assistant"}, {"content", reply_text_}}}}})}};
                res.set_content(body.dump(), "application/json");
            } else if (status == -200) {  // 200 with a malformed payload
                res.set_content("{\"unexpected\":true}", "application/json");
            } else {
                res.status = status;
                res.set_content("{\"error\":\"scripted\"}", "application/json");
            }
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this]() { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~FakeChatServer() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
    int requests() const { return requests_.load(); }
    const std::string& last_body() const { return last_body_; }
    const std::string& last_auth() const { return last_auth_; }

private:
    std::function<int(int)> script_;
    std::string reply_text_;
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<int> requests_{0};
    std::string last_body_;
    std::string last_auth_;
};

}  // namespace xrec::test
