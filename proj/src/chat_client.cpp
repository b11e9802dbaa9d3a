#include "wmlab/chat_client.hpp"

#include <condition_variable>
#include <cstdlib>

#include "httplib.h"
#include "wmlab/errors.hpp"

namespace wmlab {

// Counting gate bounding concurrent requests.
struct ChatClient::Gate {
  std::mutex m;
  std::condition_variable cv;
  std::size_t free;

  explicit Gate(std::size_t n) : free(n) {}
  void acquire() {
    std::unique_lock lock(m);
    cv.wait(lock, [&] { return free > 0; });
    --free;
  }
  void release() {
    {
      std::lock_guard lock(m);
      ++free;
    }
    cv.notify_one();
  }
};

ChatEndpointConfig ChatEndpointConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("endpoint", "expected an object");
  ChatEndpointConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "base_url") c.base_url = value.get<std::string>();
      else if (key == "path") c.path = value.get<std::string>();
      else if (key == "model") c.model = value.get<std::string>();
      else if (key == "prompt_template") c.prompt_template = value.get<std::string>();
      else if (key == "timeout_seconds") c.timeout_seconds = value.get<double>();
      else if (key == "auth_env") c.auth_env = value.get<std::string>();
      else if (key == "max_in_flight") c.max_in_flight = value.get<std::size_t>();
      else throw ConfigError("endpoint." + key, "unknown key");
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("endpoint." + key, "wrong type");
    }
  }
  if (c.base_url.empty()) throw ConfigError("endpoint.base_url", "required key missing");
  if (!(c.timeout_seconds > 0)) throw ConfigError("endpoint.timeout_seconds", "must be positive");
  if (c.max_in_flight == 0) throw ConfigError("endpoint.max_in_flight", "must be >= 1");
  return c;
}

std::string render_template(
    std::string_view tmpl,
    const std::vector<std::pair<std::string, std::string>>& values) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    bool replaced = false;
    if (tmpl[i] == '{') {
      for (const auto& [name, value] : values) {
        const std::string needle = "{" + name + "}";
        if (tmpl.compare(i, needle.size(), needle) == 0) {
          out += value;
          i += needle.size();
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out += tmpl[i++];
  }
  return out;
}

ChatClient::ChatClient(ChatEndpointConfig cfg, std::ostream* log)
    : cfg_(std::move(cfg)), log_(log), gate_(std::make_unique<Gate>(cfg_.max_in_flight)) {}

ChatClient::~ChatClient() = default;

std::string ChatClient::complete(const std::string& user_content) const {
  nlohmann::json request = {
      {"model", cfg_.model},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", user_content}}})},
  };
  const std::string body = request.dump();

  httplib::Headers headers;
  if (!cfg_.auth_env.empty()) {
    if (const char* token = std::getenv(cfg_.auth_env.c_str()))
      headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  httplib::Result res = [&] {
    gate_->acquire();
    struct Release {
      Gate* g;
      ~Release() { g->release(); }
    } release{gate_.get()};
    httplib::Client client(cfg_.base_url);
    const auto secs = static_cast<time_t>(cfg_.timeout_seconds);
    const auto usecs = static_cast<time_t>((cfg_.timeout_seconds - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    return client.Post(cfg_.path, headers, body, "application/json");
  }();

  if (log_) {
    std::lock_guard lock(log_mutex_);
    *log_ << "POST " << cfg_.base_url << cfg_.path << "\n" << body << "\n";
    if (res) *log_ << "HTTP " << res->status << "\n" << res->body << "\n";
    else *log_ << "transport error: " << httplib::to_string(res.error()) << "\n";
    log_->flush();
  }

  if (!res) {
    throw AttackUnavailable("endpoint " + cfg_.base_url + ": " +
                            httplib::to_string(res.error()));
  }
  if (res->status >= 400)
    throw AttackUnavailable("endpoint returned HTTP " + std::to_string(res->status));
  try {
    auto reply = nlohmann::json::parse(res->body);
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw AttackUnavailable(std::string("malformed endpoint reply: ") + e.what());
  }
}

}  // namespace wmlab
