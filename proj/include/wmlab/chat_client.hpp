#pragma once

#include <memory>
#include <mutex>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace wmlab {

/// OpenAI-style chat-completion endpoint. Requests are
/// {"model", "messages": [{"role": "user", "content": ...}]}; the reply is
/// read from choices[0].message.content.
struct ChatEndpointConfig {
  std::string base_url;  // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string prompt_template;
  double timeout_seconds = 30.0;
  std::string auth_env;  // bearer token variable; empty for none
  std::size_t max_in_flight = 4;

  static ChatEndpointConfig from_json(const nlohmann::json& j);
};

// Renders `tmpl` with every "{name}" replaced from `values`.
std::string render_template(std::string_view tmpl,
                            const std::vector<std::pair<std::string, std::string>>& values);

/// Thread-safe client. Any transport failure, timeout, HTTP status >= 400 or
/// malformed reply throws AttackUnavailable.
class ChatClient {
 public:
  explicit ChatClient(ChatEndpointConfig cfg, std::ostream* log = nullptr);
  ~ChatClient();

  const ChatEndpointConfig& config() const { return cfg_; }
  std::string complete(const std::string& user_content) const;

 private:
  struct Gate;

  ChatEndpointConfig cfg_;
  std::ostream* log_;
  std::unique_ptr<Gate> gate_;
  mutable std::mutex log_mutex_;
};

}  // namespace wmlab
