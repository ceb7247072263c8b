#include <httplib.h>

#include <cmath>
#include <thread>

#include <json.hpp>

#include "ugcsim/error.hpp"
#include "ugcsim/llm_backend.hpp"
#include "ugcsim/rng.hpp"
#include "ugcsim/text.hpp"

namespace ugcsim {

using nlohmann::json;

std::vector<double> backoff_schedule(double base_ms, int max_retries,
                                     std::uint64_t jitter_seed,
                                     std::uint64_t call_index) {
  std::vector<double> out;
  for (int k = 0; k < max_retries; ++k) {
    const double u = unit_interval(counter_hash(jitter_seed, call_index, static_cast<std::uint64_t>(k)));
    out.push_back(base_ms * std::ldexp(1.0, k) * (1.0 + 0.5 * u));
  }
  return out;
}

HttpBackend::HttpBackend(HttpSettings http, BackendSettings settings)
    : ChatBackend(std::move(settings)), http_(std::move(http)) {
  const auto scheme = http_.base_url.find("://");
  if (scheme == std::string::npos) {
    throw ConfigError("base URL must start with http:// or https://", "backend.base_url");
  }
  const auto slash = http_.base_url.find('/', scheme + 3);
  host_ = http_.base_url.substr(0, slash);
  std::string prefix = slash == std::string::npos ? "" : http_.base_url.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  path_ = prefix + "/chat/completions";
  if (!(http_.backoff_base_ms > 0.0)) {
    throw ConfigError("must be > 0", "backend.backoff_ms");
  }
}

std::vector<double> HttpBackend::observed_delays_ms() const {
  std::lock_guard lock(mu_);
  return delays_;
}

std::size_t HttpBackend::network_calls() const {
  std::lock_guard lock(mu_);
  return network_calls_;
}

ChatResponse HttpBackend::do_complete(const ChatRequest& req) {
  json body;
  body["model"] = resolved_model(req);
  body["temperature"] = resolved_temperature(req);
  body["messages"] = json::array();
  for (const auto& m : req.messages) {
    body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  }
  const std::string payload = body.dump();

  std::uint64_t call_index;
  {
    std::lock_guard lock(mu_);
    call_index = call_counter_++;
  }
  const auto delays = backoff_schedule(http_.backoff_base_ms, settings().max_retries,
                                       http_.jitter_seed, call_index);

  httplib::Client client(host_);
  const auto secs = static_cast<time_t>(http_.timeout_seconds);
  const auto usecs = static_cast<time_t>((http_.timeout_seconds - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!http_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + http_.api_key);
  }

  std::string last_error;
  for (int attempt = 0;; ++attempt) {
    {
      std::lock_guard lock(mu_);
      ++network_calls_;
    }
    auto res = client.Post(path_, headers, payload, "application/json");
    bool retryable = false;
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      retryable = true;
    } else if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      retryable = true;
    } else if (res->status < 200 || res->status >= 300) {
      throw BackendError("chat endpoint returned HTTP " + std::to_string(res->status) +
                         ": " + text::truncate_utf8(res->body, 200));
    } else {
      ChatResponse out;
      out.retries = attempt;
      try {
        const auto j = json::parse(res->body);
        const auto& content = j.at("choices").at(0).at("message").at("content");
        out.text = content.is_null() ? std::string{} : content.get<std::string>();
        if (j.contains("usage") && j["usage"].is_object() &&
            j["usage"].contains("prompt_tokens") && j["usage"].contains("completion_tokens")) {
          out.usage.prompt_tokens = j["usage"]["prompt_tokens"].get<std::size_t>();
          out.usage.completion_tokens = j["usage"]["completion_tokens"].get<std::size_t>();
        } else {
          out.usage.prompt_tokens = estimate_prompt_tokens(req);
          out.usage.completion_tokens = text::whitespace_token_count(out.text);
          out.usage.estimated = true;
        }
      } catch (const json::exception& e) {
        throw BackendError(std::string("malformed chat completion response: ") + e.what());
      }
      return out;
    }
    if (!retryable || attempt >= settings().max_retries) break;
    const double delay = delays[static_cast<std::size_t>(attempt)];
    {
      std::lock_guard lock(mu_);
      delays_.push_back(delay);
    }
    std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(delay));
  }
  throw BackendError("chat request failed after " + std::to_string(settings().max_retries) +
                     " retries: " + last_error);
}

}  // namespace ugcsim
