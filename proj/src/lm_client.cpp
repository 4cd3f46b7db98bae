#include "minclip/lm_client.hpp"

#include <atomic>
#include <chrono>
#include <thread>

#include "minclip/dataset.hpp"

#include "httplib.h"
#include "json.hpp"

namespace minclip {

LmResponse MockLmClient::complete(const LmRequest& request) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    ++calls_;
    if (fail_remaining_ > 0) {
      --fail_remaining_;
      throw EndpointError("mock endpoint failure");
    }
  }
  return {handler_(request)};
}

HttpLmClient::HttpLmClient(std::string host, int port, std::string auth_token,
                           LmDecodeParams params, int timeout_seconds)
    : host_(std::move(host)),
      port_(port),
      auth_token_(std::move(auth_token)),
      params_(params),
      timeout_seconds_(timeout_seconds) {}

HttpLmClient HttpLmClient::from_url(const std::string& url, const std::string& auth_token,
                                    LmDecodeParams params) {
  std::string rest = url;
  const std::string scheme = "http://";
  if (rest.rfind(scheme, 0) == 0) rest = rest.substr(scheme.size());
  const size_t colon = rest.rfind(':');
  if (colon == std::string::npos) throw ConfigError("LM endpoint url must be host:port: " + url);
  return HttpLmClient(rest.substr(0, colon), std::stoi(rest.substr(colon + 1)), auth_token,
                      params);
}

LmResponse HttpLmClient::complete(const LmRequest& request) {
  httplib::Client client(host_, port_);
  client.set_connection_timeout(timeout_seconds_);
  client.set_read_timeout(timeout_seconds_);
  nlohmann::json body;
  body["prompt"] = request.prompt;
  body["image_ref"] = request.image_ref;
  if (params_.temperature) body["temperature"] = *params_.temperature;
  if (params_.max_tokens) body["max_tokens"] = *params_.max_tokens;
  httplib::Headers headers;
  if (!auth_token_.empty()) headers.emplace("Authorization", "Bearer " + auth_token_);
  auto res = client.Post("/complete", headers, body.dump(), "application/json");
  if (!res) throw EndpointError("LM endpoint unreachable: " + host_ + ":" + std::to_string(port_));
  if (res->status != 200) {
    throw EndpointError("LM endpoint returned status " + std::to_string(res->status));
  }
  const auto parsed = nlohmann::json::parse(res->body, nullptr, /*allow_exceptions=*/false);
  if (parsed.is_discarded() || !parsed.contains("text")) {
    throw EndpointError("LM endpoint returned malformed body");
  }
  return {parsed.at("text").get<std::string>()};
}

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

RecaptionOutcome recaption(CaptionRecord& record, const PromptTemplate& tmpl, LmClient& client,
                           int max_attempts, int backoff_base_ms) {
  const std::string prompt = instantiate_prompt(tmpl, record.page_title, record.alt_text);
  RecaptionOutcome outcome;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    outcome.attempts = attempt;
    try {
      const LmResponse res = client.complete({prompt, record.image_ref});
      const std::string text = trim(res.text);
      if (text.empty()) throw EmptyResponse("LM endpoint returned empty text");
      record.caption = text;
      record.caption_style = tmpl.variant == PromptVariant::kUngrounded
                                 ? "ungrounded"
                                 : (tmpl.variant == PromptVariant::kGroundedShort ? "short"
                                                                                  : "default");
      outcome.ok = true;
      return outcome;
    } catch (const EndpointError&) {
      if (attempt == max_attempts) break;
      std::this_thread::sleep_for(
          std::chrono::milliseconds(backoff_base_ms * (1 << (attempt - 1))));
    } catch (const EmptyResponse&) {
      if (attempt == max_attempts) break;
      std::this_thread::sleep_for(
          std::chrono::milliseconds(backoff_base_ms * (1 << (attempt - 1))));
    }
  }
  return outcome;
}

RecaptionReport recaption_dataset(std::vector<CaptionRecord>& records, const PromptTemplate& tmpl,
                                  LmClient& client, int max_inflight, int max_attempts,
                                  int backoff_base_ms) {
  RecaptionReport report;
  std::vector<char> ok(records.size(), 0);
  std::atomic<size_t> next{0};
  const int workers = std::max(1, std::min<int>(max_inflight, static_cast<int>(records.size())));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        const size_t i = next.fetch_add(1);
        if (i >= records.size()) return;
        ok[i] = recaption(records[i], tmpl, client, max_attempts, backoff_base_ms).ok ? 1 : 0;
      }
    });
  }
  for (auto& t : pool) t.join();
  for (size_t i = 0; i < records.size(); ++i) {
    if (ok[i]) {
      ++report.succeeded;
    } else {
      report.failed_ids.push_back(records[i].id);
    }
  }
  return report;
}

}  // namespace minclip
