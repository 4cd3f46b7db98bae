#pragma once

#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "minclip/prompts.hpp"

namespace minclip {

struct EndpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyResponse : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LmRequest {
  std::string prompt;
  std::string image_ref;
};

struct LmResponse {
  std::string text;
};

// Decoding knobs are passed through to the endpoint untouched; no defaults
// are claimed here.
struct LmDecodeParams {
  std::optional<double> temperature;
  std::optional<int> max_tokens;
};

class LmClient {
 public:
  virtual ~LmClient() = default;
  virtual LmResponse complete(const LmRequest& request) = 0;
};

// Deterministic in-process stand-in; handler may throw to simulate failures.
class MockLmClient : public LmClient {
 public:
  explicit MockLmClient(std::function<std::string(const LmRequest&)> handler)
      : handler_(std::move(handler)) {}

  // Fails the first `n` calls with EndpointError, then delegates.
  void fail_first(int n) { fail_remaining_ = n; }

  LmResponse complete(const LmRequest& request) override;

  int calls() const { return calls_; }

 private:
  std::function<std::string(const LmRequest&)> handler_;
  std::mutex mu_;
  int fail_remaining_ = 0;
  int calls_ = 0;
};

// POSTs {"prompt": ..., "image_ref": ..., [decode params]} to <url>/complete
// and expects {"text": ...}.
class HttpLmClient : public LmClient {
 public:
  HttpLmClient(std::string host, int port, std::string auth_token = "",
               LmDecodeParams params = {}, int timeout_seconds = 30);

  // Parses "host:port" (scheme-less).
  static HttpLmClient from_url(const std::string& url, const std::string& auth_token = "",
                               LmDecodeParams params = {});

  LmResponse complete(const LmRequest& request) override;

 private:
  std::string host_;
  int port_;
  std::string auth_token_;
  LmDecodeParams params_;
  int timeout_seconds_;
};

struct RecaptionOutcome {
  bool ok = false;
  int attempts = 0;
};

struct RecaptionReport {
  int succeeded = 0;
  std::vector<std::string> failed_ids;
};

struct CaptionRecord;

// Replaces record.caption with the endpoint response (trimmed) and tags the
// style with the variant. Up to max_attempts calls with exponential backoff;
// on exhaustion the record is left unchanged and ok = false.
RecaptionOutcome recaption(CaptionRecord& record, const PromptTemplate& tmpl, LmClient& client,
                           int max_attempts = 3, int backoff_base_ms = 100);

// Recaptioning is parallel per record with at most max_inflight requests;
// records keep their input order.
RecaptionReport recaption_dataset(std::vector<CaptionRecord>& records, const PromptTemplate& tmpl,
                                  LmClient& client, int max_inflight = 8, int max_attempts = 3,
                                  int backoff_base_ms = 100);

}  // namespace minclip
