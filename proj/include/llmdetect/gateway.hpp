#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmdetect/corpus.hpp"
#include "llmdetect/label.hpp"

namespace llmdetect {

enum class ProviderKind { CommercialDetector, LlmJudge, Mock };

std::string_view to_string(ProviderKind k);
std::optional<ProviderKind> parse_provider_kind(std::string_view s);

enum class GatewayErrorKind {
    Network,             // transport failure or 5xx after all retries
    Authentication,      // 401/403 or credential missing
    RateLimited,         // 429 after all retries
    UnparseableResponse, // body is not the expected JSON shape
    UnparseableOutput,   // judge reply carries no label token
    UnmappedVerdict,     // provider category outside the known set
    CacheMiss,           // offline replay without a recorded verdict
};

std::string_view to_string(GatewayErrorKind k);

class GatewayError : public std::runtime_error {
public:
    GatewayError(GatewayErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    GatewayErrorKind kind() const noexcept { return kind_; }

private:
    GatewayErrorKind kind_;
};

/// "AI" -> LLM, "Human" -> Human, "Mixed" -> Uncertain, case-insensitive.
/// Anything else raises UnmappedVerdict carrying the raw string.
Label map_commercial_category(std::string_view raw);

/// Extracts the verdict token from a judge reply. Numeric tokens are read
/// whole ("10" is not "1"); "0.5" takes precedence over "0", and "0" over
/// "1". No token raises UnparseableOutput.
Label parse_judge_reply(std::string_view reply);

struct JudgePrompt {
    std::string system;

    /// Rubric-grounded instruction with the 0 / 0.5 / 1 output contract.
    static JudgePrompt default_prompt();
    static JudgePrompt from_file(const std::filesystem::path& path);
};

/// The output-contract sentence every judge prompt must contain.
inline constexpr std::string_view kJudgeOutputContract =
    "Respond with exactly one of these tokens and nothing else: 0, 0.5, 1.";

struct DetectorConfig {
    ProviderKind kind = ProviderKind::Mock;
    std::string endpoint;
    std::string credential_env;  // name of the environment variable, never the value
    std::string model;           // judge model id
    std::chrono::milliseconds timeout{30000};
    int max_retries = 2;  // attempts = max_retries + 1
    std::chrono::milliseconds backoff{500};
    int max_in_flight = 4;
    std::filesystem::path cache_dir;  // empty disables caching
    bool offline = false;             // replay only; a cache miss is an error
    std::string mock_reply = "Mixed";

    void validate() const;
};

nlohmann::json to_json(const DetectorConfig& c);
DetectorConfig detector_config_from_json(const nlohmann::json& j, DetectorConfig base = {});

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Thrown by transports for connection-level failures.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class HttpClient {
public:
    virtual ~HttpClient() = default;
    virtual HttpResponse post_json(const std::string& url, const std::map<std::string, std::string>& headers,
                                   const std::string& body, std::chrono::milliseconds timeout) = 0;
};

/// cpp-httplib backed client (http and https).
std::shared_ptr<HttpClient> make_http_client();

/// Offline transport that answers in each provider's wire shape. The
/// responder receives the submitted text and whether the request is a judge
/// (chat) call, and returns the raw category or reply.
std::shared_ptr<HttpClient> make_mock_http_client(
    std::function<std::string(const std::string& text, bool judge)> responder);

struct DetectorVerdict {
    Label label = Label::Uncertain;
    std::string raw_category;
    std::string provider;
    double latency_ms = 0;
    bool cached = false;
};

/// Content-addressed verdict store: one JSON file per SHA-256 key. The
/// fixture format is the cache format.
class VerdictCache {
public:
    explicit VerdictCache(std::filesystem::path dir);

    static std::string key(ProviderKind kind, std::string_view endpoint, std::string_view text);

    std::optional<DetectorVerdict> get(const std::string& key) const;
    void put(const std::string& key, ProviderKind kind, std::string_view endpoint, std::string_view text,
             const DetectorVerdict& v);

    const std::filesystem::path& dir() const noexcept { return dir_; }

private:
    std::filesystem::path dir_;
    mutable std::mutex mu_;
};

std::string sha256_hex(std::string_view data);

class DetectorGateway {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;
    using MockResponder = std::function<std::string(const std::string& text)>;

    DetectorGateway(DetectorConfig config, std::shared_ptr<HttpClient> http = nullptr,
                    JudgePrompt prompt = JudgePrompt::default_prompt());

    /// Cached verdict when available, otherwise one provider call with retry.
    DetectorVerdict classify(const std::string& text);

    /// Judge call with an explicit prompt (same caching as classify).
    DetectorVerdict classify_llm_judge(const std::string& text, const JudgePrompt& prompt);

    const DetectorConfig& config() const noexcept { return config_; }
    /// Provider calls made so far (mock calls included, cache hits excluded).
    std::size_t live_calls() const noexcept { return live_calls_.load(); }

    void set_sleeper(Sleeper s) { sleeper_ = std::move(s); }
    /// Raw reply generator for the mock provider; defaults to mock_reply.
    void set_mock_responder(MockResponder r) { mock_ = std::move(r); }

private:
    DetectorVerdict call(const std::string& text, const JudgePrompt* prompt);
    HttpResponse post_with_retry(const std::string& body, const std::map<std::string, std::string>& headers);
    std::string credential() const;

    DetectorConfig config_;
    std::shared_ptr<HttpClient> http_;
    JudgePrompt prompt_;
    std::optional<VerdictCache> cache_;
    Sleeper sleeper_;
    MockResponder mock_;
    std::atomic<std::size_t> live_calls_{0};
};

struct BatchResult {
    std::map<std::string, DetectorVerdict> verdicts;  // by response_id
    std::vector<std::pair<std::string, std::string>> failures;  // (response_id, error)
};

/// Classifies every response with at most config.max_in_flight concurrent
/// calls. Per-response failures are collected, not thrown.
BatchResult batch_classify(DetectorGateway& gateway, const Corpus& corpus);

/// Chat-format fine-tuning examples, one JSON object per line.
void export_finetune_dataset(const Corpus& train, const JudgePrompt& prompt, const std::filesystem::path& path);
std::string finetune_line(const LabeledResponse& r, const JudgePrompt& prompt);

}  // namespace llmdetect
