#include "llmdetect/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <openssl/evp.h>

#include "llmdetect/errors.hpp"

namespace llmdetect {

using json = nlohmann::json;

std::string_view to_string(ProviderKind k) {
    switch (k) {
    case ProviderKind::CommercialDetector: return "commercial_detector";
    case ProviderKind::LlmJudge: return "llm_judge";
    case ProviderKind::Mock: return "mock";
    }
    return "";
}

std::optional<ProviderKind> parse_provider_kind(std::string_view s) {
    if (s == "commercial_detector" || s == "commercial") return ProviderKind::CommercialDetector;
    if (s == "llm_judge" || s == "judge") return ProviderKind::LlmJudge;
    if (s == "mock") return ProviderKind::Mock;
    return std::nullopt;
}

std::string_view to_string(GatewayErrorKind k) {
    switch (k) {
    case GatewayErrorKind::Network: return "network failure";
    case GatewayErrorKind::Authentication: return "authentication failure";
    case GatewayErrorKind::RateLimited: return "rate limit exhausted";
    case GatewayErrorKind::UnparseableResponse: return "unparseable response";
    case GatewayErrorKind::UnparseableOutput: return "unparseable output";
    case GatewayErrorKind::UnmappedVerdict: return "unmapped verdict";
    case GatewayErrorKind::CacheMiss: return "cache miss";
    }
    return "";
}

Label map_commercial_category(std::string_view raw) {
    std::string s;
    for (char c : raw)
        if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (s == "ai") return Label::LLM;
    if (s == "human") return Label::Human;
    if (s == "mixed") return Label::Uncertain;
    throw GatewayError(GatewayErrorKind::UnmappedVerdict, "'" + std::string(raw) + "'");
}

Label parse_judge_reply(std::string_view reply) {
    bool half = false, zero = false, one = false;
    std::size_t i = 0;
    while (i < reply.size()) {
        const auto c = static_cast<unsigned char>(reply[i]);
        if (!std::isdigit(c) && !(c == '.' && i + 1 < reply.size() && std::isdigit(static_cast<unsigned char>(reply[i + 1])))) {
            ++i;
            continue;
        }
        // A token that continues a word ("v1", "gpt4") is not a verdict.
        const bool glued = i > 0 && std::isalpha(static_cast<unsigned char>(reply[i - 1]));
        std::size_t j = i;
        while (j < reply.size() && (std::isdigit(static_cast<unsigned char>(reply[j])) || reply[j] == '.')) ++j;
        std::string_view tok = reply.substr(i, j - i);
        while (!tok.empty() && tok.back() == '.') tok.remove_suffix(1);
        if (!glued) {
            if (auto l = parse_label(tok)) {
                half |= *l == Label::Uncertain;
                zero |= *l == Label::Human;
                one |= *l == Label::LLM;
            }
        }
        i = j;
    }
    if (half) return Label::Uncertain;
    if (zero) return Label::Human;
    if (one) return Label::LLM;
    throw GatewayError(GatewayErrorKind::UnparseableOutput, "no 0 / 0.5 / 1 token in reply '" + std::string(reply) + "'");
}

JudgePrompt JudgePrompt::default_prompt() {
    std::string s =
        "You review short open-text answers written by adult learners in an online tutoring lesson and decide "
        "whether each answer was written by the learner or produced by a large language model without "
        "rewriting.\n\n"
        "Signals of model-generated text:\n"
        "- long, polished, fully punctuated answers, sometimes drifting from the lesson topic\n"
        "- list-like layout: bullet points or short \"Heading: explanation\" segments\n"
        "- the whole answer wrapped in quotation marks\n"
        "- several answers that follow the same template with small wording changes\n\n"
        "Signals of learner-written text:\n"
        "- capitalization mistakes\n"
        "- misspelled words\n"
        "- first-person voice such as \"I\" describing what the learner would do\n"
        "- fragments and a casual tone\n\n"
        "Borderline answers (use 0.5):\n"
        "- formal wording without complexity\n"
        "- first-person voice combined with model-like structure\n"
        "- structured, formal text that still sounds conversational\n\n"
        "Label 1 means model-generated, 0 means learner-written, 0.5 means uncertain. ";
    s += kJudgeOutputContract;
    return {std::move(s)};
}

JudgePrompt JudgePrompt::from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open prompt file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    JudgePrompt p{ss.str()};
    if (p.system.find(kJudgeOutputContract) == std::string::npos)
        throw ConfigError("prompt file '" + path.string() + "' does not state the output contract: " +
                          std::string(kJudgeOutputContract));
    return p;
}

void DetectorConfig::validate() const {
    if (timeout.count() <= 0) throw ConfigError("detector timeout must be > 0");
    if (max_retries < 0) throw ConfigError("detector max_retries must be >= 0");
    if (max_in_flight < 1) throw ConfigError("detector max_in_flight must be >= 1");
    if (backoff.count() < 0) throw ConfigError("detector backoff must be >= 0");
    if (kind != ProviderKind::Mock && endpoint.empty() && !offline)
        throw ConfigError("detector endpoint is required for " + std::string(to_string(kind)));
}

json to_json(const DetectorConfig& c) {
    return {{"kind", to_string(c.kind)},
            {"endpoint", c.endpoint},
            {"credential_env", c.credential_env},
            {"model", c.model},
            {"timeout_ms", c.timeout.count()},
            {"max_retries", c.max_retries},
            {"backoff_ms", c.backoff.count()},
            {"max_in_flight", c.max_in_flight},
            {"cache_dir", c.cache_dir.generic_string()},
            {"offline", c.offline},
            {"mock_reply", c.mock_reply}};
}

DetectorConfig detector_config_from_json(const json& j, DetectorConfig c) {
    try {
        if (j.contains("kind")) {
            auto k = parse_provider_kind(j.at("kind").get<std::string>());
            if (!k) throw ConfigError("unknown detector kind " + j.at("kind").dump());
            c.kind = *k;
        }
        c.endpoint = j.value("endpoint", c.endpoint);
        c.credential_env = j.value("credential_env", c.credential_env);
        c.model = j.value("model", c.model);
        c.timeout = std::chrono::milliseconds(j.value("timeout_ms", c.timeout.count()));
        c.max_retries = j.value("max_retries", c.max_retries);
        c.backoff = std::chrono::milliseconds(j.value("backoff_ms", c.backoff.count()));
        c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
        c.cache_dir = j.value("cache_dir", c.cache_dir.string());
        c.offline = j.value("offline", c.offline);
        c.mock_reply = j.value("mock_reply", c.mock_reply);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid detector config: ") + e.what());
    }
    return c;
}

std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 digest failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[md[i] >> 4]);
        out.push_back(kHex[md[i] & 0xF]);
    }
    return out;
}

namespace {

Label label_for(ProviderKind kind, std::string_view raw) {
    return kind == ProviderKind::LlmJudge ? parse_judge_reply(raw) : map_commercial_category(raw);
}

class HttplibClient final : public HttpClient {
public:
    HttpResponse post_json(const std::string& url, const std::map<std::string, std::string>& headers,
                           const std::string& body, std::chrono::milliseconds timeout) override {
        const auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos) throw TransportError("malformed URL '" + url + "'");
        const auto path_begin = url.find('/', scheme_end + 3);
        const std::string base = url.substr(0, path_begin);
        const std::string path = path_begin == std::string::npos ? "/" : url.substr(path_begin);

        httplib::Client cli(base);
        const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
        const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
        cli.set_connection_timeout(secs.count(), static_cast<time_t>(usecs.count()));
        cli.set_read_timeout(secs.count(), static_cast<time_t>(usecs.count()));
        cli.set_write_timeout(secs.count(), static_cast<time_t>(usecs.count()));
        httplib::Headers h;
        for (const auto& [k, v] : headers) h.emplace(k, v);
        auto res = cli.Post(path, h, body, "application/json");
        if (!res) throw TransportError(httplib::to_string(res.error()));
        return {res->status, res->body};
    }
};

class MockHttpClient final : public HttpClient {
public:
    explicit MockHttpClient(std::function<std::string(const std::string&, bool)> responder)
        : responder_(std::move(responder)) {}

    HttpResponse post_json(const std::string&, const std::map<std::string, std::string>&, const std::string& body,
                           std::chrono::milliseconds) override {
        const json req = json::parse(body);
        if (req.contains("messages")) {
            const std::string text = req.at("messages").back().at("content").get<std::string>();
            json reply = {{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", responder_(text, true)}}}}})}};
            return {200, reply.dump()};
        }
        const std::string text = req.at("document").get<std::string>();
        json reply = {{"documents", json::array({{{"predicted_class", responder_(text, false)}}})}};
        return {200, reply.dump()};
    }

private:
    std::function<std::string(const std::string&, bool)> responder_;
};

std::string commercial_category(const json& body) {
    if (auto it = body.find("documents"); it != body.end() && it->is_array() && !it->empty()) {
        const auto& doc = it->front();
        if (auto pc = doc.find("predicted_class"); pc != doc.end() && pc->is_string()) return pc->get<std::string>();
    }
    for (const char* key : {"predicted_class", "class", "category", "label"})
        if (auto it = body.find(key); it != body.end() && it->is_string()) return it->get<std::string>();
    throw GatewayError(GatewayErrorKind::UnparseableResponse, "no predicted class in detector response");
}

std::string judge_content(const json& body) {
    try {
        return body.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
        throw GatewayError(GatewayErrorKind::UnparseableResponse, "no choices[0].message.content in judge response");
    }
}

}  // namespace

std::shared_ptr<HttpClient> make_http_client() { return std::make_shared<HttplibClient>(); }

std::shared_ptr<HttpClient> make_mock_http_client(std::function<std::string(const std::string&, bool)> responder) {
    return std::make_shared<MockHttpClient>(std::move(responder));
}

VerdictCache::VerdictCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::string VerdictCache::key(ProviderKind kind, std::string_view endpoint, std::string_view text) {
    std::string material(to_string(kind));
    material.push_back('\0');
    material.append(endpoint);
    material.push_back('\0');
    material.append(text);
    return sha256_hex(material);
}

std::optional<DetectorVerdict> VerdictCache::get(const std::string& key) const {
    const auto path = dir_ / (key + ".json");
    std::lock_guard lock(mu_);
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("corrupt cache entry '" + path.string() + "': " + e.what());
    }
    auto kind = parse_provider_kind(j.value("provider", ""));
    if (!kind) throw DataError("cache entry '" + path.string() + "' names an unknown provider");
    DetectorVerdict v;
    v.raw_category = j.at("raw_category").get<std::string>();
    v.provider = std::string(to_string(*kind));
    v.label = label_for(*kind, v.raw_category);
    v.cached = true;
    return v;
}

void VerdictCache::put(const std::string& key, ProviderKind kind, std::string_view endpoint, std::string_view text,
                       const DetectorVerdict& v) {
    const json j = {{"format", "llmdetect.verdict"},
                    {"version", 1},
                    {"provider", to_string(kind)},
                    {"endpoint", endpoint},
                    {"text_sha256", sha256_hex(text)},
                    {"raw_category", v.raw_category},
                    {"label", to_token(v.label)}};
    std::lock_guard lock(mu_);
    std::filesystem::create_directories(dir_);
    const auto final_path = dir_ / (key + ".json");
    const auto tmp = dir_ / (key + ".json.tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        out << j.dump(2) << '\n';
        if (!out) throw DataError("cannot write cache entry '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, final_path);
}

DetectorGateway::DetectorGateway(DetectorConfig config, std::shared_ptr<HttpClient> http, JudgePrompt prompt)
    : config_(std::move(config)), http_(std::move(http)), prompt_(std::move(prompt)) {
    config_.validate();
    if (!config_.cache_dir.empty()) cache_.emplace(config_.cache_dir);
    if (!http_ && config_.kind != ProviderKind::Mock) http_ = make_http_client();
    sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string DetectorGateway::credential() const {
    if (config_.credential_env.empty()) return {};
    const char* v = std::getenv(config_.credential_env.c_str());
    if (!v || !*v)
        throw GatewayError(GatewayErrorKind::Authentication,
                           "credential variable " + config_.credential_env + " is not set");
    return v;
}

HttpResponse DetectorGateway::post_with_retry(const std::string& body,
                                              const std::map<std::string, std::string>& headers) {
    GatewayErrorKind last = GatewayErrorKind::Network;
    std::string detail;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) sleeper_(config_.backoff * (1LL << (attempt - 1)));
        HttpResponse res;
        try {
            res = http_->post_json(config_.endpoint, headers, body, config_.timeout);
        } catch (const TransportError& e) {
            last = GatewayErrorKind::Network;
            detail = e.what();
            continue;
        }
        if (res.status >= 200 && res.status < 300) return res;
        if (res.status == 401 || res.status == 403)
            throw GatewayError(GatewayErrorKind::Authentication, "HTTP " + std::to_string(res.status));
        if (res.status == 429) {
            last = GatewayErrorKind::RateLimited;
            detail = "HTTP 429";
            continue;
        }
        if (res.status >= 500) {
            last = GatewayErrorKind::Network;
            detail = "HTTP " + std::to_string(res.status);
            continue;
        }
        throw GatewayError(GatewayErrorKind::Network, "HTTP " + std::to_string(res.status));
    }
    throw GatewayError(last, detail + " after " + std::to_string(config_.max_retries + 1) + " attempts");
}

DetectorVerdict DetectorGateway::call(const std::string& text, const JudgePrompt* prompt) {
    const std::string key = VerdictCache::key(config_.kind, config_.endpoint, text);
    if (cache_) {
        if (auto hit = cache_->get(key)) return *hit;
    }
    if (config_.offline)
        throw GatewayError(GatewayErrorKind::CacheMiss, "no recorded verdict for key " + key);

    const auto start = std::chrono::steady_clock::now();
    DetectorVerdict v;
    v.provider = std::string(to_string(config_.kind));
    ++live_calls_;
    switch (config_.kind) {
    case ProviderKind::Mock:
        v.raw_category = mock_ ? mock_(text) : config_.mock_reply;
        break;
    case ProviderKind::CommercialDetector: {
        std::map<std::string, std::string> headers{{"Accept", "application/json"}};
        if (auto cred = credential(); !cred.empty()) headers["x-api-key"] = cred;
        const auto res = post_with_retry(json{{"document", text}}.dump(), headers);
        try {
            v.raw_category = commercial_category(json::parse(res.body));
        } catch (const json::parse_error&) {
            throw GatewayError(GatewayErrorKind::UnparseableResponse, "detector response is not JSON");
        }
        break;
    }
    case ProviderKind::LlmJudge: {
        std::map<std::string, std::string> headers;
        if (auto cred = credential(); !cred.empty()) headers["Authorization"] = "Bearer " + cred;
        const JudgePrompt& p = prompt ? *prompt : prompt_;
        json req = {{"model", config_.model},
                    {"temperature", 0},
                    {"messages", json::array({{{"role", "system"}, {"content", p.system}},
                                              {{"role", "user"}, {"content", text}}})}};
        const auto res = post_with_retry(req.dump(), headers);
        try {
            v.raw_category = judge_content(json::parse(res.body));
        } catch (const json::parse_error&) {
            throw GatewayError(GatewayErrorKind::UnparseableResponse, "judge response is not JSON");
        }
        break;
    }
    }
    v.label = label_for(config_.kind, v.raw_category);
    v.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (cache_) cache_->put(key, config_.kind, config_.endpoint, text, v);
    return v;
}

DetectorVerdict DetectorGateway::classify(const std::string& text) { return call(text, nullptr); }

DetectorVerdict DetectorGateway::classify_llm_judge(const std::string& text, const JudgePrompt& prompt) {
    if (config_.kind != ProviderKind::LlmJudge)
        throw ConfigError("classify_llm_judge needs an llm_judge detector");
    return call(text, &prompt);
}

BatchResult batch_classify(DetectorGateway& gateway, const Corpus& corpus) {
    const std::size_t n = corpus.size();
    std::vector<std::optional<DetectorVerdict>> verdicts(n);
    std::vector<std::string> errors(n);
    std::atomic<std::size_t> next{0};

    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                verdicts[i] = gateway.classify(corpus[i].text);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(gateway.config().max_in_flight), n);
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    }

    BatchResult out;
    for (std::size_t i = 0; i < n; ++i) {
        if (verdicts[i])
            out.verdicts.emplace(corpus[i].response_id, std::move(*verdicts[i]));
        else
            out.failures.emplace_back(corpus[i].response_id, errors[i]);
    }
    return out;
}

std::string finetune_line(const LabeledResponse& r, const JudgePrompt& prompt) {
    const json j = {{"messages", json::array({{{"role", "system"}, {"content", prompt.system}},
                                              {{"role", "user"}, {"content", r.text}},
                                              {{"role", "assistant"}, {"content", to_token(r.consensus)}}})}};
    return j.dump();
}

void export_finetune_dataset(const Corpus& train, const JudgePrompt& prompt, const std::filesystem::path& path) {
    if (train.empty()) throw DataError("cannot export an empty training corpus");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    for (const auto& r : train) out << finetune_line(r, prompt) << '\n';
    if (!out) throw DataError("failed writing '" + path.string() + "'");
}

}  // namespace llmdetect
