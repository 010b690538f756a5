#include <doctest.h>

#include <cstdlib>
#include <deque>
#include <thread>

#include "llmdetect/gateway.hpp"
#include "support/tempdir.hpp"

using namespace llmdetect;
using namespace std::chrono_literals;
using testing_support::TempDir;

namespace {

/// Replays a scripted sequence of responses; a status of -1 raises a
/// transport error.
class ScriptedClient : public HttpClient {
public:
    explicit ScriptedClient(std::deque<HttpResponse> script) : script_(std::move(script)) {}

    HttpResponse post_json(const std::string& url, const std::map<std::string, std::string>& headers,
                           const std::string& body, std::chrono::milliseconds) override {
        std::lock_guard lock(mu_);
        ++calls;
        last_url = url;
        last_headers = headers;
        last_body = body;
        if (script_.empty()) throw TransportError("script exhausted");
        auto r = script_.front();
        script_.pop_front();
        if (r.status == -1) throw TransportError("connection refused");
        return r;
    }

    int calls = 0;
    std::string last_url, last_body;
    std::map<std::string, std::string> last_headers;

private:
    std::mutex mu_;
    std::deque<HttpResponse> script_;
};

HttpResponse ok_commercial(const std::string& cls) {
    return {200, nlohmann::json{{"documents", {{{"predicted_class", cls}}}}}.dump()};
}

HttpResponse ok_judge(const std::string& content) {
    return {200, nlohmann::json{{"choices", {{{"message", {{"content", content}}}}}}}.dump()};
}

DetectorConfig commercial_config() {
    DetectorConfig c;
    c.kind = ProviderKind::CommercialDetector;
    c.endpoint = "https://detector.example/v1/predict";
    c.backoff = 100ms;
    return c;
}

struct SleepLog {
    std::vector<std::chrono::milliseconds> waits;
    DetectorGateway::Sleeper sleeper() {
        return [this](std::chrono::milliseconds d) { waits.push_back(d); };
    }
};

}  // namespace

TEST_CASE("commercial categories map to labels") {
    CHECK(map_commercial_category("AI") == Label::LLM);
    CHECK(map_commercial_category("human") == Label::Human);
    CHECK(map_commercial_category(" Mixed ") == Label::Uncertain);
    try {
        map_commercial_category("Paraphrased");
        FAIL("expected UnmappedVerdict");
    } catch (const GatewayError& e) {
        CHECK(e.kind() == GatewayErrorKind::UnmappedVerdict);
        CHECK(std::string(e.what()).find("Paraphrased") != std::string::npos);
    }
}

TEST_CASE("judge replies") {
    CHECK(parse_judge_reply("1") == Label::LLM);
    CHECK(parse_judge_reply("0") == Label::Human);
    CHECK(parse_judge_reply("0.5") == Label::Uncertain);
    CHECK(parse_judge_reply(" Label: 0\n") == Label::Human);
    CHECK(parse_judge_reply("The verdict is 1.") == Label::LLM);
    CHECK(parse_judge_reply("either 0 or 0.5") == Label::Uncertain);
    CHECK(parse_judge_reply("gpt4 thinks 0") == Label::Human);
    for (const char* bad : {"10", "none", "", "v1", "2"}) {
        try {
            parse_judge_reply(bad);
            FAIL("expected UnparseableOutput for '" << bad << "'");
        } catch (const GatewayError& e) {
            CHECK(e.kind() == GatewayErrorKind::UnparseableOutput);
        }
    }
}

TEST_CASE("retry with exponential backoff then success") {
    auto http = std::make_shared<ScriptedClient>(std::deque<HttpResponse>{{500, ""}, {-1, ""}, ok_commercial("AI")});
    DetectorGateway gw(commercial_config(), http);
    SleepLog log;
    gw.set_sleeper(log.sleeper());
    const auto v = gw.classify("text");
    CHECK(v.label == Label::LLM);
    CHECK(v.raw_category == "AI");
    CHECK(http->calls == 3);
    REQUIRE(log.waits.size() == 2);
    CHECK(log.waits[0] == 100ms);
    CHECK(log.waits[1] == 200ms);
    CHECK(nlohmann::json::parse(http->last_body)["document"] == "text");
}

TEST_CASE("failure kinds") {
    SleepLog log;
    auto run = [&](std::deque<HttpResponse> script, DetectorConfig cfg = commercial_config()) -> std::pair<GatewayErrorKind, int> {
        auto http = std::make_shared<ScriptedClient>(std::move(script));
        DetectorGateway gw(cfg, http);
        gw.set_sleeper(log.sleeper());
        try {
            gw.classify("x");
        } catch (const GatewayError& e) {
            return {e.kind(), http->calls};
        }
        FAIL("expected GatewayError");
        return {GatewayErrorKind::Network, 0};
    };
    CHECK(run({{500, ""}, {502, ""}, {503, ""}}) == std::pair{GatewayErrorKind::Network, 3});
    CHECK(run({{429, ""}, {429, ""}, {429, ""}}) == std::pair{GatewayErrorKind::RateLimited, 3});
    CHECK(run({{401, ""}, ok_commercial("AI")}) == std::pair{GatewayErrorKind::Authentication, 1});
    CHECK(run({{403, ""}}) == std::pair{GatewayErrorKind::Authentication, 1});
    CHECK(run({{400, ""}, ok_commercial("AI")}) == std::pair{GatewayErrorKind::Network, 1});
    CHECK(run({{200, "not json"}}) == std::pair{GatewayErrorKind::UnparseableResponse, 1});
    CHECK(run({{200, "{\"documents\":[{}]}"}}) == std::pair{GatewayErrorKind::UnparseableResponse, 1});
    CHECK(run({ok_commercial("Robot")}) == std::pair{GatewayErrorKind::UnmappedVerdict, 1});
    auto cfg = commercial_config();
    cfg.max_retries = 0;
    CHECK(run({{500, ""}, ok_commercial("AI")}, cfg) == std::pair{GatewayErrorKind::Network, 1});
}

TEST_CASE("judge requests and unparseable output") {
    DetectorConfig cfg;
    cfg.kind = ProviderKind::LlmJudge;
    cfg.endpoint = "https://judge.example/v1/chat";
    cfg.model = "tuned-judge";
    auto http = std::make_shared<ScriptedClient>(std::deque<HttpResponse>{ok_judge("0.5"), ok_judge("I cannot tell")});
    DetectorGateway gw(cfg, http);
    CHECK(gw.classify("first").label == Label::Uncertain);
    const auto req = nlohmann::json::parse(http->last_body);
    CHECK(req["model"] == "tuned-judge");
    CHECK(req["temperature"] == 0);
    CHECK(req["messages"][1]["content"] == "first");
    CHECK(req["messages"][0]["content"].get<std::string>().find(std::string(kJudgeOutputContract)) != std::string::npos);
    try {
        gw.classify("second");
        FAIL("expected UnparseableOutput");
    } catch (const GatewayError& e) {
        CHECK(e.kind() == GatewayErrorKind::UnparseableOutput);
    }
    const JudgePrompt custom{std::string("Custom rubric. ") + std::string(kJudgeOutputContract)};
    auto http2 = std::make_shared<ScriptedClient>(std::deque<HttpResponse>{ok_judge("1")});
    DetectorGateway gw2(cfg, http2);
    CHECK(gw2.classify_llm_judge("t", custom).label == Label::LLM);
    CHECK(nlohmann::json::parse(http2->last_body)["messages"][0]["content"] == custom.system);
    DetectorGateway commercial(commercial_config(), http2);
    CHECK_THROWS_AS(commercial.classify_llm_judge("t", custom), ConfigError);
}

TEST_CASE("credentials come from the environment only") {
    auto cfg = commercial_config();
    cfg.credential_env = "LLMDETECT_TEST_KEY";
    ::unsetenv("LLMDETECT_TEST_KEY");
    auto http = std::make_shared<ScriptedClient>(std::deque<HttpResponse>{ok_commercial("Human")});
    DetectorGateway gw(cfg, http);
    try {
        gw.classify("x");
        FAIL("expected Authentication");
    } catch (const GatewayError& e) {
        CHECK(e.kind() == GatewayErrorKind::Authentication);
    }
    ::setenv("LLMDETECT_TEST_KEY", "secret-value", 1);
    CHECK(gw.classify("x").label == Label::Human);
    CHECK(http->last_headers.at("x-api-key") == "secret-value");
    CHECK(to_json(cfg).dump().find("secret-value") == std::string::npos);
    ::unsetenv("LLMDETECT_TEST_KEY");
}

TEST_CASE("record and replay through the cache") {
    TempDir t;
    auto cfg = commercial_config();
    cfg.cache_dir = t / "cache";
    auto http = std::make_shared<ScriptedClient>(std::deque<HttpResponse>{ok_commercial("Mixed")});
    DetectorGateway gw(cfg, http);
    const auto first = gw.classify("same text");
    const auto second = gw.classify("same text");
    CHECK(http->calls == 1);
    CHECK(gw.live_calls() == 1);
    CHECK_FALSE(first.cached);
    CHECK(second.cached);
    CHECK(second.label == Label::Uncertain);
    CHECK(second.raw_category == "Mixed");

    auto offline = cfg;
    offline.offline = true;
    DetectorGateway replay(offline, std::make_shared<ScriptedClient>(std::deque<HttpResponse>{}));
    CHECK(replay.classify("same text").label == Label::Uncertain);
    try {
        replay.classify("other text");
        FAIL("expected CacheMiss");
    } catch (const GatewayError& e) {
        CHECK(e.kind() == GatewayErrorKind::CacheMiss);
    }
    // Keys separate providers and endpoints.
    CHECK(VerdictCache::key(ProviderKind::CommercialDetector, "a", "t") != VerdictCache::key(ProviderKind::LlmJudge, "a", "t"));
    CHECK(VerdictCache::key(ProviderKind::CommercialDetector, "a", "t") != VerdictCache::key(ProviderKind::CommercialDetector, "b", "t"));
    CHECK(VerdictCache::key(ProviderKind::CommercialDetector, "a", "t") == VerdictCache::key(ProviderKind::CommercialDetector, "a", "t"));
}

TEST_CASE("checked-in fixtures replay offline") {
    const Corpus c = load_corpus(std::filesystem::path(LLMDETECT_FIXTURES) / "mini_corpus.csv", CorpusFormat::Csv);
    for (ProviderKind kind : {ProviderKind::CommercialDetector, ProviderKind::LlmJudge}) {
        DetectorConfig cfg;
        cfg.kind = kind;
        cfg.offline = true;
        cfg.cache_dir = std::filesystem::path(LLMDETECT_FIXTURES) / "verdicts";
        DetectorGateway gw(cfg, std::make_shared<ScriptedClient>(std::deque<HttpResponse>{}));
        const auto br = batch_classify(gw, c);
        CHECK(br.failures.empty());
        CHECK(br.verdicts.size() == c.size());
        CHECK(gw.live_calls() == 0);
        CHECK(br.verdicts.at("r2").label == Label::LLM);
        CHECK(br.verdicts.at("r1").label == Label::Human);
    }
}

namespace {

/// Answers by text, tracking the peak number of concurrent calls.
class ConcurrentClient : public HttpClient {
public:
    HttpResponse post_json(const std::string&, const std::map<std::string, std::string>&, const std::string& body,
                           std::chrono::milliseconds) override {
        const int now = ++in_flight;
        int prev = peak.load();
        while (now > prev && !peak.compare_exchange_weak(prev, now)) {
        }
        std::this_thread::sleep_for(2ms);
        --in_flight;
        const auto text = nlohmann::json::parse(body)["document"].get<std::string>();
        if (text.find("fail") != std::string::npos) return {400, ""};
        return ok_commercial(text.size() % 2 ? "AI" : "Human");
    }
    std::atomic<int> in_flight{0}, peak{0};
};

}  // namespace

TEST_CASE("batch classification bounds concurrency and keeps failures per response") {
    std::vector<LabeledResponse> rows;
    for (int i = 0; i < 40; ++i) {
        LabeledResponse r;
        r.response_id = "r" + std::to_string(i);
        r.learner_id = "L" + std::to_string(i % 5);
        r.text = (i % 10 == 3 ? "fail " : "ok ") + std::string(static_cast<std::size_t>(i), 'x');
        rows.push_back(r);
    }
    const Corpus c(rows, {});
    std::map<std::string, Label> reference;
    for (int limit : {1, 3, 8}) {
        auto http = std::make_shared<ConcurrentClient>();
        auto cfg = commercial_config();
        cfg.max_in_flight = limit;
        DetectorGateway gw(cfg, http);
        const auto br = batch_classify(gw, c);
        CHECK(http->peak.load() <= limit);
        CHECK(br.failures.size() == 4);
        CHECK(br.verdicts.size() == 36);
        std::map<std::string, Label> labels;
        for (const auto& [id, v] : br.verdicts) labels[id] = v.label;
        if (reference.empty()) reference = labels;
        CHECK(labels == reference);
    }
}

TEST_CASE("mock provider never touches the network") {
    DetectorConfig cfg;
    cfg.kind = ProviderKind::Mock;
    cfg.mock_reply = "AI";
    DetectorGateway gw(cfg);
    CHECK(gw.classify("anything").label == Label::LLM);
    gw.set_mock_responder([](const std::string& t) { return t.empty() ? "Human" : "Mixed"; });
    CHECK(gw.classify("x").label == Label::Uncertain);
}

TEST_CASE("config validation and json") {
    DetectorConfig c = commercial_config();
    c.endpoint.clear();
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.offline = true;
    CHECK_NOTHROW(c.validate());
    c = commercial_config();
    c.max_in_flight = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = commercial_config();
    c.credential_env = "SOME_VAR";
    const auto back = detector_config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK_THROWS_AS(detector_config_from_json(nlohmann::json{{"kind", "oracle"}}), ConfigError);
}

TEST_CASE("prompt files must state the output contract") {
    TempDir t;
    CHECK_THROWS_AS(JudgePrompt::from_file(t.write("p.txt", "Decide who wrote it.")), ConfigError);
    const auto ok = JudgePrompt::from_file(t.write("q.txt", "Decide. " + std::string(kJudgeOutputContract)));
    CHECK(ok.system.find("Decide.") == 0);
}

TEST_CASE("fine-tuning export") {
    TempDir t;
    std::vector<LabeledResponse> rows(2);
    rows[0].response_id = "a";
    rows[0].learner_id = "L";
    rows[0].text = "i think so";
    rows[0].consensus = Label::Human;
    rows[1].response_id = "b";
    rows[1].learner_id = "L";
    rows[1].text = "Moreover, it is crucial.";
    rows[1].consensus = Label::Uncertain;
    const auto prompt = JudgePrompt::default_prompt();
    const auto line = nlohmann::json::parse(finetune_line(rows[1], prompt));
    CHECK(line["messages"].size() == 3);
    CHECK(line["messages"][2]["role"] == "assistant");
    CHECK(line["messages"][2]["content"] == "0.5");
    export_finetune_dataset(Corpus(rows, {}), prompt, t / "ft.jsonl");
    const auto body = testing_support::slurp(t / "ft.jsonl");
    CHECK(std::count(body.begin(), body.end(), '\n') == 2);
}
