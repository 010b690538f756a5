#include <doctest.h>

#include <cmath>

#include "llmdetect/classifiers.hpp"
#include "llmdetect/rng.hpp"

using namespace llmdetect;

namespace {

struct Problem {
    FeatureMatrix x;
    std::vector<Label> y;
};

Problem random_problem(Rng& rng, std::size_t n, std::size_t d) {
    Problem p;
    for (std::size_t i = 0; i < n; ++i) {
        FeatureRow r(d);
        for (auto& v : r) v = rng.normal();
        p.x.push_back(r);
        p.y.push_back(label_from_index(rng.below(3)));
    }
    return p;
}

/// Three well-separated clusters.
Problem separable(std::uint64_t seed) {
    Rng rng(seed);
    Problem p;
    const double centers[3][2] = {{-4, 0}, {0, 4}, {4, 0}};
    for (int i = 0; i < 90; ++i) {
        const int c = i % 3;
        p.x.push_back({centers[c][0] + 0.5 * rng.normal(), centers[c][1] + 0.5 * rng.normal()});
        p.y.push_back(label_from_index(static_cast<std::size_t>(c)));
    }
    return p;
}

}  // namespace

TEST_CASE("softmax matches a hand computation") {
    const auto p = softmax({1.0, 2.0, 3.0});
    const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    CHECK(std::abs(p[0] - std::exp(1.0) / z) < 1e-12);
    CHECK(std::abs(p[1] - std::exp(2.0) / z) < 1e-12);
    CHECK(std::abs(p[2] - std::exp(3.0) / z) < 1e-12);
    const auto big = softmax({1000.0, 1001.0, 1002.0});
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(big[i] - p[i]) < 1e-12);
    const auto u = softmax({0.0, 0.0, 0.0});
    for (double v : u) CHECK(std::abs(v - 1.0 / 3) < 1e-15);
}

TEST_CASE("argmax ties go to the lowest code") {
    CHECK(argmax_label({0.4, 0.4, 0.2}) == Label::Human);
    CHECK(argmax_label({0.2, 0.4, 0.4}) == Label::Uncertain);
    CHECK(argmax_label({1.0 / 3, 1.0 / 3, 1.0 / 3}) == Label::Human);
    CHECK(argmax_label({0.1, 0.2, 0.7}) == Label::LLM);
}

TEST_CASE("sample weights") {
    const std::vector<Label> y{Label::Human, Label::Human, Label::Human, Label::LLM};
    const auto w = sample_weights(y, true);
    CHECK(w[0] == doctest::Approx(4.0 / (2 * 3)));
    CHECK(w[3] == doctest::Approx(4.0 / (2 * 1)));
    for (double v : sample_weights(y, false)) CHECK(v == 1.0);
}

TEST_CASE("analytic gradient matches central differences on 50 instances") {
    Rng rng(2024);
    double worst = 0;
    for (int inst = 0; inst < 50; ++inst) {
        const auto n = 5 + rng.below(30);
        const auto d = 1 + rng.below(6);
        const Problem pb = random_problem(rng, n, d);
        const double l2 = rng.uniform() * 2.0;
        const bool weighted = rng.bernoulli(0.5);
        LogisticObjective obj(pb.x, pb.y, sample_weights(pb.y, weighted), l2);
        std::vector<double> params(obj.num_params()), grad(obj.num_params());
        for (auto& v : params) v = rng.normal();
        obj.value_and_gradient(params, grad);
        const double h = 1e-5;
        for (std::size_t k = 0; k < params.size(); ++k) {
            auto plus = params, minus = params;
            plus[k] += h;
            minus[k] -= h;
            const double fd = (obj.value(plus) - obj.value(minus)) / (2 * h);
            const double rel = std::abs(grad[k] - fd) / std::max({std::abs(grad[k]), std::abs(fd), 1e-3});
            worst = std::max(worst, rel);
        }
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("value and value_and_gradient agree") {
    Rng rng(3);
    const Problem pb = random_problem(rng, 20, 4);
    LogisticObjective obj(pb.x, pb.y, std::vector<double>(20, 1.0), 0.5);
    std::vector<double> params(obj.num_params()), grad(obj.num_params());
    for (auto& v : params) v = rng.normal();
    CHECK(obj.value(params) == obj.value_and_gradient(params, grad));
    // Zero parameters: every row has probability 1/3.
    std::vector<double> zero(obj.num_params(), 0.0);
    CHECK(obj.value(zero) == doctest::Approx(std::log(3.0)).epsilon(1e-14));
}

TEST_CASE("loss never increases across accepted iterations") {
    Rng rng(77);
    for (int inst = 0; inst < 20; ++inst) {
        const Problem pb = random_problem(rng, 40, 5);
        TrainConfig cfg;
        cfg.l2_strength = rng.uniform();
        cfg.max_iterations = 200;
        const auto m = train_logistic(pb.x, pb.y, cfg);
        REQUIRE(m.loss_history.size() >= 2);
        for (std::size_t i = 1; i < m.loss_history.size(); ++i) CHECK(m.loss_history[i] <= m.loss_history[i - 1]);
    }
}

TEST_CASE("separable data is fit perfectly") {
    const Problem pb = separable(5);
    TrainConfig cfg;
    cfg.l2_strength = 0.01;
    cfg.max_iterations = 2000;
    const auto m = train_logistic(pb.x, pb.y, cfg);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pb.x.size(); ++i) correct += m.predict(pb.x[i]) == pb.y[i];
    CHECK(correct == pb.x.size());
}

TEST_CASE("training is bit-for-bit deterministic") {
    Rng rng(11);
    const Problem pb = random_problem(rng, 60, 6);
    TrainConfig cfg;
    const auto a = train_logistic(pb.x, pb.y, cfg);
    const auto b = train_logistic(pb.x, pb.y, cfg);
    CHECK(a.weights == b.weights);
    CHECK(a.bias == b.bias);
    CHECK(a.loss_history == b.loss_history);
    const auto ma = train_model(ModelKind::Logistic, pb.x, pb.y, cfg);
    const auto mb = train_model(ModelKind::Logistic, pb.x, pb.y, cfg);
    CHECK(model_to_json(ma).dump() == model_to_json(mb).dump());
}

TEST_CASE("converges and reports status") {
    const Problem pb = separable(9);
    TrainConfig cfg;
    cfg.max_iterations = 5000;
    const auto m = train_logistic(pb.x, pb.y, cfg);
    CHECK(m.status == TrainStatus::Converged);
    CHECK(m.gradient_norm < cfg.gradient_tolerance);
    TrainConfig few = cfg;
    few.max_iterations = 2;
    CHECK(train_logistic(pb.x, pb.y, few).status == TrainStatus::MaxIterations);
}

TEST_CASE("stronger l2 shrinks weights") {
    Rng rng(13);
    const Problem pb = random_problem(rng, 50, 4);
    double prev = std::numeric_limits<double>::infinity();
    for (double l2 : {0.01, 0.1, 1.0, 10.0, 100.0}) {
        TrainConfig cfg;
        cfg.l2_strength = l2;
        cfg.max_iterations = 3000;
        const double norm = train_logistic(pb.x, pb.y, cfg).weight_norm();
        CHECK(norm <= prev + 1e-9);
        prev = norm;
    }
}

TEST_CASE("fixed-step mode descends with a small rate") {
    const Problem pb = separable(2);
    TrainConfig cfg;
    cfg.line_search = false;
    cfg.learning_rate = 0.1;
    cfg.max_iterations = 300;
    const auto m = train_logistic(pb.x, pb.y, cfg);
    CHECK(m.loss_history.back() < m.loss_history.front());
}

TEST_CASE("single-class training is degenerate but usable") {
    FeatureMatrix x{{1.0}, {2.0}, {3.0}};
    std::vector<Label> y(3, Label::LLM);
    const auto m = train_logistic(x, y, TrainConfig{});
    CHECK(m.status == TrainStatus::DegenerateSingleClass);
    const auto p = m.predict_proba(std::vector<double>{0.0});
    CHECK(p[2] == doctest::Approx(kDegenerateConfidence));
    CHECK(m.predict(std::vector<double>{5.0}) == Label::LLM);
}

TEST_CASE("config validation and json") {
    TrainConfig bad;
    bad.l2_strength = -1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = {};
    bad.trees_count = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    TrainConfig c;
    c.l2_strength = 0.25;
    c.seed = 99;
    const auto back = train_config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"l2_strength", "x"}}), ConfigError);
}

TEST_CASE("model json round trip keeps predictions") {
    Rng rng(21);
    const Problem pb = random_problem(rng, 40, 13);
    const auto m = train_model(ModelKind::Logistic, pb.x, pb.y, TrainConfig{});
    const auto back = model_from_json(nlohmann::json::parse(model_to_json(m).dump()));
    for (const auto& r : pb.x) CHECK(back.predict_proba(r) == m.predict_proba(r));
    CHECK_THROWS_AS(model_from_json(nlohmann::json{{"format", "other"}}), DataError);
    auto broken = model_to_json(m);
    broken["logistic"]["weights"] = std::vector<double>{1.0};
    CHECK_THROWS_AS(model_from_json(broken), DataError);
}
