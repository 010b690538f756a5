#include <doctest.h>

#include <cmath>

#include "llmdetect/classifiers.hpp"
#include "llmdetect/rng.hpp"
#include "oracles/split_oracle.hpp"
#include "support/synthetic.hpp"

using namespace llmdetect;

namespace {

void make_random(Rng& rng, std::size_t n, std::size_t d, FeatureMatrix& x, std::vector<Label>& y, bool discrete) {
    x.clear();
    y.clear();
    for (std::size_t i = 0; i < n; ++i) {
        FeatureRow r(d);
        for (auto& v : r) v = discrete ? static_cast<double>(rng.below(5)) : rng.normal();
        x.push_back(r);
        y.push_back(label_from_index(rng.below(3)));
    }
}

std::vector<int> codes(const std::vector<Label>& y) {
    std::vector<int> out;
    for (Label l : y) out.push_back(static_cast<int>(class_index(l)));
    return out;
}

}  // namespace

TEST_CASE("features per split") {
    CHECK(features_per_split(1) == 1);
    CHECK(features_per_split(2) == 2);
    CHECK(features_per_split(4) == 2);
    CHECK(features_per_split(13) == 4);
    CHECK(features_per_split(16) == 4);
}

TEST_CASE("gini decrease by hand") {
    // Parent 2/2/0, perfect split into 2/0/0 and 0/2/0: 4 * 0.5 - 0 - 0.
    CHECK(gini_decrease({2, 2, 0}, {2, 0, 0}) == doctest::Approx(2.0));
    // Uninformative split keeps impurity.
    CHECK(gini_decrease({2, 2, 0}, {1, 1, 0}) == doctest::Approx(0.0));
}

TEST_CASE("a single stump finds the exhaustive best split") {
    Rng rng(31);
    int compared = 0;
    for (int inst = 0; inst < 60; ++inst) {
        FeatureMatrix x;
        std::vector<Label> y;
        make_random(rng, 8 + rng.below(30), 2, x, y, inst % 2 == 0);
        const int msl = 1 + static_cast<int>(rng.below(3));
        TrainConfig cfg;
        cfg.trees_count = 1;
        cfg.max_depth = 1;
        cfg.bootstrap = false;
        cfg.min_samples_leaf = msl;
        cfg.seed = static_cast<std::uint64_t>(inst);
        const auto f = train_forest(x, y, cfg);
        const auto& root = f.trees[0].nodes[0];
        const auto want = oracle::best_split(x, codes(y), msl);
        const double parent = oracle::gini(codes(y));
        if (!(want.impurity < parent - 1e-12)) {
            CHECK(root.feature == -1);
            continue;
        }
        REQUIRE(root.feature >= 0);
        std::vector<int> l, r;
        for (std::size_t i = 0; i < x.size(); ++i)
            (x[i][static_cast<std::size_t>(root.feature)] <= root.threshold ? l : r).push_back(static_cast<int>(class_index(y[i])));
        const double got = (l.size() * oracle::gini(l) + r.size() * oracle::gini(r)) / static_cast<double>(x.size());
        CHECK(std::abs(got - want.impurity) < 1e-12);
        ++compared;
    }
    CHECK(compared > 30);
}

TEST_CASE("tree shape respects limits") {
    Rng rng(8);
    FeatureMatrix x;
    std::vector<Label> y;
    make_random(rng, 200, 5, x, y, false);
    TrainConfig cfg;
    cfg.trees_count = 10;
    cfg.max_depth = 4;
    cfg.min_samples_leaf = 5;
    const auto f = train_forest(x, y, cfg);
    for (const auto& t : f.trees) {
        CHECK(t.depth() <= 4);
        for (const auto& n : t.nodes)
            if (n.feature < 0) CHECK(n.samples >= 5);
    }
    for (const auto& r : x) {
        const auto p = f.predict_proba(r);
        CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0));
    }
}

TEST_CASE("forest is deterministic under a fixed seed") {
    Rng rng(17);
    FeatureMatrix x;
    std::vector<Label> y;
    make_random(rng, 150, 13, x, y, false);
    TrainConfig cfg;
    cfg.trees_count = 25;
    const auto a = train_model(ModelKind::Forest, x, y, cfg);
    const auto b = train_model(ModelKind::Forest, x, y, cfg);
    CHECK(model_to_json(a).dump() == model_to_json(b).dump());
    cfg.seed = 43;
    const auto c = train_model(ModelKind::Forest, x, y, cfg);
    CHECK(model_to_json(a).dump() != model_to_json(c).dump());
}

TEST_CASE("forest fits separable data") {
    FeatureMatrix x;
    std::vector<Label> y;
    for (int i = 0; i < 60; ++i) {
        x.push_back({static_cast<double>(i), static_cast<double>(i % 7)});
        y.push_back(i < 20 ? Label::Human : i < 40 ? Label::Uncertain : Label::LLM);
    }
    TrainConfig cfg;
    cfg.trees_count = 15;
    const auto f = train_forest(x, y, cfg);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < x.size(); ++i) ok += f.predict(x[i]) == y[i];
    CHECK(ok == x.size());
}

TEST_CASE("forest json round trip") {
    Rng rng(23);
    FeatureMatrix x;
    std::vector<Label> y;
    make_random(rng, 80, 4, x, y, false);
    TrainConfig cfg;
    cfg.trees_count = 7;
    const auto m = train_model(ModelKind::Forest, x, y, cfg);
    const auto back = model_from_json(nlohmann::json::parse(model_to_json(m).dump()));
    for (const auto& r : x) CHECK(back.predict_proba(r) == m.predict_proba(r));
    auto broken = model_to_json(m);
    broken["forest"]["trees"][0]["left"][0] = 0;
    CHECK_THROWS_AS(model_from_json(broken), DataError);
}

TEST_CASE("winner selection rules") {
    auto cand = [](ModelKind k, double f1, double acc) {
        CandidateResult r;
        r.candidate.kind = k;
        r.mean_weighted_f1 = f1;
        r.mean_accuracy = acc;
        return r;
    };
    std::vector<CandidateResult> v{cand(ModelKind::Forest, 0.7, 0.7), cand(ModelKind::Logistic, 0.8, 0.6)};
    CHECK(select_winner(v) == 1);
    v = {cand(ModelKind::Logistic, 0.8, 0.6), cand(ModelKind::Forest, 0.8, 0.7)};
    CHECK(select_winner(v) == 1);
    v = {cand(ModelKind::Forest, 0.8, 0.7), cand(ModelKind::Logistic, 0.8, 0.7)};
    CHECK(select_winner(v) == 1);
    v = {cand(ModelKind::Logistic, 0.8, 0.7), cand(ModelKind::Forest, 0.8 + 1e-14, 0.7)};
    CHECK(select_winner(v) == 0);
    CHECK_THROWS(select_winner(std::vector<CandidateResult>{}));
}

TEST_CASE("cross-validation is learner-level and deterministic") {
    const auto c = synth::corpus({.human = 60, .llm = 60, .uncertain = 20, .learners = 20, .seed = 4});
    const auto x = extract_matrix(c, StyleConfig::defaults());
    const auto y = c.consensus_labels();
    std::vector<std::string> learners;
    for (const auto& r : c) learners.push_back(r.learner_id);
    TrainConfig cfg;
    cfg.trees_count = 20;
    const std::vector<Candidate> cands{{ModelKind::Logistic, cfg}, {ModelKind::Forest, cfg}};
    const auto a = cross_validate(x, y, learners, 5, cands, 42);
    const auto b = cross_validate(x, y, learners, 5, cands, 42);
    CHECK(cross_val_to_json(a).dump() == cross_val_to_json(b).dump());
    REQUIRE(a.candidates.size() == 2);
    for (const auto& cr : a.candidates) {
        CHECK(cr.folds.size() == 5);
        std::uint64_t total = 0;
        for (const auto& f : cr.folds) total += f.total;
        CHECK(total == c.size());
    }
    CHECK(a.winner == select_winner(a.candidates));
}
