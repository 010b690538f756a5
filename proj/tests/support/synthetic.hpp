#pragma once

// Generator for rubric-styled synthetic responses. Human-styled texts carry
// typos, casual tone and first-person voice; LLM-styled texts carry list
// formatting, marker phrases and quote wrapping.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "llmdetect/corpus.hpp"
#include "llmdetect/rng.hpp"

namespace synth {

using llmdetect::Label;
using llmdetect::Rng;

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& v) {
    return v[static_cast<std::size_t>(rng.below(v.size()))];
}

inline std::string typo(Rng& rng, std::string w) {
    if (w.size() < 4) return w;
    const auto i = 1 + static_cast<std::size_t>(rng.below(w.size() - 2));
    switch (rng.below(3)) {
    case 0: std::swap(w[i], w[i + 1]); break;   // transposition
    case 1: w.erase(i, 1); break;                // dropped letter
    default: w.insert(i, 1, w[i]); break;        // doubled letter
    }
    return w;
}

inline std::string human_text(Rng& rng) {
    static const std::vector<std::string> openers = {
        "i think i would", "honestly i would", "i'd just", "idk maybe i would", "i feel like i should",
        "well i would", "if i was the tutor i would", "my plan is to", "i guess i would", "ok so i would"};
    static const std::vector<std::string> actions = {
        "tell the student they did good", "ask him what he doesnt get", "praise them for trying hard",
        "say good job and keep going", "give them a high five lol", "check what they got wrong first",
        "help them with the steps", "make sure they know its ok to mess up", "tell her i was bad at math too",
        "just be nice about it", "show them where they messed up", "let them try again on there own"};
    static const std::vector<std::string> tails = {
        "cause that helps", "and thats it", "so they dont feel bad", "i think thats best", "",
        "because my tutor did that for me", "and we can move on", "lol", "idk"};
    std::string out;
    const int sentences = 1 + static_cast<int>(rng.below(3));
    for (int s = 0; s < sentences; ++s) {
        std::string sent = pick(rng, openers) + " " + pick(rng, actions);
        const auto& t = pick(rng, tails);
        if (!t.empty()) sent += " " + t;
        // Inject typos into a few words.
        std::string typed;
        std::size_t start = 0;
        while (start <= sent.size()) {
            auto end = sent.find(' ', start);
            if (end == std::string::npos) end = sent.size();
            std::string w = sent.substr(start, end - start);
            if (rng.bernoulli(0.12)) w = typo(rng, w);
            typed += (typed.empty() ? "" : " ") + w;
            start = end + 1;
        }
        if (rng.bernoulli(0.3)) typed[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(typed[0])));
        out += (out.empty() ? "" : " ") + typed + (rng.bernoulli(0.7) ? "." : "");
    }
    return out;
}

inline std::string llm_text(Rng& rng) {
    static const std::vector<std::string> heads = {"Positive Reinforcement", "Acknowledge Effort", "Growth Mindset",
                                                   "Constructive Feedback", "Encouragement", "Next Steps"};
    static const std::vector<std::string> bodies = {
        "Recognize the student's perseverance and commitment to understanding the material",
        "Emphasize that mistakes are a crucial part of the learning process",
        "Provide specific, actionable guidance while fostering a supportive environment",
        "Highlight the progress demonstrated throughout the session",
        "Encourage continued practice, reinforcing confidence and resilience",
        "Leverage the student's strengths to build a deeper conceptual understanding"};
    static const std::vector<std::string> prose = {
        "Additionally, it is crucial to acknowledge the effort the student has invested.",
        "Moreover, fostering a growth mindset helps the student remain engaged and motivated.",
        "Furthermore, offering specific praise emphasizes the value of persistence.",
        "Overall, this approach ultimately creates an engaging and supportive learning experience.",
        "By validating their effort, the tutor reinforces confidence, resilience, and curiosity.",
        "This strategy encourages the student to view challenges as opportunities for growth."};
    std::string out;
    const bool list = rng.bernoulli(0.6);
    if (list) {
        out = "Here is how I would respond:\n";
        const int items = 2 + static_cast<int>(rng.below(3));
        for (int i = 0; i < items; ++i) {
            const bool numbered = rng.bernoulli(0.5);
            out += (numbered ? std::to_string(i + 1) + ". " : std::string("- ")) + pick(rng, heads) + ": " +
                   pick(rng, bodies) + ".\n";
        }
        out += pick(rng, prose);
    } else {
        const int n = 2 + static_cast<int>(rng.below(3));
        for (int i = 0; i < n; ++i) out += (out.empty() ? "" : " ") + pick(rng, prose);
        if (rng.bernoulli(0.6)) out = "\"" + out + "\"";
    }
    return out;
}

/// Polished but plain: neither casual markers nor list/marker styling.
inline std::string uncertain_text(Rng& rng) {
    static const std::vector<std::string> s = {
        "I would tell the student that they did a good job on this problem.",
        "It is important to let them know that effort matters.",
        "I would explain the mistake and then let them try again.",
        "Saying something positive first can help them stay motivated.",
        "I would remind them that practice helps everyone improve."};
    std::string out;
    const int n = 1 + static_cast<int>(rng.below(3));
    for (int i = 0; i < n; ++i) out += (out.empty() ? "" : " ") + pick(rng, s);
    return out;
}

struct Options {
    std::size_t human = 100;
    std::size_t llm = 100;
    std::size_t uncertain = 0;
    std::size_t learners = 50;
    std::size_t lesson_items = 6;
    std::uint64_t seed = 1;
    // MCQ generating model: logit P(correct) = beta0 + beta1 * [LLM] + u.
    double beta0 = 1.84;
    double beta1 = 0.86;
    double sigma_u = 1.0;
};

inline std::vector<llmdetect::LabeledResponse> responses(const Options& o) {
    Rng rng(o.seed);
    std::vector<Label> labels;
    labels.insert(labels.end(), o.human, Label::Human);
    labels.insert(labels.end(), o.llm, Label::LLM);
    labels.insert(labels.end(), o.uncertain, Label::Uncertain);
    rng.shuffle(std::span<Label>(labels));

    std::vector<double> u(o.learners);
    for (auto& v : u) v = o.sigma_u * rng.normal();

    std::vector<llmdetect::LabeledResponse> out;
    std::vector<std::size_t> items_seen(o.learners, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        llmdetect::LabeledResponse r;
        const std::size_t learner = i % o.learners;
        r.response_id = "r" + std::to_string(i + 1);
        r.learner_id = "L" + std::to_string(1000 + learner);
        r.lesson_id = "lesson" + std::to_string(1 + items_seen[learner] / o.lesson_items);
        r.item_id = "item" + std::to_string(++items_seen[learner]);
        const Label l = labels[i];
        switch (l) {
        case Label::Human: r.text = human_text(rng); break;
        case Label::LLM: r.text = llm_text(rng); break;
        case Label::Uncertain: r.text = uncertain_text(rng); break;
        }
        if (l == Label::Uncertain) {
            const bool flip = rng.bernoulli(0.5);
            r.coder_a = flip ? Label::Human : Label::LLM;
            r.coder_b = flip ? Label::LLM : Label::Human;
        } else {
            r.coder_a = r.coder_b = l;
        }
        r.consensus = l;
        const double eta = o.beta0 + o.beta1 * (l == Label::LLM ? 1.0 : 0.0) + u[learner];
        r.mcq_correct = rng.uniform() < 1.0 / (1.0 + std::exp(-eta));
        out.push_back(std::move(r));
    }
    return out;
}

inline llmdetect::Corpus corpus(const Options& o) {
    return llmdetect::Corpus(responses(o), {"synthetic", llmdetect::CorpusFormat::Csv});
}

}  // namespace synth
