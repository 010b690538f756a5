#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "llmdetect/label.hpp"

namespace llmdetect {

/// 3x3 counts; rows are true labels, columns predictions, both in code
/// order (0, 0.5, 1).
struct ConfusionMatrix {
    std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

    std::uint64_t total() const;
    std::uint64_t row_sum(std::size_t r) const;
    std::uint64_t col_sum(std::size_t c) const;
    std::uint64_t trace() const;

    bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(std::span<const Label> y_true, std::span<const Label> y_pred);

struct ClassMetrics {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    std::uint64_t support = 0;

    bool operator==(const ClassMetrics&) const = default;
};

struct AverageMetrics {
    double precision = 0;
    double recall = 0;
    double f1 = 0;

    bool operator==(const AverageMetrics&) const = default;
};

struct ClassificationReport {
    std::array<ClassMetrics, kNumClasses> per_class{};
    double accuracy = 0;
    AverageMetrics macro;
    AverageMetrics weighted;
    std::uint64_t total = 0;
    ConfusionMatrix matrix;

    bool operator==(const ClassificationReport&) const = default;
};

/// Zero denominators yield 0 for precision, recall and F1.
ClassificationReport report(const ConfusionMatrix& matrix);

inline ClassificationReport report(std::span<const Label> y_true, std::span<const Label> y_pred) {
    return report(confusion(y_true, y_pred));
}

enum class ReportFormat { Text, Json, Csv };

/// Text tables round to two decimals (half-to-even); JSON keeps full
/// precision.
std::string render_report(const ClassificationReport& r, ReportFormat format);

nlohmann::json report_to_json(const ClassificationReport& r);
ClassificationReport report_from_json(const nlohmann::json& j);

/// Grid with header ",0,0.5,1" and one row per true label.
std::string confusion_csv(const ConfusionMatrix& m);

/// Two-decimal rendering with round-half-to-even on the decimal value.
std::string round2(double v);

}  // namespace llmdetect
