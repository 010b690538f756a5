#include "llmdetect/evaluation.hpp"

#include <cfenv>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace llmdetect {

using json = nlohmann::json;

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (const auto& row : counts)
        for (auto v : row) t += v;
    return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t r) const {
    std::uint64_t t = 0;
    for (auto v : counts[r]) t += v;
    return t;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t c) const {
    std::uint64_t t = 0;
    for (const auto& row : counts) t += row[c];
    return t;
}

std::uint64_t ConfusionMatrix::trace() const {
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < kNumClasses; ++i) t += counts[i][i];
    return t;
}

ConfusionMatrix confusion(std::span<const Label> y_true, std::span<const Label> y_pred) {
    if (y_true.size() != y_pred.size())
        throw std::invalid_argument("confusion: label sequences differ in length");
    if (y_true.empty()) throw std::invalid_argument("confusion: no labels to score");
    ConfusionMatrix m;
    for (std::size_t i = 0; i < y_true.size(); ++i) ++m.counts[class_index(y_true[i])][class_index(y_pred[i])];
    return m;
}

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ClassificationReport report(const ConfusionMatrix& matrix) {
    ClassificationReport r;
    r.matrix = matrix;
    r.total = matrix.total();
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        auto& m = r.per_class[c];
        m.support = matrix.row_sum(c);
        m.precision = ratio(matrix.counts[c][c], matrix.col_sum(c));
        m.recall = ratio(matrix.counts[c][c], m.support);
        m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    }
    r.accuracy = ratio(matrix.trace(), r.total);
    for (const auto& m : r.per_class) {
        r.macro.precision += m.precision / kNumClasses;
        r.macro.recall += m.recall / kNumClasses;
        r.macro.f1 += m.f1 / kNumClasses;
    }
    if (r.total > 0) {
        const auto total = static_cast<double>(r.total);
        for (const auto& m : r.per_class) {
            const double w = static_cast<double>(m.support);
            r.weighted.precision += w * m.precision;
            r.weighted.recall += w * m.recall;
            r.weighted.f1 += w * m.f1;
        }
        r.weighted.precision /= total;
        r.weighted.recall /= total;
        r.weighted.f1 /= total;
    }
    return r;
}

std::string round2(double v) {
    const int saved = std::fegetround();
    std::fesetround(FE_TONEAREST);
    // Go through the shortest decimal form so 0.125 and 0.285 are rounded by
    // their printed digits rather than by binary noise from scaling.
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.15g", v * 100.0);
    const double cents = std::nearbyint(std::strtod(buf, nullptr));
    std::fesetround(saved);
    std::snprintf(buf, sizeof buf, "%.2f", cents / 100.0);
    std::string s(buf);
    return s == "-0.00" ? "0.00" : s;
}

namespace {

std::string render_text(const ClassificationReport& r) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "%-20s %9s %7s %9s %8s\n", "Label", "Precision", "Recall", "F1 Score",
                  "Support");
    out << line;
    for (Label l : kAllLabels) {
        const auto& m = r.per_class[class_index(l)];
        std::snprintf(line, sizeof line, "%-20s %9s %7s %9s %8llu\n", std::string(display_name(l)).c_str(),
                      round2(m.precision).c_str(), round2(m.recall).c_str(), round2(m.f1).c_str(),
                      static_cast<unsigned long long>(m.support));
        out << line;
    }
    std::snprintf(line, sizeof line, "%-20s %9s %7s %9s %8llu\n", "Accuracy", "", "", round2(r.accuracy).c_str(),
                  static_cast<unsigned long long>(r.total));
    out << line;
    auto avg = [&](const char* name, const AverageMetrics& a) {
        std::snprintf(line, sizeof line, "%-20s %9s %7s %9s %8llu\n", name, round2(a.precision).c_str(),
                      round2(a.recall).c_str(), round2(a.f1).c_str(), static_cast<unsigned long long>(r.total));
        out << line;
    };
    avg("Macro avg.", r.macro);
    avg("Weighted avg.", r.weighted);
    return out.str();
}

std::string csv_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string render_csv(const ClassificationReport& r) {
    std::ostringstream out;
    out << "row,precision,recall,f1,support\n";
    for (Label l : kAllLabels) {
        const auto& m = r.per_class[class_index(l)];
        out << to_token(l) << ',' << csv_number(m.precision) << ',' << csv_number(m.recall) << ','
            << csv_number(m.f1) << ',' << m.support << '\n';
    }
    out << "accuracy,,," << csv_number(r.accuracy) << ',' << r.total << '\n';
    out << "macro," << csv_number(r.macro.precision) << ',' << csv_number(r.macro.recall) << ','
        << csv_number(r.macro.f1) << ',' << r.total << '\n';
    out << "weighted," << csv_number(r.weighted.precision) << ',' << csv_number(r.weighted.recall) << ','
        << csv_number(r.weighted.f1) << ',' << r.total << '\n';
    return out.str();
}

json averages_json(const AverageMetrics& a) {
    return {{"precision", a.precision}, {"recall", a.recall}, {"f1", a.f1}};
}

AverageMetrics averages_from(const json& j) {
    return {j.at("precision").get<double>(), j.at("recall").get<double>(), j.at("f1").get<double>()};
}

}  // namespace

json report_to_json(const ClassificationReport& r) {
    json classes = json::array();
    for (Label l : kAllLabels) {
        const auto& m = r.per_class[class_index(l)];
        classes.push_back({{"label", to_token(l)},
                           {"precision", m.precision},
                           {"recall", m.recall},
                           {"f1", m.f1},
                           {"support", m.support}});
    }
    json matrix = json::array();
    for (const auto& row : r.matrix.counts) matrix.push_back(row);
    return {{"format", "llmdetect.report"},
            {"version", 1},
            {"classes", classes},
            {"accuracy", r.accuracy},
            {"macro", averages_json(r.macro)},
            {"weighted", averages_json(r.weighted)},
            {"total", r.total},
            {"confusion", matrix}};
}

ClassificationReport report_from_json(const json& j) {
    if (j.value("format", "") != "llmdetect.report") throw std::invalid_argument("not a report document");
    if (j.at("version").get<int>() != 1) throw std::invalid_argument("unsupported report version");
    ClassificationReport r;
    const auto& classes = j.at("classes");
    if (classes.size() != kNumClasses) throw std::invalid_argument("report must list three classes");
    for (const auto& c : classes) {
        auto l = parse_label(c.at("label").get<std::string>());
        if (!l) throw std::invalid_argument("report has an unknown class label");
        auto& m = r.per_class[class_index(*l)];
        m.precision = c.at("precision").get<double>();
        m.recall = c.at("recall").get<double>();
        m.f1 = c.at("f1").get<double>();
        m.support = c.at("support").get<std::uint64_t>();
    }
    r.accuracy = j.at("accuracy").get<double>();
    r.macro = averages_from(j.at("macro"));
    r.weighted = averages_from(j.at("weighted"));
    r.total = j.at("total").get<std::uint64_t>();
    const auto& grid = j.at("confusion");
    for (std::size_t i = 0; i < kNumClasses; ++i)
        for (std::size_t k = 0; k < kNumClasses; ++k) r.matrix.counts[i][k] = grid.at(i).at(k).get<std::uint64_t>();
    return r;
}

std::string render_report(const ClassificationReport& r, ReportFormat format) {
    switch (format) {
    case ReportFormat::Text: return render_text(r);
    case ReportFormat::Json: return report_to_json(r).dump(2) + "\n";
    case ReportFormat::Csv: return render_csv(r);
    }
    return {};
}

std::string confusion_csv(const ConfusionMatrix& m) {
    std::ostringstream out;
    out << "true\\pred,0,0.5,1\n";
    for (Label l : kAllLabels) {
        const auto& row = m.counts[class_index(l)];
        out << to_token(l) << ',' << row[0] << ',' << row[1] << ',' << row[2] << '\n';
    }
    return out.str();
}

}  // namespace llmdetect
