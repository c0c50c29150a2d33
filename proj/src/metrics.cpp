#include "fcn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "fcn/data.hpp"
#include "fcn/errors.hpp"

namespace fcn {

using nlohmann::json;

std::optional<double> average_precision(const std::vector<double>& scores,
                                        const std::vector<std::uint8_t>& labels) {
    if (scores.size() != labels.size()) {
        throw ShapeError("average_precision: " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(labels.size()) + " labels");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });

    std::size_t hits = 0;
    double sum = 0.0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        if (labels[order[rank]]) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
        }
    }
    if (hits == 0) return std::nullopt;
    return sum / static_cast<double>(hits);
}

namespace {

struct Confusion {
    std::vector<std::uint64_t> tp, fp, fn;
};

Confusion count_confusion(const Tensor& scores, const std::vector<std::uint8_t>& labels,
                          PredictionMode mode) {
    const std::size_t m = scores.dim(0), n = scores.dim(1);
    Confusion c{std::vector<std::uint64_t>(n, 0), std::vector<std::uint64_t>(n, 0),
                std::vector<std::uint64_t>(n, 0)};
    std::vector<std::uint8_t> predicted(n);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = scores.data() + i * n;
        if (mode == PredictionMode::kThreshold) {
            for (std::size_t j = 0; j < n; ++j) predicted[j] = row[j] > 0.0 ? 1 : 0;
        } else {
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                if (row[a] != row[b]) return row[a] > row[b];
                return a < b;
            });
            std::fill(predicted.begin(), predicted.end(), 0);
            for (std::size_t r = 0; r < 3; ++r) predicted[order[r]] = 1;
        }
        for (std::size_t j = 0; j < n; ++j) {
            const bool truth = labels[i * n + j] != 0;
            if (predicted[j] && truth) ++c.tp[j];
            else if (predicted[j]) ++c.fp[j];
            else if (truth) ++c.fn[j];
        }
    }
    return c;
}

double f1(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

double round2(double v) { return std::round(v * 10000.0) / 100.0; }  // x100, 2 decimals

json class_metrics_json(const ClassMetrics& m) {
    return json{{"CP", round2(m.cp)},
                {"CR", round2(m.cr)},
                {"CF1", round2(m.cf1)},
                {"OP", round2(m.op)},
                {"OR", round2(m.orr)},
                {"OF1", round2(m.of1)},
                {"suppressed_precision_labels", m.suppressed_precision_labels},
                {"suppressed_recall_labels", m.suppressed_recall_labels}};
}

}  // namespace

ClassMetrics classification_metrics(const Tensor& scores,
                                    const std::vector<std::uint8_t>& labels,
                                    PredictionMode mode) {
    if (scores.rank() != 2) {
        throw ShapeError("classification_metrics: scores must be rank 2, got " +
                         scores.shape_str());
    }
    const std::size_t n = scores.dim(1);
    if (labels.size() != scores.size()) {
        throw ShapeError("classification_metrics: label matrix size " +
                         std::to_string(labels.size()) + " vs scores " + scores.shape_str());
    }
    if (mode == PredictionMode::kTop3 && n < 3) {
        throw ValidationError("top-3 metrics need at least 3 labels, got " + std::to_string(n));
    }

    const Confusion c = count_confusion(scores, labels, mode);

    ClassMetrics out;
    double precision_sum = 0.0, recall_sum = 0.0;
    std::size_t precision_n = 0, recall_n = 0;
    std::uint64_t tp_total = 0, fp_total = 0, fn_total = 0;
    for (std::size_t j = 0; j < n; ++j) {
        tp_total += c.tp[j];
        fp_total += c.fp[j];
        fn_total += c.fn[j];
        if (c.tp[j] + c.fp[j] > 0) {
            precision_sum += static_cast<double>(c.tp[j]) /
                             static_cast<double>(c.tp[j] + c.fp[j]);
            ++precision_n;
        } else {
            ++out.suppressed_precision_labels;
        }
        if (c.tp[j] + c.fn[j] > 0) {
            recall_sum += static_cast<double>(c.tp[j]) / static_cast<double>(c.tp[j] + c.fn[j]);
            ++recall_n;
        } else {
            ++out.suppressed_recall_labels;
        }
    }
    out.cp = precision_n ? precision_sum / static_cast<double>(precision_n) : 0.0;
    out.cr = recall_n ? recall_sum / static_cast<double>(recall_n) : 0.0;
    out.cf1 = f1(out.cp, out.cr);
    out.op = tp_total + fp_total > 0
                 ? static_cast<double>(tp_total) / static_cast<double>(tp_total + fp_total)
                 : 0.0;
    out.orr = tp_total + fn_total > 0
                  ? static_cast<double>(tp_total) / static_cast<double>(tp_total + fn_total)
                  : 0.0;
    out.of1 = f1(out.op, out.orr);
    return out;
}

EvalResult evaluate_scores(const Tensor& scores, const std::vector<std::uint8_t>& labels) {
    if (scores.rank() != 2) {
        throw ShapeError("evaluate_scores: scores must be rank 2, got " + scores.shape_str());
    }
    const std::size_t m = scores.dim(0), n = scores.dim(1);

    EvalResult result;
    result.num_examples = m;
    result.per_label_ap.assign(n, std::nan(""));
    double ap_sum = 0.0;
    std::size_t ap_n = 0;
    std::vector<double> column(m);
    std::vector<std::uint8_t> column_labels(m);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < m; ++i) {
            column[i] = scores(i, j);
            column_labels[i] = labels[i * n + j];
        }
        const auto ap = average_precision(column, column_labels);
        if (ap) {
            result.per_label_ap[j] = *ap;
            ap_sum += *ap;
            ++ap_n;
        } else {
            ++result.undefined_ap_labels;
        }
    }
    result.map = ap_n ? ap_sum / static_cast<double>(ap_n) : 0.0;
    result.all = classification_metrics(scores, labels, PredictionMode::kThreshold);
    if (n >= 3) {
        result.top3 = classification_metrics(scores, labels, PredictionMode::kTop3);
    }
    return result;
}

std::string metrics_to_json(const EvalResult& result, const LabelVocabulary* vocabulary,
                            const std::string& split_name) {
    json out;
    out["split"] = split_name;
    out["num_examples"] = result.num_examples;
    out["mAP"] = round2(result.map);
    json per_label = json::array();
    for (std::size_t j = 0; j < result.per_label_ap.size(); ++j) {
        json entry;
        if (vocabulary && j < vocabulary->size()) entry["label"] = vocabulary->labels[j].name;
        entry["AP"] = std::isnan(result.per_label_ap[j]) ? json(nullptr)
                                                         : json(round2(result.per_label_ap[j]));
        per_label.push_back(std::move(entry));
    }
    out["per_label_AP"] = std::move(per_label);
    out["undefined_AP_labels"] = result.undefined_ap_labels;
    out["all"] = class_metrics_json(result.all);
    out["top3"] = class_metrics_json(result.top3);
    return out.dump(2) + "\n";
}

namespace {

std::string cell(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v * 100.0);
    return buf;
}

}  // namespace

std::string metrics_to_markdown(const EvalResult& result, const LabelVocabulary* vocabulary,
                                const std::string& split_name) {
    std::ostringstream out;
    out << "# Evaluation (" << split_name << " split, " << result.num_examples
        << " outfits)\n\n";
    out << "|  | All |  |  |  |  |  | Top-3 |  |  |  |  |  |\n";
    out << "| mAP | CP | CR | CF1 | OP | OR | OF1 | CP | CR | CF1 | OP | OR | OF1 |\n";
    out << "| ---: | ---: | ---: | ---: | ---: | ---: | ---: | ---: | ---: | ---: | ---: | "
           "---: | ---: |\n";
    out << "| " << cell(result.map);
    for (const ClassMetrics* m : {&result.all, &result.top3}) {
        out << " | " << cell(m->cp) << " | " << cell(m->cr) << " | " << cell(m->cf1) << " | "
            << cell(m->op) << " | " << cell(m->orr) << " | " << cell(m->of1);
    }
    out << " |\n\n";

    out << "## Per-label AP\n\n| Label | AP |\n| --- | ---: |\n";
    for (std::size_t j = 0; j < result.per_label_ap.size(); ++j) {
        const std::string name = vocabulary && j < vocabulary->size()
                                     ? vocabulary->labels[j].name
                                     : "label " + std::to_string(j);
        out << "| " << name << " | ";
        if (std::isnan(result.per_label_ap[j])) {
            out << "n/a";
        } else {
            out << cell(result.per_label_ap[j]);
        }
        out << " |\n";
    }
    if (result.undefined_ap_labels > 0) {
        out << "\n" << result.undefined_ap_labels
            << " label(s) had no positive example and were excluded from mAP.\n";
    }
    return out.str();
}

}  // namespace fcn
