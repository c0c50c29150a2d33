#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fcn/tensor.hpp"

namespace fcn {

struct LabelVocabulary;

enum class PredictionMode { kThreshold, kTop3 };

struct ClassMetrics {
    double cp = 0.0, cr = 0.0, cf1 = 0.0;  // per-class averages
    double op = 0.0, orr = 0.0, of1 = 0.0;  // pooled over all decisions
    std::size_t suppressed_precision_labels = 0;  // labels with no predictions
    std::size_t suppressed_recall_labels = 0;     // labels with no positives
};

// Ranks by descending score with ties broken by ascending example index;
// AP = mean over positive ranks k of (positives in top k) / k. Empty when the
// label has no positive example.
std::optional<double> average_precision(const std::vector<double>& scores,
                                        const std::vector<std::uint8_t>& labels);

// scores is [M x N]; labels is the matching row-major binary matrix.
// Threshold mode predicts positive iff score > 0; top-3 mode predicts exactly
// the 3 highest-scoring labels per example (ties by ascending label index).
// Per-label terms with a zero denominator are dropped from the class averages
// and counted as suppressed.
ClassMetrics classification_metrics(const Tensor& scores,
                                    const std::vector<std::uint8_t>& labels,
                                    PredictionMode mode);

struct EvalResult {
    std::size_t num_examples = 0;
    double map = 0.0;
    std::vector<double> per_label_ap;  // NaN where no positive example exists
    std::size_t undefined_ap_labels = 0;
    ClassMetrics all;   // threshold mode
    ClassMetrics top3;  // top-3 mode
};

EvalResult evaluate_scores(const Tensor& scores, const std::vector<std::uint8_t>& labels);

// Reporting: values scaled x100 and rounded to 2 decimals.
std::string metrics_to_json(const EvalResult& result, const LabelVocabulary* vocabulary,
                            const std::string& split_name);
std::string metrics_to_markdown(const EvalResult& result, const LabelVocabulary* vocabulary,
                                const std::string& split_name);

}  // namespace fcn
