#pragma once

#include "sadapt/adapter.hpp"
#include "sadapt/dataio.hpp"
#include "sadapt/heads.hpp"
#include "sadapt/soup.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sadapt {

/// Fraction of predictions equal to the label.
double accuracy(std::span<const std::size_t> predictions, std::span<const std::uint32_t> labels);
/// Top-1 accuracy of logit rows (argmax ties go to the lowest class index).
double accuracy(const std::vector<std::vector<double>>& logits, std::span<const std::uint32_t> labels);

/// "start:end:step" -> ascending values in [0, 1], rounded to 12 decimals.
std::vector<double> parse_grid(const std::string& spec);
/// 0.0, 0.1, ..., 1.0
std::vector<double> default_grid();

/// Samples of one named evaluation split (view 0 is always used).
struct EvalSplit {
    std::string name;
    const EmbeddingSet* set = nullptr;
    std::vector<std::uint32_t> samples;

    static EvalSplit whole(std::string name, const EmbeddingSet& set) {
        return {std::move(name), &set, all_indices(set)};
    }
    std::vector<std::uint32_t> labels() const;
};

/// Anything mapping a unit feature to an adapter output a(x).
struct EvalModel {
    std::string name;
    std::function<std::vector<double>(std::span<const double>)> forward;

    static EvalModel adapter(std::string name, AdapterParams params);
    static EvalModel soup(std::string name, Soup soup);
};

/// Adapter outputs for every sample of the split; they do not depend on r.
std::vector<std::vector<double>> adapter_outputs(const EvalModel& model, const EvalSplit& split);

/// argmax of head_logits(blend(x, a, r)) per sample.
std::vector<std::size_t> predict(const ClassifierHead& head, const EvalSplit& split,
                                 const std::vector<std::vector<double>>& outputs, double r);

double head_accuracy(const ClassifierHead& head, const EvalSplit& split);
double knn_accuracy(const KnnBank& bank, const EvalSplit& split, const KnnConfig& cfg);

/// Accuracy at each r of the grid; one adapter pass per sample.
std::vector<double> ratio_sweep(const EvalModel& model, const ClassifierHead& head, const EvalSplit& split,
                                std::span<const double> grid);
std::vector<double> ratio_sweep(const AdapterParams& adapter, const ClassifierHead& head,
                                const EvalSplit& split, std::span<const double> grid);

struct RatioRow {
    std::string model;
    std::string split;
    double r = 0.0;
    double accuracy = 0.0;

    friend bool operator==(const RatioRow&, const RatioRow&) = default;
};

struct BaselineRow {
    std::string split;
    std::optional<double> prototype;
    std::optional<double> knn;
    std::optional<double> imported;

    friend bool operator==(const BaselineRow&, const BaselineRow&) = default;
};

struct ComponentStat {
    std::string split;
    double r = 0.0;
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;

    friend bool operator==(const ComponentStat&, const ComponentStat&) = default;
};

struct RobustnessPoint {
    std::string model;
    double r = 0.0;
    double id_accuracy = 0.0;
    double ood_accuracy = 0.0; // unweighted mean over shift sets

    friend bool operator==(const RobustnessPoint&, const RobustnessPoint&) = default;
};

struct EvalReport {
    std::string model_id;
    std::vector<double> grid;
    std::vector<RatioRow> rows;
    std::vector<BaselineRow> baselines;
    std::vector<ComponentStat> component_stats;
    std::vector<RobustnessPoint> robustness;

    /// Accuracy row for (model, split, r), if present.
    std::optional<double> find(const std::string& model, const std::string& split, double r) const;

    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

inline constexpr const char* kOodMeanSplit = "ood_mean";

/// Per model and r: accuracy on the ID split, on every OOD split, and their
/// unweighted mean ("ood_mean"), plus (ID, mean OOD) curve points and the
/// bare-head baseline for every split.
EvalReport robustness_report(const std::vector<EvalModel>& models, const ClassifierHead& head,
                             const EvalSplit& id_split, const std::vector<EvalSplit>& ood_splits,
                             std::span<const double> grid);

/// Every component on every split at every r, as rows "component_<j>", plus
/// "mean", "min" and "max" rows and matching component_stats.
EvalReport component_average_report(const std::vector<AdapterParams>& components, const ClassifierHead& head,
                                    const std::vector<EvalSplit>& splits, std::span<const double> grid);

/// Appends rows, baselines, stats and curve points of `other` (grid must match).
void merge_into(EvalReport& report, const EvalReport& other);

/// First r (lowest) with the highest accuracy of (model, split).
std::optional<std::pair<double, double>> best_ratio(const EvalReport& report, const std::string& model,
                                                    const std::string& split);

enum class ReportFormat { Json, Csv };

/// CSV: header "model,split,r,accuracy", one row per RatioRow, '\n' endings.
std::string report_to_csv(const EvalReport& report);
std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

void write_report(const EvalReport& report, const std::filesystem::path& path, ReportFormat format);
EvalReport read_report_json(const std::filesystem::path& path);

} // namespace sadapt
