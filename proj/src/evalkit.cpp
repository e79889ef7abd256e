#include "sadapt/evalkit.hpp"

#include "sadapt/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>

namespace sadapt {

double accuracy(std::span<const std::size_t> predictions, std::span<const std::uint32_t> labels) {
    if (predictions.size() != labels.size()) {
        fail(ErrorKind::LengthMismatch, std::to_string(predictions.size()) + " predictions for " +
                                            std::to_string(labels.size()) + " labels");
    }
    if (labels.empty()) {
        fail(ErrorKind::InvalidArgument, "accuracy of an empty split");
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        correct += predictions[i] == labels[i] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double accuracy(const std::vector<std::vector<double>>& logits, std::span<const std::uint32_t> labels) {
    std::vector<std::size_t> pred;
    pred.reserve(logits.size());
    for (const auto& row : logits) {
        pred.push_back(argmax(row));
    }
    return accuracy(pred, labels);
}

namespace {

double round12(double v) {
    return std::round(v * 1e12) / 1e12;
}

double parse_double(const std::string& text, const std::string& what) {
    double v = 0.0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last) {
        fail(ErrorKind::InvalidArgument, "grid " + what + " \"" + text + "\" is not a number");
    }
    return v;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

} // namespace

std::vector<double> parse_grid(const std::string& spec) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ':')) {
        parts.push_back(item);
    }
    if (parts.size() != 3) {
        fail(ErrorKind::InvalidArgument, "grid must look like start:end:step, got \"" + spec + "\"");
    }
    const double start = parse_double(parts[0], "start");
    const double end = parse_double(parts[1], "end");
    const double step = parse_double(parts[2], "step");
    if (!(start >= 0.0 && end <= 1.0 && start <= end)) {
        fail(ErrorKind::InvalidArgument, "grid must satisfy 0 <= start <= end <= 1");
    }
    if (start == end) {
        return {start};
    }
    if (!(step > 0.0)) {
        fail(ErrorKind::InvalidArgument, "grid step must be positive");
    }
    const double span = (end - start) / step;
    if (span > 1e6) {
        fail(ErrorKind::InvalidArgument, "grid has too many points");
    }
    const auto n = static_cast<std::size_t>(std::floor(span + 1e-9)) + 1;
    std::vector<double> grid;
    grid.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        grid.push_back(std::min(end, round12(start + static_cast<double>(i) * step)));
    }
    return grid;
}

std::vector<double> default_grid() {
    return parse_grid("0:1:0.1");
}

std::vector<std::uint32_t> EvalSplit::labels() const {
    std::vector<std::uint32_t> out;
    out.reserve(samples.size());
    for (auto i : samples) {
        out.push_back(set->label(i));
    }
    return out;
}

EvalModel EvalModel::adapter(std::string name, AdapterParams params) {
    auto p = std::make_shared<const AdapterParams>(std::move(params));
    return {std::move(name), [p](std::span<const double> x) { return adapter_forward(*p, x); }};
}

EvalModel EvalModel::soup(std::string name, Soup soup) {
    auto s = std::make_shared<const Soup>(std::move(soup));
    return {std::move(name), [s](std::span<const double> x) { return soup_forward(*s, x); }};
}

std::vector<std::vector<double>> adapter_outputs(const EvalModel& model, const EvalSplit& split) {
    std::vector<std::vector<double>> out;
    out.reserve(split.samples.size());
    for (auto i : split.samples) {
        out.push_back(model.forward(split.set->unit(i, 0)));
    }
    return out;
}

std::vector<std::size_t> predict(const ClassifierHead& head, const EvalSplit& split,
                                 const std::vector<std::vector<double>>& outputs, double r) {
    if (outputs.size() != split.samples.size()) {
        fail(ErrorKind::LengthMismatch, "adapter outputs do not match the split");
    }
    std::vector<std::size_t> pred;
    pred.reserve(outputs.size());
    for (std::size_t n = 0; n < outputs.size(); ++n) {
        const auto f = blend(split.set->unit(split.samples[n], 0), outputs[n], r);
        pred.push_back(argmax(head_logits(head, f)));
    }
    return pred;
}

double head_accuracy(const ClassifierHead& head, const EvalSplit& split) {
    std::vector<std::size_t> pred;
    pred.reserve(split.samples.size());
    for (auto i : split.samples) {
        pred.push_back(argmax(head_logits(head, split.set->unit(i, 0))));
    }
    return accuracy(pred, split.labels());
}

double knn_accuracy(const KnnBank& bank, const EvalSplit& split, const KnnConfig& cfg) {
    std::vector<std::size_t> pred;
    pred.reserve(split.samples.size());
    for (auto i : split.samples) {
        pred.push_back(argmax(knn_logits(bank, split.set->unit(i, 0), cfg)));
    }
    return accuracy(pred, split.labels());
}

namespace {

void check_compatible(const ClassifierHead& head, const EvalSplit& split) {
    if (split.set == nullptr) {
        fail(ErrorKind::InvalidArgument, "split \"" + split.name + "\" has no embedding set");
    }
    if (split.set->classes() != head.classes() || split.set->dim() != head.dim()) {
        fail(ErrorKind::ClassSetMismatch, "split \"" + split.name + "\" has C=" +
                                              std::to_string(split.set->classes()) + ", D=" +
                                              std::to_string(split.set->dim()) + " but the head has C=" +
                                              std::to_string(head.classes()) + ", D=" +
                                              std::to_string(head.dim()));
    }
}

std::vector<double> sweep_outputs(const ClassifierHead& head, const EvalSplit& split,
                                  const std::vector<std::vector<double>>& outputs, std::span<const double> grid) {
    const auto labels = split.labels();
    std::vector<double> acc;
    acc.reserve(grid.size());
    for (double r : grid) {
        acc.push_back(accuracy(predict(head, split, outputs, r), labels));
    }
    return acc;
}

} // namespace

std::vector<double> ratio_sweep(const EvalModel& model, const ClassifierHead& head, const EvalSplit& split,
                                std::span<const double> grid) {
    check_compatible(head, split);
    return sweep_outputs(head, split, adapter_outputs(model, split), grid);
}

std::vector<double> ratio_sweep(const AdapterParams& adapter, const ClassifierHead& head,
                                const EvalSplit& split, std::span<const double> grid) {
    return ratio_sweep(EvalModel::adapter("adapter", adapter), head, split, grid);
}

std::optional<double> EvalReport::find(const std::string& model, const std::string& split, double r) const {
    for (const auto& row : rows) {
        if (row.model == model && row.split == split && row.r == r) {
            return row.accuracy;
        }
    }
    return std::nullopt;
}

EvalReport robustness_report(const std::vector<EvalModel>& models, const ClassifierHead& head,
                             const EvalSplit& id_split, const std::vector<EvalSplit>& ood_splits,
                             std::span<const double> grid) {
    check_compatible(head, id_split);
    for (const auto& s : ood_splits) {
        check_compatible(head, s);
    }
    EvalReport report;
    report.model_id = models.empty() ? "" : models.front().name;
    report.grid.assign(grid.begin(), grid.end());

    const auto baseline = [&](const EvalSplit& s) {
        BaselineRow row{s.name, {}, {}, {}};
        const double acc = head_accuracy(head, s);
        if (head.origin == HeadOrigin::Imported) {
            row.imported = acc;
        } else {
            row.prototype = acc;
        }
        report.baselines.push_back(row);
    };
    baseline(id_split);
    for (const auto& s : ood_splits) {
        baseline(s);
    }

    for (const auto& model : models) {
        const auto id_acc = ratio_sweep(model, head, id_split, grid);
        std::vector<double> ood_sum(grid.size(), 0.0);
        std::vector<std::vector<double>> ood_acc;
        for (const auto& s : ood_splits) {
            ood_acc.push_back(ratio_sweep(model, head, s, grid));
            for (std::size_t g = 0; g < grid.size(); ++g) {
                ood_sum[g] += ood_acc.back()[g];
            }
        }
        for (std::size_t g = 0; g < grid.size(); ++g) {
            report.rows.push_back({model.name, id_split.name, grid[g], id_acc[g]});
        }
        for (std::size_t o = 0; o < ood_splits.size(); ++o) {
            for (std::size_t g = 0; g < grid.size(); ++g) {
                report.rows.push_back({model.name, ood_splits[o].name, grid[g], ood_acc[o][g]});
            }
        }
        if (!ood_splits.empty()) {
            const double n = static_cast<double>(ood_splits.size());
            for (std::size_t g = 0; g < grid.size(); ++g) {
                report.rows.push_back({model.name, kOodMeanSplit, grid[g], ood_sum[g] / n});
                report.robustness.push_back({model.name, grid[g], id_acc[g], ood_sum[g] / n});
            }
        }
    }
    return report;
}

EvalReport component_average_report(const std::vector<AdapterParams>& components, const ClassifierHead& head,
                                    const std::vector<EvalSplit>& splits, std::span<const double> grid) {
    if (components.empty()) {
        fail(ErrorKind::InvalidArgument, "component_average_report needs at least one component");
    }
    for (const auto& s : splits) {
        check_compatible(head, s);
    }
    EvalReport report;
    report.model_id = "components";
    report.grid.assign(grid.begin(), grid.end());

    for (const auto& split : splits) {
        std::vector<std::vector<double>> acc; // [component][r]
        for (std::size_t j = 0; j < components.size(); ++j) {
            acc.push_back(ratio_sweep(components[j], head, split, grid));
            for (std::size_t g = 0; g < grid.size(); ++g) {
                report.rows.push_back({"component_" + std::to_string(j), split.name, grid[g], acc[j][g]});
            }
        }
        std::vector<ComponentStat> stats;
        for (std::size_t g = 0; g < grid.size(); ++g) {
            ComponentStat st{split.name, grid[g], 0.0, acc[0][g], acc[0][g]};
            double sum = 0.0;
            for (const auto& a : acc) {
                sum += a[g];
                st.min = std::min(st.min, a[g]);
                st.max = std::max(st.max, a[g]);
            }
            st.mean = sum / static_cast<double>(acc.size());
            stats.push_back(st);
        }
        for (const char* which : {"mean", "min", "max"}) {
            for (const auto& st : stats) {
                const std::string w = which;
                const double v = w == "mean" ? st.mean : (w == "min" ? st.min : st.max);
                report.rows.push_back({w, split.name, st.r, v});
            }
        }
        report.component_stats.insert(report.component_stats.end(), stats.begin(), stats.end());
    }
    return report;
}

void merge_into(EvalReport& report, const EvalReport& other) {
    if (report.grid.empty() && report.rows.empty()) {
        report.grid = other.grid;
        if (report.model_id.empty()) {
            report.model_id = other.model_id;
        }
    } else if (report.grid != other.grid) {
        fail(ErrorKind::InvalidArgument, "cannot merge reports over different grids");
    }
    report.rows.insert(report.rows.end(), other.rows.begin(), other.rows.end());
    for (const auto& b : other.baselines) {
        auto it = std::find_if(report.baselines.begin(), report.baselines.end(),
                               [&](const BaselineRow& x) { return x.split == b.split; });
        if (it == report.baselines.end()) {
            report.baselines.push_back(b);
        } else {
            if (b.prototype) it->prototype = b.prototype;
            if (b.knn) it->knn = b.knn;
            if (b.imported) it->imported = b.imported;
        }
    }
    report.component_stats.insert(report.component_stats.end(), other.component_stats.begin(),
                                  other.component_stats.end());
    report.robustness.insert(report.robustness.end(), other.robustness.begin(), other.robustness.end());
}

std::optional<std::pair<double, double>> best_ratio(const EvalReport& report, const std::string& model,
                                                    const std::string& split) {
    std::optional<std::pair<double, double>> best;
    for (const auto& row : report.rows) {
        if (row.model != model || row.split != split) {
            continue;
        }
        if (!best || row.accuracy > best->second || (row.accuracy == best->second && row.r < best->first)) {
            best = std::make_pair(row.r, row.accuracy);
        }
    }
    return best;
}

std::string report_to_csv(const EvalReport& report) {
    std::string out = "model,split,r,accuracy\n";
    for (const auto& row : report.rows) {
        out += row.model + ',' + row.split + ',' + format_double(row.r) + ',' + format_double(row.accuracy) + '\n';
    }
    return out;
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> optional_from(const nlohmann::json& j) {
    if (j.is_null()) {
        return std::nullopt;
    }
    return j.get<double>();
}

} // namespace

std::string report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["model_id"] = report.model_id;
    j["grid"] = report.grid;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : report.rows) {
        j["rows"].push_back({{"model", r.model}, {"split", r.split}, {"r", r.r}, {"accuracy", r.accuracy}});
    }
    j["baselines"] = nlohmann::json::array();
    for (const auto& b : report.baselines) {
        j["baselines"].push_back({{"split", b.split},
                                  {"prototype", optional_json(b.prototype)},
                                  {"knn", optional_json(b.knn)},
                                  {"imported", optional_json(b.imported)}});
    }
    j["component_stats"] = nlohmann::json::array();
    for (const auto& s : report.component_stats) {
        j["component_stats"].push_back(
            {{"split", s.split}, {"r", s.r}, {"mean", s.mean}, {"min", s.min}, {"max", s.max}});
    }
    j["robustness"] = nlohmann::json::array();
    for (const auto& p : report.robustness) {
        j["robustness"].push_back(
            {{"model", p.model}, {"r", p.r}, {"id", p.id_accuracy}, {"ood", p.ood_accuracy}});
    }
    return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        EvalReport report;
        report.model_id = j.at("model_id").get<std::string>();
        report.grid = j.at("grid").get<std::vector<double>>();
        for (const auto& r : j.at("rows")) {
            report.rows.push_back({r.at("model").get<std::string>(), r.at("split").get<std::string>(),
                                   r.at("r").get<double>(), r.at("accuracy").get<double>()});
        }
        for (const auto& b : j.at("baselines")) {
            report.baselines.push_back({b.at("split").get<std::string>(), optional_from(b.at("prototype")),
                                        optional_from(b.at("knn")), optional_from(b.at("imported"))});
        }
        for (const auto& s : j.at("component_stats")) {
            report.component_stats.push_back({s.at("split").get<std::string>(), s.at("r").get<double>(),
                                              s.at("mean").get<double>(), s.at("min").get<double>(),
                                              s.at("max").get<double>()});
        }
        for (const auto& p : j.at("robustness")) {
            report.robustness.push_back({p.at("model").get<std::string>(), p.at("r").get<double>(),
                                         p.at("id").get<double>(), p.at("ood").get<double>()});
        }
        return report;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::MalformedMetadata, std::string("report: ") + e.what());
    }
}

void write_report(const EvalReport& report, const std::filesystem::path& path, ReportFormat format) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(ErrorKind::IoFailure, "cannot write report " + path.string());
    }
    out << (format == ReportFormat::Csv ? report_to_csv(report) : report_to_json(report));
    if (!out) {
        fail(ErrorKind::IoFailure, "write error on " + path.string());
    }
}

EvalReport read_report_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorKind::IoFailure, "cannot open report " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return report_from_json(ss.str());
}

} // namespace sadapt
