#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ilnl/blackbox.hpp"
#include "ilnl/checkpoint.hpp"
#include "ilnl/dataset.hpp"
#include "ilnl/errors.hpp"
#include "ilnl/evaluate.hpp"
#include "ilnl/lnl.hpp"
#include "ilnl/report.hpp"

namespace ilnl {

struct IterConfig {
    std::size_t steps = 5;           // M
    LnlConfig lnl;
    bool warm_start = false;         // default: fresh random init each step
    double eps_tolerance = 0.01;     // early stop once |eps_m - eps_{m-1}| falls below
    std::uint64_t master_seed = 0;
    std::optional<std::filesystem::path> out_dir;  // step artifacts + trace when set

    void validate() const {
        if (steps < 1) throw config_error("IterConfig: steps must be >= 1");
        if (eps_tolerance < 0.0) throw config_error("IterConfig: tolerance must be >= 0");
        lnl.validate();
    }
};

inline std::string serialize_config(const IterConfig& c) {
    std::string out = serialize_config(c.lnl);
    out += "eps_tolerance=" + format_double(c.eps_tolerance) + "\n";
    out += "master_seed=" + std::to_string(c.master_seed) + "\n";
    out += "steps=" + std::to_string(c.steps) + "\n";
    out += "warm_start=" + std::string(c.warm_start ? "1" : "0") + "\n";
    return out;
}

inline Provenance make_provenance(const IterConfig& config) {
    return Provenance{config.master_seed, hex64(fnv1a64(serialize_config(config)))};
}

struct StepRecord {
    std::size_t m = 0;
    double eps_estimated = 0.0;
    std::optional<double> label_acc;   // accuracy of the step's noisy labels
    std::optional<double> model_acc;   // accuracy of the trained model
    std::string checkpoint;            // relative to out_dir; empty if not persisted
};

struct IterResult {
    ClassifierModel model;
    std::vector<StepRecord> trace;
};

inline void write_trace_csv(const std::filesystem::path& path, const Provenance& prov,
                            const std::vector<StepRecord>& trace) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : trace)
        rows.push_back({std::to_string(r.m), format_double(r.eps_estimated),
                        r.label_acc ? format_double(*r.label_acc) : "",
                        r.model_acc ? format_double(*r.model_acc) : "", r.checkpoint});
    write_csv_table(path, prov, {"m", "epsilon_est", "label_acc", "model_acc", "checkpoint"},
                    rows);
}

inline std::vector<StepRecord> parse_trace_csv(const std::filesystem::path& path) {
    std::ifstream in =
        detail::open_report_csv(path, "m,epsilon_est,label_acc,model_acc,checkpoint");
    std::vector<StepRecord> trace;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = detail::split_fields(line);
        if (fields.size() != 5)
            throw data_error(path.string() + ": malformed trace row '" + line + "'");
        StepRecord r;
        r.m = static_cast<std::size_t>(std::stoul(fields[0]));
        r.eps_estimated = std::stod(fields[1]);
        if (!fields[2].empty()) r.label_acc = std::stod(fields[2]);
        if (!fields[3].empty()) r.model_acc = std::stod(fields[3]);
        r.checkpoint = fields[4];
        trace.push_back(std::move(r));
    }
    if (trace.empty()) throw data_error(path.string() + ": empty trace");
    return trace;
}

/// Alternate noisy labeling and LNL for up to M steps. Step 1 labels come from
/// the source black box; every later step labels with the previous step's
/// model re-sealed behind the prediction interface. Each step trains a fresh
/// model (or warm-starts when configured). Stops early once the estimated
/// noise rate plateaus; the step that triggered the stop is still recorded.
inline IterResult run_iterlnl(const BlackBoxHandle& source_handle, const DatasetSplit& target,
                              const IterConfig& config) {
    config.validate();
    const Provenance prov = make_provenance(config);
    if (config.out_dir) std::filesystem::create_directories(*config.out_dir);

    IterResult result;
    BlackBoxHandle handle = source_handle;
    std::optional<double> prev_eps;
    std::optional<ClassifierModel> warm_model;

    for (std::size_t m = 1; m <= config.steps; ++m) {
        const NoisyLabeling labeling = noisy_labeling(handle, target);
        std::optional<NoisyLabeling> val_labeling;
        if (config.lnl.validation)
            val_labeling = noisy_labeling(handle, *config.lnl.validation);

        const std::uint64_t step_seed = derive_seed(config.master_seed, m);
        LnlResult lnl = run_lnl_labeled(labeling, target, config.lnl, step_seed, val_labeling,
                                        config.warm_start ? warm_model : std::nullopt);

        StepRecord record;
        record.m = m;
        record.eps_estimated = lnl.metrics.eps_estimated;
        if (target.has_labels()) {
            record.label_acc = accuracy(labeling.labels, target.evaluation_labels());
            record.model_acc = evaluate(lnl.model, target).overall;
        }

        if (config.out_dir) {
            const std::string step_dir = "step_" + std::to_string(m);
            std::filesystem::create_directories(*config.out_dir / step_dir);
            record.checkpoint = step_dir + "/model.ckpt";
            save_checkpoint(lnl.model, *config.out_dir / record.checkpoint);
            write_labeling_csv(*config.out_dir / step_dir / "labeling.csv", prov, labeling);
            write_lnl_metrics_csv(*config.out_dir / step_dir / "metrics.csv", prov, lnl.metrics,
                                  labeling.k);
        }
        result.trace.push_back(std::move(record));

        const bool plateau =
            prev_eps && std::abs(lnl.metrics.eps_estimated - *prev_eps) < config.eps_tolerance;
        prev_eps = lnl.metrics.eps_estimated;
        if (config.warm_start) warm_model = lnl.model;

        result.model = std::move(lnl.model);
        if (m < config.steps) handle = wrap_as_blackbox(result.model);
        if (plateau) break;
    }

    if (config.out_dir) write_trace_csv(*config.out_dir / "trace.csv", prov, result.trace);
    return result;
}

} // namespace ilnl
