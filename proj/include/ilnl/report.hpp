#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ilnl/csv_io.hpp"
#include "ilnl/errors.hpp"
#include "ilnl/evaluate.hpp"
#include "ilnl/lnl.hpp"

namespace ilnl {

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t hash = 1469598103934665603ULL;
    for (unsigned char c : s) {
        hash ^= c;
        hash *= 1099511628211ULL;
    }
    return hash;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

/// Provenance stamp written as the leading comment of every report CSV.
struct Provenance {
    std::uint64_t seed = 0;
    std::string config_hash;

    std::string line() const { return "seed=" + std::to_string(seed) + ", config-hash=" + config_hash; }
};

// Canonical key=value serialization used for config hashing.
inline std::string serialize_config(const LnlConfig& c) {
    std::ostringstream out;
    out << "batch_size=" << c.batch_size << "\n"
        << "buffer_len=" << c.buffer_len << "\n"
        << "eta0=" << format_double(c.eta0) << "\n"
        << "gamma=" << format_double(c.gamma) << "\n"
        << "hidden_dims=";
    for (std::size_t i = 0; i < c.hidden_dims.size(); ++i)
        out << (i ? "," : "") << c.hidden_dims[i];
    out << "\n"
        << "kappa=" << format_double(c.kappa) << "\n"
        << "max_noise_rate=" << format_double(c.max_noise_rate) << "\n"
        << "momentum=" << format_double(c.momentum) << "\n"
        << "nk_fraction=" << format_double(c.nk_fraction) << "\n"
        << "no_rescale=" << (c.no_rescale ? 1 : 0) << "\n"
        << "noise_rate_override="
        << (c.noise_rate_override ? format_double(*c.noise_rate_override) : std::string("none"))
        << "\n"
        << "pooled_buffers=" << (c.pooled_buffers ? 1 : 0) << "\n"
        << "total_iters=" << c.total_iters << "\n"
        << "validation=" << (c.validation ? c.validation->size() : 0) << "\n";
    return out.str();
}

inline void write_csv_table(const std::filesystem::path& path, const Provenance& prov,
                            const std::vector<std::string>& header,
                            const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write " + path.string());
    out << "# " << prov.line() << "\n";
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << "\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << "\n";
    }
    if (!out) throw data_error("write failed for " + path.string());
}

inline void write_labeling_csv(const std::filesystem::path& path, const Provenance& prov,
                               const NoisyLabeling& labeling) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(labeling.size());
    for (std::size_t i = 0; i < labeling.size(); ++i)
        rows.push_back({std::to_string(i), std::to_string(labeling.labels[i]),
                        format_double(labeling.max_conf[i])});
    write_csv_table(path, prov, {"index", "label", "max_conf"}, rows);
}

inline void write_lnl_metrics_csv(const std::filesystem::path& path, const Provenance& prov,
                                  const LnlRunMetrics& metrics, std::size_t k) {
    std::vector<std::string> header = {"iteration", "R", "mean_accepted_loss"};
    for (std::size_t c = 0; c < k; ++c) header.push_back("accepted_k" + std::to_string(c));
    std::vector<std::vector<std::string>> rows;
    rows.reserve(metrics.iterations.size());
    for (const auto& it : metrics.iterations) {
        std::vector<std::string> row = {std::to_string(it.iteration), format_double(it.keep_ratio),
                                        std::isnan(it.mean_accepted_loss)
                                            ? std::string("nan")
                                            : format_double(it.mean_accepted_loss)};
        for (auto c : it.accepted_per_class) row.push_back(std::to_string(c));
        rows.push_back(std::move(row));
    }
    write_csv_table(path, prov, header, rows);
}

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t end = line.find(',', start);
        out.push_back(line.substr(start, end - start));
        if (end == std::string::npos) break;
        start = end + 1;
    }
    return out;
}

// Opens a report CSV and positions the stream after comments + header.
inline std::ifstream open_report_csv(const std::filesystem::path& path,
                                     const std::string& expected_header) {
    std::ifstream in(path);
    if (!in) throw data_error("missing artifact: " + path.string());
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.front() == '#') continue;
        if (line != expected_header)
            throw data_error(path.string() + ": unexpected header '" + line + "'");
        return in;
    }
    throw data_error(path.string() + ": no header row");
}

} // namespace detail

inline std::vector<int> parse_labeling_csv(const std::filesystem::path& path) {
    std::ifstream in = detail::open_report_csv(path, "index,label,max_conf");
    std::vector<int> labels;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = detail::split_fields(line);
        if (fields.size() != 3) throw data_error(path.string() + ": malformed row '" + line + "'");
        labels.push_back(std::stoi(fields[1]));
    }
    return labels;
}

/// Transition matrix CSV: one row per supported true class; zero-support
/// classes are named in a comment rather than emitted as rows.
inline void write_transition_csv(const std::filesystem::path& path, const Provenance& prov,
                                 const EvalReport& report) {
    const std::size_t k = report.support.size();
    std::ofstream out(path);
    if (!out) throw data_error("cannot write " + path.string());
    out << "# " << prov.line() << "\n";
    std::string absent;
    for (std::size_t r = 0; r < k; ++r)
        if (report.class_absent(r)) absent += (absent.empty() ? "" : " ") + std::to_string(r);
    if (!absent.empty()) out << "# absent true classes: " << absent << "\n";
    out << "true_class";
    for (std::size_t c = 0; c < k; ++c) out << ",p_" << c;
    out << ",support\n";
    for (std::size_t r = 0; r < k; ++r) {
        if (report.class_absent(r)) continue;
        out << r;
        for (std::size_t c = 0; c < k; ++c) out << ',' << format_double(report.transition(r, c));
        out << ',' << report.support[r] << "\n";
    }
    if (!out) throw data_error("write failed for " + path.string());
}

} // namespace ilnl
