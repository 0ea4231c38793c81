#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ilnl/dataset.hpp"
#include "ilnl/errors.hpp"

namespace ilnl {

// Data CSV format: ',' separator, '.' decimal, no header. When has_labels is
// set the last column is an integer class index. Lines starting with '#' are
// skipped (provenance comments); line numbers in errors are physical.
inline DatasetSplit load_csv(const std::filesystem::path& path, bool has_labels,
                             std::size_t expected_k = 0, bool eval_only_labels = false) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open " + path.string());

    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::size_t arity = 0;
    std::string line;
    std::size_t lineno = 0;
    int max_label = -1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;

        std::vector<double> cells;
        std::size_t start = 0;
        while (start <= line.size()) {
            std::size_t end = line.find(',', start);
            if (end == std::string::npos) end = line.size();
            const char* first = line.data() + start;
            const char* last = line.data() + end;
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(first, last, v);
            if (ec != std::errc{} || ptr != last)
                throw data_error(path.string() + ":" + std::to_string(lineno) +
                                 ": non-numeric cell '" + std::string(first, last) + "'");
            cells.push_back(v);
            start = end + 1;
            if (end == line.size()) break;
        }

        if (arity == 0) arity = cells.size();
        if (cells.size() != arity)
            throw data_error(path.string() + ":" + std::to_string(lineno) + ": ragged row (" +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(arity) + ")");
        if (has_labels) {
            if (arity < 2)
                throw data_error(path.string() + ":" + std::to_string(lineno) +
                                 ": labeled rows need at least one feature and a label");
            const double raw = cells.back();
            const int lab = static_cast<int>(raw);
            if (static_cast<double>(lab) != raw || lab < 0)
                throw data_error(path.string() + ":" + std::to_string(lineno) +
                                 ": label must be a non-negative integer");
            if (expected_k != 0 && static_cast<std::size_t>(lab) >= expected_k)
                throw data_error(path.string() + ":" + std::to_string(lineno) + ": label " +
                                 std::to_string(lab) + " out of range for k=" +
                                 std::to_string(expected_k));
            max_label = std::max(max_label, lab);
            labels.push_back(lab);
            cells.pop_back();
        }
        rows.push_back(std::move(cells));
    }
    if (rows.empty()) throw data_error(path.string() + ": no data rows");

    Matrix features = Matrix::from_rows(rows);
    if (!has_labels) return DatasetSplit::unlabeled(std::move(features), expected_k);
    const std::size_t k = expected_k != 0 ? expected_k
                                          : static_cast<std::size_t>(std::max(max_label + 1, 2));
    return DatasetSplit::labeled(std::move(features), std::move(labels), k, eval_only_labels);
}

// Full-precision double formatting: shortest string that round-trips.
inline std::string format_double(double v) {
    char buf[64];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        double back = 0.0;
        std::sscanf(buf, "%lf", &back);
        if (back == v) break;
    }
    return buf;
}

inline void save_csv(const std::filesystem::path& path, const DatasetSplit& split,
                     bool with_labels, const std::string& provenance = "") {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write " + path.string());
    if (!provenance.empty()) out << "# " << provenance << "\n";
    const Matrix& x = split.features();
    const std::vector<int>* labels = nullptr;
    if (with_labels) labels = &split.evaluation_labels();
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) {
            if (j) out << ',';
            out << format_double(x(i, j));
        }
        if (labels) out << ',' << (*labels)[i];
        out << '\n';
    }
    if (!out) throw data_error("write failed for " + path.string());
}

} // namespace ilnl
