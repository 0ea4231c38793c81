#pragma once

#include <chrono>
#include <cstdlib>
#include <memory>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "ilnl/errors.hpp"
#include "ilnl/matrix.hpp"
#include "ilnl/model.hpp"

namespace ilnl {

struct RemoteOptions {
    int timeout_ms = 10000;       // overridden by ILNL_TIMEOUT_MS when set
    int retries = 3;              // attempts per request
    int backoff_start_ms = 100;   // doubles per retry
    std::size_t max_rows_per_request = 1024;
};

inline int remote_timeout_ms(const RemoteOptions& opts) {
    if (const char* env = std::getenv("ILNL_TIMEOUT_MS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<int>(v);
    }
    return opts.timeout_ms;
}

/// Prediction-only view of a classifier. The wrapped model (or its serving
/// endpoint) is private state; the public surface offers batch prediction and
/// the interface metadata (input arity, category count) and nothing else.
class BlackBoxHandle {
public:
    static BlackBoxHandle local(ClassifierModel model) {
        BlackBoxHandle h;
        h.model_ = std::make_shared<const ClassifierModel>(std::move(model));
        h.input_dim_ = h.model_->input_dim();
        h.k_ = h.model_->num_classes();
        return h;
    }

    /// Connects to a serving endpoint ("host:port" or "http://host:port") and
    /// reads the interface metadata from GET /info.
    static BlackBoxHandle remote(const std::string& endpoint, RemoteOptions opts = {}) {
        BlackBoxHandle h;
        h.opts_ = opts;
        std::string url = endpoint;
        if (url.rfind("http://", 0) != 0 && url.rfind("https://", 0) != 0)
            url = "http://" + url;
        h.endpoint_ = url;
        const nlohmann::json info = h.request_json("GET", "/info", "");
        if (!info.contains("input_dim") || !info.contains("num_classes"))
            throw protocol_error("malformed /info response from " + url);
        h.input_dim_ = info["input_dim"].get<std::size_t>();
        h.k_ = info["num_classes"].get<std::size_t>();
        if (h.k_ < 2) throw protocol_error("served model reports fewer than 2 classes");
        return h;
    }

    std::size_t k() const { return k_; }
    std::size_t input_dim() const { return input_dim_; }
    bool is_remote() const { return model_ == nullptr; }

    /// Row i of the result is the served model's probability vector for row i
    /// of the batch. Remote responses are validated as probability vectors.
    Matrix predict_batch(const Matrix& batch) const {
        if (batch.rows() == 0) return Matrix(0, k_);
        if (batch.cols() != input_dim_)
            throw data_error("predict_batch: batch has " + std::to_string(batch.cols()) +
                             " columns, served model expects " + std::to_string(input_dim_));
        if (model_) return model_->forward(batch);

        Matrix out(batch.rows(), k_);
        std::size_t done = 0;
        while (done < batch.rows()) {
            const std::size_t take = std::min(opts_.max_rows_per_request, batch.rows() - done);
            predict_chunk(batch, done, take, out);
            done += take;
        }
        return out;
    }

private:
    BlackBoxHandle() = default;

    void predict_chunk(const Matrix& batch, std::size_t offset, std::size_t count,
                       Matrix& out) const {
        nlohmann::json req;
        req["inputs"] = nlohmann::json::array();
        for (std::size_t i = 0; i < count; ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t j = 0; j < batch.cols(); ++j) row.push_back(batch(offset + i, j));
            req["inputs"].push_back(std::move(row));
        }
        const nlohmann::json resp = request_json("POST", "/predict", req.dump());
        if (!resp.contains("probs") || !resp["probs"].is_array() ||
            resp["probs"].size() != count)
            throw protocol_error("response does not carry " + std::to_string(count) +
                                 " probability rows");
        for (std::size_t i = 0; i < count; ++i) {
            const auto& row = resp["probs"][i];
            if (!row.is_array() || row.size() != k_)
                throw protocol_error("probability row " + std::to_string(i) + " has wrong arity");
            double sum = 0.0;
            for (std::size_t j = 0; j < k_; ++j) {
                const double v = row[j].get<double>();
                if (!(v >= -1e-9) || v > 1.0 + 1e-9)
                    throw protocol_error("probability entry out of [0,1]");
                out(offset + i, j) = v;
                sum += v;
            }
            if (std::abs(sum - 1.0) > 1e-6)
                throw protocol_error("probability row sums to " + std::to_string(sum));
        }
    }

    nlohmann::json request_json(const std::string& method, const std::string& route,
                                const std::string& body) const {
        const int timeout = remote_timeout_ms(opts_);
        std::string last_error;
        int backoff = opts_.backoff_start_ms;
        for (int attempt = 0; attempt < opts_.retries; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
                backoff *= 2;
            }
            httplib::Client client(endpoint_);
            client.set_connection_timeout(0, timeout * 1000);
            client.set_read_timeout(timeout / 1000, (timeout % 1000) * 1000);
            httplib::Result res = method == "GET"
                                      ? client.Get(route)
                                      : client.Post(route, body, "application/json");
            if (!res) {
                last_error = httplib::to_string(res.error());
                continue;
            }
            if (res->status != 200) {
                std::string detail = res->body;
                try {
                    const auto err = nlohmann::json::parse(res->body);
                    if (err.contains("error")) detail = err["error"].get<std::string>();
                } catch (const nlohmann::json::exception&) {
                }
                throw protocol_error("server returned status " + std::to_string(res->status) +
                                     " for " + route + ": " + detail);
            }
            try {
                return nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::exception& e) {
                throw protocol_error(std::string("response is not valid JSON: ") + e.what());
            }
        }
        throw transport_error("endpoint " + endpoint_ + " unreachable after " +
                              std::to_string(opts_.retries) + " attempts: " + last_error);
    }

    std::shared_ptr<const ClassifierModel> model_;  // local backend
    std::string endpoint_;                          // remote backend
    RemoteOptions opts_;
    std::size_t input_dim_ = 0;
    std::size_t k_ = 0;
};

/// Seal a trained model behind the prediction-only interface.
inline BlackBoxHandle wrap_as_blackbox(ClassifierModel model) {
    return BlackBoxHandle::local(std::move(model));
}

} // namespace ilnl
