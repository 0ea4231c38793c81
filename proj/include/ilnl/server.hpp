#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <thread>
#include <utility>

#include <httplib.h>
#include <json.hpp>

#include "ilnl/csv_io.hpp"
#include "ilnl/errors.hpp"
#include "ilnl/model.hpp"

namespace ilnl {

/// HTTP prediction service over a read-only model. Routes:
///   POST /predict  {"inputs": [[f64,...],...]} -> {"probs": [[f64,...],...]}
///   GET  /info     -> {"input_dim": d, "num_classes": K}
/// No route exposes parameters. Requests are handled concurrently.
class PredictionServer {
public:
    explicit PredictionServer(ClassifierModel model)
        : model_(std::make_shared<const ClassifierModel>(std::move(model))) {
        install_routes();
    }

    // Blocks until stop(). Throws transport_error if the address cannot be bound.
    void listen(const std::string& host, int port) {
        if (!server_.listen(host, port))
            throw transport_error("cannot bind " + host + ":" + std::to_string(port));
    }

    // Binds an ephemeral port and serves from a background thread; returns the
    // port. Used by tests and by callers embedding the server.
    int start_async(const std::string& host) {
        const int port = server_.bind_to_any_port(host);
        if (port < 0) throw transport_error("cannot bind " + host);
        thread_ = std::thread([this, host] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port;
    }

    void stop() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    ~PredictionServer() { stop(); }

private:
    void install_routes() {
        auto model = model_;
        server_.Get("/info", [model](const httplib::Request&, httplib::Response& res) {
            nlohmann::json info;
            info["input_dim"] = model->input_dim();
            info["num_classes"] = model->num_classes();
            res.set_content(info.dump(), "application/json");
        });
        server_.Post("/predict", [model](const httplib::Request& req, httplib::Response& res) {
            nlohmann::json body;
            try {
                body = nlohmann::json::parse(req.body);
            } catch (const nlohmann::json::exception& e) {
                fail(res, 400, std::string("invalid JSON: ") + e.what());
                return;
            }
            if (!body.contains("inputs") || !body["inputs"].is_array()) {
                fail(res, 400, "request must carry an 'inputs' array");
                return;
            }
            const auto& inputs = body["inputs"];
            const std::size_t d = model->input_dim();
            Matrix batch(inputs.size(), d);
            for (std::size_t i = 0; i < inputs.size(); ++i) {
                const auto& row = inputs[i];
                if (!row.is_array() || row.size() != d) {
                    fail(res, 400,
                         "expected " + std::to_string(d) + " features per row, got " +
                             std::to_string(row.is_array() ? row.size() : 0) + " at row " +
                             std::to_string(i));
                    return;
                }
                for (std::size_t j = 0; j < d; ++j) {
                    if (!row[j].is_number()) {
                        fail(res, 400, "non-numeric feature at row " + std::to_string(i));
                        return;
                    }
                    batch(i, j) = row[j].get<double>();
                }
            }
            nlohmann::json out;
            out["probs"] = nlohmann::json::array();
            if (batch.rows() > 0) {
                const Matrix probs = model->forward(batch);
                for (std::size_t i = 0; i < probs.rows(); ++i) {
                    nlohmann::json row = nlohmann::json::array();
                    for (std::size_t j = 0; j < probs.cols(); ++j) row.push_back(probs(i, j));
                    out["probs"].push_back(std::move(row));
                }
            }
            res.set_content(out.dump(), "application/json");
        });
    }

    static void fail(httplib::Response& res, int status, const std::string& message) {
        res.status = status;
        nlohmann::json err;
        err["error"] = message;
        res.set_content(err.dump(), "application/json");
    }

    std::shared_ptr<const ClassifierModel> model_;
    httplib::Server server_;
    std::thread thread_;
};

} // namespace ilnl
