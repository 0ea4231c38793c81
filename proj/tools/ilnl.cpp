// Command-line driver: train-source, serve, adapt, eval, report, gen-data.
// Exit codes: 0 success, 2 usage error, 3 data/config error, 4 transport error.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <algorithm>
#include <fstream>

#include <CLI11.hpp>

#include "ilnl/blackbox.hpp"
#include "ilnl/checkpoint.hpp"
#include "ilnl/csv_io.hpp"
#include "ilnl/evaluate.hpp"
#include "ilnl/idx_io.hpp"
#include "ilnl/iterlnl.hpp"
#include "ilnl/lnl.hpp"
#include "ilnl/model.hpp"
#include "ilnl/report.hpp"
#include "ilnl/server.hpp"
#include "ilnl/synthetic.hpp"

namespace fs = std::filesystem;
using namespace ilnl;

namespace {

std::vector<std::size_t> parse_size_list(const std::string& s) {
    std::vector<std::size_t> out;
    if (s.empty() || s == "none") return out;
    std::size_t start = 0;
    while (start <= s.size()) {
        std::size_t end = s.find(',', start);
        if (end == std::string::npos) end = s.size();
        out.push_back(std::stoul(s.substr(start, end - start)));
        start = end + 1;
        if (end == s.size()) break;
    }
    return out;
}

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    if (s.empty()) return out;
    std::size_t start = 0;
    while (start <= s.size()) {
        std::size_t end = s.find(',', start);
        if (end == std::string::npos) end = s.size();
        out.push_back(std::stod(s.substr(start, end - start)));
        start = end + 1;
        if (end == s.size()) break;
    }
    return out;
}

struct GenDataArgs {
    std::string out_dir;
    std::size_t k = 6;
    std::size_t d = 10;
    std::size_t n_source = 6000;
    std::size_t n_target = 6000;
    std::string translation = "1.0";
    double rotation = 0.0;
    std::size_t rotation_planes = 1;
    double spread = 0.5;
    double cluster_radius = 2.0;
    std::uint64_t seed = 0;
};

int cmd_gen_data(const GenDataArgs& args) {
    ShiftSpec spec;
    spec.k = args.k;
    spec.d = args.d;
    spec.n_source = args.n_source;
    spec.n_target = args.n_target;
    spec.translation = parse_double_list(args.translation);
    spec.rotation_radians = args.rotation;
    spec.rotation_planes = args.rotation_planes;
    spec.spread = args.spread;
    spec.cluster_radius = args.cluster_radius;
    spec.seed = args.seed;
    const auto [source, target] = make_synthetic_pair(spec);

    fs::create_directories(args.out_dir);
    const std::string prov =
        "seed=" + std::to_string(args.seed) + ", config-hash=" +
        hex64(fnv1a64("gen-data k=" + std::to_string(args.k) + " d=" + std::to_string(args.d) +
                      " ns=" + std::to_string(args.n_source) + " nt=" +
                      std::to_string(args.n_target) + " t=" + args.translation + " r=" +
                      format_double(args.rotation) + " s=" + format_double(args.spread) +
                      " cr=" + format_double(args.cluster_radius)));
    save_csv(fs::path(args.out_dir) / "source.csv", source, /*with_labels=*/true, prov);
    save_csv(fs::path(args.out_dir) / "target.csv", target, /*with_labels=*/false, prov);
    save_csv(fs::path(args.out_dir) / "target_labeled.csv", target, /*with_labels=*/true, prov);
    std::cout << "wrote " << args.out_dir << "/{source,target,target_labeled}.csv ("
              << source.size() << " source rows, " << target.size() << " target rows)\n";
    return 0;
}

struct DataInputArgs {
    std::string csv;
    std::string images;
    std::string labels;
    std::size_t limit = 0;
};

DatasetSplit load_labeled_input(const DataInputArgs& in, std::size_t expected_k,
                                bool eval_only) {
    DatasetSplit split;
    if (!in.csv.empty())
        split = load_csv(in.csv, /*has_labels=*/true, expected_k, eval_only);
    else if (!in.images.empty() && !in.labels.empty())
        split = load_idx(in.images, in.labels, expected_k == 0 ? 10 : expected_k, eval_only);
    else
        throw config_error("provide either --data CSV or --images/--labels IDX files");
    if (in.limit > 0) split = split.head(in.limit);
    return split;
}

struct TrainSourceArgs {
    DataInputArgs data;
    std::string out;
    std::uint64_t seed = 0;
    std::size_t iters = 2000;
    std::size_t batch = 64;
    double lr = 0.01;
    double momentum = 0.9;
    std::string hidden = "256,128";
};

int cmd_train_source(const TrainSourceArgs& args) {
    const DatasetSplit source = load_labeled_input(args.data, 0, /*eval_only=*/false);
    TrainConfig config;
    config.hidden_dims = parse_size_list(args.hidden);
    config.total_iters = args.iters;
    config.batch_size = args.batch;
    config.eta0 = args.lr;
    config.momentum = args.momentum;
    config.seed = args.seed;

    const ClassifierModel model = train_source(source, config);
    save_checkpoint(model, args.out);
    const double acc = accuracy(model.predict(source.features()), source.training_labels());
    std::cout << "trained on " << source.size() << " samples (d=" << source.dim()
              << ", k=" << source.k() << ")\n"
              << "source accuracy: " << acc << "\n"
              << "checkpoint: " << args.out << "\n";
    return 0;
}

struct ServeArgs {
    std::string checkpoint;
    std::string bind = "127.0.0.1:8080";
};

int cmd_serve(const ServeArgs& args) {
    const std::size_t colon = args.bind.rfind(':');
    if (colon == std::string::npos)
        throw config_error("--bind expects addr:port, got '" + args.bind + "'");
    const std::string host = args.bind.substr(0, colon);
    const int port = std::stoi(args.bind.substr(colon + 1));

    PredictionServer server(load_checkpoint(args.checkpoint));
    std::cout << "serving " << args.checkpoint << " on http://" << host << ":" << port
              << " (POST /predict, GET /info)\n"
              << std::flush;
    server.listen(host, port);
    return 0;
}

struct AdaptArgs {
    std::string source_checkpoint;
    std::string endpoint;
    std::string target_csv;
    std::string target_images;
    std::size_t limit = 0;
    std::string eval_csv;
    std::string eval_images;
    std::string eval_labels;
    std::string out_dir = "runs/adapt";
    std::size_t steps = 5;
    std::size_t iters = 2000;
    std::uint64_t seed = 0;
    double eps_tolerance = 0.01;
    bool warm_start = false;
    bool no_iter = false;
    bool no_category_sampling = false;
    bool no_rescale = false;
    std::string val_set;
    double noise_rate = -1.0;
    double gamma = 0.9;
    double kappa = 2.0;
    std::size_t buffer_len = 100;
    double nk_frac = 0.5;
    std::size_t batch = 64;
    double lr = 0.01;
    double momentum = 0.9;
    std::string hidden = "256,128";
};

int cmd_adapt(const AdaptArgs& args) {
    if (args.source_checkpoint.empty() == args.endpoint.empty())
        throw config_error("provide exactly one of --source-checkpoint or --endpoint");
    const BlackBoxHandle handle =
        args.endpoint.empty() ? wrap_as_blackbox(load_checkpoint(args.source_checkpoint))
                              : BlackBoxHandle::remote(args.endpoint);

    DatasetSplit target;
    if (!args.target_csv.empty())
        target = load_csv(args.target_csv, /*has_labels=*/false, handle.k());
    else if (!args.target_images.empty())
        target = load_idx_images(args.target_images, handle.k());
    else
        throw config_error("provide --target CSV or --target-images IDX");
    if (args.limit > 0) target = target.head(args.limit);

    // optional hidden ground truth: features must match the target bit-exactly
    const bool has_eval = !args.eval_csv.empty() || !args.eval_images.empty();
    if (has_eval) {
        DataInputArgs eval_in{args.eval_csv, args.eval_images, args.eval_labels, args.limit};
        DatasetSplit eval = load_labeled_input(eval_in, handle.k(), /*eval_only=*/true);
        if (!(eval.features() == target.features()))
            throw data_error("--eval features do not match the target features");
        target = std::move(eval);
    }

    IterConfig config;
    config.steps = args.no_iter ? 1 : args.steps;
    config.eps_tolerance = args.eps_tolerance;
    config.master_seed = args.seed;
    config.warm_start = args.warm_start;
    config.out_dir = fs::path(args.out_dir);
    config.lnl.gamma = args.gamma;
    config.lnl.kappa = args.kappa;
    config.lnl.buffer_len = args.buffer_len;
    config.lnl.nk_fraction = args.nk_frac;
    config.lnl.total_iters = args.iters;
    config.lnl.batch_size = args.batch;
    config.lnl.hidden_dims = parse_size_list(args.hidden);
    config.lnl.eta0 = args.lr;
    config.lnl.momentum = args.momentum;
    config.lnl.no_rescale = args.no_rescale;
    config.lnl.pooled_buffers = args.no_category_sampling;
    if (args.noise_rate >= 0.0) config.lnl.noise_rate_override = args.noise_rate;
    if (!args.val_set.empty())
        config.lnl.validation = load_csv(args.val_set, /*has_labels=*/true, handle.k());

    const IterResult result = run_iterlnl(handle, target, config);
    for (const auto& r : result.trace) {
        std::cout << "step " << r.m << ": eps_est=" << format_double(r.eps_estimated);
        if (r.label_acc) std::cout << " label_acc=" << format_double(*r.label_acc);
        if (r.model_acc) std::cout << " model_acc=" << format_double(*r.model_acc);
        std::cout << "\n";
    }
    std::cout << "trace: " << args.out_dir << "/trace.csv\n"
              << "final checkpoint: " << args.out_dir << "/" << result.trace.back().checkpoint
              << "\n";
    return 0;
}

struct EvalArgs {
    std::string checkpoint;
    std::string endpoint;
    DataInputArgs data;
    std::string out;
    std::uint64_t seed = 0;
};

void print_eval(const EvalReport& report) {
    std::cout << "overall accuracy: " << format_double(report.overall) << "\n";
    for (std::size_t c = 0; c < report.per_class.size(); ++c) {
        std::cout << "class " << c << ": ";
        if (report.class_absent(c))
            std::cout << "absent\n";
        else
            std::cout << format_double(report.per_class[c]) << " (" << report.support[c]
                      << " samples)\n";
    }
}

int cmd_eval(const EvalArgs& args) {
    if (args.checkpoint.empty() == args.endpoint.empty())
        throw config_error("provide exactly one of --checkpoint or --endpoint");
    const DatasetSplit split = load_labeled_input(args.data, 0, /*eval_only=*/true);
    const EvalReport report =
        args.endpoint.empty()
            ? evaluate(load_checkpoint(args.checkpoint), split)
            : evaluate(BlackBoxHandle::remote(args.endpoint), split);
    print_eval(report);
    if (!args.out.empty()) {
        const Provenance prov{args.seed, hex64(fnv1a64("eval " + args.checkpoint + args.endpoint))};
        write_transition_csv(args.out, prov, report);
        std::cout << "transition matrix: " << args.out << "\n";
    }
    return 0;
}

struct ReportArgs {
    std::string run_dir;
    std::string eval_csv;
};

int cmd_report(const ReportArgs& args) {
    const fs::path run_dir(args.run_dir);
    const auto trace = parse_trace_csv(run_dir / "trace.csv");

    std::optional<DatasetSplit> eval;
    if (!args.eval_csv.empty())
        eval = load_csv(args.eval_csv, /*has_labels=*/true, 0, /*eval_only=*/true);

    const Provenance prov{0, hex64(fnv1a64("report " + args.run_dir))};
    std::vector<std::vector<std::string>> eps_rows;
    std::vector<std::vector<std::string>> acc_rows;
    for (const auto& r : trace) {
        eps_rows.push_back({std::to_string(r.m), format_double(r.eps_estimated)});
        if (!eval) continue;

        const fs::path ckpt = run_dir / r.checkpoint;
        if (!fs::exists(ckpt)) throw data_error("missing artifact: " + ckpt.string());
        const ClassifierModel model = load_checkpoint(ckpt);
        const EvalReport step_eval = evaluate(model, *eval);
        write_transition_csv(run_dir / ("transition_step_" + std::to_string(r.m) + ".csv"),
                             prov, step_eval);

        const fs::path labeling_path = run_dir / ("step_" + std::to_string(r.m)) / "labeling.csv";
        const std::vector<int> labels = parse_labeling_csv(labeling_path);
        const double label_acc = accuracy(labels, eval->evaluation_labels());
        acc_rows.push_back({std::to_string(r.m), format_double(label_acc),
                            format_double(step_eval.overall)});
    }
    write_csv_table(run_dir / "eps_vs_step.csv", prov, {"m", "epsilon_est"}, eps_rows);
    std::cout << "wrote " << (run_dir / "eps_vs_step.csv").string() << "\n";
    if (eval) {
        write_csv_table(run_dir / "acc_vs_step.csv", prov, {"m", "label_acc", "model_acc"},
                        acc_rows);
        std::cout << "wrote " << (run_dir / "acc_vs_step.csv").string() << " and "
                  << trace.size() << " transition matrices\n";
    } else {
        std::cout << "no eval split given: accuracy files skipped\n";
    }
    return 0;
}


// Flat key=value config file with '#' comments; keys are long option names
// (flags use true/false). Values are appended as arguments unless the flag is
// already given, so command-line flags override the file.
std::vector<std::string> expand_config_args(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string config_path;
    for (std::size_t i = 0; i + 1 < args.size(); ++i)
        if (args[i] == "--config") config_path = args[i + 1];
    if (config_path.empty()) return args;

    std::ifstream in(config_path);
    if (!in) throw config_error("cannot open config file " + config_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos || line[start] == '#') continue;
        const std::size_t eq = line.find('=', start);
        if (eq == std::string::npos)
            throw config_error(config_path + ":" + std::to_string(lineno) +
                               ": expected key=value");
        const std::string key = line.substr(start, eq - start);
        const std::string value = line.substr(eq + 1);
        const std::string flag = "--" + key;
        bool already = false;
        for (const auto& a : args) already = already || a == flag;
        if (already) continue;
        if (value == "true") {
            args.push_back(flag);
        } else if (value == "false") {
            continue;
        } else {
            args.push_back(flag);
            args.push_back(value);
        }
    }
    return args;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"IterLNL: black-box unsupervised domain adaptation via iterative "
                 "learning with noisy labels"};
    app.require_subcommand(1);
    std::string config_file;

    GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic source/target pair");
    gen_cmd->add_option("--config", config_file,
                        "key=value config file; flags override it");
    gen_cmd->add_option("--out-dir", gen.out_dir, "output directory")->required();
    gen_cmd->add_option("--k", gen.k, "category count");
    gen_cmd->add_option("--d", gen.d, "feature dimension");
    gen_cmd->add_option("--n-source", gen.n_source, "source sample count");
    gen_cmd->add_option("--n-target", gen.n_target, "target sample count");
    gen_cmd->add_option("--translation", gen.translation, "comma-separated shift vector");
    gen_cmd->add_option("--rotation", gen.rotation, "rotation of cluster means (radians)");
    gen_cmd->add_option("--rotation-planes", gen.rotation_planes,
                        "number of 2-d planes the rotation acts on");
    gen_cmd->add_option("--spread", gen.spread, "per-cluster stddev");
    gen_cmd->add_option("--cluster-radius", gen.cluster_radius, "norm of cluster means");
    gen_cmd->add_option("--seed", gen.seed, "rng seed");

    TrainSourceArgs train;
    auto* train_cmd = app.add_subcommand("train-source", "train a source model");
    train_cmd->add_option("--config", config_file,
                        "key=value config file; flags override it");
    train_cmd->add_option("--data", train.data.csv, "labeled CSV (label column last)");
    train_cmd->add_option("--images", train.data.images, "IDX image file");
    train_cmd->add_option("--labels", train.data.labels, "IDX label file");
    train_cmd->add_option("--limit", train.data.limit, "use only the first N samples");
    train_cmd->add_option("--out", train.out, "checkpoint path")->required();
    train_cmd->add_option("--seed", train.seed, "rng seed");
    train_cmd->add_option("--iters", train.iters, "training iterations");
    train_cmd->add_option("--batch", train.batch, "batch size");
    train_cmd->add_option("--lr", train.lr, "base learning rate");
    train_cmd->add_option("--momentum", train.momentum, "SGD momentum");
    train_cmd->add_option("--hidden", train.hidden, "hidden layer dims, e.g. 256,128");

    ServeArgs serve;
    auto* serve_cmd = app.add_subcommand("serve", "serve a checkpoint as a prediction API");
    serve_cmd->add_option("--config", config_file,
                        "key=value config file; flags override it");
    serve_cmd->add_option("--checkpoint", serve.checkpoint, "checkpoint path")->required();
    serve_cmd->add_option("--bind", serve.bind, "addr:port to listen on");

    AdaptArgs adapt;
    auto* adapt_cmd = app.add_subcommand("adapt", "adapt to a target domain via IterLNL");
    adapt_cmd->add_option("--config", config_file,
                        "key=value config file; flags override it");
    adapt_cmd->add_option("--source-checkpoint", adapt.source_checkpoint,
                          "local checkpoint to seal as the source black box");
    adapt_cmd->add_option("--endpoint", adapt.endpoint, "remote prediction API");
    adapt_cmd->add_option("--target", adapt.target_csv, "unlabeled target CSV");
    adapt_cmd->add_option("--target-images", adapt.target_images, "unlabeled target IDX images");
    adapt_cmd->add_option("--limit", adapt.limit, "use only the first N target samples");
    adapt_cmd->add_option("--eval", adapt.eval_csv,
                          "labeled copy of the target for evaluation only");
    adapt_cmd->add_option("--eval-images", adapt.eval_images, "IDX images for evaluation");
    adapt_cmd->add_option("--eval-labels", adapt.eval_labels, "IDX labels for evaluation");
    adapt_cmd->add_option("--out-dir", adapt.out_dir, "run directory");
    adapt_cmd->add_option("--steps", adapt.steps, "iterative steps M");
    adapt_cmd->add_option("--iters", adapt.iters, "LNL iterations N per step");
    adapt_cmd->add_option("--seed", adapt.seed, "master seed");
    adapt_cmd->add_option("--eps-tolerance", adapt.eps_tolerance,
                          "early stop once |eps_m - eps_{m-1}| falls below");
    adapt_cmd->add_flag("--warm-start", adapt.warm_start,
                        "start each step from the previous step's model");
    adapt_cmd->add_flag("--no-iter", adapt.no_iter, "single step (M=1)");
    adapt_cmd->add_flag("--no-category-sampling", adapt.no_category_sampling,
                        "one pooled loss buffer instead of per-class buffers");
    adapt_cmd->add_flag("--no-rescale", adapt.no_rescale, "estimate eps as 1 - rho'");
    adapt_cmd->add_option("--val-set", adapt.val_set,
                          "labeled validation CSV; eps = 1 - accuracy on it");
    adapt_cmd->add_option("--noise-rate", adapt.noise_rate, "fixed noise rate override");
    adapt_cmd->add_option("--gamma", adapt.gamma, "confidence threshold");
    adapt_cmd->add_option("--kappa", adapt.kappa, "rescale curve degree");
    adapt_cmd->add_option("--buffer-len", adapt.buffer_len, "loss queue length h");
    adapt_cmd->add_option("--nk-frac", adapt.nk_frac, "n_k as a fraction of N");
    adapt_cmd->add_option("--batch", adapt.batch, "batch size");
    adapt_cmd->add_option("--lr", adapt.lr, "base learning rate");
    adapt_cmd->add_option("--momentum", adapt.momentum, "SGD momentum");
    adapt_cmd->add_option("--hidden", adapt.hidden, "hidden layer dims");

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a model on a labeled split");
    eval_cmd->add_option("--config", config_file,
                        "key=value config file; flags override it");
    eval_cmd->add_option("--checkpoint", eval.checkpoint, "checkpoint path");
    eval_cmd->add_option("--endpoint", eval.endpoint, "remote prediction API");
    eval_cmd->add_option("--data", eval.data.csv, "labeled CSV");
    eval_cmd->add_option("--images", eval.data.images, "IDX image file");
    eval_cmd->add_option("--labels", eval.data.labels, "IDX label file");
    eval_cmd->add_option("--limit", eval.data.limit, "use only the first N samples");
    eval_cmd->add_option("--out", eval.out, "write the transition matrix CSV here");
    eval_cmd->add_option("--seed", eval.seed, "seed recorded in provenance");

    ReportArgs report;
    auto* report_cmd = app.add_subcommand("report", "emit curves and matrices for a run");
    report_cmd->add_option("--config", config_file,
                        "key=value config file; flags override it");
    report_cmd->add_option("--run-dir", report.run_dir, "adapt output directory")->required();
    report_cmd->add_option("--eval", report.eval_csv, "labeled target CSV");

    try {
        std::vector<std::string> args = expand_config_args(argc, argv);
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
        if (*gen_cmd) return cmd_gen_data(gen);
        if (*train_cmd) return cmd_train_source(train);
        if (*serve_cmd) return cmd_serve(serve);
        if (*adapt_cmd) return cmd_adapt(adapt);
        if (*eval_cmd) return cmd_eval(eval);
        if (*report_cmd) return cmd_report(report);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const data_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const transport_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const protocol_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
