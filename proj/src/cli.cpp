#include "diffeo/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "diffeo/dataset.hpp"
#include "diffeo/dds.hpp"
#include "diffeo/errors.hpp"
#include "diffeo/fno.hpp"
#include "diffeo/io.hpp"
#include "diffeo/parallel.hpp"
#include "diffeo/volparam.hpp"

namespace diffeo::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const json& require(const json& c, const char* key) {
    if (!c.contains(key)) fail(ErrorCode::InvalidInput, std::string("missing required setting '") + key + "'");
    return c.at(key);
}

fs::path require_path(const json& c, const char* key) { return fs::path(require(c, key).get<std::string>()); }

template <typename T>
T value_or(const json& c, const char* key, T fallback) {
    return c.contains(key) ? c.at(key).get<T>() : fallback;
}

void write_json(const fs::path& path, const json& j) { io::write_text(path, j.dump(2) + "\n"); }

std::string format_double(double v) {
    std::ostringstream ss;
    ss << std::setprecision(10) << v;
    return ss.str();
}

// Splits a dataset into train / validation by manifest order.
std::pair<std::size_t, std::size_t> split_sizes(std::size_t n, const json& c) {
    std::size_t n_train = n;
    if (c.contains("n_train")) {
        n_train = std::min(n, c.at("n_train").get<std::size_t>());
    } else {
        const double frac = value_or(c, "val_fraction", 0.2);
        if (frac < 0 || frac >= 1) fail(ErrorCode::InvalidInput, "val_fraction must be in [0, 1)");
        n_train = n - static_cast<std::size_t>(std::llround(frac * static_cast<double>(n)));
    }
    return {n_train, n - n_train};
}

fno::FnoConfig fno_config(const json& c) {
    fno::FnoConfig config = c.contains("model") ? c.at("model").get<fno::FnoConfig>() : fno::FnoConfig{};
    config.validate();
    return config;
}

}  // namespace

json cmd_gen(const json& c) {
    const fs::path out = require_path(c, "out");
    DatasetConfig config = c.get<DatasetConfig>();
    const json manifest = generate_dataset(config, out);
    std::size_t ok = 0;
    double max_residual = 0;
    for (const auto& s : manifest.at("samples")) {
        ok += s.at("bijectivity").at("ok").get<bool>() ? 1 : 0;
        max_residual = std::max(max_residual, s.at("harmonic_residual").get<double>());
    }
    return {{"out", out.string()}, {"n", config.n}, {"bijective", ok}, {"max_harmonic_residual", max_residual}};
}

json cmd_train(const json& c) {
    const fs::path data = require_path(c, "data");
    const fs::path out = require_path(c, "out");
    const fno::FnoConfig config = fno_config(c);

    // Cheap shape validation before any sample is loaded or any epoch runs.
    const json manifest = json::parse(io::read_text(data / "manifest.json"));
    const int res = manifest.at("config").at("resolution").get<int>();
    if (c.contains("resolution") && c.at("resolution").get<int>() != res)
        fail(ErrorCode::ShapeMismatch, "dataset resolution " + std::to_string(res) + " differs from configured " +
                                           std::to_string(c.at("resolution").get<int>()));
    config.check_resolution(res, res);

    const Dataset ds = load_dataset(data);
    const auto [n_train, n_val] = split_sizes(ds.samples.size(), c);
    const std::span<const GridSample> all(ds.samples);
    const auto train_set = all.first(n_train);
    const auto val_set = all.subspan(n_train, n_val);

    fs::create_directories(out);
    const fs::path ckpt_path = out / "checkpoint.bin";
    const fs::path log_path = out / "train_log.csv";
    fno::TrainOptions options;
    options.max_steps = value_or<std::int64_t>(c, "max_steps", 0);
    std::optional<fno::Checkpoint> resume;
    std::string previous_log;
    if (value_or(c, "resume", false) && fs::exists(ckpt_path)) {
        resume = fno::load_checkpoint(ckpt_path);
        options.resume = &*resume;
        if (fs::exists(log_path)) previous_log = io::read_text(log_path);
    }
    const bool verbose = value_or(c, "verbose", false);
    options.on_epoch = [&](const fno::EpochLog& row) {
        if (verbose)
            std::cerr << "epoch " << row.epoch << " train " << row.train_loss << " val " << row.val_loss << " lr "
                      << row.lr << "\n";
    };

    json resolved = c;
    resolved["model"] = config;
    resolved["n_train"] = n_train;
    resolved["n_val"] = n_val;
    resolved["threads"] = worker_count();
    write_json(out / "config.json", resolved);

    const fno::TrainResult result = fno::train(train_set, val_set, config, options);
    fno::save_checkpoint(ckpt_path, result.checkpoint);
    std::string log = fno::format_log_csv(result.log);
    if (!previous_log.empty()) log = previous_log + log.substr(log.find('\n') + 1);
    io::write_text(log_path, log);

    json summary = {{"checkpoint", ckpt_path.string()},
                    {"n_train", n_train},
                    {"n_val", n_val},
                    {"epochs_completed", result.checkpoint.optimizer.epochs_completed},
                    {"steps", result.checkpoint.optimizer.step}};
    if (!result.log.empty()) {
        summary["final_train_loss"] = result.log.back().train_loss;
        summary["final_val_loss"] = result.log.back().val_loss;
    }
    return summary;
}

json cmd_eval(const json& c) {
    const fs::path ckpt_path = require_path(c, "checkpoint");
    const fs::path data = require_path(c, "data");
    const fs::path out = require_path(c, "out");
    const fno::Checkpoint ckpt = fno::load_checkpoint(ckpt_path);
    const Dataset ds = load_dataset(data);
    if (ds.samples.empty()) fail(ErrorCode::EmptyTrainingSet, "evaluation dataset is empty");

    std::vector<double> errors(ds.samples.size());
    parallel_for(ds.samples.size(), [&](std::size_t i) {
        const GridSample& s = ds.samples[i];
        if (!s.solution_field) fail(ErrorCode::InvalidInput, "sample " + s.id + " is unlabelled");
        errors[i] = fno::relative_l2(std::span<const double>(fno::predict(ckpt, s)),
                                     std::span<const double>(*s.solution_field));
    });

    fs::create_directories(out);
    std::ostringstream csv;
    csv << "sample_id,rel_l2_error\n";
    for (std::size_t i = 0; i < errors.size(); ++i) csv << ds.samples[i].id << ',' << format_double(errors[i]) << '\n';
    io::write_text(out / "eval.csv", csv.str());

    std::vector<double> sorted = errors;
    std::sort(sorted.begin(), sorted.end());
    double mean = 0;
    for (double e : errors) mean += e;
    mean /= static_cast<double>(errors.size());
    const double median = sorted.size() % 2 ? sorted[sorted.size() / 2]
                                            : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
    json summary = {{"n", errors.size()},
                    {"mean_rel_l2", mean},
                    {"median_rel_l2", median},
                    {"max_rel_l2", sorted.back()},
                    {"resolution", ds.samples.front().rx},
                    {"checkpoint", ckpt_path.string()},
                    {"data", data.string()}};
    write_json(out / "eval.json", summary);
    write_json(out / "config.json", c);
    return summary;
}

json cmd_dds(const json& c) {
    const fs::path train_dir = require_path(c, "train_data");
    const fs::path cand_dir = require_path(c, "candidates");
    const fs::path out = require_path(c, "out");
    const bool include_self = value_or(c, "include_self", true);
    NccOptions options;
    options.per_channel_average = value_or(c, "per_channel_average", false);

    Dataset train = load_dataset(train_dir);
    if (c.contains("n_train")) train.samples.resize(std::min(train.samples.size(), c.at("n_train").get<std::size_t>()));
    const Dataset cand = load_dataset(cand_dir);
    std::vector<GeometryImage> train_images;
    for (const auto& s : train.samples) train_images.push_back(geometry_image(s));

    std::map<std::string, double> eval_errors;
    if (c.contains("eval_csv")) {
        std::istringstream in(io::read_text(c.at("eval_csv").get<std::string>()));
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            const auto comma = line.find(',');
            if (comma == std::string::npos) continue;
            eval_errors[line.substr(0, comma)] = std::stod(line.substr(comma + 1));
        }
    }

    std::vector<double> values(cand.samples.size());
    parallel_for(cand.samples.size(), [&](std::size_t i) {
        const GeometryImage img = geometry_image(cand.samples[i]);
        if (include_self) {
            values[i] = dds(img, train_images, options);
            return;
        }
        std::vector<GeometryImage> others;
        for (std::size_t t = 0; t < train.samples.size(); ++t)
            if (train.samples[t].id != cand.samples[i].id || train_dir != cand_dir) others.push_back(train_images[t]);
        values[i] = dds(img, others, options);
    });

    fs::create_directories(out);
    std::ostringstream csv;
    csv << "sample_id,dds,rel_l2_error\n";
    std::vector<double> joined_dds, joined_err;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto& id = cand.samples[i].id;
        csv << id << ',' << format_double(values[i]) << ',';
        if (const auto it = eval_errors.find(id); it != eval_errors.end()) {
            csv << format_double(it->second);
            joined_dds.push_back(values[i]);
            joined_err.push_back(it->second);
        }
        csv << '\n';
    }
    io::write_text(out / "dds.csv", csv.str());

    json summary = {{"n", values.size()}, {"n_joined", joined_dds.size()}};
    if (!values.empty()) {
        summary["dds_min"] = *std::min_element(values.begin(), values.end());
        summary["dds_max"] = *std::max_element(values.begin(), values.end());
    }
    if (!eval_errors.empty()) {
        const CorrelationReport r = correlation_report(joined_dds, joined_err);
        summary["pearson_r"] = r.pearson_r;
        summary["spearman_rho"] = r.spearman_rho;
        summary["pearson_degenerate"] = r.pearson_degenerate;
        summary["spearman_degenerate"] = r.spearman_degenerate;
        json table = json::array();
        for (const auto& row : r.table) table.push_back({row.dds, row.error});
        summary["table"] = table;
    }
    write_json(out / "correlation.json", summary);
    write_json(out / "config.json", c);
    return summary;
}

json cmd_volparam(const json& c) {
    PartSurfaces surfaces;
    json source;
    if (c.contains("surfaces")) {
        surfaces = read_surfaces(c.at("surfaces").get<std::string>());
        source = c.at("surfaces");
    } else {
        const int pockets = value_or(c, "pockets", 2);
        const double depth = value_or(c, "depth", 24.0);
        const double side_wave = value_or(c, "side_wave", 0.0);
        surfaces = synthetic_pocket_part(pockets, depth, side_wave);
        source = {{"synthetic", {{"pockets", pockets}, {"depth", depth}, {"side_wave", side_wave}}}};
    }
    check_surfaces(surfaces);
    const auto n = value_or<std::size_t>(c, "samples", 100000);
    const auto seed = value_or<std::uint64_t>(c, "seed", 0);
    const VolparamReport r = certify_volume_map(surfaces, n, seed);
    const auto vec = [](const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); };
    json report = {{"source", source},
                   {"samples", r.samples},
                   {"min_det", r.min_det},
                   {"min_det_at", vec(r.min_det_at)},
                   {"max_det", r.max_det},
                   {"max_det_at", vec(r.max_det_at)},
                   {"max_fd_rel_error", r.max_fd_rel_error},
                   {"max_roundtrip_error", r.max_roundtrip_error},
                   {"positive", r.min_det > 0}};
    if (c.contains("out")) {
        const fs::path out = c.at("out").get<std::string>();
        fs::create_directories(out);
        write_json(out / "volparam.json", report);
        json resolved = c;
        resolved["samples"] = n;
        resolved["seed"] = seed;
        write_json(out / "config.json", resolved);
    }
    return report;
}

namespace {

// Flag values land in `overrides` only when given, so they win over the file.
struct Overrides {
    json values = json::object();
    std::vector<std::function<void()>> apply;

    template <typename T>
    void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        auto holder = std::make_shared<T>();
        CLI::Option* opt = app->add_option(flag, *holder, help);
        apply.push_back([this, opt, holder, key] {
            if (opt->count() == 0) return;
            json* target = &values;
            std::string k = key;
            if (const auto dot = key.find('.'); dot != std::string::npos) {
                target = &values[key.substr(0, dot)];
                k = key.substr(dot + 1);
            }
            (*target)[k] = *holder;
        });
    }
    void flag(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        CLI::Option* opt = app->add_flag(flag, help);
        apply.push_back([this, opt, key] {
            if (opt->count() > 0) values[key] = true;
        });
    }
};

json merge(const std::string& config_file, const json& overrides) {
    json config = json::object();
    if (!config_file.empty()) config = json::parse(io::read_text(config_file));
    for (const auto& [k, v] : overrides.items()) {
        if (v.is_object() && config.contains(k) && config[k].is_object()) config[k].update(v);
        else config[k] = v;
    }
    return config;
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"diffeo-op: neural operators on diffeomorphically mapped domains"};
    app.set_help_flag("--help", "print help");  // frees -h for the mesh size flag
    app.require_subcommand(1);
    std::map<std::string, std::pair<std::string, Overrides>> per_command;

    const auto sub = [&](const std::string& name, const std::string& help) {
        CLI::App* s = app.add_subcommand(name, help);
        auto& [file, ov] = per_command[name];
        s->add_option("--config", file, "JSON config file; flags override its values");
        return std::pair<CLI::App*, Overrides*>{s, &ov};
    };

    auto [gen, gen_ov] = sub("gen", "generate a Darcy dataset");
    gen_ov->add<std::string>(gen, "--family", "family", "pentagon | hexagon");
    gen_ov->add<int>(gen, "--n", "n", "number of samples");
    gen_ov->add<int>(gen, "--res", "resolution", "grid resolution");
    gen_ov->add<double>(gen, "--h", "h", "target mesh edge length");
    gen_ov->add<std::uint64_t>(gen, "--seed", "seed", "master seed");
    gen_ov->add<std::uint64_t>(gen, "--first-index", "first_index", "index of the first sample");
    gen_ov->add<double>(gen, "--scale", "scale", "domain magnification");
    gen_ov->add<std::string>(gen, "--c-range", "coefficient_range", "text ([0.2, 0.8]) | table ([2, 9])");
    gen_ov->add<std::string>(gen, "--weights", "weights", "clamped | raw");
    gen_ov->add<std::string>(gen, "--out", "out", "output directory");
    gen_ov->flag(gen, "--write-meshes", "write_meshes", "also write meshes and shared coordinates");

    auto [train, train_ov] = sub("train", "train an FNO on a dataset");
    train_ov->add<std::string>(train, "--data", "data", "dataset directory");
    train_ov->add<std::string>(train, "--out", "out", "output directory");
    train_ov->add<int>(train, "--res", "resolution", "expected dataset resolution");
    train_ov->add<std::size_t>(train, "--n-train", "n_train", "training samples (rest validate)");
    train_ov->add<double>(train, "--val-fraction", "val_fraction", "validation fraction (default 0.2)");
    train_ov->add<std::int64_t>(train, "--max-steps", "max_steps", "stop after this many optimizer steps");
    train_ov->add<int>(train, "--epochs", "model.epochs", "epochs");
    train_ov->add<int>(train, "--batch-size", "model.batch_size", "batch size");
    train_ov->add<double>(train, "--lr", "model.learning_rate", "learning rate");
    train_ov->add<int>(train, "--lr-decay-every", "model.lr_decay_every", "epochs per learning-rate halving");
    train_ov->add<int>(train, "--layers", "model.fourier_layers", "Fourier layers");
    train_ov->add<int>(train, "--width", "model.width", "channel width");
    train_ov->add<std::string>(train, "--activation", "model.activation", "linear | relu | gelu | tanh");
    train_ov->add<std::uint64_t>(train, "--seed", "model.seed", "training seed");
    train_ov->flag(train, "--resume", "resume", "continue from out/checkpoint.bin");
    train_ov->flag(train, "--verbose", "verbose", "print per-epoch losses");
    std::vector<int> modes;
    train->add_option("--modes", modes, "retained modes kx ky")->expected(2);

    auto [eval, eval_ov] = sub("eval", "evaluate a checkpoint on a labelled dataset");
    eval_ov->add<std::string>(eval, "--checkpoint", "checkpoint", "checkpoint file");
    eval_ov->add<std::string>(eval, "--data", "data", "dataset directory");
    eval_ov->add<std::string>(eval, "--out", "out", "output directory");

    auto [ddsc, dds_ov] = sub("dds", "DDS of candidate geometries against a training set");
    dds_ov->add<std::string>(ddsc, "--train-data", "train_data", "training dataset directory");
    dds_ov->add<std::size_t>(ddsc, "--n-train", "n_train", "use only the first n training samples");
    dds_ov->add<std::string>(ddsc, "--candidates", "candidates", "candidate dataset directory");
    dds_ov->add<std::string>(ddsc, "--eval-csv", "eval_csv", "per-sample errors from eval");
    dds_ov->add<std::string>(ddsc, "--out", "out", "output directory");
    dds_ov->add<bool>(ddsc, "--include-self", "include_self", "keep self-pairs when sets overlap");
    dds_ov->flag(ddsc, "--per-channel", "per_channel_average", "average per-channel NCC instead");

    auto [vol, vol_ov] = sub("volparam-check", "certify the 3D volume parameterization");
    vol_ov->add<std::string>(vol, "--surfaces", "surfaces", "surface file");
    vol_ov->add<int>(vol, "--pockets", "pockets", "synthetic part: pocket count");
    vol_ov->add<double>(vol, "--depth", "depth", "synthetic part: pocket depth (mm)");
    vol_ov->add<double>(vol, "--side-wave", "side_wave", "synthetic part: side wall pinch (mm)");
    vol_ov->add<std::size_t>(vol, "--samples", "samples", "random sample points");
    vol_ov->add<std::uint64_t>(vol, "--seed", "seed", "sampling seed");
    vol_ov->add<std::string>(vol, "--out", "out", "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        for (auto& [name, entry] : per_command) {
            CLI::App* s = app.get_subcommand(name);
            if (!s->parsed()) continue;
            auto& [file, ov] = entry;
            for (auto& f : ov.apply) f();
            if (name == "train" && !modes.empty()) ov.values["model"]["modes"] = modes;
            const json config = merge(file, ov.values);
            json summary;
            if (name == "gen") summary = cmd_gen(config);
            else if (name == "train") summary = cmd_train(config);
            else if (name == "eval") summary = cmd_eval(config);
            else if (name == "dds") summary = cmd_dds(config);
            else summary = cmd_volparam(config);
            if (summary.contains("table")) summary.erase("table");
            std::cout << summary.dump(2) << "\n";
        }
        return 0;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return is_numerical(e.code()) ? 3 : 2;
    } catch (const json::exception& e) {
        std::cerr << "error: invalid configuration: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace diffeo::cli
