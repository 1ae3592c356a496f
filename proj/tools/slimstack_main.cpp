// slimstack command-line driver: generate synthetic stacks, score and
// schedule per-layer sparsities, compress, sweep, compare schedulers,
// evaluate, and run the built-in cross-route verification suite.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "slimstack/slimstack.hpp"

namespace {

using namespace slimstack;

namespace fs = std::filesystem;

std::string join(const std::string& dir, const std::string& file) {
    return (fs::path(dir) / file).string();
}

struct Options {
    std::string model_path;
    std::string calib_path;
    std::string reference_path;
    std::string plan_path;
    std::string out_dir = ".";
    std::string scheduler = "score";
    std::string quant_mode = "joint";
    std::string activation = "relu";
    double s_min = 0.6;
    double s_max = 0.8;
    double target = 0.7;
    double damping = 0.01;
    double het = 1.0;
    std::size_t k = 0;  // 0 -> min(8, layer count)
    std::size_t block_size = 128;
    std::size_t n_layers = 12;
    std::size_t dim = 16;
    std::size_t samples = 64;
    std::optional<int> bits;
    std::uint64_t seed = 1;
    bool timings = false;
    std::vector<std::size_t> dims;
    std::vector<double> sparsities = {0.5, 0.6, 0.7, 0.8, 0.9};
    std::vector<std::uint64_t> seeds;
};

void add_range_flags(CLI::App* cmd, Options& o) {
    cmd->add_option("--s-min", o.s_min, "Lower sparsity bound");
    cmd->add_option("--s-max", o.s_max, "Upper sparsity bound");
    cmd->add_option("--target", o.target, "Total sparsity floor");
    cmd->add_option("--k", o.k, "Cluster count (0 = min(8, layers))");
}

void add_compress_flags(CLI::App* cmd, Options& o) {
    cmd->add_option("--bits", o.bits, "Quantization bit width (omit to skip quantization)");
    cmd->add_option("--quant-mode", o.quant_mode, "joint | sequential")
        ->check(CLI::IsMember({"joint", "sequential"}));
    cmd->add_option("--block-size", o.block_size, "Pruning block size");
    cmd->add_option("--damping", o.damping, "Hessian damping fraction");
}

void add_gen_flags(CLI::App* cmd, Options& o) {
    cmd->add_option("--layers", o.n_layers, "Layer count");
    cmd->add_option("--dim", o.dim, "Uniform layer width");
    cmd->add_option("--dims", o.dims, "Explicit dimension chain (layers+1 values)")
        ->delimiter(',');
    cmd->add_option("--het", o.het, "Heterogeneity in [0, 1]");
    cmd->add_option("--samples", o.samples, "Calibration sample count");
    cmd->add_option("--activation", o.activation, "Hidden activation: relu | identity")
        ->check(CLI::IsMember({"relu", "identity"}));
}

ConfigEcho base_echo(const std::string& command, const Options& o) {
    ConfigEcho echo;
    echo.emplace_back("command", command);
    echo.emplace_back("seed", std::to_string(o.seed));
    return echo;
}

void echo_range(ConfigEcho& echo, const Options& o) {
    echo.emplace_back("s_min", fmt_double(o.s_min));
    echo.emplace_back("s_max", fmt_double(o.s_max));
    echo.emplace_back("target", fmt_double(o.target));
    echo.emplace_back("k", std::to_string(o.k));
}

void echo_compress(ConfigEcho& echo, const Options& o) {
    echo.emplace_back("bits", o.bits ? std::to_string(*o.bits) : "none");
    echo.emplace_back("quant_mode", o.quant_mode);
    echo.emplace_back("block_size", std::to_string(o.block_size));
    echo.emplace_back("damping", fmt_double(o.damping));
}

std::vector<std::size_t> dims_for(const Options& o) {
    return o.dims.empty() ? std::vector<std::size_t>{o.dim} : o.dims;
}

SyntheticConfig synth_config(const Options& o) {
    SyntheticConfig cfg;
    cfg.n_samples = o.samples;
    cfg.hidden_act = activation_from_name(o.activation);
    return cfg;
}

CompressConfig compress_config(const Options& o) {
    CompressConfig cfg;
    cfg.bits = o.bits;
    cfg.quant_mode = o.quant_mode == "sequential" ? QuantMode::sequential : QuantMode::joint;
    cfg.prune.block_size = o.block_size;
    cfg.prune.damping_frac = o.damping;
    cfg.collect_timings = o.timings;
    return cfg;
}

std::size_t effective_k(const Options& o, std::size_t n_layers) {
    return o.k > 0 ? std::min(o.k, n_layers) : std::min<std::size_t>(8, n_layers);
}

void layer_names_counts(const LinearModel& model, std::vector<std::string>& names,
                        std::vector<std::size_t>& counts) {
    for (const auto& l : model.layers) {
        names.push_back(l.name);
        counts.push_back(l.w.rows() * l.w.cols());
    }
}

// Builds the plan selected by --plan / --scheduler, writing scores.csv and
// plan.json as side artifacts when scoring happens.
SparsityPlan make_plan(const Options& o, const LinearModel& model, const CalibrationSet& calib,
                       const ConfigEcho& echo, bool write_artifacts) {
    if (!o.plan_path.empty()) return load_plan_json(o.plan_path);
    std::vector<std::string> names;
    std::vector<std::size_t> counts;
    layer_names_counts(model, names, counts);
    if (o.scheduler == "uniform") return uniform_plan(names, counts, o.target);
    if (o.scheduler == "layer-order") {
        return layer_order_plan(names, counts, o.s_min, o.s_max);
    }
    ScoreConfig sc;
    sc.damping_frac = o.damping;
    const ScoreReport scores = score_model(model, calib, sc);
    std::vector<double> vals;
    for (const auto& e : scores.entries) vals.push_back(e.score);
    const Clustering clustering = kmeans_log(vals, effective_k(o, names.size()), o.seed);
    SparsityPlan plan =
        assign_sparsities(clustering, counts, o.s_min, o.s_max, o.target, names);
    if (write_artifacts) {
        write_scores_csv(join(o.out_dir, "scores.csv"), echo, scores, clustering, plan);
        write_plan_json(join(o.out_dir, "plan.json"), echo, plan, clustering);
    }
    return plan;
}

int cmd_gen(const Options& o) {
    ConfigEcho echo = base_echo("gen", o);
    echo.emplace_back("layers", std::to_string(o.n_layers));
    echo.emplace_back("het", fmt_double(o.het));
    echo.emplace_back("samples", std::to_string(o.samples));
    echo.emplace_back("activation", o.activation);

    const auto [model, calib] =
        gen_synthetic_model(o.n_layers, dims_for(o), o.het, o.seed, synth_config(o));
    ContainerExtras extras;
    for (const auto& [k, v] : echo) extras.metadata[k] = v;
    save_model(model, join(o.out_dir, "model.json"), &extras);
    save_calibration(calib, join(o.out_dir, "calib.json"));
    std::cout << "wrote " << join(o.out_dir, "model.json") << " and "
              << join(o.out_dir, "calib.json") << "\n";
    return 0;
}

int cmd_schedule(const Options& o) {
    ConfigEcho echo = base_echo("schedule", o);
    echo_range(echo, o);
    echo.emplace_back("damping", fmt_double(o.damping));

    const LinearModel model = load_model(o.model_path);
    const CalibrationSet calib = load_calibration(o.calib_path);
    Options so = o;
    so.scheduler = "score";
    so.plan_path.clear();
    make_plan(so, model, calib, echo, true);
    std::cout << "wrote " << join(o.out_dir, "scores.csv") << " and "
              << join(o.out_dir, "plan.json") << "\n";
    return 0;
}

int cmd_compress(const Options& o) {
    ConfigEcho echo = base_echo("compress", o);
    echo.emplace_back("scheduler", o.plan_path.empty() ? o.scheduler : "plan-file");
    echo_range(echo, o);
    echo_compress(echo, o);

    const LinearModel model = load_model(o.model_path);
    const CalibrationSet calib = load_calibration(o.calib_path);
    const SparsityPlan plan = make_plan(o, model, calib, echo, true);
    auto [compressed, report] = compress_model(model, calib, plan, compress_config(o));

    ContainerExtras extras;
    for (const auto& [k, v] : echo) extras.metadata[k] = v;
    extras.quant = report.quant;
    save_model(compressed, join(o.out_dir, "compressed.json"), &extras);
    write_report_json(join(o.out_dir, "report.json"), echo, report, o.timings);
    write_report_csv(join(o.out_dir, "report.csv"), echo, report, o.timings);
    std::cout << "weighted_sparsity " << fmt_double(report.weighted_sparsity)
              << " output_rel_error " << fmt_double(report.output_rel_error) << "\n";
    return 0;
}

int cmd_sweep(const Options& o) {
    ConfigEcho echo = base_echo("sweep", o);
    echo_compress(echo, o);
    std::string list;
    for (double s : o.sparsities) list += (list.empty() ? "" : ";") + fmt_double(s);
    echo.emplace_back("sparsities", list);

    const LinearModel model = load_model(o.model_path);
    const CalibrationSet calib = load_calibration(o.calib_path);
    const auto curve = sparsity_sweep(model, calib, o.sparsities, compress_config(o));
    write_curve_csv(join(o.out_dir, "curve.csv"), echo, curve);
    std::cout << "wrote " << join(o.out_dir, "curve.csv") << "\n";
    return 0;
}

int cmd_compare(const Options& o) {
    ConfigEcho echo = base_echo("compare", o);
    echo_range(echo, o);
    echo_compress(echo, o);

    CompareConfig cc;
    cc.target = o.target;
    cc.s_min = o.s_min;
    cc.s_max = o.s_max;
    cc.k = o.k;
    cc.compress = compress_config(o);
    cc.score.damping_frac = o.damping;

    std::vector<CompareRow> rows;
    if (!o.model_path.empty()) {
        const LinearModel model = load_model(o.model_path);
        const CalibrationSet calib = load_calibration(o.calib_path);
        rows = compare_schedulers(model, calib, cc, o.seed);
    } else {
        echo.emplace_back("layers", std::to_string(o.n_layers));
        echo.emplace_back("het", fmt_double(o.het));
        echo.emplace_back("samples", std::to_string(o.samples));
        std::vector<std::uint64_t> seeds = o.seeds;
        if (seeds.empty()) seeds.push_back(o.seed);
        rows = compare_schedulers_generated(o.n_layers, dims_for(o), o.het, seeds, cc,
                                            synth_config(o));
    }
    write_compare_csv(join(o.out_dir, "compare.csv"), echo, rows);
    write_compare_summary_csv(join(o.out_dir, "compare_summary.csv"), echo, rows);
    for (const auto& [label, mean] : mean_errors(rows)) {
        std::cout << label << " mean_output_rel_error " << fmt_double(mean) << "\n";
    }
    return 0;
}

int cmd_verify(const Options& o) {
    const std::vector<CheckResult> results = run_selfcheck(o.seed);
    bool all_pass = true;
    for (const CheckResult& r : results) {
        std::cout << (r.pass ? "PASS" : "FAIL") << "  " << r.name << "  (" << r.detail << ")\n";
        all_pass = all_pass && r.pass;
    }
    std::cout << (all_pass ? "all checks passed" : "checks FAILED") << "\n";
    return all_pass ? 0 : 1;
}

int cmd_eval(const Options& o) {
    ConfigEcho echo = base_echo("eval", o);

    const LinearModel compressed = load_model(o.model_path);
    const LinearModel reference = load_model(o.reference_path);
    const CalibrationSet calib = load_calibration(o.calib_path);
    if (reference.layers.size() != compressed.layers.size()) {
        throw std::runtime_error("eval: models have different layer counts");
    }

    const std::vector<Matrix> inputs = collect_inputs(reference, calib.x0);
    std::string text;
    text += "layer,density,layer_mse\n";
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < reference.layers.size(); ++l) {
        const Matrix& w_ref = reference.layers[l].w;
        const Matrix& w_cmp = compressed.layers[l].w;
        std::size_t nonzero = 0;
        for (double v : w_cmp.data()) nonzero += (v != 0.0);
        const double density = static_cast<double>(nonzero) / static_cast<double>(w_cmp.size());
        const double mse = layer_mse(w_ref, w_cmp, inputs[l]);
        text += reference.layers[l].name + "," + fmt_double(density) + "," + fmt_double(mse) +
                "\n";
        layers.push_back({{"name", reference.layers[l].name},
                          {"density", density},
                          {"layer_mse", mse}});
    }
    const double err = model_output_error(reference, compressed, calib.x0);

    nlohmann::json j;
    j["config"] = nlohmann::json::object();
    for (const auto& [k, v] : echo) j["config"][k] = v;
    j["output_rel_error"] = err;
    j["layers"] = layers;
    detail::write_text(join(o.out_dir, "eval.json"), j.dump(2) + "\n");
    detail::write_text(join(o.out_dir, "eval.csv"),
                       detail::config_comment(echo) + text);
    std::cout << "output_rel_error " << fmt_double(err) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hessian-aware pruning, low-bit quantization and layer-wise sparsity "
                 "scheduling for stacks of linear layers"};
    app.require_subcommand(1);
    Options o;

    CLI::App* gen = app.add_subcommand("gen", "Generate a synthetic model + calibration set");
    gen->add_option("--out", o.out_dir, "Output directory");
    gen->add_option("--seed", o.seed, "Root seed");
    add_gen_flags(gen, o);

    CLI::App* schedule =
        app.add_subcommand("schedule", "Score layers, cluster, and assign sparsities");
    schedule->add_option("--model", o.model_path, "Model manifest")->required();
    schedule->add_option("--calib", o.calib_path, "Calibration manifest")->required();
    schedule->add_option("--out", o.out_dir, "Output directory");
    schedule->add_option("--seed", o.seed, "Root seed");
    schedule->add_option("--damping", o.damping, "Hessian damping fraction");
    add_range_flags(schedule, o);

    CLI::App* compress = app.add_subcommand("compress", "Compress a model under a plan");
    compress->add_option("--model", o.model_path, "Model manifest")->required();
    compress->add_option("--calib", o.calib_path, "Calibration manifest")->required();
    compress->add_option("--out", o.out_dir, "Output directory");
    compress->add_option("--seed", o.seed, "Root seed");
    compress->add_option("--plan", o.plan_path, "Use an existing plan.json");
    compress->add_option("--scheduler", o.scheduler, "score | uniform | layer-order")
        ->check(CLI::IsMember({"score", "uniform", "layer-order"}));
    compress->add_flag("--timings", o.timings, "Record per-layer wall time in reports");
    add_range_flags(compress, o);
    add_compress_flags(compress, o);

    CLI::App* sweep = app.add_subcommand("sweep", "Uniform sparsity sweep");
    sweep->add_option("--model", o.model_path, "Model manifest")->required();
    sweep->add_option("--calib", o.calib_path, "Calibration manifest")->required();
    sweep->add_option("--out", o.out_dir, "Output directory");
    sweep->add_option("--seed", o.seed, "Root seed");
    sweep->add_option("--sparsities", o.sparsities, "Sparsity values")->delimiter(',');
    add_compress_flags(sweep, o);

    CLI::App* compare = app.add_subcommand("compare", "Compare the three schedulers");
    compare->add_option("--model", o.model_path, "Model manifest (omit to generate)");
    compare->add_option("--calib", o.calib_path, "Calibration manifest");
    compare->add_option("--out", o.out_dir, "Output directory");
    compare->add_option("--seed", o.seed, "Root seed");
    compare->add_option("--seeds", o.seeds, "Seed list for generated models")->delimiter(',');
    add_gen_flags(compare, o);
    add_range_flags(compare, o);
    add_compress_flags(compare, o);

    CLI::App* verify = app.add_subcommand("verify", "Run the cross-route oracle suite");
    verify->add_option("--seed", o.seed, "Root seed");

    CLI::App* eval = app.add_subcommand("eval", "Evaluate a compressed model against a reference");
    eval->add_option("--model", o.model_path, "Compressed model manifest")->required();
    eval->add_option("--reference", o.reference_path, "Reference model manifest")->required();
    eval->add_option("--calib", o.calib_path, "Calibration manifest")->required();
    eval->add_option("--out", o.out_dir, "Output directory");
    eval->add_option("--seed", o.seed, "Root seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (gen->parsed()) return cmd_gen(o);
        if (schedule->parsed()) return cmd_schedule(o);
        if (compress->parsed()) return cmd_compress(o);
        if (sweep->parsed()) return cmd_sweep(o);
        if (compare->parsed()) return cmd_compare(o);
        if (verify->parsed()) return cmd_verify(o);
        if (eval->parsed()) return cmd_eval(o);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << "error: no command\n";
    return 1;
}
