#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "slimstack/pipeline.hpp"
#include "slimstack/scheduler.hpp"

namespace slimstack {

// Ordered key/value echo of the run configuration; every output file starts
// with it so results stay interpretable on their own.
using ConfigEcho = std::vector<std::pair<std::string, std::string>>;

// Fixed 17-significant-digit formatting: enough to round-trip any double,
// and stable across runs so identical invocations produce identical bytes.
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace detail {

inline std::string config_comment(const ConfigEcho& cfg) {
    std::string line = "# config:";
    for (const auto& [k, v] : cfg) {
        line += " " + k + "=" + v;
    }
    return line + "\n";
}

inline void write_text(const std::string& path, const std::string& text) {
    const std::filesystem::path p(path);
    if (!p.parent_path().empty()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

inline nlohmann::json config_json(const ConfigEcho& cfg) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : cfg) j[k] = v;
    return j;
}

}  // namespace detail

// Per-layer scores with their cluster and assigned sparsity.
inline void write_scores_csv(const std::string& path, const ConfigEcho& cfg,
                             const ScoreReport& scores, const Clustering& clustering,
                             const SparsityPlan& plan) {
    if (scores.entries.size() != clustering.assignment.size() ||
        scores.entries.size() != plan.values.size()) {
        throw std::invalid_argument("write_scores_csv: size mismatch");
    }
    std::string text = detail::config_comment(cfg);
    text += "layer,params,score,log10_score,cluster,sparsity\n";
    for (std::size_t i = 0; i < scores.entries.size(); ++i) {
        const ScoreEntry& e = scores.entries[i];
        text += e.layer_name + "," + std::to_string(e.param_count) + "," + fmt_double(e.score) +
                "," + fmt_double(std::log10(e.score)) + "," +
                std::to_string(clustering.assignment[i]) + "," + fmt_double(plan.values[i]) +
                "\n";
    }
    detail::write_text(path, text);
}

inline void write_plan_json(const std::string& path, const ConfigEcho& cfg,
                            const SparsityPlan& plan, const Clustering& clustering) {
    nlohmann::json j;
    j["config"] = detail::config_json(cfg);
    j["s_min"] = plan.s_min;
    j["s_max"] = plan.s_max;
    j["target"] = plan.target;
    j["weighted_total"] = plan.weighted_total;
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t i = 0; i < plan.values.size(); ++i) {
        nlohmann::json l;
        l["name"] = i < plan.names.size() ? plan.names[i] : "layer" + std::to_string(i);
        l["sparsity"] = plan.values[i];
        if (i < clustering.assignment.size()) l["cluster"] = clustering.assignment[i];
        layers.push_back(l);
    }
    j["layers"] = layers;
    j["clusters"] = {{"k", clustering.k}, {"centroids_log10", clustering.centroids},
                     {"objective", clustering.objective}};
    detail::write_text(path, j.dump(2) + "\n");
}

inline SparsityPlan load_plan_json(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open plan: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed plan: " + std::string(e.what()));
    }
    SparsityPlan plan;
    plan.s_min = j.at("s_min").get<double>();
    plan.s_max = j.at("s_max").get<double>();
    plan.target = j.at("target").get<double>();
    plan.weighted_total = j.at("weighted_total").get<double>();
    for (const auto& l : j.at("layers")) {
        plan.names.push_back(l.at("name").get<std::string>());
        plan.values.push_back(l.at("sparsity").get<double>());
    }
    return plan;
}

inline void write_report_json(const std::string& path, const ConfigEcho& cfg,
                              const CompressionReport& report, bool timings) {
    nlohmann::json j;
    j["config"] = detail::config_json(cfg);
    j["weighted_sparsity"] = report.weighted_sparsity;
    j["output_rel_error"] = report.output_rel_error;
    nlohmann::json layers = nlohmann::json::array();
    for (const LayerReport& lr : report.layers) {
        nlohmann::json l;
        l["name"] = lr.name;
        l["assigned_sparsity"] = lr.assigned_sparsity;
        l["achieved_density"] = lr.achieved_density;
        l["layer_mse"] = lr.layer_mse;
        l["loss_estimate"] = lr.prune_loss_estimate;
        if (timings) l["time_ms"] = lr.time_ms;
        layers.push_back(l);
    }
    j["layers"] = layers;
    detail::write_text(path, j.dump(2) + "\n");
}

inline void write_report_csv(const std::string& path, const ConfigEcho& cfg,
                             const CompressionReport& report, bool timings) {
    std::string text = detail::config_comment(cfg);
    text += "layer,assigned_sparsity,achieved_density,layer_mse,loss_estimate";
    if (timings) text += ",time_ms";
    text += "\n";
    for (const LayerReport& lr : report.layers) {
        text += lr.name + "," + fmt_double(lr.assigned_sparsity) + "," +
                fmt_double(lr.achieved_density) + "," + fmt_double(lr.layer_mse) + "," +
                fmt_double(lr.prune_loss_estimate);
        if (timings) text += "," + fmt_double(lr.time_ms);
        text += "\n";
    }
    text += "total,," + fmt_double(1.0 - report.weighted_sparsity) + "," +
            fmt_double(report.output_rel_error) + ",";
    if (timings) text += ",";
    text += "\n";
    detail::write_text(path, text);
}

inline void write_curve_csv(const std::string& path, const ConfigEcho& cfg,
                            const std::vector<std::pair<double, double>>& curve) {
    std::string text = detail::config_comment(cfg);
    text += "sparsity,output_rel_error\n";
    for (const auto& [s, err] : curve) {
        text += fmt_double(s) + "," + fmt_double(err) + "\n";
    }
    detail::write_text(path, text);
}

inline void write_compare_csv(const std::string& path, const ConfigEcho& cfg,
                              const std::vector<CompareRow>& rows) {
    std::string text = detail::config_comment(cfg);
    text += "scheduler,seed,plan_total,achieved_sparsity,output_rel_error\n";
    for (const CompareRow& r : rows) {
        text += r.scheduler + "," + std::to_string(r.seed) + "," + fmt_double(r.plan_total) +
                "," + fmt_double(r.achieved_sparsity) + "," + fmt_double(r.output_rel_error) +
                "\n";
    }
    detail::write_text(path, text);
}

inline void write_compare_summary_csv(const std::string& path, const ConfigEcho& cfg,
                                      const std::vector<CompareRow>& rows) {
    std::string text = detail::config_comment(cfg);
    text += "scheduler,runs,mean_output_rel_error\n";
    std::size_t runs = 0;
    for (const auto& [label, mean] : mean_errors(rows)) {
        runs = 0;
        for (const CompareRow& r : rows) {
            if (r.scheduler == label) ++runs;
        }
        text += label + "," + std::to_string(runs) + "," + fmt_double(mean) + "\n";
    }
    detail::write_text(path, text);
}

}  // namespace slimstack
