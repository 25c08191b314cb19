#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "headfusion/config.hpp"
#include "headfusion/pipeline.hpp"
#include "headfusion/sequence.hpp"
#include "headfusion/synth.hpp"

namespace {

std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int cmd_run(const std::string& config_path, const std::string& sequence, const std::string& out,
            bool dump_debug, bool no_occlusion, int max_frames) {
    // Defaults, then the sequence's rig description, then the user config.
    std::string text;
    const std::string rig_file = sequence + "/" + headfusion::kRigFile;
    if (std::filesystem::exists(rig_file)) text += read_text_file(rig_file) + "\n";
    if (!config_path.empty()) text += read_text_file(config_path) + "\n";
    const headfusion::PipelineConfig config =
        headfusion::PipelineConfig::from_config(headfusion::Config::from_string(text));

    headfusion::RunOptions options;
    options.dump_debug = dump_debug;
    options.occlusion_enabled = !no_occlusion;
    options.max_frames = max_frames;

    const auto reports = headfusion::run_pipeline(config, sequence, out, options);
    int lost = 0, hold = 0;
    for (const auto& r : reports) {
        lost += r.tracking_lost ? 1 : 0;
        hold += r.expression_hold ? 1 : 0;
    }
    std::cout << "processed " << reports.size() << " frames (" << lost << " tracking-lost, "
              << hold << " expression-hold)\n";
    double total_ms = 0.0;
    for (const auto& r : reports) total_ms += r.ms_total;
    if (!reports.empty()) {
        std::cout << "mean frame time: " << total_ms / reports.size() << " ms\n";
    }
    std::cout << "outputs written to " << out << "\n";
    return 0;
}

int cmd_export(const std::string& snapshot_path, const std::vector<double>& coeffs,
               const std::string& out) {
    const headfusion::DeviationSnapshot snapshot =
        headfusion::load_deviation_snapshot(snapshot_path);
    headfusion::PipelineConfig rig_cfg = headfusion::parse_rig_descriptor(snapshot.rig_descriptor);
    const int n = rig_cfg.rig_path.empty() ? rig_cfg.toy_params.n : -1;

    headfusion::ExpressionCoefficients x;
    if (coeffs.empty()) {
        if (n < 0) throw std::runtime_error("--coeffs required for file-based rigs");
        x = headfusion::ExpressionCoefficients::Zero(n);
    } else {
        x = Eigen::Map<const Eigen::VectorXd>(coeffs.data(),
                                              static_cast<Eigen::Index>(coeffs.size()));
    }
    headfusion::export_mesh(snapshot, x, out);
    std::cout << "wrote " << out << "\n";
    return 0;
}

int cmd_synth(const std::string& scenario, const std::string& out) {
    const headfusion::ScenarioSpec spec = headfusion::ScenarioSpec::from_file(scenario);
    headfusion::generate_sequence(spec, out);
    std::cout << "generated " << spec.frames << " frames in " << out << "\n";
    return 0;
}

int cmd_eval(const std::string& gt, const std::string& run) {
    const headfusion::MetricsReport report = headfusion::evaluate_run(gt, run);
    headfusion::print_metrics(std::cout, report);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Real-time 3D head modeling and facial motion capture from RGB-D"};
    app.require_subcommand(1);

    std::string config_path, sequence, out, snapshot_path, scenario, gt, run_dir;
    std::vector<double> coeffs;
    bool dump_debug = false, no_occlusion = false;
    int max_frames = -1;

    CLI::App* run = app.add_subcommand("run", "Run the pipeline over a sequence directory");
    run->add_option("--config", config_path, "Pipeline config file");
    run->add_option("--sequence", sequence, "Sequence directory")->required();
    run->add_option("--out", out, "Output directory")->required();
    run->add_option("--max-frames", max_frames, "Process at most N frames");
    run->add_flag("--dump-debug", dump_debug, "Write per-frame debug images");
    run->add_flag("--no-occlusion", no_occlusion, "Disable occlusion handling");

    CLI::App* exp = app.add_subcommand("export", "Export the augmented mesh from a snapshot");
    exp->add_option("--snapshot", snapshot_path, "Model snapshot file")->required();
    exp->add_option("--coeffs", coeffs, "Expression coefficients (default: neutral)");
    exp->add_option("--out", out, "Output OBJ path")->required();

    CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic ground-truth sequence");
    synth->add_option("--scenario", scenario, "Scenario config file")->required();
    synth->add_option("--out", out, "Output sequence directory")->required();

    CLI::App* eval = app.add_subcommand("eval", "Compare a pipeline run against ground truth");
    eval->add_option("--gt", gt, "Ground-truth sequence directory")->required();
    eval->add_option("--run", run_dir, "Pipeline output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            return cmd_run(config_path, sequence, out, dump_debug, no_occlusion, max_frames);
        }
        if (exp->parsed()) return cmd_export(snapshot_path, coeffs, out);
        if (synth->parsed()) return cmd_synth(scenario, out);
        if (eval->parsed()) return cmd_eval(gt, run_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
