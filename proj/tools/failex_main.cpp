#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "failex/error.hpp"
#include "failex/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"failex: explainable storage failure prediction from telemetry"};
    app.require_subcommand(1);
    app.fallthrough();

    std::optional<std::string> config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> dir;
    std::optional<std::string> format;
    std::optional<std::string> encoder;
    std::optional<std::string> optimizer;
    std::optional<int> k_max;
    std::optional<int> epochs;
    std::optional<double> positive_weight;
    std::optional<std::size_t> devices;
    std::optional<std::string> device;
    bool diagnostics = false;
    bool dump_config = false;

    app.add_option("--config", config_path, "JSON configuration file");
    app.add_option("--seed", seed, "top-level seed");
    app.add_option("--dir", dir, "artifact directory");
    app.add_option("--format", format, "report format: csv, table or json");
    app.add_option("--encoder", encoder, "window encoder: attentive or plain");
    app.add_option("--optimizer", optimizer, "sgd, momentum or adam");
    app.add_option("--k-max", k_max, "largest number of windows per device");
    app.add_option("--epochs", epochs, "training epochs");
    app.add_option("--positive-weight", positive_weight, "loss weight of the failure class");
    app.add_option("--devices", devices, "number of synthetic devices");
    app.add_option("--device", device, "explain a single device");
    app.add_flag("--diagnostics", diagnostics, "write per-device BIC curves when clustering");
    app.add_flag("--print-config", dump_config, "print the effective configuration and exit");

    const char* help[] = {
        "generate a synthetic telemetry corpus",
        "extract anomalous events and label devices",
        "cluster each device's events into windows",
        "train the failure classifier",
        "evaluate on the held-out test split",
        "score every device",
        "write explanation reports",
        "compare analytic and numerical gradients",
        "run synth through explain",
    };
    std::string chosen;
    const auto& names = failex::command_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        app.add_subcommand(names[i], help[i])->callback([&chosen, name = names[i]] { chosen = name; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    failex::PipelineConfig config;
    try {
        config = failex::load_config(config_path);
        if (seed) config.seed = *seed;
        if (dir) config.paths.dir = *dir;
        if (format) config.report_format = failex::parse_report_format(*format);
        if (encoder) config.model.encoder = failex::parse_encoder_kind(*encoder);
        if (optimizer) config.train.optimizer = failex::parse_optimizer(*optimizer);
        if (k_max) config.windowing.k_max = *k_max;
        if (epochs) config.train.epochs = *epochs;
        if (positive_weight) config.train.positive_class_weight = *positive_weight;
        if (devices) config.synth.device_count = *devices;
        if (device) config.explain_device = *device;
        config.cluster_diagnostics = diagnostics;
        config.synchronize();
        config.validate();
    } catch (const failex::IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    if (dump_config) {
        std::cout << config.to_json().dump(2) << '\n';
        return 0;
    }
    return failex::run_command(chosen, config, std::cerr);
}
