// macroxfer command line: run, tune, transfer, eval, disagg, synth.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "macroxfer/macroxfer.hpp"

namespace mx = macroxfer;

namespace {

mx::ExperimentConfig config_with_out(const std::string& path, const std::string& out) {
    auto cfg = mx::load_config(path);
    if (!out.empty()) cfg.output_dir = out;
    return cfg;
}

void report(const mx::RunOutcome& r, const std::string& dir) {
    for (const auto& f : r.files) std::cout << (std::filesystem::path(dir) / f).string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Transfer learning and temporal disaggregation for macroeconomic series"};
    app.require_subcommand(1);

    std::string config, out;

    auto* run = app.add_subcommand("run", "train and evaluate the experiment in a config file");
    run->add_option("config", config, "experiment JSON")->required();
    run->add_option("--out", out, "output directory (overrides output_dir)");

    auto* tune = app.add_subcommand("tune", "Hyperband search only; writes trials.csv and best_config.json");
    tune->add_option("config", config, "experiment JSON")->required();
    tune->add_option("--out", out, "output directory");

    auto* transfer = app.add_subcommand("transfer", "apply or fine-tune a saved model on new target data");
    transfer->add_option("config", config, "experiment JSON with a transfer block")->required();
    transfer->add_option("--out", out, "output directory");

    std::string model_path, data_path, target, date_column = "date", frequency = "quarterly";
    double threshold = 0.5;
    auto* eval = app.add_subcommand("eval", "score a saved model on a dataset");
    eval->add_option("--model", model_path, "model.json")->required();
    eval->add_option("--data", data_path, "CSV with the model's feature columns")->required();
    eval->add_option("--target", target, "target column (default: the model's)");
    eval->add_option("--date-column", date_column, "date column name");
    eval->add_option("--frequency", frequency, "monthly | quarterly | annual");
    eval->add_option("--threshold", threshold, "classification threshold");
    eval->add_option("--out", out, "output directory")->required();

    mx::DisaggBlock dis;
    std::string method = "chowlin", mode = "flow", rho = "estimate", ride_transform = "level", dis_out;
    bool no_intercept = false;
    std::uint64_t seed = 0;
    auto* disagg = app.add_subcommand("disagg", "quarterly to monthly disaggregation");
    disagg->add_option("--target", dis.target_path, "quarterly target CSV")->required();
    disagg->add_option("--indicators", dis.indicators_path, "monthly indicator CSV")->required();
    disagg->add_option("--target-column", dis.target_column, "column in the target file");
    disagg->add_option("--date-column", dis.date_column, "date column name");
    disagg->add_option("--method", method, "chowlin | ride");
    disagg->add_option("--mode", mode, "flow | stock | average");
    disagg->add_option("--rho", rho, "AR(1) coefficient or 'estimate'");
    disagg->add_flag("--no-intercept", no_intercept, "drop the constant regressor");
    disagg->add_option("--transform", ride_transform, "RIDE target transform: level | yoy");
    disagg->add_option("--epochs", dis.epochs, "RIDE epochs");
    disagg->add_option("--seed", seed, "RIDE seed");
    disagg->add_option("--out", dis_out, "monthly CSV path")->required();

    std::string kind = "regime", form = "growth", synth_out, target_out;
    std::size_t n = 400, extra = 0;
    auto* synth = app.add_subcommand("synth", "write synthetic datasets");
    synth->add_option("--kind", kind, "regime | gap | monthly");
    synth->add_option("--seed", seed, "generator seed");
    synth->add_option("--n", n, "periods (quarters for monthly)");
    synth->add_option("--form", form, "growth | level (regime)");
    synth->add_option("--extra-months", extra, "monthly kind: indicator months past the last quarter");
    synth->add_option("--out", synth_out, "CSV path")->required();
    synth->add_option("--target-out", target_out, "monthly kind: quarterly target CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (run->parsed()) {
            const auto cfg = config_with_out(config, out);
            if (cfg.task == mx::TaskKind::disaggregation) {
                mx::write_file(std::filesystem::path(cfg.output_dir) / cfg.disagg.output,
                               mx::run_disagg(cfg.disagg, cfg.seed));
                std::cout << (std::filesystem::path(cfg.output_dir) / cfg.disagg.output).string() << '\n';
            } else if (cfg.task == mx::TaskKind::synth) {
                const auto files = mx::synth_files(cfg.synth, cfg.seed);
                mx::write_file(std::filesystem::path(cfg.output_dir) / cfg.synth.output, files.main);
                if (!cfg.synth.target_output.empty())
                    mx::write_file(std::filesystem::path(cfg.output_dir) / cfg.synth.target_output, files.target);
            } else if (cfg.transfer) {
                report(mx::run_transfer(cfg), cfg.output_dir);
            } else {
                report(mx::run_supervised(cfg), cfg.output_dir);
            }
        } else if (tune->parsed()) {
            const auto cfg = config_with_out(config, out);
            if (cfg.task != mx::TaskKind::cycle_classification && cfg.task != mx::TaskKind::output_gap_regression)
                throw mx::ConfigError("tune applies to supervised tasks only");
            if (cfg.transfer) throw mx::ConfigError("tune does not take a transfer block");
            report(mx::run_supervised(cfg, true), cfg.output_dir);
        } else if (transfer->parsed()) {
            const auto cfg = config_with_out(config, out);
            if (!cfg.transfer) throw mx::ConfigError("config has no transfer block");
            report(mx::run_transfer(cfg), cfg.output_dir);
        } else if (eval->parsed()) {
            mx::DataConfig dc;
            dc.path = data_path;
            dc.date_column = date_column;
            dc.frequency = mx::parse_frequency(frequency);
            dc.target = target;
            if (!(threshold > 0.0 && threshold < 1.0)) throw mx::ConfigError("threshold must lie in (0, 1)");
            report(mx::run_eval(model_path, dc, out, threshold), out);
        } else if (disagg->parsed()) {
            dis.method = mx::parse_disagg_method(method);
            dis.mode = mx::parse_aggregation(mode);
            if (rho != "estimate") {
                double r = 0.0;
                if (!mx::detail::parse_double(rho, r)) throw mx::ConfigError("--rho must be a number or 'estimate'");
                if (!(std::abs(r) < 1.0)) throw mx::ConfigError("--rho must lie in (-1, 1)");
                dis.rho = r;
            }
            dis.intercept = !no_intercept;
            dis.ride_transform = mx::parse_ride_transform(ride_transform);
            if (dis.method == mx::DisaggMethod::ride && dis.epochs == 0)
                throw mx::ConfigError("--epochs must be positive");
            mx::write_file(dis_out, mx::run_disagg(dis, seed));
            std::cout << dis_out << '\n';
        } else if (synth->parsed()) {
            mx::SynthBlock b;
            b.kind = mx::parse_synth_kind(kind);
            b.n = n;
            b.form = form;
            b.extra_months = extra;
            if (form != "growth" && form != "level") throw mx::ConfigError("--form must be growth or level");
            if (n == 0) throw mx::ConfigError("--n must be positive");
            const auto files = mx::synth_files(b, seed);
            mx::write_file(synth_out, files.main);
            std::cout << synth_out << '\n';
            if (!target_out.empty()) {
                if (b.kind != mx::SynthKind::monthly) throw mx::ConfigError("--target-out applies to --kind monthly");
                mx::write_file(target_out, files.target);
                std::cout << target_out << '\n';
            }
        }
    } catch (const mx::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const mx::DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const mx::NumericError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const mx::TrainingError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
