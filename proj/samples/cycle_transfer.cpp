// Train a recession classifier on one synthetic economy and apply it, frozen,
// to another. Prints test AUC for the source, the transfer and a logit baseline.

#include <iostream>

#include "macroxfer/macroxfer.hpp"

using namespace macroxfer;

int main() {
    const auto source = generate_regime_series(1, 400);
    const auto target = generate_regime_series(2, 200);

    const auto data = prepare(source.growth.values, source.labels, {.seed = 1});
    NetworkSpec spec;
    spec.input_width = static_cast<std::size_t>(source.growth.cols());
    spec.dense_depth = 2;
    spec.dense_units = 16;
    spec.output_bias_init = label_stats(data.bundle.train.targets).initial_bias;
    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.learning_rate = 0.01;
    auto [net, history] = train(Network::create(spec, 7), data.bundle, cfg);
    std::cout << "source test AUC   " << fmt6(evaluate(net, data.bundle.test, Task::classification).auc.value())
              << '\n';

    const auto plan = TransferPlan::make(net, TransferMode::locked, spec.input_width);
    const auto mapped = prepare_target(plan, target.growth.values, target.labels, {.seed = 2});
    const auto locked = apply_locked(plan, mapped.bundle.test);
    std::cout << "locked target AUC " << fmt6(auc(locked, mapped.bundle.test.targets)) << '\n';

    NetworkSpec logit = spec;
    logit.dense_depth = 0;
    logit.output_bias_init = label_stats(mapped.bundle.train.targets).initial_bias;
    auto [base, base_history] = train(Network::create(logit, 8), mapped.bundle, cfg);
    const auto base_report = evaluate(base, mapped.bundle.test, Task::classification);
    std::cout << "logit target AUC  " << fmt6(base_report.auc.value()) << '\n';

    MetricReport transfer_report;
    transfer_report.auc = auc(locked, mapped.bundle.test.targets);
    transfer_report.count = mapped.bundle.test.size();
    const auto verdict = detect_negative_transfer(transfer_report, base_report, ComparisonMetric::auc);
    std::cout << "negative transfer " << (verdict.negative_transfer ? "yes" : "no") << '\n';
}
