// Hyperband over feed-forward regressors for a synthetic output gap.

#include <iostream>

#include "macroxfer/macroxfer.hpp"

using namespace macroxfer;

int main() {
    const auto gap = generate_gap_series(3, 300);
    const auto data = prepare(gap.features.values, gap.gap, {.seed = 3});
    const auto width = static_cast<std::size_t>(gap.features.cols());
    const NetworkFactory factory = [width](const HyperConfig& h, std::uint64_t seed) {
        NetworkSpec spec;
        spec.input_width = width;
        spec.dense_depth = h.dense_depth;
        spec.dense_units = h.dense_units;
        spec.hidden_activation = h.activation;
        spec.output_activation = Activation::identity;
        spec.regularization = Regularization::l1;
        spec.lambda = h.lambda;
        return Network::create(spec, seed);
    };
    HyperSpace space;
    space.lstm_units = {32};
    TrainConfig base;
    base.loss = LossKind::mse;
    base.objective = Objective::min_val_mse;
    const TunerConfig tc{.max_resource = 27, .eta = 3, .objective = Objective::min_val_mse, .seed = 4};
    const auto result = tune(space, tc, data.bundle, factory, base);
    std::cout << "trials " << result.trials.size() << ", epochs " << result.epochs_consumed << '\n';
    std::cout << "best depth " << result.best.dense_depth << ", units " << result.best.dense_units << ", "
              << to_string(result.best.activation) << ", lr " << result.best.learning_rate << '\n';
    write_trials_csv(std::cout, result.trials);
}
