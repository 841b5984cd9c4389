// Quarterly to monthly: Chow-Lin and RIDE against a known monthly truth.

#include <cmath>
#include <iostream>

#include "macroxfer/macroxfer.hpp"

using namespace macroxfer;

int main() {
    const auto data = generate_monthly_truth(11, 60, 3);
    const Eigen::VectorXd y_q = data.quarterly.column("gdp");
    const Eigen::MatrixXd& x = data.indicators.values;

    const auto cl = chow_lin({y_q, x, AggregationMode::average, std::nullopt, true});
    std::cout << "chow-lin rho " << fmt6(cl.rho_used) << '\n';

    RideConfig cfg;
    cfg.train.epochs = 80;
    const auto fit = ride_train(cfg, x, y_q);
    const Eigen::VectorXd ride = ride_extrapolate(fit.model, x);

    const auto in_sample = static_cast<Eigen::Index>(3 * y_q.size());
    std::cout << "months   " << x.rows() << " (" << x.rows() - in_sample << " extrapolated)\n";
    std::cout << "chow-lin corr " << fmt6(pearson(cl.y_m.head(in_sample), data.truth.head(in_sample))) << '\n';
    std::cout << "ride     corr " << fmt6(pearson(ride.head(in_sample), data.truth.head(in_sample))) << '\n';
    std::cout << "last month truth " << fmt6(data.truth(x.rows() - 1)) << ", chow-lin " << fmt6(cl.y_m(x.rows() - 1))
              << ", ride " << fmt6(ride(x.rows() - 1)) << '\n';
}
