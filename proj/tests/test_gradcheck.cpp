#include <gtest/gtest.h>

#include <map>
#include <set>
#include <stdexcept>

#include "cdnn/gradcheck.hpp"

using namespace cdnn;

TEST(GradCheck, DefaultConfigurationsPass) {
    const GradCheckReport rep = run_gradcheck(default_gradcheck_configs());
    EXPECT_TRUE(rep.passed()) << "max rel err " << rep.max_rel_error;
    EXPECT_LT(rep.max_rel_error, 1e-4);

    std::set<std::string> configs;
    std::map<std::pair<std::string, std::string>, std::size_t> per_tensor;
    for (const auto& e : rep.entries) {
        configs.insert(e.config);
        ++per_tensor[{e.config, e.tensor}];
    }
    EXPECT_EQ(configs.size(), 3u);
    for (const std::string t : {"cdlinear.coeffs", "cdlinear.bias", "cdlinear.input", "dense.weight", "dense.bias",
                                "dense.input", "relu.input", "mse.prediction", "fisher_trace.coeffs"})
        for (const auto& c : configs) EXPECT_GT((per_tensor[{c, t}]), 0u) << c << " " << t;
    for (const auto& c : configs)
        for (const std::string t : {"cdlinear.coeffs", "cdlinear.input", "dense.weight", "dense.input", "relu.input",
                                    "mse.prediction", "fisher_trace.coeffs"})
            EXPECT_GE((per_tensor[{c, t}]), 20u) << c << " " << t;
}

TEST(GradCheck, TinyToleranceReportsFailures) {
    const GradCheckReport rep = run_gradcheck(default_gradcheck_configs(), 1e-12);
    EXPECT_FALSE(rep.passed());
    EXPECT_GT(rep.failures, 0u);
    std::size_t flagged = 0;
    for (const auto& e : rep.entries) flagged += !e.passed;
    EXPECT_EQ(flagged, rep.failures);
}

TEST(GradCheck, InvalidConfiguration) {
    EXPECT_THROW(run_gradcheck({{8, 8, 3}}), std::invalid_argument);
    EXPECT_THROW(run_gradcheck({}), std::invalid_argument);
}

TEST(GradCheck, RelativeErrorFloor) {
    EXPECT_DOUBLE_EQ(gradcheck_relative_error(1.0, 1.0), 0.0);
    EXPECT_DOUBLE_EQ(gradcheck_relative_error(2.0, 1.0), 0.5);
    EXPECT_DOUBLE_EQ(gradcheck_relative_error(0.0, 1e-9), 1e-3);
}

TEST(GradCheck, ExtraConfigurationIncluded) {
    const GradCheckReport rep = run_gradcheck({{20, 10, 5}});
    EXPECT_TRUE(rep.passed());
    EXPECT_EQ(rep.entries.front().config, "(20,10,5)");
}
