#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "dipscan/dipscan.h"

namespace {

struct ConfigHandle {
  dipscan_config* ptr = nullptr;
  ~ConfigHandle() { dipscan_config_free(ptr); }
};

struct ResultHandle {
  dipscan_result* ptr = nullptr;
  ~ResultHandle() { dipscan_result_free(ptr); }
};

}  // namespace

TEST(CApi, StatusNamesAndVersion) {
  EXPECT_STREQ(dipscan_status_name(DIPSCAN_OK), "ok");
  EXPECT_STREQ(dipscan_status_name(DIPSCAN_CONFIG), "configuration error");
  EXPECT_STRNE(dipscan_version(), "");
}

TEST(CApi, ExperimentListing) {
  ASSERT_EQ(dipscan_experiment_count(), 9u);
  const char* name = nullptr;
  const char* description = nullptr;
  ASSERT_EQ(dipscan_experiment_info(0, &name, &description), DIPSCAN_OK);
  EXPECT_STREQ(name, "thm1");
  EXPECT_GT(std::strlen(description), 0u);
  EXPECT_EQ(dipscan_experiment_info(99, &name, nullptr), DIPSCAN_INVALID_ARGUMENT);
  EXPECT_STRNE(dipscan_last_error(), "");
}

TEST(CApi, RunFromText) {
  ConfigHandle c;
  ASSERT_EQ(dipscan_config_parse("experiment = thm1\nseed = 1\nsensors = 8\ngrid_size = 20\n", &c.ptr), DIPSCAN_OK);
  size_t count = 0;
  ASSERT_EQ(dipscan_config_selected_count(c.ptr, &count), DIPSCAN_OK);
  EXPECT_EQ(count, 1u);
  ResultHandle r;
  ASSERT_EQ(dipscan_run(c.ptr, nullptr, &r.ptr), DIPSCAN_OK) << dipscan_last_error();
  EXPECT_EQ(dipscan_result_pass(r.ptr), 1);
  EXPECT_EQ(dipscan_result_instances(r.ptr), 100u);
  EXPECT_EQ(dipscan_result_seed(r.ptr), 1u);
  EXPECT_LE(dipscan_result_max_deviation(r.ptr), 1e-10);
  EXPECT_EQ(dipscan_result_tolerance(r.ptr), 1e-10);
  EXPECT_EQ(dipscan_result_failing_seed_count(r.ptr), 0u);
  EXPECT_STREQ(dipscan_result_experiment(r.ptr), "thm1");
  EXPECT_EQ(std::string(dipscan_result_summary(r.ptr)).rfind("thm1 seed=1 instances=100", 0), 0u);
  EXPECT_EQ(std::string(dipscan_result_csv(r.ptr)).rfind("instance,seed,metric", 0), 0u);
  EXPECT_NE(std::string(dipscan_result_json(r.ptr)).find("\"theorem\": \"thm1\""), std::string::npos);
}

TEST(CApi, OverridesAndValidation) {
  ConfigHandle c;
  ASSERT_EQ(dipscan_config_parse("seed = 1\n[thm4]\n[eloreta]\n", &c.ptr), DIPSCAN_OK);
  EXPECT_EQ(dipscan_config_validate(c.ptr), DIPSCAN_CONFIG);
  EXPECT_NE(std::string(dipscan_last_error()).find("sensors"), std::string::npos);
  EXPECT_EQ(dipscan_config_set(c.ptr, "nonsense", "1"), DIPSCAN_CONFIG);
  EXPECT_NE(std::string(dipscan_last_error()).find("nonsense"), std::string::npos);
  ASSERT_EQ(dipscan_config_set(c.ptr, "sensors", "6"), DIPSCAN_OK);
  ASSERT_EQ(dipscan_config_set(c.ptr, "instances", "3"), DIPSCAN_OK);
  EXPECT_EQ(dipscan_config_validate(c.ptr), DIPSCAN_OK);

  size_t count = 0;
  ASSERT_EQ(dipscan_config_selected_count(c.ptr, &count), DIPSCAN_OK);
  ASSERT_EQ(count, 2u);
  const char* name = nullptr;
  ASSERT_EQ(dipscan_config_selected_name(c.ptr, 1, &name), DIPSCAN_OK);
  EXPECT_STREQ(name, "eloreta");

  ASSERT_EQ(dipscan_config_set(c.ptr, "experiment", "thm4"), DIPSCAN_OK);
  ASSERT_EQ(dipscan_config_selected_count(c.ptr, &count), DIPSCAN_OK);
  EXPECT_EQ(count, 1u);
  ResultHandle r;
  ASSERT_EQ(dipscan_run(c.ptr, nullptr, &r.ptr), DIPSCAN_OK) << dipscan_last_error();
  EXPECT_EQ(dipscan_result_instances(r.ptr), 3u);
  EXPECT_EQ(dipscan_result_pass(r.ptr), 1);
}

TEST(CApi, WriteReports) {
  const auto dir = std::filesystem::temp_directory_path() / "dipscan_capi_reports";
  std::filesystem::remove_all(dir);
  ConfigHandle c;
  ASSERT_EQ(dipscan_config_parse("experiment = eloreta\nsensors = 6\ninstances = 2\nseed = 4\n", &c.ptr), DIPSCAN_OK);
  ResultHandle r;
  ASSERT_EQ(dipscan_run(c.ptr, nullptr, &r.ptr), DIPSCAN_OK);
  size_t written = 0;
  ASSERT_EQ(dipscan_result_write(r.ptr, dir.string().c_str(), DIPSCAN_FORMAT_BOTH, &written), DIPSCAN_OK);
  EXPECT_EQ(written, 2u);
  EXPECT_TRUE(std::filesystem::exists(dir / "eloreta-4.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "eloreta-4.json"));
  EXPECT_EQ(dipscan_result_write(r.ptr, dir.string().c_str(), static_cast<dipscan_format>(42), nullptr),
            DIPSCAN_INVALID_ARGUMENT);
}

TEST(CApi, LoadReportsMissingFile) {
  dipscan_config* c = nullptr;
  EXPECT_EQ(dipscan_config_load("/nonexistent/dipscan.cfg", &c), DIPSCAN_IO);
  EXPECT_EQ(c, nullptr);
  EXPECT_EQ(dipscan_config_load(nullptr, &c), DIPSCAN_INVALID_ARGUMENT);
}

TEST(CApi, MetricAndFit) {
  const double identity[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  dipscan_metric* m = nullptr;
  ASSERT_EQ(dipscan_metric_create(identity, 3, &m), DIPSCAN_OK);
  EXPECT_EQ(dipscan_metric_dim(m), 3u);
  EXPECT_EQ(dipscan_metric_rank(m), 3u);

  // Row-major 3 x 2 leadfield spanning the first two axes.
  const double l[6] = {1, 0, 0, 1, 0, 0};
  const double d[3] = {3, 4, 12};
  double gof = 0, power = 0, moment[2] = {0, 0};
  ASSERT_EQ(dipscan_gof(m, l, 3, 2, d, &gof), DIPSCAN_OK);
  EXPECT_NEAR(gof, 25.0 / 169.0, 1e-15);
  ASSERT_EQ(dipscan_sloreta_power(m, l, 3, 2, d, &power), DIPSCAN_OK);
  EXPECT_NEAR(power, 25.0, 1e-13);
  ASSERT_EQ(dipscan_fit_moment(m, l, 3, 2, d, moment), DIPSCAN_OK);
  EXPECT_NEAR(moment[0], 3.0, 1e-14);
  EXPECT_NEAR(moment[1], 4.0, 1e-14);

  EXPECT_EQ(dipscan_gof(m, l, 2, 3, d, &gof), DIPSCAN_DIMENSION_MISMATCH);
  const double degenerate[6] = {1, 1, 0, 0, 0, 0};
  EXPECT_EQ(dipscan_gof(m, degenerate, 3, 2, d, &gof), DIPSCAN_DEGENERATE_CANDIDATE);
  EXPECT_EQ(dipscan_gof(m, l, 3, 2, d, nullptr), DIPSCAN_INVALID_ARGUMENT);
  dipscan_metric_free(m);

  const double asymmetric[4] = {1, 2, 0, 1};
  dipscan_metric* bad = nullptr;
  EXPECT_EQ(dipscan_metric_create(asymmetric, 2, &bad), DIPSCAN_NOT_SYMMETRIC);
  EXPECT_EQ(bad, nullptr);
}
