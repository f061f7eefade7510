#include <gtest/gtest.h>

#include <chrono>
#include <set>

#include "srdnet/gradcheck.hpp"
#include "srdnet/ops.hpp"

using namespace srdnet;

TEST(GradCheck, FullSuitePasses) {
  const auto start = std::chrono::steady_clock::now();
  const auto results = run_gradcheck_suite("all", 1);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(seconds, 120.0);
  std::set<std::string> names;
  for (const auto& r : results) {
    EXPECT_TRUE(r.passed) << format_result(r);
    EXPECT_GE(r.probes, 20) << r.name;
    EXPECT_LT(r.flat, r.probes) << r.name;
    names.insert(r.name);
  }
  EXPECT_EQ(names.size(), results.size());
  EXPECT_GE(results.size(), 40u);
}

TEST(GradCheck, ModulesPartitionTheSuite) {
  std::size_t total = 0;
  for (const char* m : {"ops", "blocks", "model", "freq"}) {
    const auto r = run_gradcheck_suite(m, 2);
    EXPECT_FALSE(r.empty()) << m;
    total += r.size();
  }
  EXPECT_EQ(total, run_gradcheck_suite("all", 2).size());
  EXPECT_THROW(run_gradcheck_suite("tensor", 2), std::invalid_argument);
}

TEST(GradCheck, CatchesAWrongGradient) {
  // Detaching one factor halves the reverse-mode gradient of x².
  Rng rng(3);
  const auto r = check_gradient(
      "wrong", [](std::span<const Tensor> in) { return sum(in[0] * in[0].detach()); },
      {uniform({4, 4}, rng, 0.5, 1.5, true)}, rng);
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.max_error, 0.3);
}

TEST(GradCheck, KinksAreRedrawn) {
  // Half the entries sit exactly on the ReLU kink.
  Vector v(16);
  for (Index i = 0; i < 16; ++i) v[i] = i % 2 == 0 ? 0.0 : 0.1 * double(i);
  Rng rng(4);
  const auto r = check_output_gradient(
      "relu_kinks", [](std::span<const Tensor> in) { return relu(in[0]); }, {Tensor({16}, v, true)}, rng);
  EXPECT_TRUE(r.passed) << format_result(r);
  EXPECT_GT(r.kinks, 0);
}
