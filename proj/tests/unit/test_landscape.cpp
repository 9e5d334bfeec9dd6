#include <nalm/landscape.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace nalm;

TEST(Landscape, TargetAndSolution) {
  for (ModuleKind kind : {ModuleKind::NRU, ModuleKind::NMRU}) {
    const SurfaceSpec spec = SurfaceSpec::defaults(kind);
    EXPECT_DOUBLE_EQ(spec.target(), 13.2);
    EXPECT_NEAR(stacked_prediction(spec, 1.0, 1.0), 13.2, 1e-12);
  }
  SurfaceSpec npu = SurfaceSpec::defaults(ModuleKind::RealNPU);
  EXPECT_EQ(npu.epsilon, 1e-5);
  npu.epsilon = 0.0;
  EXPECT_NEAR(stacked_prediction(npu, 1.0, 1.0), 13.2, 1e-12);
  EXPECT_THROW(SurfaceSpec::defaults(ModuleKind::NAU), NalmError);
}

TEST(Landscape, HandComputedPoints) {
  const SurfaceSpec nru = SurfaceSpec::defaults(ModuleKind::NRU);
  // w2 = 0 turns every factor into 1.
  EXPECT_DOUBLE_EQ(stacked_prediction(nru, 0.7, 0.0), 1.0);
  // w1 = 0.5: h = (1.1, 3); w2 = 1 multiplies them.
  EXPECT_NEAR(stacked_prediction(nru, 0.5, 1.0), 3.3, 1e-12);
  // w2 = -1 divides: 1 / (1.1 * 3).
  EXPECT_NEAR(stacked_prediction(nru, 0.5, -1.0), 1.0 / 3.3, 1e-12);
  const SurfaceSpec nmru = SurfaceSpec::defaults(ModuleKind::NMRU);
  EXPECT_NEAR(stacked_prediction(nmru, 0.5, 0.5), (0.5 * 1.1 + 0.5) * (0.5 * 3 + 0.5), 1e-12);
}

TEST(Landscape, AxisNodesNest) {
  const auto coarse = grid_axis({-1, 1}, 201);
  const auto fine = grid_axis({-1, 1}, 401);
  ASSERT_EQ(fine.size(), 401u);
  EXPECT_EQ(fine.front(), -1.0);
  EXPECT_EQ(fine.back(), 1.0);
  for (std::size_t j = 0; j < coarse.size(); ++j) EXPECT_EQ(coarse[j], fine[2 * j]);
  EXPECT_THROW(grid_axis({-1, 1}, 1), NalmError);
}

TEST(Landscape, RefinementKeepsSharedNodes) {
  SurfaceSpec spec = SurfaceSpec::defaults(ModuleKind::NMRU);
  spec.resolution = 21;
  const Surface coarse = rmse_surface(spec);
  spec.resolution = 41;
  const Surface fine = rmse_surface(spec);
  for (Eigen::Index i = 0; i < 21; ++i) {
    for (Eigen::Index j = 0; j < 21; ++j) {
      EXPECT_EQ(coarse.rmse(i, j), fine.rmse(2 * i, 2 * j));
    }
  }
}

TEST(Landscape, SurfaceProperties) {
  SurfaceSpec nmru = SurfaceSpec::defaults(ModuleKind::NMRU);
  nmru.resolution = 101;
  const Surface s = rmse_surface(nmru);
  EXPECT_TRUE(s.all_finite());
  EXPECT_NEAR(s.rmse(100, 100), 0.0, 1e-12);
  EXPECT_LE(s.rmse.minCoeff(), s.rmse(100, 100));

  SurfaceSpec nru = SurfaceSpec::defaults(ModuleKind::NRU);
  nru.resolution = 101;
  // w1 = 0 sends zeros into negative powers.
  EXPECT_FALSE(rmse_surface(nru).all_finite());
}

TEST(Landscape, CsvLayout) {
  SurfaceSpec spec = SurfaceSpec::defaults(ModuleKind::NRU);
  spec.resolution = 3;
  const Surface s = rmse_surface(spec);
  std::ostringstream out;
  write_surface_csv(out, s);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "w1,w2,rmse");
  std::size_t rows = 0;
  std::string last;
  while (std::getline(in, line)) {
    ++rows;
    last = line;
    if (rows == 2) {
      EXPECT_EQ(line.substr(0, 5), "-1,0,");
    }
  }
  EXPECT_EQ(rows, 9u);
  EXPECT_EQ(last.substr(0, 4), "1,1,");
}
