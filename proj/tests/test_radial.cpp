#include <gtest/gtest.h>

#include <cmath>

#include "diracflow/radial.hpp"
#include "support.hpp"

using namespace diracflow;

namespace {

void expect_same(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], tol) << "k " << k;
}

double lowest_abs(const std::vector<double>& ev) {
  double best = ev.front();
  for (double v : ev)
    if (std::abs(v) < std::abs(best)) best = v;
  return best;
}

DenseMatrix tridiagonal_matrix(const ChannelTridiagonal& m) {
  const auto n = m.diag.size();
  DenseMatrix a = DenseMatrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) a(i, i) = m.diag[i];
  for (Eigen::Index i = 0; i + 1 < n; ++i) a(i, i + 1) = a(i + 1, i) = m.sub[i];
  return a;
}

GaugeSpec winding(int w) {
  GaugeSpec g;
  g.windings[1] = w;
  return g;
}

}  // namespace

TEST(Radial, ChannelOperatorIsHermitian) {
  const HermitianOperator op = channel_operator({0, 0.3, 1, 64, 1.0, 2.0}, -1.0, 1.0);
  EXPECT_LT(op.hermiticity_defect(), 1e-12);
  EXPECT_EQ(op.dimension(), 128);
}

TEST(Radial, TridiagonalFormMatchesReferenceAssembly) {
  for (double b_in : {-2.0, 0.7}) {
    const ChannelSpec c{2, 0.4, -1, 48, 0.5, 1.5};
    expect_same(channel_eigenvalues(c, b_in, 1.3), eigh(channel_operator(c, b_in, 1.3)), 1e-10);
  }
}

TEST(Radial, ChannelRelabelIdentity) {
  for (int j : {-3, 0, 4}) {
    const ChannelSpec at1{j, 1.0, 1, 64};
    const ChannelSpec at0{j - 1, 0.0, 1, 64};
    expect_same(channel_eigenvalues(at1, -1.0, 1.0), channel_eigenvalues(at0, -1.0, 1.0), 1e-10);
  }
}

TEST(Radial, SpectrumDependsOnlyOnA) {
  // (j, t, w) = (1, 0.25, 2) and (1, 0.5, 1) share a = 1
  expect_same(channel_eigenvalues({1, 0.25, 2, 64}, 1.0, -2.0), channel_eigenvalues({1, 0.5, 1, 64}, 1.0, -2.0), 1e-12);
}

TEST(Radial, ChiralReflection) {
  const ChannelSpec c{1, 0.37, 2, 64};
  std::vector<double> flipped = channel_eigenvalues(c, 1.5, -0.5);
  for (double& v : flipped) v = -v;
  std::sort(flipped.begin(), flipped.end());
  expect_same(channel_eigenvalues(c, -1.5, 0.5), flipped, 1e-10);
}

TEST(Radial, FirstOrderConvergence) {
  const double l1 = lowest_abs(channel_eigenvalues({0, 0.3, 1, 64}, -1.0, 1.0));
  const double l2 = lowest_abs(channel_eigenvalues({0, 0.3, 1, 128}, -1.0, 1.0));
  const double l4 = lowest_abs(channel_eigenvalues({0, 0.3, 1, 256}, -1.0, 1.0));
  const double ratio = (l1 - l2) / (l2 - l4);
  EXPECT_NEAR(ratio, 2.0, 0.4);
}

TEST(Radial, WeylContinuityInT) {
  const ChannelSpec a{0, 0.40, 1, 64};
  const ChannelSpec b{0, 0.41, 1, 64};
  const DenseMatrix diff = tridiagonal_matrix(channel_tridiagonal(b, 1.0, -1.0)) - tridiagonal_matrix(channel_tridiagonal(a, 1.0, -1.0));
  const double bound = Eigen::SelfAdjointEigenSolver<DenseMatrix>(diff).eigenvalues().cwiseAbs().maxCoeff();
  const std::vector<double> ea = channel_eigenvalues(a, 1.0, -1.0), eb = channel_eigenvalues(b, 1.0, -1.0);
  for (std::size_t k = 0; k < ea.size(); ++k) EXPECT_LE(std::abs(ea[k] - eb[k]), bound + 1e-12);
}

TEST(Radial, ChannelErrors) {
  EXPECT_THROW_KIND(channel_eigenvalues({0, 0.0, 1, 16}, 1.0, 1.0), ErrorKind::Resolution);
  EXPECT_THROW_KIND(channel_eigenvalues({0, 0.0, 1, 64}, 0.0, 1.0), ErrorKind::InvalidBoundaryData);
  EXPECT_THROW_KIND(channel_operator({0, 0.0, 1, 64}, 1.0, 0.0), ErrorKind::InvalidBoundaryData);
  EXPECT_THROW_KIND(channel_eigenvalues({0, 0.0, 1, 64, 2.0, 1.0}, 1.0, 1.0), ErrorKind::InvalidGeometry);
}

TEST(Radial, ChannelRanges) {
  const ChannelRange r = channels_within(2.0, 0.0, 1);
  EXPECT_EQ(r.lo, -2);
  EXPECT_EQ(r.hi, 1);
  const ChannelRange f = channels_for_family(2.0, 1);
  EXPECT_EQ(f.lo, -2);
  EXPECT_EQ(f.hi, 2);
  const ChannelRange n = channels_for_family(2.0, -2);
  EXPECT_EQ(n.lo, -4);
  EXPECT_EQ(n.hi, 1);
}

class Annulus : public ::testing::Test {
 protected:
  DomainSpec domain = build_annulus(1.0, 2.0, {-1, 1.0}, {1, 1.0});
  RadialOptions opt{128, 1.5};
};

TEST_F(Annulus, EndpointsAreIsospectral) {
  for (int w : {-2, 1, 2}) {
    const SpectrumSample a = assemble_annulus_spectrum(domain, winding(w), 0.0, opt);
    const SpectrumSample b = assemble_annulus_spectrum(domain, winding(w), 1.0, opt);
    // count_below is not compared: the fixed channel range is not gauge invariant
    // far below the window, only the window spectrum is
    expect_same(a.eigenvalues, b.eigenvalues, 1e-10);
    EXPECT_FALSE(a.eigenvalues.empty());
  }
}

TEST_F(Annulus, ZeroWindingIsIndependentOfT) {
  const SpectrumSample a = assemble_annulus_spectrum(domain, winding(0), 0.0, opt);
  for (double t : {0.2, 0.5, 0.9}) {
    const SpectrumSample b = assemble_annulus_spectrum(domain, winding(0), t, opt);
    EXPECT_EQ(a.count_below, b.count_below);
    expect_same(a.eigenvalues, b.eigenvalues, 1e-12);
  }
}

TEST_F(Annulus, SampleIsSortedWindowedAndRecordsChannels) {
  const SpectrumSample s = assemble_annulus_spectrum(domain, winding(1), 0.3, opt);
  EXPECT_TRUE(std::is_sorted(s.eigenvalues.begin(), s.eigenvalues.end()));
  for (double v : s.eigenvalues) EXPECT_LE(std::abs(v), 1.5);
  EXPECT_EQ(s.meta.backend, "radial");
  EXPECT_EQ(s.meta.resolution, 128);
  EXPECT_LT(s.meta.channel_lo, s.meta.channel_hi);
  EXPECT_GT(s.count_below, 0);
}

TEST_F(Annulus, NarrowChannelRangeIsATruncationError) {
  RadialOptions narrow = opt;
  narrow.channels = {-1, 0};
  EXPECT_THROW_KIND(assemble_annulus_spectrum(domain, winding(1), 0.5, narrow), ErrorKind::ChannelTruncation);
}

TEST_F(Annulus, MergeEqualsChannelUnion) {
  const SpectrumSample s = assemble_annulus_spectrum(domain, winding(1), 0.3, opt);
  std::vector<double> all;
  for (int j = s.meta.channel_lo; j <= s.meta.channel_hi; ++j)
    for (double v : channel_eigenvalues({j, 0.3, 1, 128, 1.0, 2.0}, -1.0, 1.0))
      if (std::abs(v) <= 1.5) all.push_back(v);
  std::sort(all.begin(), all.end());
  expect_same(s.eigenvalues, all, 0.0);
}

TEST(Radial, NonConcentricDomainIsRejected) {
  const DomainSpec d(Circle{{0, 0}, 2.0}, {1, 1.0}, {Hole{Circle{{0.2, 0}, 0.5}, {1, 1.0}}});
  EXPECT_THROW_KIND(assemble_annulus_spectrum(d, winding(1), 0.0, {}), ErrorKind::InvalidGeometry);
}
