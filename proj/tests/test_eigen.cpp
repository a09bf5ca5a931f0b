#include <gtest/gtest.h>

#include <random>

#include "diracflow/eigensolver.hpp"
#include "oracle.hpp"
#include "support.hpp"

using namespace diracflow;

namespace {

HermitianOperator diag(std::vector<double> d) {
  DenseMatrix m = DenseMatrix::Zero(static_cast<Eigen::Index>(d.size()), static_cast<Eigen::Index>(d.size()));
  for (std::size_t i = 0; i < d.size(); ++i) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = d[i];
  return HermitianOperator::from_dense(m);
}

DenseMatrix to_eigen(const oracle::Matrix& a) {
  const auto n = static_cast<Eigen::Index>(a.size());
  DenseMatrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

DenseMatrix random_hermitian(int n, std::mt19937_64& rng) { return to_eigen(oracle::random_hermitian(static_cast<std::size_t>(n), rng)); }

DenseMatrix random_unitary(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  DenseMatrix z(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) z(i, j) = cplx(g(rng), g(rng));
  return Eigen::HouseholderQR<DenseMatrix>(z).householderQ();
}

}  // namespace

TEST(Eigen, EmbeddedDiagonal) {
  const std::vector<double> ev = eigh(diag({3.0, -1.0, 2.0, 10.0}));
  ASSERT_EQ(ev.size(), 4u);
  EXPECT_DOUBLE_EQ(ev[0], -1.0);
  EXPECT_DOUBLE_EQ(ev[1], 2.0);
  EXPECT_DOUBLE_EQ(ev[2], 3.0);
}

TEST(Eigen, PauliX) {
  DenseMatrix m(2, 2);
  m << 0.0, 1.0, 1.0, 0.0;
  const std::vector<double> ev = eigh(HermitianOperator::from_dense(m));
  EXPECT_NEAR(ev[0], -1.0, 1e-15);
  EXPECT_NEAR(ev[1], 1.0, 1e-15);
}

TEST(Eigen, MatchesIndependentOracle) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const oracle::Matrix a = oracle::random_hermitian(12, rng);
    const std::vector<double> ref = oracle::eigenvalues(a);
    const std::vector<double> ev = eigh(HermitianOperator::from_dense(to_eigen(a)));
    ASSERT_EQ(ev.size(), ref.size());
    for (std::size_t k = 0; k < ev.size(); ++k) EXPECT_NEAR(ev[k], ref[k], 1e-8) << "trial " << trial << " k " << k;
  }
}

TEST(Eigen, OracleAgreesOnKnownSpectrum) {
  oracle::Matrix a(2, std::vector<oracle::cplx>(2));
  a[0][1] = {0.0, -2.0};
  a[1][0] = {0.0, 2.0};
  const std::vector<double> ev = oracle::eigenvalues(a);
  EXPECT_NEAR(ev[0], -2.0, 1e-12);
  EXPECT_NEAR(ev[1], 2.0, 1e-12);
}

TEST(Eigen, NonHermitianInputIsAnAssemblyError) {
  DenseMatrix m(2, 2);
  m << 0.0, 1.0, 1.1, 0.0;
  EXPECT_THROW_KIND(HermitianOperator::from_dense(m), ErrorKind::Assembly);
  EXPECT_THROW_KIND(HermitianOperator::from_dense(DenseMatrix::Identity(3, 3)), ErrorKind::Assembly);
}

TEST(Eigen, BackwardErrorOfEigenpairs) {
  std::mt19937_64 rng(5);
  const DenseMatrix h = random_hermitian(40, rng);
  const HermitianOperator op = HermitianOperator::from_dense(h);
  const EigenPairs p = eigh_lowest(op, 40);
  const double norm = h.cwiseAbs().rowwise().sum().maxCoeff();
  std::uniform_int_distribution<int> pick(0, 39);
  for (int s = 0; s < 10; ++s) {
    const int k = pick(rng);
    const Eigen::VectorXcd v = p.vectors.col(k);
    EXPECT_LE((h * v - p.values[static_cast<std::size_t>(k)] * v).norm(), 1e-9 * norm);
  }
}

TEST(Eigen, LowestModesAreSmallestMagnitude) {
  const EigenPairs p = eigh_lowest(diag({-5.0, 0.2, -0.1, 4.0}), 2);
  ASSERT_EQ(p.values.size(), 2u);
  EXPECT_DOUBLE_EQ(p.values[0], -0.1);
  EXPECT_DOUBLE_EQ(p.values[1], 0.2);
}

TEST(Eigen, TraceAndUnitaryInvariance) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const DenseMatrix h = random_hermitian(12, rng);
    const std::vector<double> ev = eigh(HermitianOperator::from_dense(h));
    double sum = 0.0;
    for (double v : ev) sum += v;
    const double tr = h.trace().real();
    EXPECT_LE(std::abs(sum - tr), 1e-8 * std::max(1.0, std::abs(tr)));

    const DenseMatrix u = random_unitary(12, rng);
    DenseMatrix c = u * h * u.adjoint();
    c = 0.5 * (c + c.adjoint());
    const std::vector<double> ec = eigh(HermitianOperator::from_dense(c));
    const double scale = std::max(std::abs(ev.front()), std::abs(ev.back()));
    for (std::size_t k = 0; k < ev.size(); ++k) EXPECT_LE(std::abs(ec[k] - ev[k]), 1e-8 * scale);
  }
}

TEST(Eigen, WeylPerturbationBound) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const DenseMatrix h = random_hermitian(16, rng);
    DenseMatrix e = random_hermitian(16, rng);
    const double eps = 1e-3 * (1 + trial % 5);
    const double enorm = Eigen::SelfAdjointEigenSolver<DenseMatrix>(e).eigenvalues().cwiseAbs().maxCoeff();
    e *= eps / enorm;  // spectral norm exactly eps
    const std::vector<double> a = eigh(HermitianOperator::from_dense(h));
    const std::vector<double> b = eigh(HermitianOperator::from_dense(h + e));
    double worst = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(a[k] - b[k]));
    EXPECT_LE(worst, eps + 1e-9);
  }
}

TEST(Eigen, WindowKeepsInteriorAndCountsBelow) {
  const SpectrumSample s = spectrum_window(diag({-5.0, -0.5, 0.5, 5.0}), 1.0);
  EXPECT_EQ(s.eigenvalues, (std::vector<double>{-0.5, 0.5}));
  EXPECT_EQ(s.count_below, 1);
}

TEST(Eigen, WideWindowKeepsEverything) {
  const SpectrumSample s = spectrum_window(diag({-5.0, -0.5, 0.5, 5.0}), 100.0);
  EXPECT_EQ(s.eigenvalues.size(), 4u);
  EXPECT_EQ(s.count_below, 0);
}

TEST(Eigen, WindowIsClosed) {
  const SpectrumSample s = spectrum_window(diag({-2.0, -1.0, 1.0, 3.0}), 1.0);
  EXPECT_EQ(s.eigenvalues, (std::vector<double>{-1.0, 1.0}));
  EXPECT_EQ(s.count_below, 1);
  EXPECT_THROW_KIND(spectrum_window(diag({1.0, 2.0}), 0.0), ErrorKind::Precondition);
}

TEST(Eigen, SparseWindowMatchesDense) {
  // 1D Wilson-like chain: sparse, Hermitian, with a spread spectrum
  const int n = 400;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Eigen::Triplet<cplx, std::int64_t>> trip;
  for (int i = 0; i < n; ++i) {
    trip.emplace_back(i, i, 2.0 * u(rng));
    if (i + 1 < n) {
      const cplx v(u(rng), u(rng));
      trip.emplace_back(i, i + 1, v);
      trip.emplace_back(i + 1, i, std::conj(v));
    }
  }
  SparseMatrix h(n, n);
  h.setFromTriplets(trip.begin(), trip.end());
  const std::vector<double> all = eigh(HermitianOperator::from_sparse(h));
  const WindowEigs w = sparse_window(h, -0.3, 0.25);
  std::vector<double> expect;
  std::int64_t below = 0;
  for (double v : all) {
    if (v < -0.3) ++below;
    else if (v <= 0.25) expect.push_back(v);
  }
  EXPECT_EQ(w.count_below, below);
  ASSERT_EQ(w.values.size(), expect.size());
  for (std::size_t k = 0; k < expect.size(); ++k) EXPECT_NEAR(w.values[k], expect[k], 1e-9);
  for (Eigen::Index c = 0; c < w.vectors.cols(); ++c) {
    const Eigen::VectorXcd v = w.vectors.col(c);
    EXPECT_LE((h * v - w.values[static_cast<std::size_t>(c)] * v).norm(), 1e-8);
  }
}

TEST(Eigen, TridiagonalMatchesDense) {
  Eigen::VectorXd d(6), e(5);
  d << 1, -2, 0.5, 3, -1, 0;
  e << 0.3, -1, 2, 0.1, 0.7;
  DenseMatrix m = DenseMatrix::Zero(6, 6);
  for (int i = 0; i < 6; ++i) m(i, i) = d[i];
  for (int i = 0; i < 5; ++i) m(i, i + 1) = m(i + 1, i) = e[i];
  const std::vector<double> a = tridiagonal_eigenvalues(d, e);
  const std::vector<double> b = eigh(HermitianOperator::from_dense(m));
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(a[static_cast<std::size_t>(i)], b[static_cast<std::size_t>(i)], 1e-13);
}
