#include <cmath>
#include <vector>

#include "doctest.h"
#include "dualgan/gan.hpp"

using namespace dualgan;
using namespace dualgan::gan;

namespace {

nn::Mlp zero_mlp(const std::vector<Index>& dims) {
  nn::Mlp mlp;
  mlp.dims = dims;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    mlp.weights.push_back(Matrix::Zero(dims[l + 1], dims[l]));
    mlp.biases.push_back(Vector::Zero(dims[l + 1]));
  }
  return mlp;  // sigmoid(0) = 0.5 everywhere
}

Matrix uniform_batch(Index rows, Index cols, Rng& rng) {
  Matrix X(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) X(i, j) = rng.uniform();
  return X;
}

double log_loss_real(const nn::Mlp& d, const Matrix& X) {
  const Matrix p = nn::forward(d, X);
  return -p.col(0).array().log().sum();
}

double log_loss_fake(const nn::Mlp& d, const Matrix& X) {
  const Matrix p = nn::forward(d, X);
  return -(1.0 - p.col(0).array()).log().sum();
}

}  // namespace

TEST_CASE("sample_noise fills the unit cube deterministically") {
  Rng a(3), b(3);
  const Matrix na = sample_noise(a, 20, 4);
  const Matrix nb = sample_noise(b, 20, 4);
  CHECK(na == nb);
  CHECK(na.minCoeff() >= 0.0);
  CHECK(na.maxCoeff() < 1.0);
}

TEST_CASE("partition_by_output slices sorted indices evenly") {
  SUBCASE("outputs 0.1..1.0, k=5") {
    Vector out(10);
    for (Index i = 0; i < 10; ++i) out(i) = 0.1 * static_cast<double>(i + 1);
    const SubsetAssignment a = partition_by_output(out, 5);
    REQUIRE(a.subsets.size() == 5);
    for (Index j = 0; j < 5; ++j) {
      REQUIRE(a.subsets[static_cast<std::size_t>(j)].size() == 2);
      CHECK(a.subsets[static_cast<std::size_t>(j)][0] == 2 * j);
      CHECK(a.subsets[static_cast<std::size_t>(j)][1] == 2 * j + 1);
    }
  }
  SUBCASE("ties break by index") {
    Vector out = Vector::Constant(4, 0.5);
    const SubsetAssignment a = partition_by_output(out, 2);
    CHECK(a.subsets[0] == std::vector<Index>{0, 1});
    CHECK(a.subsets[1] == std::vector<Index>{2, 3});
  }
  SUBCASE("n=7, k=5 gives sizes 2,2,1,1,1") {
    Vector out(7);
    for (Index i = 0; i < 7; ++i) out(i) = static_cast<double>(i);
    const SubsetAssignment a = partition_by_output(out, 5);
    std::vector<std::size_t> sizes;
    for (const auto& s : a.subsets) sizes.push_back(s.size());
    CHECK(sizes == std::vector<std::size_t>{2, 2, 1, 1, 1});
  }
  SUBCASE("n < k is a configuration error") {
    Vector out(2);
    out << 0.1, 0.2;
    CHECK_THROWS_AS(partition_by_output(out, 3), ConfigError);
  }
}

TEST_CASE("representative_statistic is the clamped minimum") {
  Vector a(3);
  a << 0.3, 0.7, 0.5;
  CHECK(representative_statistic(a) == doctest::Approx(0.3));
  Vector b(1);
  b << 0.9;
  CHECK(representative_statistic(b) == doctest::Approx(0.9));
  Vector c(2);
  c << 0.0, 0.4;
  CHECK(representative_statistic(c) == doctest::Approx(kProbEps));
  CHECK_THROWS_AS(representative_statistic(Vector()), DegenerateInputError);
}

TEST_CASE("mo_discriminator_step") {
  Rng rng(8);
  SUBCASE("lr=0 returns the loss and leaves parameters alone") {
    nn::Mlp d = nn::init_mlp({2, 4, 1}, nn::InitScheme::kVarianceScaling, rng);
    const nn::Mlp before = d;
    nn::AdamState adam = nn::make_adam(d, 0.0);
    const Matrix real = uniform_batch(6, 2, rng);
    const std::vector<Matrix> fakes = {uniform_batch(6, 2, rng)};
    const double loss = mo_discriminator_step(d, real, fakes, adam);
    CHECK(loss > 0.0);
    for (std::size_t l = 0; l < d.layer_count(); ++l) CHECK(d.weights[l] == before.weights[l]);
  }
  SUBCASE("flat discriminator gives 2n log 2") {
    nn::Mlp d = zero_mlp({2, 3, 1});
    nn::AdamState adam = nn::make_adam(d, 0.0);
    const Index n = 5;
    const Matrix real = uniform_batch(n, 2, rng);
    const std::vector<Matrix> fakes = {uniform_batch(n, 2, rng)};
    const double loss = mo_discriminator_step(d, real, fakes, adam);
    CHECK(loss == doctest::Approx(2.0 * n * std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("loss equals an independent formula evaluation") {
    nn::Mlp d = nn::init_mlp({3, 6, 1}, nn::InitScheme::kVarianceScaling, rng);
    nn::AdamState adam = nn::make_adam(d, 1e-3);
    const Matrix real = uniform_batch(7, 3, rng);
    const std::vector<Matrix> fakes = {uniform_batch(4, 3, rng), uniform_batch(5, 3, rng)};
    const nn::Mlp frozen = d;
    const double loss = mo_discriminator_step(d, real, fakes, adam);
    const double expect = log_loss_real(frozen, real) + log_loss_fake(frozen, fakes[0]) +
                          log_loss_fake(frozen, fakes[1]);
    CHECK(loss == doctest::Approx(expect).epsilon(1e-9));
  }
  SUBCASE("50 steps shrink the loss on a fixed batch") {
    nn::Mlp d = nn::init_mlp({2, 8, 1}, nn::InitScheme::kVarianceScaling, rng);
    nn::AdamState adam = nn::make_adam(d, 1e-2);
    Matrix real(4, 2), fake(4, 2);
    real << 0.1, 0.1, 0.15, 0.1, 0.1, 0.15, 0.12, 0.12;
    fake << 0.9, 0.9, 0.85, 0.9, 0.9, 0.85, 0.88, 0.88;
    const std::vector<Matrix> fakes = {fake};
    const double start = mo_discriminator_step(d, real, fakes, adam);
    double last = start;
    for (int i = 0; i < 49; ++i) last = mo_discriminator_step(d, real, fakes, adam);
    CHECK(last < start);
  }
}

TEST_CASE("mo_generator_step") {
  Rng rng(14);
  nn::Mlp d = nn::init_mlp({2, 6, 1}, nn::InitScheme::kVarianceScaling, rng);
  nn::Mlp g = nn::init_mlp({2, 2, 2}, nn::InitScheme::kOrthogonal, rng);
  const Matrix noise = sample_noise(rng, 8, 2);
  SUBCASE("T=1 reduces to -sum log D(G(z))") {
    nn::AdamState adam = nn::make_adam(g, 0.0);
    const double loss = mo_generator_step(g, d, noise, 1.0 - kProbEps, adam);
    const double expect = log_loss_real(d, nn::forward(g, noise));
    CHECK(loss == doctest::Approx(expect).epsilon(1e-6));
  }
  SUBCASE("T=0.5 mixes both log terms evenly") {
    nn::AdamState adam = nn::make_adam(g, 0.0);
    const double loss = mo_generator_step(g, d, noise, 0.5, adam);
    const Matrix fake = nn::forward(g, noise);
    const double expect = 0.5 * log_loss_real(d, fake) + 0.5 * log_loss_fake(d, fake);
    CHECK(loss == doctest::Approx(expect).epsilon(1e-9));
  }
  SUBCASE("lr=0 leaves the generator alone; D is never touched") {
    const nn::Mlp g_before = g, d_before = d;
    nn::AdamState adam = nn::make_adam(g, 0.0);
    mo_generator_step(g, d, noise, 0.5, adam);
    for (std::size_t l = 0; l < g.layer_count(); ++l) CHECK(g.weights[l] == g_before.weights[l]);
    nn::AdamState adam2 = nn::make_adam(g, 1e-2);
    mo_generator_step(g, d, noise, 0.5, adam2);
    for (std::size_t l = 0; l < d.layer_count(); ++l) CHECK(d.weights[l] == d_before.weights[l]);
  }
}

TEST_CASE("mgan_step") {
  Rng rng(21);
  SUBCASE("flat discriminator d_loss is (m_real+m_fake) log 2") {
    nn::Mlp d = zero_mlp({1, 2, 1});
    nn::Mlp g = nn::init_mlp({1, 1, 1}, nn::InitScheme::kOrthogonal, rng);
    nn::AdamState ga = nn::make_adam(g, 0.0), da = nn::make_adam(d, 0.0);
    const Matrix real = uniform_batch(6, 1, rng);
    const Matrix noise = sample_noise(rng, 4, 1);
    const auto [d_loss, g_loss] = mgan_step(g, d, real, noise, ga, da);
    CHECK(d_loss == doctest::Approx(10.0 * std::log(2.0)).epsilon(1e-12));
    // With lr=0 the discriminator is unchanged, so the generator loss is the
    // plain non-saturating form through the same flat D.
    CHECK(g_loss == doctest::Approx(4.0 * std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("lr=0 on both leaves all parameters unchanged") {
    nn::Mlp d = nn::init_mlp({2, 4, 1}, nn::InitScheme::kVarianceScaling, rng);
    nn::Mlp g = nn::init_mlp({2, 2, 2}, nn::InitScheme::kOrthogonal, rng);
    const nn::Mlp db = d, gb = g;
    nn::AdamState ga = nn::make_adam(g, 0.0), da = nn::make_adam(d, 0.0);
    mgan_step(g, d, uniform_batch(5, 2, rng), sample_noise(rng, 5, 2), ga, da);
    for (std::size_t l = 0; l < d.layer_count(); ++l) CHECK(d.weights[l] == db.weights[l]);
    for (std::size_t l = 0; l < g.layer_count(); ++l) CHECK(g.weights[l] == gb.weights[l]);
  }
  SUBCASE("losses match independent re-evaluation") {
    nn::Mlp d = nn::init_mlp({1, 4, 1}, nn::InitScheme::kVarianceScaling, rng);
    nn::Mlp g = nn::init_mlp({1, 1, 1}, nn::InitScheme::kOrthogonal, rng);
    // Zero D lr so the generator loss is evaluable against the same D.
    nn::AdamState ga = nn::make_adam(g, 1e-3), da = nn::make_adam(d, 0.0);
    const Matrix real = uniform_batch(5, 1, rng);
    const Matrix noise = sample_noise(rng, 3, 1);
    const nn::Mlp d_frozen = d, g_frozen = g;
    const auto [d_loss, g_loss] = mgan_step(g, d, real, noise, ga, da);
    const Matrix fake = nn::forward(g_frozen, noise);
    const double d_expect = log_loss_real(d_frozen, real) + log_loss_fake(d_frozen, fake);
    const double g_expect = log_loss_real(d_frozen, fake);
    CHECK(d_loss == doctest::Approx(d_expect).epsilon(1e-9));
    CHECK(g_loss == doctest::Approx(g_expect).epsilon(1e-9));
  }
  SUBCASE("alternating steps pull G(z) toward a point mass at 0.7") {
    Rng init(2);
    nn::Mlp g = nn::init_mlp({1, 1, 1}, nn::InitScheme::kOrthogonal, init);
    nn::Mlp d = nn::init_mlp({1, 8, 1}, nn::InitScheme::kVarianceScaling, init);
    nn::AdamState ga = nn::make_adam(g, 5e-3), da = nn::make_adam(d, 5e-3);
    const Matrix real = Matrix::Constant(16, 1, 0.7);
    // The pair orbits the equilibrium rather than settling on it, so judge
    // convergence by the time average of the generated mean over the tail.
    double tail_sum = 0.0;
    int tail_count = 0;
    for (int step = 0; step < 600; ++step) {
      const Matrix noise = sample_noise(init, 16, 1);
      mgan_step(g, d, real, noise, ga, da);
      if (step >= 400) {
        tail_sum += nn::forward(g, sample_noise(init, 64, 1)).col(0).mean();
        ++tail_count;
      }
    }
    CHECK(std::abs(tail_sum / tail_count - 0.7) < 0.1);
  }
}

TEST_CASE("umo_budgets splits by subset dispersion") {
  SUBCASE("identical clouds get equal budgets up to rounding") {
    Matrix X(4, 1);
    X << 0.2, 0.4, 0.6, 0.8;
    SubsetAssignment a;
    a.subsets = {{0, 1}, {2, 3}};
    const Budget b = umo_budgets(a, X, 21);
    CHECK(b.total() == 21);
    CHECK(std::abs(b.per_generator_counts[0] - b.per_generator_counts[1]) <= 1);
  }
  SUBCASE("dispersions 0.1 and 0.3 with N=40 give 10 and 30") {
    // Pairs symmetric about their centroid: mean distance = half the spread.
    Matrix X(4, 1);
    X << 0.0, 0.2, 0.5, 1.1;
    SubsetAssignment a;
    a.subsets = {{0, 1}, {2, 3}};
    const Budget b = umo_budgets(a, X, 40);
    CHECK(b.per_generator_counts == std::vector<Index>{10, 30});
  }
  SUBCASE("single subset takes everything") {
    Matrix X(3, 1);
    X << 0.1, 0.5, 0.9;
    SubsetAssignment a;
    a.subsets = {{0, 1, 2}};
    const Budget b = umo_budgets(a, X, 17);
    CHECK(b.per_generator_counts == std::vector<Index>{17});
  }
}

TEST_CASE("rcc_budgets spreads the total with remainder to low ids") {
  CHECK(rcc_budgets(4, 100).per_generator_counts == std::vector<Index>{25, 25, 25, 25});
  CHECK(rcc_budgets(3, 100).per_generator_counts == std::vector<Index>{34, 33, 33});
  CHECK(rcc_budgets(1, 42).per_generator_counts == std::vector<Index>{42});
}

TEST_CASE("generate_pool tags rows by source generator") {
  Rng rng(30);
  std::vector<nn::Mlp> gens;
  gens.push_back(nn::init_mlp({2, 2, 2}, nn::InitScheme::kOrthogonal, rng));
  gens.push_back(nn::init_mlp({2, 2, 2}, nn::InitScheme::kOrthogonal, rng));
  SUBCASE("zero budgets give an empty pool") {
    Budget b;
    b.per_generator_counts = {0, 0};
    const PotentialOutlierPool pool = generate_pool(gens, b, Role::kUnlabeled, rng);
    CHECK(pool.samples.rows() == 0);
    CHECK(pool.tags.empty());
  }
  SUBCASE("budgets [2,3] emit tagged rows in order, inside [0,1]") {
    Budget b;
    b.per_generator_counts = {2, 3};
    const PotentialOutlierPool pool = generate_pool(gens, b, Role::kUnlabeled, rng);
    REQUIRE(pool.samples.rows() == 5);
    REQUIRE(pool.tags.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(pool.tags[i].role == Role::kUnlabeled);
      CHECK(pool.tags[i].generator_id == (i < 2 ? 0 : 1));
    }
    CHECK(pool.samples.minCoeff() >= 0.0);
    CHECK(pool.samples.maxCoeff() <= 1.0);
  }
}

TEST_CASE("overall_discriminator_step") {
  Rng rng(55);
  SUBCASE("empty anomaly and pool batches reduce to the real term") {
    nn::Mlp d = nn::init_mlp({2, 4, 1}, nn::InitScheme::kVarianceScaling, rng);
    nn::AdamState adam = nn::make_adam(d, 0.0);
    const Matrix unlabeled = uniform_batch(6, 2, rng);
    const Matrix empty(0, 2);
    const double loss = overall_discriminator_step(d, unlabeled, empty, empty, adam);
    CHECK(loss == doctest::Approx(log_loss_real(d, unlabeled)).epsilon(1e-9));
  }
  SUBCASE("flat discriminator gives rows * log 2") {
    nn::Mlp d = zero_mlp({2, 3, 1});
    nn::AdamState adam = nn::make_adam(d, 0.0);
    const Matrix unlabeled = uniform_batch(4, 2, rng);
    const Matrix anomalies = uniform_batch(2, 2, rng);
    const Matrix pool = uniform_batch(3, 2, rng);
    const double loss = overall_discriminator_step(d, unlabeled, anomalies, pool, adam);
    CHECK(loss == doctest::Approx(9.0 * std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("loss equals an independent evaluation of the three-term sum") {
    nn::Mlp d = nn::init_mlp({3, 5, 1}, nn::InitScheme::kVarianceScaling, rng);
    nn::AdamState adam = nn::make_adam(d, 1e-3);
    const Matrix unlabeled = uniform_batch(8, 3, rng);
    const Matrix anomalies = uniform_batch(3, 3, rng);
    const Matrix pool = uniform_batch(5, 3, rng);
    const nn::Mlp frozen = d;
    const double loss = overall_discriminator_step(d, unlabeled, anomalies, pool, adam);
    const double expect = log_loss_real(frozen, unlabeled) + log_loss_fake(frozen, anomalies) +
                          log_loss_fake(frozen, pool);
    CHECK(loss == doctest::Approx(expect).epsilon(1e-9));
  }
}
