#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bilevel/error.hpp"
#include "bilevel/residual.hpp"
#include "bilevel/toll.hpp"
#include "support.hpp"

using namespace bilevel;
using namespace bilevel::testing;

namespace {

BilevelProblem zero_problem() {
  BilevelProblem p;
  p.D = Matrix::Zero(1, 1);
  p.d = Vector::Zero(1);
  p.A = Matrix::Zero(1, 1);
  p.b = Vector::Zero(1);
  p.objective = UpperObjective::from_affine(Vector::Zero(1), Vector::Zero(1), 0.0);
  return p;
}

BilevelProblem affine_toy() {
  BilevelProblem p;
  p.D = mat(2, 1, {-1, 1});
  p.d = vec({0.5, 2});
  p.A = mat(2, 1, {-1, 1});
  p.b = vec({0, 1});
  p.objective = UpperObjective::from_affine(vec({0.7}), vec({-1.3}), 0.25);
  return p;
}

}  // namespace

TEST_CASE("pi sums componentwise minima") {
  BilevelProblem p = zero_problem();
  p.A = Matrix::Identity(2, 2);
  p.b = vec({2, 3});
  p.D = Matrix::Zero(0, 2);
  p.d = Vector(0);
  CHECK(eval_pi(Vector::Zero(2), vec({1, 5}), p) == 4.0);
}

TEST_CASE("pi vanishes at the interval example root") {
  const IterateU u = interval_root(1.0);
  CHECK(eval_pi(u.y, u.z, interval_example()) == 0.0);
}

TEST_CASE("pi is nonnegative on feasible pairs and zero exactly under complementarity") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unif(0.0, 2.0);
  std::bernoulli_distribution coin(0.5);
  BilevelProblem p = zero_problem();
  p.A = Matrix::Identity(4, 4);
  p.D = Matrix::Zero(0, 4);
  p.d = Vector(0);
  for (int trial = 0; trial < 200; ++trial) {
    Vector slack(4), z(4);
    bool complementary = true;
    for (Index i = 0; i < 4; ++i) {
      slack(i) = unif(rng);
      z(i) = unif(rng);
      if (coin(rng)) (coin(rng) ? slack(i) : z(i)) = 0.0;
      complementary = complementary && (slack(i) == 0.0 || z(i) == 0.0);
    }
    p.b = slack;  // y = 0, so b - Ay = slack
    const double pi = eval_pi(Vector::Zero(4), z, p);
    CHECK(pi >= 0.0);
    CHECK((pi == 0.0) == complementary);
  }
}

TEST_CASE("residual vanishes at the interval example root for several alpha and t") {
  const BilevelProblem p = interval_example();
  std::mt19937_64 rng(17);
  for (double alpha : {0.5, 1.0, 3.0, 10.0, 250.0}) {
    PenaltyParams params;
    params.alpha = alpha;
    for (int k = 0; k < 5; ++k) {
      set_t(params, random_positive_t(rng));
      CHECK(residual(p, params, pack(interval_root(alpha), p.dims())).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("residual vanishes at the hand-solved box example root") {
  const BilevelProblem p = box_example();
  PenaltyParams params;
  for (double alpha : {1.0, 2.0, 7.5}) {
    params.alpha = alpha;
    CHECK(residual(p, params, pack(box_root(alpha), p.dims())).norm() <= 1e-12);
  }
}

TEST_CASE("published box example multipliers leave a nonzero residual") {
  // The published multipliers miss the y, r and s stationarity rows.
  const BilevelProblem p = box_example();
  PenaltyParams params;
  const IterateU u = box_published_point(1.0);
  const ResidualBlocks blocks = eval_residual(u, p, params);
  CHECK(blocks.packed().norm() > 1.0);
  CHECK(blocks.stat_x.norm() == 0.0);
  CHECK(blocks.stat_y.norm() > 1.0);
  CHECK(blocks.stat_r.norm() > 1.0);
  CHECK(blocks.stat_s.norm() > 1.0);
}

TEST_CASE("zero data at the origin leaves only r + s - e") {
  const BilevelProblem p = zero_problem();
  PenaltyParams params;
  const ResidualBlocks blocks = eval_residual(IterateU::zeros(p.dims()), p, params);
  const Vector packed = blocks.packed();
  const ResidualRows rows(p.dims());
  CHECK(packed.size() == 12);
  CHECK(packed(rows.eq_T) == -1.0);
  CHECK(packed.cwiseAbs().sum() == 1.0);
}

TEST_CASE("merit is half the squared residual") {
  const BilevelProblem p = zero_problem();
  PenaltyParams params;
  IterateU u = IterateU::zeros(p.dims());
  u.s << 1;
  u.lam6 << 3;
  u.x << 4;
  const Vector phi = residual(p, params, pack(u, p.dims()));
  CHECK(phi.cwiseAbs().sum() == 7.0);
  CHECK(eval_merit(u, p, params) == 12.5);
  CHECK(eval_merit(interval_root(1.0), interval_example(), params) == 0.0);
}

TEST_CASE("packed residual agrees with the block form") {
  const BilevelProblem p = box_example();
  std::mt19937_64 rng(3);
  PenaltyParams params;
  const Vector u = random_vector(rng, p.dims().total());
  CHECK(residual(p, params, u) == eval_residual(unpack(u, p.dims()), p, params).packed());
  CHECK(merit(p, params, u) == doctest::Approx(0.5 * residual(p, params, u).squaredNorm()));
}

TEST_CASE("optimality lines hold at the interval example root") {
  PenaltyParams params;
  const NocReport report = check_noc(interval_root(1.0), interval_example(), params, 1e-12);
  CHECK(report.conditions.size() == 12);
  CHECK(report.all_pass());
}

TEST_CASE("shifting lam3 breaks the r stationarity line") {
  PenaltyParams params;
  IterateU u = interval_root(1.0);
  u.lam3(0) += 1.0;
  const NocReport report = check_noc(u, interval_example(), params, 1e-9);
  CHECK_FALSE(report.at("stationarity_r").pass);
  CHECK(report.at("stationarity_r").violation == doctest::Approx(1.0));
  CHECK(report.at("stationarity_x").pass);
  CHECK_THROWS_AS(report.at("no_such_line"), std::out_of_range);
}

TEST_CASE("negative z breaks its sign condition") {
  PenaltyParams params;
  IterateU u = interval_root(1.0);
  u.z(0) = -0.5;
  const NocReport report = check_noc(u, interval_example(), params, 1e-9);
  CHECK_FALSE(report.at("z_complementarity").pass);
}

TEST_CASE("optimality lines and residual size track each other near a root") {
  // Near a strictly complementary root both measures are first order in the
  // perturbation; the constants below cover 1/t and the data norms.
  const BilevelProblem p = interval_example();
  PenaltyParams params;
  const Vector root = pack(interval_root(1.0), p.dims());
  std::mt19937_64 rng(23);
  const double tmin = *std::min_element(params.t.begin(), params.t.end());
  for (int trial = 0; trial < 200; ++trial) {
    const double size = std::pow(10.0, -4.0 - 4.0 * (trial % 5) / 4.0);
    const Vector u = root + random_vector(rng, root.size(), size);
    const double phi = residual(p, params, u).cwiseAbs().maxCoeff();
    CHECK(check_noc(unpack(u, p.dims()), p, params, 100.0 / tmin * phi).all_pass());
    double worst = 0.0;
    for (const auto& c : check_noc(unpack(u, p.dims()), p, params, 0.0).conditions) worst = std::max(worst, c.violation);
    CHECK(phi <= 100.0 * std::max(worst, std::sqrt(worst)));
  }
}

TEST_CASE("affine system matches the residual on a 1-d toy") {
  const BilevelProblem p = affine_toy();
  std::mt19937_64 rng(29);
  PenaltyParams params;
  set_t(params, random_positive_t(rng));
  params.alpha = 3.0;
  const AffineSystem sys = assemble_affine_system(p, params);
  const Dimensions dims = p.dims();
  CHECK(sys.B1.rows() == 3 * dims.n + 4 * dims.l);
  CHECK(sys.B1.cols() == 2 * dims.n + 3 * dims.l);
  CHECK(sys.B2.cols() == dims.n + dims.m + 5 * dims.l);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector u = random_vector(rng, dims.total(), 2.0);
    const Vector phi = residual(p, params, u);
    const Vector alt = sys.residual(AffineSystem::primal_part(u, dims), AffineSystem::multiplier_part(u, dims));
    CHECK((phi - alt).cwiseAbs().maxCoeff() <= 1e-13 * std::max(1.0, phi.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("affine system of zero data has only the simplex right-hand side") {
  PenaltyParams params;
  const AffineSystem sys = assemble_affine_system(zero_problem(), params);
  const ResidualRows rows(zero_problem().dims());
  Vector expected = Vector::Zero(sys.v.size());
  expected(rows.eq_T) = 1.0;
  CHECK(sys.v == expected);
}

TEST_CASE("affine system refuses a bilinear objective") {
  PenaltyParams params;
  try {
    assemble_affine_system(preset("network1").instance.problem, params);
    FAIL("expected not_affine");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::not_affine);
  }
}
