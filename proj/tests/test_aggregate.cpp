#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "reference.hpp"
#include "xmodal/aggregate.hpp"
#include "xmodal/params.hpp"
#include "xmodal/util.hpp"

using namespace xmodal;

namespace {

AggParams identity_params(std::size_t d) {
  AggParams p;
  p.w_query = FeatureMatrix(d, d);
  p.w_key = FeatureMatrix(d, d);
  p.w_value = FeatureMatrix(d, d);
  for (std::size_t j = 0; j < d; ++j) {
    p.w_query.at(j, j) = 1.0;
    p.w_key.at(j, j) = 1.0;
    p.w_value.at(j, j) = 1.0;
  }
  p.fc_weight.assign(d, 1.0);
  p.fc_bias = 0.0;
  return p;
}

FeatureMatrix rows_from(const std::vector<std::vector<double>>& rows) {
  FeatureMatrix m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

}  // namespace

TEST_CASE("aggregate: singleton set passes W_v a through the read-out") {
  AggParams p = identity_params(2);
  p.fc_weight = {2.0, -1.0};
  p.fc_bias = 0.5;
  FeatureMatrix a = rows_from({{0.3, 0.4}});
  AggForward out = aggregate(a, {1}, p);
  REQUIRE(out.items.size() == 1);
  CHECK(out.attn[0] == 1.0);
  CHECK(out.aggregated[0] == doctest::Approx(0.3));
  CHECK(out.aggregated[1] == doctest::Approx(0.4));
  CHECK(out.score == doctest::Approx(2.0 * 0.3 - 0.4 + 0.5).epsilon(1e-15));
}

TEST_CASE("aggregate: identical rows attend uniformly and reproduce the row") {
  AggParams p = identity_params(3);
  FeatureMatrix a = rows_from({{1, -2, 0.5}, {1, -2, 0.5}, {1, -2, 0.5}, {1, -2, 0.5}});
  AggForward out = aggregate(a, {1, 1, 1, 1}, p);
  for (double w : out.attn) CHECK(w == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(out.aggregated[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(out.aggregated[1] == doctest::Approx(-2.0).epsilon(1e-15));
  CHECK(out.aggregated[2] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(out.score == doctest::Approx(1.0 - 2.0 + 0.5).epsilon(1e-14));
}

TEST_CASE("aggregate: zero query matrix averages the value projections") {
  AggParams p = identity_params(2);
  p.w_query = FeatureMatrix(2, 2);
  p.w_value = rows_from({{0, 1}, {1, 0}});  // swap coordinates
  FeatureMatrix a = rows_from({{2, 0}, {0, 4}});
  AggForward out = aggregate(a, {1, 1}, p);
  CHECK(out.attn[0] == 0.5);
  CHECK(out.attn[1] == 0.5);
  CHECK(out.aggregated[0] == doctest::Approx(2.0));  // mean of swapped rows
  CHECK(out.aggregated[1] == doctest::Approx(1.0));
}

TEST_CASE("aggregate: invalid rows are skipped, empty set is an error") {
  AggParams p = identity_params(2);
  FeatureMatrix a = rows_from({{5, 5}, {1, 0}, {7, -7}});
  AggForward out = aggregate(a, {0, 1, 0}, p);
  REQUIRE(out.items.size() == 1);
  CHECK(out.items[0] == 1);
  CHECK(out.aggregated[0] == doctest::Approx(1.0));

  CHECK_THROWS_WITH_AS(aggregate(a, {0, 0, 0}, p), "aggregate: empty alignment set",
                       std::runtime_error);
}

TEST_CASE("aggregate: attention is a distribution and permuting rows is harmless") {
  HeadParams hp = init_head_params(6, 9, 10.0, 0.1);
  const AggParams& p = hp.agg_words;

  std::mt19937_64 g(123);
  FeatureMatrix a(5, 6);
  for (double& v : a.data) v = rng_normal(g);
  std::vector<std::uint8_t> valid = {1, 1, 0, 1, 1};

  AggForward out = aggregate(a, valid, p);
  double sum = 0.0;
  for (double w : out.attn) {
    CHECK(w > 0.0);
    CHECK(w < 1.0);
    sum += w;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  // reverse the rows (and the mask) — the score is order independent
  FeatureMatrix rev(5, 6);
  std::vector<std::uint8_t> rvalid(5);
  for (std::size_t r = 0; r < 5; ++r) {
    std::copy(a.row(4 - r).begin(), a.row(4 - r).end(), rev.row(r).begin());
    rvalid[r] = valid[4 - r];
  }
  AggForward rout = aggregate(rev, rvalid, p);
  CHECK(rout.score == doctest::Approx(out.score).epsilon(1e-12));
  for (std::size_t j = 0; j < 6; ++j) {
    CHECK(rout.aggregated[j] == doctest::Approx(out.aggregated[j]).epsilon(1e-12));
  }
}

TEST_CASE("aggregate matches the reference oracle on random alignment sets") {
  HeadParams hp = init_head_params(8, 3, 10.0, 0.1);
  std::mt19937_64 g(456);
  for (int rep = 0; rep < 10; ++rep) {
    std::size_t n = 1 + rng_index(g, 6);
    FeatureMatrix a(n, 8);
    std::vector<std::vector<double>> vecs;
    for (std::size_t r = 0; r < n; ++r) {
      std::vector<double> row(8);
      for (double& v : row) v = rng_normal(g);
      double nr = ref::norm(row);
      for (double& v : row) v /= nr;
      std::copy(row.begin(), row.end(), a.row(r).begin());
      vecs.push_back(row);
    }
    AggForward lib = aggregate(a, std::vector<std::uint8_t>(n, 1), hp.agg_regions);
    ref::AggOut want = ref::aggregate(vecs, hp.agg_regions);
    CHECK(lib.score == doctest::Approx(want.score).epsilon(1e-12));
    for (std::size_t j = 0; j < 8; ++j) {
      CHECK(lib.aggregated[j] == doctest::Approx(want.aggregated[j]).epsilon(1e-12));
    }
  }
}
