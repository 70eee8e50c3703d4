#include <doctest.h>

#include <cmath>

#include "ksdist/io.hpp"

using namespace ksd;
using io::json;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST_CASE("norm configs") {
  const Norm p = io::norm_from_json(json::parse(R"({"kind": "p", "dim": 2, "p": 4})"));
  CHECK(p.gauge(v2(1, 1)) == doctest::Approx(std::pow(2.0, 0.25)));
  const Norm q = io::norm_from_json(json::parse(R"({"kind": "quadratic", "dim": 2, "Q": [4, 0, 0, 1]})"));
  CHECK(q.gauge(v2(1, 0)) == doctest::Approx(2.0));
  const Norm inf = io::norm_from_json(json::parse(R"({"kind": "p", "dim": 2, "p": "inf"})"));
  CHECK(inf.gauge(v2(-3, 1)) == 3.0);
  CHECK(io::norm_from_json(io::norm_to_json(q)).Q() == q.Q());
  CHECK_THROWS_AS(io::norm_from_json(json::parse(R"({"kind": "ellipse"})")), ConfigError);
  CHECK_THROWS_AS(io::norm_from_json(json::parse(R"({"kind": "quadratic", "dim": 2, "Q": [1, 0, 0]})")), ConfigError);
}

TEST_CASE("space files round-trip") {
  const BuiltSpace b = build_minkowski_grid(Norm::euclidean(2), Vec::Zero(2), Vec::Ones(2), 12, 2);
  const MomentMatrix M = moment_matrix(Norm::euclidean(2));
  const json sj = io::space_to_json(b.space);
  const json side = io::sidecar_to_json(b, {M});
  std::vector<MomentMatrix> moments;
  const MMSpace back = io::apply_sidecar(io::space_from_json(json::parse(sj.dump())), json::parse(side.dump()), &moments);
  REQUIRE(back.size() == b.space.size());
  for (Index j = 0; j < back.size(); ++j) {
    CHECK(back.distance(7, j) == b.space.distance(7, j));
    CHECK(back.measure(j) == b.space.measure(j));
  }
  CHECK(back.boundary() == b.space.boundary());
  CHECK(back.coordinates() == b.space.coordinates());
  REQUIRE(moments.size() == 1);
  CHECK(moments[0].A == M.A);

  Mat D(3, 3);
  D << 0, 1, 2, 1, 0, 1.5, 2, 1.5, 0;
  const MMSpace dense = MMSpace::from_dense(D, {1, 2, 3});
  const MMSpace dback = io::space_from_json(io::space_to_json(dense));
  CHECK(dback.distance(0, 2) == 2.0);
  CHECK(dback.measure(2) == 3.0);
}

TEST_CASE("field specs") {
  const BuiltSpace b = build_minkowski_grid(Norm::euclidean(2), Vec::Zero(2), Vec::Ones(2), 8, 2);
  const ScalarField lin = io::field_from_json(json::parse(R"({"kind": "linear", "v": [1, 2]})"), b.space);
  CHECK(lin[b.nearest(v2(0.5, 0.25))] == doctest::Approx(1.0));
  const ScalarField d = io::field_from_json(json::parse(R"({"kind": "distance_from", "index": 0})"), b.space);
  CHECK(d[5] == b.space.distance(0, 5));
  const ScalarField c = io::field_from_json(json::parse(R"({"kind": "constant", "value": 2.5})"), b.space);
  CHECK(c[40] == 2.5);
  CHECK_THROWS_AS(io::field_from_json(json::parse(R"({"kind": "table", "values": [1, 2]})"), b.space), ConfigError);
  CHECK_THROWS_AS(io::field_from_json(json::parse(R"({"kind": "linear", "v": [1, 2, 3]})"), b.space), DimensionError);
}

TEST_CASE("builder configs") {
  const BuilderConfig cfg = io::builder_from_json(json::parse(
      R"({"kind": "minkowski_grid", "lower": [0, 0], "upper": [1, 1], "resolution": 32, "stencil": 2,
          "norm": {"kind": "p", "dim": 2, "p": 2}})"));
  CHECK(build(cfg).space.size() == 1089);
  const BuilderConfig cone = io::builder_from_json(json::parse(R"({"kind": "cone_ray", "resolution": 16})"));
  const BuiltSpace cb = build(cone);
  REQUIRE(cb.apex.has_value());
  CHECK(cb.space.singular() == std::vector<Index>{*cb.apex});
  CHECK_THROWS_AS(build(io::builder_from_json(json::parse(
                      R"({"kind": "minkowski_grid", "lower": [0, 0], "upper": [1, 1], "resolution": 4,
                          "norm": {"kind": "p", "dim": 2, "p": 2}})"))),
                  ConfigError);
}

TEST_CASE("CSV cells carry 17 significant digits") {
  CHECK(io::fmt17(0.1) == "0.10000000000000001");
  CHECK(std::stod(io::fmt17(M_PI)) == M_PI);
}
