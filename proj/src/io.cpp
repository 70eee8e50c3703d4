#include "ksdist/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace ksd::io {

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

template <class T>
T get(const json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("missing key '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? get<T>(j, key) : fallback;
}

Mat matrix_from(const json& j, Index rows, Index cols, const char* what) {
  std::vector<double> flat;
  if (j.is_array() && !j.empty() && j.front().is_array()) {
    for (const auto& row : j) {
      for (const auto& v : row) flat.push_back(v.get<double>());
    }
  } else {
    flat = j.get<std::vector<double>>();
  }
  if (flat.size() != rows * cols) throw DimensionError(std::string(what) + ": wrong number of entries");
  Mat M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = flat[r * cols + c];
  }
  return M;
}

std::vector<double> row_major(const Mat& M) {
  std::vector<double> out;
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    for (Eigen::Index c = 0; c < M.cols(); ++c) out.push_back(M(r, c));
  }
  return out;
}

Vec vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> vec_to(const Vec& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

Norm norm_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("norm config must be a JSON object");
  const auto kind = get<std::string>(j, "kind");
  if (kind == "p") {
    const int dim = get<int>(j, "dim");
    double p;
    if (j.contains("p") && j["p"].is_string()) {
      if (j["p"] != "inf") throw ConfigError("p must be a number or \"inf\"");
      p = std::numeric_limits<double>::infinity();
    } else {
      p = get<double>(j, "p");
    }
    return Norm::p_norm(dim, p);
  }
  if (kind == "quadratic") {
    const auto& q = j.at("Q");
    const Index count = q.is_array() && !q.empty() && q.front().is_array() ? q.size() * q.front().size() : q.size();
    const auto dim = j.contains("dim") ? get<Index>(j, "dim") : static_cast<Index>(std::llround(std::sqrt(count)));
    return Norm::quadratic(matrix_from(q, dim, dim, "Q"));
  }
  if (kind == "tabulated") {
    if (j.contains("dim") && get<int>(j, "dim") != 2) throw ConfigError("tabulated norms are 2D");
    std::vector<std::pair<double, double>> s;
    for (const auto& e : j.at("samples")) {
      if (!e.is_array() || e.size() != 2) throw ConfigError("tabulated samples are [angle, radius] pairs");
      s.emplace_back(e[0].get<double>(), e[1].get<double>());
    }
    return Norm::tabulated(std::move(s));
  }
  throw ConfigError("unknown norm kind '" + kind + "'");
}

json norm_to_json(const Norm& norm) {
  json j;
  j["dim"] = norm.dim();
  switch (norm.kind()) {
    case NormKind::p_norm:
      j["kind"] = "p";
      if (std::isinf(norm.p())) {
        j["p"] = "inf";
      } else {
        j["p"] = norm.p();
      }
      break;
    case NormKind::quadratic:
      j["kind"] = "quadratic";
      j["Q"] = row_major(norm.Q());
      break;
    case NormKind::tabulated:
      j["kind"] = "tabulated";
      j["samples"] = json::array();
      for (const auto& [a, r] : norm.samples()) j["samples"].push_back({a, r});
      break;
  }
  return j;
}

json moment_to_json(const MomentMatrix& M) {
  return json{{"dim", M.dim},
              {"A", row_major(M.A)},
              {"vol", M.vol},
              {"c", M.c},
              {"quadrature_error", M.quadrature_error},
              {"sample_count", M.sample_count}};
}

MomentMatrix moment_from_json(const json& j) {
  const auto dim = get<Index>(j, "dim");
  MomentMatrix M = moment_from_matrix(matrix_from(j.at("A"), dim, dim, "A"), get_or<double>(j, "vol", 0.0));
  M.quadrature_error = get_or<double>(j, "quadrature_error", 0.0);
  M.sample_count = get_or<std::int64_t>(j, "sample_count", 0);
  return M;
}

json space_to_json(const MMSpace& space) {
  json j;
  json points = json::array();
  for (Index i = 0; i < space.size(); ++i) {
    points.push_back(space.has_coordinates() ? json(vec_to(space.point(i))) : json::array());
  }
  j["points"] = std::move(points);
  if (space.is_graph()) {
    j["metric"] = "graph";
    json edges = json::array();
    for (const auto& e : space.edges()) edges.push_back({e.i, e.j, e.w});
    j["edges"] = std::move(edges);
  } else {
    j["metric"] = "dense";
    json rows = json::array();
    for (Index i = 0; i < space.size(); ++i) rows.push_back(space.distances_from(i));
    j["dense"] = std::move(rows);
  }
  j["measure"] = space.measures();
  std::vector<Index> boundary;
  for (Index i = 0; i < space.size(); ++i) {
    if (space.is_boundary(i)) boundary.push_back(i);
  }
  j["boundary"] = boundary;
  return j;
}

MMSpace space_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("space file must be a JSON object");
  const auto& pts = j.at("points");
  const Index n = pts.is_number() ? pts.get<Index>() : pts.size();
  const auto measure = get<std::vector<double>>(j, "measure");
  if (measure.size() != n) throw DimensionError("measure needs one entry per point");
  const auto metric = get<std::string>(j, "metric");
  MMSpace space = [&] {
    if (metric == "dense") {
      if (n > MMSpace::kMaxDensePoints) throw ConfigError("dense metric above 2000 points is rejected (size limit)");
      return MMSpace::from_dense(matrix_from(j.at("dense"), n, n, "dense"), measure);
    }
    if (metric == "graph") {
      std::vector<Edge> edges;
      for (const auto& e : j.at("edges")) {
        if (!e.is_array() || e.size() != 3) throw ConfigError("edges are [i, j, w] triples");
        edges.push_back(Edge{e[0].get<Index>(), e[1].get<Index>(), e[2].get<double>()});
      }
      return MMSpace::from_graph(n, std::move(edges), measure);
    }
    throw ConfigError("unknown metric kind '" + metric + "'");
  }();
  if (pts.is_array() && n > 0 && pts.front().is_array() && !pts.front().empty()) {
    const Index dim = pts.front().size();
    Mat X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (Index i = 0; i < n; ++i) {
      if (pts[i].size() != dim) throw DimensionError("points have inconsistent dimensions");
      for (Index k = 0; k < dim; ++k) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = pts[i][k].get<double>();
    }
    space = space.with_coordinates(std::move(X));
  }
  if (j.contains("boundary")) space = space.with_boundary(get<std::vector<Index>>(j, "boundary"));
  return space;
}

json dense_space_json(const Mat& D, const std::vector<double>& measure, const Mat& coords) {
  json j;
  json points = json::array();
  json rows = json::array();
  for (Eigen::Index i = 0; i < D.rows(); ++i) {
    points.push_back(coords.rows() == D.rows() ? json(vec_to(coords.row(i).transpose())) : json::array());
    rows.push_back(vec_to(D.row(i).transpose()));
  }
  j["points"] = std::move(points);
  j["metric"] = "dense";
  j["dense"] = std::move(rows);
  j["measure"] = measure;
  j["boundary"] = json::array();
  return j;
}

NormField norm_field_from_json(const json& j, int dim) {
  const auto type = get<std::string>(j, "type");
  if (type == "constant") {
    const Norm n = norm_from_json(j.at("norm"));
    require_dim(static_cast<Index>(dim), static_cast<Index>(n.dim()), "norm field");
    return [n](const Vec&) { return n; };
  }
  if (type == "stretch") {
    const double a = get<double>(j, "coeff");
    return [a, dim](const Vec& x) {
      Mat Q = Mat::Identity(dim, dim);
      Q(0, 0) = 1.0 + a * x[0] * x[0];
      return Norm::quadratic(Q);
    };
  }
  if (type == "rotating_ellipse") {
    if (dim != 2) throw ConfigError("rotating_ellipse fields are 2D");
    const double a = get<double>(j, "a");
    const double b = get<double>(j, "b");
    const double rate = get<double>(j, "rate");
    if (!(a > 0.0 && b > 0.0)) throw ConfigError("rotating_ellipse needs a, b > 0");
    return [a, b, rate](const Vec& x) {
      const double t = rate * x[0];
      Eigen::Matrix2d R;
      R << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
      const Eigen::Matrix2d D = Eigen::Vector2d(a, b).asDiagonal();
      const Mat Q = R * D * R.transpose();
      return Norm::quadratic(Q);
    };
  }
  throw ConfigError("unknown norm field type '" + type + "'");
}

BuilderConfig builder_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("builder config must be a JSON object");
  BuilderConfig c;
  c.kind = builder_kind_from_string(get<std::string>(j, "kind"));
  c.resolution = get<double>(j, "resolution");
  c.stencil = get_or<int>(j, "stencil", 2);
  if (j.contains("norm")) c.norm = norm_from_json(j["norm"]);
  if (c.kind == BuilderKind::cone_ray) {
    c.cone_half_angle = get_or<double>(j, "half_angle", c.cone_half_angle);
    c.cone_length = get_or<double>(j, "cone_length", c.cone_length);
    c.ray_length = get_or<double>(j, "ray_length", c.ray_length);
    return c;
  }
  c.lower = vec_from(j.at("lower"));
  c.upper = vec_from(j.at("upper"));
  if (c.kind == BuilderKind::finsler_grid) {
    c.norm_field = norm_field_from_json(j.at("field"), static_cast<int>(c.lower.size()));
    if (j.contains("field_resolution")) {
      c.field_quadrature = GridQuadrature{get<int>(j, "field_resolution"), 2};
    }
  }
  return c;
}

json sidecar_to_json(const BuiltSpace& built, const std::vector<MomentMatrix>& moments) {
  const MMSpace& s = built.space;
  json j;
  json coords = json::array();
  for (Index i = 0; i < s.size(); ++i) coords.push_back(vec_to(s.point(i)));
  j["coordinates"] = std::move(coords);
  std::vector<Index> boundary;
  for (Index i = 0; i < s.size(); ++i) {
    if (s.is_boundary(i)) boundary.push_back(i);
  }
  j["boundary"] = boundary;
  j["singular"] = s.singular();
  std::vector<int> region;
  for (Region r : built.region) region.push_back(static_cast<int>(r));
  j["region"] = region;
  j["builder"] = to_string(built.config.kind);
  j["h"] = built.h;
  j["shape"] = built.shape;
  j["anisotropy"] = built.anisotropy;
  j["diameter"] = s.diameter();
  if (built.config.norm) j["norm"] = norm_to_json(*built.config.norm);
  if (moments.size() == 1) {
    j["moment"] = moment_to_json(moments.front());
  } else if (!moments.empty()) {
    json field = json::array();
    for (const auto& M : moments) field.push_back(moment_to_json(M));
    j["moment_field"] = std::move(field);
  }
  return j;
}

MMSpace apply_sidecar(const MMSpace& space, const json& sidecar, std::vector<MomentMatrix>* moments) {
  MMSpace out = space;
  if (sidecar.contains("coordinates")) {
    const auto& c = sidecar["coordinates"];
    if (c.size() != space.size()) throw DimensionError("sidecar coordinates need one row per point");
    const Index dim = c.empty() ? 0 : c.front().size();
    out = out.with_coordinates(matrix_from(c, space.size(), dim, "coordinates"));
  }
  if (sidecar.contains("boundary")) out = out.with_boundary(get<std::vector<Index>>(sidecar, "boundary"));
  if (sidecar.contains("singular")) out = out.with_singular(get<std::vector<Index>>(sidecar, "singular"));
  if (sidecar.contains("diameter")) out = out.with_diameter_hint(get<double>(sidecar, "diameter"));
  if (moments) {
    moments->clear();
    if (sidecar.contains("moment")) moments->push_back(moment_from_json(sidecar["moment"]));
    if (sidecar.contains("moment_field")) {
      for (const auto& m : sidecar["moment_field"]) moments->push_back(moment_from_json(m));
    }
  }
  return out;
}

ScalarField field_from_json(const json& j, const MMSpace& space) {
  if (!j.is_object()) throw ConfigError("field spec must be a JSON object");
  const auto kind = get<std::string>(j, "kind");
  if (kind == "linear") {
    if (!space.has_coordinates()) throw ConfigError("linear fields need point coordinates");
    const Vec v = vec_from(j.at("v"));
    require_dim(static_cast<Index>(space.coordinates().cols()), static_cast<Index>(v.size()), "linear field");
    return linear_field(space, v);
  }
  if (kind == "distance_from") {
    const auto i = get<Index>(j, "index");
    if (i >= space.size()) throw ConfigError("distance_from index out of range");
    return distance_field(space, i);
  }
  if (kind == "table") {
    auto values = get<std::vector<double>>(j, "values");
    if (values.size() != space.size()) throw DimensionError("field table needs one value per point");
    return make_field(space, std::move(values));
  }
  if (kind == "constant") return constant_field(space, get<double>(j, "value"));
  throw ConfigError("unknown field kind '" + kind + "'");
}

std::string profile_csv(const std::vector<KSProfile>& ks, const std::vector<LipEstimate>& lip) {
  std::ostringstream out;
  out << "center,scale,ks_value,lip_value,plateau_flag\n";
  for (Index k = 0; k < ks.size(); ++k) {
    const KSProfile& p = ks[k];
    for (Index s = 0; s < p.scales.size(); ++s) {
      const double l = k < lip.size() && s < lip[k].slopes.size() ? lip[k].slopes[s] : std::nan("");
      out << p.center << ',' << fmt17(p.scales[s]) << ',' << fmt17(p.values[s]) << ',' << fmt17(l) << ','
          << (p.plateau_flag ? 1 : 0) << '\n';
    }
  }
  return out.str();
}

std::string trace_csv(const std::vector<TraceRow>& rows) {
  std::ostringstream out;
  out << "start,iteration,beta,objective,best_objective,max_constraint\n";
  for (const auto& r : rows) {
    out << r.start << ',' << r.iteration << ',' << fmt17(r.beta) << ',' << fmt17(r.objective) << ','
        << fmt17(r.best_objective) << ',' << fmt17(r.max_constraint) << '\n';
  }
  return out.str();
}

json equivalence_to_json(const EquivalenceReport& r, const std::string& a, const std::string& b) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(v > 0 ? "inf" : "-inf"); };
  return json{{"dist_a", a},
              {"dist_b", b},
              {"c1", num(r.c1)},
              {"c2", num(r.c2)},
              {"pairs", r.pairs},
              {"argmin", {r.argmin.first, r.argmin.second}},
              {"argmax", {r.argmax.first, r.argmax.second}},
              {"degenerate", r.degenerate}};
}

}  // namespace ksd::io
