#include "volres/mesh.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace volres {

namespace {

struct TokenStream {
  std::string_view text;
  std::size_t pos = 0;
  std::size_t line = 1;

  // Skips whitespace and '#' comments, tracking the line number for errors.
  void skip_separators() {
    while (pos < text.size()) {
      const char c = text[pos];
      if (c == '\n') {
        ++line;
        ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else if (c == '#') {
        while (pos < text.size() && text[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  }

  bool next_token(std::string_view& out) {
    skip_separators();
    if (pos >= text.size()) return false;
    const std::size_t start = pos;
    while (pos < text.size() &&
           !std::isspace(static_cast<unsigned char>(text[pos])) && text[pos] != '#') {
      ++pos;
    }
    out = text.substr(start, pos - start);
    return true;
  }

  [[noreturn]] void fail(ErrorKind kind, const std::string& message) const {
    throw Error(kind, message + " at line " + std::to_string(line));
  }

  double next_double(const char* what) {
    std::string_view tok;
    if (!next_token(tok)) fail(ErrorKind::kParse, std::string("missing ") + what);
    double v = 0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) {
      fail(ErrorKind::kParse, "non-numeric token '" + std::string(tok) + "' for " + what);
    }
    return v;
  }

  std::int64_t next_int(const char* what) {
    std::string_view tok;
    if (!next_token(tok)) fail(ErrorKind::kParse, std::string("missing ") + what);
    std::int64_t v = 0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) {
      fail(ErrorKind::kParse, "non-numeric token '" + std::string(tok) + "' for " + what);
    }
    return v;
  }
};

std::int64_t parse_count(std::string_view tok, TokenStream& ts, const char* what) {
  std::int64_t v = 0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size() || v < 0) {
    ts.fail(ErrorKind::kParse, "bad " + std::string(what) + " count '" + std::string(tok) + "'");
  }
  return v;
}

}  // namespace

TriangleMesh parse_off(std::string_view text) {
  TokenStream ts{text};
  std::string_view header;
  if (!ts.next_token(header)) {
    throw Error(ErrorKind::kFormat, "empty OFF input");
  }
  std::int64_t nverts = -1;
  if (header == "OFF") {
    nverts = ts.next_int("vertex count");
  } else if (header.starts_with("OFF") && header.size() > 3) {
    // ModelNet quirk: counts fused onto the header ("OFF490 518 0").
    nverts = parse_count(header.substr(3), ts, "vertex");
  } else {
    throw Error(ErrorKind::kFormat,
                "missing OFF header, got '" + std::string(header.substr(0, 16)) + "'");
  }
  const std::int64_t nfaces = ts.next_int("face count");
  ts.next_int("edge count");  // present but unused

  if (nverts < 1) ts.fail(ErrorKind::kFormat, "vertex count must be >= 1");
  if (nfaces < 1) ts.fail(ErrorKind::kFormat, "face count must be >= 1");

  TriangleMesh mesh;
  mesh.vertices.reserve(static_cast<std::size_t>(nverts));
  for (std::int64_t i = 0; i < nverts; ++i) {
    Vec3 v;
    v[0] = ts.next_double("vertex x");
    v[1] = ts.next_double("vertex y");
    v[2] = ts.next_double("vertex z");
    mesh.vertices.push_back(v);
  }
  for (std::int64_t f = 0; f < nfaces; ++f) {
    const std::int64_t arity = ts.next_int("face arity");
    if (arity < 3) ts.fail(ErrorKind::kFormat, "face with fewer than 3 vertices");
    std::vector<std::int32_t> idx(static_cast<std::size_t>(arity));
    for (auto& i : idx) {
      const std::int64_t raw = ts.next_int("face index");
      if (raw < 0 || raw >= nverts) {
        ts.fail(ErrorKind::kIndex, "face index " + std::to_string(raw) +
                                       " out of range [0, " + std::to_string(nverts) + ")");
      }
      i = static_cast<std::int32_t>(raw);
    }
    for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
      mesh.faces.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  return mesh;
}

TriangleMesh read_off_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::kIo, "cannot open mesh file " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  try {
    return parse_off(buf.str());
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.what());
  }
}

void write_off(const TriangleMesh& mesh, std::ostream& os) {
  os << "OFF\n"
     << mesh.vertices.size() << ' ' << mesh.faces.size() << " 0\n";
  char buf[96];
  for (const Vec3& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", v[0], v[1], v[2]);
    os << buf;
  }
  for (const auto& f : mesh.faces) {
    os << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
  }
}

std::string write_off_string(const TriangleMesh& mesh) {
  std::ostringstream os;
  write_off(mesh, os);
  return os.str();
}

Aabb mesh_bounds(const TriangleMesh& mesh) {
  if (mesh.vertices.empty()) {
    throw Error(ErrorKind::kGeometry, "mesh has no vertices");
  }
  Aabb box;
  box.lo = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
            std::numeric_limits<double>::infinity()};
  box.hi = {-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
            -std::numeric_limits<double>::infinity()};
  for (const Vec3& v : mesh.vertices) {
    for (int a = 0; a < 3; ++a) {
      box.lo[a] = std::min(box.lo[a], v[a]);
      box.hi[a] = std::max(box.hi[a], v[a]);
    }
  }
  return box;
}

TriangleMesh normalize_mesh(const TriangleMesh& mesh, double grid_extent,
                            double fill_fraction) {
  const Aabb box = mesh_bounds(mesh);
  Vec3 center;
  double longest = 0.0;
  for (int a = 0; a < 3; ++a) {
    center[a] = 0.5 * (box.lo[a] + box.hi[a]);
    longest = std::max(longest, box.hi[a] - box.lo[a]);
  }
  if (longest <= 0.0) {
    throw Error(ErrorKind::kGeometry, "degenerate mesh: bounding box has zero extent");
  }
  const double scale = fill_fraction * grid_extent / longest;
  TriangleMesh out;
  out.vertices.reserve(mesh.vertices.size());
  for (const Vec3& v : mesh.vertices) {
    out.vertices.push_back({(v[0] - center[0]) * scale, (v[1] - center[1]) * scale,
                            (v[2] - center[2]) * scale});
  }
  out.faces = mesh.faces;
  return out;
}

RotationSpec RotationSpec::random(Rng& rng) {
  RotationSpec rot;
  rot.axis = rng.unit_vector();
  rot.angle = rng.uniform() * 2.0 * 3.14159265358979323846;
  return rot;
}

std::array<Vec3, 3> rotation_matrix(const RotationSpec& rot) {
  const Vec3& u = rot.axis;
  const double norm2 = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
  if (std::abs(norm2 - 1.0) > 1e-12) {
    throw Error(ErrorKind::kSpec, "rotation axis must be a unit vector, |axis|^2 = " +
                                      std::to_string(norm2));
  }
  const double s = std::sin(rot.angle);
  const double t = 1.0 - std::cos(rot.angle);
  // R = I + s*K + t*K^2 with K the cross-product matrix of the axis.
  return {Vec3{1.0 + t * (u[0] * u[0] - 1.0), -s * u[2] + t * u[0] * u[1],
               s * u[1] + t * u[0] * u[2]},
          Vec3{s * u[2] + t * u[0] * u[1], 1.0 + t * (u[1] * u[1] - 1.0),
               -s * u[0] + t * u[1] * u[2]},
          Vec3{-s * u[1] + t * u[0] * u[2], s * u[0] + t * u[1] * u[2],
               1.0 + t * (u[2] * u[2] - 1.0)}};
}

TriangleMesh rotate_mesh(const TriangleMesh& mesh, const RotationSpec& rot) {
  const auto r = rotation_matrix(rot);
  TriangleMesh out;
  out.vertices.reserve(mesh.vertices.size());
  for (const Vec3& v : mesh.vertices) {
    out.vertices.push_back({r[0][0] * v[0] + r[0][1] * v[1] + r[0][2] * v[2],
                            r[1][0] * v[0] + r[1][1] * v[1] + r[1][2] * v[2],
                            r[2][0] * v[0] + r[2][1] * v[1] + r[2][2] * v[2]});
  }
  out.faces = mesh.faces;
  return out;
}

}  // namespace volres
