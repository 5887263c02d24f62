#include "curbx/cloud_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string_view>

#include "curbx/error.hpp"

namespace curbx {

namespace {

bool finite(const Point3& p) { return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z); }

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return std::move(buf).str();
}

// Splits text into lines, dropping a trailing '\r'.
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    fn(line_no, line);
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\t'; });
}

std::string_view next_token(std::string_view& s) {
  const auto start = s.find_first_not_of(" \t");
  if (start == std::string_view::npos) {
    s = {};
    return {};
  }
  s.remove_prefix(start);
  const auto end = s.find_first_of(" \t");
  std::string_view tok = s.substr(0, end);
  s.remove_prefix(end == std::string_view::npos ? s.size() : end);
  return tok;
}

bool parse_double(std::string_view tok, double& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc{} && ptr == tok.data() + tok.size();
}

std::string where(const std::filesystem::path& path, std::size_t line_no) {
  return path.string() + ":" + std::to_string(line_no);
}

// Parses "x y z [extra...]"; extra fields are ignored.
Point3 parse_point(std::string_view line, const std::filesystem::path& path, std::size_t line_no) {
  double v[3];
  for (double& c : v) {
    const auto tok = next_token(line);
    if (tok.empty()) throw ValidationError(where(path, line_no) + ": expected 3 numeric fields");
    if (!parse_double(tok, c)) {
      throw ValidationError(where(path, line_no) + ": malformed number '" + std::string(tok) + "'");
    }
  }
  const Point3 p{v[0], v[1], v[2]};
  if (!finite(p)) throw ValidationError(where(path, line_no) + ": non-finite coordinate");
  return p;
}

void append_number(std::string& out, double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

void append_point(std::string& out, const Point3& p) {
  append_number(out, p.x);
  out += ' ';
  append_number(out, p.y);
  out += ' ';
  append_number(out, p.z);
  out += '\n';
}

void spill(const std::string& text, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

double norm(const Point3& p) { return std::sqrt(dot(p, p)); }
double distance(const Point3& a, const Point3& b) { return norm(a - b); }

PointCloud::PointCloud(std::vector<Point3> points) : points_(std::move(points)) {
  if (points_.empty()) return;
  bounds_ = {points_.front(), points_.front()};
  for (const auto& p : points_) {
    if (!finite(p)) throw ValidationError("point cloud holds a non-finite coordinate");
    bounds_.min = {std::min(bounds_.min.x, p.x), std::min(bounds_.min.y, p.y), std::min(bounds_.min.z, p.z)};
    bounds_.max = {std::max(bounds_.max.x, p.x), std::max(bounds_.max.y, p.y), std::max(bounds_.max.z, p.z)};
  }
}

double Polyline3::length() const {
  double total = 0.0;
  for (std::size_t i = 1; i < vertices.size(); ++i) total += distance(vertices[i - 1], vertices[i]);
  return total;
}

void validate_polyline(const Polyline3& line) {
  if (line.vertices.size() < 2) {
    throw ValidationError("polyline '" + line.id + "' has fewer than 2 vertices");
  }
  for (std::size_t i = 0; i < line.vertices.size(); ++i) {
    if (!finite(line.vertices[i])) throw ValidationError("polyline '" + line.id + "' has a non-finite vertex");
    if (i > 0 && line.vertices[i] == line.vertices[i - 1]) {
      throw ValidationError("polyline '" + line.id + "' repeats vertex " + std::to_string(i));
    }
  }
}

PointCloud read_xyz(const std::filesystem::path& path) {
  const std::string text = slurp(path);
  std::vector<Point3> points;
  points.reserve(text.size() / 24);
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (is_blank(line)) return;
    const auto first = line.find_first_not_of(" \t");
    if (line[first] == '#') return;
    points.push_back(parse_point(line, path, line_no));
  });
  if (points.empty()) throw ValidationError(path.string() + ": no points");
  return PointCloud(std::move(points));
}

void write_xyz(const PointCloud& cloud, const std::filesystem::path& path) {
  if (cloud.empty()) throw ValidationError("refusing to write an empty cloud to " + path.string());
  std::string text;
  text.reserve(cloud.size() * 48);
  for (const auto& p : cloud) append_point(text, p);
  spill(text, path);
}

std::vector<Polyline3> read_polylines(const std::filesystem::path& path) {
  const std::string text = slurp(path);
  std::vector<Polyline3> lines;
  std::size_t remaining = 0;
  std::size_t header_line = 0;

  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (is_blank(line)) {
      if (remaining > 0) {
        throw ValidationError(where(path, line_no) + ": record ends before its declared vertex count");
      }
      return;
    }
    if (line.find_first_not_of(" \t") != std::string_view::npos && line[line.find_first_not_of(" \t")] == '#') {
      return;
    }
    if (remaining > 0) {
      lines.back().vertices.push_back(parse_point(line, path, line_no));
      if (--remaining == 0) validate_polyline(lines.back());
      return;
    }
    std::string_view rest = line;
    if (next_token(rest) != "POLYLINE") throw ValidationError(where(path, line_no) + ": expected POLYLINE header");
    const auto id = next_token(rest);
    const auto count_tok = next_token(rest);
    std::size_t count = 0;
    const auto [ptr, ec] = std::from_chars(count_tok.data(), count_tok.data() + count_tok.size(), count);
    if (id.empty() || ec != std::errc{} || ptr != count_tok.data() + count_tok.size() || !next_token(rest).empty()) {
      throw ValidationError(where(path, line_no) + ": malformed POLYLINE header");
    }
    if (count < 2) {
      throw ValidationError(where(path, line_no) + ": polyline '" + std::string(id) + "' has fewer than 2 vertices");
    }
    lines.push_back({std::string(id), {}, false});
    lines.back().vertices.reserve(count);
    remaining = count;
    header_line = line_no;
  });
  if (remaining > 0) {
    throw ValidationError(where(path, header_line) + ": record truncated at end of file");
  }
  return lines;
}

void write_polylines(std::span<const Polyline3> lines, const std::filesystem::path& path) {
  std::string text;
  bool first = true;
  for (const auto& line : lines) {
    validate_polyline(line);
    if (line.id.empty() || line.id.find_first_of(" \t\r\n") != std::string::npos) {
      throw ValidationError("polyline id must be a single non-empty token");
    }
    if (!first) text += '\n';
    first = false;
    text += "POLYLINE " + line.id + " " + std::to_string(line.vertices.size()) + "\n";
    for (const auto& v : line.vertices) append_point(text, v);
  }
  spill(text, path);
}

}  // namespace curbx
