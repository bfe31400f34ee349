#include "dattr/dataio.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <sstream>

namespace dattr::dataio {

namespace {

bool is_gzip(const std::vector<std::uint8_t>& b) { return b.size() >= 2 && b[0] == 0x1f && b[1] == 0x8b; }

std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& in) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 32) != Z_OK) throw Error(Errc::Io, "inflateInit2 failed");
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = buf;
    zs.avail_out = sizeof(buf);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw Error(Errc::TruncatedFile, "gzip stream is corrupt or truncated");
    }
    out.insert(out.end(), buf, buf + (sizeof(buf) - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw Error(Errc::TruncatedFile, "gzip stream ended early");
    }
  }
  inflateEnd(&zs);
  return out;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  if (off + 4 > b.size()) throw Error(Errc::TruncatedFile, "IDX header truncated");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

void write_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 24));
  b.push_back(static_cast<std::uint8_t>(v >> 16));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

IdxImages parse_idx_images(const std::vector<std::uint8_t>& raw) {
  const auto bytes = is_gzip(raw) ? gunzip(raw) : raw;
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxImagesMagic) {
    std::ostringstream os;
    os << "expected IDX image magic 0x00000803, got 0x" << std::hex << magic;
    throw Error(Errc::BadMagic, os.str());
  }
  IdxImages img;
  img.count = read_be32(bytes, 4);
  img.rows = read_be32(bytes, 8);
  img.cols = read_be32(bytes, 12);
  const std::size_t need = static_cast<std::size_t>(img.count) * img.rows * img.cols;
  if (bytes.size() < 16 + need) throw Error(Errc::TruncatedFile, "IDX image payload truncated");
  img.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(need));
  return img;
}

std::vector<std::uint8_t> parse_idx_labels(const std::vector<std::uint8_t>& raw) {
  const auto bytes = is_gzip(raw) ? gunzip(raw) : raw;
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxLabelsMagic) {
    std::ostringstream os;
    os << "expected IDX label magic 0x00000801, got 0x" << std::hex << magic;
    throw Error(Errc::BadMagic, os.str());
  }
  const std::uint32_t count = read_be32(bytes, 4);
  if (bytes.size() < 8 + static_cast<std::size_t>(count)) throw Error(Errc::TruncatedFile, "IDX label payload truncated");
  return {bytes.begin() + 8, bytes.begin() + 8 + count};
}

std::vector<std::uint8_t> encode_idx_images(const IdxImages& images) {
  std::vector<std::uint8_t> b;
  b.reserve(16 + images.pixels.size());
  write_be32(b, kIdxImagesMagic);
  write_be32(b, images.count);
  write_be32(b, images.rows);
  write_be32(b, images.cols);
  b.insert(b.end(), images.pixels.begin(), images.pixels.end());
  return b;
}

std::vector<std::uint8_t> encode_idx_labels(const std::vector<std::uint8_t>& labels) {
  std::vector<std::uint8_t> b;
  write_be32(b, kIdxLabelsMagic);
  write_be32(b, static_cast<std::uint32_t>(labels.size()));
  b.insert(b.end(), labels.begin(), labels.end());
  return b;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::Io, "write to '" + path + "' failed");
}

double from_pixel(std::uint8_t p, ValueRange range) { return range.lo + (range.hi - range.lo) * (p / 255.0); }

std::uint8_t to_pixel(double value, ValueRange range) {
  const double v = (value - range.lo) / (range.hi - range.lo) * 255.0;
  return static_cast<std::uint8_t>(std::clamp(std::nearbyint(v), 0.0, 255.0));
}

DatasetHandle load_idx(const std::string& images_path, const std::optional<std::string>& labels_path,
                       ValueRange range, std::optional<std::size_t> limit) {
  if (!(range.lo < range.hi)) throw Error(Errc::InvalidArgument, "value range must satisfy lo < hi");
  const IdxImages img = parse_idx_images(read_file(images_path));
  std::size_t n = img.count;
  if (limit) n = std::min(n, *limit);
  const std::size_t d = static_cast<std::size_t>(img.rows) * img.cols;
  if (n == 0 || d == 0) throw Error(Errc::DimensionMismatch, "IDX file has no samples");
  Vec samples(n * d);
  for (std::size_t i = 0; i < n * d; ++i) samples[i] = from_pixel(img.pixels[i], range);

  std::string name = images_path.substr(images_path.find_last_of('/') + 1);
  DatasetHandle ds(name, n, d, std::move(samples), range.lo, range.hi);
  ds.set_layout(ImageLayout{static_cast<int>(img.rows), static_cast<int>(img.cols), 1, range.lo, range.hi});
  if (labels_path) {
    const auto labels = parse_idx_labels(read_file(*labels_path));
    if (labels.size() != img.count) throw Error(Errc::DimensionMismatch, "label count does not match image count");
    ds.set_labels(std::vector<int>(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n)));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// CSV

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, res.ptr};
}

std::vector<Vec> parse_csv_rows(const std::string& text) {
  std::vector<Vec> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    Vec row;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t end = line.find(',', pos);
      if (end == std::string::npos) end = line.size();
      std::size_t a = pos, b = end;
      while (a < b && (line[a] == ' ' || line[a] == '\t')) ++a;
      while (b > a && (line[b - 1] == ' ' || line[b - 1] == '\t')) --b;
      double v = 0.0;
      const char* beg = line.data() + a;
      if (a < b && *beg == '+') ++beg;
      auto res = std::from_chars(beg, line.data() + b, v);
      if (a == b || res.ec != std::errc() || res.ptr != line.data() + b) {
        throw Error(Errc::InvalidArgument, "CSV line " + std::to_string(line_no) + ": bad number '" +
                                               line.substr(a, b - a) + "'");
      }
      row.push_back(v);
      pos = end + 1;
    }
    if (!rows.empty() && rows.front().size() != row.size())
      throw Error(Errc::DimensionMismatch, "CSV line " + std::to_string(line_no) + " has a different column count");
    rows.push_back(std::move(row));
  }
  return rows;
}

DatasetHandle parse_csv(const std::string& text, const std::string& name, std::optional<ValueRange> clamp) {
  const auto rows = parse_csv_rows(text);
  if (rows.empty()) throw Error(Errc::InvalidArgument, "CSV has no rows");
  const std::size_t d = rows.front().size();
  Vec samples;
  samples.reserve(rows.size() * d);
  for (const auto& r : rows) samples.insert(samples.end(), r.begin(), r.end());
  if (clamp) return DatasetHandle(name, rows.size(), d, std::move(samples), clamp->lo, clamp->hi);
  return DatasetHandle(name, rows.size(), d, std::move(samples));
}

DatasetHandle load_csv(const std::string& path, const std::string& name, std::optional<ValueRange> clamp) {
  const auto bytes = read_file(path);
  return parse_csv(std::string(bytes.begin(), bytes.end()), name, clamp);
}

// ---------------------------------------------------------------------------
// synthetic

DatasetHandle synth_gaussian(std::size_t n, std::size_t d, const Vec& center, double sigma,
                             std::optional<ValueRange> clamp, std::uint64_t seed) {
  if (n < 1 || d < 1) throw Error(Errc::InvalidArgument, "synth_gaussian needs n >= 1 and d >= 1");
  if (!(sigma >= 0.0)) throw Error(Errc::InvalidArgument, "synth_gaussian sigma must be >= 0");
  require_same_dim(center.size(), d, "synth_gaussian center");
  Rng rng(seed);
  Vec samples(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      double v = center[k] + (sigma > 0.0 ? sigma * rng.normal() : 0.0);
      if (clamp) v = std::clamp(v, clamp->lo, clamp->hi);
      samples[i * d + k] = v;
    }
  const std::string name = "gaussian-" + std::to_string(n) + "x" + std::to_string(d);
  if (clamp) return DatasetHandle(name, n, d, std::move(samples), clamp->lo, clamp->hi);
  return DatasetHandle(name, n, d, std::move(samples));
}

DatasetHandle synth_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("synthetic spec is not valid JSON: ") + e.what());
  }
  try {
    const std::string kind = j.value("kind", "gaussian");
    if (kind != "gaussian") throw Error(Errc::InvalidArgument, "unsupported synthetic kind '" + kind + "'");
    const auto n = j.at("n").get<std::size_t>();
    const auto d = j.at("d").get<std::size_t>();
    Vec center;
    if (j.at("center").is_number()) {
      center.assign(d, j.at("center").get<double>());
    } else {
      center = j.at("center").get<Vec>();
    }
    const double sigma = j.value("sigma", 1.0);
    std::optional<ValueRange> clamp;
    if (j.contains("clamp") && !j.at("clamp").is_null()) {
      const auto c = j.at("clamp").get<std::vector<double>>();
      if (c.size() != 2) throw Error(Errc::InvalidArgument, "clamp must be [lo, hi]");
      clamp = ValueRange{c[0], c[1]};
    }
    const auto seed = j.value("seed", std::uint64_t{0});
    DatasetHandle ds = synth_gaussian(n, d, center, sigma, clamp, seed);
    if (j.contains("layout")) {
      const auto& l = j.at("layout");
      ImageLayout layout{l.at("height").get<int>(), l.at("width").get<int>(), l.value("channels", 1),
                         clamp ? clamp->lo : -1.0, clamp ? clamp->hi : 1.0};
      ds.set_layout(layout);
    }
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("synthetic spec: ") + e.what());
  }
}

DatasetHandle load_synth_spec(const std::string& path) {
  const auto bytes = read_file(path);
  return synth_from_json(std::string(bytes.begin(), bytes.end()));
}

}  // namespace dattr::dataio
