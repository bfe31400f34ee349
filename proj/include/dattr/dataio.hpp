#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dattr/core.hpp"

namespace dattr::dataio {

struct ValueRange {
  double lo = -1.0;
  double hi = 1.0;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

struct IdxImages {
  std::uint32_t count = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols
};

// Big-endian IDX parsing from bytes; gzip input (1f 8b) is inflated first.
IdxImages parse_idx_images(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> parse_idx_labels(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> encode_idx_images(const IdxImages& images);
std::vector<std::uint8_t> encode_idx_labels(const std::vector<std::uint8_t>& labels);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

// Pixels mapped from [0, 255] to range; clamp bounds and a rows x cols x 1
// layout are recorded on the handle. limit keeps only the first samples.
DatasetHandle load_idx(const std::string& images_path, const std::optional<std::string>& labels_path = std::nullopt,
                       ValueRange range = {}, std::optional<std::size_t> limit = std::nullopt);

// Inverse pixel mapping used for writing datasets back as IDX.
std::uint8_t to_pixel(double value, ValueRange range);
double from_pixel(std::uint8_t p, ValueRange range);

// One sample per row, comma separated, '.' decimal point regardless of locale.
// Lines starting with '#' are skipped.
DatasetHandle load_csv(const std::string& path, const std::string& name = "csv",
                       std::optional<ValueRange> clamp = std::nullopt);
DatasetHandle parse_csv(const std::string& text, const std::string& name = "csv",
                        std::optional<ValueRange> clamp = std::nullopt);
std::vector<Vec> parse_csv_rows(const std::string& text);
std::string format_double(double v);  // shortest round-trip decimal

// n i.i.d. draws from N(center, sigma^2 I); optionally clipped to clamp.
DatasetHandle synth_gaussian(std::size_t n, std::size_t d, const Vec& center, double sigma,
                             std::optional<ValueRange> clamp, std::uint64_t seed);

// {"kind":"gaussian","n":..,"d":..,"center":[..] | number,"sigma":..,
//  "clamp":[lo,hi] (optional),"seed":..,"layout":{"height","width","channels"} (optional)}
DatasetHandle synth_from_json(const std::string& json_text);
DatasetHandle load_synth_spec(const std::string& path);

}  // namespace dattr::dataio
