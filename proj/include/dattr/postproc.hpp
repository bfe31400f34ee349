#pragma once

// Image post-processes applied to flat, channel-interleaved images. Every
// transform is a pure function of (image, parameters, seed).

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

#include "dattr/core.hpp"

namespace dattr::postproc {

enum class Kind { Identity, Blur, Crop, Noise, Jpeg, Combination };

std::string_view kind_name(Kind kind);
Kind parse_kind(std::string_view name);

inline constexpr std::array<double, 5> kBlurSigmas = {1.0 / 3, 3.0 / 3, 5.0 / 3, 7.0 / 3, 9.0 / 3};
inline constexpr double kCropMin = 0.8;
inline constexpr double kNoiseMax = 0.3;
inline constexpr int kDefaultJpegQuality = 80;

// Separable Gaussian, half-width ceil(3 sigma), reflect padding.
Vec blur(ConstVecView image, const ImageLayout& layout, double sigma);

// Normalized 1-D kernel of length 2 * ceil(3 sigma) + 1.
Vec gaussian_kernel(double sigma);

// Center crop to floor(ratio H) x floor(ratio W), bilinear resize back.
Vec crop_resize(ConstVecView image, const ImageLayout& layout, double ratio);

// Bilinear resize with corner-aligned sampling.
Vec resize_bilinear(ConstVecView image, int src_h, int src_w, int channels, int dst_h, int dst_w);

// i.i.d. N(0, sigma^2) per component, no clipping.
Vec add_noise(ConstVecView image, const ImageLayout& layout, double sigma, std::uint64_t seed);

// Baseline JPEG quantization round trip (8x8 DCT, standard tables, 4:4:4).
Vec jpeg(ConstVecView image, const ImageLayout& layout, int quality);

// Standard table (natural row-major order) scaled to quality; entries in [1, 255].
std::array<int, 64> quant_table(int quality, bool chroma);

// Maps [lo, hi] to [0, 255] with round-half-to-even and saturation.
int to_gray_level(double value, double lo, double hi);
double from_gray_level(double level, double lo, double hi);

struct CombinationPlan {
  bool blur = false;
  double blur_sigma = 0.0;
  bool crop = false;
  double crop_ratio = 1.0;
  bool noise = false;
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;
  bool jpeg = false;
  int jpeg_quality = kDefaultJpegQuality;
};

// Each stage independently with probability 1/2, parameters drawn from seed.
CombinationPlan plan_combination(std::uint64_t seed, int jpeg_quality = kDefaultJpegQuality);
Vec apply_plan(ConstVecView image, const ImageLayout& layout, const CombinationPlan& plan);
Vec combination(ConstVecView image, const ImageLayout& layout, std::uint64_t seed,
                int jpeg_quality = kDefaultJpegQuality);

struct PostProcessSpec {
  Kind kind = Kind::Identity;
  std::optional<double> sigma;  // Blur / Noise; drawn per sample when unset
  std::optional<double> ratio;  // Crop; drawn per sample when unset
  int quality = kDefaultJpegQuality;
  std::uint64_t seed = 0;

  void validate() const;
  bool is_identity() const { return kind == Kind::Identity; }

  // Applies the attack to one image; sample_index selects the random stream.
  Vec apply(ConstVecView image, const ImageLayout& layout, std::uint64_t sample_index) const;
  void apply_in_place(VecView image, const ImageLayout& layout, std::uint64_t sample_index) const;

  std::string describe() const;
};

// Plain-text PGM (P2, one channel) or PPM (P3, three channels).
void write_pnm(std::ostream& out, ConstVecView image, const ImageLayout& layout);

}  // namespace dattr::postproc
