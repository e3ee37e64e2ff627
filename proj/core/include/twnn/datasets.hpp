#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "twnn/tensor.hpp"

namespace twnn {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::size_t kCifarPixels = 3072;
inline constexpr std::size_t kCifarRecordSize = kCifarPixels + 1;

/// images [N x pixels] scaled to [0, 1]; labels [N] holding class indices.
struct LabeledImages {
  Tensor images;
  Tensor labels;

  std::size_t size() const { return labels.size(); }
  std::size_t pixels() const { return images.rank() == 2 ? images.cols() : 0; }
  int label(std::size_t i) const { return static_cast<int>(labels[i]); }
};

/// Big-endian IDX: magic 0x803, count, rows, cols, then bytes (images) and
/// magic 0x801, count, then bytes (labels). Throws BadMagic, TruncatedFile,
/// CountMismatch or LabelOutOfRange (label > 9).
LabeledImages load_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// 1 label byte + 3072 pixel bytes per record. Throws BadRecordSize when
/// the file size is not a multiple of 3073 and LabelOutOfRange for labels > 9.
LabeledImages load_cifar10_binary(const std::filesystem::path& path);

/// Writers for fixtures and synthetic data. Pixels are quantized to bytes.
void write_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                     std::span<const std::uint8_t> pixels, std::span<const std::uint8_t> labels, std::uint32_t rows,
                     std::uint32_t cols);
void write_cifar10_binary(const std::filesystem::path& path, std::span<const std::uint8_t> pixels,
                          std::span<const std::uint8_t> labels);

/// Class-balanced byte images: each class is a fixed random pattern of
/// blurred strokes plus per-sample noise and a random shift.
struct ByteImages {
  std::vector<std::uint8_t> pixels;
  std::vector<std::uint8_t> labels;
};
ByteImages synthesize_images(std::size_t count, std::size_t classes, std::size_t rows, std::size_t cols,
                             std::size_t channels, std::uint64_t seed);

/// First `per_class` samples of each class, interleaved by class; throws
/// InvalidArgument when a class has too few samples.
LabeledImages balanced_subset(const LabeledImages& data, std::size_t total, std::size_t classes);

}  // namespace twnn
