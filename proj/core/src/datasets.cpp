#include "twnn/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>

#include "twnn/error.hpp"
#include "twnn/rng.hpp"

namespace twnn {

namespace {

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_all(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at, const std::filesystem::path& path) {
  if (b.size() < at + 4) throw Error(ErrorKind::TruncatedFile, path.string() + ": header cut short");
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>((v >> s) & 0xFF));
}

constexpr int kMaxLabel = 9;

}  // namespace

LabeledImages load_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const auto img = read_all(images_path);
  const auto lab = read_all(labels_path);

  if (be32(img, 0, images_path) != kIdxImageMagic) {
    throw Error(ErrorKind::BadMagic, images_path.string() + ": not an IDX image file");
  }
  if (be32(lab, 0, labels_path) != kIdxLabelMagic) {
    throw Error(ErrorKind::BadMagic, labels_path.string() + ": not an IDX label file");
  }
  const std::size_t n = be32(img, 4, images_path);
  const std::size_t rows = be32(img, 8, images_path);
  const std::size_t cols = be32(img, 12, images_path);
  const std::size_t n_labels = be32(lab, 4, labels_path);
  const std::size_t pixels = rows * cols;

  if (img.size() < 16 + n * pixels) throw Error(ErrorKind::TruncatedFile, images_path.string() + ": pixel data cut short");
  if (lab.size() < 8 + n_labels) throw Error(ErrorKind::TruncatedFile, labels_path.string() + ": label data cut short");
  if (n != n_labels) {
    throw Error(ErrorKind::CountMismatch,
                std::to_string(n) + " images but " + std::to_string(n_labels) + " labels");
  }

  LabeledImages out{Tensor::zeros({n, pixels}), Tensor::zeros({n})};
  for (std::size_t i = 0; i < n * pixels; ++i) out.images[i] = img[16 + i] / 255.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int l = lab[8 + i];
    if (l > kMaxLabel) throw Error(ErrorKind::LabelOutOfRange, "label " + std::to_string(l) + " at " + std::to_string(i));
    out.labels[i] = l;
  }
  return out;
}

LabeledImages load_cifar10_binary(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  if (bytes.size() % kCifarRecordSize != 0) {
    throw Error(ErrorKind::BadRecordSize, path.string() + ": " + std::to_string(bytes.size()) +
                                              " bytes is not a multiple of " + std::to_string(kCifarRecordSize));
  }
  const std::size_t n = bytes.size() / kCifarRecordSize;
  LabeledImages out{Tensor::zeros({n, kCifarPixels}), Tensor::zeros({n})};
  for (std::size_t r = 0; r < n; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecordSize;
    if (rec[0] > kMaxLabel) {
      throw Error(ErrorKind::LabelOutOfRange, "label " + std::to_string(rec[0]) + " in record " + std::to_string(r));
    }
    out.labels[r] = rec[0];
    for (std::size_t p = 0; p < kCifarPixels; ++p) out.images.at(r, p) = rec[1 + p] / 255.0;
  }
  return out;
}

void write_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                     std::span<const std::uint8_t> pixels, std::span<const std::uint8_t> labels, std::uint32_t rows,
                     std::uint32_t cols) {
  const std::size_t per = std::size_t{rows} * cols;
  if (per == 0 || pixels.size() != labels.size() * per) {
    throw Error(ErrorKind::CountMismatch, "pixel buffer does not match label count");
  }
  std::vector<std::uint8_t> img;
  put_be32(img, kIdxImageMagic);
  put_be32(img, static_cast<std::uint32_t>(labels.size()));
  put_be32(img, rows);
  put_be32(img, cols);
  img.insert(img.end(), pixels.begin(), pixels.end());
  std::vector<std::uint8_t> lab;
  put_be32(lab, kIdxLabelMagic);
  put_be32(lab, static_cast<std::uint32_t>(labels.size()));
  lab.insert(lab.end(), labels.begin(), labels.end());
  write_all(images_path, img);
  write_all(labels_path, lab);
}

void write_cifar10_binary(const std::filesystem::path& path, std::span<const std::uint8_t> pixels,
                          std::span<const std::uint8_t> labels) {
  if (pixels.size() != labels.size() * kCifarPixels) {
    throw Error(ErrorKind::CountMismatch, "pixel buffer does not match label count");
  }
  std::vector<std::uint8_t> bytes;
  bytes.reserve(labels.size() * kCifarRecordSize);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    bytes.push_back(labels[r]);
    const auto rec = pixels.subspan(r * kCifarPixels, kCifarPixels);
    bytes.insert(bytes.end(), rec.begin(), rec.end());
  }
  write_all(path, bytes);
}

ByteImages synthesize_images(std::size_t count, std::size_t classes, std::size_t rows, std::size_t cols,
                             std::size_t channels, std::uint64_t seed) {
  if (classes == 0 || classes > 256 || rows == 0 || cols == 0 || channels == 0) {
    throw Error(ErrorKind::InvalidArgument, "bad synthetic image geometry");
  }
  Rng rng(seed);
  const std::size_t plane = rows * cols;
  // Per class: a few random Gaussian blobs per channel.
  std::vector<std::vector<double>> prototypes(classes, std::vector<double>(plane * channels, 0.0));
  for (auto& proto : prototypes) {
    for (std::size_t ch = 0; ch < channels; ++ch) {
      for (int blob = 0; blob < 4; ++blob) {
        const double cy = rng.uniform(0.2, 0.8) * static_cast<double>(rows);
        const double cx = rng.uniform(0.2, 0.8) * static_cast<double>(cols);
        const double radius = rng.uniform(0.08, 0.2) * static_cast<double>(std::min(rows, cols));
        for (std::size_t y = 0; y < rows; ++y) {
          for (std::size_t x = 0; x < cols; ++x) {
            const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
            proto[ch * plane + y * cols + x] += std::exp(-(dx * dx + dy * dy) / (2.0 * radius * radius));
          }
        }
      }
    }
  }

  ByteImages out;
  out.pixels.resize(count * plane * channels);
  out.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t c = i % classes;
    out.labels[i] = static_cast<std::uint8_t>(c);
    const auto sy = static_cast<long>(rng.below(3)) - 1;
    const auto sx = static_cast<long>(rng.below(3)) - 1;
    for (std::size_t ch = 0; ch < channels; ++ch) {
      for (std::size_t y = 0; y < rows; ++y) {
        for (std::size_t x = 0; x < cols; ++x) {
          const long yy = std::clamp<long>(static_cast<long>(y) + sy, 0, static_cast<long>(rows) - 1);
          const long xx = std::clamp<long>(static_cast<long>(x) + sx, 0, static_cast<long>(cols) - 1);
          const double v = prototypes[c][ch * plane + static_cast<std::size_t>(yy) * cols + static_cast<std::size_t>(xx)] +
                           rng.uniform(-0.35, 0.35);
          out.pixels[i * plane * channels + ch * plane + y * cols + x] =
              static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
        }
      }
    }
  }
  return out;
}

LabeledImages balanced_subset(const LabeledImages& data, std::size_t total, std::size_t classes) {
  if (classes == 0 || total % classes != 0) {
    throw Error(ErrorKind::InvalidArgument, "subset_size must be a multiple of the class count");
  }
  const std::size_t per_class = total / classes;
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto l = static_cast<std::size_t>(data.label(i));
    if (l < classes && by_class[l].size() < per_class) by_class[l].push_back(i);
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (by_class[c].size() < per_class) {
      throw Error(ErrorKind::InvalidArgument, "class " + std::to_string(c) + " has only " +
                                                  std::to_string(by_class[c].size()) + " samples");
    }
  }
  const std::size_t px = data.pixels();
  LabeledImages out{Tensor::zeros({total, px}), Tensor::zeros({total})};
  std::size_t row = 0;
  for (std::size_t k = 0; k < per_class; ++k) {
    for (std::size_t c = 0; c < classes; ++c, ++row) {
      const std::size_t src = by_class[c][k];
      for (std::size_t p = 0; p < px; ++p) out.images.at(row, p) = data.images.at(src, p);
      out.labels[row] = static_cast<double>(c);
    }
  }
  return out;
}

}  // namespace twnn
