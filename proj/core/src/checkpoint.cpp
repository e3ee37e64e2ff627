#include "twnn/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "twnn/error.hpp"

namespace twnn {

namespace {

constexpr std::array<char, 4> kMagic{'T', 'W', 'N', 'N'};
constexpr std::uint32_t kMaxRank = 8;

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b.data(), b.size());
}

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(b.data(), b.size());
}

void put_tensor(std::ostream& out, const Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : t.data()) put_f64(out, v);
}

std::uint64_t get_bytes(std::istream& in, int n) {
  std::array<unsigned char, 8> b{};
  in.read(reinterpret_cast<char*>(b.data()), n);
  if (in.gcount() != n) throw Error(ErrorKind::BadCheckpoint, "unexpected end of checkpoint");
  std::uint64_t v = 0;
  for (int i = n - 1; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
  return v;
}

std::uint32_t get_u32(std::istream& in) { return static_cast<std::uint32_t>(get_bytes(in, 4)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_bytes(in, 8)); }

Tensor get_tensor(std::istream& in) {
  const std::uint32_t rank = get_u32(in);
  if (rank > kMaxRank) throw Error(ErrorKind::BadCheckpoint, "tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = get_u32(in);
  if (shape_size(shape) > (std::size_t{1} << 28)) throw Error(ErrorKind::BadCheckpoint, "tensor too large");
  std::vector<double> data(shape_size(shape));
  for (double& v : data) v = get_f64(in);
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace

void write_checkpoint(std::ostream& out, const ResidualStack& stack) {
  stack.validate();
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(stack.blocks.size()));
  for (const auto& block : stack.blocks) {
    put_u32(out, static_cast<std::uint32_t>(block.width()));
    put_u32(out, block.kind == BlockKind::Net ? 1U : 0U);
    put_u32(out, block.activation == Activation::Tanh ? 1U : 0U);
    put_f64(out, block.fix.tolerance);
    put_u32(out, static_cast<std::uint32_t>(block.fix.max_iter));
    put_f64(out, block.fix.damping);
    put_u32(out, 4);
    for (const Tensor* t : {&block.params.w1, &block.params.b1, &block.params.w2, &block.params.b2}) {
      put_tensor(out, *t);
    }
  }
  put_u32(out, stack.input_projection ? 1U : 0U);
  if (stack.input_projection) put_tensor(out, *stack.input_projection);
  put_u32(out, stack.readout ? 1U : 0U);
  if (stack.readout) {
    put_tensor(out, stack.readout->weight);
    put_tensor(out, stack.readout->bias);
  }
  if (!out) throw Error(ErrorKind::Io, "checkpoint write failed");
}

void save_checkpoint(const std::filesystem::path& path, const ResidualStack& stack) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string());
  write_checkpoint(out, stack);
}

ResidualStack read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 4 || magic != kMagic) throw Error(ErrorKind::BadCheckpoint, "missing TWNN magic");
  const std::uint32_t version = get_u32(in);
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::BadCheckpoint, "unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = get_u32(in);
  ResidualStack stack;
  for (std::uint32_t i = 0; i < count; ++i) {
    EquilibriumBlock block;
    const std::uint32_t width = get_u32(in);
    block.kind = get_u32(in) == 1 ? BlockKind::Net : BlockKind::Residual;
    block.activation = get_u32(in) == 1 ? Activation::Tanh : Activation::Identity;
    block.fix.tolerance = get_f64(in);
    block.fix.max_iter = static_cast<int>(get_u32(in));
    block.fix.damping = get_f64(in);
    if (get_u32(in) != 4) throw Error(ErrorKind::BadCheckpoint, "block tensor count");
    block.params.w1 = get_tensor(in);
    block.params.b1 = get_tensor(in);
    block.params.w2 = get_tensor(in);
    block.params.b2 = get_tensor(in);
    try {
      block.validate();
    } catch (const Error& e) {
      throw Error(ErrorKind::BadCheckpoint, e.what());
    }
    if (block.width() != width) throw Error(ErrorKind::BadCheckpoint, "block width header disagrees with w1");
    stack.blocks.push_back(std::move(block));
  }
  if (get_u32(in)) stack.input_projection = get_tensor(in);
  if (get_u32(in)) {
    Readout r;
    r.weight = get_tensor(in);
    r.bias = get_tensor(in);
    stack.readout = std::move(r);
  }
  try {
    stack.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::BadCheckpoint, e.what());
  }
  return stack;
}

ResidualStack load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace twnn
