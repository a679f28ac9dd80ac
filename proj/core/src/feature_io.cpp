#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "retinareg/error.hpp"
#include "retinareg/features.hpp"

namespace retinareg {
namespace {

constexpr std::size_t kHeaderSize = 4 + 1 + 6 * 4;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
  return v;
}

}  // namespace

int grid_extent(int source, int stride) { return (source + stride - 1) / stride; }

DenseFeatureMap DenseFeatureMap::allocate(int source_w, int source_h, int stride,
                                          int descriptor_dim) {
  if (source_w <= 0 || source_h <= 0 || stride <= 0 || descriptor_dim < 2) {
    throw Error(ErrorCode::kInvalidArgument, "invalid feature map dimensions");
  }
  DenseFeatureMap fm;
  fm.source_w = source_w;
  fm.source_h = source_h;
  fm.stride = stride;
  fm.grid_w = grid_extent(source_w, stride);
  fm.grid_h = grid_extent(source_h, stride);
  fm.descriptor_dim = descriptor_dim;
  fm.detector_logits.assign(fm.cell_count() * 2, 0.0f);
  fm.descriptors.assign(fm.cell_count() * descriptor_dim, 0.0f);
  return fm;
}

void DenseFeatureMap::validate() const {
  if (source_w <= 0 || source_h <= 0 || stride <= 0) {
    throw Error(ErrorCode::kFormatError, "non-positive source size or stride");
  }
  if (descriptor_dim < 2) throw Error(ErrorCode::kFormatError, "descriptor_dim must be >= 2");
  if (grid_w != grid_extent(source_w, stride) || grid_h != grid_extent(source_h, stride)) {
    throw Error(ErrorCode::kFormatError, "grid dimensions must equal ceil(source / stride)");
  }
  if (detector_logits.size() != cell_count() * 2 ||
      descriptors.size() != cell_count() * descriptor_dim) {
    throw Error(ErrorCode::kFormatError, "payload length does not match grid dimensions");
  }
  for (float v : detector_logits)
    if (!std::isfinite(v)) throw Error(ErrorCode::kFormatError, "non-finite detector logit");
  for (float v : descriptors)
    if (!std::isfinite(v)) throw Error(ErrorCode::kFormatError, "non-finite descriptor value");
}

std::vector<std::uint8_t> encode_feature_map(const DenseFeatureMap& fm) {
  fm.validate();
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + 4 * (fm.detector_logits.size() + fm.descriptors.size()));
  out.insert(out.end(), std::begin(kFeatureMapMagic), std::end(kFeatureMapMagic));
  out.push_back(kFeatureMapVersion);
  for (int v : {fm.source_w, fm.source_h, fm.stride, fm.grid_w, fm.grid_h, fm.descriptor_dim}) {
    put_u32(out, static_cast<std::uint32_t>(v));
  }
  for (float f : fm.detector_logits) put_f32(out, f);
  for (float f : fm.descriptors) put_f32(out, f);
  return out;
}

DenseFeatureMap decode_feature_map(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) throw Error(ErrorCode::kFormatError, "truncated header");
  if (std::memcmp(bytes.data(), kFeatureMapMagic, 4) != 0) {
    throw Error(ErrorCode::kFormatError, "bad magic, expected DFMP");
  }
  if (bytes[4] != kFeatureMapVersion) {
    throw Error(ErrorCode::kFormatError, "unsupported version " + std::to_string(bytes[4]));
  }
  std::uint32_t h[6];
  for (int i = 0; i < 6; ++i) h[i] = get_u32(bytes, 5 + 4 * i);
  for (auto v : h) {
    if (v == 0 || v > (1u << 20)) throw Error(ErrorCode::kFormatError, "implausible header field");
  }
  DenseFeatureMap fm;
  fm.source_w = static_cast<int>(h[0]);
  fm.source_h = static_cast<int>(h[1]);
  fm.stride = static_cast<int>(h[2]);
  fm.grid_w = static_cast<int>(h[3]);
  fm.grid_h = static_cast<int>(h[4]);
  fm.descriptor_dim = static_cast<int>(h[5]);

  const std::size_t cells = static_cast<std::size_t>(fm.grid_w) * fm.grid_h;
  const std::size_t n_logits = cells * 2;
  const std::size_t n_desc = cells * fm.descriptor_dim;
  const std::size_t expected = kHeaderSize + 4 * (n_logits + n_desc);
  if (bytes.size() != expected) {
    throw Error(ErrorCode::kFormatError, "payload holds " + std::to_string(bytes.size()) +
                                             " bytes, header implies " + std::to_string(expected));
  }
  std::size_t off = kHeaderSize;
  fm.detector_logits.resize(n_logits);
  for (auto& f : fm.detector_logits) {
    f = std::bit_cast<float>(get_u32(bytes, off));
    off += 4;
  }
  fm.descriptors.resize(n_desc);
  for (auto& f : fm.descriptors) {
    f = std::bit_cast<float>(get_u32(bytes, off));
    off += 4;
  }
  fm.validate();
  return fm;
}

void save_feature_map(const DenseFeatureMap& fm, const std::string& path) {
  const auto bytes = encode_feature_map(fm);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path);
}

DenseFeatureMap load_feature_map(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::kIoError, "failed reading " + path);
  return decode_feature_map(bytes);
}

}  // namespace retinareg
