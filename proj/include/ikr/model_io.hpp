#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ikr/bytes.hpp"
#include "ikr/error.hpp"
#include "ikr/model.hpp"

namespace ikr {

// IKRM model interchange file, little-endian. Layout in docs/formats.md.
inline constexpr std::uint16_t kIkrmVersion = 1;

namespace detail {

inline void write_layer_spec(ByteWriter& w, const LayerSpec& l) {
  w.u8(static_cast<std::uint8_t>(l.kind));
  switch (l.kind) {
    case LayerKind::Conv:
      w.u32_checked(l.in_maps);
      w.u32_checked(l.out_maps);
      w.u32_checked(l.kernel_dim);
      w.u32_checked(l.stride);
      break;
    case LayerKind::MaxPool:
      w.u32_checked(l.in_maps);
      w.u32_checked(l.pool_dim);
      w.u32_checked(l.stride);
      break;
    case LayerKind::FullyConnected:
      w.u32_checked(l.in_maps);
      w.u32_checked(l.out_maps);
      break;
    case LayerKind::Softmax:
      w.u32_checked(l.out_maps);
      break;
  }
}

inline LayerSpec read_layer_spec(ByteReader& r) {
  const auto kind = r.u8();
  LayerSpec l;
  switch (kind) {
    case 0: {
      const auto in = r.u32(), out = r.u32(), k = r.u32(), stride = r.u32();
      l = LayerSpec::conv(in, out, k, stride);
      break;
    }
    case 1: {
      const auto ch = r.u32(), dim = r.u32(), stride = r.u32();
      l = LayerSpec::max_pool(ch, dim);
      l.stride = stride;
      break;
    }
    case 2: {
      const auto in = r.u32(), out = r.u32();
      l = LayerSpec::fully_connected(in, out);
      break;
    }
    case 3:
      l = LayerSpec::softmax(r.u32());
      break;
    default:
      throw IntegrityError("unknown layer kind code " + std::to_string(kind));
  }
  return l;
}

inline void write_shape(ByteWriter& w, const Shape3& s) {
  w.u32_checked(s.channels);
  w.u32_checked(s.height);
  w.u32_checked(s.width);
}

inline Shape3 read_shape(ByteReader& r) {
  Shape3 s;
  s.channels = r.u32();
  s.height = r.u32();
  s.width = r.u32();
  return s;
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_model(const NetworkModel& m) {
  validate(m);
  ByteWriter w;
  w.magic("IKRM");
  w.u16(kIkrmVersion);
  w.u32_checked(m.name.size());
  w.bytes({reinterpret_cast<const std::uint8_t*>(m.name.data()), m.name.size()});
  detail::write_shape(w, m.input);
  w.u32_checked(m.layers.size());
  for (const auto& l : m.layers) detail::write_layer_spec(w, l);
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    if (!m.layers[i].has_weights()) continue;
    w.f32s(m.weights[i].data);
    w.f32s(m.weights[i].bias);
  }
  return w.take();
}

// Parses and validates an IKRM byte stream; throws IntegrityError on any
// structural problem.
inline NetworkModel deserialize_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "IKRM");
  r.expect_magic("IKRM");
  const auto version = r.u16();
  if (version != kIkrmVersion) throw IntegrityError("IKRM: unsupported version " + std::to_string(version));
  NetworkModel m;
  const auto name_len = r.u32();
  auto name = r.bytes(name_len);
  m.name.assign(name.begin(), name.end());
  m.input = detail::read_shape(r);
  const auto n_layers = r.u32();
  if (n_layers == 0 || n_layers > 4096) throw IntegrityError("IKRM: implausible layer count " + std::to_string(n_layers));
  for (std::uint32_t i = 0; i < n_layers; ++i) m.layers.push_back(detail::read_layer_spec(r));
  try {
    (void)layer_shapes(m);
  } catch (const DimensionError& e) {
    throw IntegrityError(std::string("IKRM: inconsistent layer table: ") + e.what());
  }
  for (const auto& l : m.layers) {
    WeightTensor w = WeightTensor::zeros(l);
    if (l.has_weights()) {
      r.f32s(w.data);
      r.f32s(w.bias);
    }
    m.weights.push_back(std::move(w));
  }
  if (!r.at_end()) throw IntegrityError("IKRM: " + std::to_string(r.remaining()) + " trailing bytes");
  try {
    validate(m);
  } catch (const Error& e) {
    throw IntegrityError(std::string("IKRM: ") + e.what());
  }
  return m;
}

inline void save_model(const NetworkModel& m, const std::filesystem::path& p) {
  write_binary_file(p, serialize_model(m));
}

inline NetworkModel load_model(const std::filesystem::path& p) {
  return deserialize_model(read_binary_file(p));
}

}  // namespace ikr
