#pragma once

// Binary sidecar for DescriptorSets, keyed by a hash of the encoded image
// bytes and the extractor parameters.
//
// Layout (little-endian):
//   char[4]  magic "TSDC"
//   u16      version (1)
//   u16      descriptor dimension (128)
//   u32      keypoint count N
//   N x f32[5]    keypoint x, y, scale, orientation, response
//   N x f32[128]  descriptors

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "triselect/error.hpp"
#include "triselect/rng.hpp"
#include "triselect/sift.hpp"

namespace triselect {

inline constexpr std::array<char, 4> kCacheMagic = {'T', 'S', 'D', 'C'};
inline constexpr std::uint16_t kCacheVersion = 1;

static_assert(std::endian::native == std::endian::little, "descriptor cache I/O assumes a little-endian host");

namespace detail {

template <class T>
void put(std::vector<unsigned char>& out, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

template <class T>
T take(std::span<const unsigned char> in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw Error(ErrorKind::CacheFormat, "truncated descriptor cache");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace detail

inline std::vector<unsigned char> encode_descriptor_cache(const DescriptorSet& set) {
  std::vector<unsigned char> out;
  out.reserve(12 + set.size() * (5 + kDescriptorDim) * sizeof(float));
  out.insert(out.end(), kCacheMagic.begin(), kCacheMagic.end());
  detail::put<std::uint16_t>(out, kCacheVersion);
  detail::put<std::uint16_t>(out, static_cast<std::uint16_t>(kDescriptorDim));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(set.size()));
  for (const auto& kp : set.keypoints) {
    for (double v : {kp.x, kp.y, kp.scale, kp.orientation, kp.response}) detail::put<float>(out, static_cast<float>(v));
  }
  for (const auto& d : set.descriptors) {
    for (float v : d) detail::put<float>(out, v);
  }
  return out;
}

inline DescriptorSet decode_descriptor_cache(std::span<const unsigned char> bytes, std::uint64_t pid = 0) {
  std::size_t pos = 0;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCacheMagic.data(), 4) != 0) {
    throw Error(ErrorKind::CacheFormat, "missing TSDC magic");
  }
  pos = 4;
  const auto version = detail::take<std::uint16_t>(bytes, pos);
  if (version != kCacheVersion) throw Error(ErrorKind::CacheFormat, fmt::format("unsupported cache version {}", version));
  const auto dim = detail::take<std::uint16_t>(bytes, pos);
  if (dim != kDescriptorDim) throw Error(ErrorKind::CacheFormat, fmt::format("unexpected descriptor dimension {}", dim));
  const auto count = detail::take<std::uint32_t>(bytes, pos);
  const std::size_t need = pos + static_cast<std::size_t>(count) * (5 + kDescriptorDim) * sizeof(float);
  if (bytes.size() != need) throw Error(ErrorKind::CacheFormat, "descriptor cache size does not match its header");

  DescriptorSet set;
  set.pid = pid;
  set.keypoints.resize(count);
  set.descriptors.resize(count);
  for (auto& kp : set.keypoints) {
    kp.x = detail::take<float>(bytes, pos);
    kp.y = detail::take<float>(bytes, pos);
    kp.scale = detail::take<float>(bytes, pos);
    kp.orientation = detail::take<float>(bytes, pos);
    kp.response = detail::take<float>(bytes, pos);
  }
  for (auto& d : set.descriptors) {
    for (float& v : d) v = detail::take<float>(bytes, pos);
  }
  return set;
}

/// FNV-1a over the image bytes, mixed with the extractor parameters.
inline std::uint64_t descriptor_cache_key(std::span<const unsigned char> image_bytes, const ExtractorParams& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : image_bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  const std::string params = fmt::format("{}|{}|{}|{}|{}|{}|{}", p.octave_layers, p.contrast_threshold, p.edge_threshold,
                                         p.sigma, p.input_blur, p.upsample, p.max_keypoints);
  return splitmix64(h ^ fnv1a64(params));
}

/// Directory of `<key>.tsdc` files.
class DescriptorCache {
 public:
  explicit DescriptorCache(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

  std::filesystem::path path_for(std::uint64_t key) const { return dir_ / fmt::format("{:016x}.tsdc", key); }

  /// Returns nullopt on a miss or an unreadable entry.
  std::optional<DescriptorSet> load(std::uint64_t key, std::uint64_t pid) const {
    std::ifstream in(path_for(key), std::ios::binary);
    if (!in) return std::nullopt;
    const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    try {
      return decode_descriptor_cache(bytes, pid);
    } catch (const Error&) {
      return std::nullopt;
    }
  }

  void store(std::uint64_t key, const DescriptorSet& set) const {
    const auto bytes = encode_descriptor_cache(set);
    const auto final_path = path_for(key);
    auto tmp = final_path;
    // Per-thread temp name: identical images may be stored concurrently.
    tmp += fmt::format(".{}.tmp", std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    std::filesystem::rename(tmp, final_path);
  }

 private:
  std::filesystem::path dir_;
};

}  // namespace triselect
