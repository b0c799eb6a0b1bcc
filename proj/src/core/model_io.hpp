#pragma once

#include "core/mixture.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hdmed {

inline constexpr std::uint16_t kModelFormatVersion = 1;

/// Model blob layout (little endian):
///   "HDMM" | u16 version | u16 family | u32 components | u32 dim
/// then per component:
///   f64 weight | u32 rank | f64 alpha | f64 beta | f64 b
///   | rank f64 (a) | dim f64 (mu) | dim*rank f64 (basis, column major)
/// Serialization is canonical: round trips are byte exact.
[[nodiscard]] std::vector<unsigned char> serialize_model(const HdMedModel& model);
[[nodiscard]] HdMedModel deserialize_model(const unsigned char* data, std::size_t size);
[[nodiscard]] HdMedModel deserialize_model(const std::vector<unsigned char>& bytes);

void save_model(const HdMedModel& model, const std::string& path);
[[nodiscard]] HdMedModel load_model(const std::string& path);

}  // namespace hdmed
