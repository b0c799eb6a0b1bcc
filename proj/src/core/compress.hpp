#pragma once

#include "core/dictionary.hpp"
#include "core/mixture.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hdmed {

inline constexpr std::uint16_t kCompressedFormatVersion = 1;

/// One cluster of the divide-and-conquer layout: the rows routed to a
/// component, kept in ascending original order, stored as reduced
/// coordinates next to their generating parameters.
struct ClusterPartition {
  std::vector<std::uint64_t> indices;  // original row ids, strictly ascending
  MatrixXd reduced;                    // n_k x d_k latent coordinates
  MatrixXd params;                     // n_k x L

  [[nodiscard]] Index size() const { return reduced.rows(); }
};

struct CompressedDictionary {
  HdMedModel model;
  std::vector<ClusterPartition> clusters;
  Index param_dim = 0;
  ScalarType dtype = ScalarType::F32;  // on-disk scalar for reduced/params
  std::uint64_t total_rows = 0;
  bool normalized = false;  // signals were scaled to unit norm before routing

  [[nodiscard]] std::uint64_t stored_values() const;  // sum over k of n_k d_k
  [[nodiscard]] double compression_ratio() const;     // N M / stored_values
  void validate() const;
};

/// Routes every stored signal to its most responsible component and keeps
/// only the latent coordinates there. Row order inside each cluster follows
/// the original order.
[[nodiscard]] CompressedDictionary compress(const DictionaryStore& data,
                                            const HdMedModel& model, bool normalize = false,
                                            ScalarType dtype = ScalarType::F32,
                                            int threads = 0, Index chunk_rows = 8192);

/// Container layout (little endian):
///   "HDMC" | u16 version | u16 dtype | u16 flags (bit 0: normalized)
///   | u32 param_dim | u64 total_rows | u64 model_bytes | model blob
/// then per component:
///   u64 n_k | u32 d_k | n_k u64 (indices)
///   | n_k*d_k scalars (reduced, row major) | n_k*L scalars (params, row major)
void save_compressed(const CompressedDictionary& cd, const std::string& path);
[[nodiscard]] CompressedDictionary load_compressed(const std::string& path);

}  // namespace hdmed
