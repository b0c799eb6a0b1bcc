#pragma once

// Signal dictionary storage. The on-disk layout is a 64-byte little-endian
// header (magic "HDMD", version, scalar type, row count, signal and
// parameter dimensions) followed by the signal block (rows x signal_dim,
// row-major) and the parameter block (rows x param_dim, row-major), both in
// the declared scalar type. A CSV import path (header y_0..y_{M-1},
// t_0..t_{L-1}) covers small hand-made data; readers sniff the format.

#include "core/common.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace hdmed {

enum class ScalarType : std::uint16_t { F32 = 0, F64 = 1 };

[[nodiscard]] inline std::size_t scalar_size(ScalarType t) {
  return t == ScalarType::F32 ? 4 : 8;
}

struct DictHeader {
  std::uint64_t rows = 0;
  std::uint32_t signal_dim = 0;
  std::uint32_t param_dim = 0;
  ScalarType dtype = ScalarType::F32;
};

/// Read access to a dictionary, either file-backed (streamed in chunks,
/// never materializing the full signal block) or held in memory (CSV
/// imports and tests). Values are served as f64 regardless of storage type.
class DictionaryStore {
 public:
  /// Opens a path, sniffing the binary magic and falling back to CSV.
  [[nodiscard]] static DictionaryStore open(const std::string& path);
  [[nodiscard]] static DictionaryStore open_binary(const std::string& path);
  [[nodiscard]] static DictionaryStore open_csv(const std::string& path);
  [[nodiscard]] static DictionaryStore from_memory(MatrixXd signals, MatrixXd params);

  [[nodiscard]] const DictHeader& header() const { return header_; }
  [[nodiscard]] std::uint64_t rows() const { return header_.rows; }
  [[nodiscard]] Index signal_dim() const { return header_.signal_dim; }
  [[nodiscard]] Index param_dim() const { return header_.param_dim; }

  /// Sequential visitation in row order; the buffer never exceeds
  /// chunk_rows rows. Can be called repeatedly (the stream is replayable).
  void for_each_chunk(Index chunk_rows,
                      const std::function<void(const MatrixXd& signals, const MatrixXd& params,
                                               std::uint64_t first_row)>& fn) const;

  /// Reads [first, first + count) rows. params may be null when the caller
  /// only needs signals.
  void read_rows(std::uint64_t first, Index count, MatrixXd* signals, MatrixXd* params) const;

 private:
  DictionaryStore() = default;

  DictHeader header_;
  std::string path_;    // empty for in-memory stores
  MatrixXd signals_;    // in-memory variant
  MatrixXd params_;
};

/// Streaming writer. The row count is declared up front so the two blocks
/// can be laid out without buffering; finalize verifies the promise.
class DictionaryWriter {
 public:
  DictionaryWriter(const std::string& path, std::uint64_t rows, std::uint32_t signal_dim,
                   std::uint32_t param_dim, ScalarType dtype);
  ~DictionaryWriter();

  DictionaryWriter(const DictionaryWriter&) = delete;
  DictionaryWriter& operator=(const DictionaryWriter&) = delete;

  /// Appends a block of rows. Rejects non-finite values.
  void append(const Eigen::Ref<const MatrixXd>& signals,
              const Eigen::Ref<const MatrixXd>& params);
  void finalize();

 private:
  struct Impl;
  Impl* impl_;
};

/// Convenience wrapper writing an in-memory dictionary in one shot.
void write_dictionary(const std::string& path, const Eigen::Ref<const MatrixXd>& signals,
                      const Eigen::Ref<const MatrixXd>& params, ScalarType dtype);

struct ParamRange {
  double lo = 0.0;
  double hi = 0.0;
  std::uint32_t count = 1;
};

/// Grid specification for the synthetic dictionary generator. Signals are
/// y(t) = sum_j tnorm_j * phi_j over a fixed bank of damped sinusoids with
/// decaying amplitudes, plus isotropic Gaussian noise; rows enumerate the
/// parameter grid in lexicographic order (last parameter fastest).
struct SyntheticSpec {
  std::uint32_t signal_dim = 0;
  std::vector<ParamRange> params;
  double noise_sd = 0.0;
  std::uint64_t seed = 0;
  ScalarType dtype = ScalarType::F32;

  [[nodiscard]] std::uint64_t total_rows() const;
  void validate() const;
};

/// Fixed basis bank, one row per parameter: l2-normalized damped sinusoids
/// scaled by 2^(1-j). Exposed so tests can check the advertised rank bound.
[[nodiscard]] MatrixXd synthetic_basis(std::uint32_t param_count, std::uint32_t signal_dim);

void generate_synthetic(const SyntheticSpec& spec, const std::string& out_path);

/// Copies a CSV dictionary into the binary layout.
void import_csv(const std::string& csv_path, const std::string& out_path, ScalarType dtype);

}  // namespace hdmed
