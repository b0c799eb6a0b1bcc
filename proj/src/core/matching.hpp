#pragma once

#include "core/compress.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hdmed {

struct MatchOptions {
  Index top_clusters = 1;  // routed clusters compared per query
  bool normalize = false;  // full match only; routed matches follow the archive flag
  int threads = 0;
  Index chunk_rows = 8192;  // dictionary rows scanned per block
};

struct MatchResult {
  Index query = 0;
  Index cluster = -1;  // winning component, -1 for exhaustive matches
  std::uint64_t dict_index = 0;
  double distance = 0.0;  // squared Euclidean, latent space when routed
  VectorXd params;
  bool fallback = false;  // best-ranked cluster was empty, next one used
};

struct MatchStats {
  std::uint64_t multiply_adds = 0;  // inner-product cost of the scans
  std::uint64_t fallbacks = 0;
};

/// Routes each query to its most responsible non-empty cluster (the
/// top_clusters best when asked for more), scans only those latent tables,
/// and reports the nearest entry. With several clusters in play the
/// candidates are compared through their decompressed signals. Queries are
/// normalized when the archive was built that way. Ties break to the lowest
/// original row id.
[[nodiscard]] std::vector<MatchResult> match_compressed(const CompressedDictionary& cd,
                                                        const Eigen::Ref<const MatrixXd>& queries,
                                                        const MatchOptions& opt = {},
                                                        MatchStats* stats = nullptr);

/// Exhaustive scan over the stored signals in the original space.
[[nodiscard]] std::vector<MatchResult> full_match(const DictionaryStore& data,
                                                  const Eigen::Ref<const MatrixXd>& queries,
                                                  const MatchOptions& opt = {},
                                                  MatchStats* stats = nullptr);

/// Mean absolute error per parameter column; reference row i holds the
/// ground truth for query i.
[[nodiscard]] VectorXd match_mae(const std::vector<MatchResult>& matches,
                                 const Eigen::Ref<const MatrixXd>& reference);

/// CSV columns: query_id,cluster,dict_index,distance,t_0..t_{L-1}
void write_matches_csv(const std::string& path, const std::vector<MatchResult>& matches,
                       Index param_dim);
[[nodiscard]] std::vector<MatchResult> read_matches_csv(const std::string& path);

}  // namespace hdmed
