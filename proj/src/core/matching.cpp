#include "core/matching.hpp"

#include "core/projection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace hdmed {

namespace {

void normalize_rows(MatrixXd& rows) {
  for (Index i = 0; i < rows.rows(); ++i) {
    const double norm = rows.row(i).norm();
    if (norm > 0.0) rows.row(i) /= norm;
  }
}

constexpr Index kQueryTile = 256;

struct Candidate {
  Index cluster = -1;
  Index local = -1;
  double distance = std::numeric_limits<double>::infinity();
};

}  // namespace

std::vector<MatchResult> match_compressed(const CompressedDictionary& cd,
                                          const Eigen::Ref<const MatrixXd>& queries,
                                          const MatchOptions& opt, MatchStats* stats) {
  if (opt.top_clusters < 1) throw InvalidArgument("match: top_clusters must be >= 1");
  if (queries.cols() != cd.model.dim()) {
    throw InvalidArgument("match: query dimension does not match the archive");
  }
  const Index nq = queries.rows();
  const Index k = cd.model.size();
  bool any = false;
  for (const auto& cl : cd.clusters) any = any || cl.size() > 0;
  if (!any) throw InvalidArgument("match: archive holds no entries");

  MatrixXd q = queries;
  if (cd.normalized) normalize_rows(q);

  const MatrixXd resp = responsibilities_rows(cd.model, q);

  // Ranked non-empty clusters per query, best responsibility first.
  std::vector<std::vector<Index>> chosen(static_cast<std::size_t>(nq));
  std::vector<char> used_fallback(static_cast<std::size_t>(nq), 0);
  std::vector<Index> order(static_cast<std::size_t>(k));
  for (Index i = 0; i < nq; ++i) {
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index x, Index y) { return resp(i, x) > resp(i, y); });
    auto& mine = chosen[static_cast<std::size_t>(i)];
    for (const Index c : order) {
      if (cd.clusters[static_cast<std::size_t>(c)].size() == 0) continue;
      mine.push_back(c);
      if (static_cast<Index>(mine.size()) >= opt.top_clusters) break;
    }
    if (cd.clusters[static_cast<std::size_t>(order[0])].size() == 0) {
      used_fallback[static_cast<std::size_t>(i)] = 1;
      if (stats) stats->fallbacks += 1;
    }
  }

  std::vector<ProjectionOperator> ops;
  ops.reserve(static_cast<std::size_t>(k));
  for (const auto& c : cd.model.components) ops.push_back(loading_matrix(c));

  // Scan each cluster once for all queries routed to it.
  std::vector<std::vector<Candidate>> found(static_cast<std::size_t>(nq));
  for (Index c = 0; c < k; ++c) {
    std::vector<Index> members;
    for (Index i = 0; i < nq; ++i) {
      const auto& mine = chosen[static_cast<std::size_t>(i)];
      if (std::find(mine.begin(), mine.end(), c) != mine.end()) members.push_back(i);
    }
    if (members.empty()) continue;
    const auto& cl = cd.clusters[static_cast<std::size_t>(c)];
    const Index nc = cl.size();
    const Index d = cl.reduced.cols();
    if (stats) {
      stats->multiply_adds += static_cast<std::uint64_t>(members.size()) *
                              static_cast<std::uint64_t>(nc) *
                              static_cast<std::uint64_t>(d);
    }

    MatrixXd qc(static_cast<Index>(members.size()), q.cols());
    for (std::size_t i = 0; i < members.size(); ++i) {
      qc.row(static_cast<Index>(i)) = q.row(members[i]);
    }
    const MatrixXd xhat = project_rows(ops[static_cast<std::size_t>(c)], qc);
    const VectorXd qn2 = xhat.rowwise().squaredNorm();
    const VectorXd rn2 = cl.reduced.rowwise().squaredNorm();

    std::vector<Candidate> best(members.size());
    for (Index b = 0; b < nc; b += opt.chunk_rows) {
      const Index len = std::min(opt.chunk_rows, nc - b);
      const MatrixXd g = xhat * cl.reduced.middleRows(b, len).transpose();
      for (std::size_t i = 0; i < members.size(); ++i) {
        auto& bi = best[i];
        for (Index j = 0; j < len; ++j) {
          const double dist = qn2[static_cast<Index>(i)] + rn2[b + j] -
                              2.0 * g(static_cast<Index>(i), j);
          if (dist < bi.distance) {
            bi.distance = dist;
            bi.local = b + j;
          }
        }
      }
    }
    for (std::size_t i = 0; i < members.size(); ++i) {
      best[i].cluster = c;
      found[static_cast<std::size_t>(members[i])].push_back(best[i]);
    }
  }

  std::vector<MatchResult> out(static_cast<std::size_t>(nq));
  for (Index i = 0; i < nq; ++i) {
    const auto& mine = chosen[static_cast<std::size_t>(i)];
    auto& cands = found[static_cast<std::size_t>(i)];
    // keep routing order: best responsibility first
    std::stable_sort(cands.begin(), cands.end(), [&](const Candidate& x, const Candidate& y) {
      const auto px = std::find(mine.begin(), mine.end(), x.cluster) - mine.begin();
      const auto py = std::find(mine.begin(), mine.end(), y.cluster) - mine.begin();
      return px < py;
    });
    const Candidate* winner = &cands.front();
    if (cands.size() > 1) {
      double best_recon = std::numeric_limits<double>::infinity();
      for (const auto& cand : cands) {
        const auto& cl = cd.clusters[static_cast<std::size_t>(cand.cluster)];
        const VectorXd recon = reconstruct(ops[static_cast<std::size_t>(cand.cluster)],
                                           cl.reduced.row(cand.local).transpose());
        const double dist = (q.row(i).transpose() - recon).squaredNorm();
        if (dist < best_recon) {
          best_recon = dist;
          winner = &cand;
        }
      }
    }
    const auto& cl = cd.clusters[static_cast<std::size_t>(winner->cluster)];
    MatchResult& r = out[static_cast<std::size_t>(i)];
    r.query = i;
    r.cluster = winner->cluster;
    r.dict_index = cl.indices[static_cast<std::size_t>(winner->local)];
    r.distance = std::max(winner->distance, 0.0);
    r.params = cl.params.row(winner->local).transpose();
    r.fallback = used_fallback[static_cast<std::size_t>(i)] != 0;
  }
  return out;
}

std::vector<MatchResult> full_match(const DictionaryStore& data,
                                    const Eigen::Ref<const MatrixXd>& queries,
                                    const MatchOptions& opt, MatchStats* stats) {
  if (queries.cols() != data.signal_dim()) {
    throw InvalidArgument("match: query dimension does not match the dictionary");
  }
  if (data.rows() == 0) throw InvalidArgument("match: dictionary holds no entries");
  const Index nq = queries.rows();
  const Index l = data.param_dim();

  MatrixXd q = queries;
  if (opt.normalize) normalize_rows(q);
  const VectorXd qn2 = q.rowwise().squaredNorm();

  std::vector<MatchResult> out(static_cast<std::size_t>(nq));
  for (Index i = 0; i < nq; ++i) {
    out[static_cast<std::size_t>(i)].query = i;
    out[static_cast<std::size_t>(i)].distance = std::numeric_limits<double>::infinity();
  }

  const std::uint64_t n = data.rows();
  MatrixXd signals, params;
  const std::size_t tiles =
      static_cast<std::size_t>((nq + kQueryTile - 1) / kQueryTile);
  for (std::uint64_t pos = 0; pos < n;) {
    const Index count = static_cast<Index>(
        std::min<std::uint64_t>(static_cast<std::uint64_t>(opt.chunk_rows), n - pos));
    data.read_rows(pos, count, &signals, &params);
    if (opt.normalize) normalize_rows(signals);
    const VectorXd yn2 = signals.rowwise().squaredNorm();
    if (stats) {
      stats->multiply_adds += static_cast<std::uint64_t>(nq) *
                              static_cast<std::uint64_t>(count) *
                              static_cast<std::uint64_t>(data.signal_dim());
    }
    parallel_blocks(tiles, opt.threads, [&](std::size_t tb, std::size_t te, int) {
      for (std::size_t t = tb; t < te; ++t) {
        const Index qb = static_cast<Index>(t) * kQueryTile;
        const Index qlen = std::min<Index>(kQueryTile, nq - qb);
        const MatrixXd g = q.middleRows(qb, qlen) * signals.transpose();
        for (Index i = 0; i < qlen; ++i) {
          MatchResult& r = out[static_cast<std::size_t>(qb + i)];
          for (Index j = 0; j < count; ++j) {
            const double dist = qn2[qb + i] + yn2[j] - 2.0 * g(i, j);
            if (dist < r.distance) {
              r.distance = dist;
              r.dict_index = pos + static_cast<std::uint64_t>(j);
              r.params = params.row(j).transpose();
            }
          }
        }
      }
    });
    pos += static_cast<std::uint64_t>(count);
  }
  for (auto& r : out) {
    r.distance = std::max(r.distance, 0.0);
    if (r.params.size() == 0 && l > 0) r.params = VectorXd::Zero(l);
  }
  return out;
}

VectorXd match_mae(const std::vector<MatchResult>& matches,
                   const Eigen::Ref<const MatrixXd>& reference) {
  if (matches.empty()) throw InvalidArgument("mae: no matches");
  const Index l = matches.front().params.size();
  if (reference.cols() != l) {
    throw InvalidArgument("mae: reference parameter width does not match");
  }
  VectorXd acc = VectorXd::Zero(l);
  for (const auto& m : matches) {
    if (m.params.size() != l) throw InvalidArgument("mae: ragged match parameters");
    if (m.query < 0 || m.query >= reference.rows()) {
      throw InvalidArgument("mae: query id outside the reference");
    }
    acc += (m.params - reference.row(m.query).transpose()).cwiseAbs();
  }
  return acc / static_cast<double>(matches.size());
}

namespace {

std::string format_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (const char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& tok, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw FormatError("match file: bad number '" + tok + "' on line " +
                      std::to_string(line_no));
  }
}

long long parse_int(const std::string& tok, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw FormatError("match file: bad integer '" + tok + "' on line " +
                      std::to_string(line_no));
  }
}

}  // namespace

void write_matches_csv(const std::string& path, const std::vector<MatchResult>& matches,
                       Index param_dim) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "query_id,cluster,dict_index,distance";
  for (Index j = 0; j < param_dim; ++j) out << ",t_" << j;
  out << '\n';
  for (const auto& m : matches) {
    if (m.params.size() != param_dim) {
      throw InvalidArgument("match file: parameter width does not match the matches");
    }
    out << m.query << ',' << m.cluster << ',' << m.dict_index << ','
        << format_g(m.distance);
    for (Index j = 0; j < param_dim; ++j) out << ',' << format_g(m.params[j]);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<MatchResult> read_matches_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("match file: empty file");
  const auto header = split_line(line);
  if (header.size() < 4 || header[0] != "query_id" || header[1] != "cluster" ||
      header[2] != "dict_index" || header[3] != "distance") {
    throw FormatError("match file: unexpected header");
  }
  const Index l = static_cast<Index>(header.size()) - 4;
  for (Index j = 0; j < l; ++j) {
    if (header[static_cast<std::size_t>(4 + j)] != "t_" + std::to_string(j)) {
      throw FormatError("match file: unexpected parameter column name");
    }
  }
  std::vector<MatchResult> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto tok = split_line(line);
    if (tok.size() != header.size()) {
      throw FormatError("match file: wrong field count on line " + std::to_string(line_no));
    }
    MatchResult m;
    m.query = static_cast<Index>(parse_int(tok[0], line_no));
    m.cluster = static_cast<Index>(parse_int(tok[1], line_no));
    const long long idx = parse_int(tok[2], line_no);
    if (idx < 0) throw FormatError("match file: negative dictionary index on line " +
                                   std::to_string(line_no));
    m.dict_index = static_cast<std::uint64_t>(idx);
    m.distance = parse_double(tok[3], line_no);
    m.params.resize(l);
    for (Index j = 0; j < l; ++j) {
      m.params[j] = parse_double(tok[static_cast<std::size_t>(4 + j)], line_no);
    }
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace hdmed
