#include "core/compress.hpp"

#include "core/model_io.hpp"
#include "core/projection.hpp"
#include "core/wire.hpp"

#include <fstream>

namespace hdmed {

std::uint64_t CompressedDictionary::stored_values() const {
  std::uint64_t total = 0;
  for (const auto& c : clusters) {
    total += static_cast<std::uint64_t>(c.reduced.rows()) *
             static_cast<std::uint64_t>(c.reduced.cols());
  }
  return total;
}

double CompressedDictionary::compression_ratio() const {
  const std::uint64_t stored = stored_values();
  if (stored == 0) return 0.0;
  return static_cast<double>(total_rows) * static_cast<double>(model.dim()) /
         static_cast<double>(stored);
}

void CompressedDictionary::validate() const {
  model.validate();
  if (clusters.size() != static_cast<std::size_t>(model.size())) {
    throw InvalidArgument("compressed dictionary: cluster count mismatch");
  }
  std::uint64_t rows = 0;
  for (Index k = 0; k < model.size(); ++k) {
    const auto& c = clusters[static_cast<std::size_t>(k)];
    if (c.reduced.rows() != static_cast<Index>(c.indices.size()) ||
        c.params.rows() != c.reduced.rows()) {
      throw InvalidArgument("compressed dictionary: cluster row counts disagree");
    }
    if (c.reduced.cols() != model.components[static_cast<std::size_t>(k)].rank()) {
      throw InvalidArgument("compressed dictionary: cluster rank mismatch");
    }
    if (c.params.cols() != param_dim) {
      throw InvalidArgument("compressed dictionary: parameter width mismatch");
    }
    for (std::size_t i = 1; i < c.indices.size(); ++i) {
      if (c.indices[i] <= c.indices[i - 1]) {
        throw InvalidArgument("compressed dictionary: indices not ascending");
      }
    }
    rows += c.indices.size();
  }
  if (rows != total_rows) {
    throw InvalidArgument("compressed dictionary: row total mismatch");
  }
}

namespace {

struct ClusterAccum {
  std::vector<std::uint64_t> indices;
  std::vector<double> reduced;  // row major
  std::vector<double> params;   // row major
};

void normalize_rows(MatrixXd& rows) {
  for (Index i = 0; i < rows.rows(); ++i) {
    const double norm = rows.row(i).norm();
    if (norm > 0.0) rows.row(i) /= norm;
  }
}

}  // namespace

CompressedDictionary compress(const DictionaryStore& data, const HdMedModel& model,
                              bool normalize, ScalarType dtype, int threads,
                              Index chunk_rows) {
  model.validate();
  if (data.signal_dim() != model.dim()) {
    throw InvalidArgument("compress: store dimension does not match the model");
  }
  (void)threads;

  const Index k = model.size();
  const Index l = data.param_dim();
  std::vector<ProjectionOperator> ops;
  ops.reserve(static_cast<std::size_t>(k));
  for (const auto& c : model.components) ops.push_back(loading_matrix(c));

  std::vector<ClusterAccum> accum(static_cast<std::size_t>(k));
  MatrixXd signals, params;
  const std::uint64_t n = data.rows();
  for (std::uint64_t pos = 0; pos < n;) {
    const Index count = static_cast<Index>(
        std::min<std::uint64_t>(static_cast<std::uint64_t>(chunk_rows), n - pos));
    data.read_rows(pos, count, &signals, &params);
    if (normalize) normalize_rows(signals);
    const std::vector<Index> label = assign_rows(model, signals);

    for (Index j = 0; j < k; ++j) {
      std::vector<Index> members;
      for (Index i = 0; i < count; ++i) {
        if (label[static_cast<std::size_t>(i)] == j) members.push_back(i);
      }
      if (members.empty()) continue;
      MatrixXd block(static_cast<Index>(members.size()), signals.cols());
      for (std::size_t i = 0; i < members.size(); ++i) {
        block.row(static_cast<Index>(i)) = signals.row(members[i]);
      }
      const MatrixXd reduced = project_rows(ops[static_cast<std::size_t>(j)], block);
      auto& acc = accum[static_cast<std::size_t>(j)];
      for (std::size_t i = 0; i < members.size(); ++i) {
        acc.indices.push_back(pos + static_cast<std::uint64_t>(members[i]));
        const auto row = reduced.row(static_cast<Index>(i));
        acc.reduced.insert(acc.reduced.end(), row.begin(), row.end());
        const auto prow = params.row(members[i]);
        acc.params.insert(acc.params.end(), prow.begin(), prow.end());
      }
    }
    pos += static_cast<std::uint64_t>(count);
  }

  CompressedDictionary cd;
  cd.model = model;
  cd.param_dim = l;
  cd.dtype = dtype;
  cd.total_rows = n;
  cd.normalized = normalize;
  cd.clusters.resize(static_cast<std::size_t>(k));
  for (Index j = 0; j < k; ++j) {
    auto& acc = accum[static_cast<std::size_t>(j)];
    auto& cl = cd.clusters[static_cast<std::size_t>(j)];
    const Index rows_k = static_cast<Index>(acc.indices.size());
    const Index d = model.components[static_cast<std::size_t>(j)].rank();
    cl.indices = std::move(acc.indices);
    cl.reduced = Eigen::Map<
        const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        acc.reduced.data(), rows_k, d);
    cl.params = Eigen::Map<
        const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        acc.params.data(), rows_k, l);
  }
  cd.validate();
  return cd;
}

namespace {

constexpr char kMagic[4] = {'H', 'D', 'M', 'C'};
constexpr const char* kWhat = "compressed dictionary file";

void append_scalars(wire::Writer& w, const MatrixXd& rows, ScalarType dtype) {
  if (dtype == ScalarType::F64) {
    for (Index i = 0; i < rows.rows(); ++i) {
      for (Index j = 0; j < rows.cols(); ++j) w.f64(rows(i, j));
    }
  } else {
    for (Index i = 0; i < rows.rows(); ++i) {
      for (Index j = 0; j < rows.cols(); ++j) {
        const float v = static_cast<float>(rows(i, j));
        w.u(std::bit_cast<std::uint32_t>(v));
      }
    }
  }
}

MatrixXd read_scalars(wire::Reader& r, Index rows, Index cols, ScalarType dtype) {
  MatrixXd out(rows, cols);
  if (dtype == ScalarType::F64) {
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) out(i, j) = r.f64();
    }
  } else {
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) {
        out(i, j) = static_cast<double>(std::bit_cast<float>(r.u<std::uint32_t>()));
      }
    }
  }
  return out;
}

}  // namespace

void save_compressed(const CompressedDictionary& cd, const std::string& path) {
  cd.validate();
  wire::Writer w;
  w.raw(kMagic, 4);
  w.u<std::uint16_t>(kCompressedFormatVersion);
  w.u<std::uint16_t>(static_cast<std::uint16_t>(cd.dtype));
  w.u<std::uint16_t>(cd.normalized ? 1 : 0);
  w.u<std::uint32_t>(static_cast<std::uint32_t>(cd.param_dim));
  w.u<std::uint64_t>(cd.total_rows);
  const auto blob = serialize_model(cd.model);
  w.u<std::uint64_t>(blob.size());
  w.raw(blob.data(), blob.size());
  for (const auto& cl : cd.clusters) {
    w.u<std::uint64_t>(cl.indices.size());
    w.u<std::uint32_t>(static_cast<std::uint32_t>(cl.reduced.cols()));
    for (const auto idx : cl.indices) w.u<std::uint64_t>(idx);
    append_scalars(w, cl.reduced, cd.dtype);
    append_scalars(w, cl.params, cd.dtype);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(w.bytes.data()),
            static_cast<std::streamsize>(w.bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

CompressedDictionary load_compressed(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open: " + path);
  const auto size = static_cast<std::size_t>(in.tellg());
  std::vector<unsigned char> bytes(size);
  in.seekg(0);
  if (size > 0) {
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  }
  if (!in) throw IoError("read failed: " + path);

  wire::Reader r(bytes.data(), bytes.size(), kWhat);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError(std::string(kWhat) + ": bad magic");
  }
  const auto version = r.u<std::uint16_t>();
  if (version != kCompressedFormatVersion) {
    throw FormatError(std::string(kWhat) + ": unsupported version " +
                      std::to_string(version));
  }
  const auto dtype_tag = r.u<std::uint16_t>();
  if (dtype_tag > 1) throw FormatError(std::string(kWhat) + ": unknown scalar type");
  const auto flags = r.u<std::uint16_t>();
  if (flags > 1) throw FormatError(std::string(kWhat) + ": unknown flags");

  CompressedDictionary cd;
  cd.dtype = static_cast<ScalarType>(dtype_tag);
  cd.normalized = (flags & 1) != 0;
  cd.param_dim = static_cast<Index>(r.u<std::uint32_t>());
  cd.total_rows = r.u<std::uint64_t>();
  const auto blob_len = r.u<std::uint64_t>();
  r.need(blob_len);
  cd.model = deserialize_model(bytes.data() + r.pos, blob_len);
  r.pos += blob_len;

  for (Index k = 0; k < cd.model.size(); ++k) {
    ClusterPartition cl;
    const auto n_k = r.u<std::uint64_t>();
    const auto d_k = r.u<std::uint32_t>();
    if (static_cast<Index>(d_k) != cd.model.components[static_cast<std::size_t>(k)].rank()) {
      throw FormatError(std::string(kWhat) + ": cluster rank mismatch");
    }
    if (n_k > cd.total_rows) {
      throw FormatError(std::string(kWhat) + ": cluster larger than the dictionary");
    }
    cl.indices.resize(n_k);
    for (auto& idx : cl.indices) idx = r.u<std::uint64_t>();
    cl.reduced = read_scalars(r, static_cast<Index>(n_k), static_cast<Index>(d_k), cd.dtype);
    cl.params = read_scalars(r, static_cast<Index>(n_k), cd.param_dim, cd.dtype);
    cd.clusters.push_back(std::move(cl));
  }
  if (!r.done()) throw FormatError(std::string(kWhat) + ": trailing bytes");
  try {
    cd.validate();
  } catch (const std::exception& e) {
    throw FormatError(std::string(kWhat) + ": invalid contents: " + e.what());
  }
  return cd;
}

}  // namespace hdmed
