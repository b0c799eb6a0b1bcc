#include "core/dictionary.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace hdmed {

static_assert(std::endian::native == std::endian::little,
              "on-disk layouts are little-endian; big-endian hosts need byte swaps");

namespace {

constexpr char kMagic[4] = {'H', 'D', 'M', 'D'};
constexpr std::uint16_t kVersion = 1;
constexpr std::size_t kHeaderSize = 64;

template <typename T>
void put_le(unsigned char* dst, T v) {
  std::memcpy(dst, &v, sizeof(T));
}

template <typename T>
T get_le(const unsigned char* src) {
  T v;
  std::memcpy(&v, src, sizeof(T));
  return v;
}

std::array<unsigned char, kHeaderSize> pack_header(const DictHeader& h) {
  std::array<unsigned char, kHeaderSize> buf{};
  std::memcpy(buf.data(), kMagic, 4);
  put_le<std::uint16_t>(buf.data() + 4, kVersion);
  put_le<std::uint16_t>(buf.data() + 6, static_cast<std::uint16_t>(h.dtype));
  put_le<std::uint64_t>(buf.data() + 8, h.rows);
  put_le<std::uint32_t>(buf.data() + 16, h.signal_dim);
  put_le<std::uint32_t>(buf.data() + 20, h.param_dim);
  return buf;
}

DictHeader unpack_header(const unsigned char* buf) {
  if (std::memcmp(buf, kMagic, 4) != 0) {
    throw FormatError("dictionary: bad magic, not a dictionary file");
  }
  const auto version = get_le<std::uint16_t>(buf + 4);
  if (version != kVersion) {
    throw FormatError("dictionary: unsupported format version " + std::to_string(version));
  }
  const auto dtype = get_le<std::uint16_t>(buf + 6);
  if (dtype > 1) {
    throw FormatError("dictionary: unknown scalar type tag " + std::to_string(dtype));
  }
  DictHeader h;
  h.dtype = static_cast<ScalarType>(dtype);
  h.rows = get_le<std::uint64_t>(buf + 8);
  h.signal_dim = get_le<std::uint32_t>(buf + 16);
  h.param_dim = get_le<std::uint32_t>(buf + 20);
  if (h.signal_dim < 1) throw FormatError("dictionary: signal dimension must be >= 1");
  if (h.rows > (std::uint64_t{1} << 48)) {
    throw FormatError("dictionary: implausible row count in header");
  }
  return h;
}

std::uint64_t payload_bytes(const DictHeader& h) {
  return h.rows * (static_cast<std::uint64_t>(h.signal_dim) + h.param_dim) *
         scalar_size(h.dtype);
}

using RowMajorF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMajorD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void read_block(std::ifstream& in, std::uint64_t block_off, std::uint64_t first, Index count,
                Index cols, ScalarType dtype, MatrixXd* out, const std::string& path) {
  out->resize(count, cols);
  if (count == 0 || cols == 0) return;
  const std::size_t esize = scalar_size(dtype);
  in.seekg(static_cast<std::streamoff>(block_off + first * cols * esize));
  const std::size_t bytes = static_cast<std::size_t>(count) * cols * esize;
  if (dtype == ScalarType::F32) {
    RowMajorF buf(count, cols);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    out->noalias() = buf.cast<double>();
  } else {
    RowMajorD buf(count, cols);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    *out = buf;
  }
  if (!in) throw IoError("dictionary: short read from " + path);
}

}  // namespace

DictionaryStore DictionaryStore::open(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("dictionary: cannot open " + path);
  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  in.close();
  if (std::memcmp(magic, kMagic, 4) == 0) return open_binary(path);
  return open_csv(path);
}

DictionaryStore DictionaryStore::open_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("dictionary: cannot open " + path);
  std::array<unsigned char, kHeaderSize> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), kHeaderSize);
  if (!in) throw FormatError("dictionary: file shorter than the header");
  DictionaryStore store;
  store.header_ = unpack_header(buf.data());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::uint64_t>(in.tellg());
  const std::uint64_t expect = kHeaderSize + payload_bytes(store.header_);
  if (size != expect) {
    throw FormatError("dictionary: payload length mismatch, declared " +
                      std::to_string(expect) + " bytes, file has " + std::to_string(size));
  }
  store.path_ = path;
  return store;
}

DictionaryStore DictionaryStore::from_memory(MatrixXd signals, MatrixXd params) {
  if (params.rows() == 0) {
    params = MatrixXd(signals.rows(), 0);
  } else if (params.rows() != signals.rows()) {
    throw InvalidArgument("dictionary: signal and parameter row counts differ");
  }
  DictionaryStore store;
  store.header_.rows = static_cast<std::uint64_t>(signals.rows());
  store.header_.signal_dim = static_cast<std::uint32_t>(signals.cols());
  store.header_.param_dim = static_cast<std::uint32_t>(params.cols());
  store.header_.dtype = ScalarType::F64;
  store.signals_ = std::move(signals);
  store.params_ = std::move(params);
  return store;
}

void DictionaryStore::read_rows(std::uint64_t first, Index count, MatrixXd* signals,
                                MatrixXd* params) const {
  if (first + static_cast<std::uint64_t>(count) > header_.rows) {
    throw InvalidArgument("dictionary: row range out of bounds");
  }
  if (path_.empty()) {
    if (signals) *signals = signals_.middleRows(static_cast<Index>(first), count);
    if (params) *params = params_.middleRows(static_cast<Index>(first), count);
    return;
  }
  std::ifstream in(path_, std::ios::binary);
  if (!in) throw IoError("dictionary: cannot open " + path_);
  const std::size_t esize = scalar_size(header_.dtype);
  const std::uint64_t signals_off = kHeaderSize;
  const std::uint64_t params_off =
      kHeaderSize + header_.rows * header_.signal_dim * esize;
  if (signals) {
    read_block(in, signals_off, first, count, header_.signal_dim, header_.dtype, signals,
               path_);
  }
  if (params) {
    read_block(in, params_off, first, count, header_.param_dim, header_.dtype, params, path_);
  }
}

void DictionaryStore::for_each_chunk(
    Index chunk_rows, const std::function<void(const MatrixXd&, const MatrixXd&,
                                               std::uint64_t)>& fn) const {
  if (chunk_rows < 1) throw InvalidArgument("dictionary: chunk size must be >= 1");
  MatrixXd signals;
  MatrixXd params;
  for (std::uint64_t first = 0; first < header_.rows;) {
    const Index count = static_cast<Index>(
        std::min<std::uint64_t>(static_cast<std::uint64_t>(chunk_rows), header_.rows - first));
    read_rows(first, count, &signals, &params);
    fn(signals, params, first);
    first += static_cast<std::uint64_t>(count);
  }
}

struct DictionaryWriter::Impl {
  std::ofstream out;
  std::string path;
  DictHeader header;
  std::uint64_t written = 0;
  bool finalized = false;

  [[nodiscard]] std::uint64_t signals_off() const { return kHeaderSize; }
  [[nodiscard]] std::uint64_t params_off() const {
    return kHeaderSize + header.rows * header.signal_dim * scalar_size(header.dtype);
  }
};

DictionaryWriter::DictionaryWriter(const std::string& path, std::uint64_t rows,
                                   std::uint32_t signal_dim, std::uint32_t param_dim,
                                   ScalarType dtype)
    : impl_(new Impl) {
  if (signal_dim < 1) throw InvalidArgument("dictionary: signal dimension must be >= 1");
  impl_->path = path;
  impl_->header = DictHeader{rows, signal_dim, param_dim, dtype};
  impl_->out.open(path, std::ios::binary | std::ios::trunc);
  if (!impl_->out) {
    delete impl_;
    throw IoError("dictionary: cannot create " + path);
  }
  const auto buf = pack_header(impl_->header);
  impl_->out.write(reinterpret_cast<const char*>(buf.data()), kHeaderSize);
  // reserve the full extent so both blocks can be written in row order
  const std::uint64_t total = kHeaderSize + payload_bytes(impl_->header);
  if (total > kHeaderSize) {
    impl_->out.seekp(static_cast<std::streamoff>(total - 1));
    impl_->out.put('\0');
  }
  if (!impl_->out) {
    delete impl_;
    throw IoError("dictionary: cannot reserve space in " + path);
  }
}

DictionaryWriter::~DictionaryWriter() { delete impl_; }

void DictionaryWriter::append(const Eigen::Ref<const MatrixXd>& signals,
                              const Eigen::Ref<const MatrixXd>& params) {
  if (impl_->finalized) throw InvalidArgument("dictionary: writer already finalized");
  if (signals.cols() != impl_->header.signal_dim ||
      params.cols() != impl_->header.param_dim || signals.rows() != params.rows()) {
    throw InvalidArgument("dictionary: appended block shape mismatch");
  }
  if (impl_->written + static_cast<std::uint64_t>(signals.rows()) > impl_->header.rows) {
    throw InvalidArgument("dictionary: more rows appended than declared");
  }
  if (!signals.allFinite() || !params.allFinite()) {
    throw InvalidArgument("dictionary: non-finite values rejected");
  }
  const std::size_t esize = scalar_size(impl_->header.dtype);
  auto write_rows = [&](std::uint64_t block_off, const Eigen::Ref<const MatrixXd>& block) {
    if (block.cols() == 0) return;
    impl_->out.seekp(
        static_cast<std::streamoff>(block_off + impl_->written * block.cols() * esize));
    if (impl_->header.dtype == ScalarType::F32) {
      RowMajorF buf = block.cast<float>();
      impl_->out.write(reinterpret_cast<const char*>(buf.data()),
                       static_cast<std::streamsize>(sizeof(float) * buf.size()));
    } else {
      RowMajorD buf = block;
      impl_->out.write(reinterpret_cast<const char*>(buf.data()),
                       static_cast<std::streamsize>(sizeof(double) * buf.size()));
    }
  };
  write_rows(impl_->signals_off(), signals);
  write_rows(impl_->params_off(), params);
  if (!impl_->out) throw IoError("dictionary: write failed on " + impl_->path);
  impl_->written += static_cast<std::uint64_t>(signals.rows());
}

void DictionaryWriter::finalize() {
  if (impl_->finalized) return;
  if (impl_->written != impl_->header.rows) {
    throw IoError("dictionary: finalize with " + std::to_string(impl_->written) +
                  " rows written, " + std::to_string(impl_->header.rows) + " declared");
  }
  impl_->out.flush();
  if (!impl_->out) throw IoError("dictionary: flush failed on " + impl_->path);
  impl_->finalized = true;
}

void write_dictionary(const std::string& path, const Eigen::Ref<const MatrixXd>& signals,
                      const Eigen::Ref<const MatrixXd>& params, ScalarType dtype) {
  DictionaryWriter w(path, static_cast<std::uint64_t>(signals.rows()),
                     static_cast<std::uint32_t>(signals.cols()),
                     static_cast<std::uint32_t>(params.cols()), dtype);
  w.append(signals, params);
  w.finalize();
}

std::uint64_t SyntheticSpec::total_rows() const {
  std::uint64_t n = 1;
  for (const auto& p : params) n *= p.count;
  return n;
}

void SyntheticSpec::validate() const {
  if (signal_dim < 2) throw InvalidArgument("synthetic: signal dimension must be >= 2");
  if (params.empty()) throw InvalidArgument("synthetic: need at least one parameter");
  if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) {
    throw InvalidArgument("synthetic: noise sd must be finite and >= 0");
  }
  std::uint64_t n = 1;
  for (const auto& p : params) {
    if (p.count < 1) throw InvalidArgument("synthetic: grid counts must be >= 1");
    if (!(p.hi >= p.lo) || !std::isfinite(p.lo) || !std::isfinite(p.hi)) {
      throw InvalidArgument("synthetic: bad parameter range");
    }
    if (n > (std::uint64_t{1} << 40) / p.count) {
      throw InvalidArgument("synthetic: grid is unreasonably large");
    }
    n *= p.count;
  }
}

MatrixXd synthetic_basis(std::uint32_t param_count, std::uint32_t signal_dim) {
  MatrixXd basis(param_count, signal_dim);
  for (std::uint32_t j = 0; j < param_count; ++j) {
    const double freq = 1.3 + 2.1 * j;
    const double decay = 1.0 + 0.6 * j;
    const double phase = 0.7 * j;
    for (std::uint32_t m = 0; m < signal_dim; ++m) {
      const double s = static_cast<double>(m) / signal_dim;
      basis(j, m) = std::exp(-decay * s) * std::sin(2.0 * M_PI * freq * s + phase);
    }
    basis.row(j) *= std::pow(0.5, j) / basis.row(j).norm();
  }
  return basis;
}

void generate_synthetic(const SyntheticSpec& spec, const std::string& out_path) {
  spec.validate();
  const std::uint64_t n = spec.total_rows();
  const auto L = static_cast<std::uint32_t>(spec.params.size());
  const MatrixXd basis = synthetic_basis(L, spec.signal_dim);

  DictionaryWriter writer(out_path, n, spec.signal_dim, L, spec.dtype);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const Index chunk = 8192;
  MatrixXd params;
  MatrixXd tnorm;
  for (std::uint64_t first = 0; first < n;) {
    const Index count =
        static_cast<Index>(std::min<std::uint64_t>(chunk, n - first));
    params.resize(count, L);
    tnorm.resize(count, L);
    for (Index i = 0; i < count; ++i) {
      std::uint64_t rem = first + static_cast<std::uint64_t>(i);
      for (std::uint32_t j = L; j-- > 0;) {
        const auto& pr = spec.params[j];
        const std::uint64_t idx = rem % pr.count;
        rem /= pr.count;
        const double value =
            pr.count > 1 ? pr.lo + (pr.hi - pr.lo) * static_cast<double>(idx) /
                                       static_cast<double>(pr.count - 1)
                         : pr.lo;
        params(i, j) = value;
        tnorm(i, j) = pr.hi > pr.lo ? (value - pr.lo) / (pr.hi - pr.lo) : 1.0;
      }
    }
    MatrixXd signals = tnorm * basis;
    if (spec.noise_sd > 0.0) {
      for (Index i = 0; i < count; ++i) {
        for (std::uint32_t m = 0; m < spec.signal_dim; ++m) {
          signals(i, m) += spec.noise_sd * normal(rng);
        }
      }
    }
    writer.append(signals, params);
    first += static_cast<std::uint64_t>(count);
  }
  writer.finalize();
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  for (auto& tok : out) {
    const auto b = tok.find_first_not_of(" \t");
    const auto e = tok.find_last_not_of(" \t");
    tok = b == std::string::npos ? std::string() : tok.substr(b, e - b + 1);
  }
  return out;
}

}  // namespace

DictionaryStore DictionaryStore::open_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("dictionary: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("dictionary csv: empty file " + path);
  const auto head = split_csv_line(line);
  std::size_t m = 0;
  while (m < head.size() && head[m] == "y_" + std::to_string(m)) ++m;
  std::size_t l = 0;
  while (m + l < head.size() && head[m + l] == "t_" + std::to_string(l)) ++l;
  if (m < 1 || m + l != head.size()) {
    throw FormatError("dictionary csv: header must be y_0..y_{M-1},t_0..t_{L-1}");
  }

  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto toks = split_csv_line(line);
    if (toks.size() != head.size()) {
      throw FormatError("dictionary csv: line " + std::to_string(line_no) + " has " +
                        std::to_string(toks.size()) + " fields, expected " +
                        std::to_string(head.size()));
    }
    for (const auto& tok : toks) {
      std::size_t pos = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &pos);
      } catch (const std::exception&) {
        pos = std::string::npos;
      }
      if (pos != tok.size()) {
        throw FormatError("dictionary csv: bad number '" + tok + "' on line " +
                          std::to_string(line_no));
      }
      values.push_back(v);
    }
    ++rows;
  }
  MatrixXd signals(rows, m);
  MatrixXd params(rows, l);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < m; ++j) signals(i, j) = values[i * (m + l) + j];
    for (std::size_t j = 0; j < l; ++j) params(i, j) = values[i * (m + l) + m + j];
  }
  return from_memory(std::move(signals), std::move(params));
}

void import_csv(const std::string& csv_path, const std::string& out_path, ScalarType dtype) {
  const DictionaryStore mem = DictionaryStore::open_csv(csv_path);
  MatrixXd signals;
  MatrixXd params;
  mem.read_rows(0, static_cast<Index>(mem.rows()), &signals, &params);
  write_dictionary(out_path, signals, params, dtype);
}

}  // namespace hdmed
