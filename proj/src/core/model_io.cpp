#include "core/model_io.hpp"

#include "core/wire.hpp"

#include <fstream>

namespace hdmed {

namespace {
constexpr char kMagic[4] = {'H', 'D', 'M', 'M'};
constexpr const char* kWhat = "model file";
}  // namespace

std::vector<unsigned char> serialize_model(const HdMedModel& model) {
  model.validate();
  wire::Writer w;
  w.raw(kMagic, 4);
  w.u<std::uint16_t>(kModelFormatVersion);
  w.u<std::uint16_t>(static_cast<std::uint16_t>(model.family()));
  w.u<std::uint32_t>(static_cast<std::uint32_t>(model.size()));
  w.u<std::uint32_t>(static_cast<std::uint32_t>(model.dim()));
  for (Index k = 0; k < model.size(); ++k) {
    const auto& c = model.components[static_cast<std::size_t>(k)];
    w.f64(model.weights[k]);
    w.u<std::uint32_t>(static_cast<std::uint32_t>(c.rank()));
    w.f64(c.mixing.alpha);
    w.f64(c.mixing.beta);
    w.f64(c.b);
    w.raw(c.a.data(), sizeof(double) * static_cast<std::size_t>(c.rank()));
    w.raw(c.mu.data(), sizeof(double) * static_cast<std::size_t>(c.dim()));
    w.raw(c.dstar.data(),
          sizeof(double) * static_cast<std::size_t>(c.dim() * c.rank()));
  }
  return std::move(w.bytes);
}

HdMedModel deserialize_model(const unsigned char* data, std::size_t size) {
  wire::Reader r(data, size, kWhat);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("model file: bad magic");
  }
  const auto version = r.u<std::uint16_t>();
  if (version != kModelFormatVersion) {
    throw FormatError("model file: unsupported version " + std::to_string(version));
  }
  const auto family = r.u<std::uint16_t>();
  if (family > 1) throw FormatError("model file: unknown mixing family tag");
  const auto k = r.u<std::uint32_t>();
  const auto m = r.u<std::uint32_t>();
  if (k < 1 || m < 1) throw FormatError("model file: empty model");
  if (k > (1u << 20) || m > (1u << 24)) {
    throw FormatError("model file: implausible header counts");
  }

  HdMedModel model;
  model.weights.resize(static_cast<Index>(k));
  for (std::uint32_t j = 0; j < k; ++j) {
    model.weights[static_cast<Index>(j)] = r.f64();
    const auto d = r.u<std::uint32_t>();
    if (d < 1 || d > m) throw FormatError("model file: component rank out of range");
    const double alpha = r.f64();
    const double beta = r.f64();
    HdEdComponent c;
    c.b = r.f64();
    c.a.resize(static_cast<Index>(d));
    r.raw(c.a.data(), sizeof(double) * d);
    c.mu.resize(static_cast<Index>(m));
    r.raw(c.mu.data(), sizeof(double) * m);
    c.dstar.resize(static_cast<Index>(m), static_cast<Index>(d));
    r.raw(c.dstar.data(), sizeof(double) * m * d);
    c.mixing = family == 0 ? MixingFamily::gaussian() : MixingFamily::gamma_mix(alpha, beta);
    model.components.push_back(std::move(c));
  }
  if (!r.done()) throw FormatError("model file: trailing bytes");
  try {
    model.validate();
  } catch (const std::exception& e) {
    throw FormatError(std::string("model file: invalid contents: ") + e.what());
  }
  return model;
}

HdMedModel deserialize_model(const std::vector<unsigned char>& bytes) {
  return deserialize_model(bytes.data(), bytes.size());
}

void save_model(const HdMedModel& model, const std::string& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

HdMedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open: " + path);
  const auto size = static_cast<std::size_t>(in.tellg());
  std::vector<unsigned char> bytes(size);
  in.seekg(0);
  if (size > 0) {
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  }
  if (!in) throw IoError("read failed: " + path);
  return deserialize_model(bytes);
}

}  // namespace hdmed
