#pragma once

// Single-file model archives.
//
//   [u64 little-endian manifest length L][L bytes of JSON manifest][blob]
//
// The manifest is compact JSON with sorted keys. The blob holds every tensor
// of tensor_specs(config), in that order, as little-endian IEEE floats of the
// manifest's dtype, with no padding. A tied model has no "output_w" tensor;
// the manifest records "aliases": {"output_w": "embedding"} instead.
// Top-level manifest keys starting with "x-" are optional extensions,
// preserved across load/save; any other unknown key is rejected.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "slimdec/config.hpp"
#include "slimdec/config_json.hpp"
#include "slimdec/errors.hpp"
#include "slimdec/lookup.hpp"
#include "slimdec/weights.hpp"

namespace slimdec {

inline constexpr int kArchiveFormatVersion = 1;
inline constexpr const char *kModelFormat = "slimdec-model";
inline constexpr const char *kLookupFormat = "slimdec-lookup";

enum class StorageType { F64, F32 };

inline const char *to_string(StorageType t) { return t == StorageType::F64 ? "f64" : "f32"; }
inline std::size_t width_of(StorageType t) { return t == StorageType::F64 ? 8 : 4; }

struct ModelArchive {
  DecoderConfig config;
  ModelWeights weights;
  std::uint64_t seed = 0;
  StorageType dtype = StorageType::F64;
  Json extensions = Json::object();  // "x-" keys
};

namespace detail {

using Bytes = std::vector<std::uint8_t>;

inline void put_u64(Bytes &out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_u64(const std::uint8_t *p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

inline void put_value(Bytes &out, double v, StorageType t) {
  if (t == StorageType::F64) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
  } else {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
}

inline double get_value(const std::uint8_t *p, StorageType t) {
  if (t == StorageType::F64) return std::bit_cast<double>(get_u64(p));
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return static_cast<double>(std::bit_cast<float>(bits));
}

inline StorageType parse_dtype(const Json &j) {
  if (!j.is_string()) throw UnsupportedFormatError("archive dtype missing or not a string");
  const auto s = j.get<std::string>();
  if (s == "f64") return StorageType::F64;
  if (s == "f32") return StorageType::F32;
  throw UnsupportedFormatError("archive dtype '" + s + "' not supported");
}

struct TensorBlob {
  std::string name;
  std::size_t rows, cols;
  const Matrix *data;
};

inline Bytes pack(Json manifest, const std::vector<TensorBlob> &tensors, StorageType dtype) {
  Json dir = Json::array();
  std::size_t offset = 0;
  for (const auto &t : tensors) {
    dir.push_back({{"name", t.name}, {"offset", offset}, {"rows", t.rows}, {"cols", t.cols}, {"dtype", to_string(dtype)}});
    offset += t.rows * t.cols * width_of(dtype);
  }
  manifest["tensors"] = dir;
  manifest["dtype"] = to_string(dtype);
  manifest["format_version"] = kArchiveFormatVersion;
  const std::string text = manifest.dump();
  Bytes out;
  out.reserve(8 + text.size() + offset);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto &t : tensors)
    for (double v : t.data->flat()) put_value(out, v, dtype);
  return out;
}

struct Unpacked {
  Json manifest;
  StorageType dtype;
  const std::uint8_t *blob;
  std::size_t blob_size;
};

inline Unpacked unpack(const Bytes &bytes, const char *expected_format) {
  if (bytes.size() < 8) throw CorruptionError("archive shorter than its length prefix");
  const std::uint64_t len = get_u64(bytes.data());
  if (len > bytes.size() - 8) throw CorruptionError("manifest length exceeds archive size");
  Unpacked u;
  try {
    u.manifest = Json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(len));
  } catch (const Json::exception &e) {
    throw CorruptionError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!u.manifest.is_object()) throw CorruptionError("manifest is not a JSON object");
  if (!u.manifest.contains("format_version") || !u.manifest["format_version"].is_number_integer())
    throw UnsupportedFormatError("archive has no format_version");
  if (u.manifest["format_version"].get<long long>() != kArchiveFormatVersion)
    throw UnsupportedFormatError("archive format_version " + u.manifest["format_version"].dump() +
                                 " not supported (expected " + std::to_string(kArchiveFormatVersion) + ")");
  if (!u.manifest.contains("format") || u.manifest["format"] != expected_format)
    throw UnsupportedFormatError(std::string("archive is not a ") + expected_format + " archive");
  u.dtype = parse_dtype(u.manifest.value("dtype", Json()));
  u.blob = bytes.data() + 8 + len;
  u.blob_size = bytes.size() - 8 - len;
  return u;
}

// Reads one directory entry into m, checking it lies inside the blob.
inline void read_tensor(const Unpacked &u, const Json &entry, Matrix &m) {
  const std::string name = entry.value("name", "?");
  if (!entry.contains("offset") || !entry.contains("rows") || !entry.contains("cols"))
    throw ValidationError("tensor '" + name + "' directory entry is incomplete");
  const auto offset = entry["offset"].get<std::size_t>();
  const auto rows = entry["rows"].get<std::size_t>();
  const auto cols = entry["cols"].get<std::size_t>();
  if (parse_dtype(entry.value("dtype", Json())) != u.dtype)
    throw UnsupportedFormatError("tensor '" + name + "' dtype differs from archive dtype");
  const std::size_t w = width_of(u.dtype);
  if (offset > u.blob_size || rows * cols * w > u.blob_size - offset)
    throw CorruptionError("tensor '" + name + "' extends past the end of the blob (" + std::to_string(u.blob_size) +
                          " bytes)");
  m = Matrix(rows, cols);
  for (std::size_t k = 0; k < rows * cols; ++k) m.data()[k] = get_value(u.blob + offset + k * w, u.dtype);
}

inline std::size_t expected_blob_size(const Json &dir, StorageType dtype) {
  std::size_t total = 0;
  for (const auto &e : dir) total += e.value("rows", std::size_t{0}) * e.value("cols", std::size_t{0});
  return total * width_of(dtype);
}

inline void write_file(const std::filesystem::path &path, const Bytes &bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write to '" + path.string() + "' failed");
}

inline Bytes read_file(const std::filesystem::path &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for reading");
  Bytes bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (f.bad()) throw IoError("read from '" + path.string() + "' failed");
  return bytes;
}

}  // namespace detail

inline detail::Bytes encode_model(const ModelArchive &a) {
  a.config.validate();
  Json manifest = Json::object();
  for (auto it = a.extensions.begin(); it != a.extensions.end(); ++it) manifest[it.key()] = it.value();
  manifest["format"] = kModelFormat;
  manifest["config"] = to_json(a.config);
  manifest["seed"] = a.seed;
  manifest["aliases"] = a.config.tied ? Json{{"output_w", "embedding"}} : Json::object();
  std::vector<detail::TensorBlob> tensors;
  for (const auto &spec : tensor_specs(a.config)) {
    const Matrix &m = tensor_by_name(a.weights, spec.name);
    if (m.rows() != spec.rows || m.cols() != spec.cols)
      throw ShapeError("tensor '" + spec.name + "' is " + shape_string(m.rows(), m.cols()) + ", config implies " +
                       shape_string(spec.rows, spec.cols));
    tensors.push_back({spec.name, spec.rows, spec.cols, &m});
  }
  return detail::pack(std::move(manifest), tensors, a.dtype);
}

inline ModelArchive decode_model(const detail::Bytes &bytes) {
  auto u = detail::unpack(bytes, kModelFormat);
  static const std::set<std::string> known = {"format", "format_version", "dtype", "config",
                                              "seed",   "tensors",        "aliases"};
  ModelArchive a;
  a.dtype = u.dtype;
  for (auto it = u.manifest.begin(); it != u.manifest.end(); ++it) {
    if (it.key().rfind("x-", 0) == 0)
      a.extensions[it.key()] = it.value();
    else if (!known.count(it.key()))
      throw ValidationError("manifest has unknown required field '" + it.key() + "'");
  }
  if (!u.manifest.contains("config")) throw ValidationError("manifest has no config");
  try {
    a.config = decoder_config_from_json(u.manifest["config"], "/config");
    a.config.validate();
  } catch (const Error &e) {
    throw ValidationError(std::string("invalid config: ") + e.what());
  }
  a.seed = u.manifest.value("seed", std::uint64_t{0});
  const Json aliases = u.manifest.value("aliases", Json::object());
  const bool alias_recorded = aliases.contains("output_w") && aliases["output_w"] == "embedding";
  if (a.config.tied != alias_recorded)
    throw ValidationError("tying flag and recorded output_w alias disagree");

  const Json &dir = u.manifest.value("tensors", Json::array()).is_array() ? u.manifest["tensors"] : Json::array();
  const auto specs = tensor_specs(a.config);
  if (dir.size() != specs.size())
    throw ValidationError("manifest lists " + std::to_string(dir.size()) + " tensors, config implies " +
                          std::to_string(specs.size()));
  a.weights = zero_weights(a.config);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (dir[i].value("name", "") != specs[i].name)
      throw ValidationError("tensor " + std::to_string(i) + " is '" + dir[i].value("name", "") + "', expected '" +
                            specs[i].name + "'");
    Matrix &m = tensor_by_name(a.weights, specs[i].name);
    detail::read_tensor(u, dir[i], m);
    if (m.rows() != specs[i].rows || m.cols() != specs[i].cols)
      throw ValidationError("tensor '" + specs[i].name + "' has shape " + shape_string(m.rows(), m.cols()) +
                            ", config implies " + shape_string(specs[i].rows, specs[i].cols));
    if (!all_finite<double>(m.flat())) throw ValidationError("tensor '" + specs[i].name + "' has non-finite entries");
  }
  if (u.blob_size != detail::expected_blob_size(dir, u.dtype))
    throw CorruptionError("blob is " + std::to_string(u.blob_size) + " bytes, directory describes " +
                          std::to_string(detail::expected_blob_size(dir, u.dtype)));
  for (double x : a.weights.embedding.row(a.config.pad_id()))
    if (x != 0.0) throw ValidationError("start-pad embedding row is not zero");
  return a;
}

inline void save_model(const ModelArchive &a, const std::filesystem::path &path) {
  detail::write_file(path, encode_model(a));
}

inline void save_model(const ModelWeights &w, const DecoderConfig &cfg, const std::filesystem::path &path,
                       std::uint64_t seed = 0, StorageType dtype = StorageType::F64) {
  save_model(ModelArchive{cfg, w, seed, dtype, Json::object()}, path);
}

inline ModelArchive load_model(const std::filesystem::path &path) { return decode_model(detail::read_file(path)); }

// Byte size of the float blob of a model archive.
inline std::size_t blob_bytes(const detail::Bytes &archive) {
  const std::uint64_t len = detail::get_u64(archive.data());
  return archive.size() - 8 - len;
}

inline detail::Bytes encode_lookup(const LookupTable &table, const DecoderConfig &source,
                                   StorageType dtype = StorageType::F64) {
  Json manifest = {{"format", kLookupFormat},
                   {"arity", table.arity},
                   {"alphabet", table.alphabet},
                   {"dim", table.table.cols()},
                   {"source_config", to_json(source)}};
  return detail::pack(std::move(manifest), {{"table", table.table.rows(), table.table.cols(), &table.table}}, dtype);
}

inline LookupTable decode_lookup(const detail::Bytes &bytes) {
  auto u = detail::unpack(bytes, kLookupFormat);
  LookupTable t;
  t.arity = u.manifest.value("arity", std::size_t{0});
  t.alphabet = u.manifest.value("alphabet", std::size_t{0});
  const Json &dir = u.manifest["tensors"];
  if (!dir.is_array() || dir.size() != 1) throw ValidationError("lookup archive must hold exactly one tensor");
  detail::read_tensor(u, dir[0], t.table);
  std::size_t expected = 1;
  for (std::size_t k = 0; k < t.arity; ++k) expected *= t.alphabet;
  if (t.table.rows() != expected) throw ValidationError("lookup table row count differs from alphabet^arity");
  if (u.blob_size != detail::expected_blob_size(dir, u.dtype)) throw CorruptionError("lookup blob size mismatch");
  return t;
}

inline void save_lookup(const LookupTable &table, const DecoderConfig &source, const std::filesystem::path &path) {
  detail::write_file(path, encode_lookup(table, source));
}

inline LookupTable load_lookup(const std::filesystem::path &path) { return decode_lookup(detail::read_file(path)); }

}  // namespace slimdec
