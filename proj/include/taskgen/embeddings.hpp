#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "taskgen/error.hpp"
#include "taskgen/parallel.hpp"

namespace taskgen {

using ClassId = std::uint32_t;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-sample embedding vectors tagged with class ids, in file order.
struct EmbeddingTable {
  std::vector<ClassId> labels;
  RowMatrix vectors;  // one row per sample

  std::size_t dim() const noexcept { return static_cast<std::size_t>(vectors.cols()); }
  std::size_t size() const noexcept { return labels.size(); }

  bool operator==(const EmbeddingTable& other) const {
    return labels == other.labels && vectors.rows() == other.vectors.rows() &&
           vectors.cols() == other.vectors.cols() && vectors == other.vectors;
  }
};

/// One mean embedding per class; rows follow `class_ids`, which are sorted
/// ascending.
struct ClassEmbeddingSet {
  std::vector<ClassId> class_ids;
  RowMatrix means;
  bool normalized = false;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(means.cols()); }
  std::size_t size() const noexcept { return class_ids.size(); }

  /// Row index of `id`, or size() when absent.
  std::size_t index_of(ClassId id) const {
    const auto it = std::lower_bound(class_ids.begin(), class_ids.end(), id);
    if (it == class_ids.end() || *it != id) return size();
    return static_cast<std::size_t>(it - class_ids.begin());
  }
};

enum class SampleFormat { Csv, Binary };

namespace detail {

inline constexpr char kMagic[4] = {'A', 'T', 'G', 'E'};
inline constexpr std::uint16_t kBinaryVersion = 1;

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    fields.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

template <typename T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class ByteReader {
 public:
  explicit ByteReader(std::string data) : data_(std::move(data)) {}

  template <typename T>
  T get(const char* field) {
    if (data_.size() - pos_ < sizeof(T)) {
      throw ParseError(ParseError::Kind::Truncated, pos_,
                       "truncated binary stream at byte offset " + std::to_string(pos_) + " while reading " + field);
    }
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return value;
  }

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  const std::string& data() const noexcept { return data_; }

 private:
  std::string data_;
  std::size_t pos_ = 0;
};

inline EmbeddingTable parse_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  bool have_header = false;
  std::vector<ClassId> labels;
  std::vector<double> values;

  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    const auto fields = split_commas(view);
    if (!have_header) {
      if (fields.size() < 2 || fields[0] != "class_id") {
        throw ParseError(ParseError::Kind::BadHeader, line_no,
                         "line " + std::to_string(line_no) + ": expected header 'class_id,f0,...'");
      }
      for (std::size_t j = 1; j < fields.size(); ++j) {
        if (fields[j] != "f" + std::to_string(j - 1)) {
          throw ParseError(ParseError::Kind::BadHeader, line_no,
                           "line " + std::to_string(line_no) + ": header column " + std::to_string(j) +
                               " should be 'f" + std::to_string(j - 1) + "'");
        }
      }
      dim = fields.size() - 1;
      have_header = true;
      continue;
    }
    if (fields.size() != dim + 1) {
      throw ParseError(ParseError::Kind::InconsistentWidth, line_no,
                       "line " + std::to_string(line_no) + ": expected " + std::to_string(dim + 1) +
                           " fields, found " + std::to_string(fields.size()));
    }
    ClassId id = 0;
    {
      const auto f = fields[0];
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), id);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw ParseError(ParseError::Kind::Malformed, line_no,
                         "line " + std::to_string(line_no) + ": invalid class_id '" + std::string(f) + "'");
      }
    }
    labels.push_back(id);
    for (std::size_t j = 1; j <= dim; ++j) {
      const auto f = fields[j];
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw ParseError(ParseError::Kind::Malformed, line_no,
                         "line " + std::to_string(line_no) + ": invalid number '" + std::string(f) + "' in column " +
                             std::to_string(j));
      }
      if (!std::isfinite(v)) {
        throw ParseError(ParseError::Kind::NonFinite, line_no,
                         "line " + std::to_string(line_no) + ": non-finite value in column " + std::to_string(j));
      }
      values.push_back(v);
    }
  }
  if (labels.empty()) throw ParseError(ParseError::Kind::Empty, line_no, "no samples");

  EmbeddingTable table;
  table.labels = std::move(labels);
  table.vectors = Eigen::Map<RowMatrix>(values.data(), static_cast<Eigen::Index>(table.labels.size()),
                                        static_cast<Eigen::Index>(dim));
  return table;
}

inline EmbeddingTable parse_binary(std::string bytes) {
  if (bytes.empty()) throw ParseError(ParseError::Kind::Empty, 0, "no samples");
  ByteReader r(std::move(bytes));
  if (r.remaining() < 4 || !std::equal(kMagic, kMagic + 4, r.data().begin())) {
    throw ParseError(ParseError::Kind::BadHeader, 0, "byte offset 0: missing ATGE magic");
  }
  r.get<std::uint32_t>("magic");
  const std::size_t version_at = r.offset();
  const auto version = r.get<std::uint16_t>("version");
  if (version != kBinaryVersion) {
    throw ParseError(ParseError::Kind::BadHeader, version_at,
                     "byte offset " + std::to_string(version_at) + ": unsupported version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>("num_samples");
  const std::size_t dim_at = r.offset();
  const auto dim = r.get<std::uint32_t>("dim");
  if (dim == 0) {
    throw ParseError(ParseError::Kind::BadHeader, dim_at, "byte offset " + std::to_string(dim_at) + ": dim is zero");
  }
  if (count == 0) throw ParseError(ParseError::Kind::Empty, r.offset(), "no samples");

  EmbeddingTable table;
  table.labels.reserve(count);
  table.vectors.resize(count, dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    table.labels.push_back(r.get<std::uint32_t>("class_id"));
    for (std::uint32_t j = 0; j < dim; ++j) {
      const std::size_t at = r.offset();
      const float v = std::bit_cast<float>(r.get<std::uint32_t>("value"));
      if (!std::isfinite(v)) {
        throw ParseError(ParseError::Kind::NonFinite, at,
                         "byte offset " + std::to_string(at) + ": non-finite value (sample " + std::to_string(i) + ")");
      }
      table.vectors(i, j) = static_cast<double>(v);
    }
  }
  if (r.remaining() != 0) {
    throw ParseError(ParseError::Kind::Malformed, r.offset(),
                     "byte offset " + std::to_string(r.offset()) + ": " + std::to_string(r.remaining()) +
                         " trailing bytes");
  }
  return table;
}

}  // namespace detail

/// Reads a sample table from `in` in the given format.
inline EmbeddingTable load_samples(std::istream& in, SampleFormat format) {
  if (format == SampleFormat::Csv) return detail::parse_csv(in);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return detail::parse_binary(std::move(buffer).str());
}

/// Reads a sample table, detecting the binary format by its magic bytes.
inline EmbeddingTable load_samples(std::istream& in) {
  std::ostringstream buffer;
  buffer << in.rdbuf();
  std::string bytes = std::move(buffer).str();
  if (bytes.size() >= 4 && std::equal(detail::kMagic, detail::kMagic + 4, bytes.begin())) {
    return detail::parse_binary(std::move(bytes));
  }
  std::istringstream text(std::move(bytes));
  return detail::parse_csv(text);
}

/// Writes `table`. The binary format stores float32, so values are rounded;
/// tables whose values are float-representable round-trip exactly.
inline void save_samples(std::ostream& out, const EmbeddingTable& table, SampleFormat format) {
  const std::size_t dim = table.dim();
  if (format == SampleFormat::Binary) {
    out.write(detail::kMagic, 4);
    detail::put_le<std::uint16_t>(out, detail::kBinaryVersion);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(table.size()));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim));
    for (std::size_t i = 0; i < table.size(); ++i) {
      detail::put_le<std::uint32_t>(out, table.labels[i]);
      for (std::size_t j = 0; j < dim; ++j) {
        detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(table.vectors(i, j))));
      }
    }
    return;
  }
  out << "class_id";
  for (std::size_t j = 0; j < dim; ++j) out << ",f" << j;
  out << '\n';
  char buf[64];
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table.labels[i];
    for (std::size_t j = 0; j < dim; ++j) {
      const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), table.vectors(i, j));
      out << ',' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
    }
    out << '\n';
  }
}

/// Per-class arithmetic means, rows sorted by class id. Each class is summed
/// in sample order, so the result does not depend on `threads`.
inline ClassEmbeddingSet class_means(const EmbeddingTable& table, std::size_t threads = 1) {
  if (table.size() == 0) throw InvalidArgument("class_means: empty table");
  std::map<ClassId, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < table.size(); ++i) members[table.labels[i]].push_back(i);

  ClassEmbeddingSet set;
  set.class_ids.reserve(members.size());
  std::vector<const std::vector<std::size_t>*> rows;
  for (const auto& [id, idx] : members) {
    set.class_ids.push_back(id);
    rows.push_back(&idx);
  }
  set.means.resize(static_cast<Eigen::Index>(members.size()), table.vectors.cols());
  parallel_for(rows.size(), threads, [&](std::size_t c) {
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(table.vectors.cols());
    for (const std::size_t i : *rows[c]) sum += table.vectors.row(static_cast<Eigen::Index>(i));
    set.means.row(static_cast<Eigen::Index>(c)) = sum / static_cast<double>(rows[c]->size());
  });
  return set;
}

/// Scales every row to unit Euclidean norm.
inline ClassEmbeddingSet normalize_unit(ClassEmbeddingSet set) {
  for (Eigen::Index i = 0; i < set.means.rows(); ++i) {
    const double norm = set.means.row(i).norm();
    if (!(norm > 0.0)) {
      throw InvalidArgument("normalize_unit: class " + std::to_string(set.class_ids[static_cast<std::size_t>(i)]) +
                            " has a zero-norm embedding");
    }
    set.means.row(i) /= norm;
  }
  set.normalized = true;
  return set;
}

}  // namespace taskgen
