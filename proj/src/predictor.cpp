#include "dsgd/predictor.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <ostream>
#include <string>

#include "dsgd/dataset.hpp"
#include "dsgd/error.hpp"
#include "dsgd/parallel.hpp"

namespace dsgd {

namespace {

constexpr char kMagic[8] = {'D', 'S', 'G', 'D', 'M', 'O', 'D', 'L'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kEndianTag = 0x01020304;
constexpr std::size_t kRowChunk = 1024;

void check_dim(const Model& model, Eigen::Index cols) {
  if (static_cast<std::size_t>(cols) != model.dim) {
    throw DataError("input has " + std::to_string(cols) + " features but the model expects " +
                    std::to_string(model.dim));
  }
}

class Writer {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_arithmetic_v<T>);
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    buf_.append(reinterpret_cast<const char*>(b), sizeof(T));
  }
  void put_doubles(const std::vector<double>& v) {
    put<std::uint64_t>(v.size());
    for (double x : v) put(x);
  }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& buf, std::size_t end) : buf_(buf), end_(end) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    unsigned char b[sizeof(T)];
    std::memcpy(b, buf_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
  std::vector<double> get_doubles() {
    const auto n = get<std::uint64_t>();
    if (n > (end_ - pos_) / sizeof(double)) throw FormatError("model file truncated");
    std::vector<double> v(n);
    for (auto& x : v) x = get<double>();
    return v;
  }
  void need(std::size_t n) const {
    if (end_ - pos_ < n) throw FormatError("model file truncated");
  }
  std::size_t remaining() const { return end_ - pos_; }
  const char* cursor() const { return buf_.data() + pos_; }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }

 private:
  const std::string& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const char* p, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(p), chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

const FeatureBlock& BlockCache::get(const KernelSpec& kernel, std::size_t dim,
                                    std::size_t block_size, std::uint64_t base_seed,
                                    std::uint64_t block_index) {
  if (!keyed_ || kernel_ != kernel || dim_ != dim || block_size_ != block_size ||
      base_seed_ != base_seed) {
    clear();
    kernel_ = kernel;
    dim_ = dim;
    block_size_ = block_size;
    base_seed_ = base_seed;
    keyed_ = true;
  }
  if (block_index >= blocks_.size()) blocks_.resize(block_index + 1);
  auto& slot = blocks_[block_index];
  if (!slot) {
    slot = sample_block(kernel, dim, block_size, base_seed, block_index);
    ++filled_;
  }
  return *slot;
}

void BlockCache::clear() noexcept {
  blocks_.clear();
  filled_ = 0;
  keyed_ = false;
}

void accumulate_block_scores(const KernelSpec& kernel, std::size_t dim, std::size_t block_size,
                             std::size_t outputs, std::uint64_t base_seed,
                             std::span<const double> coefficients, std::size_t n_blocks,
                             const Eigen::Ref<const RowMatrix>& X, Eigen::Ref<RowMatrix> out,
                             BlockCache* cache) {
  const std::size_t stride = outputs * block_size;
  if (coefficients.size() < n_blocks * stride) {
    throw InvalidArgument("coefficient storage holds fewer blocks than requested");
  }
  if (static_cast<std::size_t>(X.cols()) != dim) {
    throw DataError("input has " + std::to_string(X.cols()) + " features, expected " +
                    std::to_string(dim));
  }
  if (out.rows() != X.rows() || static_cast<std::size_t>(out.cols()) != outputs) {
    throw InvalidArgument("output buffer has the wrong shape");
  }
  const std::size_t n = static_cast<std::size_t>(X.rows());
  if (n == 0) return;
  FeatureBlock local;
  for (std::size_t s = 0; s < n_blocks; ++s) {
    const FeatureBlock* block;
    if (cache) {
      block = &cache->get(kernel, dim, block_size, base_seed, s + 1);
    } else {
      local = sample_block(kernel, dim, block_size, base_seed, s + 1);
      block = &local;
    }
    const double* coef = coefficients.data() + s * stride;
    std::vector<double> coef_t(outputs > 1 ? stride : 0);
    if (outputs > 1) detail::transpose_block(coef, block_size, outputs, coef_t.data());
    parallel_for(n, kRowChunk, [&](std::size_t begin, std::size_t end) {
      RowMatrix phi;
      std::vector<double> scratch(outputs);
      for (std::size_t c0 = begin; c0 < end; c0 += kRowChunk) {
        const std::size_t c1 = std::min(end, c0 + kRowChunk);
        const auto rows = static_cast<Eigen::Index>(c1 - c0);
        phi.resize(rows, static_cast<Eigen::Index>(block_size));
        featurize_into(*block, kernel, X.middleRows(static_cast<Eigen::Index>(c0), rows), phi);
        for (Eigen::Index i = 0; i < rows; ++i) {
          detail::add_scores(phi.row(i).data(), coef, coef_t.data(), block_size, outputs,
                             out.row(static_cast<Eigen::Index>(c0) + i).data(), scratch.data());
        }
      }
    });
  }
}

RowMatrix predict(const Model& model, const Eigen::Ref<const RowMatrix>& X, BlockCache* cache) {
  check_dim(model, X.cols());
  RowMatrix out = RowMatrix::Zero(X.rows(), static_cast<Eigen::Index>(model.outputs));
  accumulate_block_scores(model.kernel, model.dim, model.block_size, model.outputs,
                          model.base_seed, model.coefficients,
                          static_cast<std::size_t>(model.iterations), X, out, cache);
  out *= model.scale;
  return out;
}

RowMatrix predict_averaged(const Model& model, const Eigen::Ref<const RowMatrix>& X,
                           BlockCache* cache) {
  if (!model.has_averaging()) throw InvalidArgument("model was trained without averaging");
  check_dim(model, X.cols());
  RowMatrix out = RowMatrix::Zero(X.rows(), static_cast<Eigen::Index>(model.outputs));
  accumulate_block_scores(model.kernel, model.dim, model.block_size, model.outputs,
                          model.base_seed, model.averaged,
                          static_cast<std::size_t>(model.iterations), X, out, cache);
  return out;
}

void save_model(const Model& model, std::ostream& out) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.put(kVersion);
  w.put(kEndianTag);
  w.put(static_cast<std::uint8_t>(model.kernel.family));
  w.put(model.kernel.bandwidth);
  w.put(model.kernel.order);
  w.put(model.kernel.degree);
  w.put(model.kernel.bias);
  w.put(model.kernel.sketch_dim);
  w.put(static_cast<std::uint8_t>(model.loss.kind));
  w.put(model.loss.num_classes);
  w.put(model.loss.epsilon);
  w.put(model.loss.quantile);
  w.put<std::uint64_t>(model.dim);
  w.put<std::uint64_t>(model.outputs);
  w.put(model.base_seed);
  w.put(model.theta);
  w.put(model.nu);
  w.put<std::uint64_t>(model.block_size);
  w.put(model.iterations);
  w.put(model.scale);
  w.put<std::uint8_t>(model.tau.has_value());
  w.put(model.tau.value_or(0.0));
  w.put<std::uint8_t>(model.averaging_enabled);
  w.put_doubles(model.coefficients);
  w.put_doubles(model.averaged);
  const std::uint32_t crc = crc_of(w.bytes().data(), w.bytes().size());
  w.put(crc);
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw std::runtime_error("failed to write model");
}

Model load_model(std::istream& in) {
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof kMagic + 8 || std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError("not a model file (bad magic or truncated header)");
  }
  Reader header(buf, buf.size());
  header.skip(sizeof kMagic);
  const auto version = header.get<std::uint32_t>();
  if (version != kVersion) {
    throw FormatError("unsupported model file version " + std::to_string(version) + " (expected " +
                      std::to_string(kVersion) + ")");
  }
  if (header.get<std::uint32_t>() != kEndianTag) throw FormatError("bad endianness tag");
  if (buf.size() < sizeof kMagic + 12) throw FormatError("model file truncated");
  const std::size_t body = buf.size() - 4;
  std::uint32_t stored_crc;
  {
    Reader tail(buf, buf.size());
    tail.skip(body);
    stored_crc = tail.get<std::uint32_t>();
  }
  if (crc_of(buf.data(), body) != stored_crc) {
    throw FormatError("model file checksum mismatch (corrupted or truncated)");
  }

  Reader r(buf, body);
  r.skip(sizeof kMagic + 8);
  Model m;
  const auto family = r.get<std::uint8_t>();
  if (family > static_cast<std::uint8_t>(KernelFamily::linear)) throw FormatError("unknown kernel family");
  m.kernel.family = static_cast<KernelFamily>(family);
  m.kernel.bandwidth = r.get<double>();
  m.kernel.order = r.get<std::uint32_t>();
  m.kernel.degree = r.get<std::uint32_t>();
  m.kernel.bias = r.get<double>();
  m.kernel.sketch_dim = r.get<std::uint32_t>();
  const auto kind = r.get<std::uint8_t>();
  if (kind > static_cast<std::uint8_t>(LossKind::kl_density_ratio)) throw FormatError("unknown loss kind");
  m.loss.kind = static_cast<LossKind>(kind);
  m.loss.num_classes = r.get<std::uint32_t>();
  m.loss.epsilon = r.get<double>();
  m.loss.quantile = r.get<double>();
  m.dim = r.get<std::uint64_t>();
  m.outputs = r.get<std::uint64_t>();
  m.base_seed = r.get<std::uint64_t>();
  m.theta = r.get<double>();
  m.nu = r.get<double>();
  m.block_size = r.get<std::uint64_t>();
  m.iterations = r.get<std::uint64_t>();
  m.scale = r.get<double>();
  const bool has_tau = r.get<std::uint8_t>() != 0;
  const double tau = r.get<double>();
  if (has_tau) m.tau = tau;
  m.averaging_enabled = r.get<std::uint8_t>() != 0;
  m.coefficients = r.get_doubles();
  m.averaged = r.get_doubles();
  if (r.remaining() != 0) throw FormatError("trailing bytes in model file");
  if (m.coefficients.size() != m.iterations * m.block_stride() ||
      (!m.averaged.empty() && m.averaged.size() != m.coefficients.size())) {
    throw FormatError("coefficient count does not match the model header");
  }
  try {
    m.kernel.validate();
    m.loss.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("invalid model parameters: ") + e.what());
  }
  return m;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  save_model(model, out);
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file " + path.string());
  return load_model(in);
}

void write_predictions_csv(const RowMatrix& scores, std::ostream& out) {
  out << "row";
  if (scores.cols() == 1) {
    out << ",score";
  } else {
    for (Eigen::Index k = 0; k < scores.cols(); ++k) out << ",score_" << k;
  }
  out << '\n';
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    out << i;
    for (Eigen::Index k = 0; k < scores.cols(); ++k) out << ',' << format_double(scores(i, k));
    out << '\n';
  }
}

}  // namespace dsgd
