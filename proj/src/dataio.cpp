#include "xmodal/dataio.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace xmodal {

namespace {

constexpr char kMagic[4] = {'L', 'M', 'T', 'R'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

void put_i32(std::vector<std::uint8_t>& out, std::int32_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

void put_matrix(std::vector<std::uint8_t>& out, const FeatureMatrix& m) {
  for (double v : m.data) put_f32(out, static_cast<float>(v));
}

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  void need(std::size_t n) const {
    if (pos_ + n > size_) throw std::runtime_error("truncated file");
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = static_cast<std::uint32_t>(data_[pos_]) |
                      (static_cast<std::uint32_t>(data_[pos_ + 1]) << 8) |
                      (static_cast<std::uint32_t>(data_[pos_ + 2]) << 16) |
                      (static_cast<std::uint32_t>(data_[pos_ + 3]) << 24);
    pos_ += 4;
    return v;
  }

  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }

  // Bounds are checked against the file size before the destination matrix is
  // allocated, so declared counts can never drive an oversized allocation.
  FeatureMatrix matrix(std::size_t rows, std::size_t dim) {
    need(rows * dim * 4);
    FeatureMatrix m(rows, dim);
    for (std::size_t i = 0; i < rows * dim; ++i) {
      std::uint32_t bits = static_cast<std::uint32_t>(data_[pos_]) |
                           (static_cast<std::uint32_t>(data_[pos_ + 1]) << 8) |
                           (static_cast<std::uint32_t>(data_[pos_ + 2]) << 16) |
                           (static_cast<std::uint32_t>(data_[pos_ + 3]) << 24);
      pos_ += 4;
      m.data[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    return m;
  }

  bool done() const { return pos_ == size_; }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::string checksum_hex(std::uint64_t sum) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[sum & 0xf];
    sum >>= 4;
  }
  return s;
}

std::filesystem::path manifest_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

}  // namespace

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size) {
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 1099511628211ull;
  }
  return h;
}

void validate_corpus(const Corpus& corpus) {
  if (corpus.studies.empty()) throw std::runtime_error("empty corpus");
  if (corpus.dim == 0) throw std::runtime_error("corpus dim must be positive");
  if (corpus.grid.cells() == 0) throw std::runtime_error("corpus grid must be non-empty");
  const std::size_t cells = corpus.grid.cells();
  for (const Study& s : corpus.studies) {
    auto fail = [&](const std::string& what) {
      throw std::runtime_error("study '" + s.id + "': " + what);
    };
    if (s.grid != corpus.grid) fail("grid differs from corpus grid");
    if (s.frontal.rows != cells || s.frontal.dim != corpus.dim) fail("frontal shape mismatch");
    if (!all_finite(s.frontal)) fail("non-finite frontal features");
    if (s.lateral) {
      if (s.lateral->rows != cells || s.lateral->dim != corpus.dim) fail("lateral shape mismatch");
      if (!all_finite(*s.lateral)) fail("non-finite lateral features");
    }
    if (s.tokens.dim != corpus.dim) fail("token dim mismatch");
    if (s.tokens.rows == 0) fail("no tokens");
    if (s.tokens.rows > kTokenCap) fail("token count exceeds cap");
    if (!all_finite(s.tokens)) fail("non-finite token features");
    if (s.token_mask.size() != s.tokens.rows) fail("token mask length mismatch");
    std::size_t visible = 0;
    for (std::size_t t = 0; t < s.tokens.rows; ++t) {
      if (!s.token_mask[t]) continue;
      ++visible;
      if (row_is_zero(s.tokens.row(t))) fail("visible token row is all zero");
    }
    if (visible == 0) fail("no visible tokens");
    for (const GroundingRecord& g : s.grounding) {
      if (g.w == 0 || g.h == 0) fail("grounding box is empty");
      if (g.x + g.w > corpus.grid.width || g.y + g.h > corpus.grid.height) {
        fail("grounding box out of grid bounds");
      }
      if (g.token_indices.empty()) fail("grounding phrase is empty");
      for (std::size_t idx : g.token_indices) {
        if (idx >= s.tokens.rows) fail("grounding token index out of range");
        if (!s.token_mask[idx]) fail("grounding token is masked");
      }
    }
  }
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  validate_corpus(corpus);

  std::vector<std::uint8_t> buf;
  buf.insert(buf.end(), kMagic, kMagic + 4);
  put_u32(buf, kFormatVersion);
  put_u32(buf, static_cast<std::uint32_t>(corpus.dim));
  put_u32(buf, static_cast<std::uint32_t>(corpus.grid.height));
  put_u32(buf, static_cast<std::uint32_t>(corpus.grid.width));
  put_u32(buf, static_cast<std::uint32_t>(corpus.studies.size()));

  for (const Study& s : corpus.studies) {
    put_u32(buf, static_cast<std::uint32_t>(s.id.size()));
    buf.insert(buf.end(), s.id.begin(), s.id.end());
    buf.push_back(s.lateral ? 1 : 0);
    put_u32(buf, static_cast<std::uint32_t>(s.tokens.rows));
    put_matrix(buf, s.frontal);
    if (s.lateral) put_matrix(buf, *s.lateral);
    put_matrix(buf, s.tokens);
    for (std::uint8_t m : s.token_mask) buf.push_back(m ? 1 : 0);
    put_i32(buf, s.label ? *s.label : -1);
    put_u32(buf, static_cast<std::uint32_t>(s.grounding.size()));
    for (const GroundingRecord& g : s.grounding) {
      put_u32(buf, static_cast<std::uint32_t>(g.x));
      put_u32(buf, static_cast<std::uint32_t>(g.y));
      put_u32(buf, static_cast<std::uint32_t>(g.w));
      put_u32(buf, static_cast<std::uint32_t>(g.h));
      put_u32(buf, static_cast<std::uint32_t>(g.token_indices.size()));
      for (std::size_t idx : g.token_indices) put_u32(buf, static_cast<std::uint32_t>(idx));
    }
  }

  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
  }

  nlohmann::json manifest = {
      {"id", path.stem().string()},
      {"split", corpus.split},
      {"counts",
       {{"studies", corpus.studies.size()},
        {"dim", corpus.dim},
        {"grid", {corpus.grid.height, corpus.grid.width}}}},
      {"checksum", checksum_hex(fnv1a64(buf.data(), buf.size()))},
  };
  std::ofstream mout(manifest_path(path), std::ios::trunc);
  if (!mout) throw std::runtime_error("cannot open for writing: " + manifest_path(path).string());
  mout << manifest.dump(2) << "\n";
}

Corpus read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw std::runtime_error("bad magic: not a feature container: " + path.string());
  }

  std::ifstream min(manifest_path(path));
  if (!min) throw std::runtime_error("manifest missing: " + manifest_path(path).string());
  nlohmann::json manifest;
  try {
    min >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("manifest unreadable: " + std::string(e.what()));
  }
  std::string expected = manifest.value("checksum", "");
  if (checksum_hex(fnv1a64(buf.data(), buf.size())) != expected) {
    throw std::runtime_error("checksum mismatch: " + path.string());
  }

  Reader r(buf.data() + 4, buf.size() - 4);
  std::uint32_t version = r.u32();
  if (version != kFormatVersion) {
    throw std::runtime_error("version mismatch: file has " + std::to_string(version) +
                             ", reader supports " + std::to_string(kFormatVersion));
  }

  Corpus corpus;
  corpus.dim = r.u32();
  corpus.grid.height = r.u32();
  corpus.grid.width = r.u32();
  std::uint32_t count = r.u32();
  if (corpus.dim == 0 || corpus.grid.cells() == 0) {
    throw std::runtime_error("invalid header: zero dim or empty grid");
  }
  corpus.split = manifest.value("split", "");

  const std::size_t cells = corpus.grid.cells();
  corpus.studies.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Study s;
    std::uint32_t id_len = r.u32();
    s.id = r.str(id_len);
    std::uint8_t flags = r.u8();
    std::uint32_t n_tokens = r.u32();
    s.grid = corpus.grid;
    s.frontal = r.matrix(cells, corpus.dim);
    if (flags & 1) s.lateral = r.matrix(cells, corpus.dim);
    s.tokens = r.matrix(n_tokens, corpus.dim);
    s.token_mask.resize(n_tokens);
    for (std::uint32_t t = 0; t < n_tokens; ++t) s.token_mask[t] = r.u8();
    std::int32_t label = r.i32();
    if (label >= 0) s.label = label;
    std::uint32_t n_ground = r.u32();
    for (std::uint32_t g = 0; g < n_ground; ++g) {
      GroundingRecord rec;
      rec.x = r.u32();
      rec.y = r.u32();
      rec.w = r.u32();
      rec.h = r.u32();
      std::uint32_t n_idx = r.u32();
      rec.token_indices.reserve(n_idx);
      for (std::uint32_t k = 0; k < n_idx; ++k) rec.token_indices.push_back(r.u32());
      s.grounding.push_back(std::move(rec));
    }
    corpus.studies.push_back(std::move(s));
  }
  if (!r.done()) throw std::runtime_error("trailing bytes after last study: " + path.string());

  validate_corpus(corpus);
  return corpus;
}

Corpus corpus_slice(const Corpus& corpus, std::size_t begin, std::size_t end, std::string split) {
  if (begin >= end || end > corpus.studies.size()) {
    throw std::runtime_error("corpus_slice: invalid range");
  }
  Corpus out;
  out.dim = corpus.dim;
  out.grid = corpus.grid;
  out.split = std::move(split);
  out.studies.assign(corpus.studies.begin() + static_cast<std::ptrdiff_t>(begin),
                     corpus.studies.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

Corpus strip_laterals(const Corpus& corpus) {
  Corpus out = corpus;
  for (Study& s : out.studies) s.lateral.reset();
  return out;
}

}  // namespace xmodal
