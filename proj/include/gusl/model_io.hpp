#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "gusl/error.hpp"
#include "gusl/ushape.hpp"

namespace gusl {

// Text container:
//   GUSLDH
//   version <n>
//   input_size <s>
//   sections <name>...
//   section <name> <bytes>\n<payload>   (once per listed section)
//   checksum <crc32 hex of every preceding byte>
// Reals are written with 17 significant digits.

inline constexpr const char* kModelMagic = "GUSLDH";

namespace detail {

class TokenWriter {
 public:
  TokenWriter& word(const std::string& w) {
    sep();
    out_ += w;
    return *this;
  }
  TokenWriter& num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return word(buf);
  }
  TokenWriter& integer(long long v) { return word(std::to_string(v)); }
  TokenWriter& line() {
    out_ += '\n';
    fresh_ = true;
    return *this;
  }
  const std::string& str() const { return out_; }

 private:
  void sep() {
    if (!fresh_) out_ += ' ';
    fresh_ = false;
  }
  std::string out_;
  bool fresh_ = true;
};

class TokenReader {
 public:
  explicit TokenReader(std::string text) : in_(std::move(text)) {}

  std::string word() {
    std::string w;
    if (!(in_ >> w)) throw IntegrityError("model file: unexpected end of section");
    return w;
  }
  void expect(const std::string& w) {
    const std::string got = word();
    if (got != w) throw IntegrityError("model file: expected '" + w + "', found '" + got + "'");
  }
  double num() {
    const std::string w = word();
    char* end = nullptr;
    const double v = std::strtod(w.c_str(), &end);
    if (end != w.c_str() + w.size()) throw IntegrityError("model file: bad number '" + w + "'");
    return v;
  }
  long long integer() {
    const std::string w = word();
    char* end = nullptr;
    const long long v = std::strtoll(w.c_str(), &end, 10);
    if (w.empty() || end != w.c_str() + w.size()) throw IntegrityError("model file: bad integer '" + w + "'");
    return v;
  }
  long long count(long long limit = 100000000) {
    const long long v = integer();
    if (v < 0 || v > limit) throw IntegrityError("model file: count out of range");
    return v;
  }
  void finish() {
    std::string w;
    if (in_ >> w) throw IntegrityError("model file: trailing data in section");
  }

 private:
  std::istringstream in_;
};

inline void write_vector(TokenWriter& w, const Vector& v) {
  w.word("vector").integer(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) w.num(v(i));
  w.line();
}

inline Vector read_vector(TokenReader& r) {
  r.expect("vector");
  Vector v(r.count());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = r.num();
  return v;
}

inline void write_matrix(TokenWriter& w, const Matrix& m) {
  w.word("matrix").integer(m.rows()).integer(m.cols()).line();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) w.num(m(i, j));
    if (m.cols() > 0) w.line();
  }
}

inline Matrix read_matrix(TokenReader& r) {
  r.expect("matrix");
  const auto rows = r.count(), cols = r.count();
  if (rows * cols > 100000000) throw IntegrityError("model file: matrix too large");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = r.num();
  return m;
}

inline void write_doubles(TokenWriter& w, const std::vector<double>& v) {
  w.word("values").integer(static_cast<long long>(v.size()));
  for (double x : v) w.num(x);
  w.line();
}

inline std::vector<double> read_doubles(TokenReader& r) {
  r.expect("values");
  std::vector<double> v(static_cast<std::size_t>(r.count()));
  for (double& x : v) x = r.num();
  return v;
}

// Nodes are listed in preorder; internal "N feature threshold", leaf
// "L weight". Fitted trees are already stored in preorder, so reading
// rebuilds the same node array.
inline void write_node(TokenWriter& w, const RegressionTree& t, int k) {
  const TreeNode& n = t.nodes[static_cast<std::size_t>(k)];
  if (n.leaf) {
    w.word("L").num(n.weight).line();
    return;
  }
  w.word("N").integer(n.feature).num(n.threshold).line();
  write_node(w, t, n.left);
  write_node(w, t, n.right);
}

inline void write_ensemble(TokenWriter& w, const TreeEnsembleModel& m) {
  w.word("ensemble").word(m.mode == EnsembleMode::boosted ? "boosted" : "bagged");
  w.word("base").num(m.base_score).word("eta").num(m.eta).word("dim").integer(m.feature_dim);
  w.word("trees").integer(static_cast<long long>(m.trees.size())).line();
  for (const auto& t : m.trees) {
    w.word("tree").integer(static_cast<long long>(t.nodes.size())).line();
    write_node(w, t, 0);
  }
}

inline int read_node(TokenReader& r, RegressionTree& t, std::size_t limit, int feature_dim, int depth) {
  if (depth > 4096 || t.nodes.size() >= limit) throw IntegrityError("model file: malformed tree");
  const int k = static_cast<int>(t.nodes.size());
  t.nodes.emplace_back();
  const std::string kind = r.word();
  if (kind == "L") {
    t.nodes[static_cast<std::size_t>(k)].weight = r.num();
    return k;
  }
  if (kind != "N") throw IntegrityError("model file: unknown tree node '" + kind + "'");
  TreeNode n;
  n.leaf = false;
  n.feature = static_cast<int>(r.integer());
  n.threshold = r.num();
  if (n.feature < 0 || n.feature >= feature_dim) throw IntegrityError("model file: tree feature out of range");
  n.left = read_node(r, t, limit, feature_dim, depth + 1);
  n.right = read_node(r, t, limit, feature_dim, depth + 1);
  t.nodes[static_cast<std::size_t>(k)] = n;
  return k;
}

inline TreeEnsembleModel read_ensemble(TokenReader& r) {
  TreeEnsembleModel m;
  r.expect("ensemble");
  const std::string mode = r.word();
  if (mode == "boosted")
    m.mode = EnsembleMode::boosted;
  else if (mode == "bagged")
    m.mode = EnsembleMode::bagged;
  else
    throw IntegrityError("model file: unknown ensemble mode '" + mode + "'");
  r.expect("base");
  m.base_score = r.num();
  r.expect("eta");
  m.eta = r.num();
  r.expect("dim");
  m.feature_dim = static_cast<int>(r.count(1 << 30));
  r.expect("trees");
  m.trees.resize(static_cast<std::size_t>(r.count()));
  for (auto& t : m.trees) {
    r.expect("tree");
    const auto n = static_cast<std::size_t>(r.count());
    read_node(r, t, n, m.feature_dim, 0);
    if (t.nodes.size() != n) throw IntegrityError("model file: tree node count mismatch");
  }
  return m;
}

inline std::string write_dcp_section(const DcpParams& p) {
  TokenWriter w;
  w.word("omega").num(p.omega).line();
  w.word("t0").num(p.t0).line();
  w.word("patch_radius").integer(p.patch_radius).line();
  w.word("bright_fraction").num(p.bright_fraction).line();
  w.word("gf_radius").integer(p.gf_radius).line();
  w.word("gf_eps").num(p.gf_eps).line();
  return w.str();
}

inline DcpParams read_dcp_section(TokenReader& r) {
  DcpParams p;
  r.expect("omega");
  p.omega = r.num();
  r.expect("t0");
  p.t0 = r.num();
  r.expect("patch_radius");
  p.patch_radius = static_cast<int>(r.integer());
  r.expect("bright_fraction");
  p.bright_fraction = r.num();
  r.expect("gf_radius");
  p.gf_radius = static_cast<int>(r.integer());
  r.expect("gf_eps");
  p.gf_eps = r.num();
  try {
    p.validate();
  } catch (const InvalidArgument& e) {
    throw IntegrityError(std::string("model file: ") + e.what());
  }
  return p;
}

inline std::string write_omega_section(const std::optional<TreeEnsembleModel>& m) {
  TokenWriter w;
  w.word("present").integer(m ? 1 : 0).line();
  if (m) write_ensemble(w, *m);
  return w.str();
}

inline std::optional<TreeEnsembleModel> read_omega_section(TokenReader& r) {
  r.expect("present");
  const auto present = r.count(1);
  if (!present) return std::nullopt;
  auto m = read_ensemble(r);
  if (m.feature_dim != kGlobalStatsDim) throw IntegrityError("model file: omega forest has wrong input size");
  return m;
}

inline std::string write_cascade_section(const SaabCascade& c) {
  TokenWriter w;
  w.word("hops").integer(static_cast<long long>(c.hops.size())).line();
  for (const auto& h : c.hops) {
    const HopConfig& k = h.config;
    w.word("hop").word("window").integer(k.window).word("filter").integer(k.filter).word("pool").integer(k.pool);
    w.word("keep").integer(k.keep.count).num(k.keep.energy_threshold).integer(k.keep.max_filters).line();
    const SaabBank& b = h.bank;
    w.word("bank").integer(b.spatial_size).integer(b.in_channels).line();
    w.word("dc_vector").line();
    write_vector(w, b.dc_vector);
    w.word("ac_vectors").line();
    write_matrix(w, b.ac_vectors);
    w.word("dc_bias").num(b.dc_bias).line();
    w.word("ac_biases").line();
    write_vector(w, b.ac_biases);
    w.word("energies").line();
    write_vector(w, b.energies);
    w.word("variance").num(b.dc_variance).num(b.ac_variance).line();
  }
  return w.str();
}

inline SaabCascade read_cascade_section(TokenReader& r) {
  SaabCascade c;
  r.expect("hops");
  c.hops.resize(static_cast<std::size_t>(r.count(64)));
  int in_channels = 3;
  for (auto& h : c.hops) {
    HopConfig& k = h.config;
    r.expect("hop");
    r.expect("window");
    k.window = static_cast<int>(r.integer());
    r.expect("filter");
    k.filter = static_cast<int>(r.integer());
    r.expect("pool");
    k.pool = static_cast<int>(r.integer());
    r.expect("keep");
    k.keep.count = static_cast<int>(r.integer());
    k.keep.energy_threshold = r.num();
    k.keep.max_filters = static_cast<int>(r.integer());
    SaabBank& b = h.bank;
    r.expect("bank");
    b.spatial_size = static_cast<int>(r.count(1024));
    b.in_channels = static_cast<int>(r.count(1 << 20));
    r.expect("dc_vector");
    b.dc_vector = read_vector(r);
    r.expect("ac_vectors");
    b.ac_vectors = read_matrix(r);
    r.expect("dc_bias");
    b.dc_bias = r.num();
    r.expect("ac_biases");
    b.ac_biases = read_vector(r);
    r.expect("energies");
    b.energies = read_vector(r);
    r.expect("variance");
    b.dc_variance = r.num();
    b.ac_variance = r.num();
    try {
      k.validate();
    } catch (const InvalidArgument& e) {
      throw IntegrityError(std::string("model file: ") + e.what());
    }
    if (b.spatial_size != k.filter || b.in_channels != in_channels || b.dc_vector.size() != b.patch_dim() ||
        b.ac_vectors.cols() != b.patch_dim() || b.ac_biases.size() != b.ac_count())
      throw IntegrityError("model file: inconsistent Saab bank");
    in_channels = b.output_channels();
  }
  return c;
}

inline std::string write_level_section(const LevelModel& level) {
  TokenWriter w;
  w.word("resolution").integer(level.resolution).word("cascade_hop").integer(level.cascade_hop).line();
  for (std::size_t c = 0; c < level.channels.size(); ++c) {
    const ChannelModel& ch = level.channels[c];
    w.word("channel").integer(static_cast<long long>(c)).line();
    w.word("active").integer(ch.active ? 1 : 0).word("blend").num(ch.blend).line();
    w.word("selected").integer(static_cast<long long>(ch.rft_selected.size()));
    for (int s : ch.rft_selected) w.integer(s);
    w.line();
    w.word("lnt").line();
    write_matrix(w, ch.lnt.a_matrix);
    write_vector(w, ch.lnt.b_bias);
    write_vector(w, ch.lnt.x_mean);
    write_doubles(w, ch.lnt.bin_edges);
    write_ensemble(w, ch.regressor_raw);
    write_ensemble(w, ch.regressor_lnt);
  }
  return w.str();
}

inline LevelModel read_level_section(TokenReader& r, const SaabCascade& cascade) {
  LevelModel level;
  r.expect("resolution");
  level.resolution = static_cast<int>(r.count(1 << 20));
  r.expect("cascade_hop");
  level.cascade_hop = static_cast<int>(r.count(64));
  if (static_cast<std::size_t>(level.cascade_hop) >= cascade.hops.size())
    throw IntegrityError("model file: level refers to a missing hop");
  const int hop_channels = cascade.hops[static_cast<std::size_t>(level.cascade_hop)].bank.output_channels();
  for (std::size_t c = 0; c < level.channels.size(); ++c) {
    ChannelModel& ch = level.channels[c];
    r.expect("channel");
    if (r.integer() != static_cast<long long>(c)) throw IntegrityError("model file: channel out of order");
    r.expect("active");
    ch.active = r.count(1) == 1;
    r.expect("blend");
    ch.blend = r.num();
    if (!(ch.blend >= 0.0 && ch.blend <= 1.0)) throw IntegrityError("model file: blend outside [0, 1]");
    r.expect("selected");
    ch.rft_selected.resize(static_cast<std::size_t>(r.count()));
    for (int& s : ch.rft_selected) {
      s = static_cast<int>(r.integer());
      if (s < 0 || s >= hop_channels) throw IntegrityError("model file: selected feature out of range");
    }
    r.expect("lnt");
    ch.lnt.a_matrix = read_matrix(r);
    ch.lnt.b_bias = read_vector(r);
    ch.lnt.x_mean = read_vector(r);
    ch.lnt.bin_edges = read_doubles(r);
    ch.regressor_raw = read_ensemble(r);
    ch.regressor_lnt = read_ensemble(r);
    const int width = level_feature_width(ch);
    if (ch.lnt.a_matrix.cols() != width || ch.lnt.x_mean.size() != width || ch.regressor_raw.feature_dim != width ||
        ch.regressor_lnt.feature_dim != ch.lnt.output_dim())
      throw IntegrityError("model file: inconsistent level dimensions");
  }
  return level;
}

inline std::string to_hex(unsigned long v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08lx", v & 0xffffffffUL);
  return buf;
}

inline unsigned long checksum(const std::string& bytes, std::size_t n) {
  return crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(n));
}

}  // namespace detail

inline std::string serialize_model(const UShapeModel& model) {
  std::vector<std::pair<std::string, std::string>> sections;
  sections.emplace_back("dcp-params", detail::write_dcp_section(model.dcp));
  sections.emplace_back("omega-forest", detail::write_omega_section(model.omega_model));
  sections.emplace_back("saab-cascade", detail::write_cascade_section(model.cascade));
  for (std::size_t j = 0; j < model.levels.size(); ++j)
    sections.emplace_back("level-" + std::to_string(j), detail::write_level_section(model.levels[j]));

  std::string out = std::string(kModelMagic) + "\n";
  out += "version " + std::to_string(model.version) + "\n";
  out += "input_size " + std::to_string(model.input_size) + "\n";
  out += "sections";
  for (const auto& s : sections) out += " " + s.first;
  out += "\n";
  for (const auto& s : sections) out += "section " + s.first + " " + std::to_string(s.second.size()) + "\n" + s.second;
  out += "checksum " + detail::to_hex(detail::checksum(out, out.size())) + "\n";
  return out;
}

inline UShapeModel deserialize_model(const std::string& bytes) {
  const std::string magic = std::string(kModelMagic) + "\n";
  if (bytes.compare(0, magic.size(), magic) != 0) throw IntegrityError("model file: bad magic (not a GUSLDH model)");
  std::size_t pos = magic.size();
  auto next_line = [&]() {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw IntegrityError("model file: truncated");
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };

  UShapeModel model;
  {
    detail::TokenReader r(next_line());
    r.expect("version");
    const long long v = r.integer();
    if (v != kModelFormatVersion)
      throw VersionError("model file: unsupported format version " + std::to_string(v) + " (expected " +
                         std::to_string(kModelFormatVersion) + ")");
    model.version = static_cast<int>(v);
  }

  // The checksum line closes the file; everything before it is covered.
  const std::string tag = "\nchecksum ";
  const std::size_t at = bytes.rfind(tag);
  if (at == std::string::npos || bytes.size() < at + tag.size() + 9 || bytes.back() != '\n')
    throw IntegrityError("model file: truncated (missing checksum)");
  const std::string stored = bytes.substr(at + tag.size(), bytes.size() - at - tag.size() - 1);
  const std::size_t covered = at + 1;
  if (stored != detail::to_hex(detail::checksum(bytes, covered)))
    throw IntegrityError("model file: checksum mismatch");

  {
    detail::TokenReader r(next_line());
    r.expect("input_size");
    model.input_size = static_cast<int>(r.count(1 << 20));
  }
  std::vector<std::string> names;
  {
    std::istringstream in(next_line());
    std::string w;
    in >> w;
    if (w != "sections") throw IntegrityError("model file: missing section manifest");
    while (in >> w) names.push_back(w);
  }
  if (names.size() < 3 || names[0] != "dcp-params" || names[1] != "omega-forest" || names[2] != "saab-cascade")
    throw IntegrityError("model file: unexpected section manifest");

  for (std::size_t k = 0; k < names.size(); ++k) {
    detail::TokenReader header(next_line());
    header.expect("section");
    header.expect(names[k]);
    const auto len = static_cast<std::size_t>(header.count());
    if (pos + len > covered) throw IntegrityError("model file: truncated section '" + names[k] + "'");
    detail::TokenReader r(bytes.substr(pos, len));
    pos += len;
    if (k == 0) {
      model.dcp = detail::read_dcp_section(r);
    } else if (k == 1) {
      model.omega_model = detail::read_omega_section(r);
    } else if (k == 2) {
      model.cascade = detail::read_cascade_section(r);
    } else {
      if (names[k] != "level-" + std::to_string(k - 3)) throw IntegrityError("model file: unexpected section name");
      model.levels.push_back(detail::read_level_section(r, model.cascade));
    }
    r.finish();
  }
  if (pos != covered) throw IntegrityError("model file: unexpected data after sections");
  if (model.levels.size() != model.cascade.hops.size()) throw IntegrityError("model file: level/hop count mismatch");
  for (std::size_t j = 0; j < model.levels.size(); ++j) {
    const int expected = model.input_size >> (model.levels.size() - j);
    if (model.levels[j].resolution != expected || expected < 1)
      throw IntegrityError("model file: level resolutions inconsistent with input size");
  }
  return model;
}

// Writes through a temporary file so a failed save never leaves a partial
// model at `path`.
inline void save_model(const UShapeModel& model, const std::string& path) {
  const std::string bytes = serialize_model(model);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("cannot write '" + path + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot write '" + path + "'");
  }
}

inline UShapeModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read model '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_model(buf.str());
}

}  // namespace gusl
