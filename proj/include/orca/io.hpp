#pragma once

// On-disk formats: a versioned binary dataset container, a bit-exact model
// checkpoint, and schema-stable epoch-log / report emission as CSV or JSONL.
// All binary payloads are little-endian; floats print with 6 significant
// digits in text formats.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "orca/dataset.hpp"
#include "orca/eval.hpp"
#include "orca/model.hpp"
#include "orca/trainer.hpp"

namespace orca {
namespace detail {

inline void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_i32(std::string& out, int32_t v) {
  const uint32_t u = static_cast<uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) {
  uint64_t bits = 0;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

struct ByteReader {
  const std::string& buf;
  size_t pos = 0;

  explicit ByteReader(const std::string& b) : buf(b) {}

  void need(size_t n) const {
    if (pos + n > buf.size()) throw std::runtime_error("file truncated");
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  int32_t i32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return static_cast<int32_t>(v);
  }
  double f64() {
    const uint64_t bits = u64();
    double v = 0.0;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  uint8_t u8() {
    need(1);
    return static_cast<uint8_t>(buf[pos++]);
  }
};

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace detail

// 6 significant digits, the precision used by all text metric outputs.
inline std::string format_g6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline constexpr char kDatasetMagic[9] = "ORCADSET";
inline constexpr uint8_t kDatasetVersion = 1;

inline std::string serialize_dataset(const OpenWorldDataset& ds) {
  std::string out;
  out.append(kDatasetMagic, 8);
  out.push_back(static_cast<char>(kDatasetVersion));
  detail::put_u64(out, ds.features.rows);
  detail::put_u64(out, ds.features.cols);
  for (double v : ds.features.data) detail::put_f64(out, v);
  for (int v : ds.labels) detail::put_i32(out, v);
  for (uint8_t m : ds.labeled_mask) out.push_back(static_cast<char>(m));
  detail::put_u64(out, ds.seen_classes.size());
  for (int v : ds.seen_classes) detail::put_i32(out, v);
  detail::put_u64(out, ds.novel_classes.size());
  for (int v : ds.novel_classes) detail::put_i32(out, v);
  return out;
}

inline void write_dataset(const std::string& path, const OpenWorldDataset& ds) {
  detail::write_file_bytes(path, serialize_dataset(ds));
}

inline OpenWorldDataset read_dataset(const std::string& path) {
  const std::string bytes = detail::read_file_bytes(path);
  detail::ByteReader r(bytes);
  r.need(9);
  if (std::memcmp(bytes.data(), kDatasetMagic, 8) != 0)
    throw std::runtime_error(path + " is not a dataset file (bad magic)");
  r.pos = 8;
  const uint8_t version = r.u8();
  if (version != kDatasetVersion)
    throw std::runtime_error(path + ": unsupported dataset version " + std::to_string(version));
  OpenWorldDataset ds;
  const uint64_t rows = r.u64();
  const uint64_t cols = r.u64();
  ds.features = Matrix(rows, cols);
  for (double& v : ds.features.data) v = r.f64();
  ds.labels.resize(rows);
  for (int& v : ds.labels) v = r.i32();
  ds.labeled_mask.resize(rows);
  for (uint8_t& m : ds.labeled_mask) m = r.u8();
  ds.seen_classes.resize(r.u64());
  for (int& v : ds.seen_classes) v = r.i32();
  ds.novel_classes.resize(r.u64());
  for (int& v : ds.novel_classes) v = r.i32();
  return ds;
}

inline constexpr char kModelMagic[9] = "ORCAMODL";
inline constexpr uint8_t kModelVersion = 1;

inline std::string serialize_model(const Model& m) {
  std::string out;
  out.append(kModelMagic, 8);
  out.push_back(static_cast<char>(kModelVersion));
  detail::put_i32(out, m.cfg.input_dim);
  detail::put_u64(out, m.cfg.hidden_dims.size());
  for (int h : m.cfg.hidden_dims) detail::put_i32(out, h);
  detail::put_i32(out, m.cfg.embed_dim);
  detail::put_i32(out, m.cfg.num_seen_heads);
  detail::put_i32(out, m.cfg.extra_head_capacity);
  detail::put_f64(out, m.cfg.dropout_rate);
  detail::put_f64(out, m.cfg.norm_eps);
  detail::put_u64(out, m.layers.size());
  for (const Layer& layer : m.layers) {
    detail::put_u64(out, layer.weight.rows);
    detail::put_u64(out, layer.weight.cols);
    for (double v : layer.weight.data) detail::put_f64(out, v);
    for (double v : layer.bias) detail::put_f64(out, v);
    out.push_back(layer.trainable ? 1 : 0);
  }
  detail::put_u64(out, m.head_weights.rows);
  detail::put_u64(out, m.head_weights.cols);
  for (double v : m.head_weights.data) detail::put_f64(out, v);
  return out;
}

inline void write_model(const std::string& path, const Model& m) {
  detail::write_file_bytes(path, serialize_model(m));
}

inline Model read_model(const std::string& path) {
  const std::string bytes = detail::read_file_bytes(path);
  detail::ByteReader r(bytes);
  r.need(9);
  if (std::memcmp(bytes.data(), kModelMagic, 8) != 0)
    throw std::runtime_error(path + " is not a model checkpoint (bad magic)");
  r.pos = 8;
  const uint8_t version = r.u8();
  if (version != kModelVersion)
    throw std::runtime_error(path + ": unsupported checkpoint version " +
                             std::to_string(version));
  Model m;
  m.cfg.input_dim = r.i32();
  m.cfg.hidden_dims.resize(r.u64());
  for (int& h : m.cfg.hidden_dims) h = r.i32();
  m.cfg.embed_dim = r.i32();
  m.cfg.num_seen_heads = r.i32();
  m.cfg.extra_head_capacity = r.i32();
  m.cfg.dropout_rate = r.f64();
  m.cfg.norm_eps = r.f64();
  m.layers.resize(r.u64());
  for (Layer& layer : m.layers) {
    const uint64_t rows = r.u64();
    const uint64_t cols = r.u64();
    layer.weight = Matrix(rows, cols);
    for (double& v : layer.weight.data) v = r.f64();
    layer.bias.resize(rows);
    for (double& v : layer.bias) v = r.f64();
    layer.trainable = r.u8() != 0;
  }
  const uint64_t hr = r.u64();
  const uint64_t hc = r.u64();
  m.head_weights = Matrix(hr, hc);
  for (double& v : m.head_weights.data) v = r.f64();
  return m;
}

// --- text emission -------------------------------------------------------

inline std::string eval_report_json(const EvalReport& rep) {
  std::string out = "{";
  out += "\"seen_accuracy\":" + format_g6(rep.seen_accuracy);
  out += ",\"novel_accuracy\":" + format_g6(rep.novel_accuracy);
  out += ",\"novel_nmi\":" + format_g6(rep.novel_nmi);
  out += ",\"all_accuracy\":" + format_g6(rep.all_accuracy);
  out += ",\"active_novel_heads\":" + std::to_string(rep.active_novel_heads);
  out += ",\"num_evaluated\":" + std::to_string(rep.num_evaluated);
  out += ",\"head_counts\":[";
  for (size_t i = 0; i < rep.head_counts.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(rep.head_counts[i]);
  }
  out += "]}";
  return out;
}

// Aligned Seen / Novel / All table.
inline std::string eval_report_table(const EvalReport& rep) {
  char buf[256];
  std::string out;
  out += "  Seen    Novel   Novel(NMI)  All\n";
  std::snprintf(buf, sizeof(buf), "  %-7s %-7s %-11s %-7s\n",
                format_g6(rep.seen_accuracy).c_str(), format_g6(rep.novel_accuracy).c_str(),
                format_g6(rep.novel_nmi).c_str(), format_g6(rep.all_accuracy).c_str());
  out += buf;
  std::snprintf(buf, sizeof(buf), "  active novel heads: %d of %zu total heads, %lld rows\n",
                rep.active_novel_heads, rep.head_counts.size(),
                static_cast<long long>(rep.num_evaluated));
  out += buf;
  return out;
}

inline const std::vector<std::string>& epoch_log_columns() {
  static const std::vector<std::string> cols = {
      "epoch",          "u_bar",
      "lr",             "loss_total",
      "loss_supervised", "loss_pairwise",
      "loss_regularizer", "pseudo_label_accuracy",
      "pseudo_pair_count", "batches_without_labeled",
      "dropped_rows",   "seen_accuracy",
      "novel_accuracy", "novel_nmi",
      "all_accuracy",   "active_novel_heads"};
  return cols;
}

inline std::vector<std::string> epoch_log_values(const EpochLog& log) {
  return {std::to_string(log.epoch),
          format_g6(log.u_bar),
          format_g6(log.lr),
          format_g6(log.loss_total),
          format_g6(log.loss_supervised),
          format_g6(log.loss_pairwise),
          format_g6(log.loss_regularizer),
          format_g6(log.pseudo_label_accuracy),
          std::to_string(log.pseudo_pair_count),
          std::to_string(log.batches_without_labeled),
          std::to_string(log.dropped_rows),
          format_g6(log.eval.seen_accuracy),
          format_g6(log.eval.novel_accuracy),
          format_g6(log.eval.novel_nmi),
          format_g6(log.eval.all_accuracy),
          std::to_string(log.eval.active_novel_heads)};
}

inline std::string epoch_logs_to_csv(const std::vector<EpochLog>& logs) {
  std::string out;
  const auto& cols = epoch_log_columns();
  for (size_t i = 0; i < cols.size(); ++i) {
    if (i) out += ",";
    out += cols[i];
  }
  out += "\n";
  for (const EpochLog& log : logs) {
    const auto vals = epoch_log_values(log);
    for (size_t i = 0; i < vals.size(); ++i) {
      if (i) out += ",";
      out += vals[i];
    }
    out += "\n";
  }
  return out;
}

// One JSON object per line; values match the CSV byte for byte.
inline std::string epoch_logs_to_jsonl(const std::vector<EpochLog>& logs) {
  std::string out;
  const auto& cols = epoch_log_columns();
  for (const EpochLog& log : logs) {
    const auto vals = epoch_log_values(log);
    out += "{";
    for (size_t i = 0; i < vals.size(); ++i) {
      if (i) out += ",";
      out += "\"" + cols[i] + "\":" + vals[i];
    }
    out += "}\n";
  }
  return out;
}

}  // namespace orca
