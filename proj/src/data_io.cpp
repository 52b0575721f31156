#include "dspc/data_io.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "dspc/errors.hpp"
#include "dspc/rng.hpp"

namespace dspc::io {

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  in.seekg(0, std::ios::end);
  std::streamoff len = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<uint8_t> buf(static_cast<size_t>(len));
  if (len > 0) in.read(reinterpret_cast<char*>(buf.data()), len);
  if (!in) throw IoError("failed reading " + path);
  return buf;
}

void write_file(const std::string& path, const uint8_t* data, size_t len) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(len));
  out.flush();
  if (!out) throw IoError("failed writing " + path);
}

uint32_t be_u32(const std::vector<uint8_t>& buf, size_t off,
                const char* what) {
  if (off + 4 > buf.size()) {
    throw ParseError(std::string("idx ") + what + " truncated", buf.size());
  }
  return (static_cast<uint32_t>(buf[off]) << 24) |
         (static_cast<uint32_t>(buf[off + 1]) << 16) |
         (static_cast<uint32_t>(buf[off + 2]) << 8) |
         static_cast<uint32_t>(buf[off + 3]);
}

void put_be_u32(std::vector<uint8_t>& buf, uint32_t v) {
  buf.push_back(static_cast<uint8_t>(v >> 24));
  buf.push_back(static_cast<uint8_t>(v >> 16));
  buf.push_back(static_cast<uint8_t>(v >> 8));
  buf.push_back(static_cast<uint8_t>(v));
}

}  // namespace

TrainView train_view(const Dataset& d) {
  return TrainView{d.n, d.c, d.h, d.w, &d.images};
}

Tensor make_batch(const TrainView& view, const std::vector<int>& indices) {
  int stride = view.c * view.h * view.w;
  std::vector<double> vals;
  vals.reserve(indices.size() * static_cast<size_t>(stride));
  for (int idx : indices) {
    if (idx < 0 || idx >= view.n) {
      throw ShapeError("batch index " + std::to_string(idx) +
                       " outside dataset of " + std::to_string(view.n));
    }
    const double* row = view.images->data() + static_cast<int64_t>(idx) * stride;
    vals.insert(vals.end(), row, row + stride);
  }
  return Tensor::from_data(
      {static_cast<int>(indices.size()), view.c, view.h, view.w}, vals);
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 const std::string& name) {
  std::vector<uint8_t> buf = read_file(images_path);
  uint32_t magic = be_u32(buf, 0, "magic");
  if (magic != 0x00000803u) {
    throw ParseError("idx image magic is not 0x00000803", 0);
  }
  uint32_t n = be_u32(buf, 4, "image count");
  uint32_t h = be_u32(buf, 8, "row count");
  uint32_t w = be_u32(buf, 12, "column count");
  if (n == 0 || h == 0 || w == 0) {
    throw ParseError("idx image dimensions must be positive", 4);
  }
  size_t need = 16 + static_cast<size_t>(n) * h * w;
  if (buf.size() < need) {
    throw ParseError("idx image payload truncated: expected " +
                         std::to_string(need) + " bytes",
                     buf.size());
  }

  Dataset d;
  d.name = name;
  d.n = static_cast<int>(n);
  d.c = 1;
  d.h = static_cast<int>(h);
  d.w = static_cast<int>(w);
  d.images.resize(static_cast<size_t>(n) * h * w);
  for (size_t i = 0; i < d.images.size(); ++i) {
    d.images[i] = static_cast<double>(buf[16 + i]) / 255.0;
  }

  if (!labels_path.empty()) {
    std::vector<uint8_t> lbuf = read_file(labels_path);
    uint32_t lmagic = be_u32(lbuf, 0, "label magic");
    if (lmagic != 0x00000801u) {
      throw ParseError("idx label magic is not 0x00000801", 0);
    }
    uint32_t ln = be_u32(lbuf, 4, "label count");
    if (ln != n) {
      throw ParseError("label count " + std::to_string(ln) +
                           " does not match image count " + std::to_string(n),
                       4);
    }
    if (lbuf.size() < 8 + static_cast<size_t>(ln)) {
      throw ParseError("idx label payload truncated: expected " +
                           std::to_string(8 + static_cast<size_t>(ln)) +
                           " bytes",
                       lbuf.size());
    }
    d.labels.resize(ln);
    int max_label = 0;
    for (uint32_t i = 0; i < ln; ++i) {
      d.labels[i] = static_cast<int>(lbuf[8 + i]);
      max_label = std::max(max_label, d.labels[i]);
    }
    d.k_true = max_label + 1;
  }
  return d;
}

void write_idx_images(const std::string& path, int n, int h, int w,
                      const std::vector<uint8_t>& pixels) {
  if (n < 1 || h < 1 || w < 1 ||
      pixels.size() != static_cast<size_t>(n) * h * w) {
    throw ShapeError("idx writer: pixel buffer does not match " +
                     std::to_string(n) + "x" + std::to_string(h) + "x" +
                     std::to_string(w));
  }
  std::vector<uint8_t> buf;
  buf.reserve(16 + pixels.size());
  put_be_u32(buf, 0x00000803u);
  put_be_u32(buf, static_cast<uint32_t>(n));
  put_be_u32(buf, static_cast<uint32_t>(h));
  put_be_u32(buf, static_cast<uint32_t>(w));
  buf.insert(buf.end(), pixels.begin(), pixels.end());
  write_file(path, buf.data(), buf.size());
}

void write_idx_labels(const std::string& path,
                      const std::vector<uint8_t>& labels) {
  if (labels.empty()) throw ShapeError("idx writer: no labels");
  std::vector<uint8_t> buf;
  buf.reserve(8 + labels.size());
  put_be_u32(buf, 0x00000801u);
  put_be_u32(buf, static_cast<uint32_t>(labels.size()));
  buf.insert(buf.end(), labels.begin(), labels.end());
  write_file(path, buf.data(), buf.size());
}

Dataset make_blobs(int n, int k, int dim, double separation, double spread,
                   uint64_t seed) {
  if (k < 1 || n < k) {
    throw ConfigError("make_blobs needs n >= k >= 1, got n=" +
                      std::to_string(n) + " k=" + std::to_string(k));
  }
  if (dim < 1) throw ConfigError("make_blobs needs dim >= 1");
  Rng rng(seed);
  Dataset d;
  d.name = "blobs";
  d.n = n;
  d.c = 1;
  d.h = 1;
  d.w = dim;
  d.k_true = k;
  d.images.resize(static_cast<size_t>(n) * dim);
  d.labels.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    int cl = i % k;
    d.labels[static_cast<size_t>(i)] = cl;
    for (int t = 0; t < dim; ++t) {
      double center = ((cl >> (t % 31)) & 1) ? separation : 0.0;
      d.images[static_cast<size_t>(i) * dim + t] = center + spread * rng.normal();
    }
  }
  return d;
}

Dataset make_rings(int n, uint64_t seed) {
  if (n < 2) throw ConfigError("make_rings needs n >= 2");
  Rng rng(seed);
  Dataset d;
  d.name = "rings";
  d.n = n;
  d.c = 1;
  d.h = 1;
  d.w = 2;
  d.k_true = 2;
  d.images.resize(static_cast<size_t>(n) * 2);
  d.labels.resize(static_cast<size_t>(n));
  const double two_pi = 6.283185307179586476925286766559;
  for (int i = 0; i < n; ++i) {
    int cl = i % 2;
    double base = cl == 0 ? 1.0 : 3.0;
    double r = base + 0.1 * rng.normal();
    double theta = two_pi * rng.uniform();
    d.labels[static_cast<size_t>(i)] = cl;
    d.images[static_cast<size_t>(i) * 2] = r * std::cos(theta);
    d.images[static_cast<size_t>(i) * 2 + 1] = r * std::sin(theta);
  }
  return d;
}

Dataset make_blob_images(int n, int k, int h, int w, uint64_t seed) {
  if (k < 1 || n < k) {
    throw ConfigError("make_blob_images needs n >= k >= 1");
  }
  int grid = 1;
  while (grid * grid < k) ++grid;
  int cell_h = h / grid, cell_w = w / grid;
  if (cell_h < 4 || cell_w < 4) {
    throw ConfigError("make_blob_images: " + std::to_string(h) + "x" +
                      std::to_string(w) + " too small for " +
                      std::to_string(k) + " clusters");
  }
  int side = std::max(2, std::min(cell_h, cell_w) / 2);

  Rng rng(seed);
  Dataset d;
  d.name = "blob-images";
  d.n = n;
  d.c = 1;
  d.h = h;
  d.w = w;
  d.k_true = k;
  d.images.resize(static_cast<size_t>(n) * h * w);
  d.labels.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    int cl = i % k;
    d.labels[static_cast<size_t>(i)] = cl;
    double* img = d.images.data() + static_cast<int64_t>(i) * h * w;
    for (int p = 0; p < h * w; ++p) img[p] = 0.05 * rng.uniform();
    int r0 = (cl / grid) * cell_h + (cell_h - side) / 2 +
             static_cast<int>(rng.randint(3)) - 1;
    int c0 = (cl % grid) * cell_w + (cell_w - side) / 2 +
             static_cast<int>(rng.randint(3)) - 1;
    r0 = std::max(0, std::min(h - side, r0));
    c0 = std::max(0, std::min(w - side, c0));
    double bright = 0.75 + 0.25 * rng.uniform();
    for (int r = r0; r < r0 + side; ++r) {
      for (int c = c0; c < c0 + side; ++c) img[r * w + c] = bright;
    }
  }
  return d;
}

std::vector<std::vector<int>> batches(int n, int m, uint64_t seed, int epoch,
                                      bool drop_last) {
  if (m < 1) throw ConfigError("batch size must be >= 1");
  if (m > n) {
    throw ConfigError("batch size " + std::to_string(m) +
                      " exceeds dataset size " + std::to_string(n));
  }
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  Rng rng(mix_seed(seed, static_cast<uint64_t>(epoch)));
  rng.shuffle(order);
  std::vector<std::vector<int>> out;
  for (int start = 0; start < n; start += m) {
    int stop = std::min(n, start + m);
    if (stop - start < m && drop_last) break;
    out.emplace_back(order.begin() + start, order.begin() + stop);
  }
  return out;
}

// --- checkpoint container ----------------------------------------------

uint32_t crc32(const uint8_t* data, size_t len) {
  static uint32_t table[256];
  static bool ready = false;
  if (!ready) {
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int b = 0; b < 8; ++b) c = (c & 1) ? (0xEDB88320u ^ (c >> 1)) : (c >> 1);
      table[i] = c;
    }
    ready = true;
  }
  uint32_t crc = 0xFFFFFFFFu;
  for (size_t i = 0; i < len; ++i) {
    crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  }
  return crc ^ 0xFFFFFFFFu;
}

namespace {

void put_u32(std::vector<uint8_t>& buf, uint32_t v) {
  for (int b = 0; b < 4; ++b) buf.push_back(static_cast<uint8_t>(v >> (8 * b)));
}

void put_u64(std::vector<uint8_t>& buf, uint64_t v) {
  for (int b = 0; b < 8; ++b) buf.push_back(static_cast<uint8_t>(v >> (8 * b)));
}

void put_i32(std::vector<uint8_t>& buf, int32_t v) {
  put_u32(buf, static_cast<uint32_t>(v));
}

void put_f64(std::vector<uint8_t>& buf, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  put_u64(buf, bits);
}

void put_str(std::vector<uint8_t>& buf, const std::string& s) {
  put_u32(buf, static_cast<uint32_t>(s.size()));
  buf.insert(buf.end(), s.begin(), s.end());
}

void put_tensor(std::vector<uint8_t>& buf, const NamedTensor& t) {
  put_str(buf, t.name);
  put_u32(buf, static_cast<uint32_t>(t.shape.size()));
  for (int dim : t.shape) put_i32(buf, dim);
  put_u64(buf, static_cast<uint64_t>(t.data.size()));
  for (double v : t.data) put_f64(buf, v);
}

struct Cursor {
  const std::vector<uint8_t>& buf;
  size_t pos;
  size_t limit;

  void need(size_t count, const char* what) {
    if (pos + count > limit) {
      throw ParseError(std::string("checkpoint truncated reading ") + what, pos);
    }
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<uint32_t>(buf[pos + b]) << (8 * b);
    pos += 4;
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<uint64_t>(buf[pos + b]) << (8 * b);
    pos += 8;
    return v;
  }
  int32_t i32(const char* what) { return static_cast<int32_t>(u32(what)); }
  double f64(const char* what) {
    uint64_t bits = u64(what);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::string str(const char* what) {
    uint32_t len = u32(what);
    need(len, what);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), len);
    pos += len;
    return s;
  }
  NamedTensor tensor(const char* what) {
    NamedTensor t;
    t.name = str(what);
    uint32_t ndim = u32(what);
    if (ndim > 8) throw ParseError("checkpoint tensor rank too large", pos - 4);
    t.shape.resize(ndim);
    for (uint32_t i = 0; i < ndim; ++i) t.shape[i] = i32(what);
    uint64_t count = u64(what);
    size_t expect = numel_of(t.shape);
    if (count != expect) {
      throw ParseError("checkpoint tensor size does not match its shape",
                       pos - 8);
    }
    need(count * 8, what);
    t.data.resize(count);
    for (uint64_t i = 0; i < count; ++i) t.data[i] = f64(what);
    return t;
  }
  std::vector<NamedTensor> tensor_list(const char* what) {
    uint32_t count = u32(what);
    std::vector<NamedTensor> out;
    out.reserve(count);
    for (uint32_t i = 0; i < count; ++i) out.push_back(tensor(what));
    return out;
  }
};

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::vector<uint8_t> buf;
  buf.push_back('D');
  buf.push_back('S');
  buf.push_back('P');
  buf.push_back('C');
  put_u32(buf, kCheckpointVersion);
  put_str(buf, ckpt.phase);
  put_i32(buf, ckpt.epoch);
  put_i32(buf, ckpt.step_in_epoch);
  put_str(buf, ckpt.rng_state);
  put_u32(buf, static_cast<uint32_t>(ckpt.params.size()));
  for (const NamedTensor& t : ckpt.params) put_tensor(buf, t);
  put_u32(buf, static_cast<uint32_t>(ckpt.adam_m.size()));
  for (const NamedTensor& t : ckpt.adam_m) put_tensor(buf, t);
  put_u32(buf, static_cast<uint32_t>(ckpt.adam_v.size()));
  for (const NamedTensor& t : ckpt.adam_v) put_tensor(buf, t);
  put_u64(buf, ckpt.adam_t);
  put_u32(buf, crc32(buf.data(), buf.size()));
  write_file(path, buf.data(), buf.size());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::vector<uint8_t> buf = read_file(path);
  if (buf.size() < 12) throw ParseError("checkpoint too short", buf.size());
  if (buf[0] != 'D' || buf[1] != 'S' || buf[2] != 'P' || buf[3] != 'C') {
    throw ParseError("checkpoint magic is not DSPC", 0);
  }
  uint32_t stored = 0;
  for (int b = 0; b < 4; ++b) {
    stored |= static_cast<uint32_t>(buf[buf.size() - 4 + b]) << (8 * b);
  }
  uint32_t actual = crc32(buf.data(), buf.size() - 4);
  if (stored != actual) {
    throw ParseError("checkpoint checksum mismatch", buf.size() - 4);
  }

  Cursor cur{buf, 4, buf.size() - 4};
  uint32_t version = cur.u32("version");
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version),
                     4);
  }
  Checkpoint ckpt;
  ckpt.phase = cur.str("phase");
  ckpt.epoch = cur.i32("epoch");
  ckpt.step_in_epoch = cur.i32("step");
  ckpt.rng_state = cur.str("rng state");
  ckpt.params = cur.tensor_list("params");
  ckpt.adam_m = cur.tensor_list("adam m");
  ckpt.adam_v = cur.tensor_list("adam v");
  ckpt.adam_t = cur.u64("adam t");
  if (cur.pos != cur.limit) {
    throw ParseError("checkpoint has trailing bytes", cur.pos);
  }
  return ckpt;
}

// --- CSV -----------------------------------------------------------------

std::string format_double(double v) {
  char out[64];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(out, sizeof out, "%.*g", prec, v);
    double back = std::strtod(out, nullptr);
    if (back == v || (std::isnan(back) && std::isnan(v))) break;
  }
  return out;
}

namespace {

bool needs_quote(const std::string& cell) {
  return cell.find_first_of(",\"\n\r") != std::string::npos;
}

void append_cell(std::string& out, const std::string& cell) {
  if (!needs_quote(cell)) {
    out += cell;
    return;
  }
  out += '"';
  for (char ch : cell) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
}

void append_record(std::string& out, const std::vector<std::string>& cells) {
  for (size_t i = 0; i < cells.size(); ++i) {
    if (i > 0) out += ',';
    append_cell(out, cells[i]);
  }
  out += '\n';
}

}  // namespace

void export_csv(const std::string& path, const std::vector<std::string>& header,
                const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  append_record(out, header);
  for (const auto& row : rows) append_record(out, row);
  write_file(path, reinterpret_cast<const uint8_t*>(out.data()), out.size());
}

std::vector<std::vector<std::string>> parse_csv(const std::string& path) {
  std::vector<uint8_t> buf = read_file(path);
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> row;
  std::string cell;
  bool in_quotes = false;
  bool row_started = false;
  size_t i = 0;
  while (i < buf.size()) {
    char ch = static_cast<char>(buf[i]);
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < buf.size() && buf[i + 1] == '"') {
          cell += '"';
          i += 2;
        } else {
          in_quotes = false;
          ++i;
        }
      } else {
        cell += ch;
        ++i;
      }
      continue;
    }
    if (ch == '"') {
      if (!cell.empty()) throw ParseError("quote inside unquoted csv cell", i);
      in_quotes = true;
      row_started = true;
      ++i;
    } else if (ch == ',') {
      row.push_back(cell);
      cell.clear();
      row_started = true;
      ++i;
    } else if (ch == '\n' || ch == '\r') {
      if (row_started || !cell.empty()) {
        row.push_back(cell);
        cell.clear();
        records.push_back(row);
        row.clear();
        row_started = false;
      }
      if (ch == '\r' && i + 1 < buf.size() && buf[i + 1] == '\n') ++i;
      ++i;
    } else {
      cell += ch;
      row_started = true;
      ++i;
    }
  }
  if (in_quotes) throw ParseError("unterminated quoted csv cell", buf.size());
  if (row_started || !cell.empty()) {
    row.push_back(cell);
    records.push_back(row);
  }
  return records;
}

}  // namespace dspc::io
