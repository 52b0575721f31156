#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dspc/tensor.hpp"

namespace dspc::io {

// Image collection with optional evaluation labels. Pixels live in [0,1],
// row-major over (n, c, h, w). Training code must consume `train_view()`,
// which carries no labels at all.
struct Dataset {
  std::string name;
  int n = 0, c = 0, h = 0, w = 0;
  int k_true = 0;                // 0 when unknown
  std::vector<double> images;    // n*c*h*w values in [0,1]
  std::vector<int> labels;       // empty when absent

  bool has_labels() const { return !labels.empty(); }
};

// Label-stripped, read-only view handed to every training path.
struct TrainView {
  int n = 0, c = 0, h = 0, w = 0;
  const std::vector<double>* images = nullptr;
};

TrainView train_view(const Dataset& d);

// Gathers the indexed rows of a view into a [b,c,h,w] constant tensor.
Tensor make_batch(const TrainView& view, const std::vector<int>& indices);

// Big-endian IDX readers. Images files must carry magic 0x00000803
// (n, rows, cols of unsigned bytes), label files 0x00000801. Bytes are
// scaled by 1/255. Malformed input raises ParseError naming the byte
// offset; missing files raise IoError.
Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path = "",
                 const std::string& name = "idx");

// Writers for fabricating IDX files (tests, tooling). `pixels` holds
// n*h*w bytes; `labels` one byte per image.
void write_idx_images(const std::string& path, int n, int h, int w,
                      const std::vector<uint8_t>& pixels);
void write_idx_labels(const std::string& path,
                      const std::vector<uint8_t>& labels);

// Seeded Gaussian blobs as raw coordinate "images" of shape [n,1,1,dim].
// Cluster centers sit on hypercube corners scaled by `separation`
// (corner bits taken from the cluster index); points get label i % K.
Dataset make_blobs(int n, int k, int dim, double separation, double spread,
                   uint64_t seed);

// Two concentric rings (radii 1 and 3, radial jitter 0.1) as [n,1,1,2]
// coordinates, balanced labels 0/1.
Dataset make_rings(int n, uint64_t seed);

// Single-channel h×w images where cluster identity is a bright square at
// a cluster-specific grid position (±1 px jitter, brightness in
// [0.75, 1], faint background noise). Labels are i % K.
Dataset make_blob_images(int n, int k, int h, int w, uint64_t seed);

// Shuffled minibatch index sets for one epoch. The shuffle is seeded by
// (seed, epoch) so epochs differ in order but any (seed, epoch) pair is
// reproducible. A final short batch is dropped when `drop_last`.
std::vector<std::vector<int>> batches(int n, int m, uint64_t seed, int epoch,
                                      bool drop_last = true);

// --- checkpoint container ---------------------------------------------

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

// Everything needed to resume training bit-exactly: parameters, Adam
// moments, step counter, rng state, and position in the schedule.
struct Checkpoint {
  std::string phase;       // "pretrain" | "train"
  int epoch = 0;
  int step_in_epoch = 0;
  std::string rng_state;
  std::vector<NamedTensor> params;
  std::vector<NamedTensor> adam_m;
  std::vector<NamedTensor> adam_v;
  uint64_t adam_t = 0;
};

inline constexpr uint32_t kCheckpointVersion = 1;

// Binary container: magic "DSPC", little-endian u32 version, payload of
// length-prefixed strings and named tensors (shape then 64-bit float bit
// patterns), trailing CRC-32 of all preceding bytes. Corruption, version
// mismatch and truncation raise ParseError with the offending offset.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

uint32_t crc32(const uint8_t* data, size_t len);

// --- CSV ---------------------------------------------------------------

// Shortest decimal string that parses back to the identical double.
std::string format_double(double v);

// RFC-4180 writer/reader. `header` becomes the first record; cells are
// quoted when they contain commas, quotes or newlines.
void export_csv(const std::string& path, const std::vector<std::string>& header,
                const std::vector<std::vector<std::string>>& rows);
std::vector<std::vector<std::string>> parse_csv(const std::string& path);

}  // namespace dspc::io
