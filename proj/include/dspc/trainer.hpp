#pragma once

#include <string>

#include "dspc/config.hpp"

namespace dspc::run {

// Exit codes shared by the library entry points and the command-line tool.
inline constexpr int kOk = 0;
inline constexpr int kConfigExit = 2;
inline constexpr int kDataExit = 3;
inline constexpr int kNumericExit = 4;

struct Options {
  Config cfg;              // final configuration, overrides already applied
  std::string checkpoint;  // resume / evaluation source ("" = default path)
  bool from_scratch = false;
};

// Metrics row produced by `eval` and reused by `sweep`.
struct EvalOutcome {
  double acc = 0.0;
  double nmi = 0.0;
  int n = 0;
  int k = 0;
  std::string phase;  // phase of the evaluated checkpoint
};

// Each command returns a process exit code and reports failures on stderr.
// Artifacts land under cfg.out: pretrain.dspc / train.dspc checkpoints,
// pretrain_log.csv / train_log.csv curves, eval.csv, embeddings.csv,
// sweep.csv.
int pretrain(const Options& opts);
int train(const Options& opts);
int eval(const Options& opts, EvalOutcome* outcome = nullptr);
int embed(const Options& opts);
int sweep(const Options& opts);

}  // namespace dspc::run
