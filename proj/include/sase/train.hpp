#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sase/arch.hpp"
#include "sase/error.hpp"
#include "sase/optim.hpp"

namespace sase {

// ---------------------------------------------------------------- blob task

struct BlobOptions {
  std::int64_t size = 16;
  double noise_std = 0.1;
  double sigma = 2.0;
  double amplitude = 1.0;
};

struct BlobDataset {
  Tensor images;                      // [n, 1, size, size]
  std::vector<std::int64_t> labels;   // quadrant: 0 TL, 1 TR, 2 BL, 3 BR
  std::vector<std::pair<std::int64_t, std::int64_t>> centers;  // (row, col)
};

// Sample i has label i % 4, so classes are balanced. Each image is a
// Gaussian blob centred on a pixel inside its quadrant plus N(0, noise_std)
// pixel noise.
BlobDataset make_blob_dataset(std::uint64_t seed, std::int64_t n, const BlobOptions& options = {});

// ---------------------------------------------------------------- training

// Two-stage bottleneck network on [B,1,S,S] with a 2x2 pooled head, so the
// classifier can see which quadrant holds the blob.
ResNetSpec tiny_classifier_spec(BlockVariant variant);

struct TrainOptions {
  BlockVariant variant = BlockVariant::sase;
  std::uint64_t seed = 1;
  std::int64_t samples = 64;
  BlobOptions data;
  std::int64_t steps = 500;
  // 0 trains on the full dataset every step.
  std::int64_t batch_size = 0;
  std::string optimizer = "adam";
  AdamOptions adam{0.01, 0.9, 0.999, 1e-8};
  SGDOptions sgd{0.05, 0.9};
  // Records wall-clock time per step; otherwise wall_ms is 0 so metric files
  // are reproducible byte for byte.
  bool timing = false;

  void validate() const;
};

struct TrainRecord {
  std::int64_t step = 0;
  double loss = 0.0;
  double acc = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  std::vector<TrainRecord> records;
  double initial_loss = 0.0;
  // Full-dataset evaluation after the last update, BN in eval mode.
  double final_loss = 0.0;
  double final_acc = 0.0;

  // step,loss,acc,grad_norm,wall_ms with 9 significant digits.
  std::string metrics_csv() const;
  std::string summary_json(int indent = 2) const;
};

class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, std::int64_t last_good_step)
      : NumericError(what), last_good_step_(last_good_step) {}
  // -1 when the very first step diverged.
  std::int64_t last_good_step() const { return last_good_step_; }

 private:
  std::int64_t last_good_step_;
};

// Trains `model` (built from tiny_classifier_spec or any compatible spec)
// with cross-entropy on the blob task. Throws DivergenceError on a
// non-finite loss or gradient.
TrainResult train_classifier(const TrainOptions& options, ResNet& model);

}  // namespace sase
