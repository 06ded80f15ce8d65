#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "dmt/dataset.hpp"
#include "dmt/tensor.hpp"
#include "dmt/vit.hpp"

namespace dmt {

struct ProbeResult {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

struct ProbeOptions {
  std::size_t epochs = 200;  // full-batch Adam steps
  double lr = 0.05;
  double weight_decay = 1e-4;
};

/// Class-token embeddings (row 0 of the encoder output), one row per image.
Tensor class_token_features(const ViTEncoder& encoder, const Dataset& data);

/// Softmax regression on features standardized with the training-set mean
/// and standard deviation. Throws InvalidArgument when the training labels
/// contain fewer than two classes.
ProbeResult probe_features(const Tensor& train_x, std::span<const std::uint8_t> train_y, const Tensor& test_x,
                           std::span<const std::uint8_t> test_y, const ProbeOptions& options = {});

/// Linear probe on the frozen encoder; the encoder is not modified.
ProbeResult linear_probe(const ViTEncoder& encoder, const Dataset& train, const Dataset& test,
                         const ProbeOptions& options = {});

}  // namespace dmt
