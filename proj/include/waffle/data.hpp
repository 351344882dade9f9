#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "waffle/matrix.hpp"

namespace waffle {

struct LabeledDataset {
    DenseMatrix features;  // one example per row, channel-major pixels for images
    std::vector<int> labels;
    std::size_t num_classes = 0;
    std::size_t channels = 1, height = 1, width = 1;

    std::size_t size() const { return labels.size(); }
    void validate() const;
};

// IDX format reader (big-endian): image magic 0x00000803 with dims
// (n, rows, cols), label magic 0x00000801 with dim (n). Pixel bytes are
// scaled to [0,1].
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path);

// CIFAR-10 binary batches: 3073-byte records, 1 label byte followed by 3072
// channel-major pixel bytes.
LabeledDataset load_cifar10_bin(const std::vector<std::string>& batch_paths);

// Gaussian class clusters with axis-aligned means `separation` apart,
// unit variance, deterministic per seed. Requires classes <= dim.
LabeledDataset synth_dataset(std::size_t classes, std::size_t per_class, std::size_t dim,
                             std::uint64_t seed, double separation = 6.0);

// Row-gather helper for batch assembly.
DenseMatrix gather_rows(const DenseMatrix& m, const std::vector<std::size_t>& rows);

}  // namespace waffle
