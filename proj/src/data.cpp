#include "waffle/data.hpp"

#include <cstdio>
#include <fstream>

#include "waffle/error.hpp"
#include "waffle/rng.hpp"

namespace waffle {

void LabeledDataset::validate() const {
    if (features.rows != labels.size())
        throw ConsistencyError("dataset: feature/label count mismatch");
    if (features.cols != channels * height * width)
        throw ConsistencyError("dataset: feature width does not match (C,H,W)");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
            throw ConsistencyError("dataset: label out of range");
}

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

std::uint32_t read_u32_be(const std::vector<unsigned char>& b, std::size_t off) {
    return (static_cast<std::uint32_t>(b[off]) << 24) |
           (static_cast<std::uint32_t>(b[off + 1]) << 16) |
           (static_cast<std::uint32_t>(b[off + 2]) << 8) | static_cast<std::uint32_t>(b[off + 3]);
}

}  // namespace

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const auto img = read_file(images_path);
    const auto lab = read_file(labels_path);
    if (img.size() < 16) throw FormatError("IDX image file too short: " + images_path);
    if (lab.size() < 8) throw FormatError("IDX label file too short: " + labels_path);

    if (read_u32_be(img, 0) != 0x00000803u)
        throw FormatError("bad IDX image magic in " + images_path);
    if (read_u32_be(lab, 0) != 0x00000801u)
        throw FormatError("bad IDX label magic in " + labels_path);

    const std::size_t n = read_u32_be(img, 4);
    const std::size_t rows = read_u32_be(img, 8);
    const std::size_t cols = read_u32_be(img, 12);
    if (img.size() != 16 + n * rows * cols)
        throw FormatError("truncated IDX image file: " + images_path);

    const std::size_t n_lab = read_u32_be(lab, 4);
    if (lab.size() != 8 + n_lab) throw FormatError("truncated IDX label file: " + labels_path);
    if (n != n_lab) throw ConsistencyError("IDX image/label count mismatch");

    LabeledDataset ds;
    ds.channels = 1;
    ds.height = rows;
    ds.width = cols;
    ds.num_classes = 10;
    ds.features = DenseMatrix(n, rows * cols);
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < rows * cols; ++p)
            ds.features.data[i * rows * cols + p] =
                static_cast<double>(img[16 + i * rows * cols + p]) / 255.0;
        const unsigned char y = lab[8 + i];
        if (y > 9) throw FormatError("IDX label byte out of range");
        ds.labels[i] = y;
    }
    ds.validate();
    return ds;
}

LabeledDataset load_cifar10_bin(const std::vector<std::string>& batch_paths) {
    constexpr std::size_t kRecord = 3073;
    constexpr std::size_t kPixels = 3072;
    LabeledDataset ds;
    ds.channels = 3;
    ds.height = 32;
    ds.width = 32;
    ds.num_classes = 10;

    std::size_t total = 0;
    std::vector<std::vector<unsigned char>> files;
    for (const auto& path : batch_paths) {
        auto bytes = read_file(path);
        if (bytes.empty() || bytes.size() % kRecord != 0)
            throw FormatError("CIFAR batch size not a multiple of 3073: " + path);
        total += bytes.size() / kRecord;
        files.push_back(std::move(bytes));
    }
    ds.features = DenseMatrix(total, kPixels);
    ds.labels.resize(total);
    std::size_t row = 0;
    for (const auto& bytes : files) {
        for (std::size_t off = 0; off < bytes.size(); off += kRecord, ++row) {
            const unsigned char y = bytes[off];
            if (y > 9) throw FormatError("CIFAR label byte out of range");
            ds.labels[row] = y;
            for (std::size_t p = 0; p < kPixels; ++p)
                ds.features.data[row * kPixels + p] =
                    static_cast<double>(bytes[off + 1 + p]) / 255.0;
        }
    }
    ds.validate();
    return ds;
}

LabeledDataset synth_dataset(std::size_t classes, std::size_t per_class, std::size_t dim,
                             std::uint64_t seed, double separation) {
    if (classes < 1 || per_class < 1 || dim < 1)
        throw ContractError("synth_dataset: counts must be >= 1");
    if (classes > dim)
        throw ConfigError("synth_dataset: axis-aligned means require classes <= dim");
    LabeledDataset ds;
    ds.channels = 1;
    ds.height = 1;
    ds.width = dim;
    ds.num_classes = classes;
    ds.features = DenseMatrix(classes * per_class, dim);
    ds.labels.resize(classes * per_class);
    RngStream rng(seed, 0, kDataStream);
    std::size_t row = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t i = 0; i < per_class; ++i, ++row) {
            ds.labels[row] = static_cast<int>(c);
            for (std::size_t j = 0; j < dim; ++j)
                ds.features.data[row * dim + j] = rng.normal() + (j == c ? separation : 0.0);
        }
    }
    return ds;
}

DenseMatrix gather_rows(const DenseMatrix& m, const std::vector<std::size_t>& rows) {
    DenseMatrix out(rows.size(), m.cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= m.rows) throw ContractError("gather_rows: index out of range");
        for (std::size_t j = 0; j < m.cols; ++j) out.at(i, j) = m.at(rows[i], j);
    }
    return out;
}

}  // namespace waffle
