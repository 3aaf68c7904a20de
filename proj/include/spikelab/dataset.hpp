#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "spikelab/tensor.hpp"

namespace spikelab {

// Immutable after construction. Image values live in [0,1] for the image
// generators and the SBL1 container; Gaussian-blob sets (stored as
// n x 1 x 1 x d) are unbounded by nature and documented as such.
struct LabeledDataset {
    Tensor images;  // n x c x h x w
    std::vector<int> labels;
    int class_count = 0;
    std::string split = "full";

    std::size_t size() const { return labels.size(); }
    std::size_t sample_numel() const { return size() == 0 ? 0 : images.size() / size(); }
    Tensor image(std::size_t i) const;                          // c x h x w
    Tensor batch(const std::vector<std::size_t>& idx) const;    // |idx| x c x h x w
    std::vector<std::size_t> indices_of_class(int cls) const;
    LabeledDataset subset(const std::vector<std::size_t>& idx, std::string split_tag) const;
    // Rows flattened to n x d (for vector tasks stored as n x 1 x 1 x d).
    Tensor flat_rows() const;
};

struct GaussianBlobSpec {
    std::size_t dimension = 2;
    Tensor means;  // k x d
    double variance = 1.0;
    std::size_t per_class = 100;
    std::uint64_t seed = 0;
};

LabeledDataset make_gaussian_blobs(const GaussianBlobSpec& spec);

// Procedural colored shapes (filled rectangle, disc, cross, triangle, ring,
// diamond, h-stripes, v-stripes), jittered in position, size and color.
// Supports up to 8 classes; h, w >= 16.
LabeledDataset make_shape_images(int class_count, std::size_t per_class, int channels, int h, int w,
                                 std::uint64_t seed);

// SBL1 container: magic "SBL1", u32 n,c,h,w,k (little-endian), n*c*h*w
// float32 pixels, n u16 labels. Generators quantize pixel values to float32
// so a save/load round-trip is bitwise.
LabeledDataset load_binary_dataset(const std::string& path);
void save_binary_dataset(const LabeledDataset& ds, const std::string& path);

// Stratified by class, deterministic per seed, disjoint and exhaustive.
std::array<LabeledDataset, 3> split_dataset(const LabeledDataset& ds, const std::array<double, 3>& fractions,
                                            std::uint64_t seed);

}  // namespace spikelab
