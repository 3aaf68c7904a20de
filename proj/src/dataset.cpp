#include "spikelab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>

#include "spikelab/error.hpp"
#include "spikelab/rng.hpp"

namespace spikelab {

Tensor LabeledDataset::image(std::size_t i) const {
    if (i >= size()) throw IndexError("dataset index out of range");
    const std::size_t d = sample_numel();
    Shape s(images.shape.begin() + 1, images.shape.end());
    Tensor out = Tensor::zeros(s);
    std::copy_n(images.data.begin() + static_cast<std::ptrdiff_t>(i * d), d, out.data.begin());
    return out;
}

Tensor LabeledDataset::batch(const std::vector<std::size_t>& idx) const {
    const std::size_t d = sample_numel();
    Shape s = images.shape;
    s[0] = idx.size();
    Tensor out = Tensor::zeros(s);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= size()) throw IndexError("dataset index out of range");
        std::copy_n(images.data.begin() + static_cast<std::ptrdiff_t>(idx[r] * d), d,
                    out.data.begin() + static_cast<std::ptrdiff_t>(r * d));
    }
    return out;
}

std::vector<std::size_t> LabeledDataset::indices_of_class(int cls) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == cls) out.push_back(i);
    return out;
}

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& idx, std::string split_tag) const {
    LabeledDataset out;
    out.images = batch(idx);
    out.labels.reserve(idx.size());
    for (std::size_t i : idx) out.labels.push_back(labels[i]);
    out.class_count = class_count;
    out.split = std::move(split_tag);
    return out;
}

Tensor LabeledDataset::flat_rows() const {
    Tensor out = images;
    out.shape = {size(), sample_numel()};
    return out;
}

namespace {

double f32q(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

LabeledDataset make_gaussian_blobs(const GaussianBlobSpec& spec) {
    if (spec.variance <= 0.0) throw ArgumentError("gaussian blobs: variance must be > 0");
    if (spec.means.ndim() != 2 || spec.means.dim(1) != spec.dimension)
        throw DimensionError("gaussian blobs: means must be k x d");
    const std::size_t k = spec.means.dim(0);
    if (k == 0 || spec.per_class == 0) throw ArgumentError("gaussian blobs: empty dataset");
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b) {
            bool same = true;
            for (std::size_t j = 0; j < spec.dimension && same; ++j)
                same = spec.means.at2(a, j) == spec.means.at2(b, j);
            if (same) throw ArgumentError("gaussian blobs: class means must be distinct");
        }
    const double sd = std::sqrt(spec.variance);
    Rng rng(spec.seed);
    LabeledDataset ds;
    const std::size_t n = k * spec.per_class;
    ds.images = Tensor::zeros({n, 1, 1, spec.dimension});
    ds.labels.reserve(n);
    ds.class_count = static_cast<int>(k);
    std::size_t row = 0;
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t s = 0; s < spec.per_class; ++s, ++row) {
            double* out = ds.images.data.data() + row * spec.dimension;
            for (std::size_t j = 0; j < spec.dimension; ++j)
                out[j] = f32q(spec.means.at2(c, j) + sd * rng.normal());
            ds.labels.push_back(static_cast<int>(c));
        }
    }
    return ds;
}

namespace {

enum class ShapeKind { Rect, Disc, Cross, Triangle, Ring, Diamond, HStripes, VStripes };

bool shape_hit(ShapeKind kind, double dx, double dy, double s) {
    switch (kind) {
        case ShapeKind::Rect:
            return std::abs(dx) <= s && std::abs(dy) <= 0.7 * s;
        case ShapeKind::Disc:
            return dx * dx + dy * dy <= s * s;
        case ShapeKind::Cross:
            return (std::abs(dx) <= 0.32 * s && std::abs(dy) <= s) || (std::abs(dy) <= 0.32 * s && std::abs(dx) <= s);
        case ShapeKind::Triangle:
            return dy >= -s && dy <= 0.8 * s && std::abs(dx) <= 0.55 * (dy + s);
        case ShapeKind::Ring: {
            double r2 = dx * dx + dy * dy;
            return r2 <= s * s && r2 >= 0.36 * s * s;
        }
        case ShapeKind::Diamond:
            return std::abs(dx) + std::abs(dy) <= s;
        case ShapeKind::HStripes:
            return std::abs(dx) <= s && std::abs(dy) <= s &&
                   (static_cast<int>(std::floor((dy + s) / (0.45 * s))) % 2) == 0;
        case ShapeKind::VStripes:
            return std::abs(dx) <= s && std::abs(dy) <= s &&
                   (static_cast<int>(std::floor((dx + s) / (0.45 * s))) % 2) == 0;
    }
    return false;
}

}  // namespace

LabeledDataset make_shape_images(int class_count, std::size_t per_class, int channels, int h, int w,
                                 std::uint64_t seed) {
    if (per_class == 0) throw ArgumentError("shape images: empty dataset (per_class = 0)");
    if (class_count < 1 || class_count > 8) throw ArgumentError("shape images: class count must be in [1, 8]");
    if (h < 16 || w < 16) throw ArgumentError("shape images: extents must be >= 16");
    if (channels < 1) throw ArgumentError("shape images: channels must be >= 1");
    Rng rng(seed);
    const std::size_t c = static_cast<std::size_t>(channels);
    const std::size_t n = static_cast<std::size_t>(class_count) * per_class;
    LabeledDataset ds;
    ds.images = Tensor::zeros({n, c, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
    ds.labels.reserve(n);
    ds.class_count = class_count;
    const double smin = 0.24 * std::min(h, w), smax = 0.36 * std::min(h, w);
    std::size_t row = 0;
    for (int cls = 0; cls < class_count; ++cls) {
        auto kind = static_cast<ShapeKind>(cls % 8);
        for (std::size_t i = 0; i < per_class; ++i, ++row) {
            std::vector<double> bg(c), fg(c);
            for (std::size_t ch = 0; ch < c; ++ch) bg[ch] = rng.uniform(0.05, 0.22);
            for (std::size_t ch = 0; ch < c; ++ch) fg[ch] = rng.uniform(0.70, 1.0);
            double cx = rng.uniform(0.38 * w, 0.62 * w);
            double cy = rng.uniform(0.38 * h, 0.62 * h);
            double s = rng.uniform(smin, smax);
            double* img = ds.images.data.data() + row * c * h * w;
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    double noise = rng.uniform(0.0, 0.04);
                    bool hit = shape_hit(kind, x + 0.5 - cx, y + 0.5 - cy, s);
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        double v = (hit ? fg[ch] : bg[ch]) + noise;
                        img[ch * h * w + static_cast<std::size_t>(y) * w + x] = f32q(std::clamp(v, 0.0, 1.0));
                    }
                }
            }
            ds.labels.push_back(cls);
        }
    }
    return ds;
}

// --- SBL1 container ---------------------------------------------------------

namespace {

struct ByteReader {
    std::ifstream in;
    std::size_t offset = 0;
    explicit ByteReader(const std::string& path) : in(path, std::ios::binary) {
        if (!in) throw FormatError("cannot open dataset file '" + path + "'", 0);
    }
    void read(void* dst, std::size_t count, const char* what) {
        in.read(static_cast<char*>(dst), static_cast<std::streamsize>(count));
        if (static_cast<std::size_t>(in.gcount()) != count)
            throw FormatError(std::string("truncated file while reading ") + what, offset);
        offset += count;
    }
    std::uint32_t u32(const char* what) {
        std::uint32_t v;
        read(&v, 4, what);
        return v;
    }
    bool at_eof() {
        in.peek();
        return in.eof();
    }
};

void write_bytes(std::ofstream& out, const void* src, std::size_t count) {
    out.write(static_cast<const char*>(src), static_cast<std::streamsize>(count));
}

}  // namespace

LabeledDataset load_binary_dataset(const std::string& path) {
    static_assert(sizeof(float) == 4 && sizeof(std::uint32_t) == 4);
    ByteReader r(path);
    char magic[4];
    r.read(magic, 4, "magic");
    if (std::memcmp(magic, "SBL1", 4) != 0) throw FormatError("bad magic, expected SBL1", 0);
    std::uint32_t n = r.u32("sample count"), c = r.u32("channels"), h = r.u32("height"), w = r.u32("width"),
                  k = r.u32("class count");
    if (n == 0 || c == 0 || h == 0 || w == 0 || k == 0) throw FormatError("zero extent in header", 4);
    LabeledDataset ds;
    ds.class_count = static_cast<int>(k);
    ds.images = Tensor::zeros({n, c, h, w});
    std::vector<float> px(static_cast<std::size_t>(c) * h * w);
    for (std::uint32_t i = 0; i < n; ++i) {
        r.read(px.data(), px.size() * 4, "pixel data");
        double* dst = ds.images.data.data() + static_cast<std::size_t>(i) * px.size();
        for (std::size_t t = 0; t < px.size(); ++t) dst[t] = static_cast<double>(px[t]);
    }
    ds.labels.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        std::size_t at = r.offset;
        std::uint16_t lab;
        r.read(&lab, 2, "label");
        if (lab >= k)
            throw FormatError("label " + std::to_string(lab) + " >= class count " + std::to_string(k), at);
        ds.labels[i] = static_cast<int>(lab);
    }
    if (!r.at_eof()) throw FormatError("trailing bytes after label table", r.offset);
    return ds;
}

void save_binary_dataset(const LabeledDataset& ds, const std::string& path) {
    if (ds.size() == 0) throw ArgumentError("save_binary_dataset: empty dataset");
    if (ds.images.ndim() != 4) throw DimensionError("save_binary_dataset: images must be n x c x h x w");
    if (ds.class_count <= 0 || ds.class_count > 65535)
        throw ArgumentError("save_binary_dataset: class count out of u16 range");
    for (int lab : ds.labels)
        if (lab < 0 || lab >= ds.class_count) throw ArgumentError("save_binary_dataset: label out of range");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ArgumentError("cannot open '" + path + "' for writing");
    write_bytes(out, "SBL1", 4);
    std::uint32_t header[5] = {static_cast<std::uint32_t>(ds.size()), static_cast<std::uint32_t>(ds.images.dim(1)),
                               static_cast<std::uint32_t>(ds.images.dim(2)),
                               static_cast<std::uint32_t>(ds.images.dim(3)),
                               static_cast<std::uint32_t>(ds.class_count)};
    write_bytes(out, header, sizeof(header));
    std::vector<float> px(ds.images.size());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<float>(ds.images.data[i]);
    write_bytes(out, px.data(), px.size() * 4);
    for (int lab : ds.labels) {
        std::uint16_t v = static_cast<std::uint16_t>(lab);
        write_bytes(out, &v, 2);
    }
    if (!out) throw ArgumentError("write failed for '" + path + "'");
}

std::array<LabeledDataset, 3> split_dataset(const LabeledDataset& ds, const std::array<double, 3>& fractions,
                                            std::uint64_t seed) {
    double total = 0.0;
    for (double f : fractions) {
        if (f <= 0.0) throw ArgumentError("split: fractions must be > 0");
        total += f;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ArgumentError("split: fractions must sum to 1");
    if (ds.size() == 0) throw ArgumentError("split: empty dataset");
    Rng rng(seed);
    std::array<std::vector<std::size_t>, 3> parts;
    for (int cls = 0; cls < ds.class_count; ++cls) {
        std::vector<std::size_t> idx = ds.indices_of_class(cls);
        rng.shuffle(idx);
        const std::size_t nc = idx.size();
        // Largest-remainder allocation keeps per-class proportions within 1.
        std::array<std::size_t, 3> count{};
        std::array<double, 3> frac{};
        std::size_t assigned = 0;
        for (int p = 0; p < 3; ++p) {
            double want = fractions[static_cast<std::size_t>(p)] * static_cast<double>(nc);
            count[static_cast<std::size_t>(p)] = static_cast<std::size_t>(std::floor(want));
            frac[static_cast<std::size_t>(p)] = want - std::floor(want);
            assigned += count[static_cast<std::size_t>(p)];
        }
        while (assigned < nc) {
            int best = 0;
            for (int p = 1; p < 3; ++p)
                if (frac[static_cast<std::size_t>(p)] > frac[static_cast<std::size_t>(best)]) best = p;
            ++count[static_cast<std::size_t>(best)];
            frac[static_cast<std::size_t>(best)] = -1.0;
            ++assigned;
        }
        std::size_t at = 0;
        for (int p = 0; p < 3; ++p) {
            for (std::size_t t = 0; t < count[static_cast<std::size_t>(p)]; ++t)
                parts[static_cast<std::size_t>(p)].push_back(idx[at++]);
        }
    }
    static const char* tags[3] = {"train", "val", "test"};
    std::array<LabeledDataset, 3> out;
    for (int p = 0; p < 3; ++p) {
        std::sort(parts[static_cast<std::size_t>(p)].begin(), parts[static_cast<std::size_t>(p)].end());
        out[static_cast<std::size_t>(p)] = ds.subset(parts[static_cast<std::size_t>(p)], tags[p]);
    }
    return out;
}

}  // namespace spikelab
