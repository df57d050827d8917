#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <zlib.h>

#include "demp/rng.hpp"
#include "demp/tensor.hpp"

namespace demp {

struct Dataset {
    Tensor inputs;             // (N, features) or (N, C, H, W)
    std::vector<int> labels;   // in [0, classes)
    std::string name;
    std::vector<double> norm_mean, norm_std;  // per-feature normalization, if applied

    std::size_t size() const { return labels.size(); }
    int num_classes() const {
        int c = 0;
        for (int l : labels) c = std::max(c, l + 1);
        return c;
    }
};

// --------------------------------------------------------------- IDX files

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
    const bool gz = path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
    if (gz) {
        gzFile f = gzopen(path.c_str(), "rb");
        if (!f) throw std::runtime_error("cannot open " + path);
        std::vector<unsigned char> out;
        unsigned char buf[1 << 16];
        int got;
        while ((got = gzread(f, buf, sizeof buf)) > 0) out.insert(out.end(), buf, buf + got);
        const bool err = got < 0;
        gzclose(f);
        if (err) throw std::runtime_error("gzip read error in " + path);
        return out;
    }
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off,
                          const std::string& path) {
    if (off + 4 > b.size())
        throw std::runtime_error("truncated IDX file " + path + " at byte offset " +
                                 std::to_string(off));
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
           (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

}  // namespace detail

/// Loads an MNIST-style IDX image/label pair. Pixels are scaled to [0,1];
/// shapes are (N,1,H,W) and (N). Gzip-compressed files are detected by a
/// .gz extension.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const auto img = detail::read_file_bytes(images_path);
    const auto lab = detail::read_file_bytes(labels_path);

    const std::uint32_t img_magic = detail::be32(img, 0, images_path);
    if (img_magic != 0x00000803u)
        throw std::runtime_error("bad IDX magic in " + images_path + " at byte offset 0: got 0x" +
                                 [&] { char s[16]; std::snprintf(s, 16, "%08x", img_magic); return std::string(s); }());
    const std::uint32_t lab_magic = detail::be32(lab, 0, labels_path);
    if (lab_magic != 0x00000801u)
        throw std::runtime_error("bad IDX magic in " + labels_path + " at byte offset 0: got 0x" +
                                 [&] { char s[16]; std::snprintf(s, 16, "%08x", lab_magic); return std::string(s); }());

    const std::uint32_t n_img = detail::be32(img, 4, images_path);
    const std::uint32_t h = detail::be32(img, 8, images_path);
    const std::uint32_t w = detail::be32(img, 12, images_path);
    const std::uint32_t n_lab = detail::be32(lab, 4, labels_path);
    if (n_img != n_lab)
        throw std::runtime_error("image/label count mismatch: " + std::to_string(n_img) + " vs " +
                                 std::to_string(n_lab));
    const std::size_t pixels = std::size_t(n_img) * h * w;
    if (img.size() != 16 + pixels)
        throw std::runtime_error("truncated IDX file " + images_path + " at byte offset " +
                                 std::to_string(img.size()) + " (expected " +
                                 std::to_string(16 + pixels) + " bytes)");
    if (lab.size() != 8 + n_lab)
        throw std::runtime_error("truncated IDX file " + labels_path + " at byte offset " +
                                 std::to_string(lab.size()) + " (expected " +
                                 std::to_string(8 + std::size_t(n_lab)) + " bytes)");

    Dataset ds;
    ds.name = "idx:" + images_path;
    ds.inputs = Tensor({n_img, 1, h, w});
    for (std::size_t i = 0; i < pixels; ++i)
        ds.inputs[i] = static_cast<double>(img[16 + i]) / 255.0;
    ds.labels.assign(lab.begin() + 8, lab.end());
    return ds;
}

/// Writes IDX image/label files (test fixtures, surrogate datasets).
inline void save_idx(const Dataset& ds, const std::string& images_path,
                     const std::string& labels_path) {
    if (ds.inputs.ndim() != 4) throw std::invalid_argument("save_idx: expects (N,1,H,W) inputs");
    const std::size_t n = ds.inputs.dim(0), h = ds.inputs.dim(2), w = ds.inputs.dim(3);
    auto wr32 = [](std::ofstream& os, std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
        os.write(reinterpret_cast<char*>(b), 4);
    };
    std::ofstream oi(images_path, std::ios::binary);
    if (!oi) throw std::runtime_error("cannot open " + images_path);
    wr32(oi, 0x00000803u);
    wr32(oi, static_cast<std::uint32_t>(n));
    wr32(oi, static_cast<std::uint32_t>(h));
    wr32(oi, static_cast<std::uint32_t>(w));
    for (std::size_t i = 0; i < ds.inputs.size(); ++i) {
        const double v = std::clamp(ds.inputs[i], 0.0, 1.0);
        const auto byte = static_cast<unsigned char>(std::lround(v * 255.0));
        oi.write(reinterpret_cast<const char*>(&byte), 1);
    }
    std::ofstream ol(labels_path, std::ios::binary);
    if (!ol) throw std::runtime_error("cannot open " + labels_path);
    wr32(ol, 0x00000801u);
    wr32(ol, static_cast<std::uint32_t>(n));
    for (int l : ds.labels) {
        const auto byte = static_cast<unsigned char>(l);
        ol.write(reinterpret_cast<const char*>(&byte), 1);
    }
}

// ---------------------------------------------------------------- sampling

/// Seeded sample of n examples without replacement.
inline Dataset subset(const Dataset& ds, std::size_t n, std::uint64_t seed) {
    if (n > ds.size())
        throw std::invalid_argument("subset: requested " + std::to_string(n) + " of " +
                                    std::to_string(ds.size()));
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = substream(seed, 0x5b5e7ULL);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(n);

    const std::size_t feat = ds.inputs.size() / ds.inputs.dim(0);
    auto shape = ds.inputs.shape();
    shape[0] = n;
    Dataset out;
    out.name = ds.name + ":subset" + std::to_string(n);
    out.inputs = Tensor(shape);
    out.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(ds.inputs.data() + idx[i] * feat, feat, out.inputs.data() + i * feat);
        out.labels[i] = ds.labels[idx[i]];
    }
    return out;
}

/// Gaussian blobs around seeded random centers with pairwise distance
/// >= separation. Fast synthetic fixture for classification tests.
inline Dataset synth_blobs(int classes, std::size_t per_class, std::size_t dim,
                           double separation, std::uint64_t seed) {
    if (separation <= 0.0) throw std::invalid_argument("synth_blobs: separation must be > 0");
    if (per_class == 0) throw std::invalid_argument("synth_blobs: empty dataset (per_class == 0)");
    if (classes < 1) throw std::invalid_argument("synth_blobs: need at least one class");

    Rng rng = substream(seed, 0xb70b5ULL);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Random centers; re-drawn until every pair is >= separation apart.
    std::vector<std::vector<double>> centers;
    const double scale = separation;
    int attempts = 0;
    while (static_cast<int>(centers.size()) < classes) {
        std::vector<double> c(dim);
        double norm = 0.0;
        for (auto& v : c) {
            v = gauss(rng);
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (auto& v : c) v = v / norm * scale;
        bool ok = true;
        for (const auto& other : centers) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < dim; ++k) {
                const double d = c[k] - other[k];
                d2 += d * d;
            }
            if (d2 < separation * separation) {
                ok = false;
                break;
            }
        }
        if (ok) {
            centers.push_back(std::move(c));
            attempts = 0;
        } else if (++attempts > 10000) {
            throw std::runtime_error("synth_blobs: cannot place centers at this separation");
        }
    }

    Dataset ds;
    ds.name = "blobs";
    const std::size_t n = per_class * static_cast<std::size_t>(classes);
    ds.inputs = Tensor({n, dim});
    ds.labels.resize(n);
    std::size_t row = 0;
    for (int c = 0; c < classes; ++c)
        for (std::size_t i = 0; i < per_class; ++i, ++row) {
            double* x = ds.inputs.data() + row * dim;
            for (std::size_t k = 0; k < dim; ++k) x[k] = centers[c][k] + gauss(rng);
            ds.labels[row] = c;
        }
    return ds;
}

// ---------------------------------------------------------------- batching

/// Deterministic epoch permutations; train mode drops the last partial batch.
struct BatchPlan {
    std::size_t batch_size = 1;
    std::uint64_t seed = 0;

    std::size_t batches_per_epoch(std::size_t n, bool drop_last) const {
        return drop_last ? n / batch_size : (n + batch_size - 1) / batch_size;
    }

    std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t epoch) const {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        Rng rng = substream(seed, epoch);
        std::shuffle(idx.begin(), idx.end(), rng);
        return idx;
    }

    /// Index list of global batch `step` (train convention: partial batches dropped).
    std::vector<std::size_t> batch_indices(std::size_t n, std::uint64_t step) const {
        const std::size_t per_epoch = batches_per_epoch(n, true);
        if (per_epoch == 0)
            throw std::invalid_argument("batch plan: batch size exceeds dataset size");
        const std::uint64_t epoch = step / per_epoch;
        const std::size_t b = step % per_epoch;
        auto order = epoch_order(n, epoch);
        return {order.begin() + b * batch_size, order.begin() + (b + 1) * batch_size};
    }
};

/// Materializes a paired (inputs, labels) batch.
inline std::pair<Tensor, std::vector<int>> gather_batch(const Dataset& ds,
                                                        const std::vector<std::size_t>& idx) {
    const std::size_t feat = ds.inputs.size() / ds.inputs.dim(0);
    auto shape = ds.inputs.shape();
    shape[0] = idx.size();
    Tensor x(shape);
    std::vector<int> y(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy_n(ds.inputs.data() + idx[i] * feat, feat, x.data() + i * feat);
        y[i] = ds.labels[idx[i]];
    }
    return {std::move(x), std::move(y)};
}

}  // namespace demp
