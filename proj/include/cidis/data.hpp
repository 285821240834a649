#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cidis/image.hpp"
#include "cidis/tensor.hpp"

namespace cidis {

enum class Split { train, test, validation };

const char* to_string(Split s);
Split split_from_string(const std::string& s);

/// Maturity level for a storage day per the 28-day schedule:
/// 1-6 -> A, 7-14 -> B, 15-22 -> C, 23-28 -> D.
char day_to_level(int day);
/// 'A'..'D' -> 0..3.
int level_label(char level);
char label_level(int label);

struct Sample {
    ImageU8 image;       // 8-bit RGB
    int label = 0;       // 0..3
    std::string origin;  // source path or flattened scene config
};

struct Dataset {
    std::vector<Sample> samples;
    std::vector<Split> split_assignment;  // empty until split() runs

    bool has_split() const { return split_assignment.size() == samples.size(); }
    std::array<std::size_t, 4> class_counts() const;
    std::vector<std::size_t> subset_indices(Split s) const;
};

struct IngestResult {
    Dataset dataset;
    std::vector<std::string> skipped;  // "path: reason" lines
};

/// Scans root/level_{A..D} and root/day_NN directories in sorted path order,
/// decoding every image not named in the exclusion list (one relative path
/// per line, `#` comments). Undecodable files land in the skip report.
IngestResult ingest_real(const std::filesystem::path& root,
                         const std::filesystem::path& exclusions = {},
                         std::uint32_t target_size = 224);

/// Stratified per-class 60/20/20 assignment: seeded shuffle within each
/// class, floor(0.6 n) to train, remainder split evenly with the odd sample
/// going to test. Classes with < 5 samples are lumped and split unstratified;
/// the warning (if any) is appended to *warning.
void split_dataset(Dataset& ds, std::uint64_t seed, std::string* warning = nullptr);

/// Originals plus one rotated copy per requested turn (append order: all
/// 90s, then 180s, then 270s, each in sample order). Labels are preserved.
Dataset augment_rotations(const Dataset& ds, std::span<const int> turns);

struct Batch {
    Tensor images;  // [b,3,S,S], values in [0,1]
    std::vector<int> labels;
};

/// Per-epoch seeded shuffle of a subset, chunked into ceil(n/batch_size)
/// batches; the final short batch is kept.
std::vector<std::vector<std::size_t>> epoch_batches(const Dataset& ds, Split subset,
                                                    std::size_t batch_size,
                                                    std::uint64_t seed, std::uint64_t epoch);

/// Normalized [b,3,S,S] batch from dataset rows; images are resized to
/// `size` if they differ.
Batch make_batch(const Dataset& ds, std::span<const std::size_t> indices,
                 std::uint32_t size);

/// Binary dataset cache: magic, version, sample records (label, origin,
/// extents, raw RGB bytes). Little-endian.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Split assignment as text: one "<index> <split>" line per sample.
void save_split(const Dataset& ds, const std::filesystem::path& path);
void load_split(Dataset& ds, const std::filesystem::path& path);

}  // namespace cidis
