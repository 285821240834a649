#include "cidis/data.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "cidis/error.hpp"

namespace cidis {

namespace fs = std::filesystem;

const char* to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::test: return "test";
        case Split::validation: return "validation";
    }
    return "?";
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    if (s == "validation" || s == "val") return Split::validation;
    throw ConfigError("unknown split name: " + s);
}

char day_to_level(int day) {
    if (day < 1 || day > 28) {
        throw RangeError("storage day " + std::to_string(day) + " outside [1,28]");
    }
    if (day <= 6) return 'A';
    if (day <= 14) return 'B';
    if (day <= 22) return 'C';
    return 'D';
}

int level_label(char level) {
    if (level < 'A' || level > 'D') {
        throw LabelError(std::string("unknown maturity level '") + level + "'");
    }
    return level - 'A';
}

char label_level(int label) {
    if (label < 0 || label > 3) {
        throw LabelError("label " + std::to_string(label) + " outside [0,3]");
    }
    return static_cast<char>('A' + label);
}

std::array<std::size_t, 4> Dataset::class_counts() const {
    std::array<std::size_t, 4> counts = {0, 0, 0, 0};
    for (const auto& s : samples) counts[static_cast<std::size_t>(s.label)]++;
    return counts;
}

std::vector<std::size_t> Dataset::subset_indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split_assignment.size(); ++i)
        if (split_assignment[i] == s) out.push_back(i);
    return out;
}

// ---------------------------------------------------------------------------
// Ingest
// ---------------------------------------------------------------------------

namespace {

std::set<std::string> read_exclusions(const fs::path& path) {
    std::set<std::string> out;
    if (path.empty()) return out;
    std::ifstream in(path);
    if (!in) throw IoError("cannot open exclusion list " + path.string());
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back())))
            line.pop_back();
        std::size_t start = 0;
        while (start < line.size() && std::isspace(static_cast<unsigned char>(line[start])))
            ++start;
        if (start < line.size()) out.insert(line.substr(start));
    }
    return out;
}

// level_X -> label, day_NN -> label via the storage schedule; anything else
// is not a dataset directory.
std::optional<int> dir_label(const std::string& name) {
    if (name.size() == 7 && name.rfind("level_", 0) == 0 && name[6] >= 'A' && name[6] <= 'D') {
        return level_label(name[6]);
    }
    if (name.size() > 4 && name.rfind("day_", 0) == 0) {
        int day = 0;
        for (std::size_t i = 4; i < name.size(); ++i) {
            if (!std::isdigit(static_cast<unsigned char>(name[i]))) return std::nullopt;
            day = day * 10 + (name[i] - '0');
        }
        if (day < 1 || day > 28) return std::nullopt;
        return level_label(day_to_level(day));
    }
    return std::nullopt;
}

}  // namespace

IngestResult ingest_real(const fs::path& root, const fs::path& exclusions,
                         std::uint32_t target_size) {
    if (!fs::is_directory(root)) throw IoError("dataset root is not a directory: " + root.string());
    auto excluded = read_exclusions(exclusions);

    std::vector<std::pair<std::string, int>> files;  // relative path, label
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory()) dirs.push_back(e.path());
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
        auto label = dir_label(dir.filename().string());
        if (!label) continue;
        std::vector<fs::path> entries;
        for (const auto& e : fs::directory_iterator(dir)) {
            if (e.is_regular_file()) entries.push_back(e.path());
        }
        std::sort(entries.begin(), entries.end());
        for (const auto& p : entries) {
            files.emplace_back(fs::relative(p, root).generic_string(), *label);
        }
    }

    IngestResult result;
    for (const auto& [rel, label] : files) {
        if (excluded.count(rel)) continue;
        try {
            auto img = to_rgb(read_image(root / rel));
            img = resize_bilinear(img, target_size, target_size);
            result.dataset.samples.push_back({std::move(img), label, rel});
        } catch (const Error& e) {
            result.skipped.push_back(rel + ": " + e.what());
        }
    }
    if (result.dataset.samples.empty()) {
        throw CorruptDataError("no readable images under " + root.string());
    }
    return result;
}

// ---------------------------------------------------------------------------
// Split
// ---------------------------------------------------------------------------

namespace {

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::size_t j = rng.next_range(0, i - 1);
        std::swap(idx[i - 1], idx[j]);
    }
}

void assign_group(std::vector<std::size_t>& idx, Rng rng, std::vector<Split>& out) {
    shuffle_indices(idx, rng);
    std::size_t n = idx.size();
    std::size_t train_n = (n * 6) / 10;  // floor(0.6 n)
    std::size_t rest = n - train_n;
    std::size_t test_n = (rest + 1) / 2;  // odd remainder goes to test
    for (std::size_t k = 0; k < n; ++k) {
        Split s = k < train_n            ? Split::train
                  : k < train_n + test_n ? Split::test
                                         : Split::validation;
        out[idx[k]] = s;
    }
}

}  // namespace

void split_dataset(Dataset& ds, std::uint64_t seed, std::string* warning) {
    if (ds.samples.size() < 5) {
        throw ContractError("split needs at least 5 samples, got " +
                            std::to_string(ds.samples.size()));
    }
    std::array<std::vector<std::size_t>, 4> by_class;
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
        by_class[static_cast<std::size_t>(ds.samples[i].label)].push_back(i);

    ds.split_assignment.assign(ds.samples.size(), Split::train);
    std::vector<std::size_t> lumped;
    for (int c = 0; c < 4; ++c) {
        auto& idx = by_class[static_cast<std::size_t>(c)];
        if (idx.empty()) continue;
        if (idx.size() < 5) {
            if (warning) {
                *warning += "class " + std::string(1, label_level(c)) + " has only " +
                            std::to_string(idx.size()) + " samples; lumped unstratified\n";
            }
            lumped.insert(lumped.end(), idx.begin(), idx.end());
            continue;
        }
        assign_group(idx, Rng(Rng::fork(seed, static_cast<std::uint64_t>(c))), ds.split_assignment);
    }
    if (!lumped.empty()) {
        std::sort(lumped.begin(), lumped.end());
        assign_group(lumped, Rng(Rng::fork(seed, 999)), ds.split_assignment);
    }
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

Dataset augment_rotations(const Dataset& ds, std::span<const int> turns) {
    std::set<int> wanted(turns.begin(), turns.end());
    for (int t : wanted) {
        if (t != 90 && t != 180 && t != 270) {
            throw ConfigError("rotation turn must be 90, 180 or 270; got " + std::to_string(t));
        }
    }
    Dataset out;
    out.samples = ds.samples;
    for (int turn : wanted) {  // std::set iterates in ascending order
        for (const auto& s : ds.samples) {
            ImageU8 img = turn == 90    ? rotate90(s.image)
                          : turn == 180 ? rotate180(s.image)
                                        : rotate270(s.image);
            out.samples.push_back(
                {std::move(img), s.label, s.origin + "#rot" + std::to_string(turn)});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

std::vector<std::vector<std::size_t>> epoch_batches(const Dataset& ds, Split subset,
                                                    std::size_t batch_size,
                                                    std::uint64_t seed, std::uint64_t epoch) {
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (!ds.has_split()) throw ContractError("dataset has no split assignment");
    auto idx = ds.subset_indices(subset);
    Rng rng(Rng::fork(seed, 0x9E3779B97F4A7C15ull ^ epoch));
    shuffle_indices(idx, rng);

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < idx.size(); start += batch_size) {
        std::size_t end = std::min(start + batch_size, idx.size());
        batches.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(start),
                             idx.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

Batch make_batch(const Dataset& ds, std::span<const std::size_t> indices,
                 std::uint32_t size) {
    if (indices.empty()) throw ContractError("empty batch");
    Batch batch;
    batch.images = Tensor::zeros({static_cast<std::uint32_t>(indices.size()), 3, size, size});
    std::size_t plane = static_cast<std::size_t>(size) * size;
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const Sample& s = ds.samples[indices[b]];
        const ImageU8* img = &s.image;
        ImageU8 resized;
        if (img->width != size || img->height != size) {
            resized = resize_bilinear(*img, size, size);
            img = &resized;
        }
        float* dst = batch.images.data() + b * 3 * plane;
        for (std::uint32_t y = 0; y < size; ++y)
            for (std::uint32_t x = 0; x < size; ++x)
                for (std::uint32_t c = 0; c < 3; ++c)
                    dst[c * plane + y * size + x] = img->at(x, y, c) / 255.0f;
        batch.labels.push_back(s.label);
    }
    return batch;
}

// ---------------------------------------------------------------------------
// Dataset cache and split files
// ---------------------------------------------------------------------------

namespace {

constexpr char kDataMagic[8] = {'C', 'I', 'D', 'I', 'S', 'D', 'A', 'T'};
constexpr std::uint32_t kDataVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

}  // namespace

void save_dataset(const Dataset& ds, const fs::path& path) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kDataMagic, kDataMagic + 8);
    put_u32(out, kDataVersion);
    put_u32(out, static_cast<std::uint32_t>(ds.samples.size()));
    for (const auto& s : ds.samples) {
        out.push_back(static_cast<std::uint8_t>(s.label));
        put_u32(out, static_cast<std::uint32_t>(s.origin.size()));
        out.insert(out.end(), s.origin.begin(), s.origin.end());
        put_u32(out, s.image.width);
        put_u32(out, s.image.height);
        out.insert(out.end(), s.image.pixels.begin(), s.image.pixels.end());
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("cannot write dataset cache " + path.string());
}

Dataset load_dataset(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset cache " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    std::size_t off = 0;
    auto need = [&](std::size_t k) {
        if (off + k > bytes.size())
            throw FormatError("truncated dataset cache " + path.string());
    };
    need(16);
    if (std::memcmp(bytes.data(), kDataMagic, 8) != 0) {
        throw FormatError("bad dataset cache magic in " + path.string());
    }
    off = 8;
    std::uint32_t version = get_u32(bytes.data() + off);
    off += 4;
    if (version != kDataVersion) {
        throw FormatError("unsupported dataset cache version " + std::to_string(version));
    }
    std::uint32_t count = get_u32(bytes.data() + off);
    off += 4;

    Dataset ds;
    ds.samples.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        need(1);
        int label = bytes[off++];
        if (label > 3) throw FormatError("dataset cache has label outside [0,3]");
        need(4);
        std::uint32_t origin_len = get_u32(bytes.data() + off);
        off += 4;
        need(origin_len);
        std::string origin(reinterpret_cast<const char*>(bytes.data() + off), origin_len);
        off += origin_len;
        need(8);
        std::uint32_t w = get_u32(bytes.data() + off);
        std::uint32_t h = get_u32(bytes.data() + off + 4);
        off += 8;
        std::size_t pix = static_cast<std::size_t>(w) * h * 3;
        need(pix);
        ImageU8 img = ImageU8::make(w, h, 3);
        std::memcpy(img.pixels.data(), bytes.data() + off, pix);
        off += pix;
        ds.samples.push_back({std::move(img), label, std::move(origin)});
    }
    if (off != bytes.size()) throw FormatError("trailing bytes in dataset cache");
    return ds;
}

void save_split(const Dataset& ds, const fs::path& path) {
    if (!ds.has_split()) throw ContractError("dataset has no split assignment to save");
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    for (std::size_t i = 0; i < ds.split_assignment.size(); ++i) {
        f << i << ' ' << to_string(ds.split_assignment[i]) << '\n';
    }
    if (!f) throw IoError("cannot write split file " + path.string());
}

void load_split(Dataset& ds, const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open split file " + path.string());
    std::vector<Split> assignment(ds.samples.size(), Split::train);
    std::vector<bool> seen(ds.samples.size(), false);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::size_t idx;
        std::string name;
        if (!(ls >> idx >> name) || idx >= ds.samples.size()) {
            throw FormatError("bad split line: " + line);
        }
        assignment[idx] = split_from_string(name);
        seen[idx] = true;
    }
    for (std::size_t i = 0; i < seen.size(); ++i) {
        if (!seen[i]) {
            throw FormatError("split file missing sample " + std::to_string(i));
        }
    }
    ds.split_assignment = std::move(assignment);
}

}  // namespace cidis
