#include "cidis/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "cidis/error.hpp"

namespace cidis {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

void parse_line_into(const std::string& raw, KvBlock& block) {
    std::string line = raw;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) return;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line is not `key = value`: " + raw);
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
        throw ConfigError("config line is not `key = value`: " + raw);
    block[key] = value;
}

bool blank(const std::string& raw) {
    std::string line = raw;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    return trim(line).empty();
}

long to_long(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        long out = std::stol(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' wants an integer, got '" + v + "'");
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' wants a number, got '" + v + "'");
    }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        std::uint64_t out = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' wants an unsigned integer, got '" + v + "'");
    }
}

const std::set<std::string>& train_keys() {
    static const std::set<std::string> keys = {"id",           "stage",        "optimizer",
                                               "lr",           "dropout_layers", "dropout_rate",
                                               "batch_size",   "epochs",       "seed"};
    return keys;
}

const std::set<std::string>& build_keys() {
    static const std::set<std::string> keys = {"input_size", "block_widths",   "hidden",
                                               "num_classes", "dropout_layers", "dropout_rate"};
    return keys;
}

}  // namespace

KvBlock parse_kv(const std::string& text) {
    KvBlock block;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) parse_line_into(line, block);
    return block;
}

std::vector<KvBlock> parse_kv_blocks(const std::string& text) {
    std::vector<KvBlock> blocks;
    KvBlock current;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (blank(line)) {
            if (!current.empty()) blocks.push_back(std::move(current));
            current = {};
        } else {
            parse_line_into(line, current);
        }
    }
    if (!current.empty()) blocks.push_back(std::move(current));
    return blocks;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

TrainConfig train_config_from(const KvBlock& block, TrainConfig base) {
    for (const auto& [key, value] : block) {
        if (key == "id") {
            base.id = value;
        } else if (key == "stage") {
            base.stage = value;
        } else if (key == "optimizer") {
            base.optimizer = optim_kind_from_string(value);
        } else if (key == "lr") {
            base.lr = static_cast<float>(to_double(key, value));
        } else if (key == "dropout_layers") {
            base.dropout_layers = static_cast<int>(to_long(key, value));
        } else if (key == "dropout_rate") {
            base.dropout_rate = static_cast<float>(to_double(key, value));
        } else if (key == "batch_size") {
            base.batch_size = static_cast<int>(to_long(key, value));
        } else if (key == "epochs") {
            base.epochs = static_cast<int>(to_long(key, value));
        } else if (key == "seed") {
            base.seed = to_u64(key, value);
        } else if (build_keys().count(key)) {
            // build-options key riding in the same block; handled elsewhere
        } else {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }
    validate(base);
    return base;
}

BuildOptions build_options_from(const KvBlock& block, BuildOptions base) {
    for (const auto& [key, value] : block) {
        if (key == "input_size") {
            base.input_size = static_cast<std::uint32_t>(to_long(key, value));
        } else if (key == "block_widths") {
            std::vector<std::uint32_t> widths;
            std::string item;
            std::istringstream list(value);
            while (std::getline(list, item, ',')) {
                item = trim(item);
                if (item.empty()) continue;
                widths.push_back(static_cast<std::uint32_t>(to_long(key, item)));
            }
            if (widths.size() != 3)
                throw ConfigError("block_widths wants three comma-separated values, got '" +
                                  value + "'");
            base.block_widths = {widths[0], widths[1], widths[2]};
        } else if (key == "hidden") {
            base.hidden = static_cast<std::uint32_t>(to_long(key, value));
        } else if (key == "num_classes") {
            base.num_classes = static_cast<std::uint32_t>(to_long(key, value));
        } else if (key == "dropout_layers") {
            base.dropout_layers = static_cast<int>(to_long(key, value));
        } else if (key == "dropout_rate") {
            base.dropout_rate = static_cast<float>(to_double(key, value));
        } else if (train_keys().count(key)) {
            // training key riding in the same block; handled elsewhere
        } else {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }
    return base;
}

GridSpec parse_grid(const std::string& text, const TrainConfig& defaults) {
    GridSpec grid;
    grid.stage1 = defaults;
    grid.stage1.stage = "cnn1";

    auto blocks = parse_kv_blocks(text);
    if (blocks.empty()) throw ConfigError("grid file has no config blocks");

    std::set<std::string> ids;
    int anon = 0;
    for (const auto& block : blocks) {
        TrainConfig base = defaults;
        base.stage = "cnn2";  // grid cells fine-tune unless the block says otherwise
        TrainConfig cfg = train_config_from(block, base);
        if (cfg.stage == "cnn1") {
            grid.stage1 = cfg;
            grid.has_stage1 = true;
            continue;
        }
        if (cfg.id.empty()) cfg.id = "cell" + std::to_string(++anon);
        if (!ids.insert(cfg.id).second)
            throw ConfigError("duplicate grid cell id '" + cfg.id + "'");
        grid.cells.push_back(std::move(cfg));
    }
    if (grid.cells.empty()) throw ConfigError("grid file has no fine-tuning cells");
    return grid;
}

}  // namespace cidis
