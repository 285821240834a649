#include "cidis/model.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "cidis/error.hpp"

namespace cidis {

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

namespace {

const char* name_prefix(const char* kind) {
    if (std::strcmp(kind, "conv2d") == 0) return "conv";
    if (std::strcmp(kind, "maxpool2d") == 0) return "pool";
    if (std::strcmp(kind, "dense") == 0) return "fc";
    if (std::strcmp(kind, "dropout") == 0) return "drop";
    return kind;  // relu, flatten
}

}  // namespace

void Network::append(std::unique_ptr<Layer> layer) {
    // Names are positional per kind (conv1, conv2, ..., fc1, fc2) so that a
    // network rebuilt from its manifest gets identical parameter names.
    std::size_t count = 0;
    for (const auto& l : layers_)
        if (std::strcmp(l->kind(), layer->kind()) == 0) ++count;
    layer->set_name(std::string(name_prefix(layer->kind())) + std::to_string(count + 1));
    layers_.push_back(std::move(layer));
}

void Network::validate_composition() const {
    std::vector<std::uint32_t> shape = {input_shape_[0], input_shape_[1], input_shape_[2]};
    for (const auto& l : layers_) shape = l->out_shape(shape);
    if (shape.size() != 1 || shape[0] != opts_.num_classes) {
        throw ShapeError("network does not end in a dense layer of width " +
                         std::to_string(opts_.num_classes));
    }
}

Network Network::build(const BuildOptions& opts, Rng& rng) {
    if (opts.input_size < 8 || opts.input_size % 8 != 0) {
        throw ConfigError("input size must be a positive multiple of 8, got " +
                          std::to_string(opts.input_size));
    }
    for (auto w : opts.block_widths)
        if (w == 0) throw ConfigError("block widths must be positive");
    if (opts.hidden == 0 || opts.num_classes == 0) {
        throw ConfigError("hidden width and class count must be positive");
    }
    if (opts.dropout_layers != 1 && opts.dropout_layers != 2) {
        throw ConfigError("dropout_layers must be 1 or 2, got " +
                          std::to_string(opts.dropout_layers));
    }
    if (!(opts.dropout_rate >= 0.0f && opts.dropout_rate < 1.0f)) {
        throw ConfigError("dropout rate must lie in [0,1)");
    }

    Network net;
    net.opts_ = opts;
    net.input_shape_ = {3, opts.input_size, opts.input_size};

    std::uint32_t in_ch = 3;
    for (auto width : opts.block_widths) {
        net.append(std::make_unique<ConvLayer>(in_ch, width, 3, 3, 1, 1, rng));
        net.append(std::make_unique<ReluLayer>());
        net.append(std::make_unique<ConvLayer>(width, width, 3, 3, 1, 1, rng));
        net.append(std::make_unique<ReluLayer>());
        net.append(std::make_unique<MaxPoolLayer>(2, 2));
        in_ch = width;
    }
    net.append(std::make_unique<FlattenLayer>());
    if (opts.dropout_layers == 2) {
        net.append(std::make_unique<DropoutLayer>(opts.dropout_rate));
    }
    std::uint32_t side = opts.input_size / 8;
    std::uint32_t flat = side * side * opts.block_widths[2];
    net.append(std::make_unique<DenseLayer>(flat, opts.hidden, rng));
    net.append(std::make_unique<ReluLayer>());
    net.append(std::make_unique<DropoutLayer>(opts.dropout_rate));
    net.append(std::make_unique<DenseLayer>(opts.hidden, opts.num_classes, rng));

    net.validate_composition();
    return net;
}

Tensor Network::forward(const Tensor& batch, Mode mode, Rng* rng) {
    if (batch.rank() != 4 || batch.dim(0) == 0 || batch.dim(1) != input_shape_[0] ||
        batch.dim(2) != input_shape_[1] || batch.dim(3) != input_shape_[2]) {
        throw ShapeError("network input must be [b," + std::to_string(input_shape_[0]) + "," +
                         std::to_string(input_shape_[1]) + "," +
                         std::to_string(input_shape_[2]) + "]");
    }
    return forward_range(0, layers_.size(), batch, mode, rng);
}

Tensor Network::forward_range(std::size_t lo, std::size_t hi, const Tensor& x, Mode mode,
                              Rng* rng) {
    if (lo > hi || hi > layers_.size()) throw ContractError("bad layer range");
    Tensor cur = x;
    for (std::size_t i = lo; i < hi; ++i) cur = layers_[i]->forward(cur, mode, rng);
    return cur;
}

Tensor Network::backward(const Tensor& grad_logits, std::size_t down_to) {
    if (down_to > layers_.size()) throw ContractError("bad backward boundary");
    Tensor grad = grad_logits;
    for (std::size_t i = layers_.size(); i-- > down_to;) grad = layers_[i]->backward(grad);
    return grad;
}

std::vector<Layer::ParamRef> Network::params() {
    std::vector<Layer::ParamRef> out;
    for (auto& l : layers_)
        for (auto& p : l->params()) out.push_back(p);
    return out;
}

std::size_t Network::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_)
        for (const auto& p : l->params()) n += p.value->size();
    return n;
}

std::size_t Network::payload_bytes() const {
    std::size_t n = 0;
    for (const auto& l : layers_)
        for (const auto& p : l->params()) n += serialize(*p.value).size();
    return n;
}

std::size_t Network::frozen_prefix() const {
    std::size_t k = 0;
    for (const auto& l : layers_) {
        if (std::strcmp(l->kind(), "dropout") == 0) break;
        bool all_frozen = true;
        for (const auto& p : l->params())
            if (!frozen_.count(p.name)) all_frozen = false;
        if (!all_frozen) break;
        ++k;
    }
    return k;
}

void Network::prepare_transfer(Rng& rng, int dropout_layers, float dropout_rate) {
    if (dropout_layers != 1 && dropout_layers != 2) {
        throw ConfigError("dropout_layers must be 1 or 2, got " +
                          std::to_string(dropout_layers));
    }
    std::size_t cut = layers_.size();
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (std::strcmp(layers_[i]->kind(), "flatten") == 0) {
            cut = i;
            break;
        }
    }
    if (cut == layers_.size()) throw ContractError("network has no flatten layer to cut at");

    std::vector<std::uint32_t> shape = {input_shape_[0], input_shape_[1], input_shape_[2]};
    for (std::size_t i = 0; i < cut; ++i) shape = layers_[i]->out_shape(shape);
    std::uint32_t flat = 1;
    for (auto d : shape) flat *= d;

    layers_.erase(layers_.begin() + static_cast<std::ptrdiff_t>(cut), layers_.end());
    opts_.dropout_layers = dropout_layers;
    opts_.dropout_rate = dropout_rate;

    frozen_.clear();
    for (auto& l : layers_)
        for (auto& p : l->params()) frozen_.insert(p.name);

    append(std::make_unique<FlattenLayer>());
    if (dropout_layers == 2) append(std::make_unique<DropoutLayer>(dropout_rate));
    append(std::make_unique<DenseLayer>(flat, opts_.hidden, rng));
    append(std::make_unique<ReluLayer>());
    append(std::make_unique<DropoutLayer>(dropout_rate));
    append(std::make_unique<DenseLayer>(opts_.hidden, opts_.num_classes, rng));

    validate_composition();
}

std::string Network::manifest() const {
    std::string m = "input " + std::to_string(input_shape_[0]) + "x" +
                    std::to_string(input_shape_[1]) + "x" + std::to_string(input_shape_[2]) +
                    " classes " + std::to_string(opts_.num_classes) + "\n";
    for (const auto& l : layers_) m += l->manifest_line() + "\n";
    return m;
}

// ---------------------------------------------------------------------------
// Checkpoint encoding
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'C', 'I', 'D', 'I', 'S', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_str(std::vector<std::uint8_t>& out, std::string_view s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

struct Cursor {
    const std::uint8_t* p;
    std::size_t n;
    std::size_t off = 0;

    void need(std::size_t k) const {
        if (off + k > n) throw FormatError("truncated checkpoint");
    }
    std::uint8_t u8() {
        need(1);
        return p[off++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[off + i]) << (8 * i);
        off += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[off + i]) << (8 * i);
        off += 8;
        return v;
    }
    std::string str() {
        std::uint32_t len = u32();
        need(len);
        std::string s(reinterpret_cast<const char*>(p + off), len);
        off += len;
        return s;
    }
};

struct ParsedCheckpoint {
    std::uint64_t fingerprint = 0;
    TrainMeta meta;
    std::string manifest;
    struct Entry {
        std::string name;
        bool frozen;
        Tensor value;
    };
    std::vector<Entry> entries;
};

ParsedCheckpoint parse_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("cannot read checkpoint " + path.string());

    Cursor c{bytes.data(), bytes.size()};
    c.need(8);
    if (std::memcmp(c.p, kMagic, 8) != 0) throw FormatError("bad checkpoint magic");
    c.off = 8;
    std::uint32_t version = c.u32();
    if (version != kVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }

    ParsedCheckpoint out;
    out.fingerprint = c.u64();
    out.meta.epochs_seen = c.u32();
    out.meta.seed = c.u64();
    out.meta.optimizer = c.str();
    out.manifest = c.str();

    std::uint32_t count = c.u32();
    out.entries.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        ParsedCheckpoint::Entry e;
        e.name = c.str();
        e.frozen = c.u8() != 0;
        std::uint64_t blob_len = c.u64();
        c.need(blob_len);
        e.value = deserialize(std::span<const std::uint8_t>(c.p + c.off, blob_len));
        c.off += blob_len;
        out.entries.push_back(std::move(e));
    }
    if (c.off != c.n) throw FormatError("trailing bytes after checkpoint payload");

    if (fnv1a64(out.manifest) != out.fingerprint) {
        throw ArchMismatchError("checkpoint fingerprint does not match its manifest");
    }
    return out;
}

std::uint32_t parse_uint(const std::string& tok, const std::string& line) {
    try {
        std::size_t pos = 0;
        unsigned long v = std::stoul(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return static_cast<std::uint32_t>(v);
    } catch (const std::exception&) {
        throw FormatError("bad manifest line: " + line);
    }
}

std::map<std::string, std::string> parse_kv(const std::vector<std::string>& toks) {
    std::map<std::string, std::string> kv;
    for (std::size_t i = 1; i < toks.size(); ++i) {
        auto eq = toks[i].find('=');
        if (eq == std::string::npos) continue;
        kv[toks[i].substr(0, eq)] = toks[i].substr(eq + 1);
    }
    return kv;
}

}  // namespace

Network Network::from_manifest(const std::string& manifest) {
    std::istringstream lines(manifest);
    std::string line;
    if (!std::getline(lines, line)) throw FormatError("empty checkpoint manifest");

    Network net;
    {
        std::istringstream ls(line);
        std::string word, dims, classes_word, classes_val;
        ls >> word >> dims >> classes_word >> classes_val;
        auto x1 = dims.find('x');
        auto x2 = dims.rfind('x');
        if (word != "input" || classes_word != "classes" || x1 == std::string::npos ||
            x2 == x1) {
            throw FormatError("bad manifest header: " + line);
        }
        net.input_shape_ = {parse_uint(dims.substr(0, x1), line),
                            parse_uint(dims.substr(x1 + 1, x2 - x1 - 1), line),
                            parse_uint(dims.substr(x2 + 1), line)};
        net.opts_.num_classes = parse_uint(classes_val, line);
        net.opts_.input_size = net.input_shape_[1];
    }

    Rng dummy(0);  // weights are overwritten by the checkpoint payload
    std::vector<std::uint32_t> conv_widths;
    std::vector<std::uint32_t> dense_widths;
    int dropout_count = 0;
    float dropout_rate = 0.0f;

    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        std::vector<std::string> toks;
        std::istringstream ls(line);
        for (std::string t; ls >> t;) toks.push_back(t);
        const std::string& kind = toks[0];
        auto kv = parse_kv(toks);
        auto get = [&](const char* key) -> std::string {
            auto it = kv.find(key);
            if (it == kv.end()) throw FormatError("bad manifest line: " + line);
            return it->second;
        };
        if (kind == "conv2d") {
            std::uint32_t ci = parse_uint(get("in"), line);
            std::uint32_t co = parse_uint(get("out"), line);
            std::uint32_t kh = parse_uint(get("kh"), line);
            std::uint32_t kw = parse_uint(get("kw"), line);
            std::uint32_t stride = parse_uint(get("stride"), line);
            std::uint32_t pad = parse_uint(get("pad"), line);
            net.append(std::make_unique<ConvLayer>(ci, co, kh, kw, static_cast<int>(stride),
                                                   static_cast<int>(pad), dummy));
            conv_widths.push_back(co);
        } else if (kind == "relu") {
            net.append(std::make_unique<ReluLayer>());
        } else if (kind == "maxpool2d") {
            net.append(std::make_unique<MaxPoolLayer>(
                static_cast<int>(parse_uint(get("window"), line)),
                static_cast<int>(parse_uint(get("stride"), line))));
        } else if (kind == "flatten") {
            net.append(std::make_unique<FlattenLayer>());
        } else if (kind == "dense") {
            std::uint32_t in = parse_uint(get("in"), line);
            std::uint32_t out = parse_uint(get("out"), line);
            net.append(std::make_unique<DenseLayer>(in, out, dummy));
            dense_widths.push_back(out);
        } else if (kind == "dropout") {
            try {
                dropout_rate = std::stof(get("p"));
            } catch (const std::exception&) {
                throw FormatError("bad manifest line: " + line);
            }
            net.append(std::make_unique<DropoutLayer>(dropout_rate));
            ++dropout_count;
        } else {
            throw FormatError("unknown layer kind in manifest: " + kind);
        }
    }

    // Best-effort reconstruction of the build options for introspection.
    for (std::size_t b = 0; b < 3 && 2 * b < conv_widths.size(); ++b) {
        net.opts_.block_widths[b] = conv_widths[2 * b];
    }
    if (dense_widths.size() >= 2) net.opts_.hidden = dense_widths[0];
    if (dropout_count > 0) {
        net.opts_.dropout_layers = dropout_count;
        net.opts_.dropout_rate = dropout_rate;
    }

    try {
        net.validate_composition();
    } catch (const ShapeError& e) {
        throw FormatError(std::string("manifest layers do not compose: ") + e.what());
    }
    return net;
}

namespace {

void fill_weights(Network& net, ParsedCheckpoint& ckpt) {
    auto refs = net.params();
    std::map<std::string, Layer::ParamRef*> by_name;
    for (auto& r : refs) by_name[r.name] = &r;
    if (ckpt.entries.size() != refs.size()) {
        throw ArchMismatchError("checkpoint holds " + std::to_string(ckpt.entries.size()) +
                                " tensors, network has " + std::to_string(refs.size()));
    }
    std::set<std::string> frozen;
    for (auto& e : ckpt.entries) {
        auto it = by_name.find(e.name);
        if (it == by_name.end()) {
            throw ArchMismatchError("checkpoint tensor " + e.name + " not in network");
        }
        if (!it->second->value->same_shape(e.value)) {
            throw ArchMismatchError("checkpoint tensor " + e.name + " has mismatched shape");
        }
        *it->second->value = std::move(e.value);
        if (e.frozen) frozen.insert(e.name);
    }
    net.set_frozen(std::move(frozen));
    net.meta() = ckpt.meta;
}

}  // namespace

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 8);
    put_u32(out, kVersion);
    std::string manifest = net.manifest();
    put_u64(out, fnv1a64(manifest));
    put_u32(out, net.meta().epochs_seen);
    put_u64(out, net.meta().seed);
    put_str(out, net.meta().optimizer);
    put_str(out, manifest);

    auto refs = const_cast<Network&>(net).params();
    put_u32(out, static_cast<std::uint32_t>(refs.size()));
    for (const auto& r : refs) {
        put_str(out, r.name);
        out.push_back(net.frozen().count(r.name) ? 1 : 0);
        auto blob = serialize(*r.value);
        put_u64(out, blob.size());
        out.insert(out.end(), blob.begin(), blob.end());
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(out.data()),
            static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("cannot write checkpoint " + path.string());
}

Network load_checkpoint(const std::filesystem::path& path) {
    ParsedCheckpoint ckpt = parse_checkpoint(path);
    Network net = Network::from_manifest(ckpt.manifest);
    fill_weights(net, ckpt);
    return net;
}

void load_checkpoint_into(Network& net, const std::filesystem::path& path) {
    ParsedCheckpoint ckpt = parse_checkpoint(path);
    if (ckpt.fingerprint != net.fingerprint()) {
        throw ArchMismatchError("checkpoint architecture does not match network");
    }
    fill_weights(net, ckpt);
}

}  // namespace cidis
