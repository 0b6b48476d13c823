#include "kpmask/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "kpmask/error.hpp"

namespace kpmask {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'K', 'P', 'M', 'K'};
constexpr char kEndMagic[4] = {'K', 'E', 'N', 'D'};

std::uint64_t fnv1a(const unsigned char* data, std::size_t size) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Writer {
public:
    template <typename T>
    void put(const T& v) {
        const auto* p = reinterpret_cast<const unsigned char*>(&v);
        bytes.insert(bytes.end(), p, p + sizeof(T));
    }
    void put_bytes(const void* data, std::size_t size) {
        const auto* p = static_cast<const unsigned char*>(data);
        bytes.insert(bytes.end(), p, p + size);
    }
    void put_string(const std::string& s) {
        put(static_cast<std::uint32_t>(s.size()));
        put_bytes(s.data(), s.size());
    }
    std::vector<unsigned char> bytes;
};

class Reader {
public:
    Reader(const std::vector<unsigned char>& bytes, std::size_t end, std::string path)
        : bytes_(bytes), end_(end), path_(std::move(path)) {}

    template <typename T>
    T get() {
        T v;
        get_bytes(&v, sizeof(T));
        return v;
    }
    void get_bytes(void* out, std::size_t size) {
        if (size > end_ - pos_) {
            fail(ErrorCategory::UnsupportedCheckpoint, fmt::format("checkpoint '{}' is truncated", path_));
        }
        std::memcpy(out, bytes_.data() + pos_, size);
        pos_ += size;
    }
    std::string get_string() {
        const auto len = get<std::uint32_t>();
        std::string s(len, '\0');
        get_bytes(s.data(), len);
        return s;
    }
    std::size_t pos() const { return pos_; }

private:
    const std::vector<unsigned char>& bytes_;
    std::size_t end_;
    std::size_t pos_ = 0;
    std::string path_;
};

}  // namespace

const Tensor* CheckpointFile::find(const std::string& name) const {
    for (const auto& [n, t] : blobs)
        if (n == name) return &t;
    return nullptr;
}

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointFile& file) {
    Writer w;
    w.put_bytes(kMagic, 4);
    w.put(file.header.format_version);
    w.put(file.header.num_keypoints);
    w.put(file.header.grid);
    w.put(file.header.temperature);
    w.put(file.header.variance);
    w.put(file.header.step);
    w.put_string(file.config_text);
    w.put(static_cast<std::uint32_t>(file.blobs.size()));
    for (const auto& [name, t] : file.blobs) {
        w.put_string(name);
        const Shape& s = t.shape();
        for (int d : {s.n, s.c, s.h, s.w}) w.put(static_cast<std::uint32_t>(d));
        w.put_bytes(t.data(), t.size() * sizeof(double));
    }
    w.put(fnv1a(w.bytes.data(), w.bytes.size()));
    w.put_bytes(kEndMagic, 4);

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    // Write-then-rename so a crash never leaves a half-written checkpoint behind.
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorCategory::IoError, fmt::format("cannot write checkpoint '{}'", tmp.string()));
        out.write(reinterpret_cast<const char*>(w.bytes.data()), static_cast<std::streamsize>(w.bytes.size()));
        if (!out) fail(ErrorCategory::IoError, fmt::format("short write to '{}'", tmp.string()));
    }
    std::filesystem::rename(tmp, path);
}

CheckpointFile read_checkpoint_file(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        fail(ErrorCategory::NotFound, fmt::format("checkpoint '{}' not found", path.string()));
    }
    std::ifstream in(path, std::ios::binary);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string name = path.string();
    constexpr std::size_t kTrailer = sizeof(std::uint64_t) + 4;
    if (bytes.size() < 8 + kTrailer || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        fail(ErrorCategory::UnsupportedCheckpoint, fmt::format("'{}' is not a kpmask checkpoint", name));
    }
    const std::size_t body = bytes.size() - kTrailer;
    if (std::memcmp(bytes.data() + body + sizeof(std::uint64_t), kEndMagic, 4) != 0) {
        fail(ErrorCategory::UnsupportedCheckpoint, fmt::format("checkpoint '{}' is truncated", name));
    }
    std::uint64_t stored = 0;
    std::memcpy(&stored, bytes.data() + body, sizeof(stored));
    if (stored != fnv1a(bytes.data(), body)) {
        fail(ErrorCategory::UnsupportedCheckpoint, fmt::format("checkpoint '{}' failed its checksum", name));
    }

    Reader r(bytes, body, name);
    char magic[4];
    r.get_bytes(magic, 4);
    CheckpointFile file;
    file.header.format_version = r.get<std::uint32_t>();
    if (file.header.format_version != kCheckpointFormatVersion) {
        fail(ErrorCategory::UnsupportedCheckpoint,
             fmt::format("checkpoint '{}' has format version {}, expected {}", name, file.header.format_version,
                         kCheckpointFormatVersion));
    }
    file.header.num_keypoints = r.get<std::uint32_t>();
    file.header.grid = r.get<std::uint32_t>();
    file.header.temperature = r.get<double>();
    file.header.variance = r.get<double>();
    file.header.step = r.get<std::uint64_t>();
    file.config_text = r.get_string();
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string blob_name = r.get_string();
        Shape s;
        s.n = static_cast<int>(r.get<std::uint32_t>());
        s.c = static_cast<int>(r.get<std::uint32_t>());
        s.h = static_cast<int>(r.get<std::uint32_t>());
        s.w = static_cast<int>(r.get<std::uint32_t>());
        std::vector<double> values(s.numel());
        r.get_bytes(values.data(), values.size() * sizeof(double));
        file.blobs.emplace_back(std::move(blob_name), Tensor(s, std::move(values)));
    }
    if (r.pos() != body) {
        fail(ErrorCategory::UnsupportedCheckpoint, fmt::format("checkpoint '{}' has trailing bytes", name));
    }
    return file;
}

void export_parameters(const ParameterSet& params, const std::string& prefix, CheckpointFile& file) {
    for (const NamedParameter& p : params.parameters()) file.add(prefix + p.name, p.var.value());
    for (const NamedBuffer& b : params.buffers()) file.add(prefix + b.name, *b.tensor);
}

void import_parameters(ParameterSet& params, const std::string& prefix, const CheckpointFile& file) {
    auto fetch = [&](const std::string& name, const Shape& shape) -> const Tensor& {
        const Tensor* t = file.find(prefix + name);
        if (t == nullptr) fail(ErrorCategory::ConfigMismatch, fmt::format("checkpoint lacks '{}{}'", prefix, name));
        if (t->shape() != shape) {
            fail(ErrorCategory::ConfigMismatch, fmt::format("'{}{}' has shape {}, model expects {}", prefix, name,
                                                            t->shape().str(), shape.str()));
        }
        return *t;
    };
    for (NamedParameter& p : params.parameters()) p.var.mutable_value() = fetch(p.name, p.var.shape());
    for (const NamedBuffer& b : params.buffers()) *b.tensor = fetch(b.name, b.tensor->shape());
}

}  // namespace kpmask
