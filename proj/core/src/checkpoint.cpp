#include "drum/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace drum::model {

namespace {

constexpr char kMagic[8] = {'D', 'R', 'U', 'M', 'C', 'K', 'P', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("checkpoint truncated: " + path);
    return v;
}

void write_string(std::ostream& out, const std::string& s) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const std::string& path) {
    auto len = read_pod<std::uint32_t>(in, path);
    std::string s(len, '\0');
    in.read(s.data(), static_cast<std::streamsize>(len));
    if (!in) throw IoError("checkpoint truncated: " + path);
    return s;
}

} // namespace

void save_checkpoint(const std::string& path, const DrumModel& model, std::uint64_t vocab_hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(kMagic, sizeof(kMagic));
    const ModelConfig& c = model.config();
    write_pod<std::int32_t>(out, c.max_rule_length);
    write_pod<std::int32_t>(out, c.rank);
    write_pod<std::int32_t>(out, c.hidden_dim);
    write_pod<std::int32_t>(out, c.embed_dim);
    write_pod<std::int32_t>(out, c.operator_count);
    write_pod<double>(out, c.epsilon_log);
    write_pod<std::uint64_t>(out, c.seed);
    write_pod<std::int32_t>(out, model.head_count());
    write_pod<std::uint64_t>(out, vocab_hash);
    const auto& params = model.params();
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const diff::Parameter& p = params[i];
        write_string(out, p.name);
        write_pod<std::int32_t>(out, p.value.rows);
        write_pod<std::int32_t>(out, p.value.cols);
        out.write(reinterpret_cast<const char*>(p.value.data.data()),
                  static_cast<std::streamsize>(p.value.size() * sizeof(double)));
    }
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

namespace {

CheckpointHeader read_header_stream(std::ifstream& in, const std::string& path) {
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw ParseError("not a drum checkpoint (bad magic): " + path);
    CheckpointHeader h;
    h.config.max_rule_length = read_pod<std::int32_t>(in, path);
    h.config.rank = read_pod<std::int32_t>(in, path);
    h.config.hidden_dim = read_pod<std::int32_t>(in, path);
    h.config.embed_dim = read_pod<std::int32_t>(in, path);
    h.config.operator_count = read_pod<std::int32_t>(in, path);
    h.config.epsilon_log = read_pod<double>(in, path);
    h.config.seed = read_pod<std::uint64_t>(in, path);
    h.head_count = read_pod<std::int32_t>(in, path);
    h.vocab_hash = read_pod<std::uint64_t>(in, path);
    return h;
}

} // namespace

CheckpointHeader read_checkpoint_header(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint: " + path);
    return read_header_stream(in, path);
}

DrumModel load_checkpoint(const std::string& path, std::uint64_t expect_vocab_hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint: " + path);
    CheckpointHeader h = read_header_stream(in, path);
    if (expect_vocab_hash != 0 && h.vocab_hash != expect_vocab_hash)
        throw ParseError("checkpoint vocabulary hash mismatch: " + path);
    DrumModel model(h.config, h.head_count);
    auto count = read_pod<std::uint32_t>(in, path);
    if (count != model.params().size())
        throw ParseError("checkpoint parameter count mismatch: " + path);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = read_string(in, path);
        auto rows = read_pod<std::int32_t>(in, path);
        auto cols = read_pod<std::int32_t>(in, path);
        if (!model.params().contains(name))
            throw ParseError("checkpoint names unknown parameter '" + name + "': " + path);
        diff::Parameter& p = model.params().at(name);
        if (p.value.rows != rows || p.value.cols != cols)
            throw ParseError("checkpoint shape mismatch for '" + name + "': " + path);
        in.read(reinterpret_cast<char*>(p.value.data.data()),
                static_cast<std::streamsize>(p.value.size() * sizeof(double)));
        if (!in) throw IoError("checkpoint truncated: " + path);
    }
    return model;
}

} // namespace drum::model
