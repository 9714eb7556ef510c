#include "pelfa/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "pelfa/errors.hpp"

namespace pelfa {

namespace {

constexpr char kMagic[8] = {'P', 'E', 'L', 'F', 'A', 'C', 'K', '1'};

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_i64(std::ostream& os, std::int64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_str(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
std::int64_t read_i64(std::istream& is) {
    std::int64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
std::string read_str(std::istream& is) {
    const std::uint32_t n = read_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    return s;
}

void write_tensor(std::ostream& os, const Tensor& t) {
    write_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) write_u32(os, static_cast<std::uint32_t>(t.dim(i)));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
}

Tensor read_tensor(std::istream& is) {
    const std::uint32_t rank = read_u32(is);
    if (rank < 1 || rank > 4) throw IoError("checkpoint: corrupt tensor rank");
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(read_u32(is));
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    return t;
}

void write_section(std::ostream& os, const std::vector<std::pair<std::string, Tensor>>& sec) {
    write_u32(os, static_cast<std::uint32_t>(sec.size()));
    for (const auto& [name, t] : sec) {
        write_str(os, name);
        write_tensor(os, t);
    }
}

std::vector<std::pair<std::string, Tensor>> read_section(std::istream& is) {
    const std::uint32_t n = read_u32(is);
    std::vector<std::pair<std::string, Tensor>> sec;
    sec.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string name = read_str(is);
        sec.emplace_back(std::move(name), read_tensor(is));
    }
    return sec;
}

}  // namespace

const Tensor* CheckpointData::find_param(const std::string& name) const {
    for (const auto& [n, t] : params)
        if (n == name) return &t;
    return nullptr;
}

void save_checkpoint(const std::string& path, const CheckpointData& ck) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path);
    os.write(kMagic, sizeof(kMagic));
    write_u32(os, ck.format_version);
    write_i64(os, ck.epoch);
    write_str(os, ck.config_json);
    write_str(os, ck.rng_state);
    write_section(os, ck.params);
    write_section(os, ck.opt_state);
    if (!os) throw IoError("checkpoint write failed: " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw IoError("not a checkpoint file: " + path);
    CheckpointData ck;
    ck.format_version = read_u32(is);
    if (ck.format_version != CheckpointData::kFormatVersion)
        throw IoError("unsupported checkpoint format version " +
                      std::to_string(ck.format_version));
    ck.epoch = read_i64(is);
    ck.config_json = read_str(is);
    ck.rng_state = read_str(is);
    ck.params = read_section(is);
    ck.opt_state = read_section(is);
    if (!is) throw IoError("truncated checkpoint: " + path);
    return ck;
}

CheckpointData snapshot_params(const std::function<void(const nn::ParamVisitor&)>& visit) {
    CheckpointData ck;
    visit([&](const nn::ParamRef& p) { ck.params.emplace_back(p.name, *p.value); });
    return ck;
}

void restore_params(const std::function<void(const nn::ParamVisitor&)>& visit,
                    const CheckpointData& ck) {
    visit([&](const nn::ParamRef& p) {
        const Tensor* src = ck.find_param(p.name);
        if (!src) throw ConfigError("checkpoint is missing parameter '" + p.name + "'");
        if (src->shape() != p.value->shape())
            throw ConfigError("checkpoint shape mismatch for '" + p.name + "': file has " +
                              src->shape_str() + ", model expects " + p.value->shape_str());
        *p.value = *src;
    });
}

int restore_params_loose(const std::function<void(const nn::ParamVisitor&)>& visit,
                         const CheckpointData& ck) {
    int loaded = 0;
    visit([&](const nn::ParamRef& p) {
        const Tensor* src = ck.find_param(p.name);
        if (src && src->shape() == p.value->shape()) {
            *p.value = *src;
            ++loaded;
        }
    });
    return loaded;
}

}  // namespace pelfa
