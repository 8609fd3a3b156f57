#include "blend/checkpoint.hpp"

#include "blend/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace blend {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'B', 'L', 'R', 'C', 'K', 'P', 'T', '\0'};

struct Writer {
    std::string out;

    template <class T>
    void pod(T v)
    {
        char buf[sizeof(T)];
        std::memcpy(buf, &v, sizeof(T));
        out.append(buf, sizeof(T));
    }
    void str(const std::string& s)
    {
        pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        out += s;
    }
};

struct Reader {
    const std::string& in;
    std::size_t pos = 0;

    void need(std::size_t n) const
    {
        require(pos + n <= in.size(), ErrorKind::invalid_checkpoint, "checkpoint truncated");
    }
    template <class T>
    T pod()
    {
        need(sizeof(T));
        T v;
        std::memcpy(&v, in.data() + pos, sizeof(T));
        pos += sizeof(T);
        return v;
    }
    std::string str()
    {
        const auto n = pod<std::uint32_t>();
        need(n);
        std::string s = in.substr(pos, n);
        pos += n;
        return s;
    }
};

} // namespace

std::string to_string(Role r)
{
    switch (r) {
    case Role::single_expert: return "single_expert";
    case Role::base_R: return "base_R";
    case Role::expanded_H: return "expanded_H";
    case Role::incremental: return "incremental";
    case Role::generator_G: return "generator_G";
    case Role::discriminator_D: return "discriminator_D";
    }
    return "?";
}

Role parse_role(const std::string& s)
{
    for (Role r : {Role::single_expert, Role::base_R, Role::expanded_H, Role::incremental, Role::generator_G,
                   Role::discriminator_D})
        if (to_string(r) == s)
            return r;
    fail(ErrorKind::invalid_checkpoint, "unknown checkpoint role '" + s + "'");
}

std::string serialize_checkpoint(const ModelCheckpoint& ckpt)
{
    Writer w;
    w.out.append(kMagic, sizeof(kMagic));
    w.pod<std::uint32_t>(kCheckpointVersion);
    w.str(to_string(ckpt.role));
    w.pod<std::int64_t>(ckpt.step);
    w.str(ckpt.config.dump());
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(ckpt.params.size()));
    for (const auto& [name, t] : ckpt.params) {
        w.str(name);
        w.pod<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
        for (int d : t.shape())
            w.pod<std::int32_t>(d);
        w.out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double));
    }
    return std::move(w.out);
}

ModelCheckpoint deserialize_checkpoint(const std::string& bytes)
{
    Reader r{bytes};
    r.need(sizeof(kMagic));
    require(std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) == 0, ErrorKind::invalid_checkpoint,
            "not a checkpoint file (bad magic)");
    r.pos = sizeof(kMagic);
    const auto version = r.pod<std::uint32_t>();
    require(version == kCheckpointVersion, ErrorKind::invalid_checkpoint,
            "unsupported checkpoint version " + std::to_string(version));
    ModelCheckpoint ckpt;
    ckpt.role = parse_role(r.str());
    ckpt.step = r.pod<std::int64_t>();
    try {
        ckpt.config = nlohmann::json::parse(r.str());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::invalid_checkpoint, std::string("checkpoint config: ") + e.what());
    }
    const auto count = r.pod<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.str();
        const auto rank = r.pod<std::uint32_t>();
        require(rank >= 1 && rank <= 4, ErrorKind::invalid_checkpoint, "bad rank for " + name);
        std::vector<int> shape(rank);
        for (auto& d : shape) {
            d = r.pod<std::int32_t>();
            require(d > 0, ErrorKind::invalid_checkpoint, "bad dimension for " + name);
        }
        Tensor t(shape);
        r.need(t.size() * sizeof(double));
        std::memcpy(t.data(), bytes.data() + r.pos, t.size() * sizeof(double));
        r.pos += t.size() * sizeof(double);
        require(all_finite(t), ErrorKind::invalid_checkpoint, "non-finite values in " + name);
        ckpt.params.add(name, std::move(t));
    }
    require(r.pos == bytes.size(), ErrorKind::invalid_checkpoint, "trailing bytes after checkpoint");
    return ckpt;
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& file)
{
    if (file.has_parent_path())
        std::filesystem::create_directories(file.parent_path());
    std::ofstream os(file, std::ios::binary);
    require(static_cast<bool>(os), ErrorKind::io, "cannot write " + file.string());
    const std::string bytes = serialize_checkpoint(ckpt);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(os), ErrorKind::io, "short write to " + file.string());
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& file)
{
    std::ifstream is(file, std::ios::binary);
    require(static_cast<bool>(is), ErrorKind::io, "cannot read " + file.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return deserialize_checkpoint(ss.str());
}

void require_role(const ModelCheckpoint& ckpt, std::initializer_list<Role> allowed, const std::string& what)
{
    for (Role r : allowed)
        if (ckpt.role == r)
            return;
    std::string msg = what + ": checkpoint role " + to_string(ckpt.role) + " not accepted (expected";
    for (Role r : allowed)
        msg += " " + to_string(r);
    fail(ErrorKind::invalid_checkpoint, msg + ")");
}

} // namespace blend
