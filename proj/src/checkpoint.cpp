#include "refpaint/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json_codec.hpp"

namespace refpaint {

namespace {

using detail::json;

constexpr char kMagic[4] = {'R', 'F', 'P', 'T'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_tensor(std::string& out, const std::string& name, const Tensor& t) {
    put_u64(out, name.size());
    out += name;
    put_u64(out, static_cast<std::uint64_t>(t.rank()));
    for (auto d : t.shape()) put_u64(out, static_cast<std::uint64_t>(d));
    for (double v : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    std::string_view take(std::size_t n) {
        require(n <= bytes_.size() - pos_, ErrorKind::checkpoint, "truncated checkpoint");
        const std::string_view s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint32_t u32() {
        const auto s = take(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(i)]);
        return v;
    }
    std::uint64_t u64() {
        const auto s = take(8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(i)]);
        return v;
    }
    bool done() const { return pos_ == bytes_.size(); }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

Tensor vector_tensor(const std::vector<double>& v) {
    return Tensor({static_cast<std::int64_t>(v.size())}, v);
}

}  // namespace

ParamTable round_to_f32(const ParamTable& params) {
    ParamTable out = params;
    for (auto& [name, t] : out)
        for (auto& v : t.storage()) v = static_cast<double>(static_cast<float>(v));
    return out;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    json header{{"format", "refpaint-checkpoint"},
                {"model", detail::to_json(ckpt.model)},
                {"schedule", detail::to_json(ckpt.schedule)},
                {"step", ckpt.step}};
    std::map<std::string, Tensor> records(ckpt.params.begin(), ckpt.params.end());
    if (ckpt.pca) {
        const PcaBasis& b = *ckpt.pca;
        header["pca"] = json{{"k", b.k()}, {"dim", b.dim()}, {"eigenvalues", b.eigenvalues}};
        records.emplace("pca.mean", vector_tensor(b.mean));
        Tensor comps({b.k(), static_cast<std::int64_t>(b.dim())});
        for (std::size_t i = 0; i < b.components.size(); ++i)
            std::copy(b.components[i].begin(), b.components[i].end(), comps.ptr() + i * b.dim());
        records.emplace("pca.components", std::move(comps));
    } else {
        header["pca"] = nullptr;
    }
    const std::string h = header.dump();

    std::string out(kMagic, 4);
    put_u32(out, kCheckpointVersion);
    put_u64(out, h.size());
    out += h;
    put_u64(out, records.size());
    for (const auto& [name, t] : records) put_tensor(out, name, t);
    return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
    Reader r(bytes);
    require(r.take(4) == std::string_view(kMagic, 4), ErrorKind::checkpoint, "not a refpaint checkpoint (bad magic)");
    const std::uint32_t version = r.u32();
    require(version == kCheckpointVersion, ErrorKind::checkpoint,
            "unsupported checkpoint version " + std::to_string(version));
    const std::uint64_t hlen = r.u64();
    json header;
    try {
        header = json::parse(r.take(hlen));
    } catch (const json::exception& e) {
        raise(ErrorKind::checkpoint, std::string("bad checkpoint header: ") + e.what());
    }
    Checkpoint ckpt;
    try {
        ckpt.model = detail::model_from_json(header.at("model"), "model");
        ckpt.model.validate();
        ckpt.schedule = detail::schedule_from_json(header.at("schedule"), "schedule");
        ckpt.step = header.at("step").get<std::int64_t>();
    } catch (const json::exception& e) {
        raise(ErrorKind::checkpoint, std::string("bad checkpoint header: ") + e.what());
    } catch (const Error& e) {
        raise(ErrorKind::checkpoint, std::string("bad checkpoint header: ") + e.what());
    }

    std::map<std::string, Tensor> records;
    const std::uint64_t count = r.u64();
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string name(r.take(r.u64()));
        const std::uint64_t rank = r.u64();
        require(rank <= 8, ErrorKind::checkpoint, "implausible tensor rank for " + name);
        Shape shape;
        std::uint64_t n = 1;
        for (std::uint64_t k = 0; k < rank; ++k) {
            shape.push_back(static_cast<std::int64_t>(r.u64()));
            n *= static_cast<std::uint64_t>(shape.back());
        }
        require(n <= r.remaining() / 4, ErrorKind::checkpoint, "truncated tensor data for " + name);
        Tensor t(shape);
        for (std::uint64_t k = 0; k < n; ++k) t[k] = static_cast<double>(std::bit_cast<float>(r.u32()));
        require(records.emplace(std::move(name), std::move(t)).second, ErrorKind::checkpoint, "duplicate tensor record");
    }
    require(r.done(), ErrorKind::checkpoint, "trailing bytes after tensor table");

    const json& pca = header.contains("pca") ? header.at("pca") : json(nullptr);
    if (!pca.is_null()) {
        PcaBasis b;
        const auto mean = records.extract("pca.mean");
        const auto comps = records.extract("pca.components");
        require(!mean.empty() && !comps.empty(), ErrorKind::checkpoint, "PCA header without PCA tensors");
        b.mean = mean.mapped().storage();
        b.eigenvalues = pca.at("eigenvalues").get<std::vector<double>>();
        const Tensor& c = comps.mapped();
        require(c.rank() == 2 && c.dim(1) == static_cast<std::int64_t>(b.mean.size()) &&
                    c.dim(0) == pca.at("k").get<std::int64_t>(),
                ErrorKind::checkpoint, "PCA tensor shapes disagree with header");
        for (std::int64_t i = 0; i < c.dim(0); ++i)
            b.components.emplace_back(c.ptr() + i * c.dim(1), c.ptr() + (i + 1) * c.dim(1));
        ckpt.pca = std::move(b);
    }

    const ParamTable expected = init_params(ckpt.model, 0);
    require(records.size() == expected.size(), ErrorKind::checkpoint,
            "tensor table has " + std::to_string(records.size()) + " entries, model needs " +
                std::to_string(expected.size()));
    for (const auto& [name, t] : expected) {
        const auto it = records.find(name);
        require(it != records.end(), ErrorKind::checkpoint, "missing tensor " + name);
        require(it->second.shape() == t.shape(), ErrorKind::checkpoint,
                "tensor " + name + " has shape " + shape_str(it->second.shape()) + ", expected " + shape_str(t.shape()));
    }
    ckpt.params = ParamTable(records.begin(), records.end());
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const std::string bytes = serialize_checkpoint(ckpt);
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(static_cast<bool>(out), ErrorKind::checkpoint, "cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        require(static_cast<bool>(out), ErrorKind::checkpoint, "failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path, ec);
    require(!ec, ErrorKind::checkpoint, "cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::checkpoint, "cannot open checkpoint " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_checkpoint(ss.str());
}

}  // namespace refpaint
