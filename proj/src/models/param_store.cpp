#include "trackbench/models/param_store.hpp"

#include "trackbench/core/error.hpp"

#include <cstdint>
#include <fstream>

namespace trackbench::models {

Tensor & ParamStore::add(std::string const & name, std::vector<int> shape) {
    Entry e{Tensor(shape), Tensor(shape)};
    auto [it, inserted] = entries_.insert_or_assign(name, std::move(e));
    return it->second.value;
}

ParamStore::Entry & ParamStore::at(std::string const & name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw Error("unknown parameter '" + name + "'");
    return it->second;
}

ParamStore::Entry const & ParamStore::at(std::string const & name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw Error("unknown parameter '" + name + "'");
    return it->second;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    for (auto const & [name, _] : entries_) out.push_back(name);
    return out;
}

std::size_t ParamStore::parameter_count() const {
    std::size_t n = 0;
    for (auto const & [_, e] : entries_) n += e.value.size();
    return n;
}

void ParamStore::zero_grad() {
    for (auto & [_, e] : entries_) e.grad.fill(0.0);
}

bool operator==(ParamStore const & a, ParamStore const & b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    auto ib = b.entries_.begin();
    for (auto const & [name, e] : a.entries_) {
        if (name != ib->first || !(e.value == ib->second.value)) return false;
        ++ib;
    }
    return true;
}

namespace {

constexpr char const * kMagic = "trackbench-checkpoint v1";

void put_u32(std::ostream & out, std::uint32_t v) { out.write(reinterpret_cast<char const *>(&v), sizeof v); }

std::uint32_t get_u32(std::istream & in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char *>(&v), sizeof v);
    if (!in) throw FormatError("truncated checkpoint");
    return v;
}

} // namespace

void save_checkpoint(ParamStore const & params, std::string const & metadata, std::filesystem::path const & path) {
    if (metadata.find('\n') != std::string::npos) throw Error("checkpoint metadata must be a single line");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open checkpoint for writing: " + path.string());
    out << kMagic << '\n' << metadata << '\n';
    put_u32(out, static_cast<std::uint32_t>(std::distance(params.begin(), params.end())));
    for (auto const & [name, e] : params) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(out, static_cast<std::uint32_t>(e.value.rank()));
        for (int d : e.value.shape()) put_u32(out, static_cast<std::uint32_t>(d));
        out.write(reinterpret_cast<char const *>(e.value.data()),
                  static_cast<std::streamsize>(e.value.size() * sizeof(double)));
    }
    if (!out) throw Error("failed writing checkpoint: " + path.string());
}

ParamStore load_checkpoint(std::filesystem::path const & path, std::string * metadata) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint: " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != kMagic) throw FormatError("not a trackbench checkpoint: " + path.string());
    std::getline(in, line);
    if (metadata) *metadata = line;
    ParamStore store;
    std::uint32_t const count = get_u32(in);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name(get_u32(in), '\0');
        in.read(name.data(), static_cast<std::streamsize>(name.size()));
        std::vector<int> shape(get_u32(in));
        for (auto & d : shape) d = static_cast<int>(get_u32(in));
        Tensor & t = store.add(name, shape);
        in.read(reinterpret_cast<char *>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!in) throw FormatError("truncated checkpoint tensor '" + name + "'");
    }
    return store;
}

} // namespace trackbench::models
