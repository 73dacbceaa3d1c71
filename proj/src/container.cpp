#include "cbm/container.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace cbm {

namespace {

constexpr char kMagic[8] = {'C', 'B', 'M', 'C', 'K', 'P', 'T', '\0'};

template <class T>
void put_le(std::ostream& out, T value) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw std::runtime_error("container: truncated file");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

std::string get_bytes(std::istream& in, std::uint64_t len) {
    if (len > (1ull << 34)) throw std::runtime_error("container: implausible length");
    std::string s(len, '\0');
    if (len && !in.read(s.data(), static_cast<std::streamsize>(len))) throw std::runtime_error("container: truncated file");
    return s;
}

}  // namespace

void Container::insert(Entry entry) {
    auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == entry.name; });
    if (it != entries_.end())
        *it = std::move(entry);
    else
        entries_.push_back(std::move(entry));
}

void Container::put_array(const std::string& name, Array array) {
    std::uint64_t n = 1;
    for (auto d : array.shape) n *= d;
    if (n != array.data.size()) throw std::invalid_argument("container: shape does not match data for " + name);
    Entry e;
    e.name = name;
    e.array = std::move(array);
    insert(std::move(e));
}

void Container::put_matrix(const std::string& name, const Eigen::MatrixXd& m) {
    Array a;
    a.shape = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
    a.data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) a.data.push_back(m(i, j));
    put_array(name, std::move(a));
}

void Container::put_vector(const std::string& name, const Eigen::VectorXd& v) {
    Array a;
    a.shape = {static_cast<std::uint64_t>(v.size())};
    a.data.assign(v.data(), v.data() + v.size());
    put_array(name, std::move(a));
}

void Container::put_text(const std::string& name, std::string text) {
    Entry e;
    e.name = name;
    e.is_text = true;
    e.text = std::move(text);
    insert(std::move(e));
}

bool Container::has(const std::string& name) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
}

const Container::Entry& Container::find(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return e;
    throw std::out_of_range("container: no entry named '" + name + "'");
}

const Container::Array& Container::array(const std::string& name) const {
    const auto& e = find(name);
    if (e.is_text) throw std::invalid_argument("container: '" + name + "' is text");
    return e.array;
}

Eigen::MatrixXd Container::matrix(const std::string& name) const {
    const auto& a = array(name);
    if (a.shape.size() != 2) throw std::invalid_argument("container: '" + name + "' is not a matrix");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(a.shape[0]), static_cast<Eigen::Index>(a.shape[1]));
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = a.data[k++];
    return m;
}

Eigen::VectorXd Container::vector(const std::string& name) const {
    const auto& a = array(name);
    if (a.shape.size() != 1) throw std::invalid_argument("container: '" + name + "' is not a vector");
    return Eigen::Map<const Eigen::VectorXd>(a.data.data(), static_cast<Eigen::Index>(a.data.size()));
}

const std::string& Container::text(const std::string& name) const {
    const auto& e = find(name);
    if (!e.is_text) throw std::invalid_argument("container: '" + name + "' is not text");
    return e.text;
}

std::vector<std::string> Container::names() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) out.push_back(e.name);
    return out;
}

void Container::write(std::ostream& out) const {
    out.write(kMagic, sizeof(kMagic));
    put_le<std::uint32_t>(out, kVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries_.size()));
    for (const auto& e : entries_) {
        put_le<std::uint8_t>(out, e.is_text ? 1 : 0);
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
        out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        if (e.is_text) {
            put_le<std::uint64_t>(out, e.text.size());
            out.write(e.text.data(), static_cast<std::streamsize>(e.text.size()));
        } else {
            put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.array.shape.size()));
            for (auto d : e.array.shape) put_le<std::uint64_t>(out, d);
            for (double x : e.array.data) put_le<double>(out, x);
        }
    }
}

Container Container::read(std::istream& in) {
    char magic[8];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw std::runtime_error("container: bad magic");
    auto version = get_le<std::uint32_t>(in);
    if (version != kVersion) throw std::runtime_error("container: unsupported version " + std::to_string(version));
    auto count = get_le<std::uint32_t>(in);
    Container c;
    for (std::uint32_t i = 0; i < count; ++i) {
        Entry e;
        auto kind = get_le<std::uint8_t>(in);
        if (kind > 1) throw std::runtime_error("container: unknown entry kind");
        e.name = get_bytes(in, get_le<std::uint32_t>(in));
        if (kind == 1) {
            e.is_text = true;
            e.text = get_bytes(in, get_le<std::uint64_t>(in));
        } else {
            auto ndim = get_le<std::uint32_t>(in);
            if (ndim > 16) throw std::runtime_error("container: implausible rank");
            std::uint64_t n = 1;
            for (std::uint32_t d = 0; d < ndim; ++d) {
                e.array.shape.push_back(get_le<std::uint64_t>(in));
                n *= e.array.shape.back();
            }
            if (n > (1ull << 31)) throw std::runtime_error("container: implausible array size");
            e.array.data.resize(n);
            for (auto& x : e.array.data) x = get_le<double>(in);
        }
        if (c.has(e.name)) throw std::runtime_error("container: duplicate entry '" + e.name + "'");
        c.entries_.push_back(std::move(e));
    }
    return c;
}

void Container::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    write(out);
    if (!out) throw std::runtime_error("write failed: " + path);
}

Container Container::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return read(in);
}

}  // namespace cbm
