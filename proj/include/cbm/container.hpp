#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace cbm {

/// Named float64 arrays and text blobs in one binary file.
///
/// Layout (all integers and floats little-endian):
///
///   magic    8 bytes  "CBMCKPT\0"
///   version  u32      = 1
///   count    u32      number of entries
///   entries:
///     kind     u8     0 = float64 array, 1 = text
///     name_len u32, name bytes (UTF-8)
///     kind 0:  ndim u32, dims u64[ndim], data f64[prod(dims)] in row-major order
///     kind 1:  len u64, bytes
///
/// Entry order is preserved; names are unique and putting an existing name
/// replaces that entry in place.
class Container {
public:
    struct Array {
        std::vector<std::uint64_t> shape;
        std::vector<double> data;
        bool operator==(const Array&) const = default;
    };

    static constexpr std::uint32_t kVersion = 1;

    void put_array(const std::string& name, Array array);
    void put_matrix(const std::string& name, const Eigen::MatrixXd& m);
    void put_vector(const std::string& name, const Eigen::VectorXd& v);
    void put_text(const std::string& name, std::string text);

    bool has(const std::string& name) const;
    const Array& array(const std::string& name) const;
    Eigen::MatrixXd matrix(const std::string& name) const;
    Eigen::VectorXd vector(const std::string& name) const;
    const std::string& text(const std::string& name) const;
    std::vector<std::string> names() const;

    void write(std::ostream& out) const;
    static Container read(std::istream& in);
    void save(const std::string& path) const;
    static Container load(const std::string& path);

    bool operator==(const Container&) const = default;

private:
    struct Entry {
        std::string name;
        bool is_text = false;
        Array array;
        std::string text;
        bool operator==(const Entry&) const = default;
    };
    const Entry& find(const std::string& name) const;
    void insert(Entry entry);

    std::vector<Entry> entries_;
};

}  // namespace cbm
