#pragma once

#include "romkit/numerics.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace romkit {

/// Named collection of f64 matrices and text blobs persisted as one binary file.
///
/// Layout: "ROMA", u32 version=1, u32 entry count, then per entry (sorted by
/// name): u32 name length, name bytes, u8 kind (0 matrix, 1 text); a matrix
/// is u64 rows, u64 cols, little-endian f64 column-major; text is u64 length
/// plus UTF-8 bytes.
class Archive {
public:
    void put(const std::string& name, Matrix value);
    void put_scalar(const std::string& name, double value);
    void put_text(const std::string& name, std::string value);

    bool has(const std::string& name) const;
    const Matrix& matrix(const std::string& name) const;
    Vector vector(const std::string& name) const;
    double scalar(const std::string& name) const;
    const std::string& text(const std::string& name) const;

    void save(const std::filesystem::path& path) const;
    static Archive load(const std::filesystem::path& path);

private:
    std::map<std::string, Matrix> matrices_;
    std::map<std::string, std::string> texts_;
};

/// Stores a complex matrix as two real entries `<name>.re` and `<name>.im`.
void put_complex(Archive& ar, const std::string& name, const ComplexMatrix& value);
ComplexMatrix get_complex(const Archive& ar, const std::string& name);

}  // namespace romkit
