#include "romkit/archive.hpp"

#include "romkit/error.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace romkit {

namespace {

constexpr char kMagic[4] = {'R', 'O', 'M', 'A'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::ostream& os, T value) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& is, const std::filesystem::path& path) {
    unsigned char bytes[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T)))
        throw IoError("archive '" + path.string() + "' is truncated");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

std::string get_bytes(std::istream& is, std::uint64_t n, const std::filesystem::path& path) {
    std::string s(n, '\0');
    if (n > 0 && !is.read(s.data(), static_cast<std::streamsize>(n)))
        throw IoError("archive '" + path.string() + "' is truncated");
    return s;
}

}  // namespace

void Archive::put(const std::string& name, Matrix value) {
    texts_.erase(name);
    matrices_[name] = std::move(value);
}

void Archive::put_scalar(const std::string& name, double value) {
    put(name, Matrix::Constant(1, 1, value));
}

void Archive::put_text(const std::string& name, std::string value) {
    matrices_.erase(name);
    texts_[name] = std::move(value);
}

bool Archive::has(const std::string& name) const {
    return matrices_.count(name) > 0 || texts_.count(name) > 0;
}

const Matrix& Archive::matrix(const std::string& name) const {
    const auto it = matrices_.find(name);
    if (it == matrices_.end()) throw IoError("archive has no matrix entry '" + name + "'");
    return it->second;
}

Vector Archive::vector(const std::string& name) const {
    const Matrix& m = matrix(name);
    return Eigen::Map<const Vector>(m.data(), m.size());
}

double Archive::scalar(const std::string& name) const {
    const Matrix& m = matrix(name);
    if (m.size() != 1) throw IoError("archive entry '" + name + "' is not a scalar");
    return m(0, 0);
}

const std::string& Archive::text(const std::string& name) const {
    const auto it = texts_.find(name);
    if (it == texts_.end()) throw IoError("archive has no text entry '" + name + "'");
    return it->second;
}

void Archive::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os.write(kMagic, 4);
    put_le<std::uint32_t>(os, kVersion);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(matrices_.size() + texts_.size()));

    // Merge both maps in name order so the byte stream is canonical.
    auto mi = matrices_.begin();
    auto ti = texts_.begin();
    while (mi != matrices_.end() || ti != texts_.end()) {
        const bool take_matrix = ti == texts_.end() || (mi != matrices_.end() && mi->first < ti->first);
        const std::string& name = take_matrix ? mi->first : ti->first;
        put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        if (take_matrix) {
            const Matrix& m = mi->second;
            put_le<std::uint8_t>(os, 0);
            put_le<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
            put_le<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
            for (Index i = 0; i < m.size(); ++i) put_le<double>(os, m.data()[i]);
            ++mi;
        } else {
            put_le<std::uint8_t>(os, 1);
            put_le<std::uint64_t>(os, ti->second.size());
            os.write(ti->second.data(), static_cast<std::streamsize>(ti->second.size()));
            ++ti;
        }
    }
    if (!os) throw IoError("write failed for '" + path.string() + "'");
}

Archive Archive::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path.string() + "' for reading");
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("'" + path.string() + "' is not a model archive (bad magic)");
    const auto version = get_le<std::uint32_t>(is, path);
    if (version != kVersion) throw IoError("archive '" + path.string() + "' has unsupported version");
    const auto count = get_le<std::uint32_t>(is, path);
    Archive ar;
    for (std::uint32_t e = 0; e < count; ++e) {
        const auto nlen = get_le<std::uint32_t>(is, path);
        const std::string name = get_bytes(is, nlen, path);
        const auto kind = get_le<std::uint8_t>(is, path);
        if (kind == 0) {
            const auto rows = get_le<std::uint64_t>(is, path);
            const auto cols = get_le<std::uint64_t>(is, path);
            if (rows > (1ull << 32) || cols > (1ull << 32))
                throw IoError("archive '" + path.string() + "' has an implausible matrix shape");
            Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
            for (Index i = 0; i < m.size(); ++i) m.data()[i] = get_le<double>(is, path);
            ar.matrices_[name] = std::move(m);
        } else if (kind == 1) {
            const auto len = get_le<std::uint64_t>(is, path);
            ar.texts_[name] = get_bytes(is, len, path);
        } else {
            throw IoError("archive '" + path.string() + "' has unknown entry kind");
        }
    }
    return ar;
}

void put_complex(Archive& ar, const std::string& name, const ComplexMatrix& value) {
    ar.put(name + ".re", value.real());
    ar.put(name + ".im", value.imag());
}

ComplexMatrix get_complex(const Archive& ar, const std::string& name) {
    const Matrix& re = ar.matrix(name + ".re");
    const Matrix& im = ar.matrix(name + ".im");
    if (re.rows() != im.rows() || re.cols() != im.cols())
        throw IoError("archive complex entry '" + name + "' has mismatched parts");
    ComplexMatrix out(re.rows(), re.cols());
    out.real() = re;
    out.imag() = im;
    return out;
}

}  // namespace romkit
