#include "romkit/dataset.hpp"

#include "romkit/error.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace romkit {

ParameterSpace::ParameterSpace(Vector lower, Vector upper, std::vector<std::string> labels)
    : lower_(std::move(lower)), upper_(std::move(upper)), labels_(std::move(labels)) {
    if (lower_.size() < 1) throw ConfigError("parameter space: dimension must be >= 1");
    if (lower_.size() != upper_.size()) throw ConfigError("parameter space: bound sizes differ");
    for (Index d = 0; d < lower_.size(); ++d) {
        if (!(lower_(d) < upper_(d)))
            throw ConfigError("parameter space: lower bound must be below upper bound in dimension " +
                              std::to_string(d));
    }
    if (labels_.empty()) {
        for (Index d = 0; d < lower_.size(); ++d) labels_.push_back("mu_" + std::to_string(d + 1));
    }
    if (static_cast<Index>(labels_.size()) != lower_.size())
        throw ConfigError("parameter space: label count differs from dimension");
}

bool ParameterSpace::contains(const Eigen::Ref<const Vector>& mu) const {
    if (mu.size() != dim()) return false;
    return (mu.array() >= lower_.array()).all() && (mu.array() <= upper_.array()).all();
}

Vector ParameterSpace::to_unit(const Eigen::Ref<const Vector>& mu) const {
    return ((mu - lower_).array() / (upper_ - lower_).array()).matrix();
}

Matrix sample(const ParameterSpace& space, const SamplingPlan& plan) {
    if (plan.count < 1) throw ConfigError("sample: count must be >= 1");
    const Index dim = space.dim();
    Matrix out(dim, plan.count);
    std::mt19937_64 rng(plan.seed);

    switch (plan.kind) {
    case SamplingKind::uniform: {
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (Index k = 0; k < plan.count; ++k)
            for (Index d = 0; d < dim; ++d)
                out(d, k) = space.lower()(d) + unit(rng) * (space.upper()(d) - space.lower()(d));
        break;
    }
    case SamplingKind::grid: {
        const auto per_axis = static_cast<Index>(std::llround(std::pow(double(plan.count), 1.0 / double(dim))));
        Index total = 1;
        for (Index d = 0; d < dim; ++d) total *= per_axis;
        if (total != plan.count)
            throw ConfigError("sample: grid count must be a perfect power of the dimension");
        for (Index k = 0; k < plan.count; ++k) {
            Index rest = k;
            for (Index d = 0; d < dim; ++d) {
                const Index idx = rest % per_axis;
                rest /= per_axis;
                const double frac = per_axis == 1 ? 0.5 : double(idx) / double(per_axis - 1);
                out(d, k) = space.lower()(d) + frac * (space.upper()(d) - space.lower()(d));
            }
        }
        break;
    }
    case SamplingKind::normal: {
        Vector center = plan.normal_center.size() == 0 ? Vector(0.5 * (space.lower() + space.upper()))
                                                       : plan.normal_center;
        Vector spread = plan.normal_spread;
        if (spread.size() == 1) spread = Vector::Constant(dim, spread(0));
        if (spread.size() == 0) spread = 0.25 * (space.upper() - space.lower());
        if (center.size() != dim || spread.size() != dim)
            throw ConfigError("sample: normal center/spread dimension mismatch");
        if ((spread.array() <= 0.0).any()) throw ConfigError("sample: normal spread must be positive");
        std::normal_distribution<double> gauss(0.0, 1.0);
        constexpr long kMaxDraws = 1'000'000;
        Vector mu(dim);
        for (Index k = 0; k < plan.count; ++k) {
            long draws = 0;
            for (;;) {
                for (Index d = 0; d < dim; ++d) mu(d) = center(d) + spread(d) * gauss(rng);
                if (space.contains(mu)) break;
                if (++draws >= kMaxDraws)
                    throw NumericalError("sample: normal plan accepted no draw inside the bounds after 1e6 attempts");
            }
            out.col(k) = mu;
        }
        break;
    }
    }
    return out;
}

SnapshotSet::SnapshotSet(Matrix snapshots, Matrix params, Vector times, std::string metadata)
    : snapshots_(std::move(snapshots)), params_(std::move(params)), times_(std::move(times)),
      metadata_(std::move(metadata)) {
    if (params_.cols() != snapshots_.cols() || times_.size() != snapshots_.cols())
        throw ConfigError("snapshot set: column count, parameter count and time count differ");
    require_finite(snapshots_, "snapshot set");
    require_finite(params_, "snapshot parameters");
    require_finite(times_, "snapshot times");
}

Matrix SnapshotSet::distinct_params() const {
    std::vector<Index> firsts;
    for (Index k = 0; k < count(); ++k) {
        bool seen = false;
        for (Index f : firsts)
            if (params_.col(f) == params_.col(k)) { seen = true; break; }
        if (!seen) firsts.push_back(k);
    }
    Matrix out(param_dim(), static_cast<Index>(firsts.size()));
    for (std::size_t i = 0; i < firsts.size(); ++i) out.col(static_cast<Index>(i)) = params_.col(firsts[i]);
    return out;
}

std::vector<Index> SnapshotSet::columns_for(const Eigen::Ref<const Vector>& mu) const {
    std::vector<Index> cols;
    for (Index k = 0; k < count(); ++k)
        if (params_.col(k) == mu) cols.push_back(k);
    return cols;
}

SnapshotSet SnapshotSet::select(const std::vector<Index>& columns) const {
    const auto n = static_cast<Index>(columns.size());
    Matrix s(dof(), n), p(param_dim(), n);
    Vector t(n);
    for (Index i = 0; i < n; ++i) {
        const Index c = columns[static_cast<std::size_t>(i)];
        if (c < 0 || c >= count()) throw ConfigError("snapshot select: column out of range");
        s.col(i) = snapshots_.col(c);
        p.col(i) = params_.col(c);
        t(i) = times_(c);
    }
    return SnapshotSet(std::move(s), std::move(p), std::move(t), metadata_);
}

SnapshotSet SnapshotSet::append(const SnapshotSet& other) const {
    if (count() == 0) return other.with_metadata(metadata_.empty() ? other.metadata() : metadata_);
    if (other.count() == 0) return *this;
    if (other.dof() != dof() || other.param_dim() != param_dim())
        throw ConfigError("snapshot append: dof or parameter dimension mismatch");
    Matrix s(dof(), count() + other.count());
    s << snapshots_, other.snapshots_;
    Matrix p(param_dim(), count() + other.count());
    p << params_, other.params_;
    Vector t(count() + other.count());
    t << times_, other.times_;
    return SnapshotSet(std::move(s), std::move(p), std::move(t), metadata_);
}

SnapshotSet SnapshotSet::with_metadata(std::string metadata) const {
    SnapshotSet copy = *this;
    copy.metadata_ = std::move(metadata);
    return copy;
}

std::pair<SnapshotSet, SnapshotSet> split_train_test(const SnapshotSet& set, double fraction,
                                                     std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split: fraction must lie in (0, 1)");
    const Matrix distinct = set.distinct_params();
    const Index np = distinct.cols();
    if (np < 2) throw ConfigError("split: need at least 2 distinct parameters");

    std::vector<Index> order(static_cast<std::size_t>(np));
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    const Index n_train = std::clamp<Index>(static_cast<Index>(std::llround(fraction * double(np))), 1, np - 1);
    std::vector<bool> is_train(static_cast<std::size_t>(np), false);
    for (Index i = 0; i < n_train; ++i) is_train[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;

    std::vector<Index> train_cols, test_cols;
    for (Index k = 0; k < set.count(); ++k) {
        Index which = 0;
        for (; which < np; ++which)
            if (distinct.col(which) == set.params().col(k)) break;
        (is_train[static_cast<std::size_t>(which)] ? train_cols : test_cols).push_back(k);
    }
    return {set.select(train_cols), set.select(test_cols)};
}

Matrix Normalizer::apply(const Matrix& states) const {
    if (mode == NormalizeMode::none) return states;
    if (states.rows() != shift.size()) throw ConfigError("normalizer: dimension mismatch");
    return ((states.colwise() - shift).array().colwise() / scale.array()).matrix();
}

Matrix Normalizer::invert(const Matrix& normalized) const {
    if (mode == NormalizeMode::none) return normalized;
    if (normalized.rows() != shift.size()) throw ConfigError("normalizer: dimension mismatch");
    return ((normalized.array().colwise() * scale.array()).matrix().colwise() + shift);
}

Normalizer normalize_fit(const Matrix& states, NormalizeMode mode) {
    Normalizer n;
    n.mode = mode;
    const Index d = states.rows();
    n.shift = Vector::Zero(d);
    n.scale = Vector::Ones(d);
    if (mode == NormalizeMode::none || states.cols() == 0) return n;
    n.shift = states.rowwise().mean();
    if (mode == NormalizeMode::center_and_scale) {
        for (Index i = 0; i < d; ++i) {
            const double var = (states.row(i).array() - n.shift(i)).square().mean();
            const double sd = std::sqrt(var);
            n.scale(i) = sd > 1e-300 && sd > 1e-14 * std::abs(n.shift(i)) ? sd : 1.0;
        }
    }
    return n;
}

// --- binary / csv I/O ---------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'R', 'O', 'M', 'S'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_le(std::ostream& os, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const char* what) {
    unsigned char bytes[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T)))
        throw IoError(std::string("snapshot file truncated while reading ") + what);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

void save_binary(const SnapshotSet& set, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os.write(kMagic, 4);
    write_le<std::uint32_t>(os, kVersion);
    write_le<std::uint64_t>(os, static_cast<std::uint64_t>(set.dof()));
    write_le<std::uint64_t>(os, static_cast<std::uint64_t>(set.count()));
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(set.param_dim()));
    for (Index k = 0; k < set.count(); ++k)
        for (Index d = 0; d < set.param_dim(); ++d) write_le<double>(os, set.params()(d, k));
    for (Index k = 0; k < set.count(); ++k) write_le<double>(os, set.times()(k));
    const double* data = set.snapshots().data();
    for (Index i = 0; i < set.snapshots().size(); ++i) write_le<double>(os, data[i]);
    write_le<std::uint64_t>(os, set.metadata().size());
    os.write(set.metadata().data(), static_cast<std::streamsize>(set.metadata().size()));
    if (!os) throw IoError("write failed for '" + path.string() + "'");
}

SnapshotSet load_binary(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path.string() + "' for reading");
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("'" + path.string() + "' is not a snapshot file (bad magic)");
    const auto version = read_le<std::uint32_t>(is, "version");
    if (version != kVersion)
        throw IoError("'" + path.string() + "' has unsupported version " + std::to_string(version));
    const auto dof = read_le<std::uint64_t>(is, "dof");
    const auto k = read_le<std::uint64_t>(is, "snapshot count");
    const auto pdim = read_le<std::uint32_t>(is, "parameter dimension");

    // Guard against absurd headers before allocating.
    const auto here = is.tellg();
    is.seekg(0, std::ios::end);
    const auto remaining = static_cast<std::uint64_t>(is.tellg() - here);
    is.seekg(here);
    const long double need = 8.0L * ((long double)k * pdim + k + (long double)dof * k) + 8.0L;
    if (need > (long double)remaining) throw IoError("'" + path.string() + "' truncated payload");

    Matrix params(static_cast<Index>(pdim), static_cast<Index>(k));
    for (Index c = 0; c < params.cols(); ++c)
        for (Index d = 0; d < params.rows(); ++d) params(d, c) = read_le<double>(is, "parameters");
    Vector times(static_cast<Index>(k));
    for (Index c = 0; c < times.size(); ++c) times(c) = read_le<double>(is, "times");
    Matrix snaps(static_cast<Index>(dof), static_cast<Index>(k));
    double* data = snaps.data();
    for (Index i = 0; i < snaps.size(); ++i) data[i] = read_le<double>(is, "snapshot matrix");
    const auto mlen = read_le<std::uint64_t>(is, "metadata length");
    std::string meta(mlen, '\0');
    if (mlen > 0 && !is.read(meta.data(), static_cast<std::streamsize>(mlen)))
        throw IoError("'" + path.string() + "' truncated metadata");
    return SnapshotSet(std::move(snaps), std::move(params), std::move(times), std::move(meta));
}

void put_double(std::string& out, double v) {
    char buf[40];
    const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
    out.append(buf, static_cast<std::size_t>(n));
}

void save_csv(const SnapshotSet& set, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    std::string line = "t";
    for (Index d = 0; d < set.param_dim(); ++d) line += ",mu_" + std::to_string(d + 1);
    for (Index i = 0; i < set.dof(); ++i) line += ",dof_" + std::to_string(i + 1);
    os << line << '\n';
    for (Index k = 0; k < set.count(); ++k) {
        line.clear();
        put_double(line, set.times()(k));
        for (Index d = 0; d < set.param_dim(); ++d) {
            line += ',';
            put_double(line, set.params()(d, k));
        }
        for (Index i = 0; i < set.dof(); ++i) {
            line += ',';
            put_double(line, set.snapshots()(i, k));
        }
        os << line << '\n';
    }
    if (!os) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<std::string_view> split_commas(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(',', start);
        out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

double parse_field(std::string_view f, std::size_t line_no, const std::filesystem::path& path) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
    double v = 0.0;
    const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
    if (res.ec != std::errc() || res.ptr != f.data() + f.size())
        throw IoError("'" + path.string() + "' line " + std::to_string(line_no) + ": malformed number '" +
                      std::string(f) + "'");
    return v;
}

SnapshotSet load_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path.string() + "' for reading");
    std::string header;
    if (!std::getline(is, header)) throw IoError("'" + path.string() + "' is empty");
    if (!header.empty() && header.back() == '\r') header.pop_back();
    const auto cols = split_commas(header);
    if (cols.empty() || cols[0] != "t") throw IoError("'" + path.string() + "': header must start with 't'");
    Index pdim = 0, dof = 0;
    for (std::size_t c = 1; c < cols.size(); ++c) {
        if (cols[c].starts_with("mu_")) {
            if (dof > 0) throw IoError("'" + path.string() + "': mu columns must precede dof columns");
            ++pdim;
        } else if (cols[c].starts_with("dof_")) {
            ++dof;
        } else {
            throw IoError("'" + path.string() + "': unexpected header column '" + std::string(cols[c]) + "'");
        }
    }
    if (dof == 0) throw IoError("'" + path.string() + "': no dof columns");

    std::vector<double> buffer;
    std::string line;
    std::size_t line_no = 1;
    Index k = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_commas(line);
        if (static_cast<Index>(fields.size()) != 1 + pdim + dof)
            throw IoError("'" + path.string() + "' line " + std::to_string(line_no) + ": expected " +
                          std::to_string(1 + pdim + dof) + " fields, found " + std::to_string(fields.size()));
        for (const auto f : fields) buffer.push_back(parse_field(f, line_no, path));
        ++k;
    }
    const Index width = 1 + pdim + dof;
    Matrix snaps(dof, k), params(pdim, k);
    Vector times(k);
    for (Index c = 0; c < k; ++c) {
        const double* row = buffer.data() + c * width;
        times(c) = row[0];
        for (Index d = 0; d < pdim; ++d) params(d, c) = row[1 + d];
        for (Index i = 0; i < dof; ++i) snaps(i, c) = row[1 + pdim + i];
    }
    return SnapshotSet(std::move(snaps), std::move(params), std::move(times));
}

}  // namespace

SnapshotFormat format_for(const std::filesystem::path& path) {
    return path.extension() == ".csv" ? SnapshotFormat::csv : SnapshotFormat::binary;
}

void save_snapshots(const SnapshotSet& set, const std::filesystem::path& path, SnapshotFormat format) {
    if (set.count() == 0) throw ConfigError("save_snapshots: refusing to write a set with no snapshots");
    if (set.dof() == 0) throw ConfigError("save_snapshots: refusing to write zero-dof snapshots");
    if (format == SnapshotFormat::binary)
        save_binary(set, path);
    else
        save_csv(set, path);
}

SnapshotSet load_snapshots(const std::filesystem::path& path, SnapshotFormat format) {
    return format == SnapshotFormat::binary ? load_binary(path) : load_csv(path);
}

}  // namespace romkit
