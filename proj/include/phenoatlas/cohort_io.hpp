// cohort_io.hpp
//
// Tile embeddings and patient metadata: in-memory types plus the CSV and
// binary (PHA1) file formats.
#pragma once

#include <phenoatlas/common.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace phenoatlas {

/// Tile-level embedding vectors with tile/slide/patient identity.
/// Values are kept as 32-bit floats; consumers widen to double.
struct EmbeddingSet {
    std::size_t dim = 0;
    std::vector<std::string> tile_ids;
    std::vector<std::string> slide_ids;
    std::vector<std::string> patient_ids;
    std::vector<float> values;  // row-major, size() * dim

    std::size_t size() const { return tile_ids.size(); }
    bool empty() const { return tile_ids.empty(); }

    std::span<const float> vector(std::size_t i) const { return {values.data() + i * dim, dim}; }

    void push_back(std::string tile, std::string slide, std::string patient, std::span<const float> v) {
        if (empty() && dim == 0) dim = v.size();
        if (v.size() != dim) throw ValidationError("embedding dimension mismatch");
        tile_ids.push_back(std::move(tile));
        slide_ids.push_back(std::move(slide));
        patient_ids.push_back(std::move(patient));
        values.insert(values.end(), v.begin(), v.end());
    }

    /// Tiles at `idx`, in that order.
    EmbeddingSet select(std::span<const std::size_t> idx) const {
        EmbeddingSet out;
        out.dim = dim;
        out.tile_ids.reserve(idx.size());
        out.values.reserve(idx.size() * dim);
        for (std::size_t i : idx) out.push_back(tile_ids[i], slide_ids[i], patient_ids[i], vector(i));
        return out;
    }

    /// Rows as doubles (n x dim).
    Matrix to_matrix() const {
        Matrix m(size(), dim);
        for (std::size_t i = 0; i < values.size(); ++i) m.data[i] = values[i];
        return m;
    }

    friend bool operator==(const EmbeddingSet&, const EmbeddingSet&) = default;
};

/// Checks every EmbeddingSet invariant; throws ValidationError naming the first offending row.
inline void validate(const EmbeddingSet& e) {
    if (e.dim == 0) throw ValidationError("embedding dimension must be positive");
    if (e.slide_ids.size() != e.size() || e.patient_ids.size() != e.size() || e.values.size() != e.size() * e.dim)
        throw ValidationError("embedding set columns have inconsistent lengths");
    std::unordered_set<std::string> tiles;
    std::unordered_map<std::string, std::string> slide_owner;
    for (std::size_t i = 0; i < e.size(); ++i) {
        const auto row = std::to_string(i + 1);
        if (e.tile_ids[i].empty() || e.slide_ids[i].empty() || e.patient_ids[i].empty())
            throw ValidationError("empty identifier at row " + row);
        if (!tiles.insert(e.tile_ids[i]).second)
            throw ValidationError("duplicate tile_id '" + e.tile_ids[i] + "' at row " + row);
        auto [it, fresh] = slide_owner.emplace(e.slide_ids[i], e.patient_ids[i]);
        if (!fresh && it->second != e.patient_ids[i])
            throw ValidationError("slide '" + e.slide_ids[i] + "' belongs to two patients (row " + row + ")");
        for (float v : e.vector(i))
            if (!std::isfinite(v)) throw ValidationError("non-finite value at row " + row);
    }
}

/// Scales every vector to unit Euclidean norm (zero vectors are left as is).
inline void l2_normalize(EmbeddingSet& e) {
    for (std::size_t i = 0; i < e.size(); ++i) {
        float* v = e.values.data() + i * e.dim;
        double ss = 0.0;
        for (std::size_t d = 0; d < e.dim; ++d) ss += static_cast<double>(v[d]) * v[d];
        if (ss <= 0.0) continue;
        const double inv = 1.0 / std::sqrt(ss);
        for (std::size_t d = 0; d < e.dim; ++d) v[d] = static_cast<float>(v[d] * inv);
    }
}

enum class EmbeddingFormat { Csv, Binary };

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    return s;
}

template <class T>
std::optional<T> parse_number(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    T value{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec == std::errc::result_out_of_range) {
        // from_chars rejects overflow; keep it as a non-finite value so validation names the row
        if constexpr (std::is_floating_point_v<T>) {
            const bool neg = s.front() == '-';
            return neg ? -std::numeric_limits<T>::infinity() : std::numeric_limits<T>::infinity();
        }
        return std::nullopt;
    }
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return value;
}

inline void write_u16(std::ostream& os, std::uint16_t v) {
    const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    os.write(b, 2);
}
inline void write_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
}
inline void write_u64(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 8);
}

template <class U>
U read_le(std::istream& is, const char* what) {
    unsigned char b[sizeof(U)];
    if (!is.read(reinterpret_cast<char*>(b), sizeof(U))) throw FormatError(std::string("truncated file reading ") + what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
    return v;
}

/// Shortest text that parses back to the same value.
template <class T>
std::string number_repr(T v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace detail

inline EmbeddingSet read_embeddings_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("malformed header: empty file");
    const auto header = detail::split_csv(detail::trim(line));
    if (header.size() < 4 || detail::trim(header[0]) != "tile_id" || detail::trim(header[1]) != "slide_id" ||
        detail::trim(header[2]) != "patient_id")
        throw FormatError("malformed header: expected tile_id,slide_id,patient_id,dim_0,...");
    const std::size_t dim = header.size() - 3;
    for (std::size_t d = 0; d < dim; ++d)
        if (detail::trim(header[3 + d]) != "dim_" + std::to_string(d))
            throw FormatError("malformed header: column " + std::to_string(4 + d) + " should be dim_" +
                              std::to_string(d));

    EmbeddingSet out;
    out.dim = dim;
    std::vector<float> row(dim);
    std::size_t rowno = 0;
    while (std::getline(in, line)) {
        const auto trimmed = detail::trim(line);
        if (trimmed.empty()) continue;
        ++rowno;
        const auto fields = detail::split_csv(trimmed);
        if (fields.size() != header.size())
            throw FormatError("inconsistent row width at row " + std::to_string(rowno) + ": expected " +
                              std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()));
        for (std::size_t d = 0; d < dim; ++d) {
            const auto text = detail::trim(fields[3 + d]);
            auto v = detail::parse_number<float>(text);
            if (!v) {
                // from_chars does not accept the spellings most writers use for NaN/inf
                std::string lower(text);
                for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
                if (lower == "nan" || lower == "inf" || lower == "-inf" || lower == "infinity" || lower == "-nan")
                    throw ValidationError("non-finite value at row " + std::to_string(rowno));
                throw FormatError("unparseable number '" + std::string(text) + "' at row " + std::to_string(rowno));
            }
            row[d] = *v;
        }
        out.tile_ids.emplace_back(detail::trim(fields[0]));
        out.slide_ids.emplace_back(detail::trim(fields[1]));
        out.patient_ids.emplace_back(detail::trim(fields[2]));
        out.values.insert(out.values.end(), row.begin(), row.end());
    }
    validate(out);
    return out;
}

inline EmbeddingSet read_embeddings_binary(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "PHA1", 4) != 0) throw FormatError("malformed header: bad magic");
    const auto dim = detail::read_le<std::uint32_t>(in, "dimension");
    const auto count = detail::read_le<std::uint64_t>(in, "record count");
    if (dim == 0) throw FormatError("malformed header: zero dimension");

    EmbeddingSet out;
    out.dim = dim;
    auto read_string = [&](const char* what) {
        const auto len = detail::read_le<std::uint16_t>(in, what);
        std::string s(len, '\0');
        if (len && !in.read(s.data(), len)) throw FormatError(std::string("truncated file reading ") + what);
        return s;
    };
    for (std::uint64_t r = 0; r < count; ++r) {
        out.tile_ids.push_back(read_string("tile_id"));
        out.slide_ids.push_back(read_string("slide_id"));
        out.patient_ids.push_back(read_string("patient_id"));
        for (std::uint32_t d = 0; d < dim; ++d) {
            const auto bits = detail::read_le<std::uint32_t>(in, "vector");
            float v;
            std::memcpy(&v, &bits, sizeof v);
            out.values.push_back(v);
        }
    }
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after last record");
    validate(out);
    return out;
}

/// Loads and validates an embedding file. `normalize` applies l2 normalization after validation.
inline EmbeddingSet load_embeddings(const std::string& path, EmbeddingFormat format, bool normalize = false) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    EmbeddingSet e = format == EmbeddingFormat::Csv ? read_embeddings_csv(in) : read_embeddings_binary(in);
    if (normalize) l2_normalize(e);
    return e;
}

inline void write_embeddings_csv(std::ostream& os, const EmbeddingSet& e) {
    os << "tile_id,slide_id,patient_id";
    for (std::size_t d = 0; d < e.dim; ++d) os << ",dim_" << d;
    os << '\n';
    for (std::size_t i = 0; i < e.size(); ++i) {
        os << e.tile_ids[i] << ',' << e.slide_ids[i] << ',' << e.patient_ids[i];
        for (float v : e.vector(i)) os << ',' << detail::number_repr(v);
        os << '\n';
    }
}

inline void write_embeddings_binary(std::ostream& os, const EmbeddingSet& e) {
    os.write("PHA1", 4);
    detail::write_u32(os, static_cast<std::uint32_t>(e.dim));
    detail::write_u64(os, e.size());
    auto put = [&](const std::string& s) {
        if (s.size() > 0xffff) throw ValidationError("identifier longer than 65535 bytes: " + s.substr(0, 32));
        detail::write_u16(os, static_cast<std::uint16_t>(s.size()));
        os.write(s.data(), static_cast<std::streamsize>(s.size()));
    };
    for (std::size_t i = 0; i < e.size(); ++i) {
        put(e.tile_ids[i]);
        put(e.slide_ids[i]);
        put(e.patient_ids[i]);
        for (float v : e.vector(i)) {
            std::uint32_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            detail::write_u32(os, bits);
        }
    }
}

inline void save_embeddings(const std::string& path, const EmbeddingSet& e, EmbeddingFormat format) {
    for (std::size_t i = 0; i < e.size(); ++i)
        for (const auto* s : {&e.tile_ids[i], &e.slide_ids[i], &e.patient_ids[i]})
            if (format == EmbeddingFormat::Csv && s->find_first_of(",\n\r") != std::string::npos)
                throw ValidationError("identifier '" + *s + "' cannot be written to CSV");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path);
    if (format == EmbeddingFormat::Csv)
        write_embeddings_csv(os, e);
    else
        write_embeddings_binary(os, e);
    if (!os) throw Error("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Patient metadata

struct PatientRecord {
    std::string patient_id;
    std::optional<int> subtype_label;  // 1 = epithelioid, 0 = non-epithelioid
    std::optional<double> time;        // months, > 0
    std::optional<int> event;          // 1 = death observed, 0 = censored

    friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

class CohortMetadata {
public:
    CohortMetadata() = default;

    void add(PatientRecord r) {
        if (r.patient_id.empty()) throw ValidationError("empty patient_id");
        if (index_.count(r.patient_id)) throw ValidationError("duplicate patient_id '" + r.patient_id + "'");
        if (r.time && !(*r.time > 0.0)) throw ValidationError("non-positive survival time for " + r.patient_id);
        if (r.event && *r.event != 0 && *r.event != 1) throw ValidationError("event outside {0,1} for " + r.patient_id);
        if (r.subtype_label && *r.subtype_label != 0 && *r.subtype_label != 1)
            throw ValidationError("subtype_label outside {0,1} for " + r.patient_id);
        if (r.time.has_value() != r.event.has_value())
            throw ValidationError("time and event must be given together for " + r.patient_id);
        index_.emplace(r.patient_id, records_.size());
        records_.push_back(std::move(r));
    }

    const std::vector<PatientRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }

    const PatientRecord* find(const std::string& id) const {
        auto it = index_.find(id);
        return it == index_.end() ? nullptr : &records_[it->second];
    }

    const PatientRecord& at(const std::string& id) const {
        if (auto* r = find(id)) return *r;
        throw ValidationError("no metadata row for patient '" + id + "'");
    }

    /// Throws unless every listed patient has a subtype label.
    void require_subtype(std::span<const std::string> patients) const {
        for (const auto& p : patients)
            if (!at(p).subtype_label) throw ValidationError("patient '" + p + "' has no subtype_label");
    }

    /// Throws unless every listed patient has time and event.
    void require_survival(std::span<const std::string> patients) const {
        for (const auto& p : patients)
            if (!at(p).time) throw ValidationError("patient '" + p + "' has no survival time/event");
    }

    struct Summary {
        std::size_t patients = 0, epithelioid = 0, non_epithelioid = 0, with_survival = 0, events = 0;
    };

    Summary summary() const {
        Summary s;
        s.patients = records_.size();
        for (const auto& r : records_) {
            if (r.subtype_label) (*r.subtype_label == 1 ? s.epithelioid : s.non_epithelioid)++;
            if (r.time) {
                ++s.with_survival;
                s.events += static_cast<std::size_t>(*r.event);
            }
        }
        return s;
    }

    friend bool operator==(const CohortMetadata& a, const CohortMetadata& b) { return a.records_ == b.records_; }

private:
    std::vector<PatientRecord> records_;
    std::unordered_map<std::string, std::size_t> index_;
};

inline CohortMetadata read_metadata_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("malformed header: empty metadata file");
    const auto header = detail::split_csv(detail::trim(line));
    int col_id = -1, col_label = -1, col_time = -1, col_event = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const auto h = detail::trim(header[i]);
        const int idx = static_cast<int>(i);
        if (h == "patient_id") col_id = idx;
        else if (h == "subtype_label") col_label = idx;
        else if (h == "time") col_time = idx;
        else if (h == "event") col_event = idx;
        else throw FormatError("malformed header: unknown column '" + std::string(h) + "'");
    }
    if (col_id < 0) throw FormatError("malformed header: missing patient_id column");
    if ((col_time < 0) != (col_event < 0)) throw FormatError("malformed header: time and event columns go together");

    CohortMetadata out;
    std::size_t rowno = 0;
    while (std::getline(in, line)) {
        const auto trimmed = detail::trim(line);
        if (trimmed.empty()) continue;
        ++rowno;
        const auto f = detail::split_csv(trimmed);
        if (f.size() != header.size()) throw FormatError("inconsistent row width at row " + std::to_string(rowno));
        PatientRecord r;
        r.patient_id = std::string(detail::trim(f[col_id]));
        auto int_field = [&](int col, const char* name) -> std::optional<int> {
            if (col < 0 || detail::trim(f[col]).empty()) return std::nullopt;
            auto v = detail::parse_number<int>(f[col]);
            if (!v) {
                // accept "1.0"-style integers
                auto d = detail::parse_number<double>(f[col]);
                if (!d || *d != std::floor(*d))
                    throw FormatError(std::string("bad ") + name + " at row " + std::to_string(rowno));
                return static_cast<int>(*d);
            }
            return v;
        };
        r.subtype_label = int_field(col_label, "subtype_label");
        r.event = int_field(col_event, "event");
        if (col_time >= 0 && !detail::trim(f[col_time]).empty()) {
            auto t = detail::parse_number<double>(f[col_time]);
            if (!t) throw FormatError("bad time at row " + std::to_string(rowno));
            r.time = *t;
        }
        try {
            out.add(std::move(r));
        } catch (const ValidationError& e) {
            throw ValidationError(std::string(e.what()) + " (row " + std::to_string(rowno) + ")");
        }
    }
    return out;
}

inline CohortMetadata load_metadata(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return read_metadata_csv(in);
}

inline void write_metadata_csv(std::ostream& os, const CohortMetadata& m) {
    os << "patient_id,subtype_label,time,event\n";
    for (const auto& r : m.records()) {
        os << r.patient_id << ',';
        if (r.subtype_label) os << *r.subtype_label;
        os << ',';
        if (r.time) os << detail::number_repr(*r.time);
        os << ',';
        if (r.event) os << *r.event;
        os << '\n';
    }
}

inline void save_metadata(const std::string& path, const CohortMetadata& m) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path);
    write_metadata_csv(os, m);
}

/// Distinct values of `ids` in order of first appearance.
inline std::vector<std::string> unique_in_order(std::span<const std::string> ids) {
    std::unordered_set<std::string> seen;
    std::vector<std::string> out;
    for (const auto& s : ids)
        if (seen.insert(s).second) out.push_back(s);
    return out;
}

}  // namespace phenoatlas
