#include "vpr/feature_store.hpp"

#include "vpr/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "json.hpp"

namespace vpr {

namespace fs = std::filesystem;
using json = nlohmann::json;

static_assert(std::numeric_limits<float>::is_iec559, "IEEE-754 floats required");

namespace {

constexpr char kFeatureMagic[4] = {'V', 'P', 'R', 'F'};
constexpr char kGlobalMagic[4] = {'V', 'P', 'R', 'G'};

class ByteWriter {
public:
    explicit ByteWriter(std::size_t reserve) { out_.reserve(reserve); }

    void raw(const void* data, std::size_t n) {
        auto p = static_cast<const std::byte*>(data);
        out_.insert(out_.end(), p, p + n);
    }
    template <typename T> void le(T value) {
        using U = std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                     std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>;
        U bits = std::bit_cast<U>(value);
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            out_.push_back(static_cast<std::byte>((bits >> (8 * i)) & 0xFFu));
        }
    }
    std::vector<std::byte> take() { return std::move(out_); }

private:
    std::vector<std::byte> out_;
};

class ByteReader {
public:
    ByteReader(std::span<const std::byte> bytes, const char* what) : bytes_(bytes), what_(what) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    void require(std::size_t n) const {
        if (remaining() < n) {
            throw FormatError(std::string(what_) + ": truncated payload, needed " + std::to_string(n) +
                                  " more bytes, have " + std::to_string(remaining()),
                              pos_);
        }
    }
    std::span<const std::byte> raw(std::size_t n) {
        require(n);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    template <typename T> T le() {
        using U = std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                     std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>;
        require(sizeof(T));
        U bits = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            bits |= static_cast<U>(std::to_integer<unsigned>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(T);
        return std::bit_cast<T>(bits);
    }
    float finite_float(const char* field) {
        const std::size_t at = pos_;
        const float v = le<float>();
        if (!std::isfinite(v)) {
            throw FormatError(std::string(what_) + ": non-finite " + field, at);
        }
        return v;
    }

private:
    std::span<const std::byte> bytes_;
    const char* what_;
    std::size_t pos_ = 0;
};

void expect_magic(ByteReader& in, const char (&magic)[4], const char* what) {
    auto m = in.raw(4);
    if (std::memcmp(m.data(), magic, 4) != 0) {
        throw FormatError(std::string(what) + ": bad magic", 0);
    }
    const std::size_t at = in.offset();
    const auto version = in.le<std::uint16_t>();
    if (version != kFormatVersion) {
        throw FormatError(std::string(what) + ": unsupported version " + std::to_string(version), at);
    }
}

// Brings a freshly read descriptor to unit norm. Norms within
// kUnitNormTolerance are left bit-exact so that re-serialization is lossless.
void check_unit_norm(std::span<float> desc, std::size_t offset, const char* what, LoadDiagnostics* diag) {
    double sq = 0.0;
    for (float v : desc) sq += static_cast<double>(v) * v;
    const double norm = std::sqrt(sq);
    const double drift = std::abs(norm - 1.0);
    if (drift <= kUnitNormTolerance) return;
    if (drift > kRenormalizeLimit) {
        throw FormatError(std::string(what) + ": descriptor norm " + std::to_string(norm) +
                              " deviates from 1 by more than " + std::to_string(kRenormalizeLimit),
                          offset);
    }
    for (float& v : desc) v = static_cast<float>(v / norm);
    if (diag) ++diag->renormalized;
}

std::vector<std::byte> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<std::byte> bytes(size);
    if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
        throw LoadError("failed reading " + path.string());
    }
    return bytes;
}

void write_file(std::span<const std::byte> bytes, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

} // namespace

void FeatureSet::push_back(const Keypoint& kp, std::span<const float> desc) {
    if (desc.size() != descriptor_dim) {
        throw ContractError("descriptor length " + std::to_string(desc.size()) +
                            " does not match descriptor_dim " + std::to_string(descriptor_dim));
    }
    keypoints.push_back(kp);
    descriptors.insert(descriptors.end(), desc.begin(), desc.end());
}

std::size_t feature_file_size(std::size_t feature_count, std::size_t descriptor_dim) {
    return kFeatureHeaderBytes + feature_count * (3 + descriptor_dim) * sizeof(float);
}

void validate_feature_set(const FeatureSet& set) {
    if (set.descriptor_dim == 0) throw ContractError(set.image_id + ": descriptor_dim must be positive");
    if (set.descriptors.size() != set.keypoints.size() * set.descriptor_dim) {
        throw ContractError(set.image_id + ": descriptor buffer does not match feature count");
    }
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto& kp = set.keypoints[i];
        if (!(kp.x >= 0.0f && kp.x < static_cast<float>(set.width) && kp.y >= 0.0f &&
              kp.y < static_cast<float>(set.height))) {
            throw ContractError(set.image_id + ": feature " + std::to_string(i) + " outside image bounds");
        }
        if (!(kp.score >= 0.0f) || !std::isfinite(kp.score)) {
            throw ContractError(set.image_id + ": feature " + std::to_string(i) + " has invalid score");
        }
        double sq = 0.0;
        for (float v : set.descriptor(i)) {
            if (!std::isfinite(v)) throw ContractError(set.image_id + ": non-finite descriptor value");
            sq += static_cast<double>(v) * v;
        }
        if (std::abs(std::sqrt(sq) - 1.0) > kUnitNormTolerance) {
            throw ContractError(set.image_id + ": descriptor " + std::to_string(i) + " is not unit norm");
        }
    }
}

std::vector<std::byte> serialize_features(const FeatureSet& set) {
    validate_feature_set(set);
    ByteWriter out(feature_file_size(set.size(), set.descriptor_dim));
    out.raw(kFeatureMagic, 4);
    out.le(kFormatVersion);
    out.le(set.descriptor_dim);
    out.le(set.width);
    out.le(set.height);
    out.le(static_cast<std::uint32_t>(set.size()));
    for (std::size_t i = 0; i < set.size(); ++i) {
        out.le(set.keypoints[i].x);
        out.le(set.keypoints[i].y);
        out.le(set.keypoints[i].score);
        for (float v : set.descriptor(i)) out.le(v);
    }
    return out.take();
}

FeatureSet parse_features(std::span<const std::byte> bytes, LoadDiagnostics* diag) {
    constexpr const char* what = "VPRF";
    ByteReader in(bytes, what);
    expect_magic(in, kFeatureMagic, what);

    FeatureSet set;
    const std::size_t dim_at = in.offset();
    set.descriptor_dim = in.le<std::uint16_t>();
    set.width = in.le<std::uint32_t>();
    set.height = in.le<std::uint32_t>();
    const auto count = in.le<std::uint32_t>();
    if (set.descriptor_dim == 0) throw FormatError("VPRF: descriptor_dim is zero", dim_at);

    const std::size_t expected = feature_file_size(count, set.descriptor_dim);
    if (bytes.size() > expected) {
        throw FormatError("VPRF: dimension mismatch, " + std::to_string(bytes.size() - expected) +
                              " trailing bytes after " + std::to_string(count) + " records of dim " +
                              std::to_string(set.descriptor_dim),
                          expected);
    }
    in.require(expected - kFeatureHeaderBytes);

    set.keypoints.reserve(count);
    set.descriptors.resize(static_cast<std::size_t>(count) * set.descriptor_dim);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::size_t record_at = in.offset();
        Keypoint kp;
        kp.x = in.finite_float("x");
        kp.y = in.finite_float("y");
        kp.score = in.finite_float("score");
        if (kp.x < 0.0f || kp.x >= static_cast<float>(set.width) || kp.y < 0.0f ||
            kp.y >= static_cast<float>(set.height)) {
            throw FormatError("VPRF: feature position outside image bounds", record_at);
        }
        if (kp.score < 0.0f) throw FormatError("VPRF: negative detector score", record_at + 8);
        set.keypoints.push_back(kp);

        const std::size_t desc_at = in.offset();
        auto desc = set.descriptor(i);
        for (float& v : desc) v = in.finite_float("descriptor value");
        check_unit_norm(desc, desc_at, what, diag);
    }
    return set;
}

FeatureSet load_feature_file(const fs::path& path, LoadDiagnostics* diag) {
    const auto bytes = read_file(path);
    try {
        FeatureSet set = parse_features(bytes, diag);
        set.image_id = path.stem().string();
        return set;
    } catch (const FormatError& e) {
        throw FormatError::with_context(path.string(), e);
    }
}

void write_feature_file(const FeatureSet& set, const fs::path& path) {
    write_file(serialize_features(set), path);
}

std::vector<std::byte> serialize_global_descriptors(std::span<const GlobalDescriptor> descriptors) {
    const std::size_t dim = descriptors.empty() ? 0 : descriptors.front().vector.size();
    ByteWriter out(14 + descriptors.size() * (2 + 32 + 4 * dim));
    out.raw(kGlobalMagic, 4);
    out.le(kFormatVersion);
    out.le(static_cast<std::uint32_t>(dim));
    out.le(static_cast<std::uint32_t>(descriptors.size()));
    for (const auto& d : descriptors) {
        if (d.vector.size() != dim) throw ContractError("global descriptor " + d.image_id + " has wrong dimension");
        if (d.image_id.size() > UINT16_MAX) throw ContractError("image id too long: " + d.image_id);
        out.le(static_cast<std::uint16_t>(d.image_id.size()));
        out.raw(d.image_id.data(), d.image_id.size());
        for (float v : d.vector) out.le(v);
    }
    return out.take();
}

std::vector<GlobalDescriptor> parse_global_descriptors(std::span<const std::byte> bytes, LoadDiagnostics* diag) {
    constexpr const char* what = "VPRG";
    ByteReader in(bytes, what);
    expect_magic(in, kGlobalMagic, what);
    const std::size_t dim_at = in.offset();
    const auto dim = in.le<std::uint32_t>();
    const auto count = in.le<std::uint32_t>();
    if (dim == 0 && count > 0) throw FormatError("VPRG: dim is zero", dim_at);

    std::vector<GlobalDescriptor> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        GlobalDescriptor g;
        const auto len = in.le<std::uint16_t>();
        auto id = in.raw(len);
        g.image_id.assign(reinterpret_cast<const char*>(id.data()), id.size());
        const std::size_t vec_at = in.offset();
        in.require(static_cast<std::size_t>(dim) * 4);
        g.vector.resize(dim);
        for (float& v : g.vector) v = in.finite_float("descriptor value");
        check_unit_norm(g.vector, vec_at, what, diag);
        out.push_back(std::move(g));
    }
    if (in.remaining() != 0) {
        throw FormatError("VPRG: dimension mismatch, " + std::to_string(in.remaining()) + " trailing bytes",
                          in.offset());
    }
    return out;
}

std::vector<GlobalDescriptor> load_global_descriptor_file(const fs::path& path, LoadDiagnostics* diag) {
    const auto bytes = read_file(path);
    try {
        return parse_global_descriptors(bytes, diag);
    } catch (const FormatError& e) {
        throw FormatError::with_context(path.string(), e);
    }
}

void write_global_descriptor_file(std::span<const GlobalDescriptor> descriptors, const fs::path& path) {
    write_file(serialize_global_descriptors(descriptors), path);
}

// Manifest --------------------------------------------------------------------

void DatasetManifest::validate() const {
    std::set<std::string> refs(reference_ids.begin(), reference_ids.end());
    if (refs.size() != reference_ids.size()) throw FormatError("manifest: duplicate reference id");
    std::set<std::string> queries(query_ids.begin(), query_ids.end());
    if (queries.size() != query_ids.size()) throw FormatError("manifest: duplicate query id");

    for (const auto& [qid, indices] : ground_truth) {
        if (!queries.count(qid)) throw FormatError("manifest: ground truth for unknown query \"" + qid + "\"");
        for (auto idx : indices) {
            if (idx >= reference_ids.size()) {
                throw FormatError("manifest: ground truth index " + std::to_string(idx) + " for \"" + qid +
                                  "\" is out of range");
            }
        }
    }
    for (const auto& [id, pos] : positions) {
        if (!refs.count(id) && !queries.count(id)) {
            throw FormatError("manifest: position for unknown id \"" + id + "\"");
        }
        if (!std::isfinite(pos.east) || !std::isfinite(pos.north)) {
            throw FormatError("manifest: non-finite position for \"" + id + "\"");
        }
    }
    for (const auto& [qid, seq] : query_sequences) {
        if (!queries.count(qid)) throw FormatError("manifest: sequence label for unknown query \"" + qid + "\"");
    }
    if (tolerance_unit == ToleranceUnit::Meters) {
        for (const auto* ids : {&reference_ids, &query_ids}) {
            for (const auto& id : *ids) {
                if (!positions.count(id)) throw FormatError("manifest: missing position for \"" + id + "\"");
            }
        }
    }
}

DatasetManifest parse_manifest(std::string_view json_text) {
    DatasetManifest m;
    try {
        const json doc = json::parse(json_text);
        m.reference_ids = doc.at("reference_ids").get<std::vector<std::string>>();
        m.query_ids = doc.at("query_ids").get<std::vector<std::string>>();

        const auto unit = doc.at("tolerance_unit").get<std::string>();
        if (unit == "sequence_index") {
            m.tolerance_unit = ToleranceUnit::SequenceIndex;
        } else if (unit == "meters") {
            m.tolerance_unit = ToleranceUnit::Meters;
        } else {
            throw FormatError("manifest: unknown tolerance_unit \"" + unit + "\"");
        }

        if (auto it = doc.find("positions"); it != doc.end()) {
            for (const auto& [id, p] : it->items()) {
                const auto xy = p.get<std::vector<double>>();
                if (xy.size() != 2) throw FormatError("manifest: position of \"" + id + "\" must be [east, north]");
                m.positions[id] = {xy[0], xy[1]};
            }
        }
        if (auto it = doc.find("ground_truth"); it != doc.end()) {
            for (const auto& [qid, v] : it->items()) {
                if (m.tolerance_unit == ToleranceUnit::SequenceIndex) {
                    m.ground_truth[qid] = v.get<std::vector<std::size_t>>();
                } else {
                    // meters: the query's true position
                    const auto xy = v.get<std::vector<double>>();
                    if (xy.size() != 2) throw FormatError("manifest: ground truth of \"" + qid + "\" must be [east, north]");
                    m.positions[qid] = {xy[0], xy[1]};
                }
            }
        } else if (m.tolerance_unit == ToleranceUnit::SequenceIndex) {
            throw FormatError("manifest: missing ground_truth");
        }
        if (auto it = doc.find("query_sequences"); it != doc.end()) {
            m.query_sequences = it->get<std::map<std::string, std::string>>();
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("manifest: ") + e.what());
    }
    m.validate();
    return m;
}

DatasetManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open manifest " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_manifest(text);
}

std::string manifest_to_json(const DatasetManifest& m) {
    json doc;
    doc["reference_ids"] = m.reference_ids;
    doc["query_ids"] = m.query_ids;
    doc["tolerance_unit"] = m.tolerance_unit == ToleranceUnit::Meters ? "meters" : "sequence_index";
    json gt = json::object();
    for (const auto& [qid, idx] : m.ground_truth) gt[qid] = idx;
    doc["ground_truth"] = gt;
    if (!m.positions.empty()) {
        json pos = json::object();
        for (const auto& [id, p] : m.positions) pos[id] = {p.east, p.north};
        doc["positions"] = pos;
    }
    if (!m.query_sequences.empty()) doc["query_sequences"] = m.query_sequences;
    return doc.dump(2);
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
    const auto text = manifest_to_json(manifest) + "\n";
    std::ofstream out(path, std::ios::trunc);
    if (!out || !(out << text)) throw IoError("cannot write manifest " + path.string());
}

// Database -------------------------------------------------------------------

fs::path feature_path(const fs::path& feature_dir, std::string_view image_id) {
    return feature_dir / (std::string(image_id) + ".vprf");
}

void Database::index_globals(std::vector<GlobalDescriptor> globals) {
    std::unordered_map<std::string, std::vector<float>> by_id;
    for (auto& g : globals) {
        if (global_dim_ == 0) global_dim_ = g.vector.size();
        if (g.vector.size() != global_dim_) {
            throw FormatError("global descriptor \"" + g.image_id + "\" has dimension " +
                              std::to_string(g.vector.size()) + ", expected " + std::to_string(global_dim_));
        }
        if (!by_id.emplace(g.image_id, std::move(g.vector)).second) {
            throw FormatError("duplicate global descriptor for \"" + g.image_id + "\"");
        }
    }
    reference_globals_.assign(references_.size() * global_dim_, 0.0f);
    for (std::size_t i = 0; i < references_.size(); ++i) {
        const auto& id = manifest_.reference_ids[i];
        auto it = by_id.find(id);
        if (it == by_id.end()) throw LoadError("missing global descriptor for reference \"" + id + "\"");
        std::copy(it->second.begin(), it->second.end(), reference_globals_.begin() + i * global_dim_);
    }
    for (const auto& qid : manifest_.query_ids) {
        if (auto it = by_id.find(qid); it != by_id.end()) query_globals_.emplace(qid, std::move(it->second));
    }
}

Database Database::load(const DatasetManifest& manifest, const fs::path& feature_dir,
                        const fs::path& descriptor_dir) {
    manifest.validate();
    Database db;
    db.manifest_ = manifest;
    db.feature_dir_ = feature_dir;
    db.references_.reserve(manifest.reference_ids.size());

    LoadDiagnostics diag;
    for (std::size_t i = 0; i < manifest.reference_ids.size(); ++i) {
        const auto& id = manifest.reference_ids[i];
        const auto path = feature_path(feature_dir, id);
        std::error_code ec;
        const auto bytes = fs::file_size(path, ec);
        if (ec) throw LoadError("missing feature file for \"" + id + "\": " + path.string());
        FeatureSet set = load_feature_file(path, &diag);
        set.image_id = id;
        db.sizes_.feature_bytes += bytes;
        db.references_.push_back(std::move(set));
        db.reference_lookup_.emplace(id, i);
    }
    db.sizes_.reference_count = db.references_.size();

    if (!fs::is_directory(descriptor_dir)) {
        throw LoadError("descriptor directory not found: " + descriptor_dir.string());
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(descriptor_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".vprg") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<GlobalDescriptor> globals;
    for (const auto& f : files) {
        auto part = load_global_descriptor_file(f, &diag);
        db.sizes_.descriptor_bytes += fs::file_size(f);
        std::move(part.begin(), part.end(), std::back_inserter(globals));
    }
    db.index_globals(std::move(globals));
    db.renormalized_ = diag.renormalized;
    return db;
}

Database Database::from_memory(DatasetManifest manifest, std::vector<FeatureSet> references,
                               std::vector<GlobalDescriptor> globals, std::vector<FeatureSet> queries) {
    manifest.validate();
    if (references.size() != manifest.reference_ids.size()) {
        throw ContractError("reference feature count does not match manifest");
    }
    Database db;
    db.manifest_ = std::move(manifest);
    for (std::size_t i = 0; i < references.size(); ++i) {
        references[i].image_id = db.manifest_.reference_ids[i];
        validate_feature_set(references[i]);
        db.sizes_.feature_bytes += feature_file_size(references[i].size(), references[i].descriptor_dim);
        db.reference_lookup_.emplace(references[i].image_id, i);
    }
    db.references_ = std::move(references);
    db.sizes_.reference_count = db.references_.size();
    db.sizes_.descriptor_bytes = serialize_global_descriptors(globals).size();
    db.index_globals(std::move(globals));
    for (auto& q : queries) {
        auto id = q.image_id;
        db.query_features_.emplace(std::move(id), std::move(q));
    }
    return db;
}

const FeatureSet& Database::reference(std::size_t index) const {
    if (index >= references_.size()) throw ContractError("reference index out of range: " + std::to_string(index));
    return references_[index];
}

const FeatureSet& Database::reference(std::string_view id) const {
    auto idx = reference_index(id);
    if (!idx) throw LoadError("unknown reference \"" + std::string(id) + "\"");
    return references_[*idx];
}

std::optional<std::size_t> Database::reference_index(std::string_view id) const {
    auto it = reference_lookup_.find(std::string(id));
    if (it == reference_lookup_.end()) return std::nullopt;
    return it->second;
}

std::span<const float> Database::reference_descriptor(std::size_t index) const {
    if (index >= references_.size()) throw ContractError("reference index out of range: " + std::to_string(index));
    return {reference_globals_.data() + index * global_dim_, global_dim_};
}

std::span<const float> Database::query_descriptor(std::string_view id) const {
    auto it = query_globals_.find(std::string(id));
    if (it == query_globals_.end()) throw LoadError("missing global descriptor for query \"" + std::string(id) + "\"");
    return it->second;
}

FeatureSet Database::query_features(std::string_view id) const {
    if (auto it = query_features_.find(std::string(id)); it != query_features_.end()) return it->second;
    if (!feature_dir_) throw LoadError("missing features for query \"" + std::string(id) + "\"");
    const auto path = feature_path(*feature_dir_, id);
    if (!fs::exists(path)) throw LoadError("missing feature file for query \"" + std::string(id) + "\": " + path.string());
    FeatureSet set = load_feature_file(path);
    set.image_id = std::string(id);
    return set;
}

} // namespace vpr
