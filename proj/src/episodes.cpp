#include "protoshift/episodes.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <unordered_set>

#include "protoshift/serialize.hpp"

namespace protoshift {

std::string split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    throw ValueError("unknown split");
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    throw ValueError("unknown split name '" + name + "'");
}

const std::vector<int>& SplitSets::of(Split s) const {
    switch (s) {
        case Split::Train: return train;
        case Split::Val: return val;
        case Split::Test: return test;
    }
    throw ValueError("unknown split");
}

void validate_dataset(const FeatureDataset& data) {
    const std::size_t M = data.labels.size();
    if (data.features.rank() != 2)
        throw ShapeError("dataset features must be 2-D, got " +
                         shape_str(data.features.shape()));
    if (data.features.shape()[0] != M)
        throw ValueError("dataset has " + std::to_string(data.features.shape()[0]) +
                         " feature rows but " + std::to_string(M) + " labels");
    if (data.domains.size() != M)
        throw ValueError("dataset has " + std::to_string(data.domains.size()) +
                         " domain tags but " + std::to_string(M) + " labels");
    const int C = static_cast<int>(data.class_names.size());
    for (int c : data.labels)
        if (c < 0 || c >= C)
            throw ValueError("dataset label " + std::to_string(c) + " out of range [0," +
                             std::to_string(C) + ")");
    for (int d : data.domains)
        if (d < 0) throw ValueError("dataset domain id must be non-negative");

    std::set<int> seen;
    for (const auto* split : {&data.splits.train, &data.splits.val, &data.splits.test})
        for (int c : *split) {
            if (c < 0 || c >= C)
                throw ValueError("split class id " + std::to_string(c) +
                                 " out of range [0," + std::to_string(C) + ")");
            if (!seen.insert(c).second)
                throw ValueError("class id " + std::to_string(c) +
                                 " appears in more than one split");
        }
}

std::string setting_name(SettingKind k) {
    switch (k) {
        case SettingKind::Tgt: return "tgt";
        case SettingKind::SrcPlusTgt: return "src+tgt";
        case SettingKind::FullTgt: return "fulltgt";
    }
    throw ValueError("unknown setting");
}

SettingKind setting_from_name(const std::string& name) {
    if (name == "tgt") return SettingKind::Tgt;
    if (name == "src+tgt") return SettingKind::SrcPlusTgt;
    if (name == "fulltgt") return SettingKind::FullTgt;
    throw ValueError("unknown setting name '" + name + "'");
}

bool ShiftSetting::is_visible(int class_id) const {
    if (tgt_visible_classes.empty()) return true;
    return std::find(tgt_visible_classes.begin(), tgt_visible_classes.end(), class_id) !=
           tgt_visible_classes.end();
}

Eligibility build_eligibility(const FeatureDataset& data, Split split,
                              const ShiftSetting& setting) {
    Eligibility e;
    // Val and test tasks come from the target domain alone; training
    // eligibility depends on the shift setting.
    const bool training = split == Split::Train;
    for (int c : data.splits.of(split)) {
        if (training && setting.kind == SettingKind::Tgt && !setting.is_visible(c)) continue;
        e.classes.push_back(c);
        e.rows[c] = {};
    }
    std::sort(e.classes.begin(), e.classes.end());

    for (std::size_t i = 0; i < data.sample_count(); ++i) {
        auto it = e.rows.find(data.labels[i]);
        if (it == e.rows.end()) continue;
        const bool target = data.domains[i] == setting.target_domain;
        bool ok;
        if (!training || setting.kind != SettingKind::SrcPlusTgt) {
            ok = target;
        } else {
            ok = !target || setting.is_visible(data.labels[i]);
        }
        if (ok) it->second.push_back(i);
    }
    return e;
}

namespace {

void require_capacity(const Eligibility& elig, Split split, std::size_t n_way,
                      std::size_t per_class) {
    if (elig.classes.size() < n_way)
        throw CapacityError("split '" + split_name(split) + "' has " +
                            std::to_string(elig.classes.size()) +
                            " eligible classes, need " + std::to_string(n_way));
    for (int c : elig.classes) {
        std::size_t have = elig.rows.at(c).size();
        if (have < per_class)
            throw CapacityError("class " + std::to_string(c) + " has " +
                                std::to_string(have) + " eligible samples, need " +
                                std::to_string(per_class));
    }
}

Episode sample_from_eligibility(const FeatureDataset& data, const Eligibility& elig,
                                Split split, std::size_t n_way, std::size_t k_shot,
                                std::size_t n_query, const ShiftSetting& setting,
                                Rng& rng) {
    if (n_way == 0 || k_shot == 0 || n_query == 0)
        throw ValueError("episode dimensions must be positive");
    require_capacity(elig, split, n_way, k_shot + n_query);

    Episode ep;
    ep.n_way = n_way;
    ep.k_shot = k_shot;
    ep.n_query = n_query;
    ep.setting = setting.kind;
    ep.class_ids = rng.sample_without_replacement(elig.classes, n_way);

    const std::size_t d = data.feature_dim();
    std::vector<double> sup, qry;
    sup.reserve(n_way * k_shot * d);
    qry.reserve(n_way * n_query * d);
    auto push_sample = [&](std::vector<double>& dst, std::size_t row) {
        const double* src = data.features.values().data() + row * d;
        dst.insert(dst.end(), src, src + d);
    };
    for (std::size_t n = 0; n < n_way; ++n) {
        int c = ep.class_ids[n];
        std::vector<std::size_t> picks =
            rng.sample_without_replacement(elig.rows.at(c), k_shot + n_query);
        for (std::size_t s = 0; s < k_shot; ++s) {
            std::size_t row = picks[s];
            push_sample(sup, row);
            ep.support_rows.push_back(row);
            ep.support_class_pos.push_back(static_cast<int>(n));
            ep.support_domains.push_back(data.domains[row]);
        }
        for (std::size_t s = k_shot; s < k_shot + n_query; ++s) {
            std::size_t row = picks[s];
            push_sample(qry, row);
            ep.query_rows.push_back(row);
            ep.query_class_pos.push_back(static_cast<int>(n));
            ep.query_domains.push_back(data.domains[row]);
        }
    }
    ep.support_features = Tensor({n_way * k_shot, d}, std::move(sup));
    ep.query_features = Tensor({n_way * n_query, d}, std::move(qry));
    return ep;
}

} // namespace

Episode sample_episode(const FeatureDataset& data, Split split, std::size_t n_way,
                       std::size_t k_shot, std::size_t n_query,
                       const ShiftSetting& setting, Rng& rng) {
    Eligibility elig = build_eligibility(data, split, setting);
    return sample_from_eligibility(data, elig, split, n_way, k_shot, n_query, setting, rng);
}

void validate_episode(const Episode& e) {
    const std::size_t N = e.n_way, K = e.k_shot, q = e.n_query;
    if (e.class_ids.size() != N)
        throw ValueError("episode cardinality: " + std::to_string(e.class_ids.size()) +
                         " classes, declared " + std::to_string(N) + "-way");
    if (std::set<int>(e.class_ids.begin(), e.class_ids.end()).size() != N)
        throw ValueError("episode cardinality: class ids repeat");
    if (e.support_rows.size() != N * K)
        throw ValueError("episode support size " + std::to_string(e.support_rows.size()) +
                         ", expected " + std::to_string(N * K));
    if (e.query_rows.size() != N * q)
        throw ValueError("episode query size " + std::to_string(e.query_rows.size()) +
                         ", expected " + std::to_string(N * q));

    std::unordered_set<std::size_t> sup_rows(e.support_rows.begin(), e.support_rows.end());
    for (std::size_t row : e.query_rows)
        if (sup_rows.count(row))
            throw ValueError("episode disjointness: sample row " + std::to_string(row) +
                             " is in both support and query");

    std::vector<std::size_t> sup_per_class(N, 0), qry_per_class(N, 0);
    auto count = [&](const std::vector<int>& pos, std::vector<std::size_t>& acc,
                     const char* what) {
        for (int p : pos) {
            if (p < 0 || static_cast<std::size_t>(p) >= N)
                throw ValueError(std::string("episode ") + what + " class position " +
                                 std::to_string(p) + " outside the sampled classes");
            ++acc[static_cast<std::size_t>(p)];
        }
    };
    count(e.support_class_pos, sup_per_class, "support");
    count(e.query_class_pos, qry_per_class, "query");
    for (std::size_t n = 0; n < N; ++n) {
        if (sup_per_class[n] != K)
            throw ValueError("episode class position " + std::to_string(n) + " has " +
                             std::to_string(sup_per_class[n]) + " support samples, expected " +
                             std::to_string(K));
        if (qry_per_class[n] != q)
            throw ValueError("episode class position " + std::to_string(n) + " has " +
                             std::to_string(qry_per_class[n]) + " query samples, expected " +
                             std::to_string(q));
    }
    if (e.support_features.rank() != 2 || e.support_features.shape()[0] != N * K)
        throw ShapeError("episode support features shaped " +
                         shape_str(e.support_features.shape()));
    if (e.query_features.rank() != 2 || e.query_features.shape()[0] != N * q)
        throw ShapeError("episode query features shaped " +
                         shape_str(e.query_features.shape()));
    if (e.support_class_pos.size() != N * K || e.support_domains.size() != N * K ||
        e.query_class_pos.size() != N * q || e.query_domains.size() != N * q)
        throw ValueError("episode per-sample columns have inconsistent lengths");
}

EpisodeStream::EpisodeStream(const FeatureDataset& data, Split split, std::size_t n_way,
                             std::size_t k_shot, std::size_t n_query, ShiftSetting setting,
                             std::uint64_t seed, std::size_t count)
    : data_(&data), split_(split), n_way_(n_way), k_shot_(k_shot), n_query_(n_query),
      setting_(std::move(setting)), seed_(seed), count_(count) {
    if (n_way == 0 || k_shot == 0 || n_query == 0)
        throw ValueError("episode dimensions must be positive");
    Eligibility elig = build_eligibility(data, split, setting_);
    require_capacity(elig, split, n_way_, k_shot_ + n_query_);
}

Episode EpisodeStream::episode(std::size_t i) const {
    if (i >= count_)
        throw ValueError("episode index " + std::to_string(i) + " past stream size " +
                         std::to_string(count_));
    Rng rng(derive_stream(seed_, i));
    return sample_episode(*data_, split_, n_way_, k_shot_, n_query_, setting_, rng);
}

namespace {

std::vector<int> read_int_lines(const std::filesystem::path& path, std::size_t count) {
    std::ifstream is = open_input(path);
    std::vector<int> out;
    out.reserve(count);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            std::size_t used = 0;
            int v = std::stoi(line, &used);
            if (used != line.size() && line.find_first_not_of(" \r", used) != std::string::npos)
                throw std::invalid_argument("trailing");
            out.push_back(v);
        } catch (const std::exception&) {
            throw IoError(path.string() + ":" + std::to_string(lineno) +
                          ": expected one integer per line");
        }
    }
    if (out.size() != count)
        throw IoError(path.string() + ": has " + std::to_string(out.size()) +
                      " entries, manifest says " + std::to_string(count));
    return out;
}

void write_int_lines(const std::filesystem::path& path, const std::vector<int>& values) {
    std::ofstream os = open_output(path);
    for (int v : values) os << v << '\n';
    if (!os) throw IoError("failed writing '" + path.string() + "'");
}

} // namespace

FeatureDataset load_dataset(const std::filesystem::path& manifest_path) {
    std::ifstream is = open_input(manifest_path);
    json j = json::parse(is, nullptr, false);
    if (j.is_discarded()) throw IoError(manifest_path.string() + ": malformed JSON");
    for (const char* key : {"feature_file", "feature_dim", "count", "labels_file",
                            "domains_file", "class_names", "splits", "target_domain"})
        if (!j.contains(key))
            throw IoError(manifest_path.string() + ": manifest missing key '" +
                          std::string(key) + "'");

    const std::filesystem::path dir = manifest_path.parent_path();
    const std::size_t count = j["count"].get<std::size_t>();
    const std::size_t dim = j["feature_dim"].get<std::size_t>();
    if (count == 0 || dim == 0)
        throw IoError(manifest_path.string() + ": count and feature_dim must be positive");

    FeatureDataset data;
    data.class_names = j["class_names"].get<std::vector<std::string>>();
    data.target_domain = j["target_domain"].get<int>();
    const json& splits = j["splits"];
    for (const char* key : {"train", "val", "test"})
        if (!splits.contains(key))
            throw IoError(manifest_path.string() + ": splits missing '" + std::string(key) + "'");
    data.splits.train = splits["train"].get<std::vector<int>>();
    data.splits.val = splits["val"].get<std::vector<int>>();
    data.splits.test = splits["test"].get<std::vector<int>>();

    {
        std::ifstream fs = open_input(dir / j["feature_file"].get<std::string>());
        std::vector<float> raw = read_f32_block(fs, count * dim);
        char extra;
        if (fs.read(&extra, 1))
            throw IoError("feature file has trailing bytes past count*dim");
        std::vector<double> vals(raw.begin(), raw.end());
        data.features = Tensor({count, dim}, std::move(vals));
    }
    data.labels = read_int_lines(dir / j["labels_file"].get<std::string>(), count);
    data.domains = read_int_lines(dir / j["domains_file"].get<std::string>(), count);
    validate_dataset(data);
    return data;
}

void save_dataset(const std::filesystem::path& dir, const FeatureDataset& data) {
    validate_dataset(data);
    if (!std::filesystem::is_directory(dir))
        throw IoError("output directory '" + dir.string() + "' does not exist");
    {
        std::ofstream os = open_output(dir / "features.bin");
        std::vector<float> raw(data.features.values().begin(), data.features.values().end());
        write_f32_block(os, raw);
    }
    write_int_lines(dir / "labels.txt", data.labels);
    write_int_lines(dir / "domains.txt", data.domains);

    json j;
    j["feature_file"] = "features.bin";
    j["feature_dim"] = data.feature_dim();
    j["count"] = data.sample_count();
    j["labels_file"] = "labels.txt";
    j["domains_file"] = "domains.txt";
    j["class_names"] = data.class_names;
    j["splits"] = {{"train", data.splits.train},
                   {"val", data.splits.val},
                   {"test", data.splits.test}};
    j["target_domain"] = data.target_domain;
    std::ofstream os = open_output(dir / "manifest.json");
    os << j.dump(2) << '\n';
    if (!os) throw IoError("failed writing manifest.json");
}

} // namespace protoshift
