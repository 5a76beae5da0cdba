#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "protoshift/rng.hpp"
#include "protoshift/tensor.hpp"

namespace protoshift {

enum class Split { Train, Val, Test };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

/// Disjoint class-id sets per split, each sorted ascending.
struct SplitSets {
    std::vector<int> train;
    std::vector<int> val;
    std::vector<int> test;

    const std::vector<int>& of(Split s) const;
};

/// Labeled, domain-tagged feature table. Immutable once loaded; episode
/// sampling never mutates it and may run concurrently.
struct FeatureDataset {
    Tensor features;                      // [M x d_in]
    std::vector<int> labels;              // length M, class ids
    std::vector<int> domains;             // length M, domain ids
    std::vector<std::string> class_names; // index = class id
    SplitSets splits;
    int target_domain = 0;

    std::size_t sample_count() const { return labels.size(); }
    std::size_t feature_dim() const { return features.shape()[1]; }
};

/// Structural checks: column lengths agree, ids in range, splits disjoint.
void validate_dataset(const FeatureDataset& data);

enum class SettingKind { Tgt, SrcPlusTgt, FullTgt };

std::string setting_name(SettingKind k);
SettingKind setting_from_name(const std::string& name);

/// Which samples a training episode may draw from. Validation and test
/// episodes always draw target-domain samples only, whatever the setting.
///
///   tgt      : visible train classes only, target-domain samples only
///   src+tgt  : all train classes; auxiliary-domain samples of every class
///              plus target-domain samples of the visible classes
///   fulltgt  : all train classes, target-domain samples only
///
/// An empty tgt_visible_classes means every train class is visible.
struct ShiftSetting {
    SettingKind kind = SettingKind::FullTgt;
    int target_domain = 0;
    std::vector<int> tgt_visible_classes;

    bool is_visible(int class_id) const;
};

/// Eligible classes (sorted) and, per class, eligible sample rows (ascending)
/// for one (split, setting) pair.
struct Eligibility {
    std::vector<int> classes;
    std::map<int, std::vector<std::size_t>> rows;
};

Eligibility build_eligibility(const FeatureDataset& data, Split split,
                              const ShiftSetting& setting);

/// Self-contained N-way K-shot task. Samples are ordered class-major: the
/// K support rows of class position n occupy rows [n*K, (n+1)*K), queries
/// likewise with q per class. class_pos values index into class_ids.
struct Episode {
    std::vector<int> class_ids;          // N distinct dataset class ids
    std::size_t n_way = 0;
    std::size_t k_shot = 0;
    std::size_t n_query = 0;
    SettingKind setting = SettingKind::FullTgt;

    Tensor support_features;             // [N*K x d_in]
    std::vector<std::size_t> support_rows;
    std::vector<int> support_class_pos;
    std::vector<int> support_domains;

    Tensor query_features;               // [N*q x d_in]
    std::vector<std::size_t> query_rows;
    std::vector<int> query_class_pos;
    std::vector<int> query_domains;
};

inline constexpr std::size_t kDefaultQueriesPerClass = 15;

/// Uniform class sample, then per class a uniform K+q sample without
/// replacement (first K to support). Raises CapacityError when the split has
/// fewer than N eligible classes or any eligible class has fewer than K+q
/// eligible samples.
Episode sample_episode(const FeatureDataset& data, Split split, std::size_t n_way,
                       std::size_t k_shot, std::size_t n_query,
                       const ShiftSetting& setting, Rng& rng);

/// Asserts every Episode invariant with a distinct error per violation.
void validate_episode(const Episode& e);

/// `count` episodes on independent RNG substreams derived from (seed, index),
/// so episode(i) is identical however the stream is consumed. Capacity is
/// validated once at construction.
class EpisodeStream {
public:
    EpisodeStream(const FeatureDataset& data, Split split, std::size_t n_way,
                  std::size_t k_shot, std::size_t n_query, ShiftSetting setting,
                  std::uint64_t seed, std::size_t count);

    std::size_t size() const { return count_; }
    Episode episode(std::size_t i) const;

private:
    const FeatureDataset* data_;
    Split split_;
    std::size_t n_way_, k_shot_, n_query_;
    ShiftSetting setting_;
    std::uint64_t seed_;
    std::size_t count_;
};

/// Dataset manifest: JSON {class_names, count, domains_file, feature_dim,
/// feature_file, labels_file, splits{train,val,test}, target_domain} with
/// file paths relative to the manifest. Features are raw little-endian
/// 32-bit floats, row-major; labels and domains one integer per line.
FeatureDataset load_dataset(const std::filesystem::path& manifest_path);

/// Writes manifest.json, features.bin, labels.txt, domains.txt into dir.
void save_dataset(const std::filesystem::path& dir, const FeatureDataset& data);

} // namespace protoshift
