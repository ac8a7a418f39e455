#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dmir {

struct InteractionRecord {
    int user = 0;
    int item = 0;
    int feedback = 0;  // binary
    long long timestamp = 0;
};

struct TrustEdge {
    int truster = 0;
    int trustee = 0;
    long long timestamp = 0;  // 0 for static sources
};

/// Per-bucket item popularity vectors; each bucket is a probability vector
/// over items (Laplace-smoothed interaction counts).
struct PopularitySeries {
    std::vector<std::vector<double>> buckets;
};

/// Per-bucket neighbor lists, cumulative up to the bucket end.
struct SocialGraphSeries {
    // buckets[t][user] -> neighbor user ids
    std::vector<std::vector<std::vector<int>>> buckets;
};

struct LoggedDataset {
    int n_users = 0;
    int n_items = 0;
    std::vector<std::vector<InteractionRecord>> by_user;  // time-ordered per user
    PopularitySeries popularity;
    SocialGraphSeries graphs;
    std::vector<long long> bucket_ends;      // inclusive upper bounds, sorted
    std::vector<long long> user_id_map;      // dense id -> original id
    std::vector<long long> item_id_map;

    /// Index of the bucket containing `ts` (clamped to the last bucket).
    int bucket_of(long long ts) const;
    std::size_t n_records() const;
    const std::vector<int>& neighbors(int bucket, int user) const {
        return graphs.buckets[std::size_t(bucket)][std::size_t(user)];
    }
};

struct IngestOptions {
    double binarize_threshold = 4.0;
    double smoothing = 1.0;       // Laplace epsilon for popularity
    int n_buckets = 12;
    int neighbor_cap = 50;        // keep highest-degree neighbors
};

struct ParsedInteractions {
    std::vector<InteractionRecord> records;  // dense ids
    std::vector<long long> user_id_map;
    std::vector<long long> item_id_map;
};

/// CSV with header `user,item,rating,timestamp`. Ratings at or above the
/// threshold binarize to 1. Ids are densified in order of first appearance.
ParsedInteractions parse_interactions(const std::string& path, double threshold);

/// CSV with header `truster,trustee[,timestamp]`; original user ids. Edges
/// whose endpoints never interacted are dropped.
std::vector<TrustEdge> parse_trust(const std::string& path,
                                   const std::vector<long long>& user_id_map);

std::vector<long long> make_bucket_ends(const std::vector<InteractionRecord>& records,
                                        int n_buckets);

PopularitySeries compute_popularity(const std::vector<InteractionRecord>& records,
                                    int n_items, const std::vector<long long>& bucket_ends,
                                    double smoothing);

SocialGraphSeries snapshot_graph(const std::vector<TrustEdge>& edges, int n_users,
                                 const std::vector<long long>& bucket_ends,
                                 int neighbor_cap);

LoggedDataset build_dataset(ParsedInteractions parsed, const std::vector<TrustEdge>& edges,
                            const IngestOptions& opt);

/// Per-user temporal split; bucket series are shared between the halves.
std::pair<LoggedDataset, LoggedDataset> split_train_test(const LoggedDataset& ds,
                                                         double ratio);

/// Canonical on-disk form: interactions.csv, trust.csv, meta.json.
void save_dataset(const LoggedDataset& ds, const std::vector<TrustEdge>& edges,
                  const IngestOptions& opt, const std::string& dir);
struct LoadedDataset {
    LoggedDataset dataset;
    std::vector<TrustEdge> edges;
    IngestOptions options;
};
LoadedDataset load_dataset(const std::string& dir);

}  // namespace dmir
