#include "dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace dmir {

using nlohmann::json;

int LoggedDataset::bucket_of(long long ts) const {
    for (std::size_t i = 0; i < bucket_ends.size(); ++i)
        if (ts <= bucket_ends[i]) return int(i);
    return int(bucket_ends.size()) - 1;
}

std::size_t LoggedDataset::n_records() const {
    std::size_t n = 0;
    for (const auto& v : by_user) n += v.size();
    return n;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

[[noreturn]] void parse_fail(const std::string& path, std::size_t lineno,
                             const std::string& why) {
    throw std::runtime_error("parse error in " + path + " line " +
                             std::to_string(lineno) + ": " + why);
}

long long to_ll(const std::string& s, const std::string& path, std::size_t lineno) {
    try {
        std::size_t pos = 0;
        long long v = std::stoll(s, &pos);
        if (pos != s.size()) parse_fail(path, lineno, "trailing characters in '" + s + "'");
        return v;
    } catch (const std::invalid_argument&) {
        parse_fail(path, lineno, "not an integer: '" + s + "'");
    } catch (const std::out_of_range&) {
        parse_fail(path, lineno, "integer out of range: '" + s + "'");
    }
}

double to_double(const std::string& s, const std::string& path, std::size_t lineno) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) parse_fail(path, lineno, "trailing characters in '" + s + "'");
        return v;
    } catch (const std::exception&) {
        parse_fail(path, lineno, "not a number: '" + s + "'");
    }
}

}  // namespace

ParsedInteractions parse_interactions(const std::string& path, double threshold) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    ParsedInteractions out;
    std::map<long long, int> user_dense, item_dense;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (lineno == 1 && line.rfind("user", 0) == 0) continue;  // header
        auto cells = split_csv_line(line);
        if (cells.size() != 4) parse_fail(path, lineno, "expected 4 columns");
        long long uid = to_ll(cells[0], path, lineno);
        long long iid = to_ll(cells[1], path, lineno);
        double rating = to_double(cells[2], path, lineno);
        long long ts = to_ll(cells[3], path, lineno);
        if (uid < 0 || iid < 0) parse_fail(path, lineno, "negative id");
        auto [uit, unew] = user_dense.emplace(uid, int(out.user_id_map.size()));
        if (unew) out.user_id_map.push_back(uid);
        auto [iit, inew] = item_dense.emplace(iid, int(out.item_id_map.size()));
        if (inew) out.item_id_map.push_back(iid);
        out.records.push_back({uit->second, iit->second, rating >= threshold ? 1 : 0, ts});
    }
    return out;
}

std::vector<TrustEdge> parse_trust(const std::string& path,
                                   const std::vector<long long>& user_id_map) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::map<long long, int> dense;
    for (std::size_t i = 0; i < user_id_map.size(); ++i) dense[user_id_map[i]] = int(i);
    std::vector<TrustEdge> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (lineno == 1 && line.rfind("truster", 0) == 0) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != 2 && cells.size() != 3)
            parse_fail(path, lineno, "expected 2 or 3 columns");
        long long a = to_ll(cells[0], path, lineno);
        long long b = to_ll(cells[1], path, lineno);
        long long ts = cells.size() == 3 ? to_ll(cells[2], path, lineno) : 0;
        if (a == b) parse_fail(path, lineno, "self-loop trust edge");
        auto ia = dense.find(a), ib = dense.find(b);
        if (ia == dense.end() || ib == dense.end()) continue;
        out.push_back({ia->second, ib->second, ts});
    }
    return out;
}

std::vector<long long> make_bucket_ends(const std::vector<InteractionRecord>& records,
                                        int n_buckets) {
    if (records.empty() || n_buckets < 1)
        throw std::invalid_argument("make_bucket_ends: empty records or bad bucket count");
    long long lo = records.front().timestamp, hi = records.front().timestamp;
    for (const auto& r : records) {
        lo = std::min(lo, r.timestamp);
        hi = std::max(hi, r.timestamp);
    }
    std::vector<long long> ends;
    long long span = hi - lo + 1;
    for (int i = 1; i <= n_buckets; ++i)
        ends.push_back(lo + span * i / n_buckets - 1);
    ends.back() = std::max(ends.back(), hi);
    return ends;
}

PopularitySeries compute_popularity(const std::vector<InteractionRecord>& records,
                                    int n_items, const std::vector<long long>& bucket_ends,
                                    double smoothing) {
    if (n_items <= 0) throw std::invalid_argument("compute_popularity: no items");
    PopularitySeries out;
    out.buckets.assign(bucket_ends.size(), std::vector<double>(std::size_t(n_items), 0.0));
    std::vector<double> totals(bucket_ends.size(), 0.0);
    auto bucket_of = [&](long long ts) {
        for (std::size_t i = 0; i < bucket_ends.size(); ++i)
            if (ts <= bucket_ends[i]) return i;
        return bucket_ends.size() - 1;
    };
    for (const auto& r : records) {
        std::size_t b = bucket_of(r.timestamp);
        out.buckets[b][std::size_t(r.item)] += 1.0;
        totals[b] += 1.0;
    }
    for (std::size_t b = 0; b < out.buckets.size(); ++b) {
        double denom = totals[b] + smoothing * double(n_items);
        if (denom <= 0.0) {  // smoothing 0 and empty bucket: fall back to uniform
            for (auto& v : out.buckets[b]) v = 1.0 / double(n_items);
            continue;
        }
        for (auto& v : out.buckets[b]) v = (v + smoothing) / denom;
    }
    return out;
}

SocialGraphSeries snapshot_graph(const std::vector<TrustEdge>& edges, int n_users,
                                 const std::vector<long long>& bucket_ends,
                                 int neighbor_cap) {
    SocialGraphSeries out;
    std::vector<std::set<int>> adj{std::size_t(n_users)};
    std::vector<TrustEdge> sorted = edges;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const TrustEdge& a, const TrustEdge& b) {
                         return a.timestamp < b.timestamp;
                     });
    // Degree over the full edge set drives the cap so truncation is stable
    // across buckets.
    std::vector<int> degree(std::size_t(n_users), 0);
    for (const auto& e : sorted) {
        ++degree[std::size_t(e.truster)];
        ++degree[std::size_t(e.trustee)];
    }
    std::size_t next = 0;
    for (long long end : bucket_ends) {
        while (next < sorted.size() && sorted[next].timestamp <= end) {
            adj[std::size_t(sorted[next].truster)].insert(sorted[next].trustee);
            adj[std::size_t(sorted[next].trustee)].insert(sorted[next].truster);
            ++next;
        }
        std::vector<std::vector<int>> snapshot;
        snapshot.resize(std::size_t(n_users));
        for (int u = 0; u < n_users; ++u) {
            std::vector<int> nb(adj[std::size_t(u)].begin(), adj[std::size_t(u)].end());
            if (int(nb.size()) > neighbor_cap) {
                std::stable_sort(nb.begin(), nb.end(), [&](int a, int b) {
                    if (degree[std::size_t(a)] != degree[std::size_t(b)])
                        return degree[std::size_t(a)] > degree[std::size_t(b)];
                    return a < b;
                });
                nb.resize(std::size_t(neighbor_cap));
                std::sort(nb.begin(), nb.end());
            }
            snapshot[std::size_t(u)] = std::move(nb);
        }
        out.buckets.push_back(std::move(snapshot));
    }
    return out;
}

LoggedDataset build_dataset(ParsedInteractions parsed, const std::vector<TrustEdge>& edges,
                            const IngestOptions& opt) {
    if (parsed.records.empty()) throw std::runtime_error("build_dataset: no records");
    LoggedDataset ds;
    ds.n_users = int(parsed.user_id_map.size());
    ds.n_items = int(parsed.item_id_map.size());
    ds.user_id_map = std::move(parsed.user_id_map);
    ds.item_id_map = std::move(parsed.item_id_map);
    ds.bucket_ends = make_bucket_ends(parsed.records, opt.n_buckets);
    ds.popularity =
        compute_popularity(parsed.records, ds.n_items, ds.bucket_ends, opt.smoothing);
    ds.graphs = snapshot_graph(edges, ds.n_users, ds.bucket_ends, opt.neighbor_cap);
    ds.by_user.assign(std::size_t(ds.n_users), {});
    for (const auto& r : parsed.records) ds.by_user[std::size_t(r.user)].push_back(r);
    for (auto& v : ds.by_user)
        std::stable_sort(v.begin(), v.end(),
                         [](const InteractionRecord& a, const InteractionRecord& b) {
                             return a.timestamp < b.timestamp;
                         });
    return ds;
}

std::pair<LoggedDataset, LoggedDataset> split_train_test(const LoggedDataset& ds,
                                                         double ratio) {
    if (ratio <= 0.0 || ratio >= 1.0)
        throw std::invalid_argument("split_train_test: ratio must be in (0,1)");
    LoggedDataset train = ds, test = ds;
    for (int u = 0; u < ds.n_users; ++u) {
        const auto& recs = ds.by_user[std::size_t(u)];
        std::size_t cut = recs.size() < 2
                              ? recs.size()
                              : std::size_t(ratio * double(recs.size()));
        train.by_user[std::size_t(u)].assign(recs.begin(), recs.begin() + long(cut));
        test.by_user[std::size_t(u)].assign(recs.begin() + long(cut), recs.end());
    }
    return {std::move(train), std::move(test)};
}

void save_dataset(const LoggedDataset& ds, const std::vector<TrustEdge>& edges,
                  const IngestOptions& opt, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
        std::ofstream os(dir + "/interactions.csv");
        if (!os) throw std::runtime_error("cannot write " + dir + "/interactions.csv");
        os << "user,item,rating,timestamp\n";
        for (int u = 0; u < ds.n_users; ++u)
            for (const auto& r : ds.by_user[std::size_t(u)])
                os << ds.user_id_map[std::size_t(r.user)] << ','
                   << ds.item_id_map[std::size_t(r.item)] << ','
                   << (r.feedback ? 5 : 1) << ',' << r.timestamp << '\n';
    }
    {
        std::ofstream os(dir + "/trust.csv");
        if (!os) throw std::runtime_error("cannot write " + dir + "/trust.csv");
        os << "truster,trustee,timestamp\n";
        for (const auto& e : edges)
            os << ds.user_id_map[std::size_t(e.truster)] << ','
               << ds.user_id_map[std::size_t(e.trustee)] << ',' << e.timestamp << '\n';
    }
    json meta;
    meta["n_users"] = ds.n_users;
    meta["n_items"] = ds.n_items;
    meta["bucket_ends"] = ds.bucket_ends;
    meta["user_id_map"] = ds.user_id_map;
    meta["item_id_map"] = ds.item_id_map;
    meta["options"] = {{"binarize_threshold", opt.binarize_threshold},
                       {"smoothing", opt.smoothing},
                       {"n_buckets", opt.n_buckets},
                       {"neighbor_cap", opt.neighbor_cap}};
    std::ofstream os(dir + "/meta.json");
    os << meta.dump(2) << '\n';
}

LoadedDataset load_dataset(const std::string& dir) {
    std::ifstream ms(dir + "/meta.json");
    if (!ms) throw std::runtime_error("cannot open " + dir + "/meta.json");
    json meta = json::parse(ms);
    LoadedDataset out;
    out.options.binarize_threshold = meta["options"]["binarize_threshold"];
    out.options.smoothing = meta["options"]["smoothing"];
    out.options.n_buckets = meta["options"]["n_buckets"];
    out.options.neighbor_cap = meta["options"]["neighbor_cap"];

    ParsedInteractions parsed =
        parse_interactions(dir + "/interactions.csv", out.options.binarize_threshold);
    // Re-densify through the persisted maps so ids are stable across reloads.
    std::vector<long long> user_map = meta["user_id_map"].get<std::vector<long long>>();
    std::vector<long long> item_map = meta["item_id_map"].get<std::vector<long long>>();
    std::map<long long, int> udense, idense;
    for (std::size_t i = 0; i < user_map.size(); ++i) udense[user_map[i]] = int(i);
    for (std::size_t i = 0; i < item_map.size(); ++i) idense[item_map[i]] = int(i);
    for (auto& r : parsed.records) {
        r.user = udense.at(parsed.user_id_map[std::size_t(r.user)]);
        r.item = idense.at(parsed.item_id_map[std::size_t(r.item)]);
    }
    parsed.user_id_map = user_map;
    parsed.item_id_map = item_map;
    out.edges = parse_trust(dir + "/trust.csv", user_map);
    out.dataset = build_dataset(std::move(parsed), out.edges, out.options);
    out.dataset.bucket_ends = meta["bucket_ends"].get<std::vector<long long>>();
    // Bucketed series must follow the persisted boundaries, not recomputed ones.
    std::vector<InteractionRecord> all;
    for (const auto& v : out.dataset.by_user) all.insert(all.end(), v.begin(), v.end());
    out.dataset.popularity = compute_popularity(all, out.dataset.n_items,
                                                out.dataset.bucket_ends,
                                                out.options.smoothing);
    out.dataset.graphs = snapshot_graph(out.edges, out.dataset.n_users,
                                        out.dataset.bucket_ends, out.options.neighbor_cap);
    return out;
}

}  // namespace dmir
