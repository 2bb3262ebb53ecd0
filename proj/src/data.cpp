#include "fedbench/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "fedbench/rng.hpp"

namespace fedbench {

TabularDataset TabularDataset::subset(const std::vector<std::size_t>& idx) const {
    TabularDataset out;
    out.feature_names = feature_names;
    out.features = Matrix(idx.size(), dim());
    out.labels.reserve(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        std::copy_n(features.row(idx[r]), dim(), out.features.row(r));
        out.labels.push_back(labels[idx[r]]);
    }
    return out;
}

TabularDataset TabularDataset::concat(
    const std::vector<const TabularDataset*>& parts) {
    TabularDataset out;
    std::size_t n = 0;
    for (const auto* p : parts) n += p->size();
    if (parts.empty() || n == 0) return out;
    const std::size_t d = parts.front()->dim();
    out.feature_names = parts.front()->feature_names;
    out.features = Matrix(n, d);
    out.labels.reserve(n);
    std::size_t r = 0;
    for (const auto* p : parts) {
        if (p->dim() != d)
            throw DataError("concat: feature dim mismatch (" + std::to_string(d) +
                            " vs " + std::to_string(p->dim()) + ")");
        std::copy_n(p->features.data(), p->features.size(), out.features.row(r));
        out.labels.insert(out.labels.end(), p->labels.begin(), p->labels.end());
        r += p->size();
    }
    return out;
}

FederatedDataset FederatedDataset::without_test() const {
    FederatedDataset out = *this;
    for (auto& c : out.clients) c.test = TabularDataset{};
    return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& cell, std::size_t line_no,
                    const std::string& column) {
    double v = 0.0;
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || ptr != end)
        throw DataError("csv: non-numeric value '" + cell + "' at row " +
                        std::to_string(line_no) + ", column '" + column + "'");
    return v;
}

int parse_int(const std::string& cell, std::size_t line_no,
              const std::string& column) {
    int v = 0;
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || ptr != end)
        throw DataError("csv: non-integer value '" + cell + "' at row " +
                        std::to_string(line_no) + ", column '" + column + "'");
    return v;
}

struct ParsedCsv {
    std::vector<std::string> feature_names;
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::vector<int> client_ids;  // empty when schema has no client column
};

ParsedCsv parse_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("csv: cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line) || line.empty())
        throw DataError("csv: '" + path + "' is empty or has no header");

    const auto header = split_fields(line);
    std::ptrdiff_t label_idx = -1;
    std::ptrdiff_t client_idx = -1;
    ParsedCsv out;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == schema.label_column) {
            label_idx = static_cast<std::ptrdiff_t>(i);
        } else if (schema.client_id_column &&
                   header[i] == *schema.client_id_column) {
            client_idx = static_cast<std::ptrdiff_t>(i);
        } else {
            out.feature_names.push_back(header[i]);
        }
    }
    if (label_idx < 0)
        throw DataError("csv: missing label column '" + schema.label_column +
                        "' in '" + path + "'");
    if (schema.client_id_column && client_idx < 0)
        throw DataError("csv: missing client id column '" +
                        *schema.client_id_column + "' in '" + path + "'");

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_fields(line);
        if (fields.size() != header.size())
            throw DataError("csv: row " + std::to_string(line_no) + " has " +
                            std::to_string(fields.size()) +
                            " fields, header has " +
                            std::to_string(header.size()));
        std::vector<double> feats;
        feats.reserve(out.feature_names.size());
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (static_cast<std::ptrdiff_t>(i) == label_idx) {
                out.labels.push_back(
                    parse_int(fields[i], line_no, schema.label_column));
            } else if (static_cast<std::ptrdiff_t>(i) == client_idx) {
                out.client_ids.push_back(
                    parse_int(fields[i], line_no, *schema.client_id_column));
            } else {
                feats.push_back(parse_double(fields[i], line_no, header[i]));
            }
        }
        out.rows.push_back(std::move(feats));
    }
    if (out.rows.empty())
        throw DataError("csv: '" + path + "' has no data rows");
    return out;
}

TabularDataset to_dataset(const ParsedCsv& p,
                          const std::vector<std::size_t>& which) {
    TabularDataset d;
    d.feature_names = p.feature_names;
    d.features = Matrix(which.size(), p.feature_names.size());
    d.labels.reserve(which.size());
    for (std::size_t r = 0; r < which.size(); ++r) {
        std::copy_n(p.rows[which[r]].begin(), p.feature_names.size(),
                    d.features.row(r));
        d.labels.push_back(p.labels[which[r]]);
    }
    return d;
}

}  // namespace

TabularDataset load_csv(const std::string& path, const CsvSchema& schema) {
    CsvSchema flat = schema;
    flat.client_id_column.reset();
    const auto parsed = parse_csv(path, flat);
    std::vector<std::size_t> all(parsed.rows.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return to_dataset(parsed, all);
}

std::vector<TabularDataset> load_csv_clients(const std::string& path,
                                             const CsvSchema& schema) {
    const auto parsed = parse_csv(path, schema);
    if (parsed.client_ids.empty()) {
        std::vector<std::size_t> all(parsed.rows.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        return {to_dataset(parsed, all)};
    }
    const int max_id =
        *std::max_element(parsed.client_ids.begin(), parsed.client_ids.end());
    const int min_id =
        *std::min_element(parsed.client_ids.begin(), parsed.client_ids.end());
    if (min_id < 0)
        throw DataError("csv: negative client id " + std::to_string(min_id));
    std::vector<std::vector<std::size_t>> groups(
        static_cast<std::size_t>(max_id) + 1);
    for (std::size_t r = 0; r < parsed.client_ids.size(); ++r)
        groups[static_cast<std::size_t>(parsed.client_ids[r])].push_back(r);
    std::vector<TabularDataset> out;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (groups[g].empty())
            throw DataError("csv: client ids are not contiguous, id " +
                            std::to_string(g) + " has no rows");
        out.push_back(to_dataset(parsed, groups[g]));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Splits and resampling

std::pair<TabularDataset, TabularDataset> split_train_val(const TabularDataset& d,
                                                          double ratio,
                                                          std::uint64_t seed) {
    if (d.size() < 2)
        throw DataError("split: need at least 2 rows, got " +
                        std::to_string(d.size()));
    Rng rng(seed);
    auto perm = rng.permutation(d.size());
    const std::size_t n_train = static_cast<std::size_t>(
        std::floor(ratio * static_cast<double>(d.size())));
    std::vector<std::size_t> tr(perm.begin(), perm.begin() + n_train);
    std::vector<std::size_t> va(perm.begin() + n_train, perm.end());
    return {d.subset(tr), d.subset(va)};
}

void resplit_train_val(ClientSplit& c, double ratio, std::uint64_t seed) {
    const TabularDataset pool =
        c.val.empty() ? c.train : TabularDataset::concat({&c.train, &c.val});
    auto [train, val] = split_train_val(pool, ratio, seed);
    c.train = std::move(train);
    c.val = std::move(val);
}

TabularDataset resample_balance(const TabularDataset& train, std::uint64_t seed) {
    std::size_t n0 = 0, n1 = 0;
    for (int y : train.labels) {
        if (y == 0)
            ++n0;
        else if (y == 1)
            ++n1;
        else
            throw DataError("resample_balance: labels must be binary, found " +
                            std::to_string(y));
    }
    if (n0 == 0 || n1 == 0)
        throw DataError("resample_balance: both classes must be present");
    if (n0 == n1) return train;

    const int minority = n0 < n1 ? 0 : 1;
    std::vector<std::size_t> minority_rows;
    for (std::size_t i = 0; i < train.labels.size(); ++i)
        if (train.labels[i] == minority) minority_rows.push_back(i);

    std::vector<std::size_t> idx(train.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(seed);
    const std::size_t extra = (n0 > n1 ? n0 : n1) - minority_rows.size();
    for (std::size_t i = 0; i < extra; ++i)
        idx.push_back(minority_rows[rng.below(minority_rows.size())]);
    return train.subset(idx);
}

// ---------------------------------------------------------------------------
// Synthetic generator

namespace {

constexpr double kMargin = 1.2;
constexpr double kBend = 0.25;  // quadratic warp of the boundary

TabularDataset draw_client_samples(const SyntheticSpec& spec, Rng& rng,
                                   std::size_t n, double class_prior,
                                   double angle,
                                   const std::vector<double>& offset) {
    TabularDataset out;
    out.features = Matrix(n, spec.dim);
    out.labels.reserve(n);
    const double sigma = 1.0 + spec.noise;
    const double wx = std::cos(angle);
    const double wy = std::sin(angle);
    for (std::size_t i = 0; i < n; ++i) {
        const int y = rng.bernoulli(class_prior) ? 1 : 0;
        const double s = y == 1 ? kMargin : -kMargin;
        double* row = out.features.row(i);
        for (std::size_t j = 0; j < spec.dim; ++j) row[j] = sigma * rng.normal();
        row[0] += s * wx;
        row[1] += s * wy;
        row[1] += kBend * row[0] * row[0];
        for (std::size_t j = 0; j < spec.dim; ++j)
            row[j] += spec.covariate_shift * offset[j];
        out.labels.push_back(y);
    }
    for (std::size_t j = 0; j < spec.dim; ++j)
        out.feature_names.push_back("f" + std::to_string(j));
    return out;
}

}  // namespace

FederatedDataset generate_synthetic_federated(const SyntheticSpec& spec,
                                              std::uint64_t seed) {
    if (spec.n_clients == 0)
        throw DataError("synthetic: n_clients must be positive");
    if (spec.n_per_client < 10)
        throw DataError("synthetic: n_per_client must be at least 10, got " +
                        std::to_string(spec.n_per_client));
    if (spec.dim < 2) throw DataError("synthetic: dim must be at least 2");
    if (spec.label_shift < 0.0 || spec.label_shift >= 1.0)
        throw DataError("synthetic: label_shift must be in [0, 1)");

    FederatedDataset fed;
    fed.provenance = Provenance::Synthetic;
    fed.generation_seed = seed;
    const std::size_t m = spec.n_clients;
    for (std::size_t i = 0; i < m; ++i) {
        Rng rng = Rng::stream(seed, "synth-client", i);
        const double t =
            m > 1 ? 2.0 * static_cast<double>(i) / static_cast<double>(m - 1) - 1.0
                  : 0.0;
        const double prior = std::clamp(0.5 + spec.label_shift * t, 0.05, 0.95);
        const double angle = spec.concept_shift * t;

        std::vector<double> offset(spec.dim, 0.0);
        double norm = 0.0;
        for (auto& v : offset) {
            v = rng.normal();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (auto& v : offset) v /= norm;

        ClientSplit c;
        c.client_id = static_cast<int>(i);
        c.train =
            draw_client_samples(spec, rng, spec.n_per_client, prior, angle, offset);
        const std::size_t n_test = std::max<std::size_t>(2, spec.n_per_client / 4);
        c.test = draw_client_samples(spec, rng, n_test, prior, angle, offset);
        fed.clients.push_back(std::move(c));
    }
    return fed;
}

// ---------------------------------------------------------------------------
// Feature-space misalignment

namespace {

// Columns of a Gaussian matrix, modified Gram-Schmidt.
Matrix random_orthonormal(Rng& rng, std::size_t d, std::size_t out_dim) {
    Matrix q(d, out_dim);
    for (std::size_t c = 0; c < out_dim; ++c) {
        std::vector<double> col(d);
        double norm = 0.0;
        do {
            for (auto& v : col) v = rng.normal();
            for (std::size_t p = 0; p < c; ++p) {
                double proj = 0.0;
                for (std::size_t r = 0; r < d; ++r) proj += col[r] * q.at(r, p);
                for (std::size_t r = 0; r < d; ++r) col[r] -= proj * q.at(r, p);
            }
            norm = 0.0;
            for (double v : col) norm += v * v;
            norm = std::sqrt(norm);
        } while (norm < 1e-9);
        for (std::size_t r = 0; r < d; ++r) q.at(r, c) = col[r] / norm;
    }
    return q;
}

TabularDataset project(const TabularDataset& d, const Matrix& q) {
    TabularDataset out;
    out.features = Matrix(d.size(), q.cols);
    out.labels = d.labels;
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t c = 0; c < q.cols; ++c) {
            double acc = 0.0;
            for (std::size_t r = 0; r < q.rows; ++r)
                acc += d.features.at(i, r) * q.at(r, c);
            out.features.at(i, c) = acc;
        }
    for (std::size_t c = 0; c < q.cols; ++c)
        out.feature_names.push_back("p" + std::to_string(c));
    return out;
}

}  // namespace

FederatedDataset apply_local_projection(const FederatedDataset& fed,
                                        std::size_t out_dim, std::uint64_t seed,
                                        bool force_identity) {
    FederatedDataset out;
    out.provenance = fed.provenance;
    out.generation_seed = fed.generation_seed;
    for (const auto& c : fed.clients) {
        const std::size_t d = c.train.dim();
        if (out_dim > d)
            throw DataError("projection: out_dim " + std::to_string(out_dim) +
                            " exceeds feature dim " + std::to_string(d));
        Matrix q;
        if (force_identity) {
            if (out_dim != d)
                throw DataError(
                    "projection: identity hook requires out_dim == dim");
            q = Matrix::identity(d);
        } else {
            Rng rng = Rng::stream(seed, "proj-client",
                                  static_cast<std::uint64_t>(c.client_id));
            q = random_orthonormal(rng, d, out_dim);
        }
        ClientSplit pc;
        pc.client_id = c.client_id;
        pc.train = project(c.train, q);
        if (!c.val.empty()) pc.val = project(c.val, q);
        if (!c.test.empty()) pc.test = project(c.test, q);
        out.clients.push_back(std::move(pc));
    }
    return out;
}

}  // namespace fedbench
