#include "crl/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "crl/error.hpp"

namespace crl {

double ClassStats::gamma_hat(double alpha) const { return small_class_mass(*this, alpha); }

double ClassStats::theta_hat(int k) const {
    return small_class_mass(*this, (static_cast<double>(k) + 2.0) / 2.0);
}

double small_class_mass(const ClassStats& stats, double alpha) {
    require(alpha > 0, ErrorKind::InvalidArgument, "small_class_mass: alpha must be positive");
    const double threshold = 1.0 / alpha;
    double mass = 0;
    for (double p : stats.probs)
        if (p <= threshold) mass += p;
    return mass;
}

LabeledDataset LabeledDataset::build(std::vector<LabeledSample> samples) {
    require(!samples.empty(), ErrorKind::InvalidArgument, "dataset is empty");
    LabeledDataset ds;
    ds.dim_ = samples.front().features.size();
    std::map<long, std::size_t> dense;
    for (const auto& s : samples) {
        require(s.features.size() == ds.dim_, ErrorKind::InvalidArgument,
                "inconsistent feature dimension");
        for (double v : s.features)
            require(std::isfinite(v), ErrorKind::InvalidArgument, "non-finite feature value");
        dense.emplace(s.label, 0);
    }
    std::size_t next = 0;
    for (auto& [label, id] : dense) {
        id = next++;
        ds.original_labels_.push_back(label);
    }
    ds.members_.resize(dense.size());
    ds.features_.reserve(samples.size() * ds.dim_);
    ds.labels_.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::size_t r = dense.at(samples[i].label);
        ds.labels_.push_back(r);
        ds.members_[r].push_back(i);
        ds.features_.insert(ds.features_.end(), samples[i].features.begin(),
                            samples[i].features.end());
    }
    return ds;
}

ClassStats LabeledDataset::stats() const {
    ClassStats st;
    st.probs.reserve(members_.size());
    const auto n = static_cast<double>(size());
    for (const auto& m : members_) st.probs.push_back(static_cast<double>(m.size()) / n);
    return st;
}

SplitResult LabeledDataset::split(std::span<const std::size_t> perm, std::size_t cut) const {
    const std::size_t n = size();
    require(perm.size() == n, ErrorKind::InvalidArgument, "permutation length != N");
    require(cut > 0 && cut < n, ErrorKind::InvalidArgument,
            "split cut must satisfy 0 < cut < N (got " + std::to_string(cut) + ")");
    std::vector<char> seen(n, 0);
    for (std::size_t p : perm) {
        require(p < n && !seen[p], ErrorKind::InvalidArgument, "not a permutation of [N]");
        seen[p] = 1;
    }
    SplitResult out;
    out.front.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(cut));
    out.back.assign(perm.begin() + static_cast<std::ptrdiff_t>(cut), perm.end());
    out.front_counts.assign(num_classes(), 0);
    for (std::size_t i : out.front) ++out.front_counts[labels_[i]];
    return out;
}

SplitResult random_split(const LabeledDataset& ds, std::span<const std::size_t> perm,
                         std::size_t cut) {
    return ds.split(perm, cut);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
        cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_double(const std::string& s, std::size_t line_no) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        fail(ErrorKind::Io, "line " + std::to_string(line_no) + ": bad number '" + s + "'");
    }
}

}  // namespace

LabeledDataset read_dataset_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line[0] != '#') break;
    }
    const auto header = split_csv_line(line);
    require(header.size() >= 2 && header[0] == "label", ErrorKind::Io,
            "dataset CSV header must be label,f1..fd");
    for (std::size_t j = 1; j < header.size(); ++j)
        require(header[j] == "f" + std::to_string(j), ErrorKind::Io,
                "dataset CSV header column " + std::to_string(j + 1) + " must be f" +
                    std::to_string(j));
    const std::size_t d = header.size() - 1;
    std::vector<LabeledSample> samples;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#' || line == "\r") continue;
        const auto cells = split_csv_line(line);
        require(cells.size() == d + 1, ErrorKind::Io,
                "line " + std::to_string(line_no) + ": expected " + std::to_string(d + 1) +
                    " columns, got " + std::to_string(cells.size()));
        LabeledSample s;
        long label = 0;
        const auto* b = cells[0].data();
        const auto res = std::from_chars(b, b + cells[0].size(), label);
        require(res.ec == std::errc() && res.ptr == b + cells[0].size(), ErrorKind::Io,
                "line " + std::to_string(line_no) + ": bad label '" + cells[0] + "'");
        s.label = label;
        s.features.reserve(d);
        for (std::size_t j = 1; j <= d; ++j) s.features.push_back(parse_double(cells[j], line_no));
        samples.push_back(std::move(s));
    }
    try {
        return LabeledDataset::build(std::move(samples));
    } catch (const Error& e) {
        fail(ErrorKind::Io, std::string("dataset CSV: ") + e.what());
    }
}

LabeledDataset load_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorKind::Io, "cannot open dataset " + path);
    return read_dataset_csv(in);
}

void write_dataset_csv(std::ostream& out, const LabeledDataset& ds) {
    out << "label";
    for (std::size_t j = 1; j <= ds.dim(); ++j) out << ",f" << j;
    out << '\n' << std::setprecision(17);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out << ds.original_label(ds.label(i));
        for (double v : ds.features(i)) out << ',' << v;
        out << '\n';
    }
}

}  // namespace crl
