#include <charconv>
#include <fstream>
#include <stdexcept>
#include <string_view>

#include <json.hpp>

#include "symbiotic/graph.hpp"

namespace symbiotic {

namespace fs = std::filesystem;

namespace {

std::ifstream open_input(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("load_dataset: cannot open " + p.string());
    return in;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <typename T>
T parse_number(std::string_view s, const fs::path& file, std::size_t line) {
    s = trim(s);
    T value{};
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        throw std::runtime_error("load_dataset: bad number '" + std::string(s) + "' in " + file.string() + ":" +
                                 std::to_string(line));
    }
    return value;
}

}  // namespace

Graph load_dataset(const fs::path& dir) {
    const auto meta_path = dir / "meta.json";
    nlohmann::json meta;
    {
        auto in = open_input(meta_path);
        try {
            in >> meta;
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("load_dataset: malformed meta.json: " + std::string(e.what()));
        }
    }
    std::size_t n = 0, d = 0, classes = 0;
    try {
        n = meta.at("num_nodes").get<std::size_t>();
        d = meta.at("feature_dim").get<std::size_t>();
        classes = meta.at("num_classes").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("load_dataset: meta.json missing field: " + std::string(e.what()));
    }
    const std::string name = meta.value("name", dir.filename().string());

    std::vector<NodePair> pairs;
    {
        const auto p = dir / "edges.csv";
        auto in = open_input(p);
        std::string line;
        std::size_t ln = 0;
        while (std::getline(in, line)) {
            ++ln;
            const auto t = trim(line);
            if (t.empty() || t.front() == '#') continue;
            const auto comma = t.find(',');
            if (comma == std::string_view::npos) throw std::runtime_error("load_dataset: expected 'i,j' in " + p.string());
            const auto i = parse_number<std::uint64_t>(t.substr(0, comma), p, ln);
            const auto j = parse_number<std::uint64_t>(t.substr(comma + 1), p, ln);
            if (i >= n || j >= n) {
                throw std::runtime_error("load_dataset: edge endpoint out of range at " + p.string() + ":" + std::to_string(ln));
            }
            pairs.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
        }
    }

    Tensor features(n, d);
    {
        const auto p = dir / "features.csv";
        auto in = open_input(p);
        std::string line;
        std::size_t row = 0, ln = 0;
        while (std::getline(in, line)) {
            ++ln;
            std::string_view t = trim(line);
            if (t.empty()) continue;
            if (row >= n) throw std::runtime_error("load_dataset: features.csv has more rows than num_nodes");
            std::size_t col = 0;
            while (true) {
                const auto comma = t.find(',');
                const auto field = t.substr(0, comma);
                if (col >= d) throw std::runtime_error("load_dataset: features.csv row wider than feature_dim");
                features(row, col++) = parse_number<double>(field, p, ln);
                if (comma == std::string_view::npos) break;
                t.remove_prefix(comma + 1);
            }
            if (col != d) throw std::runtime_error("load_dataset: features.csv row narrower than feature_dim");
            ++row;
        }
        if (row != n) throw std::runtime_error("load_dataset: features.csv row count differs from num_nodes");
    }

    std::vector<int> labels;
    {
        const auto p = dir / "labels.csv";
        auto in = open_input(p);
        std::string line;
        std::size_t ln = 0;
        while (std::getline(in, line)) {
            ++ln;
            const auto t = trim(line);
            if (t.empty()) continue;
            const auto l = parse_number<long>(t, p, ln);
            if (l < 0 || static_cast<std::size_t>(l) >= classes) {
                throw std::runtime_error("load_dataset: label out of range at " + p.string() + ":" + std::to_string(ln));
            }
            labels.push_back(static_cast<int>(l));
        }
        if (labels.size() != n) throw std::runtime_error("load_dataset: labels.csv count differs from num_nodes");
    }

    return make_graph(n, classes, pairs, std::move(features), std::move(labels), name);
}

void save_dataset(const Graph& g, const fs::path& dir) {
    fs::create_directories(dir);
    {
        nlohmann::json meta = {{"name", g.name},
                               {"num_nodes", g.num_nodes},
                               {"feature_dim", g.feature_dim()},
                               {"num_classes", g.num_classes}};
        std::ofstream out(dir / "meta.json");
        out << meta.dump(2) << "\n";
    }
    {
        std::ofstream out(dir / "edges.csv");
        for (const auto& [i, j] : g.edges) out << i << ',' << j << '\n';
    }
    {
        std::ofstream out(dir / "features.csv");
        out.precision(17);
        for (std::size_t r = 0; r < g.num_nodes; ++r) {
            const auto xs = g.features.row(r);
            for (std::size_t c = 0; c < xs.size(); ++c) {
                if (c) out << ',';
                out << xs[c];
            }
            out << '\n';
        }
    }
    {
        std::ofstream out(dir / "labels.csv");
        for (int l : g.labels) out << l << '\n';
    }
    if (!fs::exists(dir / "labels.csv")) throw std::runtime_error("save_dataset: write failed for " + dir.string());
}

}  // namespace symbiotic
