#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ripple/config_json.hpp"
#include "ripple/error.hpp"
#include "ripple/tinylm.hpp"

static_assert(std::endian::native == std::endian::little, "snapshot files assume a little-endian host");

namespace ripple {

namespace {

constexpr std::array<char, 8> kMagic{'R', 'P', 'L', 'S', 'N', 'A', 'P', '1'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in, const std::string& what) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw Error("snapshot: truncated file reading " + what);
    return v;
}

void put_bytes(std::ostream& out, std::string_view s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_bytes(std::istream& in, const std::string& what) {
    const auto n = get<std::uint32_t>(in, what);
    std::string s(n, '\0');
    if (n > 0 && !in.read(s.data(), n)) throw Error("snapshot: truncated file reading " + what);
    return s;
}

void put_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) put<double>(out, m(r, c));
    }
}

Eigen::MatrixXd get_matrix(std::istream& in, const std::string& what, Eigen::Index rows, Eigen::Index cols) {
    const auto r = get<std::uint64_t>(in, what);
    const auto c = get<std::uint64_t>(in, what);
    if (static_cast<Eigen::Index>(r) != rows || static_cast<Eigen::Index>(c) != cols) {
        throw Error("snapshot: " + what + " has shape " + std::to_string(r) + "x" + std::to_string(c) +
                    ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = get<double>(in, what);
    }
    return m;
}

}  // namespace

void save_snapshot(const ModelSnapshot& snapshot, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write snapshot " + path.string());
    const auto& p = snapshot.params();
    const nlohmann::json header{{"config", snapshot.config()},
                                {"tag", snapshot.tag()},
                                {"vocab_size", p.vocab_size()},
                                {"context", p.context()},
                                {"embed_dim", p.embed_dim()},
                                {"hidden_dim", p.hidden_dim()}};

    out.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(out, kVersion);
    put<std::uint64_t>(out, snapshot.vocab().hash());
    put_bytes(out, header.dump());
    const auto& tokens = snapshot.vocab().tokens();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tokens.size()));
    for (const auto& t : tokens) put_bytes(out, t);
    put_matrix(out, p.embedding);
    put_matrix(out, p.hidden_w);
    put_matrix(out, p.hidden_b);
    put_matrix(out, p.output_w);
    put_matrix(out, p.output_b);
    if (!out) throw Error("error writing snapshot " + path.string());
}

ModelSnapshot load_snapshot(const std::filesystem::path& path, std::optional<std::uint64_t> expected_vocab_hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open snapshot " + path.string());

    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
        throw Error("snapshot " + path.string() + ": bad magic");
    }
    const auto version = get<std::uint32_t>(in, "version");
    if (version != kVersion) throw Error("snapshot: unsupported version " + std::to_string(version));
    const auto vocab_hash = get<std::uint64_t>(in, "vocab hash");
    if (expected_vocab_hash && *expected_vocab_hash != vocab_hash) {
        throw Error("snapshot " + path.string() + ": vocabulary hash mismatch");
    }

    const auto header = nlohmann::json::parse(get_bytes(in, "header"));
    const auto cfg = header.at("config").get<LmConfig>();

    const auto n_tokens = get<std::uint32_t>(in, "token count");
    std::vector<std::string> tokens;
    tokens.reserve(n_tokens);
    for (std::uint32_t i = 0; i < n_tokens; ++i) tokens.push_back(get_bytes(in, "token"));
    auto vocab = std::make_shared<const Vocab>(Vocab::from_tokens(std::move(tokens)));
    if (vocab->hash() != vocab_hash) throw Error("snapshot " + path.string() + ": stored vocabulary does not match its hash");

    const auto V = static_cast<Eigen::Index>(header.at("vocab_size").get<std::size_t>());
    const auto c = static_cast<Eigen::Index>(header.at("context").get<std::size_t>());
    const auto d = static_cast<Eigen::Index>(header.at("embed_dim").get<std::size_t>());
    const auto h = static_cast<Eigen::Index>(header.at("hidden_dim").get<std::size_t>());

    LmParams p;
    p.embedding = get_matrix(in, "embedding", V, d);
    p.hidden_w = get_matrix(in, "hidden_w", c * d, h);
    p.hidden_b = get_matrix(in, "hidden_b", h, 1);
    p.output_w = get_matrix(in, "output_w", h, V);
    p.output_b = get_matrix(in, "output_b", V, 1);
    return ModelSnapshot(cfg, std::move(vocab), std::move(p), header.at("tag").get<std::string>());
}

}  // namespace ripple
