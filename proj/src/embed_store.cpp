#include "umml/embed_store.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "umml/error.hpp"

namespace umml {

namespace {

std::string_view trim_line_end(std::string_view line) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) {
        line.remove_suffix(1);
    }
    return line;
}

bool parse_double(std::string_view token, double &out) {
    const char *first = token.data();
    const char *last = token.data() + token.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

template <typename Int>
bool parse_int(std::string_view token, Int &out) {
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), out);
    return ec == std::errc() && ptr == token.data() + token.size();
}

std::string location(const std::filesystem::path &path, std::size_t line_no) {
    return path.string() + ":" + std::to_string(line_no);
}

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(std::string lang, std::vector<std::string> vocab, Matrix vectors,
                                 std::size_t duplicates_skipped)
    : lang_(std::move(lang)),
      vocab_(std::move(vocab)),
      vectors_(std::move(vectors)),
      duplicates_skipped_(duplicates_skipped) {
    if (vocab_.empty()) fail(ErrorKind::Input, "embedding matrix '" + lang_ + "' is empty");
    if (static_cast<Eigen::Index>(vocab_.size()) != vectors_.rows()) {
        fail(ErrorKind::Input, "embedding matrix '" + lang_ + "': " + std::to_string(vocab_.size()) +
                                   " words but " + std::to_string(vectors_.rows()) + " rows");
    }
    if (vectors_.cols() == 0) fail(ErrorKind::Input, "embedding matrix '" + lang_ + "' has dimension 0");
    if (!vectors_.allFinite()) fail(ErrorKind::Numeric, "embedding matrix '" + lang_ + "' has non-finite entries");
    index_.reserve(vocab_.size());
    for (std::size_t i = 0; i < vocab_.size(); ++i) {
        if (!index_.emplace(vocab_[i], i).second) {
            fail(ErrorKind::Input, "embedding matrix '" + lang_ + "': duplicate word '" + vocab_[i] + "'");
        }
    }
}

std::optional<std::size_t> EmbeddingMatrix::index_of(std::string_view word) const {
    auto it = index_.find(std::string(word));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

EmbeddingMatrix EmbeddingMatrix::head(std::size_t n) const {
    n = std::min(n, size());
    if (n == size()) return *this;
    std::vector<std::string> vocab(vocab_.begin(), vocab_.begin() + static_cast<std::ptrdiff_t>(n));
    return EmbeddingMatrix(lang_, std::move(vocab), vectors_.topRows(static_cast<Eigen::Index>(n)),
                           duplicates_skipped_);
}

EmbeddingMatrix EmbeddingMatrix::with_vectors(Matrix vectors) const {
    return EmbeddingMatrix(lang_, vocab_, std::move(vectors), duplicates_skipped_);
}

EmbeddingMatrix EmbeddingMatrix::with_lang(std::string lang) const {
    EmbeddingMatrix out = *this;
    out.lang_ = std::move(lang);
    return out;
}

std::vector<NormStep> default_normalization() {
    return {NormStep::Unit, NormStep::Center, NormStep::Unit};
}

NormStep parse_norm_step(std::string_view name) {
    if (name == "unit") return NormStep::Unit;
    if (name == "center") return NormStep::Center;
    fail(ErrorKind::Input, "unknown normalization step '" + std::string(name) + "'");
}

std::string_view to_string(NormStep step) {
    return step == NormStep::Unit ? "unit" : "center";
}

EmbeddingMatrix load_embeddings(const std::filesystem::path &path, std::size_t max_vocab,
                                std::string lang) {
    if (max_vocab == 0) fail(ErrorKind::Input, "max_vocab must be positive");
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open embeddings: " + path.string());
    if (lang.empty()) lang = path.stem().string();

    std::string line;
    if (!std::getline(in, line)) fail(ErrorKind::Format, location(path, 1) + ": missing header");
    std::string_view header = trim_line_end(line);
    auto space = header.find(' ');
    std::size_t count = 0;
    std::size_t dim = 0;
    if (space == std::string_view::npos || !parse_int(header.substr(0, space), count) ||
        !parse_int(header.substr(space + 1), dim) || dim == 0) {
        fail(ErrorKind::Format, location(path, 1) + ": malformed header '" + line + "'");
    }

    const std::size_t wanted = std::min(count, max_vocab);
    std::vector<std::string> vocab;
    vocab.reserve(wanted);
    std::vector<double> values;
    values.reserve(wanted * dim);
    std::unordered_set<std::string> seen;
    std::size_t duplicates = 0;

    std::size_t line_no = 1;
    std::size_t rows_read = 0;
    while (vocab.size() < wanted && rows_read < count && std::getline(in, line)) {
        ++line_no;
        std::string_view row = trim_line_end(line);
        if (row.empty()) continue;
        ++rows_read;
        auto word_end = row.find(' ');
        if (word_end == std::string_view::npos || word_end == 0) {
            fail(ErrorKind::Format, location(path, line_no) + ": expected a word followed by " +
                                        std::to_string(dim) + " values");
        }
        std::string word(row.substr(0, word_end));
        row.remove_prefix(word_end + 1);

        const std::size_t base = values.size();
        std::size_t n_values = 0;
        while (!row.empty()) {
            auto next = row.find(' ');
            std::string_view token = row.substr(0, next);
            double v = 0.0;
            if (!parse_double(token, v)) {
                fail(ErrorKind::Format, location(path, line_no) + ": bad value '" + std::string(token) + "'");
            }
            if (!std::isfinite(v)) {
                fail(ErrorKind::Format, location(path, line_no) + ": non-finite value for '" + word + "'");
            }
            values.push_back(v);
            ++n_values;
            row = next == std::string_view::npos ? std::string_view{} : row.substr(next + 1);
        }
        if (n_values != dim) {
            fail(ErrorKind::Format, location(path, line_no) + ": '" + word + "' has " +
                                        std::to_string(n_values) + " values, expected " + std::to_string(dim));
        }
        if (!seen.insert(word).second) {
            values.resize(base);
            ++duplicates;
            continue;
        }
        vocab.push_back(std::move(word));
    }
    if (vocab.empty()) fail(ErrorKind::Format, path.string() + ": no embeddings read");

    Matrix vectors = Eigen::Map<Matrix>(values.data(), static_cast<Eigen::Index>(vocab.size()),
                                        static_cast<Eigen::Index>(dim));
    return EmbeddingMatrix(std::move(lang), std::move(vocab), std::move(vectors), duplicates);
}

EmbeddingMatrix normalize(const EmbeddingMatrix &embeddings, const std::vector<NormStep> &steps) {
    Matrix v = embeddings.vectors();
    for (NormStep step : steps) {
        switch (step) {
        case NormStep::Unit:
            for (Eigen::Index i = 0; i < v.rows(); ++i) {
                double norm = v.row(i).norm();
                if (norm == 0.0) {
                    fail(ErrorKind::Numeric, "cannot unit-normalize zero vector of word '" +
                                                 embeddings.vocab()[static_cast<std::size_t>(i)] + "'");
                }
                v.row(i) /= norm;
            }
            break;
        case NormStep::Center:
            v.rowwise() -= v.colwise().mean();
            break;
        }
    }
    return embeddings.with_vectors(std::move(v));
}

void save_embeddings(const EmbeddingMatrix &embeddings, const std::filesystem::path &path) {
    if (embeddings.size() == 0) fail(ErrorKind::Input, "refusing to save an empty embedding matrix");
    for (const auto &word : embeddings.vocab()) {
        if (word.empty() || word.find_first_of(" \t\r\n") != std::string::npos) {
            fail(ErrorKind::Input, "word '" + word + "' cannot be written in the text format");
        }
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write embeddings: " + path.string());

    const Matrix &v = embeddings.vectors();
    out << v.rows() << ' ' << v.cols() << '\n';
    char buf[32];
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
        out << embeddings.vocab()[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < v.cols(); ++j) {
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v(i, j));
            out << ' ' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
        }
        out << '\n';
    }
    if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

}  // namespace umml
