#include "failex/model_io.hpp"

#include <cmath>
#include <fstream>

#include "failex/error.hpp"

namespace failex {
namespace {

using nlohmann::json;

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

json vector_json(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

double finite(const json& value, const char* field) {
    if (!value.is_number()) throw ValidationError(std::string("model field '") + field + "' is not a number");
    const double x = value.get<double>();
    if (!std::isfinite(x)) throw ValidationError(std::string("model field '") + field + "' is not finite");
    return x;
}

Matrix matrix_from(const json& doc, const char* field, Eigen::Index rows, Eigen::Index cols) {
    const auto& rows_json = doc.at(field);
    if (!rows_json.is_array() || static_cast<Eigen::Index>(rows_json.size()) != rows)
        throw ValidationError(std::string("model field '") + field + "' has the wrong row count");
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = rows_json[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw ValidationError(std::string("model field '") + field + "' has the wrong column count");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = finite(row[static_cast<std::size_t>(c)], field);
    }
    return m;
}

Vector vector_from(const json& doc, const char* field, Eigen::Index size) {
    const auto& values = doc.at(field);
    if (!values.is_array() || static_cast<Eigen::Index>(values.size()) != size)
        throw ValidationError(std::string("model field '") + field + "' has the wrong length");
    Vector v(size);
    for (Eigen::Index i = 0; i < size; ++i) v[i] = finite(values[static_cast<std::size_t>(i)], field);
    return v;
}

}  // namespace

json model_to_json(const Model& model) {
    const auto& rep = model.params.representation;
    const auto& lstm = model.params.lstm;
    json doc;
    doc["format_version"] = kModelFormatVersion;
    doc["encoder"] = to_string(model.encoder);
    doc["vocabulary"] = model.vocabulary.names();
    doc["s"] = rep.embeddings.dimension();
    doc["a"] = rep.projection.dimension();
    doc["h"] = lstm.hidden_size();
    doc["sequence_length"] = model.sequence_length;
    doc["embeddings"] = matrix_json(rep.embeddings.vectors);
    doc["Q"] = matrix_json(rep.projection.query);
    doc["K"] = matrix_json(rep.projection.key);
    doc["theta"] = vector_json(rep.decay.theta);
    doc["sigma_raw"] = vector_json(rep.decay.sigma_raw);
    doc["lstm"] = {
        {"gate_order", "input,forget,output,candidate"},
        {"input_weights", matrix_json(lstm.input_weights)},
        {"recurrent_weights", matrix_json(lstm.recurrent_weights)},
        {"bias", vector_json(lstm.bias)},
    };
    doc["head"] = {{"W", vector_json(lstm.head_weights)}, {"b", lstm.head_bias}};
    return doc;
}

Model model_from_json(const json& doc) {
    try {
        if (doc.at("format_version").get<int>() != kModelFormatVersion)
            throw ValidationError("unsupported model format_version");
        Model m;
        m.encoder = parse_encoder_kind(doc.at("encoder").get<std::string>());
        m.vocabulary = Vocabulary(doc.at("vocabulary").get<std::vector<std::string>>());
        m.sequence_length = doc.at("sequence_length").get<int>();
        const auto s = doc.at("s").get<Eigen::Index>();
        const auto a = doc.at("a").get<Eigen::Index>();
        const auto h = doc.at("h").get<Eigen::Index>();
        const auto types = static_cast<Eigen::Index>(m.vocabulary.size());
        if (s < 1 || a < 1 || h < 1 || types < 1 || m.sequence_length < 1)
            throw ValidationError("model dimensions must be positive");
        auto& rep = m.params.representation;
        rep.embeddings.vectors = matrix_from(doc, "embeddings", types, s);
        rep.projection.query = matrix_from(doc, "Q", a, s);
        rep.projection.key = matrix_from(doc, "K", a, s);
        rep.decay.theta = vector_from(doc, "theta", types);
        rep.decay.sigma_raw = vector_from(doc, "sigma_raw", types);
        const auto& lstm_doc = doc.at("lstm");
        auto& lstm = m.params.lstm;
        lstm.input_weights = matrix_from(lstm_doc, "input_weights", 4 * h, s);
        lstm.recurrent_weights = matrix_from(lstm_doc, "recurrent_weights", 4 * h, h);
        lstm.bias = vector_from(lstm_doc, "bias", 4 * h);
        const auto& head = doc.at("head");
        lstm.head_weights = vector_from(head, "W", h);
        lstm.head_bias = finite(head.at("b"), "b");
        return m;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed model document: ") + e.what());
    }
}

void save_model(const Model& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << model_to_json(model).dump(1) << '\n';
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Model load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ValidationError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
    return model_from_json(doc);
}

json metrics_to_json(const Metrics& m) {
    return {
        {"precision_minority", m.precision_minority},
        {"recall_minority", m.recall_minority},
        {"f1_minority", m.f1_minority},
        {"balanced_accuracy", m.balanced_accuracy},
        {"confusion", {{"tp", m.confusion.tp}, {"fp", m.confusion.fp}, {"fn", m.confusion.fn}, {"tn", m.confusion.tn}}},
    };
}

}  // namespace failex
