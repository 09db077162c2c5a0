#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "mppidk/dko.hpp"
#include "mppidk/errors.hpp"

namespace mppidk {

namespace {

using nlohmann::json;

constexpr const char* kDatasetMagic = "# mppidk transition dataset v1";
constexpr const char* kModelFormat = "mppidk-koopman-model";
constexpr int kModelVersion = 1;

void append_number(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

void append_row(std::string& out, const char* key, const Vector& v) {
  out += key;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    out += ' ';
    append_number(out, v(i));
  }
  out += '\n';
}

double parse_number(const std::string& token) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(token, &used);
  } catch (const std::exception&) {
    throw InvalidInput("dataset file: cannot parse number '" + token + "'");
  }
  if (used != token.size()) throw InvalidInput("dataset file: cannot parse number '" + token + "'");
  return v;
}

Vector parse_keyed_row(std::istream& in, const std::string& key, Eigen::Index dim) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("dataset file: missing '" + key + "' line");
  std::istringstream ls(line);
  std::string name;
  ls >> name;
  if (name != key) throw InvalidInput("dataset file: expected '" + key + "', found '" + name + "'");
  Vector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    std::string tok;
    if (!(ls >> tok)) throw InvalidInput("dataset file: '" + key + "' has too few values");
    v(i) = parse_number(tok);
  }
  std::string extra;
  if (ls >> extra) throw InvalidInput("dataset file: '" + key + "' has too many values");
  return v;
}

long parse_keyed_count(std::istream& in, const std::string& key) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("dataset file: missing '" + key + "' line");
  std::istringstream ls(line);
  std::string name;
  long value = -1;
  ls >> name >> value;
  if (name != key || value < 0) throw InvalidInput("dataset file: bad '" + key + "' line");
  return value;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

json matrix_to_json(const Matrix& m) {
  json data = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw InvalidInput("model file: matrix entry count does not match its shape");
  }
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index k = 0; k < cols; ++k) {
      m(i, k) = data[static_cast<std::size_t>(i * cols + k)].get<double>();
    }
  }
  return m;
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Vector vector_from_json(const json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

}  // namespace

std::string dataset_to_string(const TransitionDataset& data) {
  data.validate();
  const int n = data.state_dim();
  const int m = data.input_dim();
  std::string out;
  out.reserve(static_cast<std::size_t>(data.size()) * static_cast<std::size_t>(2 * n + m) * 24 + 512);
  out += kDatasetMagic;
  out += '\n';
  out += "state_dim " + std::to_string(n) + '\n';
  out += "input_dim " + std::to_string(m) + '\n';
  out += "records " + std::to_string(data.size()) + '\n';
  append_row(out, "state_lower", data.state_bounds.lower);
  append_row(out, "state_upper", data.state_bounds.upper);
  append_row(out, "input_lower", data.input_bounds.lower);
  append_row(out, "input_upper", data.input_bounds.upper);

  std::string header;
  for (int i = 0; i < n; ++i) header += (header.empty() ? "" : ",") + ("x" + std::to_string(i));
  for (int i = 0; i < m; ++i) header += ",u" + std::to_string(i);
  for (int i = 0; i < n; ++i) header += ",x_next" + std::to_string(i);
  out += header + '\n';

  for (Eigen::Index k = 0; k < data.size(); ++k) {
    bool first = true;
    auto emit = [&](double v) {
      if (!first) out += ',';
      first = false;
      append_number(out, v);
    };
    for (int i = 0; i < n; ++i) emit(data.states(i, k));
    for (int i = 0; i < m; ++i) emit(data.inputs(i, k));
    for (int i = 0; i < n; ++i) emit(data.next_states(i, k));
    out += '\n';
  }
  return out;
}

TransitionDataset dataset_from_string(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kDatasetMagic) {
    throw InvalidInput("dataset file: missing header line '" + std::string(kDatasetMagic) + "'");
  }
  const long n = parse_keyed_count(in, "state_dim");
  const long m = parse_keyed_count(in, "input_dim");
  const long records = parse_keyed_count(in, "records");
  TransitionDataset data;
  data.state_bounds.lower = parse_keyed_row(in, "state_lower", n);
  data.state_bounds.upper = parse_keyed_row(in, "state_upper", n);
  data.input_bounds.lower = parse_keyed_row(in, "input_lower", m);
  data.input_bounds.upper = parse_keyed_row(in, "input_upper", m);
  if (!std::getline(in, line)) throw InvalidInput("dataset file: missing column header");

  data.states.resize(n, records);
  data.inputs.resize(m, records);
  data.next_states.resize(n, records);
  for (long k = 0; k < records; ++k) {
    if (!std::getline(in, line)) {
      throw InvalidInput("dataset file: expected " + std::to_string(records) + " records, found " +
                         std::to_string(k));
    }
    std::istringstream ls(line);
    std::string tok;
    std::vector<double> values;
    while (std::getline(ls, tok, ',')) values.push_back(parse_number(tok));
    if (static_cast<long>(values.size()) != 2 * n + m) {
      throw InvalidInput("dataset file: record " + std::to_string(k) + " has wrong field count");
    }
    for (long i = 0; i < n; ++i) data.states(i, k) = values[static_cast<std::size_t>(i)];
    for (long i = 0; i < m; ++i) data.inputs(i, k) = values[static_cast<std::size_t>(n + i)];
    for (long i = 0; i < n; ++i) data.next_states(i, k) = values[static_cast<std::size_t>(n + m + i)];
  }
  while (std::getline(in, line)) {
    if (!line.empty()) throw InvalidInput("dataset file: trailing content after records");
  }
  data.validate();
  return data;
}

void write_dataset(const TransitionDataset& data, const std::filesystem::path& path) {
  write_file(path, dataset_to_string(data));
}

TransitionDataset read_dataset(const std::filesystem::path& path) {
  return dataset_from_string(read_file(path));
}

std::string model_to_string(const KoopmanModel& model) {
  model.validate();
  const LiftingArchitecture& arch = model.net.arch();
  json j;
  j["format"] = kModelFormat;
  j["version"] = kModelVersion;
  j["architecture"] = {
      {"input_dim", arch.input_dim},
      {"hidden_sizes", arch.hidden_sizes},
      {"net_output_dim", arch.net_output_dim},
      {"append_state", arch.append_state},
      {"append_constant", arch.append_constant},
      {"hidden_activation", "relu"},
      {"output_activation", "tanh"},
  };
  j["normalization"] = {{"offset", vector_to_json(model.net.normalization().offset)},
                        {"scale", vector_to_json(model.net.normalization().scale)}};
  j["theta"] = vector_to_json(model.net.parameters());
  j["A"] = matrix_to_json(model.A);
  j["B"] = matrix_to_json(model.B);
  j["C"] = matrix_to_json(model.C);
  return j.dump(1) + "\n";
}

KoopmanModel model_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("model file: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kModelFormat ||
        j.at("version").get<int>() != kModelVersion) {
      throw InvalidInput("model file: unsupported format or version");
    }
    const json& a = j.at("architecture");
    if (a.value("hidden_activation", "relu") != "relu" ||
        a.value("output_activation", "tanh") != "tanh") {
      throw InvalidInput("model file: only relu hidden / tanh output layers are supported");
    }
    LiftingArchitecture arch;
    arch.input_dim = a.at("input_dim").get<int>();
    arch.hidden_sizes = a.at("hidden_sizes").get<std::vector<int>>();
    arch.net_output_dim = a.at("net_output_dim").get<int>();
    arch.append_state = a.at("append_state").get<bool>();
    arch.append_constant = a.value("append_constant", false);

    LiftingNetwork net = lift_init(arch, 0);
    net.set_parameters(vector_from_json(j.at("theta")));
    net.set_normalization({vector_from_json(j.at("normalization").at("offset")),
                           vector_from_json(j.at("normalization").at("scale"))});
    KoopmanModel model{matrix_from_json(j.at("A")), matrix_from_json(j.at("B")),
                       matrix_from_json(j.at("C")), std::move(net)};
    model.validate();
    return model;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("model file: ") + e.what());
  }
}

void write_model(const KoopmanModel& model, const std::filesystem::path& path) {
  write_file(path, model_to_string(model));
}

KoopmanModel read_model(const std::filesystem::path& path) {
  return model_from_string(read_file(path));
}

}  // namespace mppidk
