#include "mstcar/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace mstcar::io {

namespace {

using nlohmann::json;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(field);
      field.clear();
    } else if (ch != '\r') {
      field.push_back(ch);
    }
  }
  fields.push_back(field);
  return fields;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

void expect_header(const std::string& got, const std::string& want,
                   const std::string& path) {
  std::string cleaned = got;
  while (!cleaned.empty() && (cleaned.back() == '\r' || cleaned.back() == '\n'))
    cleaned.pop_back();
  if (cleaned != want)
    throw IoError(path + ": expected header '" + want + "', got '" + cleaned +
                  "'");
}

int parse_index(const std::string& s, const std::string& path) {
  try {
    return std::stoi(s);
  } catch (...) {
    throw IoError(path + ": bad index '" + s + "'");
  }
}

double parse_double(const std::string& s, const std::string& path) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw IoError(path + ": bad number '" + s + "'");
    return v;
  } catch (const IoError&) {
    throw;
  } catch (...) {
    throw IoError(path + ": bad number '" + s + "'");
  }
}

struct CellIndexer {
  std::unordered_map<std::string, int> by_id;  // external id -> 0-based
  bool use_map = false;

  int site_index(const std::string& id, const std::string& path) const {
    if (use_map) {
      const auto it = by_id.find(id);
      if (it == by_id.end())
        throw IoError(path + ": unknown site id '" + id + "'");
      return it->second;
    }
    return parse_index(id, path) - 1;
  }
};

CellIndexer make_indexer(const std::vector<std::string>* site_ids) {
  CellIndexer indexer;
  if (site_ids) {
    indexer.use_map = true;
    for (std::size_t i = 0; i < site_ids->size(); ++i)
      indexer.by_id[(*site_ids)[i]] = static_cast<int>(i);
  }
  return indexer;
}

// Row-level parse shared by the data and population readers.
struct LongRow {
  int site, group, time;
  std::vector<std::string> fields;
};

template <typename RowFn>
void read_long_csv(const std::string& path, const std::string& header,
                   const CellIndexer& indexer, RowFn&& fn) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty file");
  expect_header(line, header, path);
  const std::size_t n_fields = split_csv_line(header).size();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != n_fields)
      throw IoError(path + ": wrong field count in '" + line + "'");
    LongRow row;
    row.site = indexer.site_index(fields[0], path);
    row.group = parse_index(fields[1], path) - 1;
    row.time = parse_index(fields[2], path) - 1;
    row.fields = std::move(fields);
    fn(row);
  }
}

json vector_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = j.at(i).get<double>();
  return v;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.size();
  if (rows == 0) return Eigen::MatrixXd(0, 0);
  const auto cols = j.at(0).size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows),
                    static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          j.at(r).at(c).get<double>();
  return m;
}

json load_json(const std::string& path) {
  auto in = open_in(path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  return j;
}

// Binary helpers (little-endian host assumed).
void put_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void put_i32(std::ostream& out, std::int32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void put_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::int32_t get_i32(std::istream& in) {
  std::int32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
double get_f64(std::istream& in) {
  double v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void put_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(out, m(r, c));
}

Eigen::MatrixXd get_matrix(std::istream& in, Eigen::Index rows,
                           Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = get_f64(in);
  return m;
}

constexpr char kSamplesMagic[8] = {'M', 'S', 'T', 'C', 'A', 'R', 'B', '1'};

}  // namespace

AdjacencyGraph read_adjacency_csv(const std::string& path, int n_sites) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty file");
  expect_header(line, "site_a,site_b", path);
  std::vector<std::pair<int, int>> edges;
  int max_index = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 2)
      throw IoError(path + ": wrong field count in '" + line + "'");
    const int a = parse_index(fields[0], path);
    const int b = parse_index(fields[1], path);
    max_index = std::max({max_index, a, b});
    edges.emplace_back(a - 1, b - 1);
  }
  return AdjacencyGraph(n_sites > 0 ? n_sites : max_index, edges);
}

void write_adjacency_csv(const std::string& path,
                         const AdjacencyGraph& graph) {
  auto out = open_out(path);
  out << "site_a,site_b\n";
  for (auto [a, b] : graph.edges()) out << a + 1 << ',' << b + 1 << '\n';
}

std::vector<std::string> read_site_map_csv(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty file");
  expect_header(line, "site_id,index", path);
  std::vector<std::pair<int, std::string>> pairs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 2)
      throw IoError(path + ": wrong field count in '" + line + "'");
    pairs.emplace_back(parse_index(fields[1], path), fields[0]);
  }
  std::vector<std::string> ids(pairs.size());
  for (const auto& [index, id] : pairs) {
    if (index < 1 || index > static_cast<int>(pairs.size()))
      throw IoError(path + ": index " + std::to_string(index) +
                    " outside 1..N");
    ids[static_cast<std::size_t>(index - 1)] = id;
  }
  return ids;
}

void write_site_map_csv(const std::string& path,
                        const std::vector<std::string>& ids) {
  auto out = open_out(path);
  out << "site_id,index\n";
  for (std::size_t i = 0; i < ids.size(); ++i)
    out << ids[i] << ',' << i + 1 << '\n';
}

RateDataset read_data_csv(const std::string& path,
                          const std::vector<std::string>* site_ids) {
  const CellIndexer indexer = make_indexer(site_ids);
  struct Cell {
    int site, group, time;
    bool observed;
    double rate, persons;
  };
  std::vector<Cell> cells;
  int n_sites = site_ids ? static_cast<int>(site_ids->size()) : 0;
  int n_groups = 0, n_time = 0;
  read_long_csv(path, "site_id,group,time,rate,population", indexer,
                [&](const LongRow& row) {
                  Cell cell;
                  cell.site = row.site;
                  cell.group = row.group;
                  cell.time = row.time;
                  cell.persons = parse_double(row.fields[4], path);
                  cell.observed = !row.fields[3].empty() && cell.persons > 0.0;
                  cell.rate = cell.observed
                                  ? parse_double(row.fields[3], path)
                                  : 0.0;
                  n_sites = std::max(n_sites, cell.site + 1);
                  n_groups = std::max(n_groups, cell.group + 1);
                  n_time = std::max(n_time, cell.time + 1);
                  cells.push_back(cell);
                });
  if (cells.empty()) throw IoError(path + ": no data rows");
  RateDataset data =
      RateDataset::with_intercept_design(n_sites, n_groups, n_time);
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> seen =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(
          n_sites, data.dim(), false);
  for (const auto& cell : cells) {
    if (cell.site < 0 || cell.group < 0 || cell.time < 0)
      throw IoError(path + ": indices must be >= 1");
    const int c = data.col(cell.group, cell.time);
    if (seen(cell.site, c))
      throw IoError(path + ": duplicate cell (site " +
                    std::to_string(cell.site + 1) + ", group " +
                    std::to_string(cell.group + 1) + ", time " +
                    std::to_string(cell.time + 1) + ")");
    seen(cell.site, c) = true;
    data.observed(cell.site, c) = cell.observed;
    data.y(cell.site, c) = cell.rate;
    data.pop(cell.site, c) = cell.observed ? cell.persons / 1e5
                                           : RateDataset::kSentinelPop;
  }
  if (!seen.all())
    throw IoError(path + ": incomplete grid (every site/group/time cell "
                         "needs a row)");
  data.validate();
  return data;
}

void write_data_csv(const std::string& path, const RateDataset& data,
                    const std::vector<std::string>* site_ids) {
  if (site_ids && static_cast<int>(site_ids->size()) != data.n_sites)
    throw DimensionMismatch("site map does not match dataset");
  auto out = open_out(path);
  out << "site_id,group,time,rate,population\n";
  for (int i = 0; i < data.n_sites; ++i)
    for (int k = 0; k < data.n_groups; ++k)
      for (int t = 0; t < data.n_time; ++t) {
        const int c = data.col(k, t);
        out << (site_ids ? (*site_ids)[static_cast<std::size_t>(i)]
                         : std::to_string(i + 1))
            << ',' << k + 1 << ',' << t + 1 << ',';
        if (data.observed(i, c))
          out << format_double(data.y(i, c)) << ','
              << format_double(data.pop(i, c) * 1e5) << '\n';
        else
          out << ",0\n";
      }
}

Eigen::MatrixXd read_population_csv(
    const std::string& path, int n_sites, int n_groups, int n_time,
    const std::vector<std::string>* site_ids) {
  const CellIndexer indexer = make_indexer(site_ids);
  Eigen::MatrixXd table =
      Eigen::MatrixXd::Constant(n_sites, n_groups * n_time, -1.0);
  read_long_csv(path, "site_id,group,time,population", indexer,
                [&](const LongRow& row) {
                  if (row.site < 0 || row.site >= n_sites ||
                      row.group < 0 || row.group >= n_groups ||
                      row.time < 0 || row.time >= n_time)
                    throw IoError(path + ": cell outside the stated grid");
                  table(row.site, row.time * n_groups + row.group) =
                      parse_double(row.fields[3], path);
                });
  if ((table.array() < 0.0).any())
    throw IoError(path + ": incomplete population grid");
  return table;
}

SimDesign read_design_json(const std::string& path) {
  const json j = load_json(path);
  const auto dir = std::filesystem::path(path).parent_path();
  const auto resolve = [&](const std::string& p) {
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? fp.string() : (dir / fp).string();
  };
  SimDesign d;
  try {
    d.n_groups = j.at("n_groups").get<int>();
    d.n_time = j.at("n_time").get<int>();
    d.adjacency_path = resolve(j.at("adjacency").get<std::string>());
    if (j.contains("site_map"))
      d.site_map_path = resolve(j.at("site_map").get<std::string>());
    if (j.contains("rho_truth")) d.rho_truth = vector_from_json(j.at("rho_truth"));
    if (j.contains("g_truth_df")) d.g_truth_df = j.at("g_truth_df").get<double>();
    if (j.contains("g_truth_scale"))
      d.g_truth_scale = j.at("g_truth_scale").get<double>();
    if (j.contains("tau2_truth"))
      d.tau2_truth = vector_from_json(j.at("tau2_truth"));
    const std::string mode = j.value("population_mode", std::string("equal"));
    if (mode == "equal") {
      d.population_mode = SimDesign::PopulationMode::Equal;
      d.equal_population = j.value("equal_population", 1e5);
    } else if (mode == "table") {
      d.population_mode = SimDesign::PopulationMode::Table;
      d.population_table_path =
          resolve(j.at("population_table").get<std::string>());
    } else {
      throw ConfigError("population_mode must be 'equal' or 'table'");
    }
    d.n_replicates = j.value("n_replicates", 25);
    d.seed = j.value("seed", static_cast<std::uint64_t>(1));
    d.truth_init = j.value("truth_init", true);
    if (j.contains("variants")) {
      d.variants.clear();
      for (const auto& name : j.at("variants"))
        d.variants.push_back(variant_from_name(name.get<std::string>()));
    }
    if (j.contains("sampler")) {
      const json& s = j.at("sampler");
      d.sampler.n_iterations = s.value("n_iterations", d.sampler.n_iterations);
      d.sampler.burn_in = s.value("burn_in", d.sampler.burn_in);
      d.sampler.thin = s.value("thin", d.sampler.thin);
      d.sampler.rho_proposal_sd =
          s.value("rho_proposal_sd", d.sampler.rho_proposal_sd);
      d.sampler.center_z = s.value("center_z", d.sampler.center_z);
      d.sampler.adapt_rho = s.value("adapt_rho", d.sampler.adapt_rho);
    }
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  d.apply_defaults();
  return d;
}

void write_truth_json(const std::string& path, const CovarianceSpec& spec) {
  json j;
  json g = json::array();
  for (const auto& gt : spec.g) g.push_back(matrix_to_json(gt));
  j["g"] = std::move(g);
  j["rho"] = vector_to_json(spec.rho);
  j["tau2"] = vector_to_json(spec.tau2);
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

CovarianceSpec read_truth_json(const std::string& path) {
  const json j = load_json(path);
  CovarianceSpec spec;
  try {
    for (const auto& gt : j.at("g")) spec.g.push_back(matrix_from_json(gt));
    spec.rho = vector_from_json(j.at("rho"));
    spec.tau2 = vector_from_json(j.at("tau2"));
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  spec.validate();
  return spec;
}

void write_field_csv(const std::string& path, const Eigen::MatrixXd& field,
                     int n_groups) {
  auto out = open_out(path);
  out << "site_id,group,time,value\n";
  const int nt = static_cast<int>(field.cols()) / n_groups;
  for (int i = 0; i < field.rows(); ++i)
    for (int k = 0; k < n_groups; ++k)
      for (int t = 0; t < nt; ++t)
        out << i + 1 << ',' << k + 1 << ',' << t + 1 << ','
            << format_double(field(i, t * n_groups + k)) << '\n';
}

Eigen::MatrixXd read_field_csv(const std::string& path, int n_groups) {
  const CellIndexer indexer;
  struct Entry {
    int site, col;
    double value;
  };
  std::vector<Entry> entries;
  int n_sites = 0, n_time = 0;
  read_long_csv(path, "site_id,group,time,value", indexer,
                [&](const LongRow& row) {
                  if (row.group >= n_groups)
                    throw IoError(path + ": group index exceeds n_groups");
                  n_sites = std::max(n_sites, row.site + 1);
                  n_time = std::max(n_time, row.time + 1);
                  entries.push_back({row.site, row.time * n_groups + row.group,
                                     parse_double(row.fields[3], path)});
                });
  Eigen::MatrixXd field =
      Eigen::MatrixXd::Zero(n_sites, n_groups * n_time);
  for (const auto& e : entries) field(e.site, e.col) = e.value;
  return field;
}

void write_samples(const std::string& path, const PosteriorSamples& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(kSamplesMagic, sizeof(kSamplesMagic));
  put_u64(out, static_cast<std::uint64_t>(s.n_sites));
  put_u64(out, static_cast<std::uint64_t>(s.n_groups));
  put_u64(out, static_cast<std::uint64_t>(s.n_time));
  put_u64(out, static_cast<std::uint64_t>(s.p));
  put_u64(out, static_cast<std::uint64_t>(s.n_draws()));
  put_u64(out, static_cast<std::uint64_t>(s.missing_cells.size()));
  put_u64(out, s.seed);
  put_i32(out, static_cast<std::int32_t>(s.variant));
  put_i32(out, s.n_iterations);
  put_i32(out, s.burn_in);
  put_i32(out, s.thin);
  for (auto [i, c] : s.missing_cells) {
    put_i32(out, i);
    put_i32(out, c);
  }
  for (int idx : s.iteration_index) put_i32(out, idx);
  for (Eigen::Index k = 0; k < s.rho_accept_rate.size(); ++k)
    put_f64(out, s.rho_accept_rate[k]);
  for (int d = 0; d < s.n_draws(); ++d) {
    const auto ds = static_cast<std::size_t>(d);
    put_matrix(out, s.beta[ds]);
    put_matrix(out, s.z[ds]);
    for (const auto& g : s.g[ds]) put_matrix(out, g);
    put_matrix(out, s.rho[ds]);
    put_matrix(out, s.tau2[ds]);
    put_matrix(out, s.y_u[ds]);
  }
  if (!out) throw IoError("short write to " + path);
}

PosteriorSamples read_samples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kSamplesMagic, sizeof(magic)) != 0)
    throw IoError(path + ": not a samples store");
  PosteriorSamples s;
  s.n_sites = static_cast<int>(get_u64(in));
  s.n_groups = static_cast<int>(get_u64(in));
  s.n_time = static_cast<int>(get_u64(in));
  s.p = static_cast<int>(get_u64(in));
  const auto n_draws = static_cast<int>(get_u64(in));
  const auto n_missing = static_cast<Eigen::Index>(get_u64(in));
  s.seed = get_u64(in);
  s.variant = static_cast<Variant>(get_i32(in));
  s.n_iterations = get_i32(in);
  s.burn_in = get_i32(in);
  s.thin = get_i32(in);
  for (Eigen::Index m = 0; m < n_missing; ++m) {
    const int i = get_i32(in);
    const int c = get_i32(in);
    s.missing_cells.emplace_back(i, c);
  }
  for (int d = 0; d < n_draws; ++d) s.iteration_index.push_back(get_i32(in));
  s.rho_accept_rate.resize(s.n_groups);
  for (int k = 0; k < s.n_groups; ++k) s.rho_accept_rate[k] = get_f64(in);
  const int dim = s.n_groups * s.n_time;
  for (int d = 0; d < n_draws; ++d) {
    s.beta.push_back(get_matrix(in, s.n_groups, s.p));
    s.z.push_back(get_matrix(in, s.n_sites, dim));
    std::vector<Eigen::MatrixXd> g;
    for (int t = 0; t < s.n_time; ++t)
      g.push_back(get_matrix(in, s.n_groups, s.n_groups));
    s.g.push_back(std::move(g));
    s.rho.push_back(get_matrix(in, s.n_groups, 1));
    s.tau2.push_back(get_matrix(in, s.n_groups, 1));
    s.y_u.push_back(get_matrix(in, n_missing, 1));
  }
  if (!in) throw IoError(path + ": truncated samples store");
  return s;
}

void write_summary_csv(const std::string& path,
                       const std::vector<SummaryRow>& rows) {
  auto out = open_out(path);
  out << "parameter_family,site,group,time,median,lo95,hi95\n";
  const auto index = [](int v) {
    return v < 0 ? std::string() : std::to_string(v + 1);
  };
  for (const auto& row : rows)
    out << row.family << ',' << index(row.site) << ',' << index(row.group)
        << ',' << index(row.time) << ',' << format_double(row.interval.median)
        << ',' << format_double(row.interval.lo95) << ','
        << format_double(row.interval.hi95) << '\n';
}

std::vector<SummaryRow> read_summary_csv(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty file");
  expect_header(line, "parameter_family,site,group,time,median,lo95,hi95",
                path);
  std::vector<SummaryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 7)
      throw IoError(path + ": wrong field count in '" + line + "'");
    SummaryRow row;
    row.family = fields[0];
    row.site = fields[1].empty() ? -1 : parse_index(fields[1], path) - 1;
    row.group = fields[2].empty() ? -1 : parse_index(fields[2], path) - 1;
    row.time = fields[3].empty() ? -1 : parse_index(fields[3], path) - 1;
    row.interval.median = parse_double(fields[4], path);
    row.interval.lo95 = parse_double(fields[5], path);
    row.interval.hi95 = parse_double(fields[6], path);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_dic_json(
    const std::string& path,
    const std::vector<std::pair<std::string, DicResult>>& entries) {
  json j;
  for (const auto& [name, result] : entries) {
    j[name] = {{"dic", result.dic},
               {"p_d", result.p_d},
               {"d_bar", result.d_bar},
               {"d_at_mean", result.d_at_mean}};
  }
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

std::vector<std::pair<std::string, DicResult>> read_dic_json(
    const std::string& path) {
  const json j = load_json(path);
  std::vector<std::pair<std::string, DicResult>> entries;
  for (const auto& [name, value] : j.items()) {
    DicResult r;
    r.dic = value.at("dic").get<double>();
    r.p_d = value.at("p_d").get<double>();
    r.d_bar = value.at("d_bar").get<double>();
    r.d_at_mean = value.at("d_at_mean").get<double>();
    entries.emplace_back(name, r);
  }
  return entries;
}

void write_coverage_report(const std::string& json_path,
                           const std::string& csv_path,
                           const CoverageReport& report) {
  json j;
  json variants = json::array();
  for (Variant v : report.variants) variants.push_back(variant_name(v));
  j["variants"] = std::move(variants);
  j["n_replicates"] = report.n_replicates;
  j["n_failed"] = report.n_failed;
  j["coverage_pct"] = {{"z", report.z_pct},
                       {"g_diag", report.g_diag_pct},
                       {"g_offdiag", report.g_offdiag_pct},
                       {"tau2", report.tau2_pct},
                       {"rho", report.rho_pct}};
  j["mstcar_dic_wins"] = report.mstcar_dic_wins;
  j["dic_comparisons"] = report.dic_comparisons;
  j["mean_relative_dic_improvement"] = report.mean_relative_dic_improvement;
  auto out = open_out(json_path);
  out << j.dump(2) << '\n';

  auto csv = open_out(csv_path);
  csv << "replicate,ok,error,z_covered,z_total,g_diag_covered,g_diag_total,"
         "g_offdiag_covered,g_offdiag_total,tau2_covered,tau2_total,"
         "rho_covered,rho_total";
  for (Variant v : report.variants) csv << ",dic_" << variant_name(v);
  csv << ",imputation_z,n_missing,geweke_max_abs_z\n";
  for (const auto& rec : report.records) {
    csv << rec.replicate + 1 << ',' << (rec.ok ? 1 : 0) << ',' << rec.error
        << ',' << rec.z_covered << ',' << rec.z_total << ','
        << rec.g_diag_covered << ',' << rec.g_diag_total << ','
        << rec.g_offdiag_covered << ',' << rec.g_offdiag_total << ','
        << rec.tau2_covered << ',' << rec.tau2_total << ','
        << rec.rho_covered << ',' << rec.rho_total;
    for (std::size_t v = 0; v < report.variants.size(); ++v)
      csv << ',' << (v < rec.dic.size() ? format_double(rec.dic[v]) : "");
    csv << ',' << format_double(rec.imputation_z) << ',' << rec.n_missing
        << ',' << format_double(rec.geweke_max_abs_z) << '\n';
  }
}

}  // namespace mstcar::io
