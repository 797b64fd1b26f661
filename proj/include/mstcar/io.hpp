#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mstcar/data.hpp"
#include "mstcar/diagnostics.hpp"
#include "mstcar/graph.hpp"
#include "mstcar/sampler.hpp"
#include "mstcar/simstudy.hpp"

// File formats. All CSV files carry a header row; site, group and time
// indices are 1-based on disk and 0-based in memory. Numbers are written
// with 17 significant digits so values round-trip exactly.
namespace mstcar::io {

// `site_a,site_b`, one undirected edge per row. n_sites = 0 infers the count
// from the largest index seen.
AdjacencyGraph read_adjacency_csv(const std::string& path, int n_sites = 0);
void write_adjacency_csv(const std::string& path, const AdjacencyGraph& graph);

// `site_id,index`: external identifier for each dense index 1..N. Returns
// ids ordered by index.
std::vector<std::string> read_site_map_csv(const std::string& path);
void write_site_map_csv(const std::string& path,
                        const std::vector<std::string>& ids);

// `site_id,group,time,rate,population`, long format, one row per cell.
// Population is raw persons (converted to 100,000-person units in memory);
// a missing rate is encoded as an empty rate field with population 0.
// Without a site map, site_id must be the dense index itself.
RateDataset read_data_csv(const std::string& path,
                          const std::vector<std::string>* site_ids = nullptr);
void write_data_csv(const std::string& path, const RateDataset& data,
                    const std::vector<std::string>* site_ids = nullptr);

// `site_id,group,time,population` raw persons; 0 marks a missing cell.
Eigen::MatrixXd read_population_csv(
    const std::string& path, int n_sites, int n_groups, int n_time,
    const std::vector<std::string>* site_ids = nullptr);

// Design JSON; relative file references are resolved against the design
// file's directory. The population table itself is loaded separately once
// the graph dimensions are known.
SimDesign read_design_json(const std::string& path);

void write_truth_json(const std::string& path, const CovarianceSpec& spec);
CovarianceSpec read_truth_json(const std::string& path);

// `site_id,group,time,value` long format of a per-site stacked field.
void write_field_csv(const std::string& path, const Eigen::MatrixXd& field,
                     int n_groups);
Eigen::MatrixXd read_field_csv(const std::string& path, int n_groups);

// Compact little-endian binary store of thinned draws. Byte-identical for
// identical chains.
void write_samples(const std::string& path, const PosteriorSamples& samples);
PosteriorSamples read_samples(const std::string& path);

// `parameter_family,site,group,time,median,lo95,hi95`; empty index fields
// where not applicable.
void write_summary_csv(const std::string& path,
                       const std::vector<SummaryRow>& rows);
std::vector<SummaryRow> read_summary_csv(const std::string& path);

void write_dic_json(
    const std::string& path,
    const std::vector<std::pair<std::string, DicResult>>& entries);
std::vector<std::pair<std::string, DicResult>> read_dic_json(
    const std::string& path);

void write_coverage_report(const std::string& json_path,
                           const std::string& csv_path,
                           const CoverageReport& report);

}  // namespace mstcar::io
