#pragma once
// Aggregate tables and figures from experiment result CSVs.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tokgran/garden_path.hpp"
#include "tokgran/plot.hpp"
#include "tokgran/rt.hpp"

namespace tokgran {

/// One point of the ΔLogLik and perplexity curves.
struct Exp1Summary {
  std::string model_size;  // or "average"
  int vocab_size = 0;
  std::string phase;
  double delta_loglik = 0.0;  // summed over corpus x measure cells
  double perplexity = 0.0;    // geometric mean over corpora
  int cells = 0;
};

/// Per (model size, |V|, phase) aggregate over all corpora, then an "average"
/// row per (|V|, phase): arithmetic mean of ΔLogLik and geometric mean of
/// perplexity over the model sizes present. Incomplete grids add warnings.
std::vector<Exp1Summary> summarize_exp1(const std::vector<Exp1Row>& rows, std::vector<std::string>& warnings);
void write_exp1_summary_csv(const std::filesystem::path& path, const std::vector<Exp1Summary>& rows);

/// ΔLogLik-vs-|V| and perplexity-vs-|V| panels, one per phase; missing grid
/// cells are gaps.
Figure exp1_figure(const std::vector<Exp1Summary>& rows);

struct GPETrend {
  std::string model_size;
  Construction construction = Construction::MV_RR;
  Region region = Region::critical;
  std::string unit;
  std::size_t points = 0;
  LineFit fit;
};

/// fit_trend per (model size, construction, region, unit) series with at
/// least three vocabulary sizes.
std::vector<GPETrend> gpe_trends(const std::vector<GPEEstimate>& rows);
void write_gpe_trends_csv(const std::filesystem::path& path, const std::vector<GPETrend>& trends);

/// Construction x region panels of the ms estimates with CI bars and trend
/// lines, then one panel per construction in bits.
Figure gpe_figure(const std::vector<GPEEstimate>& rows, const std::vector<GPETrend>& trends,
                  std::vector<std::string>& warnings);

struct ReportOutput {
  std::vector<std::filesystem::path> artifacts;
  std::vector<std::string> warnings;
};

/// Reads exp1.csv and/or gpe.csv from `results` and writes the aggregate
/// tables and figures to `out`. Throws ValidationError if neither exists.
ReportOutput write_report(const std::filesystem::path& results, const std::filesystem::path& out,
                          const std::map<std::string, std::string>& stamps = {});

}  // namespace tokgran
