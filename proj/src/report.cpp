#include "tokgran/report.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <tuple>

#include "tokgran/common.hpp"

namespace tokgran {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

// Size order for legends: the named configs by scale, then anything else.
int size_rank(const std::string& s) {
  static const std::vector<std::string> order = {"tiny", "desk", "small", "medium", "large", "average"};
  auto it = std::find(order.begin(), order.end(), s);
  return it == order.end() ? 100 : static_cast<int>(it - order.begin());
}

bool size_less(const std::string& a, const std::string& b) {
  return std::make_pair(size_rank(a), a) < std::make_pair(size_rank(b), b);
}

std::vector<std::string> sorted_sizes(std::set<std::string> s) {
  std::vector<std::string> v(s.begin(), s.end());
  std::sort(v.begin(), v.end(), size_less);
  return v;
}

}  // namespace

std::vector<Exp1Summary> summarize_exp1(const std::vector<Exp1Row>& rows, std::vector<std::string>& warnings) {
  struct Acc {
    double delta = 0.0;
    std::map<std::string, double> log_ppl;  // per corpus
    int cells = 0;
  };
  std::map<std::tuple<std::string, int, std::string>, Acc> by_cell;
  std::set<std::string> sizes;
  std::set<int> vocabs;
  std::set<std::string> phases;
  std::map<std::string, std::set<std::pair<std::string, std::string>>> cells_per_phase;
  for (const auto& r : rows) {
    if (r.model_size == "average") continue;
    auto& a = by_cell[{r.model_size, r.vocab_size, r.phase}];
    a.delta += r.delta_loglik;
    a.log_ppl[r.corpus] = std::log(r.perplexity);
    ++a.cells;
    sizes.insert(r.model_size);
    vocabs.insert(r.vocab_size);
    phases.insert(r.phase);
    cells_per_phase[r.phase].insert({r.corpus, r.measure});
  }

  std::vector<Exp1Summary> out;
  std::map<std::pair<int, std::string>, std::vector<const Exp1Summary*>> groups;
  for (const auto& size : sorted_sizes(sizes)) {
    for (const auto& phase : phases) {
      for (int v : vocabs) {
        auto it = by_cell.find({size, v, phase});
        if (it == by_cell.end()) {
          warnings.push_back(fmt::format("exp1: no results for {} |V|={} {}", size, v, phase));
          continue;
        }
        const Acc& a = it->second;
        const auto expected = cells_per_phase[phase].size();
        if (static_cast<std::size_t>(a.cells) < expected) {
          warnings.push_back(
              fmt::format("exp1: {} |V|={} {} has {} of {} corpus-measure cells", size, v, phase, a.cells, expected));
        }
        double lp = 0.0;
        for (const auto& [c, l] : a.log_ppl) lp += l;
        out.push_back({size, v, phase, a.delta, std::exp(lp / static_cast<double>(a.log_ppl.size())), a.cells});
      }
    }
  }
  for (const auto& s : out) groups[{s.vocab_size, s.phase}].push_back(&s);
  std::vector<Exp1Summary> averages;
  for (const auto& [key, members] : groups) {
    if (members.size() < sizes.size()) {
      warnings.push_back(fmt::format("exp1: average at |V|={} {} uses {} of {} model sizes", key.first, key.second,
                                     members.size(), sizes.size()));
    }
    Exp1Summary a;
    a.model_size = "average";
    a.vocab_size = key.first;
    a.phase = key.second;
    double lp = 0.0;
    for (const auto* m : members) {
      a.delta_loglik += m->delta_loglik;
      lp += std::log(m->perplexity);
      a.cells += m->cells;
    }
    const double n = static_cast<double>(members.size());
    a.delta_loglik /= n;
    a.perplexity = std::exp(lp / n);
    averages.push_back(a);
  }
  // Keep phase-major order for the average rows too.
  std::stable_sort(averages.begin(), averages.end(),
                   [](const auto& x, const auto& y) { return std::tie(x.phase, x.vocab_size) < std::tie(y.phase, y.vocab_size); });
  out.insert(out.end(), averages.begin(), averages.end());
  return out;
}

void write_exp1_summary_csv(const std::filesystem::path& path, const std::vector<Exp1Summary>& rows) {
  auto out = open_out(path);
  out << "model_size,vocab_size,phase,delta_loglik,perplexity,cells\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{},{},{:.6f},{:.6f},{}\n", r.model_size, r.vocab_size, r.phase, r.delta_loglik,
                       r.perplexity, r.cells);
  }
}

Figure exp1_figure(const std::vector<Exp1Summary>& rows) {
  std::set<std::string> sizes, phases;
  std::set<int> vocabs;
  std::map<std::tuple<std::string, int, std::string>, const Exp1Summary*> at;
  for (const auto& r : rows) {
    sizes.insert(r.model_size);
    phases.insert(r.phase);
    vocabs.insert(r.vocab_size);
    at[{r.model_size, r.vocab_size, r.phase}] = &r;
  }
  Figure fig;
  fig.title = "Surprisal fit to reading times by vocabulary size";
  fig.columns = 2;
  // "trained" first when present, matching the usual reading order.
  std::vector<std::string> phase_order(phases.begin(), phases.end());
  std::sort(phase_order.begin(), phase_order.end(), [](const auto& a, const auto& b) { return a > b; });
  for (const auto& phase : phase_order) {
    Panel dl{"ΔLogLik (" + phase + ")", "|V|", "ΔLogLik", true, true, false, {}};
    Panel pp{"Perplexity (" + phase + ")", "|V|", "word perplexity", true, false, true, {}};
    int color = 0;
    for (const auto& size : sorted_sizes(sizes)) {
      Series d{size, {}, {}, {}, {}, true, size == "average", size == "average" ? 7 : color};
      Series p = d;
      for (int v : vocabs) {
        auto it = at.find({size, v, phase});
        d.x.push_back(v);
        p.x.push_back(v);
        d.y.push_back(it == at.end() ? kNaN : it->second->delta_loglik);
        p.y.push_back(it == at.end() ? kNaN : it->second->perplexity);
      }
      dl.series.push_back(d);
      pp.series.push_back(p);
      if (size != "average") ++color;
    }
    fig.panels.push_back(dl);
    fig.panels.push_back(pp);
  }
  return fig;
}

std::vector<GPETrend> gpe_trends(const std::vector<GPEEstimate>& rows) {
  std::map<std::tuple<std::string, Construction, Region, std::string>, std::map<int, double>> series;
  for (const auto& r : rows) series[{r.model_size, r.construction, r.region, r.unit}][r.vocab_size] = r.effect;
  std::vector<GPETrend> out;
  for (const auto& [key, points] : series) {
    if (points.size() < 3) continue;
    std::vector<int> v;
    std::vector<double> e;
    for (const auto& [vs, eff] : points) {
      v.push_back(vs);
      e.push_back(eff);
    }
    GPETrend t;
    std::tie(t.model_size, t.construction, t.region, t.unit) = key;
    t.points = points.size();
    t.fit = fit_trend(v, e);
    out.push_back(t);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return size_less(a.model_size, b.model_size); });
  return out;
}

void write_gpe_trends_csv(const std::filesystem::path& path, const std::vector<GPETrend>& trends) {
  auto out = open_out(path);
  out << "model_size,construction,region,unit,points,intercept,slope,slope_se,p\n";
  for (const auto& t : trends) {
    out << fmt::format("{},{},{},{},{},{:.6f},{:.6f},{:.6f},{:.6g}\n", t.model_size, to_string(t.construction),
                       to_string(t.region), t.unit, t.points, t.fit.intercept, t.fit.slope, t.fit.slope_se, t.fit.p);
  }
}

Figure gpe_figure(const std::vector<GPEEstimate>& rows, const std::vector<GPETrend>& trends,
                  std::vector<std::string>& warnings) {
  std::set<std::string> sizes;
  std::set<int> vocabs;
  std::set<std::tuple<Construction, Region, std::string>> panels;
  std::map<std::tuple<std::string, int, Construction, Region, std::string>, const GPEEstimate*> at;
  for (const auto& r : rows) {
    sizes.insert(r.model_size);
    vocabs.insert(r.vocab_size);
    panels.insert({r.construction, r.region, r.unit});
    at[{r.model_size, r.vocab_size, r.construction, r.region, r.unit}] = &r;
  }
  std::map<std::tuple<std::string, Construction, Region, std::string>, const GPETrend*> trend_at;
  for (const auto& t : trends) trend_at[{t.model_size, t.construction, t.region, t.unit}] = &t;

  Figure fig;
  fig.title = "Garden-path effects by vocabulary size";
  fig.columns = 3;
  // ms panels sort before bits panels.
  std::vector<std::tuple<Construction, Region, std::string>> order(panels.begin(), panels.end());
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return std::get<2>(a) > std::get<2>(b); });
  for (const auto& [c, region, unit] : order) {
    Panel p;
    p.title = unit == "ms" ? to_string(c) + ", " + to_string(region) : to_string(c) + ", critical (surprisal)";
    p.xlabel = "|V|";
    p.ylabel = unit == "ms" ? "GPE (ms)" : "GPE (bits)";
    p.log2_x = true;
    p.zero_line = true;
    int color = 0;
    for (const auto& size : sorted_sizes(sizes)) {
      Series s{size, {}, {}, {}, {}, true, false, color};
      for (int v : vocabs) {
        s.x.push_back(v);
        auto it = at.find({size, v, c, region, unit});
        if (it == at.end()) {
          warnings.push_back(fmt::format("exp2: no {} estimate for {} |V|={} {} {}", unit, size, v, to_string(c),
                                         to_string(region)));
          s.y.push_back(kNaN);
          s.lo.push_back(kNaN);
          s.hi.push_back(kNaN);
        } else {
          s.y.push_back(it->second->effect);
          s.lo.push_back(it->second->ci_lo);
          s.hi.push_back(it->second->ci_hi);
        }
      }
      p.series.push_back(s);
      if (auto t = trend_at.find({size, c, region, unit}); t != trend_at.end()) {
        const double lo = *vocabs.begin(), hi = *vocabs.rbegin();
        const auto& f = t->second->fit;
        p.series.push_back({size + " trend",
                            {lo, hi},
                            {f.intercept + f.slope * std::log2(lo), f.intercept + f.slope * std::log2(hi)},
                            {},
                            {},
                            false,
                            true,
                            color});
      }
      ++color;
    }
    fig.panels.push_back(p);
  }
  return fig;
}

ReportOutput write_report(const std::filesystem::path& results, const std::filesystem::path& out,
                          const std::map<std::string, std::string>& stamps) {
  const auto exp1 = results / "exp1.csv";
  const auto gpe = results / "gpe.csv";
  const bool has1 = std::filesystem::exists(exp1), has2 = std::filesystem::exists(gpe);
  if (!has1 && !has2) throw ValidationError("no exp1.csv or gpe.csv in " + results.string());
  std::filesystem::create_directories(out);
  ReportOutput r;
  if (has1) {
    const auto rows = read_exp1_csv(exp1);
    write_exp1_csv(out / "exp1_by_corpus.csv", with_size_average(rows));
    const auto summary = summarize_exp1(rows, r.warnings);
    write_exp1_summary_csv(out / "exp1_summary.csv", summary);
    auto fig = exp1_figure(summary);
    fig.stamps = stamps;
    write_svg(out / "exp1_report.svg", fig);
    r.artifacts.insert(r.artifacts.end(),
                       {out / "exp1_by_corpus.csv", out / "exp1_summary.csv", out / "exp1_report.svg"});
  }
  if (has2) {
    const auto rows = read_gpe_csv(gpe);
    const auto trends = gpe_trends(rows);
    write_gpe_trends_csv(out / "gpe_trends.csv", trends);
    auto fig = gpe_figure(rows, trends, r.warnings);
    fig.stamps = stamps;
    write_svg(out / "gpe_report.svg", fig);
    r.artifacts.insert(r.artifacts.end(), {out / "gpe_trends.csv", out / "gpe_report.svg"});
  }
  return r;
}

}  // namespace tokgran
