#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <istream>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "abdex/error.hpp"
#include "abdex/explainer.hpp"

namespace abdex {

// ---------------------------------------------------------------------------
// CSV primitives
// ---------------------------------------------------------------------------

// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// Splits one CSV record; double quotes group fields and "" escapes a quote.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

// ---------------------------------------------------------------------------
// Instances
// ---------------------------------------------------------------------------

struct InstanceSet {
  std::vector<std::vector<double>> rows;
  std::optional<std::vector<long>> labels;
  std::vector<std::size_t> lines;  // source line of each row
  std::string source;

  std::size_t size() const { return rows.size(); }

  void check_width(std::size_t n) const {
    for (std::size_t r = 0; r < rows.size(); ++r)
      if (rows[r].size() != n)
        throw InputError(source + ": row " + std::to_string(r) + " (line " +
                         std::to_string(lines[r]) + ") has " + std::to_string(rows[r].size()) +
                         " values, model expects " + std::to_string(n));
  }
};

namespace detail {

inline std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

}  // namespace detail

// Numeric CSV, one instance per line. A first line with any non-numeric cell
// is a header; a header column named label, class or target holds integer
// labels and is not a feature. Blank lines are skipped.
inline InstanceSet parse_instances(std::istream& in, const std::string& source = "<input>") {
  InstanceSet set;
  set.source = source;
  std::optional<std::size_t> label_col;
  std::optional<std::size_t> width;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (detail::trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (first) {
      first = false;
      const bool header = std::any_of(cells.begin(), cells.end(),
                                      [](const std::string& c) { return !parse_double(c); });
      if (header) {
        for (std::size_t c = 0; c < cells.size(); ++c) {
          const std::string name = detail::lower(detail::trim(cells[c]));
          if (name == "label" || name == "class" || name == "target") label_col = c;
        }
        width = cells.size();
        if (label_col) set.labels.emplace();
        continue;
      }
    }
    if (width && cells.size() != *width)
      throw InputError(source + ": line " + std::to_string(line_no) + " has " +
                       std::to_string(cells.size()) + " columns, expected " +
                       std::to_string(*width));
    width = cells.size();
    std::vector<double> row;
    row.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto v = parse_double(cells[c]);
      if (!v || !std::isfinite(*v))
        throw InputError(source + ": line " + std::to_string(line_no) + ", column " +
                         std::to_string(c + 1) + ": '" + detail::trim(cells[c]) +
                         "' is not a finite number");
      if (label_col && c == *label_col) {
        if (*v != std::floor(*v))
          throw InputError(source + ": line " + std::to_string(line_no) + ", column " +
                           std::to_string(c + 1) + ": label must be an integer");
        set.labels->push_back(static_cast<long>(*v));
      } else {
        row.push_back(*v);
      }
    }
    set.rows.push_back(std::move(row));
    set.lines.push_back(line_no);
  }
  return set;
}

inline InstanceSet ingest_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open instance file '" + path + "'");
  return parse_instances(in, path);
}

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

// Calls fn(i) for i in [0, n) on up to `jobs` threads; the first exception
// is rethrown after all workers stop.
template <class Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
          next.store(n);
          return;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

struct InstanceRun {
  std::size_t index = 0;
  ExplainResult result;
};

// One mode over a set of instances.
struct RunRecord {
  std::string dataset;
  std::string network;
  ExplainMode mode = ExplainMode::improved;
  std::vector<InstanceRun> runs;

  ExplainStats aggregate() const {
    ExplainStats s;
    for (const auto& r : runs) s += r.result.stats;
    return s;
  }
};

inline RunRecord run_mode(const Explainer& ex, const InstanceSet& set, ExplainMode mode,
                          std::size_t jobs = 1, std::string dataset = {},
                          std::string network = {}) {
  set.check_width(ex.network().input_dim());
  RunRecord rec{std::move(dataset), std::move(network), mode, {}};
  rec.runs.resize(set.size());
  parallel_for(set.size(), jobs, [&](std::size_t i) {
    try {
      rec.runs[i] = {i, ex.explain(set.rows[i], mode)};
    } catch (const TiedPredictionError& e) {
      throw TiedPredictionError(set.source + ": row " + std::to_string(i) + " (line " +
                                std::to_string(set.lines[i]) + "): " + e.what());
    } catch (const InputError& e) {
      throw InputError(set.source + ": row " + std::to_string(i) + " (line " +
                       std::to_string(set.lines[i]) + "): " + e.what());
    }
  });
  return rec;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

inline std::string join_indices(const std::vector<std::size_t>& idx) {
  std::string s;
  for (std::size_t i = 0; i < idx.size(); ++i) s += (i ? ";" : "") + std::to_string(idx[i]);
  return s;
}

inline std::string join_decisions(const std::vector<Decision>& ds) {
  std::string s;
  for (std::size_t i = 0; i < ds.size(); ++i) s += (i ? ";" : "") + std::string(to_string(ds[i]));
  return s;
}

inline constexpr const char* kExplainHeader =
    "instance,mode,predicted,kept,decisions,total_s,solver_s,solver_calls,box_shortcut_hits,"
    "timeouts,bounds_tightened_pct,bin_vars_removed_before_pct,bin_vars_removed_ours_pct";

inline void write_explain_rows(std::ostream& os, const RunRecord& rec) {
  for (const auto& r : rec.runs) {
    const auto& e = r.result.explanation;
    const auto& s = r.result.stats;
    os << r.index << ',' << to_string(rec.mode) << ',' << e.target << ','
       << join_indices(e.kept_indices()) << ',' << join_decisions(e.decisions) << ','
       << format_double(s.total_time) << ',' << format_double(s.solver_time) << ','
       << s.solver_calls << ',' << s.box_shortcut_hits << ',' << s.timeouts << ','
       << format_double(s.bounds_tightened_pct()) << ','
       << format_double(s.bin_vars_removed_before_pct()) << ','
       << format_double(s.bin_vars_removed_ours_pct()) << '\n';
  }
}

// One line of the baseline-versus-improved comparison. `instance` is the
// row index, or "all" for the aggregate.
struct BenchRow {
  std::string dataset;
  std::string network;
  std::string instance;
  double exp_s_baseline = 0.0;
  double exp_s_ours = 0.0;
  double solver_s_baseline = 0.0;
  double solver_s_ours = 0.0;
  double bounds_tightened_pct = 0.0;
  double bin_vars_removed_before_pct = 0.0;
  double bin_vars_removed_ours_pct = 0.0;
  std::size_t box_shortcut_hits = 0;
  std::size_t solver_calls_baseline = 0;
  std::size_t solver_calls_ours = 0;
  std::size_t timeouts_baseline = 0;
  std::size_t timeouts_ours = 0;
  std::string kept_baseline;
  std::string kept_ours;

  friend bool operator==(const BenchRow&, const BenchRow&) = default;
};

inline constexpr const char* kBenchHeader =
    "dataset,network,instance,exp_s_baseline,exp_s_ours,solver_s_baseline,solver_s_ours,"
    "bounds_tightened_pct,bin_vars_removed_before_pct,bin_vars_removed_ours_pct,"
    "box_shortcut_hits,solver_calls_baseline,solver_calls_ours,timeouts_baseline,timeouts_ours,"
    "kept_baseline,kept_ours";

// Percentages come from the improved run: they describe the encodings its
// solver calls actually saw.
inline BenchRow make_bench_row(std::string dataset, std::string network, std::string instance,
                               const ExplainStats& base, const ExplainStats& ours,
                               std::string kept_base = {}, std::string kept_ours = {}) {
  BenchRow r;
  r.dataset = std::move(dataset);
  r.network = std::move(network);
  r.instance = std::move(instance);
  r.exp_s_baseline = base.total_time;
  r.exp_s_ours = ours.total_time;
  r.solver_s_baseline = base.solver_time;
  r.solver_s_ours = ours.solver_time;
  r.bounds_tightened_pct = ours.bounds_tightened_pct();
  r.bin_vars_removed_before_pct = ours.bin_vars_removed_before_pct();
  r.bin_vars_removed_ours_pct = ours.bin_vars_removed_ours_pct();
  r.box_shortcut_hits = ours.box_shortcut_hits;
  r.solver_calls_baseline = base.solver_calls;
  r.solver_calls_ours = ours.solver_calls;
  r.timeouts_baseline = base.timeouts;
  r.timeouts_ours = ours.timeouts;
  r.kept_baseline = std::move(kept_base);
  r.kept_ours = std::move(kept_ours);
  return r;
}

// Per-instance rows followed by an aggregate row; no rows at all for an
// empty instance set.
inline std::vector<BenchRow> bench_rows(const RunRecord& base, const RunRecord& ours) {
  if (base.runs.size() != ours.runs.size())
    throw InputError("bench: baseline and improved runs cover different instances");
  std::vector<BenchRow> rows;
  for (std::size_t i = 0; i < base.runs.size(); ++i) {
    const auto& b = base.runs[i].result;
    const auto& o = ours.runs[i].result;
    rows.push_back(make_bench_row(ours.dataset, ours.network, std::to_string(base.runs[i].index),
                                  b.stats, o.stats,
                                  join_indices(b.explanation.kept_indices()),
                                  join_indices(o.explanation.kept_indices())));
  }
  if (!rows.empty())
    rows.push_back(make_bench_row(ours.dataset, ours.network, "all", base.aggregate(),
                                  ours.aggregate()));
  return rows;
}

inline void write_bench_row(std::ostream& os, const BenchRow& r) {
  os << csv_field(r.dataset) << ',' << csv_field(r.network) << ',' << csv_field(r.instance) << ','
     << format_double(r.exp_s_baseline) << ',' << format_double(r.exp_s_ours) << ','
     << format_double(r.solver_s_baseline) << ',' << format_double(r.solver_s_ours) << ','
     << format_double(r.bounds_tightened_pct) << ','
     << format_double(r.bin_vars_removed_before_pct) << ','
     << format_double(r.bin_vars_removed_ours_pct) << ',' << r.box_shortcut_hits << ','
     << r.solver_calls_baseline << ',' << r.solver_calls_ours << ',' << r.timeouts_baseline
     << ',' << r.timeouts_ours << ',' << r.kept_baseline << ',' << r.kept_ours << '\n';
}

inline void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
  os << kBenchHeader << '\n';
  for (const auto& r : rows) write_bench_row(os, r);
}

// Reads back what write_bench_csv produced.
inline std::vector<BenchRow> parse_bench_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kBenchHeader)
    throw InputError("bench CSV: missing or unexpected header");
  std::vector<BenchRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 17)
      throw InputError("bench CSV: line " + std::to_string(line_no) + " has " +
                       std::to_string(c.size()) + " fields");
    auto num = [&](std::size_t i) {
      const auto v = parse_double(c[i]);
      if (!v)
        throw InputError("bench CSV: line " + std::to_string(line_no) + ", column " +
                         std::to_string(i + 1) + " is not a number");
      return *v;
    };
    auto count = [&](std::size_t i) { return static_cast<std::size_t>(num(i)); };
    BenchRow r;
    r.dataset = c[0];
    r.network = c[1];
    r.instance = c[2];
    r.exp_s_baseline = num(3);
    r.exp_s_ours = num(4);
    r.solver_s_baseline = num(5);
    r.solver_s_ours = num(6);
    r.bounds_tightened_pct = num(7);
    r.bin_vars_removed_before_pct = num(8);
    r.bin_vars_removed_ours_pct = num(9);
    r.box_shortcut_hits = count(10);
    r.solver_calls_baseline = count(11);
    r.solver_calls_ours = count(12);
    r.timeouts_baseline = count(13);
    r.timeouts_ours = count(14);
    r.kept_baseline = c[15];
    r.kept_ours = c[16];
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace abdex
