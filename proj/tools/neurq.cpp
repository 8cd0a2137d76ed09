// neurq: SQL shell, plan explainers, CSV loader and benchmark runner.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "neurq/bench.hpp"
#include "neurq/common/error.hpp"
#include "neurq/session.hpp"

using namespace neurq;

namespace {

/// Splits on `;` outside single-quoted strings and `--` comments.
std::vector<std::string> split_statements(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (!quoted && c == '-' && i + 1 < text.size() && text[i + 1] == '-') {
      while (i < text.size() && text[i] != '\n') ++i;
      cur += '\n';
      continue;
    }
    if (c == '\'') quoted = !quoted;
    if (c == ';' && !quoted) {
      if (cur.find_first_not_of(" \t\r\n") != std::string::npos) out.push_back(cur);
      cur.clear();
      continue;
    }
    cur += c;
  }
  if (cur.find_first_not_of(" \t\r\n") != std::string::npos) out.push_back(cur);
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Value parse_param(const std::string& v) {
  try {
    size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used == v.size()) return static_cast<int64_t>(i);
  } catch (const std::exception&) {
  }
  try {
    size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  return v;
}

std::string render_error(const std::exception& e) {
  if (auto* s = dynamic_cast<const SyntaxError*>(&e)) return "syntax error at " + s->rendered();
  if (auto* i = dynamic_cast<const InfeasibleError*>(&e)) {
    std::ostringstream os;
    os << e.what() << " (closest: latency=" << i->best().latency << "ms quality=" << i->best().quality << ")";
    return os.str();
  }
  return e.what();
}

struct DbOptions {
  std::vector<std::string> init;  // SQL scripts
  std::vector<std::string> csv;   // table=path
  std::vector<std::string> params;
  std::string config;             // executor key = value file
  std::string objective;
  std::string tenant;
  size_t engines = 0;

  void add(CLI::App* app) {
    app->add_option("--init", init, "SQL script run first (repeatable)")->check(CLI::ExistingFile);
    app->add_option("--csv", csv, "load CSV into a table: table=path (repeatable)");
    app->add_option("-p,--param", params, "bind parameter NAME=value (repeatable)");
    app->add_option("--config", config, "executor config file")->check(CLI::ExistingFile);
    app->add_option("--objective", objective, "quality>=Q or latency<=Lms");
    app->add_option("--tenant", tenant, "bind and run as this tenant");
    app->add_option("--engines", engines, "engine count override");
  }

  SessionConfig session_config() const {
    SessionConfig sc;
    if (!config.empty()) sc.exec = load_executor_config(config, sc.exec);
    if (engines > 0) sc.exec.engines = engines;
    if (!objective.empty()) sc.objective = Objective::parse(objective);
    return sc;
  }

  sql::BindOptions bind_options() const {
    sql::BindOptions o;
    for (const auto& p : params) {
      const auto eq = p.find('=');
      if (eq == std::string::npos) throw std::runtime_error("parameter must be NAME=value: " + p);
      o.parameters[p.substr(0, eq)] = parse_param(p.substr(eq + 1));
    }
    if (!tenant.empty()) o.tenant = tenant;
    return o;
  }

  void load(Session& s) const {
    for (const auto& path : init)
      for (const auto& stmt : split_statements(read_file(path))) s.execute(stmt, bind_options());
    for (const auto& spec : csv) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos) throw std::runtime_error("--csv takes table=path: " + spec);
      const auto table = s.catalog().find_table(spec.substr(0, eq));
      if (!table) throw std::runtime_error("unknown table " + spec.substr(0, eq));
      std::ifstream f(spec.substr(eq + 1));
      if (!f) throw std::runtime_error("cannot read " + spec.substr(eq + 1));
      s.catalog().load_csv(*table, f);
    }
  }
};

std::string query_text(const std::string& inline_sql, const std::string& file) {
  if (!inline_sql.empty()) return inline_sql;
  if (!file.empty()) return read_file(file);
  std::stringstream ss;
  ss << std::cin.rdbuf();
  return ss.str();
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot write " + out);
  f << text;
}

int run_shell(const DbOptions& db, const std::string& file, bool metrics) {
  Session s(db.session_config());
  db.load(s);
  const std::string text = file.empty() ? query_text("", "") : read_file(file);
  int failures = 0;
  for (const auto& stmt : split_statements(text)) {
    try {
      auto r = s.execute(stmt, db.bind_options());
      if (!r.message.empty()) std::cout << r.message << "\n";
      if (r.rows) std::cout << *r.rows << "\n";
      if (metrics && r.metrics) std::cout << r.metrics->to_json() << "\n";
    } catch (const std::exception& e) {
      std::cout << "error: " << render_error(e) << "\n";
      ++failures;
    }
  }
  return failures ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neurq: AI and relational queries in one engine"};
  app.require_subcommand(1);

  DbOptions db;
  std::string sql_text, sql_file, out;

  auto* shell = app.add_subcommand("shell", "execute SQL statements from a file or stdin");
  db.add(shell);
  bool show_metrics = false;
  shell->add_option("-f,--file", sql_file, "SQL script (default: stdin)");
  shell->add_flag("--metrics", show_metrics, "print executor metrics after each query");

  auto* explain = app.add_subcommand("explain", "print the rewritten logical plan with fingerprints");
  db.add(explain);
  explain->add_option("-e,--sql", sql_text, "query text (default: stdin)");
  explain->add_option("-f,--file", sql_file, "query file");

  auto* explain_phys = app.add_subcommand("explain-physical", "print the chosen physical plan with cost and quality");
  db.add(explain_phys);
  explain_phys->add_option("-e,--sql", sql_text, "query text (default: stdin)");
  explain_phys->add_option("-f,--file", sql_file, "query file");

  auto* load_csv = app.add_subcommand("load-csv", "load CSV files into tables and report row counts");
  db.add(load_csv);

  auto* bench = app.add_subcommand("bench", "run workload R or T on the virtual-time executor");
  BenchConfig bc;
  std::string workload = "R", policy = "fixed", sharing = "full", scale = "desk", format = "json", bench_config,
              objective;
  std::vector<size_t> sweep;
  size_t engines = 0, tenants = 0, rows = 0, queries = 0, batch_items = 8;
  double window = 10;
  bench->add_option("--workload", workload, "R or T")->check(CLI::IsMember({"R", "T", "r", "t"}));
  bench->add_option("--engines", engines, "engine count");
  bench->add_option("--sweep-engines", sweep, "run once per engine count, e.g. 1 2 4 8 16");
  bench->add_option("--tenants", tenants, "tenant count");
  bench->add_option("--policy", policy, "fixed or bucket")->check(CLI::IsMember({"fixed", "bucket"}));
  bench->add_option("--batch-items", batch_items, "max items per micro-batch");
  bench->add_option("--window-ms", window, "batch window");
  bench->add_option("--sharing", sharing, "per_task_model, shared_model, full or baseline")
      ->check(CLI::IsMember({"per_task_model", "shared_model", "full", "baseline"}));
  bench->add_flag("--sequential", bc.sequential, "admit one query at a time");
  bench->add_option("--scale", scale, "desk or full")->check(CLI::IsMember({"desk", "full"}));
  bench->add_option("--rows", rows, "row count override (R: table, T: per tenant)");
  bench->add_option("--queries", queries, "R: total queries; T: queries per tenant");
  bench->add_option("--seed", bc.seed, "generator and injection seed");
  bench->add_option("--objective", objective, "quality>=Q or latency<=Lms");
  bench->add_option("--export-latency-ms", bc.export_latency_ms, "baseline per-dispatch export cost");
  bench->add_option("--config", bench_config, "executor config file")->check(CLI::ExistingFile);
  bench->add_option("--format", format, "json or csv")->check(CLI::IsMember({"json", "csv"}));

  for (auto* sub : {shell, explain, explain_phys, load_csv, bench}) sub->add_option("--out", out, "write output here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*shell) return run_shell(db, sql_file, show_metrics);
    if (*explain) {
      Session s(db.session_config());
      db.load(s);
      emit(s.explain(query_text(sql_text, sql_file), db.bind_options()), out);
      return 0;
    }
    if (*explain_phys) {
      Session s(db.session_config());
      db.load(s);
      emit(s.explain_physical(query_text(sql_text, sql_file), db.bind_options()) + "\n", out);
      return 0;
    }
    if (*load_csv) {
      Session s(db.session_config());
      db.load(s);
      std::ostringstream os;
      for (TableId t : s.catalog().tables()) {
        const auto& def = s.catalog().table_def(t);
        os << def.name << ": " << s.catalog().stats(t, s.catalog().current_version()).row_count << " rows\n";
      }
      os << "version " << s.catalog().current_version().value << "\n";
      emit(os.str(), out);
      return 0;
    }
    if (*bench) {
      const bool t = workload == "T" || workload == "t";
      BenchConfig base = t ? BenchConfig::desk_t() : BenchConfig::desk_r();
      base.sequential = bc.sequential;
      base.seed = bc.seed;
      base.export_latency_ms = bc.export_latency_ms;
      if (!bench_config.empty()) base.exec = load_executor_config(bench_config, base.exec);
      if (scale == "full") base.rows = t ? BenchConfig::kFullRowsT : BenchConfig::kFullRowsR;
      if (rows) base.rows = rows;
      if (queries) base.queries = queries;
      if (tenants) base.tenants = tenants;
      if (engines) base.engines = engines;
      base.policy = policy == "fixed" ? BatchPolicy::fixed(batch_items, window)
                                      : BatchPolicy::bucket({32}, batch_items, window, 200);
      base.sharing = *parse_sharing_mode(sharing);
      if (!objective.empty()) base.objective = Objective::parse(objective);
      if (sweep.empty()) sweep.push_back(base.engines);

      std::string text;
      if (format == "csv") text = Metrics::csv_header();
      std::vector<std::string> docs;
      for (size_t e : sweep) {
        BenchConfig c = base;
        c.engines = e;
        const BenchReport r = run_bench(c);
        if (format == "csv") {
          const std::string csv = r.to_csv();
          text += csv.substr(csv.find('\n') + 1);
        } else {
          docs.push_back(r.to_json());
        }
      }
      if (format == "json") {
        if (docs.size() == 1) {
          text = docs[0] + "\n";
        } else {
          text = "[\n";
          for (size_t i = 0; i < docs.size(); ++i) text += docs[i] + (i + 1 < docs.size() ? ",\n" : "\n");
          text += "]\n";
        }
      }
      emit(text, out);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << render_error(e) << "\n";
    return 1;
  }
  return 0;
}
