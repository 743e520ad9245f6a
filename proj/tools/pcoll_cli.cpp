#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "pcoll/harness.hpp"
#include "pcoll/verify.hpp"

using namespace pcoll;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitViolation = 2;
constexpr int kExitDivergence = 3;

// run-config flags are spelled like the config keys with '.' and '_' as '-'
std::string flag_name(std::string key) {
  for (char& ch : key) {
    if (ch == '.' || ch == '_') ch = '-';
  }
  return "--" + key;
}

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;
  std::string format = "table";

  void add_to(CLI::App* app) {
    app->add_option("--config", config_file, "key = value config file")->check(CLI::ExistingFile);
    app->add_option("--set", sets, "override one setting, key=value")->take_all();
    for (const auto& key : config_keys()) {
      app->add_option(flag_name(key), flags[key], "config key " + key);
    }
    app->add_option("--format", format, "stdout format")->check(CLI::IsMember({"table", "csv", "json"}));
  }

  RunConfig build() const {
    RunConfig c;
    if (!config_file.empty()) load_config(config_file, c);
    for (const auto& key : config_keys()) {
      const auto& v = flags.at(key);
      if (!v.empty()) apply_setting(c, key, v);
    }
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw Error(ErrorCode::config_invalid, "--set expects key=value, got '" + s + "'");
      apply_setting(c, s.substr(0, eq), s.substr(eq + 1));
    }
    c.validate();
    return c;
  }
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path);
  out << text;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void print_summary(const BenchSummary& s, const std::string& format) {
  if (format == "csv") {
    std::cout << summary_csv(s);
  } else if (format == "json") {
    std::cout << summary_json(s) << '\n';
  } else {
    std::cout << summary_table(s);
  }
}

int run_bench(const Common& opt) {
  const RunConfig c = opt.build();
  const auto recs = bench_collectives(c);
  const auto s = summarize(recs);
  if (!c.output.empty()) {
    write_file(c.output + ".csv", bench_csv(recs));
    write_file(c.output + ".jsonl", bench_json_lines(recs));
    write_file(c.output + ".summary.csv", summary_csv(s));
  }
  print_summary(s, opt.format);
  return kExitOk;
}

int run_train(const Common& opt) {
  RunConfig c = opt.build();
  c.train.keep_metrics = c.train.keep_metrics || !c.output.empty();
  const auto rep = run_training(c);
  if (!c.output.empty()) {
    write_file(c.output + ".epochs.csv", epochs_csv(rep));
    write_file(c.output + ".metrics.jsonl", metrics_json_lines(rep));
  }
  if (opt.format == "csv") {
    std::cout << epochs_csv(rep);
  } else if (opt.format == "json") {
    std::cout << metrics_json_lines(rep);
  } else {
    std::cout << training_table(rep);
  }
  return kExitOk;
}

struct VerifyOpts {
  std::string suite = "all";
  std::size_t configs = 500;
  std::uint64_t seed = 1;
  std::size_t rounds = 100;
  double alpha = 0.01;
};

int run_verify(const VerifyOpts& v) {
  std::vector<SuiteResult> results;
  const bool all = v.suite == "all";
  if (all || v.suite == "contract") results.push_back(contract_suite(v.configs, v.seed));
  if (all || v.suite == "interleave") results.push_back(interleaving_suite());
  if (all || v.suite == "conservation") results.push_back(conservation_suite(v.rounds));
  if (all || v.suite == "drift") results.push_back(drift_suite(v.alpha));
  bool ok = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << "  cases=" << r.cases << " violations=" << r.violations;
    if (!r.detail.empty()) std::cout << "  " << r.detail;
    std::cout << '\n';
    ok = ok && r.passed;
  }
  return ok ? kExitOk : kExitViolation;
}

int run_report(const std::vector<std::string>& files, const std::string& format) {
  std::vector<BenchRecord> all;
  for (const auto& f : files) {
    auto recs = parse_bench_csv(read_file(f));
    all.insert(all.end(), recs.begin(), recs.end());
  }
  print_summary(summarize(all), format);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"partial allreduce and eager-SGD driver"};
  app.require_subcommand(1);

  Common bench_opt, train_opt;
  auto* bench = app.add_subcommand("bench", "collective latency microbenchmark");
  bench_opt.add_to(bench);
  auto* train = app.add_subcommand("train", "eager-SGD training run");
  train_opt.add_to(train);

  VerifyOpts vopt;
  auto* verify = app.add_subcommand("verify", "invariant suites");
  verify->add_option("--suite", vopt.suite)->check(CLI::IsMember({"all", "contract", "interleave", "conservation", "drift"}));
  verify->add_option("--configs", vopt.configs, "randomized configurations for the contract suite");
  verify->add_option("--seed", vopt.seed);
  verify->add_option("--rounds", vopt.rounds, "rounds for conservation");
  verify->add_option("--alpha", vopt.alpha, "base step size for drift");

  std::vector<std::string> report_files;
  std::string report_format = "table";
  auto* report = app.add_subcommand("report", "summarize bench CSV files");
  report->add_option("files", report_files)->required()->check(CLI::ExistingFile);
  report->add_option("--format", report_format)->check(CLI::IsMember({"table", "csv", "json"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (bench->parsed()) return run_bench(bench_opt);
    if (train->parsed()) return run_train(train_opt);
    if (verify->parsed()) return run_verify(vopt);
    return run_report(report_files, report_format);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (e.code() == ErrorCode::divergence || e.code() == ErrorCode::non_finite) return kExitDivergence;
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}
