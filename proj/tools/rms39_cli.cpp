// rms39: run scenarios, compute metrics, plot and compare traces, and emit
// synthetic demand and wind profiles.

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "rms39/metrics.hpp"
#include "rms39/plot.hpp"
#include "rms39/profiles.hpp"
#include "rms39/simulator.hpp"

using namespace rms39;
namespace fs = std::filesystem;

namespace {

struct Options {
  std::string scenario;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<double> step;
  std::optional<double> duration;
  std::string controller;
  double band = MetricOptions{}.band;
  double rocof_window = MetricOptions{}.rocof_window;
  std::vector<std::string> traces;
  std::vector<std::string> columns;
  std::vector<std::string> labels;
  std::string output;
  std::string title;
  double t_min = -INFINITY, t_max = INFINITY;
  std::optional<double> trip;
};

MetricOptions metric_options(const Options& o) {
  MetricOptions m;
  m.band = o.band;
  m.rocof_window = o.rocof_window;
  return m;
}

Scenario scenario_with_overrides(const Options& o) {
  Scenario sc = load_scenario(o.scenario);
  if (o.seed) sc.seed = *o.seed;
  if (o.step) sc.step = *o.step;
  if (o.duration) sc.duration = *o.duration;
  if (!o.controller.empty()) sc.controller = parse_controller(o.controller);
  sc.validate();
  return sc;
}

std::string stem(const std::string& path) { return fs::path(path).stem().string(); }

nlohmann::json trace_report(const Trace& tr, double trip, const MetricOptions& opts) {
  nlohmann::json j;
  j["frequency"] = to_json(compute_metrics(tr, trip, opts));
  j["converter"] = to_json(summarize_converter(tr, trip));
  return j;
}

double trip_of(const Trace& tr, const Options& o) { return o.trip ? *o.trip : tr.trip_time(); }

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw ScenarioError(path.string(), "cannot write report");
  out << j.dump(2) << '\n';
}

int cmd_run(const Options& o) {
  const Scenario sc = scenario_with_overrides(o);
  System sys(sc);
  const Trace tr = sys.run();
  fs::create_directories(o.out_dir);
  const std::string name = sc.name.empty() ? stem(o.scenario) : sc.name;
  const fs::path trace_path = fs::path(o.out_dir) / (name + ".csv");
  write_trace(trace_path.string(), tr);
  auto report = trace_report(tr, sc.trip_time(), metric_options(o));
  report["scenario"] = name;
  report["max_balance_residual_pu"] = sys.max_balance_residual();
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : sys.event_log())
    events.push_back({{"time_s", e.time}, {"event", e.description}, {"lost_mw", e.lost_mw}, {"applied", e.applied}});
  report["events"] = events;
  report["warnings"] = sys.warnings();
  write_json(fs::path(o.out_dir) / (name + "_metrics.json"), report);
  std::cout << trace_path.string() << '\n' << report.dump(2) << '\n';
  return 0;
}

int cmd_metrics(const Options& o) {
  const Trace tr = read_trace(o.traces.at(0));
  const auto report = trace_report(tr, trip_of(tr, o), metric_options(o));
  if (!o.output.empty()) write_json(o.output, report);
  std::cout << report.dump(2) << '\n';
  return 0;
}

int cmd_plot(const Options& o) {
  std::vector<Trace> traces;
  for (const auto& p : o.traces) traces.push_back(read_trace(p));
  std::vector<std::string> columns = o.columns;
  if (columns.empty()) {
    for (const char* c : {"f_coi_pu", "p_conv_pu", "q_conv_pu", "v_pcc_pu", "v_dc_V", "soc"})
      if (traces.front().has_column(c)) columns.emplace_back(c);
  }
  std::vector<std::string> labels = o.labels;
  for (std::size_t k = labels.size(); k < o.traces.size(); ++k) labels.push_back(stem(o.traces[k]));
  std::vector<const Trace*> ptrs;
  for (const auto& t : traces) ptrs.push_back(&t);
  PlotOptions po;
  po.title = o.title;
  po.t_min = o.t_min;
  po.t_max = o.t_max;
  const std::string out = o.output.empty() ? (fs::path(o.out_dir) / (stem(o.traces.front()) + ".svg")).string()
                                           : o.output;
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  write_svg(out, render_svg(ptrs, labels, columns, po));
  std::cout << out << '\n';
  return 0;
}

int cmd_compare(const Options& o) {
  const Trace a = read_trace(o.traces.at(0));
  const Trace b = read_trace(o.traces.at(1));
  const auto ra = trace_report(a, trip_of(a, o), metric_options(o));
  const auto rb = trace_report(b, trip_of(b, o), metric_options(o));
  const auto delta = compare_metrics(ra, rb);
  std::printf("%-32s %14s %14s %14s\n", "metric", "a", "b", "a - b");
  for (const auto& [group, entries] : delta.items()) {
    for (const auto& [key, d] : entries.items()) {
      std::printf("%-32s %14.6g %14.6g %14.6g\n", (group + "." + key).c_str(), ra[group][key].get<double>(),
                  rb[group][key].get<double>(), d.get<double>());
    }
  }
  if (!o.output.empty()) write_json(o.output, {{"a", o.traces[0]}, {"b", o.traces[1]}, {"delta", delta}});
  return 0;
}

int cmd_profiles(const Options& o) {
  Scenario sc = scenario_with_overrides(o);
  sc.profiles.load = "synthetic";
  sc.profiles.wind = "synthetic";
  System sys(sc);
  const fs::path dir(o.out_dir);
  fs::create_directories(dir / "loads");
  int n = 0;
  for (const auto& l : sys.loads()) {
    write_load_profile((dir / "loads" / load_profile_name(l.bus_id)).string(), l.profile);
    ++n;
  }
  if (!sys.wind().empty()) fs::create_directories(dir / "wind");
  for (const auto& w : sys.wind()) {
    write_wind_profile((dir / "wind" / wind_profile_name(w.plant.params.id)).string(), w.profile);
    ++n;
  }
  std::cout << "wrote " << n << " profiles under " << dir.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phasor-domain simulator of the 39-bus system with wind plants and a battery converter"};
  app.require_subcommand(1);
  Options o;

  auto add_metric_flags = [&](CLI::App* c) {
    c->add_option("--band", o.band, "settling band around the final value, pu")->check(CLI::PositiveNumber);
    c->add_option("--rocof-window", o.rocof_window, "ROCOF regression window, s")->check(CLI::PositiveNumber);
    c->add_option("--trip", o.trip, "trip time, s (default: from the trace header)");
  };

  auto* run = app.add_subcommand("run", "run a scenario and write its trace and metrics");
  run->add_option("scenario,--scenario", o.scenario, "scenario JSON file")->required()->check(CLI::ExistingFile);
  run->add_option("--out-dir", o.out_dir, "output directory");
  run->add_option("--seed", o.seed, "override the scenario seed");
  run->add_option("--step", o.step, "override the integration step, s");
  run->add_option("--duration", o.duration, "override the run length, s");
  run->add_option("--controller", o.controller, "battery controller")->check(CLI::IsMember({"following", "forming"}));
  run->add_option("--band", o.band, "settling band, pu")->check(CLI::PositiveNumber);
  run->add_option("--rocof-window", o.rocof_window, "ROCOF window, s")->check(CLI::PositiveNumber);

  auto* metrics = app.add_subcommand("metrics", "frequency and converter metrics of a trace");
  metrics->add_option("trace", o.traces, "trace CSV")->required()->expected(1)->check(CLI::ExistingFile);
  metrics->add_option("-o,--output", o.output, "also write the JSON report here");
  add_metric_flags(metrics);

  auto* plot = app.add_subcommand("plot", "SVG overlay of one or more traces");
  plot->add_option("traces", o.traces, "trace CSV files")->required()->check(CLI::ExistingFile);
  plot->add_option("--columns", o.columns, "columns to plot, one panel each")->delimiter(',');
  plot->add_option("--labels", o.labels, "legend labels")->delimiter(',');
  plot->add_option("-o,--output", o.output, "SVG file");
  plot->add_option("--out-dir", o.out_dir, "directory for the default output name");
  plot->add_option("--title", o.title, "figure title");
  plot->add_option("--t-min", o.t_min, "start of the time axis, s");
  plot->add_option("--t-max", o.t_max, "end of the time axis, s");

  auto* compare = app.add_subcommand("compare", "metric deltas a - b between two traces");
  compare->add_option("traces", o.traces, "two trace CSV files")->required()->expected(2)->check(CLI::ExistingFile);
  compare->add_option("-o,--output", o.output, "also write the deltas as JSON");
  add_metric_flags(compare);

  auto* profiles = app.add_subcommand("profiles", "write seeded synthetic load and wind profiles");
  profiles->add_option("--scenario", o.scenario, "scenario JSON file")->required()->check(CLI::ExistingFile);
  profiles->add_option("--out-dir", o.out_dir, "output directory")->required();
  profiles->add_option("--seed", o.seed, "override the scenario seed");
  profiles->add_option("--duration", o.duration, "profile length, s");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(o);
    if (*metrics) return cmd_metrics(o);
    if (*plot) return cmd_plot(o);
    if (*compare) return cmd_compare(o);
    if (*profiles) return cmd_profiles(o);
  } catch (const ScenarioError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const SimulationAbort& e) {
    std::cerr << "simulation aborted: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
