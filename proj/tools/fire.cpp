// fire: train tree ensembles, compute FIRE regularization paths, extract
// sparse rule sets and benchmark block selection rules.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "fire/fire.hpp"

#ifndef FIRE_VERSION
#define FIRE_VERSION "dev"
#endif

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw fire::invalid_input("cannot open '" + path + "' for hashing");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

struct Manifest {
  json doc;
  Clock::time_point start = Clock::now();

  Manifest(const std::string& command, const std::vector<std::string>& argv) {
    doc = {{"command", command},
           {"version", FIRE_VERSION},
           {"argv", argv},
           {"params", json::object()},
           {"input_digests", json::object()},
           {"outputs", json::array()}};
  }

  void input(const std::string& path) { doc["input_digests"][path] = sha256_file(path); }
  void output(const std::string& path) { doc["outputs"].push_back(path); }

  void write(const std::string& path) {
    doc["wall_time_seconds"] =
        std::chrono::duration<double>(Clock::now() - start).count();
    fire::write_text_file(path, doc.dump(1) + "\n");
  }
};

fire::Selection parse_selection(const std::string& s) {
  if (s == "greedy") return fire::Selection::greedy;
  if (s == "cyclic") return fire::Selection::cyclic;
  return fire::Selection::random;
}

fire::PenaltyKind parse_penalty(const std::string& s) {
  return s == "l1" ? fire::PenaltyKind::l1 : fire::PenaltyKind::mcp;
}

std::vector<double> centered(const fire::Dataset& d, double mean) {
  std::vector<double> y(d.target);
  for (auto& v : y) v -= mean;
  return y;
}

struct SolverFlags {
  std::string selection = "greedy";
  double tolerance = 1e-6;
  int inner = 5;
  std::size_t max_updates = 0;
  std::uint64_t seed = 0;

  void add(CLI::App* cmd) {
    cmd->add_option("--selection", selection, "Block selection rule")
        ->check(CLI::IsMember({"greedy", "cyclic", "random"}))
        ->capture_default_str();
    cmd->add_option("--tolerance", tolerance, "Relative stopping tolerance")->capture_default_str();
    cmd->add_option("--inner-iterations", inner, "Proximal steps per block update")
        ->capture_default_str();
    cmd->add_option("--max-updates", max_updates, "Cap on block updates per solve (0 = 100 T)")
        ->capture_default_str();
  }

  fire::SolverConfig config() const {
    fire::SolverConfig sc;
    sc.selection = parse_selection(selection);
    sc.tolerance = tolerance;
    sc.inner_iterations = inner;
    sc.max_block_updates = max_updates;
    sc.rng_seed = seed;
    return sc;
  }

  json params() const {
    return {{"selection", selection},
            {"tolerance", tolerance},
            {"inner_iterations", inner},
            {"max_updates", max_updates}};
  }
};

int run(const std::vector<std::string>& args);

int run_app(const std::vector<std::string>& args) {
  CLI::App app{"Sparse, fused rule extraction from tree ensembles", "fire"};
  app.require_subcommand(1);
  app.set_version_flag("--version", FIRE_VERSION);

  // synth
  auto* synth = app.add_subcommand("synth", "Write a Friedman #1 synthetic CSV");
  std::size_t synth_rows = 1000, synth_features = 10;
  double synth_noise = 1.0;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  synth->add_option("--rows", synth_rows)->capture_default_str();
  synth->add_option("--features", synth_features)->capture_default_str();
  synth->add_option("--noise", synth_noise, "Noise standard deviation")->capture_default_str();
  synth->add_option("--seed", synth_seed)->capture_default_str();
  synth->add_option("--out", synth_out)->required();

  // train
  auto* train = app.add_subcommand("train", "Fit a bagged forest of CART trees");
  std::string train_data, train_target = "y", train_out;
  std::size_t n_trees = 500, depth = 3, min_leaf = 1;
  unsigned threads = 0;
  double feature_frac = 1.0 / 3.0;
  std::uint64_t train_seed = 0;
  bool no_bootstrap = false;
  train->add_option("--data", train_data)->required();
  train->add_option("--target", train_target)->capture_default_str();
  train->add_option("--trees", n_trees)->capture_default_str();
  train->add_option("--depth", depth)->capture_default_str();
  train->add_option("--min-leaf", min_leaf)->capture_default_str();
  train->add_option("--feature-frac", feature_frac)->capture_default_str();
  train->add_option("--seed", train_seed)->capture_default_str();
  train->add_flag("--no-bootstrap", no_bootstrap, "Fit every tree on all rows");
  train->add_option("--threads", threads, "Worker threads (0 = all cores)");
  train->add_option("--out", train_out)->required();

  // path
  auto* path = app.add_subcommand("path", "Compute a warm-started regularization path");
  std::string path_ens, path_data, path_target = "y", path_valid, path_out;
  double valid_frac = 0.2, gamma = 1.1, lf_ratio = 0.5, min_ratio = 1e-3;
  std::size_t grid = 100;
  std::string penalty = "mcp";
  bool cold = false;
  SolverFlags path_solver;
  path->add_option("--ensemble", path_ens)->required();
  path->add_option("--data", path_data)->required();
  path->add_option("--target", path_target)->capture_default_str();
  path->add_option("--valid-frac", valid_frac, "Seeded validation split")->capture_default_str();
  path->add_option("--valid-data", path_valid, "Separate validation CSV");
  path->add_option("--penalty", penalty)->check(CLI::IsMember({"l1", "mcp"}))->capture_default_str();
  path->add_option("--gamma", gamma)->capture_default_str();
  path->add_option("--lambda-f-ratio", lf_ratio)->capture_default_str();
  path->add_option("--grid", grid)->capture_default_str();
  path->add_option("--min-ratio", min_ratio)->capture_default_str();
  path->add_option("--seed", path_solver.seed, "Split and random-selection seed")->capture_default_str();
  path->add_flag("--cold-start", cold, "Solve every grid point from zero");
  path_solver.add(path);
  path->add_option("--out", path_out)->required();

  // extract
  auto* extract = app.add_subcommand("extract", "Select a model from a path and export rules");
  std::string ex_path, ex_ens, ex_test, ex_target = "y", ex_rules, ex_text, ex_stats;
  std::size_t max_rules = 15;
  extract->add_option("--path", ex_path)->required();
  extract->add_option("--ensemble", ex_ens)->required();
  extract->add_option("--max-rules", max_rules)->capture_default_str();
  extract->add_option("--test-data", ex_test);
  extract->add_option("--target", ex_target)->capture_default_str();
  extract->add_option("--out", ex_rules, "Rule set JSON")->required();
  extract->add_option("--text", ex_text, "Text rendering (default: <out>.txt)");
  extract->add_option("--stats", ex_stats, "Model statistics JSON (default: <out>.stats.json)");

  // bench
  auto* bench = app.add_subcommand("bench", "Compare greedy and cyclic block selection");
  std::string b_ens, b_data, b_target = "y", b_out, b_trace, b_penalty = "mcp";
  double b_ls = 1.0, b_lf = 0.5, b_gamma = 1.1;
  SolverFlags bench_solver;
  bench->add_option("--ensemble", b_ens)->required();
  bench->add_option("--data", b_data)->required();
  bench->add_option("--target", b_target)->capture_default_str();
  bench->add_option("--penalty", b_penalty)->check(CLI::IsMember({"l1", "mcp"}))->capture_default_str();
  bench->add_option("--lambda-s", b_ls)->capture_default_str();
  bench->add_option("--lambda-f", b_lf)->capture_default_str();
  bench->add_option("--gamma", b_gamma)->capture_default_str();
  bench->add_option("--tolerance", bench_solver.tolerance)->capture_default_str();
  bench->add_option("--max-updates", bench_solver.max_updates)->capture_default_str();
  bench->add_option("--out", b_out, "Report JSON")->required();
  bench->add_option("--trace", b_trace, "Objective traces CSV (default: <out>.trace.csv)");

  // replay
  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  std::string manifest_path;
  replay->add_option("manifest", manifest_path)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (*synth) {
    Manifest man("synth", args);
    const auto d = fire::friedman1(synth_rows, synth_features, synth_noise, synth_seed);
    fire::write_csv(synth_out, d, "y");
    man.doc["params"] = {{"rows", synth_rows}, {"features", synth_features}, {"noise", synth_noise}};
    man.doc["seed"] = synth_seed;
    man.output(synth_out);
    man.write(synth_out + ".manifest.json");
    return 0;
  }

  if (*train) {
    Manifest man("train", args);
    const auto d = fire::read_csv(train_data, train_target);
    man.input(train_data);
    fire::BaggingParams bp;
    bp.n_trees = n_trees;
    bp.tree = {depth, min_leaf, feature_frac};
    bp.bootstrap = !no_bootstrap;
    bp.seed = train_seed;
    bp.n_threads = threads;
    const auto e = fire::train_bagged_ensemble(d, bp);
    fire::save_ensemble(e, train_out);
    man.doc["params"] = {{"data", train_data},     {"target", train_target},
                         {"trees", n_trees},       {"depth", depth},
                         {"min_leaf", min_leaf},   {"feature_frac", feature_frac},
                         {"bootstrap", !no_bootstrap}};
    man.doc["seed"] = train_seed;
    man.output(train_out);
    man.write(train_out + ".manifest.json");
    std::cerr << "trained " << e.trees.size() << " trees, " << e.total_leaves() << " leaves\n";
    return 0;
  }

  if (*path) {
    Manifest man("path", args);
    const auto e = fire::load_ensemble(path_ens);
    man.input(path_ens);
    const auto all = fire::read_csv(path_data, path_target);
    man.input(path_data);
    fire::Dataset tr, va;
    if (!path_valid.empty()) {
      tr = all;
      va = fire::read_csv(path_valid, path_target);
      man.input(path_valid);
    } else {
      std::tie(tr, va) = fire::split_train_valid(all, valid_frac, path_solver.seed);
    }
    const fire::MappingMatrix m(e, tr);
    const fire::MappingMatrix mv(e, va);
    const double mean = tr.target_mean();
    const auto y = centered(tr, mean);
    fire::PathConfig pc;
    pc.n_grid = grid;
    pc.lambda_min_ratio = min_ratio;
    pc.lambda_f_ratio = lf_ratio;
    pc.gamma = gamma;
    pc.kind = parse_penalty(penalty);
    pc.warm_start = !cold;
    const auto result = fire::path_solve(m, y, pc, path_solver.config(),
                                         fire::ValidationSet{&mv, va.target}, mean);
    fire::save_path(result, path_out);
    json params = {{"ensemble", path_ens}, {"data", path_data},   {"target", path_target},
                   {"penalty", penalty},   {"gamma", gamma},      {"lambda_f_ratio", lf_ratio},
                   {"grid", grid},         {"min_ratio", min_ratio}, {"warm_start", !cold},
                   {"train_rows", tr.n_rows}, {"valid_rows", va.n_rows}, {"intercept", mean}};
    if (path_valid.empty())
      params["valid_frac"] = valid_frac;
    else
      params["valid_data"] = path_valid;
    params.update(path_solver.params());
    man.doc["params"] = params;
    man.doc["seed"] = path_solver.seed;
    man.output(path_out);
    man.write(path_out + ".manifest.json");
    std::size_t unconverged = 0;
    for (const auto& p : result.points) unconverged += !p.converged;
    if (unconverged)
      std::cerr << "warning: " << unconverged << " path points hit the update cap\n";
    return 0;
  }

  if (*extract) {
    Manifest man("extract", args);
    const auto e = fire::load_ensemble(ex_ens);
    man.input(ex_ens);
    const auto p = fire::load_path(ex_path, e.total_leaves());
    man.input(ex_path);
    const auto k = fire::select_model(p, max_rules);
    const auto& point = p.points[k];
    auto rs = fire::extract_rules(e, point.weights, p.intercept);
    rs.config = p.penalty_at(k);
    std::optional<fire::Dataset> test;
    if (!ex_test.empty()) {
      test = fire::read_csv(ex_test, ex_target);
      man.input(ex_test);
    }
    const auto stats = fire::compute_stats(e, point.weights, p.intercept, test ? &*test : nullptr);
    if (ex_text.empty()) ex_text = ex_rules + ".txt";
    if (ex_stats.empty()) ex_stats = ex_rules + ".stats.json";
    fire::save_rule_set(rs, ex_rules);
    fire::write_text_file(ex_text, fire::rule_set_to_text(rs));
    auto sj = fire::stats_to_json(stats);
    sj["grid_index"] = k;
    sj["lambda_s"] = point.lambda_s;
    sj["lambda_f"] = point.lambda_f;
    sj["validation_mse"] = point.validation_mse ? json(*point.validation_mse) : json(nullptr);
    fire::write_text_file(ex_stats, sj.dump(1) + "\n");
    man.doc["params"] = {{"path", ex_path}, {"ensemble", ex_ens}, {"max_rules", max_rules},
                         {"test_data", ex_test}, {"target", ex_target}};
    man.doc["seed"] = nullptr;
    man.output(ex_rules);
    man.output(ex_text);
    man.output(ex_stats);
    man.write(ex_rules + ".manifest.json");
    return 0;
  }

  if (*bench) {
    Manifest man("bench", args);
    const auto e = fire::load_ensemble(b_ens);
    man.input(b_ens);
    const auto d = fire::read_csv(b_data, b_target);
    man.input(b_data);
    const fire::MappingMatrix m(e, d);
    const auto y = centered(d, d.target_mean());
    const fire::PenaltyConfig cfg{parse_penalty(b_penalty), b_ls, b_gamma, b_lf};

    std::vector<std::pair<std::string, fire::SolveResult>> runs;
    for (const char* sel : {"greedy", "cyclic"}) {
      auto sc = bench_solver.config();
      sc.selection = parse_selection(sel);
      runs.emplace_back(sel, fire::gbcd_solve(m, y, cfg, sc));
    }
    double best = runs[0].second.final_objective;
    for (const auto& [name, r] : runs) best = std::min(best, r.final_objective);
    const double target = best + 0.01 * std::abs(best);

    json report = {{"penalty", b_penalty},
                   {"lambda_s", b_ls},
                   {"lambda_f", b_lf},
                   {"gamma", b_gamma},
                   {"n_blocks", m.n_blocks()},
                   {"n_rows", m.n_rows()},
                   {"best_objective", best},
                   {"target_objective", target},
                   {"runs", json::array()}};
    std::vector<double> to_target;
    for (const auto& [name, r] : runs) {
      json run = {{"selection", name},
                  {"final_objective", r.final_objective},
                  {"block_updates", r.n_block_updates},
                  {"converged", r.converged},
                  {"wall_time", r.wall_time},
                  {"rejected_updates", r.rejected_updates}};
      run["updates_to_target"] = nullptr;
      run["seconds_to_target"] = nullptr;
      for (const auto& tp : r.trace)
        if (tp.objective <= target) {
          run["updates_to_target"] = tp.block_updates;
          run["seconds_to_target"] = tp.seconds;
          to_target.push_back(static_cast<double>(tp.block_updates));
          break;
        }
      report["runs"].push_back(run);
    }
    if (to_target.size() == 2 && to_target[0] > 0)
      report["cyclic_over_greedy_updates"] = to_target[1] / to_target[0];
    else
      report["cyclic_over_greedy_updates"] = nullptr;
    fire::write_text_file(b_out, report.dump(1) + "\n");

    if (b_trace.empty()) b_trace = b_out + ".trace.csv";
    std::ostringstream csv;
    csv.precision(17);
    csv << "selection,block_updates,objective,seconds\n";
    for (const auto& [name, r] : runs)
      for (const auto& tp : r.trace)
        csv << name << ',' << tp.block_updates << ',' << tp.objective << ',' << tp.seconds << '\n';
    fire::write_text_file(b_trace, csv.str());

    man.doc["params"] = {{"ensemble", b_ens},     {"data", b_data},   {"target", b_target},
                         {"penalty", b_penalty},  {"lambda_s", b_ls}, {"lambda_f", b_lf},
                         {"gamma", b_gamma},      {"tolerance", bench_solver.tolerance},
                         {"max_updates", bench_solver.max_updates}};
    man.doc["seed"] = nullptr;
    man.output(b_out);
    man.output(b_trace);
    man.write(b_out + ".manifest.json");
    std::cout << report.dump(1) << '\n';
    return 0;
  }

  if (*replay) {
    std::ifstream in(manifest_path);
    if (!in) throw fire::invalid_input("cannot open manifest '" + manifest_path + "'");
    json doc;
    try {
      in >> doc;
    } catch (const json::exception& ex) {
      throw fire::invalid_input("manifest '" + manifest_path + "' is not valid JSON: " + ex.what());
    }
    if (!doc.contains("argv") || !doc["argv"].is_array())
      throw fire::invalid_input("manifest has no argv record");
    const auto argv = doc["argv"].get<std::vector<std::string>>();
    if (!argv.empty() && argv[0] == "replay") throw fire::invalid_input("refusing to replay a replay");
    return run(argv);
  }
  return 2;
}

int run(const std::vector<std::string>& args) {
  try {
    return run_app(args);
  } catch (const fire::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    switch (e.kind()) {
      case fire::ErrorKind::invalid_input:
        return 2;
      case fire::ErrorKind::infeasible:
        return 3;
      case fire::ErrorKind::numeric:
        return 4;
    }
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args);
}
