#include "probetraj/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>

#include "CLI11.hpp"

#include "probetraj/analysis.hpp"
#include "probetraj/binary_io.hpp"
#include "probetraj/digest.hpp"
#include "probetraj/errors.hpp"
#include "probetraj/geometry.hpp"
#include "probetraj/kernels.hpp"
#include "probetraj/kv_config.hpp"
#include "probetraj/probe.hpp"
#include "probetraj/report.hpp"
#include "probetraj/selftest.hpp"
#include "probetraj/synth.hpp"
#include "probetraj/trajectory.hpp"

namespace probetraj::cli {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

constexpr const char* kSeedEnv = "PROBETRAJ_SEED";

// --- argument helpers -------------------------------------------------------

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw Error(ErrorKind::kArgument, std::string(flag) + " is required");
}

// Output locations are checked up front so nothing is computed, let alone
// written, for a destination that cannot be created.
fs::path output_path(const std::string& value, const char* flag) {
  require(value, flag);
  fs::path p(value);
  const auto parent = p.parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) {
    throw Error(ErrorKind::kIo, std::string(flag) + ": directory does not exist: " + parent.string());
  }
  if (fs::is_directory(p)) throw Error(ErrorKind::kIo, std::string(flag) + ": is a directory: " + p.string());
  return p;
}

fs::path text_path(const fs::path& out) {
  fs::path t = out;
  if (t.extension() == ".txt") return fs::path(out.string() + ".txt");
  return t.replace_extension(".txt");
}

// Loaders prefix decode failures with the file they came from.
template <typename Fn>
auto load_with_path(const std::string& path, Fn&& fn) {
  try {
    return fn(fs::path(path));
  } catch (const Error& e) {
    const std::string msg = e.what();
    if (msg.find(path) != std::string::npos) throw;
    throw Error(e.kind(), path + ": " + msg);
  }
}

ActivationDataset load_data(const std::string& path) {
  return load_with_path(path, [](const fs::path& p) { return load_dataset(p); });
}
BottleneckProbe load_probe_file(const std::string& path) {
  return load_with_path(path, [](const fs::path& p) { return load_probe(p); });
}
TrajectoryModel load_traj_file(const std::string& path) {
  return load_with_path(path, [](const fs::path& p) { return load_trajectory_model(p); });
}
RequestMap load_requests(const std::string& path) {
  return load_with_path(path, [](const fs::path& p) { return requests_from_json(read_json_file(p)); });
}

// --- manifest -----------------------------------------------------------------

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string joined(const std::vector<std::string>& parts) {
  std::string s;
  for (const auto& p : parts) s += (s.empty() ? "" : ",") + p;
  return s;
}

// Everything needed to reproduce a run. The "runtime" block (thread count,
// start time, duration) is the only part allowed to differ between runs.
class Manifest {
 public:
  Manifest(std::string subcommand, const CLI::App& sub) : subcommand_(std::move(subcommand)) {
    for (const auto* opt : sub.get_options()) {
      if (opt->get_lnames().empty()) continue;
      const auto& name = opt->get_lnames().front();
      if (name == "help" || name == "threads" || name == "config") continue;
      flags_[name] = opt->count() > 0 ? joined(opt->results()) : opt->get_default_str();
    }
  }

  void input(const std::string& role, const std::string& path) {
    inputs_[role] = Json{{"path", path}, {"sha256", sha256_file(path)}};
  }
  void seed(const std::string& name, std::uint64_t value) { seeds_[name] = value; }

  Json json() const {
    Json flags = Json::object(), inputs = Json::object(), seeds = Json::object();
    for (const auto& [k, v] : flags_) flags[k] = v;
    for (const auto& [k, v] : inputs_) inputs[k] = v;
    for (const auto& [k, v] : seeds_) seeds[k] = v;
    return {{"tool", kToolName},
            {"version", kVersion},
            {"subcommand", subcommand_},
            {"flags", flags},
            {"inputs", inputs},
            {"seeds", seeds},
            {"runtime",
             {{"threads", kernels::max_threads()},
              {"started_at", started_at_},
              {"duration_s", std::chrono::duration<double>(Clock::now() - start_).count()}}}};
  }

 private:
  std::string subcommand_;
  std::map<std::string, std::string> flags_;
  std::map<std::string, Json> inputs_;
  std::map<std::string, std::uint64_t> seeds_;
  std::string started_at_ = utc_now();
  Clock::time_point start_ = Clock::now();
};

// Deferred writes: handlers queue outputs and everything lands only after the
// whole computation succeeded.
class Outputs {
 public:
  void text(fs::path p, std::string body) { files_.emplace_back(std::move(p), std::move(body)); }
  void bytes(fs::path p, std::vector<std::uint8_t> body) { blobs_.emplace_back(std::move(p), std::move(body)); }
  void csv_dir(fs::path dir, std::map<std::string, std::string> tables) {
    csv_.emplace_back(std::move(dir), std::move(tables));
  }

  void commit(std::ostream& err) {
    for (auto& [p, b] : blobs_) {
      write_file_bytes(p, b);
      err << "wrote " << p.string() << '\n';
    }
    for (auto& [p, t] : files_) {
      write_file_text(p, t);
      err << "wrote " << p.string() << '\n';
    }
    for (auto& [dir, tables] : csv_) {
      std::error_code ec;
      fs::create_directories(dir, ec);
      if (ec) throw Error(ErrorKind::kIo, "cannot create CSV directory " + dir.string());
      for (auto& [stem, body] : tables) write_file_text(dir / (stem + ".csv"), body);
      err << "wrote " << tables.size() << " CSV tables to " << dir.string() << '\n';
    }
  }

 private:
  std::vector<std::pair<fs::path, std::vector<std::uint8_t>>> blobs_;
  std::vector<std::pair<fs::path, std::string>> files_;
  std::vector<std::pair<fs::path, std::map<std::string, std::string>>> csv_;
};

void json_report(Outputs& out, const fs::path& path, Json body, const Manifest& m) {
  body["manifest"] = m.json();
  out.text(path, dump_json(body));
}

void binary_artifact(Outputs& out, const fs::path& path, std::vector<std::uint8_t> bytes, const Manifest& m,
                     Json details) {
  details["path"] = path.string();
  details["sha256"] = sha256_hex(bytes);
  out.bytes(path, std::move(bytes));
  Json side = m.json();
  side["artifact"] = details;
  out.text(fs::path(path.string() + ".manifest.json"), dump_json(side));
}

// --- option groups ------------------------------------------------------------

struct RoleOpts {
  std::vector<std::string> jailbreak = SourceRoles{}.jailbreak;
  std::vector<std::string> sorry = SourceRoles{}.sorry;
  std::vector<std::string> xstest = SourceRoles{}.xstest;

  void attach(CLI::App* sub) {
    sub->add_option("--jailbreak-sources", jailbreak, "Source tags treated as jailbreaks")->delimiter(',');
    sub->add_option("--sorry-sources", sorry, "Source tags of direct harmful requests")->delimiter(',');
    sub->add_option("--xstest-sources", xstest, "Source tags of benign look-alikes")->delimiter(',');
  }
  SourceRoles roles() const { return SourceRoles{jailbreak, sorry, xstest}; }
};

struct TrainOpts {
  TrainConfig cfg;
  std::string balancing = "reweight";
  std::string activation = "identity";

  void attach(CLI::App* sub, bool with_width) {
    if (with_width) sub->add_option("--width", cfg.width, "Bottleneck width")->check(CLI::PositiveNumber);
    sub->add_option("--lr,--learning-rate", cfg.learning_rate, "Learning rate")->check(CLI::PositiveNumber);
    sub->add_option("--epochs", cfg.epochs, "Training epochs")->check(CLI::PositiveNumber);
    sub->add_option("--batch-size", cfg.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
    sub->add_option("--weight-decay", cfg.weight_decay, "L2 weight decay")->check(CLI::NonNegativeNumber);
    sub->add_option("--seed", cfg.seed, "Training seed");
    sub->add_option("--balancing", balancing, "Class balancing")->check(CLI::IsMember({"reweight", "none"}));
    sub->add_option("--activation", activation, "Bottleneck activation")->check(CLI::IsMember({"identity", "rectifier"}));
  }
  TrainConfig resolved() const {
    TrainConfig c = cfg;
    c.balancing = *parse_balancing(balancing);
    c.activation = *parse_activation(activation);
    return c;
  }
};

struct Command {
  CLI::App* app = nullptr;
  std::function<int(Manifest&, Outputs&, std::ostream& out, std::ostream& err)> handler;
};

// --- config file and environment -----------------------------------------------

void set_option(CLI::Option* opt, const std::string& value) {
  opt->add_result(value);
  opt->run_callback();
}

void apply_config(CLI::App& app, CLI::App* sub, const std::string& path) {
  const auto text = read_file_bytes(path);
  const auto pairs = parse_kv_config(std::string_view(reinterpret_cast<const char*>(text.data()), text.size()));
  for (const auto& [key, value] : pairs) {
    std::string flag = "--" + key;
    for (auto& ch : flag) ch = ch == '_' ? '-' : ch;
    if (key == "config") throw Error(ErrorKind::kValidation, path + ": config files cannot include other configs");
    if (auto* opt = sub->get_option_no_throw(flag)) {
      if (opt->count() == 0) set_option(opt, value);
      continue;
    }
    if (auto* opt = app.get_option_no_throw(flag)) {
      if (opt->count() == 0) set_option(opt, value);
      continue;
    }
    // Keys for other subcommands are fine in a shared file; unknown keys are typos.
    bool known = false;
    for (const auto* other : app.get_subcommands([](CLI::App*) { return true; })) {
      known = known || other->get_option_no_throw(flag) != nullptr;
    }
    if (!known) throw Error(ErrorKind::kValidation, path + ": unknown config key '" + key + "'");
  }
}

void apply_seed_env(CLI::App* sub) {
  const char* env = std::getenv(kSeedEnv);
  if (env == nullptr || *env == '\0') return;
  auto* opt = sub->get_option_no_throw("--seed");
  if (opt == nullptr || opt->count() > 0) return;
  parse_u64(kSeedEnv, env);  // reject junk with a clear message
  set_option(opt, env);
}

// --- subcommands ------------------------------------------------------------

Command add_synth(CLI::App& app) {
  auto* sub = app.add_subcommand("synth", "Generate a synthetic activation dataset");
  struct Opts {
    SynthConfig cfg;
    std::vector<std::uint32_t> counts = {100, 100, 100, 100};
    std::string split = "eval";
    std::string out, requests_out;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--out", o->out, "Dataset file to write");
  sub->add_option("--requests-out", o->requests_out, "Request-span JSON (default <out>.requests.json)");
  sub->add_option("--seed", o->cfg.seed, "Generator seed");
  sub->add_option("--dim", o->cfg.dim, "State dimension")->check(CLI::PositiveNumber);
  sub->add_option("--counts", o->counts, "Records per class: clean_harm,clean_benign,wrapped_harm,spiky_benign")
      ->delimiter(',')
      ->expected(4);
  sub->add_option("--seq-len-min", o->cfg.seq_len_min, "Shortest clean sequence");
  sub->add_option("--seq-len-max", o->cfg.seq_len_max, "Longest clean sequence");
  sub->add_option("--harm-mean", o->cfg.harm_mean, "Harmful center (default 5*e0)")->delimiter(',');
  sub->add_option("--benign-mean", o->cfg.benign_mean, "Benign center (default -5*e0)")->delimiter(',');
  sub->add_option("--wrapper-mean", o->cfg.wrapper_mean, "Wrapper/framing center (default 6*e1)")->delimiter(',');
  sub->add_option("--noise-sigma", o->cfg.noise_sigma, "Per-coordinate noise");
  sub->add_option("--suppression", o->cfg.suppression, "Pull of wrapped finals toward benign");
  sub->add_option("--spike-prob", o->cfg.spike_prob, "Harm-like spike probability in spiky benign content");
  sub->add_option("--wrap-success", o->cfg.wrap_success, "Fraction of wrappers that suppress");
  sub->add_option("--wrapper-bleed", o->cfg.wrapper_bleed, "Wrapper component carried into wrapped finals");
  sub->add_option("--final-tokens", o->cfg.final_tokens, "Template tokens closing each prompt");
  sub->add_option("--split", o->split, "Split tag")->check(CLI::IsMember({"train", "eval"}));
  sub->add_option("--layer-tag", o->cfg.layer_tag, "Opaque layer tag");

  return {sub, [o](Manifest& m, Outputs& out, std::ostream&, std::ostream& err) {
            const auto path = output_path(o->out, "--out");
            const auto req_path = output_path(o->requests_out.empty() ? o->out + ".requests.json" : o->requests_out,
                                              "--requests-out");
            SynthConfig cfg = o->cfg;
            if (o->counts.size() != 4) throw Error(ErrorKind::kArgument, "--counts takes four integers");
            std::copy(o->counts.begin(), o->counts.end(), cfg.counts.begin());
            cfg.split = *parse_split(o->split);
            m.seed("synth", cfg.seed);
            auto gen = generate_synthetic(cfg);
            err << "generated " << gen.dataset.records.size() << " records\n";
            Json details = {{"records", gen.dataset.records.size()}, {"dim", gen.dataset.dim}};
            binary_artifact(out, path, encode_dataset(gen.dataset), m, details);
            Json req = requests_to_json(gen.requests);
            out.text(req_path, dump_json(req));
            return 0;
          }};
}

Command add_train_probe(CLI::App& app) {
  auto* sub = app.add_subcommand("train-probe", "Train a final-token bottleneck probe");
  struct Opts {
    TrainOpts train;
    std::string data, out;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--data", o->data, "Training dataset");
  sub->add_option("--out", o->out, "Probe file to write");
  o->train.attach(sub, true);
  return {sub, [o](Manifest& m, Outputs& out, std::ostream&, std::ostream& err) {
            require(o->data, "--data");
            const auto path = output_path(o->out, "--out");
            const auto data = load_data(o->data);
            m.input("data", o->data);
            const auto cfg = o->train.resolved();
            m.seed("probe", cfg.seed);
            const auto probe = train_probe(data, cfg);
            err << "training accuracy " << probe.info.final_accuracy << '\n';
            binary_artifact(out, path, encode_probe(probe), m,
                            {{"width", probe.width()}, {"dim", probe.dim()},
                             {"activation", to_string(probe.activation)}, {"training", to_json(probe.info)}});
            return 0;
          }};
}

Command add_sweep_width(CLI::App& app) {
  auto* sub = app.add_subcommand("sweep-width", "Jailbreak detection as a function of bottleneck width");
  struct Opts {
    TrainOpts train;
    RoleOpts roles;
    std::vector<int> widths;
    double threshold = 0.5;
    std::string train_path, eval_path, out, csv;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--train", o->train_path, "Training dataset");
  sub->add_option("--eval", o->eval_path, "Evaluation dataset");
  sub->add_option("--widths", o->widths, "Comma-separated widths")->delimiter(',');
  sub->add_option("--threshold", o->threshold, "Decision threshold (score > threshold flags)");
  sub->add_option("--out", o->out, "JSON report");
  sub->add_option("--csv", o->csv, "Directory for CSV tables");
  o->train.attach(sub, false);
  o->roles.attach(sub);
  return {sub, [o](Manifest& m, Outputs& out, std::ostream&, std::ostream&) {
            require(o->train_path, "--train");
            require(o->eval_path, "--eval");
            if (o->widths.empty()) throw Error(ErrorKind::kArgument, "--widths is required");
            for (int w : o->widths) {
              if (w < 1) throw Error(ErrorKind::kArgument, "--widths must be positive");
            }
            const auto path = output_path(o->out, "--out");
            const auto train = load_data(o->train_path);
            const auto eval = load_data(o->eval_path);
            m.input("train", o->train_path);
            m.input("eval", o->eval_path);
            const auto cfg = o->train.resolved();
            m.seed("probe_base", cfg.seed);
            const auto rows = width_sweep(train, eval, o->widths, cfg, o->roles.roles(), o->threshold);
            for (const auto& r : rows) m.seed("width_" + std::to_string(r.width), r.seed);
            Json body = {{"threshold", o->threshold}, {"width_sweep", Json::array()}};
            for (const auto& r : rows) body["width_sweep"].push_back(to_json(r));
            json_report(out, path, body, m);
            out.text(text_path(path), render_text(rows));
            if (!o->csv.empty()) out.csv_dir(o->csv, {{"width_sweep", render_csv(rows)}});
            return 0;
          }};
}

// H/B from the training set, S/X/J from the evaluation set.
Command add_geometry(CLI::App& app) {
  auto* sub = app.add_subcommand("geometry", "Contrast directions against the probe row space");
  struct Opts {
    RoleOpts roles;
    std::string probe, data, train, caught_miss, out;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--probe", o->probe, "Probe file");
  sub->add_option("--data", o->data, "Evaluation dataset the partition was computed on");
  sub->add_option("--train", o->train, "Training dataset (H_train / B_train)");
  sub->add_option("--caught-miss", o->caught_miss, "Report JSON holding the caught/missed partition");
  sub->add_option("--out", o->out, "JSON report");
  o->roles.attach(sub);
  return {sub, [o](Manifest& m, Outputs& out, std::ostream&, std::ostream&) {
            require(o->probe, "--probe");
            require(o->data, "--data");
            require(o->train, "--train");
            require(o->caught_miss, "--caught-miss");
            const auto path = output_path(o->out, "--out");
            const auto probe = load_probe_file(o->probe);
            const auto eval = load_data(o->data);
            const auto train = load_data(o->train);
            const auto part = load_with_path(o->caught_miss, [](const fs::path& p) { return partition_from_json(read_json_file(p)); });
            for (const auto* idx : {&part.caught, &part.missed}) {
              for (auto i : *idx) {
                if (i >= eval.records.size()) {
                  throw Error(ErrorKind::kValidation, o->caught_miss + ": record index " + std::to_string(i) +
                                                          " is outside the dataset");
                }
              }
            }
            m.input("probe", o->probe);
            m.input("data", o->data);
            m.input("train", o->train);
            m.input("caught_miss", o->caught_miss);
            const auto dirs = build_directions(direction_inputs(train, eval, part.caught, part.missed, o->roles.roles()));
            const auto rep = geometry_report(probe, dirs);
            json_report(out, path, {{"geometry", to_json(rep)}, {"directions", to_json(dirs)}}, m);
            out.text(text_path(path), render_text(rep));
            return 0;
          }};
}

Command add_token_sweep(CLI::App& app) {
  auto* sub = app.add_subcommand("token-sweep", "Per-position probe scores, goal spans and max pooling");
  struct Opts {
    RoleOpts roles;
    double threshold = 0.5;
    std::string probe, data, requests, out, csv;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--probe", o->probe, "Probe file");
  sub->add_option("--data", o->data, "Evaluation dataset");
  sub->add_option("--requests", o->requests, "Request-span JSON");
  sub->add_option("--threshold", o->threshold, "Decision threshold");
  sub->add_option("--out", o->out, "JSON report");
  sub->add_option("--csv", o->csv, "Directory for CSV tables");
  o->roles.attach(sub);
  return {sub, [o](Manifest& m, Outputs& out, std::ostream&, std::ostream&) {
            require(o->probe, "--probe");
            require(o->data, "--data");
            require(o->requests, "--requests");
            const auto path = output_path(o->out, "--out");
            const auto probe = load_probe_file(o->probe);
            const auto eval = load_data(o->data);
            const auto requests = load_requests(o->requests);
            m.input("probe", o->probe);
            m.input("data", o->data);
            m.input("requests", o->requests);
            EvalReport rep;
            rep.dim = eval.dim;
            rep.n_records = eval.records.size();
            rep.final_token = evaluate_final_token(probe, eval, o->roles.roles(), o->threshold);
            rep.max_pool = max_pool_eval(probe, eval, o->threshold);
            rep.token_sweep = token_sweep_report(probe, eval, requests, rep.final_token.missed, o->roles.roles());
            json_report(out, path, to_json(rep), m);
            out.text(text_path(path), render_text(rep));
            if (!o->csv.empty()) out.csv_dir(o->csv, render_csv(rep));
            return 0;
          }};
}

Command add_fit_hmm(CLI::App& app) {
  auto* sub = app.add_subcommand("fit-hmm", "Fit the PCA + two-HMM trajectory diagnostic");
  struct Opts {
    TrajectoryConfig cfg;
    std::string data, out;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--data", o->data, "Training dataset");
  sub->add_option("--out", o->out, "Trajectory model file");
  sub->add_option("--pca-dim", o->cfg.pca_dim, "PCA components")->check(CLI::PositiveNumber);
  sub->add_option("--states", o->cfg.n_states, "HMM states per class")->check(CLI::PositiveNumber);
  sub->add_option("--seed", o->cfg.seed, "Fit seed");
  sub->add_option("--restarts", o->cfg.em.restarts, "EM restarts")->check(CLI::PositiveNumber);
  sub->add_option("--max-iter", o->cfg.em.max_iterations, "EM iteration cap")->check(CLI::PositiveNumber);
  sub->add_option("--tol", o->cfg.em.tolerance, "Relative log-likelihood tolerance")->check(CLI::NonNegativeNumber);
  sub->add_option("--var-floor", o->cfg.em.variance_floor, "Variance floor")->check(CLI::PositiveNumber);
  sub->add_option("--prob-floor", o->cfg.em.probability_floor, "Initial/transition probability floor")
      ->check(CLI::NonNegativeNumber);
  return {sub, [o](Manifest& m, Outputs& out, std::ostream&, std::ostream& err) {
            require(o->data, "--data");
            const auto path = output_path(o->out, "--out");
            const auto data = load_data(o->data);
            m.input("data", o->data);
            m.seed("trajectory", o->cfg.seed);
            const auto model = fit_trajectory_model(data, o->cfg);
            for (const auto& w : model.meta.warnings) err << "warning: " << w << '\n';
            err << "threshold " << model.threshold << ", training balanced accuracy " << model.meta.train_accuracy << '\n';
            binary_artifact(out, path, encode_trajectory_model(model), m,
                            {{"pca_dim", model.pca.n_components()},
                             {"threshold", model.threshold},
                             {"fit", to_json(model.meta)}});
            return 0;
          }};
}

Command add_evaluate(CLI::App& app) {
  auto* sub = app.add_subcommand("evaluate", "Full evaluation report");
  struct Opts {
    RoleOpts roles;
    TrainOpts train_opts;
    std::vector<int> widths;
    double threshold = 0.5;
    std::string probe, traj, data, requests, train, out, csv;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--probe", o->probe, "Probe file");
  sub->add_option("--data", o->data, "Evaluation dataset");
  sub->add_option("--traj", o->traj, "Trajectory model file (enables trajectory sections)");
  sub->add_option("--requests", o->requests, "Request-span JSON (enables the token sweep)");
  sub->add_option("--train", o->train, "Training dataset (enables geometry and energy sections)");
  sub->add_option("--widths", o->widths, "Widths to sweep (needs --train)")->delimiter(',');
  sub->add_option("--threshold", o->threshold, "Final-token decision threshold");
  sub->add_option("--out", o->out, "JSON report");
  sub->add_option("--csv", o->csv, "Directory for CSV tables");
  o->roles.attach(sub);
  o->train_opts.attach(sub, false);
  return {sub, [o](Manifest& m, Outputs& out, std::ostream&, std::ostream& err) {
            require(o->probe, "--probe");
            require(o->data, "--data");
            if (!o->widths.empty() && o->train.empty()) throw Error(ErrorKind::kArgument, "--widths needs --train");
            const auto path = output_path(o->out, "--out");
            const auto probe = load_probe_file(o->probe);
            const auto eval = load_data(o->data);
            std::optional<TrajectoryModel> traj;
            std::optional<RequestMap> requests;
            std::optional<ActivationDataset> train;
            if (!o->traj.empty()) traj = load_traj_file(o->traj);
            if (!o->requests.empty()) requests = load_requests(o->requests);
            if (!o->train.empty()) train = load_data(o->train);
            m.input("probe", o->probe);
            m.input("data", o->data);
            if (traj) m.input("traj", o->traj);
            if (requests) m.input("requests", o->requests);
            if (train) m.input("train", o->train);
            const auto roles = o->roles.roles();

            EvalReport rep;
            rep.dim = eval.dim;
            rep.n_records = eval.records.size();
            rep.final_token = evaluate_final_token(probe, eval, roles, o->threshold);
            rep.max_pool = max_pool_eval(probe, eval, o->threshold);
            if (requests) rep.token_sweep = token_sweep_report(probe, eval, *requests, rep.final_token.missed, roles);
            if (traj) {
              rep.trajectory = trajectory_eval(*traj, eval, rep.final_token, roles);
              rep.spearman = length_correlation(eval, rep.trajectory->scores);
            }
            if (train) {
              try {
                const auto dirs = build_directions(direction_inputs(*train, eval, rep.final_token.caught,
                                                                    rep.final_token.missed, roles));
                rep.geometry = geometry_report(probe, dirs);
                if (traj) rep.energy_comparison = energy_comparison(probe, *traj, dirs);
              } catch (const Error& e) {
                if (e.kind() != ErrorKind::kMissingPopulation && e.kind() != ErrorKind::kDegenerateDirection) throw;
                rep.notes.push_back(std::string("geometry omitted: ") + e.what());
                err << "note: geometry omitted: " << e.what() << '\n';
              }
              if (!o->widths.empty()) {
                const auto cfg = o->train_opts.resolved();
                m.seed("probe_base", cfg.seed);
                rep.width_sweep = width_sweep(*train, eval, o->widths, cfg, roles, o->threshold);
                for (const auto& r : *rep.width_sweep) m.seed("width_" + std::to_string(r.width), r.seed);
              }
            }
            json_report(out, path, to_json(rep), m);
            out.text(text_path(path), render_text(rep));
            if (!o->csv.empty()) out.csv_dir(o->csv, render_csv(rep));
            return 0;
          }};
}

Command add_selftest(CLI::App& app) {
  auto* sub = app.add_subcommand("selftest", "Run the oracle suites");
  auto seed = std::make_shared<std::uint64_t>(20240601);
  sub->add_option("--seed", *seed, "Seed for the random instances");
  return {sub, [seed](Manifest&, Outputs&, std::ostream& out, std::ostream&) {
            const auto results = selftest::run_all(*seed);
            return selftest::report(results, out) ? 0 : 2;
          }};
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Diagnostics for final-token safety probes on hidden-state trajectories", std::string(kToolName)};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  int threads = 0;
  std::string config;
  app.add_option("--threads", threads, "Worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
  app.add_option("--config", config, "Flat key=value file; flags win over it");

  std::vector<Command> commands = {add_synth(app),   add_train_probe(app), add_sweep_width(app), add_geometry(app),
                                   add_token_sweep(app), add_fit_hmm(app),  add_evaluate(app),     add_selftest(app)};
  for (auto& c : commands) c.app->fallthrough();

  if (args.empty()) {
    err << app.help();
    return 1;
  }
  std::vector<std::string> argv_store;
  argv_store.reserve(args.size() + 1);
  argv_store.emplace_back(kToolName);
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
    const auto it = std::find_if(commands.begin(), commands.end(), [](const Command& c) { return c.app->parsed(); });
    if (it == commands.end()) throw CLI::RequiredError("a subcommand");
    if (!config.empty()) apply_config(app, it->app, config);
    apply_seed_env(it->app);
    kernels::set_thread_count(threads);

    Manifest manifest(it->app->get_name(), *it->app);
    Outputs outputs;
    const int status = it->handler(manifest, outputs, out, err);
    outputs.commit(err);
    return status;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::Error& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace probetraj::cli
