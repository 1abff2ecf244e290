// End-to-end acceptance checks. Criteria 1-5 run in-process against
// independent oracles; 6-10 drive the simulrl CLI on the desk config.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../support.hpp"
#include "simulrl/bleu.hpp"
#include "simulrl/errors.hpp"
#include "simulrl/generate.hpp"
#include "simulrl/grpo.hpp"
#include "simulrl/jsonl.hpp"
#include "simulrl/metrics.hpp"
#include "simulrl/rewards.hpp"

using namespace simulrl;
using namespace simulrl::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << x;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1. gradients vs central finite differences

template <class F>
double worst_fd_error(ModelParams& p, const std::vector<double>& grad, F&& objective, int samples, Rng& rng) {
  double worst = 0.0;
  for (int k = 0; k < samples; ++k) {
    const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(p.size()) - 1));
    const double h = 1e-5;
    const double v = p.values[i];
    p.values[i] = v + h;
    const double up = objective(p);
    p.values[i] = v - h;
    const double down = objective(p);
    p.values[i] = v;
    const double fd = (up - down) / (2 * h);
    // Both exactly zero for parameters the objective does not touch.
    const double err = (fd == 0.0 && grad[i] == 0.0) ? 0.0 : rel_error(fd, grad[i]);
    worst = std::max(worst, err);
  }
  return worst;
}

Outcome criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto env = micro_env();
  const auto mc = micro_model(env);
  auto p = ModelParams::initialize(mc, 17);
  if (p.size() >= 10000) return {false, "micro model has " + std::to_string(p.size()) + " parameters"};
  Rng rng(2024);
  const int samples = 32;

  const std::vector<TokenGrid> batch{micro_pair(env, mc, 1), micro_pair(env, mc, 2)};
  const auto sl = supervised_loss_and_grads(p, batch);
  const double sl_err = worst_fd_error(
      p, sl.grad, [&](const ModelParams& q) { return supervised_loss_and_grads(q, batch).loss; }, samples, rng);

  RLConfig cfg;
  cfg.rollout_frames = 40;
  cfg.reward.words_per_checkpoint = 2;
  cfg.sampling = {1.0, 250, false};
  std::vector<Utterance> inputs{generate_utterance(env, 3), generate_utterance(env, 4)};
  std::vector<GroupBatch> groups;
  for (std::size_t b = 0; b < inputs.size(); ++b) groups.push_back(sample_group(p, inputs[b], env, cfg, 50 + b));
  const auto rl = grpo_objective(p, groups, cfg);
  const double rl_err = worst_fd_error(
      p, rl.grad, [&](const ModelParams& q) { return grpo_objective(q, groups, cfg, 1, false).objective; },
      samples, rng);

  const double secs = seconds_since(t0);
  const bool pass = sl_err < 1e-4 && rl_err < 1e-4 && secs < 60.0;
  return {pass, std::to_string(p.size()) + " params, " + std::to_string(samples) +
                    " coords each: max rel err SL " + fmt(sl_err, 3) + ", RL " + fmt(rl_err, 3) + ", " +
                    fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------------------
// 2. reward normalization and suffix-sum advantages

Outcome criterion_reward_algebra() {
  Rng rng(7);
  double worst_mean = 0.0, worst_std = 0.0;
  int degenerate = 0, adv_mismatch = 0, columns = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int G = 4;
    const int s = rng.uniform_int(1, 6);
    Matrix raw(G, s);
    for (int j = 0; j < s; ++j) {
      const bool constant = rng.bernoulli(0.1);
      const double c = rng.uniform();
      for (int i = 0; i < G; ++i) raw(i, j) = constant ? c : rng.uniform();
    }
    const auto n = normalize_group(raw);
    for (int j = 0; j < s; ++j) {
      double mu = 0.0;
      for (int i = 0; i < G; ++i) mu += raw(i, j);
      mu /= G;
      double var = 0.0;
      for (int i = 0; i < G; ++i) var += (raw(i, j) - mu) * (raw(i, j) - mu);
      const double sd = std::sqrt(var / G);
      double nm = 0.0, nv = 0.0;
      for (int i = 0; i < G; ++i) nm += n(i, j) / G;
      for (int i = 0; i < G; ++i) nv += (n(i, j) - nm) * (n(i, j) - nm) / G;
      ++columns;
      if (sd < 1e-8) {
        ++degenerate;
        for (int i = 0; i < G; ++i)
          if (n(i, j) != 0.0) worst_std = INFINITY;
        continue;
      }
      worst_mean = std::max(worst_mean, std::abs(nm));
      worst_std = std::max(worst_std, std::abs(std::sqrt(nv) - 1.0));
    }

    // Strictly increasing checkpoints and a horizon at or beyond the last one.
    std::vector<int> cps;
    int f = 0;
    for (int j = 0; j < s; ++j) cps.push_back(f += rng.uniform_int(1, 6));
    const int frames = cps.back() + rng.uniform_int(0, 4);
    for (int i = 0; i < G; ++i) {
      const auto a = advantages(n.row(i), cps, frames);
      for (int t = 0; t < frames; ++t) {
        double brute = 0.0;
        for (int j = s - 1; j >= 0; --j)
          if (cps[j] > t) brute += n(i, j);
        if (a[static_cast<std::size_t>(t)] != brute) ++adv_mismatch;
      }
    }
  }
  const bool pass = worst_mean < 1e-9 && worst_std < 1e-6 && adv_mismatch == 0;
  return {pass, "1000 tables, " + std::to_string(columns) + " columns (" + std::to_string(degenerate) +
                    " degenerate): max |mean| " + fmt(worst_mean, 3) + ", max |std-1| " + fmt(worst_std, 3) +
                    ", advantage mismatches " + std::to_string(adv_mismatch)};
}

// ---------------------------------------------------------------------------
// 3. BLEU against a hand-computed table

std::vector<int> letters(const char* s) {
  std::vector<int> out;
  for (; *s; ++s)
    if (*s != ' ') out.push_back(*s - 'a' + 1);
  return out;
}

Outcome criterion_bleu() {
  const BleuConfig none{4, Smoothing::none};
  const BleuConfig expo{4, Smoothing::exponential};
  struct Case {
    const char* hyp;
    const char* ref;
    BleuConfig cfg;
    double expected;
  };
  // Precisions p_n = matches / candidates; exponential smoothing replaces the
  // k-th zero precision by 1 / (2^k * candidates) and truncates the order to
  // the hypothesis length.
  const std::vector<Case> segments{
      {"a b c d", "a b c d", none, 1.0},
      {"a b c d", "a b c d", expo, 1.0},
      {"a b c d", "a b c e", none, 0.0},
      {"a b c d", "a b c e", expo, std::pow(0.75 * (2.0 / 3) * 0.5 * 0.5, 0.25)},
      {"a b c", "a b c d", none, 0.0},
      {"a b c", "a b c d", expo, std::exp(1.0 - 4.0 / 3)},
      {"a a a a", "a b c d", expo, std::pow(0.25 * (1.0 / 6) * (1.0 / 8) * (1.0 / 8), 0.25)},
      {"a b c d e", "a b c d", none, std::pow(0.8 * 0.75 * (2.0 / 3) * 0.5, 0.25)},
      {"b a", "a b", expo, std::sqrt(0.5)},
      {"e f", "a b c d", expo, 0.25 * std::exp(-1.0)},
      {"a b e", "a b c d", BleuConfig{1, Smoothing::none}, (2.0 / 3) * std::exp(1.0 - 4.0 / 3)},
      {"", "a b", expo, 0.0},
  };
  int failures = 0;
  double worst = 0.0;
  for (const auto& c : segments) {
    const double err = std::abs(bleu(letters(c.hyp), letters(c.ref), c.cfg) - c.expected);
    worst = std::max(worst, err);
    if (!(err < 1e-9)) ++failures;
  }
  struct CorpusCase {
    std::vector<SegmentPair> pairs;
    double expected;
  };
  const std::vector<CorpusCase> corpora{
      {{{letters("a b c d"), letters("a b c d")}, {letters("a b c e"), letters("a b c d")}},
       std::pow((7.0 / 8) * (5.0 / 6) * 0.75 * 0.5, 0.25)},
      {{{letters("a b c"), letters("a b c d")}, {letters("a b c d e"), letters("a b c d")}},
       std::pow((7.0 / 8) * (5.0 / 6) * 0.75 * 0.5, 0.25)},
      {{{letters("a b"), letters("a b c d")}, {letters("a b c d"), letters("a b c d")}},
       std::pow(1.0 * 1.0 * 1.0 * 1.0, 0.25) * std::exp(1.0 - 8.0 / 6)},
  };
  for (const auto& c : corpora) {
    const double err = std::abs(corpus_bleu(c.pairs, none) - c.expected);
    worst = std::max(worst, err);
    if (!(err < 1e-9)) ++failures;
  }
  const int total = static_cast<int>(segments.size() + corpora.size());
  return {failures == 0, std::to_string(total - failures) + "/" + std::to_string(total) +
                             " cases within 1e-9, max abs err " + fmt(worst, 3)};
}

// ---------------------------------------------------------------------------
// 4. clipped surrogate semantics

Outcome criterion_clip() {
  Rng rng(99);
  int term_mismatch = 0, grad_mismatch = 0, fd_mismatch = 0;
  const int trials = 100000;
  for (int k = 0; k < trials; ++k) {
    // Mix continuous draws with exact boundary hits.
    const double eps = rng.uniform(0.01, 0.5);
    double r = rng.uniform(0.0, 3.0);
    if (k % 10 == 0) r = rng.bernoulli(0.5) ? 1.0 + eps : 1.0 - eps;
    const double a = rng.uniform(-2.0, 2.0);
    const double clipped = std::min(std::max(r, 1.0 - eps), 1.0 + eps);
    const double expected = std::min(r * a, clipped * a);
    if (clipped_term(r, a, eps) != expected) ++term_mismatch;
    const bool clipped_smaller = clipped * a < r * a;
    const double g = clipped_term_grad(r, a, eps);
    if ((g == 0.0) != (clipped_smaller || a == 0.0) || (!clipped_smaller && g != a)) ++grad_mismatch;
    // Away from the kinks the derivative matches a finite difference.
    const double h = 1e-7;
    if (std::abs(r - (1.0 + eps)) > 1e-5 && std::abs(r - (1.0 - eps)) > 1e-5) {
      const double fd = (clipped_term(r + h, a, eps) - clipped_term(r - h, a, eps)) / (2 * h);
      if (std::abs(fd - g) > 1e-6) ++fd_mismatch;
    }
  }
  const bool hand = std::abs(clipped_term(1.5, 1.0, 0.2) - 1.2) < 1e-15 && clipped_term(1.5, -1.0, 0.2) == -1.5 &&
                    clipped_term_grad(1.5, 1.0, 0.2) == 0.0 && clipped_term_grad(1.5, -1.0, 0.2) == -1.0;
  const bool pass = hand && term_mismatch == 0 && grad_mismatch == 0 && fd_mismatch == 0;
  return {pass, std::to_string(trials) + " draws: term mismatches " + std::to_string(term_mismatch) +
                    ", gradient-branch mismatches " + std::to_string(grad_mismatch) + ", FD mismatches " +
                    std::to_string(fd_mismatch) + (hand ? "" : ", hand examples FAILED")};
}

// ---------------------------------------------------------------------------
// 5. LAAL and End Offset

double laal_brute(double delta, const std::vector<double>& d, int n_ref) {
  const int n_gen = static_cast<int>(d.size());
  const double gamma = delta / std::max(n_gen, n_ref);
  int tau = n_gen;
  for (int i = 0; i < n_gen; ++i)
    if (d[static_cast<std::size_t>(i)] >= delta) {
      tau = i + 1;
      break;
    }
  double sum = 0.0;
  for (int i = 1; i <= tau; ++i) sum += d[static_cast<std::size_t>(i - 1)] - (i - 1) * gamma;
  return sum / tau;
}

Outcome criterion_latency() {
  const double hand = *laal(LatencyInput{4.0, 4.0, {1, 2, 3, 4}, 4});
  const bool hand_ok = std::abs(hand - 1.0) < 1e-12;
  Rng rng(5);
  double worst = 0.0, worst_eo = 0.0;
  for (int k = 0; k < 100; ++k) {
    const double delta = rng.uniform(0.5, 12.0);
    const double last = delta * rng.uniform(0.7, 1.0);
    std::vector<double> d(static_cast<std::size_t>(rng.uniform_int(1, 15)));
    for (double& x : d) x = rng.uniform(0.0, 1.4 * delta);
    std::sort(d.begin(), d.end());
    const int n_ref = rng.uniform_int(1, 15);
    const LatencyInput in{delta, last, d, n_ref};
    worst = std::max(worst, std::abs(*laal(in) - laal_brute(delta, d, n_ref)));
    worst_eo = std::max(worst_eo, std::abs(*end_offset(in) - (d.back() - last)));
  }
  const bool pass = hand_ok && worst < 1e-12 && worst_eo < 1e-12;
  return {pass, "hand example LAAL " + fmt(hand, 15) + "; 100 random inputs: max |LAAL err| " + fmt(worst, 3) +
                    ", max |EndOffset err| " + fmt(worst_eo, 3)};
}

// ---------------------------------------------------------------------------
// CLI-driven criteria

struct Harness {
  std::string cli;
  std::string config;
  fs::path workdir;
  int commands = 0;

  // Runs one CLI command; output goes to a numbered log file in the workdir.
  int run(const std::string& args, const fs::path& wd) {
    fs::create_directories(wd);
    const fs::path out = wd / ("cmd_" + std::to_string(++commands) + ".out");
    const std::string cmd =
        "\"" + cli + "\" -c \"" + config + "\" -w \"" + wd.string() + "\" " + args + " > \"" + out.string() + "\" 2>&1";
    const int rc = std::system(cmd.c_str());
    if (rc != 0) std::cerr << "command failed (" << rc << "): " << cmd << '\n';
    return rc;
  }
  int run(const std::string& args) { return run(args, workdir); }

  fs::path log(const std::string& name) const { return workdir / "logs" / (name + ".jsonl"); }
};

nlohmann::json last_record(const fs::path& log, const std::string& type) {
  nlohmann::json found;
  for (const auto& r : read_jsonl(log))
    if (r.value("type", "") == type) found = r;
  if (found.is_null()) throw DataError(log.string() + ": no '" + type + "' record");
  return found;
}

const std::vector<int> kSeeds{1, 2, 3};

std::string rl_name(const std::string& tag, double alpha, int seed) {
  return "acc_" + tag + "_a" + fmt(alpha) + "_s" + std::to_string(seed);
}

// Final validation (BLEU, text LAAL) of a set of RL runs, averaged over seeds.
struct Averages {
  double bleu = 0.0;
  double laal = 0.0;
};

Averages run_rl_seeds(Harness& h, const std::string& ablation, double alpha, const std::string& record,
                      bool& ok) {
  Averages avg;
  for (int s : kSeeds) {
    const auto name = rl_name(ablation, alpha, s);
    if (!fs::exists(h.log(name)) || !fs::exists(h.workdir / "checkpoints" / name / "best.ckpt")) {
      if (h.run("train-rl --ablation " + ablation + " --alpha " + fmt(alpha) + " --seed " + std::to_string(s) +
                " --name " + name) != 0) {
        ok = false;
        return avg;
      }
    }
    const auto r = last_record(h.log(name), record);
    avg.bleu += r.at("bleu").get<double>() / static_cast<double>(kSeeds.size());
    avg.laal += r.at("text_laal").get<double>() / static_cast<double>(kSeeds.size());
  }
  return avg;
}

bool ensure_data(Harness& h) {
  if (fs::exists(h.workdir / "data" / "valid.jsonl")) return true;
  return h.run("synth-data") == 0;
}

bool ensure_base(Harness& h, const std::string& ablation, double* secs = nullptr) {
  const std::string tag = ablation == "none" ? "base" : ablation;
  if (fs::exists(h.workdir / "checkpoints" / ("sl_" + tag + ".ckpt")) && fs::exists(h.log("sl_" + tag))) {
    try {
      last_record(h.log("sl_" + tag), "final");
      return true;
    } catch (const DataError&) {
    }
  }
  const auto t0 = std::chrono::steady_clock::now();
  const bool ok = ensure_data(h) && h.run("train-sl --ablation " + ablation) == 0;
  if (secs) *secs = seconds_since(t0);
  return ok;
}

Outcome criterion_learnability(Harness& h) {
  double secs = -1.0;
  if (!ensure_base(h, "none", &secs)) return {false, "train-sl failed"};
  const auto fin = last_record(h.log("sl_base"), "final");
  const int steps = fin.at("step").get<int>();
  const double b = fin.at("valid_bleu").get<double>();
  const bool pass = b >= 0.90 && steps <= 5000 && secs < 1800.0;
  return {pass, "valid corpus BLEU " + fmt(b) + " after " + std::to_string(steps) + " steps" +
                    (secs >= 0 ? ", " + fmt(secs, 3) + " s" : " (reused checkpoint)")};
}

Outcome criterion_alpha_trend(Harness& h) {
  if (!ensure_base(h, "none")) return {false, "train-sl failed"};
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  const auto lo = run_rl_seeds(h, "none", 0.1, "validation", ok);
  const auto hi = run_rl_seeds(h, "none", 0.9, "validation", ok);
  if (!ok) return {false, "train-rl failed"};
  const double secs = seconds_since(t0);
  const bool pass = lo.laal < hi.laal && hi.bleu >= lo.bleu && secs < 7200.0;
  return {pass, "alpha=0.1: LAAL " + fmt(lo.laal) + " BLEU " + fmt(lo.bleu) + "; alpha=0.9: LAAL " + fmt(hi.laal) +
                    " BLEU " + fmt(hi.bleu) + "; " + fmt(secs, 3) + " s"};
}

double reference_alpha(const Harness& h) {
  std::ifstream in(h.config);
  const auto j = nlohmann::json::parse(in, nullptr, true, true);
  return j.value(nlohmann::json::json_pointer("/rl/reward/alpha"), 0.4);
}

Outcome criterion_latency_vs_base(Harness& h) {
  if (!ensure_base(h, "none")) return {false, "train-sl failed"};
  const double alpha = reference_alpha(h);
  bool ok = true;
  const auto sel = run_rl_seeds(h, "none", alpha, "selected", ok);
  if (!ok) return {false, "train-rl failed"};
  const auto base = last_record(h.log(rl_name("none", alpha, kSeeds.front())), "base");
  const double base_laal = base.at("text_laal").get<double>();
  const double base_bleu = base.at("bleu").get<double>();
  const double gain = (base_laal - sel.laal) / base_laal;
  const double drop = base_bleu - sel.bleu;
  const bool pass = gain >= 0.10 && drop <= 0.03;
  return {pass, "base LAAL " + fmt(base_laal) + " BLEU " + fmt(base_bleu) + " -> selected LAAL " + fmt(sel.laal) +
                    " BLEU " + fmt(sel.bleu) + " (LAAL -" + fmt(100 * gain, 3) + "%, BLEU change " +
                    fmt(-drop, 3) + ")"};
}

Outcome criterion_ablation_b(Harness& h) {
  if (!ensure_base(h, "none") || !ensure_base(h, "B")) return {false, "train-sl failed"};
  const double alpha = reference_alpha(h);
  bool ok = true;
  const auto ref = run_rl_seeds(h, "none", alpha, "validation", ok);
  const auto abl = run_rl_seeds(h, "B", alpha, "validation", ok);
  if (!ok) return {false, "train-rl failed"};
  return {abl.laal > ref.laal, "final text LAAL: ablation B " + fmt(abl.laal) + " vs reference " + fmt(ref.laal)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome criterion_determinism(Harness& h) {
  const fs::path wd = h.workdir / "determinism";
  const fs::path keep = h.workdir / "determinism_first";
  const std::vector<std::string> commands{
      "synth-data",
      "train-sl --steps 60",
      "train-rl --updates 6 --name det",
      "eval --checkpoint \"" + (wd / "checkpoints" / "det" / "best.ckpt").string() + "\"",
  };
  const std::vector<fs::path> artifacts{
      "data/train.jsonl",  "logs/sl_base.jsonl",      "logs/det.jsonl",
      "logs/eval_valid.json", "checkpoints/sl_base.ckpt", "checkpoints/det/best.ckpt",
  };
  fs::remove_all(keep);
  for (int pass = 0; pass < 2; ++pass) {
    fs::remove_all(wd);
    for (const auto& c : commands)
      if (h.run(c, wd) != 0) return {false, "command failed: " + c};
    if (pass == 0) fs::rename(wd, keep);
  }
  int identical = 0;
  std::string differing;
  for (const auto& a : artifacts) {
    if (fs::exists(wd / a) && slurp(wd / a) == slurp(keep / a))
      ++identical;
    else
      differing += " " + a.string();
  }
  const int total = static_cast<int>(artifacts.size());
  return {identical == total, std::to_string(identical) + "/" + std::to_string(total) +
                                  " artifacts byte-identical across reruns" +
                                  (differing.empty() ? "" : ", differing:" + differing)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"simulrl acceptance checks"};
  Harness h;
  std::string workdir = "acceptance_work";
  std::vector<int> only;
  bool fresh = false;
  app.add_option("--cli", h.cli, "Path to the simulrl executable")->required();
  app.add_option("--config", h.config, "Run config used by CLI-driven criteria")->required();
  app.add_option("--workdir", workdir, "Scratch directory for CLI-driven criteria");
  app.add_option("--only", only, "Run only these criteria");
  app.add_flag("--fresh", fresh, "Delete the scratch directory first");
  CLI11_PARSE(app, argc, argv);
  h.workdir = fs::absolute(workdir);
  if (fresh) fs::remove_all(h.workdir);
  fs::create_directories(h.workdir);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient exactness", criterion_gradients},
      {"reward algebra", criterion_reward_algebra},
      {"BLEU oracle", criterion_bleu},
      {"clip semantics", criterion_clip},
      {"LAAL / End Offset", criterion_latency},
      {"supervised learnability", [&] { return criterion_learnability(h); }},
      {"RL alpha trade-off", [&] { return criterion_alpha_trend(h); }},
      {"RL latency vs base", [&] { return criterion_latency_vs_base(h); }},
      {"ablation B direction", [&] { return criterion_ablation_b(h); }},
      {"determinism", [&] { return criterion_determinism(h); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << "criterion " << id << " [" << criteria[i].first << "]: " << (o.pass ? "PASS" : "FAIL") << " - "
              << o.detail << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
