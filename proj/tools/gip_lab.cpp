#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "commands.hpp"

namespace {

template <typename T>
std::vector<T> parse_list(const std::string& s) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !is.eof()) throw giplab::ConfigError("bad list item '" + item + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace giplab::cli;
  CLI::App app{"gip-lab: graph interplay self-supervised learning toolkit"};
  app.require_subcommand(1);

  PretrainOptions pre;
  std::uint64_t pre_seed = 0;
  std::string pre_dataset;
  double pre_p1 = -1, pre_p2 = -1;
  auto* c_pre = app.add_subcommand("pretrain", "pretrain an encoder, write checkpoint + loss trace");
  c_pre->add_option("--config", pre.config_path, "config file (key = value)")->required();
  auto* pre_seed_opt = c_pre->add_option("--seed", pre_seed, "training seed override");
  auto* pre_ds_opt = c_pre->add_option("--dataset", pre_dataset, "synth-2M | tud:PATH:NAME");
  auto* pre_p1_opt = c_pre->add_option("--p1", pre_p1, "view-1 probability override");
  auto* pre_p2_opt = c_pre->add_option("--p2", pre_p2, "view-2 probability override");
  c_pre->add_option("--out", pre.out_dir, "output directory");

  ProbeOptions probe;
  std::uint64_t probe_seed = 0;
  auto* c_probe = app.add_subcommand("probe", "linear probe + CMSP of a checkpoint, append to metrics.csv");
  c_probe->add_option("--checkpoint", probe.checkpoint, "checkpoint path")->required();
  c_probe->add_option("--dataset", probe.dataset, "synth-2M | tud:PATH:NAME");
  c_probe->add_option("--folds", probe.folds, "cross-validation folds");
  auto* probe_seed_opt = c_probe->add_option("--seed", probe_seed, "fold seed (default: checkpoint seed)");
  c_probe->add_option("--out", probe.out_dir, "output directory");

  SweepOptions sweep;
  std::string grid = "0.05,0.5,0.9", seeds = "1,2,3,4,5", sweep_dataset;
  auto* c_sweep = app.add_subcommand("sweep", "(p1, p2) grid of pretrain + probe runs");
  c_sweep->add_option("--config", sweep.config_path, "base config file")->required();
  c_sweep->add_option("--grid", grid, "comma-separated probabilities used for both axes");
  c_sweep->add_option("--seeds", seeds, "comma-separated seeds");
  auto* sweep_ds_opt = c_sweep->add_option("--dataset", sweep_dataset, "synth-2M | tud:PATH:NAME");
  c_sweep->add_option("--out", sweep.out_dir, "output directory");

  LemmaOptions lemma;
  std::uint64_t lemma_seed = 0;
  std::string lemma_dataset, lemma_ckpt;
  auto* c_lemma = app.add_subcommand("lemma-check", "verify the GIP decomposition residual, print JSON");
  c_lemma->add_option("--config", lemma.config_path, "config file")->required();
  c_lemma->add_option("--p", lemma.p, "inter-graph edge probability");
  auto* lemma_seed_opt = c_lemma->add_option("--seed", lemma_seed, "seed override");
  auto* lemma_ds_opt = c_lemma->add_option("--dataset", lemma_dataset, "synth-2M | tud:PATH:NAME");
  auto* lemma_ck_opt = c_lemma->add_option("--checkpoint", lemma_ckpt, "use trained encoder weights");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c_pre) {
      if (*pre_seed_opt) pre.seed = pre_seed;
      if (*pre_ds_opt) pre.dataset = pre_dataset;
      if (*pre_p1_opt) pre.p1 = pre_p1;
      if (*pre_p2_opt) pre.p2 = pre_p2;
      const auto out = cmd_pretrain(pre);
      std::cout << "checkpoint: " << out.checkpoint.string() << "\nloss trace: " << out.loss_trace.string()
                << "\nmanifest: " << out.manifest.string() << '\n';
    } else if (*c_probe) {
      if (*probe_seed_opt) probe.seed = probe_seed;
      const auto row = cmd_probe(probe);
      std::cout << MetricsRecord::header() << '\n' << row.row() << '\n';
    } else if (*c_sweep) {
      sweep.grid = parse_list<double>(grid);
      sweep.seeds = parse_list<std::uint64_t>(seeds);
      if (*sweep_ds_opt) sweep.dataset = sweep_dataset;
      const auto cells = cmd_sweep(sweep);
      std::size_t failed = 0;
      for (const auto& c : cells) failed += c.status != "ok";
      std::cout << cells.size() << " cells, " << failed << " failed; see " << sweep.out_dir << "/sweep.csv\n";
    } else if (*c_lemma) {
      if (*lemma_seed_opt) lemma.seed = lemma_seed;
      if (*lemma_ds_opt) lemma.dataset = lemma_dataset;
      if (*lemma_ck_opt) lemma.checkpoint = lemma_ckpt;
      return cmd_lemma_check(lemma, std::cout).exit_code;
    }
  } catch (const giplab::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
