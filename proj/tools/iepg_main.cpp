#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "iepg/checkpoint.hpp"
#include "iepg/config.hpp"
#include "iepg/metrics.hpp"
#include "iepg/pose.hpp"
#include "iepg/train.hpp"

namespace fs = std::filesystem;
using namespace iepg;

namespace {

std::uint64_t env_seed(std::uint64_t fallback) {
  if (const char* env = std::getenv("IEPG_SEED")) return std::strtoull(env, nullptr, 10);
  return fallback;
}

int cmd_dataset(const std::string& out, int persons, double yaw_step, int size,
                std::uint64_t seed) {
  Dataset ds = gen_dataset(persons, yaw_step, size, env_seed(seed));
  write_dataset(ds, out);
  const std::uint64_t digest = dataset_digest(out);
  std::cout << "dataset: " << ds.persons.size() << " persons, " << ds.frame_count()
            << " frames at " << out << "\n";
  std::cout << "digest: " << std::hex << digest << std::dec << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& stage,
              const std::string& gec_ckpt_path) {
  RunConfig cfg = RunConfig::from_json_file(config_path);
  if (cfg.dataset.empty()) {
    std::cerr << "train: config must set 'dataset'\n";
    return 2;
  }
  Dataset ds = load_dataset(cfg.dataset);
  if (!cfg.out_dir.empty()) fs::create_directories(cfg.out_dir);
  const std::string log_path =
      cfg.out_dir.empty() ? "" : cfg.out_dir + "/" + stage + "_loss.log";

  if (stage == "gec") {
    Checkpoint ck = train_gec(ds, cfg, log_path);
    ck.save(cfg.out_dir + "/gec.ckpt");
    std::cout << "wrote " << cfg.out_dir << "/gec.ckpt\n";
    return 0;
  }
  if (stage == "pis") {
    std::string gp = gec_ckpt_path.empty() ? cfg.out_dir + "/gec.ckpt" : gec_ckpt_path;
    if (!fs::exists(gp)) {
      std::cerr << "train pis: missing prerequisite gec checkpoint at " << gp << "\n";
      return 2;
    }
    Checkpoint gec_ck = Checkpoint::load(gp);
    Checkpoint ck = train_pis(ds, gec_ck, cfg, log_path);
    ck.save(cfg.out_dir + "/pis.ckpt");
    std::cout << "wrote " << cfg.out_dir << "/pis.ckpt\n";
    return 0;
  }
  std::cerr << "train: stage must be gec or pis\n";
  return 2;
}

int cmd_infer(const std::string& gec_path, const std::string& pis_path,
              const std::string& dataset_path, int person, double source_yaw, double target_yaw,
              int increments, const std::string& out, std::uint64_t z_seed) {
  Dataset ds = load_dataset(dataset_path);
  if (person < 0 || person >= static_cast<int>(ds.persons.size())) {
    std::cerr << "infer: invalid person id " << person << "\n";
    return 2;
  }
  const DatasetPerson& dp = ds.persons[static_cast<std::size_t>(person)];
  auto find_frame = [&](double yaw) -> const DatasetFrame* {
    for (const auto& f : dp.frames)
      if (std::abs(f.yaw - yaw) < 1e-9) return &f;
    return nullptr;
  };
  const DatasetFrame* sf = find_frame(source_yaw);
  if (!sf) {
    std::cerr << "infer: no frame at source yaw " << source_yaw << "\n";
    return 2;
  }
  GecModel gec = gec_from_checkpoint(Checkpoint::load(gec_path));
  FusionModel model = fusion_from_checkpoint(Checkpoint::load(pis_path));
  PoseSkeleton tgt_skel = skeleton_at_yaw(dp.person, target_yaw);
  SourceBundle src = make_source_bundle(dp.person, sf->skel, ds.image_size);
  SynthOptions so;
  so.frames = increments + 2;
  so.z_seed = env_seed(z_seed);
  SynthResult r = synthesize_full(dp.person, src, sf->skel, tgt_skel, gec, model, so);

  fs::create_directories(out);
  for (std::size_t t = 0; t < r.seq.size(); ++t) {
    char stub[32];
    std::snprintf(stub, sizeof(stub), "t%02d", static_cast<int>(t));
    write_ppm((fs::path(out) / (std::string(stub) + "_image.ppm")).string(), r.seq[t].image);
    write_semantics_ppm((fs::path(out) / (std::string(stub) + "_sem.ppm")).string(), r.seq[t].sem);
    // skeleton overlay: keypoint markers over the frame
    Tensor overlay = detach(r.seq[t].image);
    Tensor hm = render_heatmaps(r.seq[t].skel, ds.image_size);
    const std::int64_t plane = static_cast<std::int64_t>(ds.image_size) * ds.image_size;
    for (std::int64_t i = 0; i < plane; ++i) {
      double m = 0.0;
      for (int k = 0; k < kNumKeypoints; ++k) m = std::max(m, hm[k * plane + i]);
      overlay.mut(i) = std::min(1.0, overlay[i] + m);
      overlay.mut(plane + i) = overlay[plane + i] * (1.0 - 0.8 * m);
      overlay.mut(2 * plane + i) = overlay[2 * plane + i] * (1.0 - 0.8 * m);
    }
    write_ppm((fs::path(out) / (std::string(stub) + "_skel.ppm")).string(), overlay);
  }
  std::cout << "wrote " << (r.seq.size() - 1) << " generated frames (+source) to " << out << "\n";
  return 0;
}

int cmd_eval(const std::string& gec_path, const std::string& pis_path,
             const std::string& dataset_path, const std::string& pairs_mode, int sampled,
             int frames, const std::string& report_path) {
  Dataset ds = load_dataset(dataset_path);
  GecModel gec = gec_from_checkpoint(Checkpoint::load(gec_path));
  FusionModel model = fusion_from_checkpoint(Checkpoint::load(pis_path));
  EvalOptions opt;
  opt.exhaustive = pairs_mode == "exhaustive";
  opt.sampled = sampled;
  opt.frames = frames;
  MetricReport rep = eval_report(ds, gec, model, opt);
  {
    Checkpoint ck = Checkpoint::load(pis_path);
    RunConfig cfg = RunConfig::from_json(ck.config_json);
    rep.variant = cfg.variant;
  }
  std::cout << rep.to_table();
  if (!report_path.empty()) {
    std::ofstream f(report_path, std::ios::trunc);
    if (!f) {
      std::cerr << "eval: cannot write report to " << report_path << "\n";
      return 2;
    }
    f << rep.to_json() << "\n";
    std::cout << "report: " << report_path << "\n";
  }
  return 0;
}

struct ArmResult {
  std::string name;
  double ssim = 0.0, psnr = 0.0;
};

void print_arms(const std::vector<ArmResult>& arms) {
  std::printf("%-24s %-10s %-10s\n", "arm", "ssim", "psnr");
  for (const auto& a : arms) std::printf("%-24s %-10.4f %-10.3f\n", a.name.c_str(), a.ssim, a.psnr);
}

int cmd_ablate(const std::string& config_path, const std::string& arm, const std::string& out_dir,
               int eval_pairs) {
  RunConfig base = RunConfig::from_json_file(config_path);
  Dataset ds = load_dataset(base.dataset);
  fs::create_directories(out_dir);
  base.out_dir = "";  // arms manage their own artifacts

  Checkpoint gec_ck = train_gec(ds, base);
  gec_ck.save(out_dir + "/gec.ckpt");
  GecModel gec = gec_from_checkpoint(gec_ck);

  auto run_arm = [&](const std::string& name, RunConfig cfg, int eval_frames,
                     std::vector<int> skip = {}) {
    Checkpoint ck = train_pis(ds, gec_ck, cfg);
    ck.save(out_dir + "/pis_" + name + ".ckpt");
    FusionModel model = fusion_from_checkpoint(ck);
    EvalOptions eo;
    eo.sampled = eval_pairs;
    eo.frames = eval_frames;
    eo.skip = std::move(skip);
    MetricReport rep = eval_report(ds, gec, model, eo);
    return ArmResult{name, rep.mean_ssim, rep.mean_psnr};
  };

  std::vector<ArmResult> arms;
  if (arm == "increments") {
    for (int inc : {0, 1, 2, 5}) {
      RunConfig cfg = base;
      cfg.frames = inc + 2;
      arms.push_back(run_arm("inc" + std::to_string(inc), cfg, cfg.frames));
    }
  } else if (arm == "removal") {
    RunConfig cfg = base;
    cfg.frames = 7;
    Checkpoint ck = train_pis(ds, gec_ck, cfg);
    ck.save(out_dir + "/pis_full.ckpt");
    FusionModel model = fusion_from_checkpoint(ck);
    Rng rng(base.seed ^ 0xab1a7eULL);
    for (int removed : {0, 1, 2, 3}) {
      std::vector<int> skip;
      while (static_cast<int>(skip.size()) < removed) {
        int cand = 1 + static_cast<int>(rng.randint(5));
        if (std::find(skip.begin(), skip.end(), cand) == skip.end()) skip.push_back(cand);
      }
      EvalOptions eo;
      eo.sampled = eval_pairs;
      eo.frames = 7;
      eo.skip = skip;
      MetricReport rep = eval_report(ds, gec, model, eo);
      arms.push_back({"removed" + std::to_string(removed), rep.mean_ssim, rep.mean_psnr});
    }
  } else if (arm == "knockouts") {
    arms.push_back(run_arm("baseline", base, base.frames));
    for (const std::string& name : {"no_tpkf", "no_iec", "no_msc", "no_eada", "ie6", "ie9"}) {
      RunConfig cfg = base;
      if (name == "no_tpkf") cfg.no_tpkf = true;
      else if (name == "no_iec") cfg.no_iec = true;
      else if (name == "no_msc") cfg.no_msc = true;
      else if (name == "no_eada") cfg.no_eada = true;
      else if (name == "ie6") cfg.ie_depth = 6;
      else if (name == "ie9") cfg.ie_depth = 9;
      arms.push_back(run_arm(name, cfg, cfg.frames));
    }
  } else {
    std::cerr << "ablate: unknown arm '" << arm << "' (increments|removal|knockouts)\n";
    return 2;
  }

  print_arms(arms);
  nlohmann::json j = nlohmann::json::array();
  for (const auto& a : arms) j.push_back({{"arm", a.name}, {"ssim", a.ssim}, {"psnr", a.psnr}});
  std::ofstream f(out_dir + "/ablation.json", std::ios::trunc);
  f << j.dump(1) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"incremental evolution pose generation"};
  app.require_subcommand(1);

  auto* d = app.add_subcommand("dataset", "generate the turning-figure dataset");
  std::string d_out = "dataset";
  int d_persons = 28, d_size = 64;
  double d_step = 15.0;
  std::uint64_t d_seed = 1;
  d->add_option("--out", d_out, "output directory");
  d->add_option("--persons", d_persons, "number of persons");
  d->add_option("--yaw-step", d_step, "yaw step in degrees");
  d->add_option("--size", d_size, "image size");
  d->add_option("--seed", d_seed, "dataset seed");

  auto* t = app.add_subcommand("train", "train one stage");
  std::string t_config, t_stage = "gec", t_gec;
  t->add_option("--config", t_config, "run config JSON")->required();
  t->add_option("--stage", t_stage, "gec or pis")->required();
  t->add_option("--gec-ckpt", t_gec, "gec checkpoint (pis stage)");

  auto* i = app.add_subcommand("infer", "synthesize a target pose with intermediates");
  std::string i_gec, i_pis, i_ds, i_out = "infer_out";
  int i_person = 0, i_inc = 5;
  double i_src = 0.0, i_tgt = 90.0;
  std::uint64_t i_zseed = 17;
  i->add_option("--gec", i_gec)->required();
  i->add_option("--pis", i_pis)->required();
  i->add_option("--dataset", i_ds)->required();
  i->add_option("--person", i_person);
  i->add_option("--source-yaw", i_src);
  i->add_option("--target-yaw", i_tgt);
  i->add_option("--increments", i_inc, "intermediate frames between source and target");
  i->add_option("--out", i_out);
  i->add_option("--z-seed", i_zseed);

  auto* e = app.add_subcommand("eval", "score test pairs");
  std::string e_gec, e_pis, e_ds, e_pairs = "sampled", e_report = "report.json";
  int e_n = 48, e_frames = 7;
  e->add_option("--gec", e_gec)->required();
  e->add_option("--pis", e_pis)->required();
  e->add_option("--dataset", e_ds)->required();
  e->add_option("--pairs", e_pairs, "exhaustive or sampled");
  e->add_option("--n", e_n, "sample count");
  e->add_option("--frames", e_frames, "evolution frames incl. endpoints");
  e->add_option("--report", e_report, "report JSON path");

  auto* a = app.add_subcommand("ablate", "run a study arm");
  std::string a_config, a_arm = "increments", a_out = "ablation_out";
  int a_pairs = 24;
  a->add_option("--config", a_config)->required();
  a->add_option("--arm", a_arm, "increments, removal or knockouts");
  a->add_option("--out", a_out);
  a->add_option("--eval-pairs", a_pairs);

  CLI11_PARSE(app, argc, argv);

  try {
    if (d->parsed()) return cmd_dataset(d_out, d_persons, d_step, d_size, d_seed);
    if (t->parsed()) return cmd_train(t_config, t_stage, t_gec);
    if (i->parsed()) return cmd_infer(i_gec, i_pis, i_ds, i_person, i_src, i_tgt, i_inc, i_out, i_zseed);
    if (e->parsed()) return cmd_eval(e_gec, e_pis, e_ds, e_pairs, e_n, e_frames, e_report);
    if (a->parsed()) return cmd_ablate(a_config, a_arm, a_out, a_pairs);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 2;
}
