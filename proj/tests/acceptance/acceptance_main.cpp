// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria 2-5 share one training campaign over three seeds.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "iepg/losses.hpp"
#include "iepg/metrics.hpp"
#include "iepg/train.hpp"

using namespace iepg;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<CriterionResult> g_results;

void record(int id, const std::string& name, bool pass, const std::string& detail) {
  g_results.push_back({id, name, pass, detail});
  std::fprintf(stderr, "  -> criterion %d %s: %s\n", id, pass ? "ok" : "FAILED", detail.c_str());
}

std::string fmt(double v, int prec = 4) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

// ---------------------------------------------------------------------------
// campaign configuration: 8 persons, 64x64, variant S, desk-scale widths
// ---------------------------------------------------------------------------

constexpr int kCampaignSeeds = 3;
constexpr int kGecSteps = 900;
constexpr int kPisSteps = 110;
constexpr int kEvalPairs = 32;
constexpr double kArmBudgetSeconds = 1800.0;  // 30 min per arm, hard cap

RunConfig campaign_cfg(std::uint64_t seed) {
  RunConfig c;
  c.seed = seed;
  c.image_size = 64;
  c.variant = "S";
  c.lr = 2e-4;
  c.gec_steps = kGecSteps;
  c.pis_steps = kPisSteps;
  c.frames = 7;
  c.queue_capacity = 2;
  c.d_model = 48;
  c.n_heads = 2;
  c.gec_dh = 128;
  c.enc_c1 = 12;
  c.dec_c1 = 20;
  c.dec_c2 = 10;
  c.disc_c = 12;
  c.iec_base = 6;
  c.log_every = 0;
  c.ckpt_every = 0;
  return c;
}

struct SeedRun {
  Dataset ds;
  Checkpoint gec_ck;
  GecEvalStats gec_stats;
  // mean test SSIM per increment arm {0,1,2,5}
  std::vector<double> arm_ssim;
  double full_ssim = 0.0;     // the 5-increment arm re-evaluated (frames 7)
  double removed_ssim = 0.0;  // same model with 2 of 5 intermediates removed
  double max_arm_seconds = 0.0;
  Checkpoint pis_inc5;
};

SeedRun run_campaign_seed(int round) {
  const std::uint64_t seed = 100 + static_cast<std::uint64_t>(round);
  SeedRun out;
  out.ds = gen_dataset(8, 15.0, 64, seed);
  RunConfig cfg = campaign_cfg(seed);

  std::fprintf(stderr, "[campaign %d] training gec (%d steps)\n", round, cfg.gec_steps);
  out.gec_ck = train_gec(out.ds, cfg);
  GecModel gec = gec_from_checkpoint(out.gec_ck);
  out.gec_stats = eval_gec(out.ds, gec, cfg.frames, 24, 555);
  std::fprintf(stderr, "[campaign %d] gec endpoints %.4f / %.4f\n", round,
               out.gec_stats.first_frame_err, out.gec_stats.last_frame_err);

  const int increments[4] = {0, 1, 2, 5};
  for (int a = 0; a < 4; ++a) {
    RunConfig arm = cfg;
    arm.frames = increments[a] + 2;
    const auto t0 = Clock::now();
    Checkpoint ck = train_pis(out.ds, out.gec_ck, arm);
    const double train_s = seconds_since(t0);
    out.max_arm_seconds = std::max(out.max_arm_seconds, train_s);
    FusionModel model = fusion_from_checkpoint(ck);
    EvalOptions eo;
    eo.sampled = kEvalPairs;
    eo.frames = arm.frames;
    MetricReport rep = eval_report(out.ds, gec, model, eo);
    out.arm_ssim.push_back(rep.mean_ssim);
    std::fprintf(stderr, "[campaign %d] arm inc%d ssim %.4f (train %.0fs)\n", round,
                 increments[a], rep.mean_ssim, train_s);
    if (increments[a] == 5) out.pis_inc5 = ck;
  }

  {  // intermediate removal on the 5-increment model
    FusionModel model = fusion_from_checkpoint(out.pis_inc5);
    EvalOptions full;
    full.sampled = kEvalPairs;
    full.frames = 7;
    out.full_ssim = eval_report(out.ds, gec, model, full).mean_ssim;
    Rng rng(seed ^ 0xab1a7eULL);
    EvalOptions removed = full;
    while (removed.skip.size() < 2) {
      const int cand = 1 + static_cast<int>(rng.randint(5));
      if (std::find(removed.skip.begin(), removed.skip.end(), cand) == removed.skip.end())
        removed.skip.push_back(cand);
    }
    out.removed_ssim = eval_report(out.ds, gec, model, removed).mean_ssim;
    std::fprintf(stderr, "[campaign %d] removal %.4f -> %.4f\n", round, out.full_ssim,
                 out.removed_ssim);
  }
  return out;
}

// ---------------------------------------------------------------------------
// criterion 1: gradient integrity
// ---------------------------------------------------------------------------

void criterion_gradients() {
  const auto t0 = Clock::now();
  double worst_op = 0.0, worst_e2e = 0.0;

  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(9000 + static_cast<std::uint64_t>(seed));
    auto r = [&](Shape s) { return Tensor::randu(rng, std::move(s), -1.0, 1.0); };
    auto gc = [&](std::function<Tensor(std::vector<Tensor>&)> f, std::vector<Tensor> in) {
      worst_op = std::max(worst_op, grad_check(std::move(f), std::move(in), 1e-5));
    };
    {
      Tensor a = r({2, 3}), b = r({2, 3});
      gc([](std::vector<Tensor>& in) {
        return sum_all(mul(add(in[0], in[1]), sub(in[0], in[1])));
      }, {a, b});
    }
    {
      Tensor a = r({3, 4}), b = r({4, 2});
      gc([](std::vector<Tensor>& in) { return sum_all(square(matmul(in[0], in[1]))); }, {a, b});
    }
    {
      Tensor x = r({2, 6, 6}), k = r({2, 2, 3, 3});
      gc([](std::vector<Tensor>& in) {
        return sum_all(square(conv2d(in[0], in[1], 1, 1)));
      }, {x, k});
    }
    {
      Tensor x = r({2, 5}), k = r({2, 2, 3});
      gc([](std::vector<Tensor>& in) { return sum_all(square(conv1d(in[0], in[1], 1))); }, {x, k});
    }
    {
      Tensor x = r({2, 4, 4});
      gc([](std::vector<Tensor>& in) {
        return sum_all(square(instance_norm(upsample2(avg_pool2(in[0])), 1e-5)));
      }, {x});
    }
    {
      Tensor x = r({3, 5});
      gc([](std::vector<Tensor>& in) {
        return sum_all(square(softmax_rows(instance_norm_cols(in[0], 1e-5))));
      }, {x});
    }
    {
      Tensor q = r({4, 6}), k = r({5, 6}), v = r({5, 6});
      gc([](std::vector<Tensor>& in) {
        return sum_all(square(attention(in[0], in[1], in[2], 2)));
      }, {q, k, v});
    }
    {
      Tensor c = r({6, 3}), s = r({6, 3});
      gc([](std::vector<Tensor>& in) { return sum_all(square(adain(in[0], in[1]))); }, {c, s});
    }
    {
      Tensor x = r({1, 5});
      gc([](std::vector<Tensor>& in) {
        Tensor t = add(tanh_t(in[0]), sigmoid(in[0]));
        t = add(t, add(leaky_relu(in[0], 0.2), softplus(in[0])));
        return sum_all(square(t));
      }, {x});
    }
  }

  {  // composite blocks over 20 seeds: SFE, TPKF, IE
    for (int seed = 0; seed < 20; ++seed) {
      Rng rng(9100 + static_cast<std::uint64_t>(seed));
      SfeBlock sfe(rng, 8, 2);
      Tensor x = Tensor::randn(rng, Shape{6, 8});
      ParamList sp;
      sfe.collect(sp, "s");
      worst_op = std::max(worst_op, grad_check(
          [&](std::vector<Tensor>&) { return sum_all(square(sfe.forward(x))); },
          param_tensors(sp), 1e-5));

      TpkfBlock tp(rng, 8, 1, false);
      Tensor fs = Tensor::randn(rng, Shape{6, 8});
      Tensor iec = Tensor::randn(rng, Shape{6, 8});
      ParamList tpp;
      tp.collect(tpp, "t");
      worst_op = std::max(worst_op, grad_check(
          [&](std::vector<Tensor>&) { return sum_all(square(tp.forward(x, fs, iec))); },
          param_tensors(tpp), 1e-5));

      IeBlock ie(rng, 4, 8, true, true);
      Tensor img = Tensor::randu(rng, Shape{4, 6, 6}, -1.0, 1.0);
      ParamList iep;
      ie.collect(iep, "i");
      worst_op = std::max(worst_op, grad_check(
          [&](std::vector<Tensor>&) { return sum_all(square(ie_block_forward(img, ie))); },
          param_tensors(iep), 1e-5));
    }
  }

  {  // GEC generator loss on a tiny model (dh=8, T=3), 20 seeds
    for (int seed = 0; seed < 20; ++seed) {
      GecConfig gcfg;
      gcfg.feat = 16;
      gcfg.dh = 8;
      gcfg.dec_h1 = 12;
      gcfg.dec_h2 = 8;
      gcfg.disc_ch = 8;
      Rng rng(9200 + static_cast<std::uint64_t>(seed));
      GecModel model(rng, gcfg);
      const Person person = random_person(0, rng);
      std::vector<PoseSkeleton> gt;
      for (double y : {0.0, 45.0, 90.0}) gt.push_back(skeleton_at_yaw(person, y));
      Tensor z = Tensor::randn(rng, Shape{1, gcfg.feat});
      // a handful of parameters from every stage keeps 20 seeds under budget
      std::vector<Tensor> picked{model.enc1.w, model.mix2.w,        model.starter.w,
                                 model.fwd[0].u, model.bwd[1].w,    model.fwd[2].u,
                                 model.dec3.w,  model.ds1.k,        model.ds_out.w};
      worst_e2e = std::max(worst_e2e, grad_check(
          [&](std::vector<Tensor>&) {
            auto feats = model.evolve(model.encode(gt.front()), model.encode(gt.back()), z, 3);
            Tensor pose = Tensor::scalar(0.0);
            std::vector<Tensor> coords;
            for (std::size_t t = 0; t < feats.size(); ++t) {
              coords.push_back(model.decode_coords(feats[t]));
              pose = add(pose, loss_pose(coords.back(), gt[t]));
            }
            Tensor adv = loss_sadv_gen(model.discriminate_rows(concat0(coords)));
            return loss_gec(adv, loss_ncons(concat0(coords)), mul_scalar(pose, 1.0 / 3), GecWeights{});
          },
          picked, 1e-5));
    }
  }

  {  // all synthesis losses
    FeaturePyramid pyr(0);
    for (int seed = 0; seed < 20; ++seed) {
      Rng rng(9300 + static_cast<std::uint64_t>(seed));
      Tensor gen = Tensor::randu(rng, Shape{3, 8, 8}, 0.05, 0.95);
      Tensor gt = Tensor::randu(rng, Shape{3, 8, 8}, 0.05, 0.95);
      auto gc1 = [&](std::function<Tensor(std::vector<Tensor>&)> f) {
        worst_op = std::max(worst_op, grad_check(std::move(f), {gen}, 1e-5));
      };
      gc1([&](std::vector<Tensor>& in) { return loss_img(in[0], gt); });
      gc1([&](std::vector<Tensor>& in) { return loss_per(in[0], gt, pyr); });
      gc1([&](std::vector<Tensor>& in) { return loss_style(in[0], gt, pyr); });
      gc1([&](std::vector<Tensor>& in) { return loss_sr(in[0], gt, pyr, 0.5); });
      Tensor scores = Tensor::randu(rng, Shape{3, 1}, 0.2, 0.8);
      Tensor ref = Tensor::randu(rng, Shape{3, 1}, 0.2, 0.8);
      worst_op = std::max(worst_op, grad_check(
          [&](std::vector<Tensor>& in) { return loss_siadv(in[0], ref).g_loss; }, {scores}, 1e-5));
      worst_op = std::max(worst_op, grad_check(
          [&](std::vector<Tensor>& in) { return add(loss_sadv(in[0], ref), loss_sadv_gen(in[0])); },
          {scores}, 1e-5));
    }
  }

  {  // miniature end-to-end synthesis model, 20 seeds
    for (int seed = 0; seed < 20; ++seed) {
      FusionConfig cfg;
      cfg.image_size = 16;
      cfg.d = 8;
      cfg.n_heads = 1;
      cfg.depth = 2;
      cfg.enc_c1 = 6;
      cfg.dec_c1 = 6;
      cfg.dec_c2 = 4;
      cfg.disc_c = 4;
      cfg.iec_base = 4;
      cfg.queue_capacity = 2;
      Rng rng(9400 + static_cast<std::uint64_t>(seed));
      FusionModel model(rng, cfg);
      Rng prng(9500 + static_cast<std::uint64_t>(seed));
      Person person = random_person(0, prng);
      SourceBundle src = make_source_bundle(person, skeleton_at_yaw(person, 0.0), 16);
      TargetBundle tgt = make_target_bundle(person, skeleton_at_yaw(person, 60.0), 16);
      IntermediateQueue q;
      q.capacity = 2;
      q = update_queue(q, src.image);
      std::vector<Tensor> picked{model.sfe[0].q.w, model.tpkf[0].cv.w, model.tpkf[1].ck.w,
                                 model.iec.blocks[0].scale_logits, model.iec_proj.k,
                                 model.pos_fus};
      worst_e2e = std::max(worst_e2e, grad_check(
          [&](std::vector<Tensor>&) {
            Tensor iec_feat = iec_forward(q, model.iec);
            return sum_all(square(model.synthesize_step(src, tgt, iec_feat)));
          },
          picked, 1e-5));
    }
  }

  const double elapsed = seconds_since(t0);
  const bool pass = worst_op < 1e-4 && worst_e2e < 1e-3 && elapsed < 300.0;
  record(1, "gradient integrity", pass,
         "op max " + fmt(worst_op, 8) + ", end-to-end max " + fmt(worst_e2e, 8) + ", " +
             fmt(elapsed, 1) + "s");
}

// ---------------------------------------------------------------------------
// criterion 6: structural invariants
// ---------------------------------------------------------------------------

void criterion_structure() {
  bool pass = true;
  std::string detail;

  {  // IE shape schedule
    Rng rng(61);
    IecConfig cfg;
    cfg.in_channels = 12;
    cfg.base = 32;
    cfg.depth = 3;
    cfg.image_size = 64;
    IecStack stack(rng, cfg);
    IntermediateQueue q;
    q.capacity = 4;
    for (int i = 0; i < 4; ++i) q = update_queue(q, Tensor::randu(rng, Shape{3, 64, 64}, 0.0, 1.0));
    Tensor s1 = ie_block_forward(assemble_input(q), stack.blocks[0]);
    Tensor s2 = ie_block_forward(s1, stack.blocks[1]);
    Tensor s3 = ie_block_forward(s2, stack.blocks[2]);
    const bool ok = s1.shape() == Shape{32, 64, 64} && s2.shape() == Shape{64, 32, 32} &&
                    s3.shape() == Shape{128, 16, 16};
    if (!ok) detail += "ie-schedule ";
    pass = pass && ok;
  }
  {  // attention rows normalized through a whole forward
    Rng rng(62);
    FusionConfig cfg;
    cfg.image_size = 16;
    cfg.d = 8;
    cfg.n_heads = 2;
    cfg.depth = 2;
    cfg.enc_c1 = 6;
    cfg.dec_c1 = 6;
    cfg.dec_c2 = 4;
    cfg.disc_c = 4;
    cfg.iec_base = 4;
    cfg.queue_capacity = 2;
    FusionModel model(rng, cfg);
    Person person = random_person(0, rng);
    SourceBundle src = make_source_bundle(person, skeleton_at_yaw(person, 10.0), 16);
    TargetBundle tgt = make_target_bundle(person, skeleton_at_yaw(person, 80.0), 16);
    IntermediateQueue q;
    q.capacity = 2;
    q = update_queue(q, src.image);
    attn_probe().enabled = true;
    attn_probe().reset();
    (void)model.synthesize_step(src, tgt, iec_forward(q, model.iec));
    attn_probe().enabled = false;
    const bool ok = attn_probe().rows_seen > 0 && attn_probe().max_row_sum_err <= 1e-12;
    if (!ok) detail += "attention-rows ";
    pass = pass && ok;
  }
  {  // adain fixed point and idempotence
    Rng rng(63);
    Tensor a = Tensor::randn(rng, Shape{12, 4});
    Tensor b = Tensor::randn(rng, Shape{12, 4});
    Tensor fixed = adain(a, a);
    Tensor once = adain(a, b);
    Tensor twice = adain(once, b);
    double e1 = 0.0, e2 = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
      e1 = std::max(e1, std::fabs(fixed[i] - a[i]));
      e2 = std::max(e2, std::fabs(twice[i] - once[i]));
    }
    const bool ok = e1 <= 1e-9 && e2 <= 1e-9;
    if (!ok) detail += "adain ";
    pass = pass && ok;
  }
  {  // softmax shift invariance
    Rng rng(64);
    Tensor x = Tensor::randn(rng, Shape{4, 6});
    Tensor s1 = softmax_rows(x);
    Tensor s2 = softmax_rows(add_scalar(x, 41.7));
    double err = 0.0;
    for (std::int64_t i = 0; i < s1.size(); ++i) err = std::max(err, std::fabs(s1[i] - s2[i]));
    for (int row = 0; row < 4; ++row) {
      double sum = 0.0;
      for (int i = 0; i < 6; ++i) sum += s1[row * 6 + i];
      err = std::max(err, std::fabs(sum - 1.0));
    }
    if (err > 1e-12) {
      detail += "softmax ";
      pass = false;
    }
  }
  {  // Eq-4 zero-path collapse
    Rng rng(65);
    TpkfBlock block(rng, 8, 1, false);
    for (auto& v : block.co.w.data()) v = 0.0;
    for (auto& v : block.co.b.data()) v = 0.0;
    Tensor f = Tensor::randn(rng, Shape{6, 8});
    Tensor a = block.forward(f, Tensor::randn(rng, Shape{6, 8}), Tensor::randn(rng, Shape{6, 8}));
    Tensor b = block.forward(f, Tensor::randn(rng, Shape{6, 8}), Tensor::randn(rng, Shape{6, 8}));
    double err = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) err = std::max(err, std::fabs(a[i] - b[i]));
    if (err != 0.0) {
      detail += "zero-path ";
      pass = false;
    }
  }
  record(6, "structural invariants", pass, pass ? "all exact" : ("failed: " + detail));
}

// ---------------------------------------------------------------------------
// criterion 7: metric oracles (oracle bodies live in the test, not the lib)
// ---------------------------------------------------------------------------

double ssim_direct(const Tensor& a, const Tensor& b) {
  const int h = a.dim(1), w = a.dim(2);
  const int win = 11;
  std::vector<double> wt(win * win);
  double wsum = 0.0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      const double dy = i - 5, dx = j - 5;
      wt[static_cast<std::size_t>(i) * win + j] = std::exp(-(dx * dx + dy * dy) / 4.5);
      wsum += wt[static_cast<std::size_t>(i) * win + j];
    }
  for (auto& v : wt) v /= wsum;
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  auto gray = [&](const Tensor& t, int i, int j) {
    const std::int64_t idx = static_cast<std::int64_t>(i) * w + j;
    return (t[idx] + t[plane + idx] + t[2 * plane + idx]) / 3.0;
  };
  double total = 0.0;
  int count = 0;
  for (int i = 0; i + win <= h; ++i)
    for (int j = 0; j + win <= w; ++j) {
      double mx = 0, my = 0, vx = 0, vy = 0, cxy = 0;
      for (int u = 0; u < win; ++u)
        for (int v = 0; v < win; ++v) {
          mx += wt[static_cast<std::size_t>(u) * win + v] * gray(a, i + u, j + v);
          my += wt[static_cast<std::size_t>(u) * win + v] * gray(b, i + u, j + v);
        }
      for (int u = 0; u < win; ++u)
        for (int v = 0; v < win; ++v) {
          const double dx = gray(a, i + u, j + v) - mx;
          const double dy = gray(b, i + u, j + v) - my;
          vx += wt[static_cast<std::size_t>(u) * win + v] * dx * dx;
          vy += wt[static_cast<std::size_t>(u) * win + v] * dy * dy;
          cxy += wt[static_cast<std::size_t>(u) * win + v] * dx * dy;
        }
      total += ((2 * mx * my + 1e-4) * (2 * cxy + 9e-4)) /
               ((mx * mx + my * my + 1e-4) * (vx + vy + 9e-4));
      ++count;
    }
  return total / count;
}

void criterion_metrics() {
  double worst_ssim = 0.0, worst_psnr = 0.0;
  for (int i = 0; i < 100; ++i) {
    Rng rng(7000 + static_cast<std::uint64_t>(i));
    Tensor a = Tensor::randu(rng, Shape{3, 16, 16}, 0.0, 1.0);
    Tensor b = Tensor::randu(rng, Shape{3, 16, 16}, 0.0, 1.0);
    worst_ssim = std::max(worst_ssim, std::fabs(ssim(a, b) - ssim_direct(a, b)));
    double mse = 0.0;
    for (std::int64_t j = 0; j < a.size(); ++j) mse += (a[j] - b[j]) * (a[j] - b[j]);
    mse /= static_cast<double>(a.size());
    worst_psnr = std::max(worst_psnr, std::fabs(psnr(a, b) - 10.0 * std::log10(1.0 / mse)));
  }
  Rng rng(7777);
  Tensor x = Tensor::randu(rng, Shape{3, 16, 16}, 0.0, 1.0);
  const bool fixed_point = std::fabs(ssim(x, x) - 1.0) <= 1e-12;
  const bool cap = psnr(x, x) == 100.0;
  const bool pass = worst_ssim < 1e-10 && worst_psnr < 1e-10 && fixed_point && cap;
  record(7, "metric oracles", pass,
         "ssim dev " + fmt(worst_ssim, 14) + ", psnr dev " + fmt(worst_psnr, 14) +
             (fixed_point ? "" : ", fixed point broken") + (cap ? "" : ", cap broken"));
}

// ---------------------------------------------------------------------------
// criterion 8: reproducibility
// ---------------------------------------------------------------------------

void criterion_reproducibility() {
  namespace fs = std::filesystem;
  bool pass = true;
  std::string detail;

  {  // dataset digests
    const std::string d1 = (fs::temp_directory_path() / "iepg_acc_ds1").string();
    const std::string d2 = (fs::temp_directory_path() / "iepg_acc_ds2").string();
    fs::remove_all(d1);
    fs::remove_all(d2);
    write_dataset(gen_dataset(3, 90.0, 32, 42), d1);
    write_dataset(gen_dataset(3, 90.0, 32, 42), d2);
    if (dataset_digest(d1) != dataset_digest(d2)) {
      pass = false;
      detail += "dataset ";
    }
    fs::remove_all(d1);
    fs::remove_all(d2);
  }
  {  // training checkpoints and synthesis bytes
    Dataset ds = gen_dataset(4, 90.0, 16, 43);
    RunConfig cfg;
    cfg.seed = 5;
    cfg.image_size = 16;
    cfg.gec_steps = 12;
    cfg.pis_steps = 3;
    cfg.frames = 3;
    cfg.gec_dh = 16;
    cfg.d_model = 8;
    cfg.n_heads = 1;
    cfg.enc_c1 = 4;
    cfg.dec_c1 = 4;
    cfg.dec_c2 = 4;
    cfg.disc_c = 4;
    cfg.iec_base = 4;
    cfg.queue_capacity = 2;
    cfg.log_every = 0;
    cfg.ckpt_every = 0;
    Checkpoint g1 = train_gec(ds, cfg);
    Checkpoint g2 = train_gec(ds, cfg);
    if (g1.serialize() != g2.serialize()) {
      pass = false;
      detail += "gec-train ";
    }
    Checkpoint p1 = train_pis(ds, g1, cfg);
    Checkpoint p2 = train_pis(ds, g1, cfg);
    if (p1.serialize() != p2.serialize()) {
      pass = false;
      detail += "pis-train ";
    }
    GecModel gec = gec_from_checkpoint(g1);
    FusionModel model = fusion_from_checkpoint(p1);
    const DatasetPerson& dp = ds.persons[static_cast<std::size_t>(ds.test_ids()[0])];
    SourceBundle src = make_source_bundle(dp.person, dp.frames[0].skel, 16);
    SynthOptions so;
    so.frames = 3;
    SynthResult r1 = synthesize_full(dp.person, src, dp.frames[0].skel, dp.frames[2].skel, gec, model, so);
    SynthResult r2 = synthesize_full(dp.person, src, dp.frames[0].skel, dp.frames[2].skel, gec, model, so);
    for (std::int64_t i = 0; i < r1.final_image.size(); ++i)
      if (r1.final_image[i] != r2.final_image[i]) {
        pass = false;
        detail += "synthesis ";
        break;
      }
    EvalOptions eo;
    eo.sampled = 4;
    eo.frames = 3;
    if (eval_report(ds, gec, model, eo).to_json() != eval_report(ds, gec, model, eo).to_json()) {
      pass = false;
      detail += "report ";
    }
  }
  record(8, "reproducibility", pass, pass ? "bit-identical reruns" : ("differs: " + detail));
}

// ---------------------------------------------------------------------------
// criterion 9: loss arithmetic
// ---------------------------------------------------------------------------

void criterion_loss_arithmetic() {
  const double gec_val = loss_gec(1.0, 1.0, 1.0, GecWeights{});
  LossWeights w;
  IterationLosses unit{Tensor::scalar(1.0), Tensor::scalar(1.0), Tensor::scalar(1.0),
                       Tensor::scalar(1.0)};
  const double es_val = loss_es_step(unit, w).value();
  const bool pass = std::fabs(gec_val - 11.01) < 1e-12 && std::fabs(es_val - 507.5) < 1e-12;
  record(9, "loss arithmetic", pass,
         "loss_gec(1,1,1)=" + fmt(gec_val, 12) + ", loss_es unit=" + fmt(es_val, 12));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  std::fprintf(stderr, "acceptance: fast criteria\n");
  criterion_gradients();
  criterion_structure();
  criterion_metrics();
  criterion_reproducibility();
  criterion_loss_arithmetic();

  std::fprintf(stderr, "acceptance: training campaign (3 seeds x 4 arms)\n");
  std::vector<SeedRun> runs;
  for (int r = 0; r < kCampaignSeeds; ++r) runs.push_back(run_campaign_seed(r));

  {  // criterion 2: increment-count trend
    int good = 0;
    std::string detail;
    double worst_arm_s = 0.0;
    for (const auto& run : runs) {
      const auto& s = run.arm_ssim;
      const bool mono = s[1] >= s[0] - 0.005 && s[2] >= s[1] - 0.005 && s[3] >= s[2] - 0.005;
      const bool endpoint = s[3] >= s[0];
      if (mono && endpoint) ++good;
      detail += "[" + fmt(s[0]) + "," + fmt(s[1]) + "," + fmt(s[2]) + "," + fmt(s[3]) + "] ";
      worst_arm_s = std::max(worst_arm_s, run.max_arm_seconds);
    }
    const bool pass = good >= 2 && worst_arm_s < kArmBudgetSeconds;
    record(2, "increment-count trend", pass,
           detail + fmt(static_cast<double>(good), 0) + "/3 seeds, max arm " +
               fmt(worst_arm_s, 0) + "s");
  }
  {  // criterion 3: intermediate removal degrades accuracy
    int good = 0;
    std::string detail;
    for (const auto& run : runs) {
      if (run.full_ssim > run.removed_ssim) ++good;
      detail += "[" + fmt(run.full_ssim) + " vs " + fmt(run.removed_ssim) + "] ";
    }
    record(3, "intermediate-removal degradation", good >= 2,
           detail + fmt(static_cast<double>(good), 0) + "/3 seeds");
  }
  {  // criterion 4: knockouts on the first seed's budget
    const SeedRun& run = runs.front();
    RunConfig base = campaign_cfg(100);
    GecModel gec = gec_from_checkpoint(run.gec_ck);
    double knock_ssim[2] = {0.0, 0.0};
    const char* names[2] = {"no_tpkf", "no_iec"};
    for (int k = 0; k < 2; ++k) {
      RunConfig cfg = base;
      cfg.no_tpkf = k == 0;
      cfg.no_iec = k == 1;
      std::fprintf(stderr, "[knockout] training %s\n", names[k]);
      Checkpoint ck = train_pis(run.ds, run.gec_ck, cfg);
      FusionModel model = fusion_from_checkpoint(ck);
      EvalOptions eo;
      eo.sampled = kEvalPairs;
      eo.frames = 7;
      knock_ssim[k] = eval_report(run.ds, gec, model, eo).mean_ssim;
    }
    const bool pass = knock_ssim[0] <= run.full_ssim && knock_ssim[1] <= run.full_ssim;
    record(4, "ablation direction", pass,
           "full " + fmt(run.full_ssim) + ", no_tpkf " + fmt(knock_ssim[0]) + ", no_iec " +
               fmt(knock_ssim[1]));
  }
  {  // criterion 5: endpoint anchoring on held-out persons
    int good = 0;
    std::string detail;
    for (const auto& run : runs) {
      if (run.gec_stats.first_frame_err < 0.05 && run.gec_stats.last_frame_err < 0.05) ++good;
      detail += "[" + fmt(run.gec_stats.first_frame_err) + "/" +
                fmt(run.gec_stats.last_frame_err) + "] ";
    }
    record(5, "gec endpoint anchoring", good == kCampaignSeeds, detail + "target < 0.05");
  }

  std::sort(g_results.begin(), g_results.end(),
            [](const CriterionResult& a, const CriterionResult& b) { return a.id < b.id; });
  bool all = true;
  std::printf("\n==== acceptance criteria ====\n");
  for (const auto& r : g_results) {
    std::printf("[%s] criterion %d (%s): %s\n", r.pass ? "PASS" : "FAIL", r.id, r.name.c_str(),
                r.detail.c_str());
    all = all && r.pass;
  }
  std::printf("==== %s in %.0fs ====\n", all ? "ALL CRITERIA PASSED" : "FAILURES PRESENT",
              seconds_since(t0));
  return all ? 0 : 1;
}
