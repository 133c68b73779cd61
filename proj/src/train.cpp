#include "iepg/train.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "iepg/losses.hpp"
#include "iepg/metrics.hpp"

namespace iepg {

namespace {

constexpr double kVisWeight = 0.1;  // auxiliary visibility-head BCE in GEC training

// affine squeeze keeping adversarial scores strictly inside (0,1)
Tensor squeeze_scores(const Tensor& s) {
  const double eps = 1e-7;
  return add_scalar(mul_scalar(s, 1.0 - 2.0 * eps), eps);
}

void set_requires_grad(const ParamList& params, bool value) {
  for (const auto& [name, t] : params) const_cast<Tensor&>(t).set_requires_grad(value);
}

double decayed_lr(double base, int step, int total) {
  const int start = 2 * total / 3;
  if (step <= start || total <= start) return base;
  const double f = static_cast<double>(total - step) / static_cast<double>(total - start);
  return base * std::max(0.05, f);
}

// (K, 2K) 0/1 matrix expanding a per-keypoint mask to interleaved coordinates
Tensor vis_expand_matrix() {
  Tensor e(Shape{kNumKeypoints, 2 * kNumKeypoints}, 0.0);
  for (int k = 0; k < kNumKeypoints; ++k) {
    e.mut(static_cast<std::int64_t>(k) * 2 * kNumKeypoints + 2 * k) = 1.0;
    e.mut(static_cast<std::int64_t>(k) * 2 * kNumKeypoints + 2 * k + 1) = 1.0;
  }
  return e;
}

Tensor vis_target_row(const PoseSkeleton& s) {
  std::vector<double> v(kNumKeypoints);
  for (int k = 0; k < kNumKeypoints; ++k) v[static_cast<std::size_t>(k)] = s.visible(k) ? 1.0 : 0.0;
  return Tensor(Shape{1, kNumKeypoints}, std::move(v));
}

// mean over ground-truth-visible keypoints of the coordinate error
double coords_error(const Tensor& coords_row, const PoseSkeleton& gt) {
  double sum = 0.0;
  int n = 0;
  for (int k = 0; k < kNumKeypoints; ++k) {
    if (!gt.visible(k)) continue;
    const double dx = coords_row[2 * k] - gt.pts[static_cast<std::size_t>(k)].x;
    const double dy = coords_row[2 * k + 1] - gt.pts[static_cast<std::size_t>(k)].y;
    sum += std::sqrt(dx * dx + dy * dy);
    ++n;
  }
  return n ? sum / n : 0.0;
}

void check_finite(double v, const char* stage, int step) {
  if (!std::isfinite(v))
    throw std::runtime_error(std::string(stage) + ": non-finite loss at step " +
                             std::to_string(step) + ", training aborted");
}

struct PairSample {
  int person = 0;
  double yaw_s = 0.0, yaw_t = 0.0;
};

PairSample sample_pair(const Dataset& ds, const std::vector<int>& ids, Rng& rng) {
  PairSample p;
  p.person = ids[static_cast<std::size_t>(rng.randint(static_cast<std::int64_t>(ids.size())))];
  const auto& frames = ds.persons[static_cast<std::size_t>(p.person)].frames;
  const int n = static_cast<int>(frames.size());
  const int a = static_cast<int>(rng.randint(n));
  int b = static_cast<int>(rng.randint(n - 1));
  if (b >= a) ++b;
  p.yaw_s = frames[static_cast<std::size_t>(a)].yaw;
  p.yaw_t = frames[static_cast<std::size_t>(b)].yaw;
  return p;
}

// skeleton-space training sees continuous yaws (the frame generator is exact
// at any angle); evaluation pairs stay on the dataset grid
PairSample sample_pair_continuous(const Dataset& ds, const std::vector<int>& ids, Rng& rng) {
  PairSample p;
  p.person = ids[static_cast<std::size_t>(rng.randint(static_cast<std::int64_t>(ids.size())))];
  p.yaw_s = rng.uniform(0.0, 360.0);
  p.yaw_t = rng.uniform(0.0, 360.0);
  return p;
}

}  // namespace

std::uint64_t params_digest(const ParamList& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, t] : params) {
    h = fnv1a64(reinterpret_cast<const std::uint8_t*>(name.data()), name.size()) ^ (h * 0x100000001b3ULL);
    h = fnv1a64(reinterpret_cast<const std::uint8_t*>(t.data().data()), t.data().size() * 8) ^
        (h * 0x100000001b3ULL);
  }
  return h;
}

void LossLog::append(int step, const std::string& name, double value) const {
  if (path_.empty()) return;
  std::ofstream f(path_, std::ios::app);
  f << "step " << step << " " << name << " " << value << "\n";
}

std::vector<PoseSkeleton> gt_skeleton_track(const Person& person, double yaw_s, double yaw_t,
                                            int frames) {
  if (frames < 2) throw std::invalid_argument("gt_skeleton_track: need at least 2 frames");
  std::vector<PoseSkeleton> out;
  out.reserve(static_cast<std::size_t>(frames));
  for (int t = 0; t < frames; ++t) {
    const double alpha = static_cast<double>(t) / (frames - 1);
    out.push_back(skeleton_at_yaw(person, yaw_lerp(yaw_s, yaw_t, alpha)));
  }
  return out;
}

GecModel gec_from_checkpoint(const Checkpoint& ck) {
  if (ck.stage != "gec") throw std::runtime_error("gec_from_checkpoint: stage is '" + ck.stage + "'");
  RunConfig cfg = RunConfig::from_json(ck.config_json);
  Rng rng(cfg.seed);
  GecModel model(rng, cfg.gec_config());
  ck.restore(model.params());
  return model;
}

FusionModel fusion_from_checkpoint(const Checkpoint& ck) {
  if (ck.stage != "pis") throw std::runtime_error("fusion_from_checkpoint: stage is '" + ck.stage + "'");
  RunConfig cfg = RunConfig::from_json(ck.config_json);
  Rng rng(cfg.seed ^ 0xf05100ULL);
  FusionModel model(rng, cfg.fusion_config());
  ck.restore(model.params());
  return model;
}

// ---------------------------------------------------------------------------
// stage 1: global evolution constraints
// ---------------------------------------------------------------------------

Checkpoint train_gec(const Dataset& ds, const RunConfig& cfg, const std::string& log_path) {
  Rng rng(cfg.seed);
  GecModel model(rng, cfg.gec_config());
  AdamOptimizer opt_g(param_tensors(model.gen_params()), cfg.lr);
  AdamOptimizer opt_d(param_tensors(model.disc_params()), cfg.lr);
  LossLog log(log_path);
  const std::vector<int> train_ids = ds.train_ids();
  const Tensor expand = vis_expand_matrix();
  const GecWeights w{cfg.weights.sadv, cfg.weights.ncons, cfg.weights.pose};
  Rng sample_rng = rng.child(0x676563ULL);

  for (int step = 1; step <= cfg.gec_steps; ++step) {
    opt_g.set_lr(decayed_lr(cfg.lr, step, cfg.gec_steps));
    opt_d.set_lr(0.25 * opt_g.lr());  // slower critic keeps the adversarial term from saturating

    std::vector<Tensor> fake_rows_detached, real_rows;
    double log_pose = 0.0, log_adv = 0.0;

    {  // generator pass; discriminator weights held fixed
      set_requires_grad(model.disc_params(), false);
      Tape tape;
      Tensor total = Tensor::scalar(0.0);
      for (int b = 0; b < cfg.batch_size; ++b) {
        const PairSample ps = sample_pair_continuous(ds, train_ids, sample_rng);
        const Person& person = ds.persons[static_cast<std::size_t>(ps.person)].person;
        // sequence length varies per sample so inference works at any T and
        // the endpoint frames carry a larger share of the supervision
        const int frames = 2 + static_cast<int>(sample_rng.randint(cfg.frames - 1));
        const std::vector<PoseSkeleton> gt = gt_skeleton_track(person, ps.yaw_s, ps.yaw_t, frames);

        Tensor z = Tensor::randn(sample_rng, Shape{1, model.cfg.feat});
        std::vector<Tensor> feats =
            model.evolve(model.encode(gt.front()), model.encode(gt.back()), z, frames);

        Tensor pose_sum = Tensor::scalar(0.0);
        Tensor vis_sum = Tensor::scalar(0.0);
        std::vector<Tensor> coords(feats.size()), masked(feats.size());
        for (std::size_t t = 0; t < feats.size(); ++t) {
          coords[t] = model.decode_coords(feats[t]);
          Tensor logits = model.decode_vis_logits(feats[t]);
          pose_sum = add(pose_sum, loss_pose(coords[t], gt[t]));
          // BCE(l, y) = softplus(l) - l*y
          Tensor y = vis_target_row(gt[t]);
          vis_sum = add(vis_sum, mean_all(sub(softplus(logits), mul(logits, y))));
          // sentinel placement from the ground-truth visibility on both the
          // real and fake rows, so the discriminator judges geometry rather
          // than the sentinel encoding itself
          Tensor m2 = matmul(y, expand);
          masked[t] = sub(mul(coords[t], m2), add_scalar(neg(m2), 1.0));  // c*m + (-1)*(1-m)
        }
        Tensor pose = mul_scalar(pose_sum, 1.0 / static_cast<double>(feats.size()));
        Tensor vis = mul_scalar(vis_sum, 1.0 / static_cast<double>(feats.size()));
        Tensor coords_cat = concat0(coords);
        Tensor ncons = loss_ncons(coords_cat);
        Tensor fake_cat = concat0(masked);
        Tensor adv = loss_sadv_gen(squeeze_scores(model.discriminate_rows(fake_cat)));

        Tensor sample_loss = loss_gec(adv, ncons, pose, w);
        sample_loss = add(sample_loss, mul_scalar(vis, kVisWeight));
        total = add(total, sample_loss);

        log_pose += pose.value();
        log_adv += adv.value();
        fake_rows_detached.push_back(detach(fake_cat));
        std::vector<Tensor> rr;
        for (const auto& s : gt) rr.push_back(s.to_row());
        real_rows.push_back(concat0(rr));
      }
      total = mul_scalar(total, 1.0 / cfg.batch_size);
      check_finite(total.value(), "train_gec", step);
      tape.backward(total);
      opt_g.step();
      set_requires_grad(model.disc_params(), true);
    }

    double log_d = 0.0;
    {  // discriminator pass
      Tape tape;
      Tensor total = Tensor::scalar(0.0);
      for (int b = 0; b < cfg.batch_size; ++b) {
        Tensor sf = squeeze_scores(model.discriminate_rows(fake_rows_detached[static_cast<std::size_t>(b)]));
        Tensor sr = squeeze_scores(model.discriminate_rows(real_rows[static_cast<std::size_t>(b)]));
        total = add(total, neg(loss_sadv(sf, sr)));  // maximize the Eq-7 objective
      }
      total = mul_scalar(total, 1.0 / cfg.batch_size);
      check_finite(total.value(), "train_gec", step);
      tape.backward(total);
      opt_d.step();
      log_d = total.value();
    }

    if (cfg.log_every > 0 && step % cfg.log_every == 0) {
      log.append(step, "gec_pose", log_pose / cfg.batch_size);
      log.append(step, "gec_adv", log_adv / cfg.batch_size);
      log.append(step, "gec_disc", log_d);
    }
    if (cfg.ckpt_every > 0 && !cfg.out_dir.empty() && step % cfg.ckpt_every == 0) {
      Checkpoint ck;
      ck.stage = "gec";
      ck.seed = cfg.seed;
      ck.config_json = cfg.to_json();
      ck.put(model.params());
      ck.save(cfg.out_dir + "/gec.ckpt");
    }
  }

  Checkpoint ck;
  ck.stage = "gec";
  ck.seed = cfg.seed;
  ck.config_json = cfg.to_json();
  ck.put(model.params());
  return ck;
}

// ---------------------------------------------------------------------------
// stage 2: pose image synthesizing
// ---------------------------------------------------------------------------

Checkpoint train_pis(const Dataset& ds, const Checkpoint& gec_ckpt, const RunConfig& cfg,
                     const std::string& log_path) {
  GecModel gec = gec_from_checkpoint(gec_ckpt);
  set_requires_grad(gec.params(), false);  // stage isolation: GEC is frozen

  Rng rng(cfg.seed ^ 0xf05100ULL);
  FusionModel model(rng, cfg.fusion_config());
  FeaturePyramid pyramid(0);
  AdamOptimizer opt_g(param_tensors(model.gen_params()), cfg.lr);
  AdamOptimizer opt_d(param_tensors(model.disc_params()), cfg.lr);
  LossLog log(log_path);
  const std::vector<int> train_ids = ds.train_ids();
  const int size = cfg.image_size;
  Rng sample_rng = rng.child(0x706973ULL);

  for (int step = 1; step <= cfg.pis_steps; ++step) {
    opt_g.set_lr(decayed_lr(cfg.lr, step, cfg.pis_steps));
    opt_d.set_lr(0.25 * opt_g.lr());  // slower critic keeps the adversarial term from saturating

    struct StepRecord {
      Tensor fake;  // detached generated frame
      Tensor real;
      TargetBundle cond;
    };
    std::vector<StepRecord> records;
    double log_total = 0.0, log_img = 0.0;

    {  // generator pass
      set_requires_grad(model.disc_params(), false);
      Tape tape;
      Tensor total = Tensor::scalar(0.0);
      for (int b = 0; b < cfg.batch_size; ++b) {
        const PairSample ps = sample_pair(ds, train_ids, sample_rng);
        const Person& person = ds.persons[static_cast<std::size_t>(ps.person)].person;
        const std::vector<PoseSkeleton> gt_skels =
            gt_skeleton_track(person, ps.yaw_s, ps.yaw_t, cfg.frames);

        std::vector<PoseSkeleton> guide = gt_skels;
        if (!cfg.teacher_gt && cfg.frames > 2) {
          NoTape off;
          Tensor z = Tensor::randn(sample_rng, Shape{1, gec.cfg.feat});
          std::vector<Tensor> feats =
              gec.evolve(gec.encode(gt_skels.front()), gec.encode(gt_skels.back()), z, cfg.frames);
          for (int t = 1; t < cfg.frames - 1; ++t)
            guide[static_cast<std::size_t>(t)] = gec.decode_skeleton(feats[static_cast<std::size_t>(t)]);
        }

        SourceBundle src = make_source_bundle(person, gt_skels.front(), size);
        Tensor f_s = model.source_path(src);
        IntermediateQueue queue;
        queue.capacity = cfg.queue_capacity;
        queue = update_queue(queue, src.image);

        std::vector<IterationLosses> iters;
        for (int t = 1; t < cfg.frames; ++t) {
          TargetBundle tgt = make_target_bundle(person, guide[static_cast<std::size_t>(t)], size);
          Tensor iec_feat;
          if (!model.cfg.no_tpkf && !model.cfg.no_iec) iec_feat = iec_forward(queue, model.iec);
          Tensor gen = model.synthesize_step(src, tgt, iec_feat, f_s);
          Tensor gt_img = render_image(person, gt_skels[static_cast<std::size_t>(t)], size);

          IterationLosses il;
          il.img = loss_img(gen, gt_img);
          il.per = loss_per(gen, gt_img, pyramid);
          il.style = loss_style(gen, gt_img, pyramid);
          il.siadv = loss_sadv_gen(squeeze_scores(model.disc.score(gen, tgt)));
          iters.push_back(il);
          log_img += il.img.value();

          Tensor gen_d = detach(gen);
          queue = update_queue(queue, gen_d);
          records.push_back(StepRecord{gen_d, gt_img, tgt});
        }

        // source-to-source reconstruction branch
        TargetBundle tgt_self{src.heatmaps, src.semantics};
        IntermediateQueue q0;
        q0.capacity = cfg.queue_capacity;
        q0 = update_queue(q0, src.image);
        Tensor iec0;
        if (!model.cfg.no_tpkf && !model.cfg.no_iec) iec0 = iec_forward(q0, model.iec);
        Tensor recon = model.synthesize_step(src, tgt_self, iec0, f_s);
        Tensor sr = loss_sr(recon, src.image, pyramid, cfg.weights.per);

        total = add(total, loss_pis(iters, sr, cfg.weights));
      }
      total = mul_scalar(total, 1.0 / cfg.batch_size);
      check_finite(total.value(), "train_pis", step);
      tape.backward(total);
      opt_g.step();
      set_requires_grad(model.disc_params(), true);
      log_total = total.value();
    }

    double log_d = 0.0;
    {  // discriminator pass over all recorded iterations
      Tape tape;
      Tensor total = Tensor::scalar(0.0);
      for (const auto& r : records) {
        Tensor sf = squeeze_scores(model.disc.score(r.fake, r.cond));
        Tensor sr = squeeze_scores(model.disc.score(r.real, r.cond));
        total = add(total, loss_siadv(sf, sr).d_loss);
      }
      total = mul_scalar(total, 1.0 / static_cast<double>(records.size()));
      check_finite(total.value(), "train_pis", step);
      tape.backward(total);
      opt_d.step();
      log_d = total.value();
    }

    if (cfg.log_every > 0 && step % cfg.log_every == 0) {
      log.append(step, "pis_total", log_total);
      log.append(step, "pis_img", log_img / std::max<std::size_t>(1, records.size()));
      log.append(step, "pis_disc", log_d);
    }
    if (cfg.ckpt_every > 0 && !cfg.out_dir.empty() && step % cfg.ckpt_every == 0) {
      Checkpoint ck;
      ck.stage = "pis";
      ck.seed = cfg.seed;
      ck.config_json = cfg.to_json();
      ck.put(model.params());
      ck.save(cfg.out_dir + "/pis.ckpt");
    }
  }

  Checkpoint ck;
  ck.stage = "pis";
  ck.seed = cfg.seed;
  ck.config_json = cfg.to_json();
  ck.put(model.params());
  return ck;
}

GecEvalStats eval_gec(const Dataset& ds, const GecModel& gec, int frames, int n_pairs,
                      std::uint64_t seed) {
  NoTape off;
  GecEvalStats st;
  const std::vector<int> ids = ds.test_ids();
  if (ids.empty()) throw std::invalid_argument("eval_gec: dataset has no test persons");
  Rng rng(seed);
  for (int i = 0; i < n_pairs; ++i) {
    const PairSample ps = sample_pair(ds, ids, rng);
    const Person& person = ds.persons[static_cast<std::size_t>(ps.person)].person;
    const std::vector<PoseSkeleton> gt = gt_skeleton_track(person, ps.yaw_s, ps.yaw_t, frames);
    Tensor z = Tensor::randn(rng, Shape{1, gec.cfg.feat});
    std::vector<Tensor> feats = gec.evolve(gec.encode(gt.front()), gec.encode(gt.back()), z, frames);
    double pose = 0.0;
    for (std::size_t t = 0; t < feats.size(); ++t)
      pose += loss_pose(gec.decode_coords(feats[t]), gt[t]).value();
    st.pose_loss += pose / static_cast<double>(feats.size());
    st.first_frame_err += coords_error(gec.decode_coords(feats.front()), gt.front());
    st.last_frame_err += coords_error(gec.decode_coords(feats.back()), gt.back());
  }
  st.pose_loss /= n_pairs;
  st.first_frame_err /= n_pairs;
  st.last_frame_err /= n_pairs;
  return st;
}

double validation_ssim(const Dataset& ds, const GecModel& gec, const FusionModel& model,
                       int frames, std::uint64_t pair_seed) {
  const std::vector<int> ids = ds.test_ids();
  if (ids.empty()) throw std::invalid_argument("validation_ssim: dataset has no test persons");
  Rng rng(pair_seed);
  const PairSample ps = sample_pair(ds, ids, rng);
  const DatasetPerson& dp = ds.persons[static_cast<std::size_t>(ps.person)];
  PoseSkeleton src_skel = skeleton_at_yaw(dp.person, ps.yaw_s);
  PoseSkeleton tgt_skel = skeleton_at_yaw(dp.person, ps.yaw_t);
  SourceBundle src = make_source_bundle(dp.person, src_skel, ds.image_size);
  SynthOptions so;
  so.frames = frames;
  SynthResult r = synthesize_full(dp.person, src, src_skel, tgt_skel, gec, model, so);
  return ssim(r.final_image, render_image(dp.person, tgt_skel, ds.image_size));
}

}  // namespace iepg
