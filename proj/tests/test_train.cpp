#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <limits>

#include "doctest.h"
#include "iepg/losses.hpp"
#include "iepg/metrics.hpp"
#include "iepg/train.hpp"

using namespace iepg;

namespace {

RunConfig mini_cfg(std::uint64_t seed) {
  RunConfig c;
  c.seed = seed;
  c.image_size = 16;
  c.gec_steps = 60;
  c.pis_steps = 4;
  c.frames = 3;
  c.gec_dh = 16;
  c.d_model = 8;
  c.n_heads = 1;
  c.enc_c1 = 4;
  c.dec_c1 = 4;
  c.dec_c2 = 4;
  c.disc_c = 4;
  c.iec_base = 4;
  c.queue_capacity = 2;
  c.log_every = 0;
  c.ckpt_every = 0;
  return c;
}

// tiny GEC models for the training probes are configured through gec_dh;
// the encoder width tracks the checkpoint config, so shrink it too
GecConfig probe_gec_config(const RunConfig& cfg) { return cfg.gec_config(); }

}  // namespace

TEST_CASE("pose autoencoder run reaches sub-0.02 keypoint error") {
  Dataset ds = gen_dataset(6, 45.0, 16, 3);
  GecConfig gc;
  gc.feat = 64;
  gc.dh = 32;  // decoder input is 2*dh; matching feat lets decode compose with encode
  gc.dec_h1 = 48;
  gc.dec_h2 = 32;
  Rng rng(5);
  GecModel model(rng, gc);

  // train decode(encode(P)) toward the identity on dataset skeletons
  ParamList enc_dec;
  for (const auto& [n, t] : model.gen_params())
    if (n.find("enc") != std::string::npos || n.find("dec") != std::string::npos)
      enc_dec.emplace_back(n, t);
  AdamOptimizer opt(param_tensors(enc_dec), 2e-3);
  Rng sample(9);
  const auto ids = ds.train_ids();
  for (int step = 0; step < 1200; ++step) {
    const auto& dp = ds.persons[static_cast<std::size_t>(ids[static_cast<std::size_t>(sample.randint(static_cast<std::int64_t>(ids.size())))])];
    const auto& fr = dp.frames[static_cast<std::size_t>(sample.randint(static_cast<std::int64_t>(dp.frames.size())))];
    Tape tape;
    Tensor coords = model.decode_coords(model.encode(fr.skel));
    Tensor loss = loss_pose(coords, fr.skel);
    tape.backward(loss);
    opt.step();
  }
  double err = 0.0;
  int count = 0;
  NoTape off;
  for (int pid : ds.test_ids())
    for (const auto& fr : ds.persons[static_cast<std::size_t>(pid)].frames) {
      Tensor coords = model.decode_coords(model.encode(fr.skel));
      double sum = 0.0;
      int n = 0;
      for (int k = 0; k < kNumKeypoints; ++k) {
        if (!fr.skel.visible(k)) continue;
        sum += std::hypot(coords[2 * k] - fr.skel.pts[static_cast<std::size_t>(k)].x,
                          coords[2 * k + 1] - fr.skel.pts[static_cast<std::size_t>(k)].y);
        ++n;
      }
      err += sum / n;
      ++count;
    }
  CHECK(err / count < 0.02);
}

TEST_CASE("gec training lowers the held-out pose loss in most seeds") {
  Dataset ds = gen_dataset(5, 45.0, 16, 7);
  int improved = 0;
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    RunConfig cfg = mini_cfg(seed);
    cfg.gec_steps = 120;
    Rng rng(cfg.seed);
    GecModel init(rng, probe_gec_config(cfg));
    const double before = eval_gec(ds, init, cfg.frames, 12, 55).pose_loss;
    Checkpoint ck = train_gec(ds, cfg);
    GecModel trained = gec_from_checkpoint(ck);
    const double after = eval_gec(ds, trained, cfg.frames, 12, 55).pose_loss;
    if (after < before) ++improved;
  }
  CHECK(improved >= 2);
}

TEST_CASE("disabling the adversarial term never hurts supervised convergence") {
  Dataset ds = gen_dataset(5, 45.0, 16, 7);
  RunConfig adv = mini_cfg(4);
  adv.gec_steps = 120;
  RunConfig plain = adv;
  plain.weights.sadv = 0.0;
  const double with_adv =
      eval_gec(ds, gec_from_checkpoint(train_gec(ds, adv)), adv.frames, 12, 55).pose_loss;
  const double without =
      eval_gec(ds, gec_from_checkpoint(train_gec(ds, plain)), plain.frames, 12, 55).pose_loss;
  CHECK(without <= with_adv * 1.05 + 1e-6);
}

TEST_CASE("checkpoint reload reproduces identical validation numbers") {
  Dataset ds = gen_dataset(4, 90.0, 16, 9);
  RunConfig cfg = mini_cfg(6);
  cfg.gec_steps = 25;
  Checkpoint ck = train_gec(ds, cfg);
  GecModel a = gec_from_checkpoint(ck);
  const GecEvalStats sa = eval_gec(ds, a, cfg.frames, 8, 13);

  Checkpoint rt = Checkpoint::deserialize(ck.serialize());
  GecModel b = gec_from_checkpoint(rt);
  const GecEvalStats sb = eval_gec(ds, b, cfg.frames, 8, 13);
  CHECK(sa.pose_loss == sb.pose_loss);
  CHECK(sa.first_frame_err == sb.first_frame_err);
}

TEST_CASE("training is deterministic given the seed") {
  Dataset ds = gen_dataset(4, 90.0, 16, 9);
  RunConfig cfg = mini_cfg(8);
  cfg.gec_steps = 15;
  Checkpoint a = train_gec(ds, cfg);
  Checkpoint b = train_gec(ds, cfg);
  CHECK(a.serialize() == b.serialize());

  cfg.pis_steps = 3;
  Checkpoint pa = train_pis(ds, a, cfg);
  Checkpoint pb = train_pis(ds, a, cfg);
  CHECK(pa.serialize() == pb.serialize());
}

TEST_CASE("stage two never touches the frozen evolution model") {
  Dataset ds = gen_dataset(4, 90.0, 16, 9);
  RunConfig cfg = mini_cfg(10);
  cfg.gec_steps = 10;
  cfg.pis_steps = 3;
  Checkpoint gec_ck = train_gec(ds, cfg);
  GecModel gec = gec_from_checkpoint(gec_ck);
  const std::uint64_t before = params_digest(gec.params());
  Checkpoint pis_ck = train_pis(ds, gec_ck, cfg);
  CHECK(params_digest(gec.params()) == before);

  // the stored stage tags distinguish the two checkpoints
  CHECK(gec_ck.stage == "gec");
  CHECK(pis_ck.stage == "pis");
}

TEST_CASE("ablation knockouts train without error") {
  Dataset ds = gen_dataset(4, 90.0, 16, 9);
  RunConfig cfg = mini_cfg(12);
  cfg.gec_steps = 8;
  cfg.pis_steps = 2;
  Checkpoint gec_ck = train_gec(ds, cfg);
  for (int mode = 0; mode < 4; ++mode) {
    RunConfig k = cfg;
    k.no_tpkf = mode == 0;
    k.no_iec = mode == 1;
    k.no_msc = mode == 2;
    if (mode == 3) k.ie_depth = 6;
    Checkpoint ck = train_pis(ds, gec_ck, k);
    FusionModel model = fusion_from_checkpoint(ck);
    CHECK(validation_ssim(ds, gec_from_checkpoint(gec_ck), model, k.frames) >= -1.0);
  }
}

TEST_CASE("synthesis training improves the validation pair") {
  Dataset ds = gen_dataset(5, 45.0, 16, 21);
  RunConfig cfg = mini_cfg(14);
  cfg.gec_steps = 150;
  cfg.pis_steps = 90;
  cfg.lr = 5e-4;
  Checkpoint gec_ck = train_gec(ds, cfg);
  GecModel gec = gec_from_checkpoint(gec_ck);

  Rng rng(cfg.seed ^ 0xf05100ULL);
  FusionModel init(rng, cfg.fusion_config());
  const double before = validation_ssim(ds, gec, init, cfg.frames);
  FusionModel trained = fusion_from_checkpoint(train_pis(ds, gec_ck, cfg));
  const double after = validation_ssim(ds, gec, trained, cfg.frames);
  CHECK(after > before);
}

TEST_CASE("training aborts with a diagnostic on non-finite loss") {
  // bounded activations keep even absurd learning rates finite, so the
  // divergence guard is exercised with a non-finite objective weight
  Dataset ds = gen_dataset(4, 90.0, 16, 9);
  RunConfig cfg = mini_cfg(16);
  cfg.gec_steps = 5;
  cfg.weights.pose = std::numeric_limits<double>::infinity();
  CHECK_THROWS_WITH_AS(train_gec(ds, cfg), doctest::Contains("non-finite"), std::runtime_error);
}
