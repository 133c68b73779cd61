#include "iepg/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace iepg {

using nlohmann::json;

int RunConfig::depth() const {
  if (variant == "S") return 2;
  if (variant == "B") return 4;
  if (variant == "L") return 6;
  throw std::invalid_argument("RunConfig: unknown variant '" + variant + "', expected S, B or L");
}

FusionConfig RunConfig::fusion_config() const {
  FusionConfig f;
  f.image_size = image_size;
  f.d = d_model;
  f.n_heads = n_heads;
  f.depth = depth();
  f.enc_c1 = enc_c1;
  f.dec_c1 = dec_c1;
  f.dec_c2 = dec_c2;
  f.disc_c = disc_c;
  f.iec_base = iec_base;
  f.iec_depth = ie_depth;
  f.queue_capacity = queue_capacity;
  f.no_tpkf = no_tpkf;
  f.no_iec = no_iec;
  f.no_msc = no_msc;
  f.no_eada = no_eada;
  return f;
}

GecConfig RunConfig::gec_config() const {
  GecConfig g;
  g.dh = gec_dh;
  if (gec_cell == "gru")
    g.cell = CellType::Gru;
  else if (gec_cell == "tanh")
    g.cell = CellType::Tanh;
  else
    throw std::invalid_argument("RunConfig: unknown gec_cell '" + gec_cell + "'");
  return g;
}

std::string RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["dataset"] = dataset;
  j["out_dir"] = out_dir;
  j["image_size"] = image_size;
  j["lr"] = lr;
  j["batch_size"] = batch_size;
  j["gec_steps"] = gec_steps;
  j["pis_steps"] = pis_steps;
  j["frames"] = frames;
  j["variant"] = variant;
  j["queue_capacity"] = queue_capacity;
  j["determinism"] = determinism;
  j["teacher_gt"] = teacher_gt;
  j["log_every"] = log_every;
  j["ckpt_every"] = ckpt_every;
  j["d_model"] = d_model;
  j["n_heads"] = n_heads;
  j["gec_dh"] = gec_dh;
  j["gec_cell"] = gec_cell;
  j["enc_c1"] = enc_c1;
  j["dec_c1"] = dec_c1;
  j["dec_c2"] = dec_c2;
  j["disc_c"] = disc_c;
  j["iec_base"] = iec_base;
  j["ie_depth"] = ie_depth;
  j["no_tpkf"] = no_tpkf;
  j["no_iec"] = no_iec;
  j["no_msc"] = no_msc;
  j["no_eada"] = no_eada;
  j["lambda_siadv"] = weights.siadv;
  j["lambda_style"] = weights.style;
  j["lambda_per"] = weights.per;
  j["lambda_img"] = weights.img;
  j["lambda_sadv"] = weights.sadv;
  j["lambda_ncons"] = weights.ncons;
  j["lambda_pose"] = weights.pose;
  return j.dump(1);
}

RunConfig RunConfig::from_json(const std::string& text) {
  static const std::set<std::string> known = {
      "seed",        "dataset",     "out_dir",     "image_size", "lr",
      "batch_size",  "gec_steps",   "pis_steps",   "frames",     "variant",
      "queue_capacity", "determinism", "teacher_gt", "log_every", "ckpt_every",
      "d_model",     "n_heads",     "gec_dh",      "gec_cell",   "enc_c1",
      "dec_c1",      "dec_c2",      "disc_c",      "iec_base",   "ie_depth",
      "no_tpkf",     "no_iec",      "no_msc",      "no_eada",    "lambda_siadv",
      "lambda_style", "lambda_per", "lambda_img",  "lambda_sadv", "lambda_ncons",
      "lambda_pose"};
  json j = json::parse(text);
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw std::invalid_argument("RunConfig: unknown key '" + it.key() + "'");
  RunConfig c;
  auto get = [&](const char* key, auto& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
  };
  get("seed", c.seed);
  get("dataset", c.dataset);
  get("out_dir", c.out_dir);
  get("image_size", c.image_size);
  get("lr", c.lr);
  get("batch_size", c.batch_size);
  get("gec_steps", c.gec_steps);
  get("pis_steps", c.pis_steps);
  get("frames", c.frames);
  get("variant", c.variant);
  get("queue_capacity", c.queue_capacity);
  get("determinism", c.determinism);
  get("teacher_gt", c.teacher_gt);
  get("log_every", c.log_every);
  get("ckpt_every", c.ckpt_every);
  get("d_model", c.d_model);
  get("n_heads", c.n_heads);
  get("gec_dh", c.gec_dh);
  get("gec_cell", c.gec_cell);
  get("enc_c1", c.enc_c1);
  get("dec_c1", c.dec_c1);
  get("dec_c2", c.dec_c2);
  get("disc_c", c.disc_c);
  get("iec_base", c.iec_base);
  get("ie_depth", c.ie_depth);
  get("no_tpkf", c.no_tpkf);
  get("no_iec", c.no_iec);
  get("no_msc", c.no_msc);
  get("no_eada", c.no_eada);
  get("lambda_siadv", c.weights.siadv);
  get("lambda_style", c.weights.style);
  get("lambda_per", c.weights.per);
  get("lambda_img", c.weights.img);
  get("lambda_sadv", c.weights.sadv);
  get("lambda_ncons", c.weights.ncons);
  get("lambda_pose", c.weights.pose);
  if (c.batch_size < 1 || c.frames < 2 || c.image_size < 16 || c.image_size % 4)
    throw std::invalid_argument("RunConfig: invalid batch_size/frames/image_size");
  c.depth();      // validate variant
  c.gec_config(); // validate cell
  return c;
}

RunConfig RunConfig::from_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("RunConfig: cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  RunConfig c = from_json(text);
  if (const char* env = std::getenv("IEPG_SEED")) c.seed = std::strtoull(env, nullptr, 10);
  return c;
}

}  // namespace iepg
