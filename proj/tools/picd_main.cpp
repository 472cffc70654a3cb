// Command-line front end: encode, decode, train, sweep, eval.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "picd/ocr.hpp"
#include "picd/pipeline.hpp"
#include "picd/png_io.hpp"
#include "picd/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace picd;

namespace {

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

void write_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          std::streamsize(bytes.size()));
}

std::vector<uint8_t> read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string s = ss.str();
  return std::vector<uint8_t>(s.begin(), s.end());
}

// ---------------------------------------------------------------------------
// encode / decode

int cmd_encode(const std::string& in, const std::string& out,
               const std::string& mode, const std::string& config) {
  PipelineConfig cfg = PipelineConfig::from_json_file(config);
  if (!mode.empty())
    cfg.mode = mode == "screen" ? CodecMode::kScreen : CodecMode::kNatural;
  Pipeline p(cfg);
  EncodeResult r = p.encode(read_png(in));
  write_bytes(out, r.bytes);
  if (r.ocr_empty) std::cerr << "warning: the extractor found no words\n";
  if (r.ocr_dropped > 0)
    std::cerr << "warning: " << r.ocr_dropped << " ink regions dropped\n";
  std::cout << "mode " << (cfg.mode == CodecMode::kScreen ? "screen" : "natural")
            << ", " << r.layout.words.size() << " words, " << r.bytes.size()
            << " bytes, " << fmt_g(r.bpp) << " bpp (text " << fmt_g(r.text_bpp)
            << ", image " << fmt_g(r.image_bpp) << ")\n";
  return 0;
}

int cmd_decode(const std::string& in, const std::string& out, uint64_t seed,
               bool fast, const std::string& config) {
  PipelineConfig cfg = PipelineConfig::from_json_file(config);
  Pipeline p(cfg);
  DecodeResult r = p.decode(read_bytes(in), seed, fast);
  write_png(out, r.image);
  std::cout << "decoded in " << fmt_g(r.sample_seconds) << "s, guided steps "
            << r.stats.guided_steps
            << ", ocr=" << (r.used_ocr_guidance ? "on" : "off")
            << ", recompression=" << (r.used_recompression ? "on" : "off")
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct CorpusSpec {
  std::string dir;
  uint64_t seed = 11;
  int n = 2000;
  bool invert_theme = false;
  int train_begin = 0, train_end = 0;  // 0,0 = default split
  int val_begin = 0, val_end = 0;
};

CorpusSpec corpus_spec(const json& j, const char* key, const fs::path& base) {
  if (!j.contains(key))
    throw std::runtime_error(std::string("train config: missing '") + key + "'");
  const json& c = j.at(key);
  CorpusSpec s;
  s.dir = c.value("dir", "");
  if (s.dir.empty())
    throw std::runtime_error(std::string("train config: '") + key + "' needs a dir");
  if (fs::path(s.dir).is_relative()) s.dir = (base / s.dir).string();
  s.seed = c.value("seed", uint64_t(11));
  s.n = c.value("n", 2000);
  s.invert_theme = c.value("invert_theme", false);
  if (c.contains("train")) {
    s.train_begin = c.at("train").at(0).get<int>();
    s.train_end = c.at("train").at(1).get<int>();
  } else {
    s.train_end = s.n * 9 / 10;
  }
  if (c.contains("val")) {
    s.val_begin = c.at("val").at(0).get<int>();
    s.val_end = c.at("val").at(1).get<int>();
  } else {
    s.val_begin = s.n * 9 / 10;
    s.val_end = s.n;
  }
  return s;
}

// Loads the corpus, generating it first when the directory has no manifest.
CorpusManifest ensure_corpus(const CorpusSpec& s) {
  try {
    return load_manifest(s.dir);
  } catch (const std::exception&) {
    std::cout << "generating corpus " << s.dir << " (seed " << s.seed << ", n "
              << s.n << ")...\n";
    GeneratorOptions opt;
    opt.invert_theme = s.invert_theme;
    return generate_corpus(s.dir, s.seed, s.n, opt);
  }
}

void save_report(const fs::path& out_dir, const std::string& stage,
                 const TrainReport& rep) {
  json j;
  j["losses"] = rep.losses;
  j["metrics"] = rep.metrics;
  write_file((out_dir / (stage + "_report.json")).string(), j.dump(2) + "\n");
}

void print_report(const std::string& stage, const TrainReport& rep) {
  std::cout << stage << ": loss " << fmt_g(rep.first_loss()) << " -> "
            << fmt_g(rep.last_loss());
  for (const auto& [k, v] : rep.metrics) std::cout << ", " << k << " " << fmt_g(v);
  std::cout << "\n";
}

// Picks the score checkpoint for stages that sit on top of it: an explicit
// "score" path in the stage block wins, else the fine-tuned checkpoint when
// present, else the base one.
std::string pick_score(const json& block, const fs::path& base,
                       const fs::path& out_dir) {
  std::string p = block.value("score", "");
  if (!p.empty())
    return fs::path(p).is_relative() ? (base / p).string() : p;
  const fs::path lora = out_dir / "lora.ckpt";
  return fs::exists(lora) ? lora.string() : (out_dir / "score.ckpt").string();
}

int cmd_train(const std::string& stage, const std::string& config) {
  const json j = json::parse(read_file(config));
  const fs::path base = fs::path(config).parent_path();
  std::string out = j.value("out", "models");
  if (fs::path(out).is_relative()) out = (base / out).string();
  const fs::path out_dir(out);
  fs::create_directories(out_dir);
  const uint64_t seed = j.value("seed", uint64_t(1));
  const json block = j.value(stage, json::object());

  const CorpusSpec cs = corpus_spec(
      j, stage == "lora" && j.contains("lora_corpus") ? "lora_corpus" : "corpus",
      base);
  const CorpusManifest manifest = ensure_corpus(cs);
  std::cout << "loading samples [" << cs.train_begin << "," << cs.train_end
            << ") + [" << cs.val_begin << "," << cs.val_end << ")...\n";
  const Dataset train = load_dataset(manifest, cs.train_begin, cs.train_end);
  const Dataset val = load_dataset(manifest, cs.val_begin, cs.val_end);

  auto vae_path = [&] {
    std::string p = block.value("vae", "");
    if (!p.empty()) return fs::path(p).is_relative() ? (base / p).string() : p;
    return (out_dir / "vae.ckpt").string();
  };

  if (stage == "vae") {
    VaeTrainConfig tc;
    tc.seed = block.value("seed", seed);
    tc.steps = block.value("steps", tc.steps);
    tc.batch = block.value("batch", tc.batch);
    tc.lr = block.value("lr", tc.lr);
    tc.kl_weight = block.value("kl_weight", tc.kl_weight);
    VaeConfig mc{block.value("ch", 16), block.value("z_ch", 4)};
    Rng rng(mix_seed(tc.seed, 0x766165));
    Vae<float> vae(mc, rng);
    TrainReport rep = train_vae(vae, train, val, tc);
    vae.save((out_dir / "vae.ckpt").string());
    save_report(out_dir, "vae", rep);
    print_report("vae", rep);
    std::cout << "saved " << (out_dir / "vae.ckpt").string() << "\n";
    return 0;
  }

  if (stage == "score" || stage == "lora") {
    Checkpoint vc = Checkpoint::load(vae_path());
    Rng vrng(0);
    Vae<float> vae(VaeConfig{int(vc.scalar("ch")), int(vc.scalar("z_ch"))}, vrng);
    vae.load(vae_path());
    if (stage == "score") {
      ScoreTrainConfig tc;
      tc.seed = block.value("seed", seed);
      tc.steps = block.value("steps", tc.steps);
      tc.batch = block.value("batch", tc.batch);
      tc.lr = block.value("lr", tc.lr);
      tc.sched_steps = block.value("sched_steps", tc.sched_steps);
      tc.prompt_dropout = block.value("prompt_dropout", tc.prompt_dropout);
      UNetConfig uc;
      uc.z_ch = vae.cfg.z_ch;
      uc.ch = block.value("ch", uc.ch);
      uc.temb_dim = block.value("temb_dim", uc.temb_dim);
      Rng rng(mix_seed(tc.seed, 0x73636f));
      UNet<float> unet(uc, rng);
      TrainReport rep = train_score(unet, vae, train, val, tc);
      unet.save((out_dir / "score.ckpt").string());
      save_report(out_dir, "score", rep);
      print_report("score", rep);
      std::cout << "saved " << (out_dir / "score.ckpt").string() << "\n";
    } else {
      std::string sp = block.value("score", "");
      if (sp.empty())
        sp = (out_dir / "score.ckpt").string();
      else if (fs::path(sp).is_relative())
        sp = (base / sp).string();
      Checkpoint sc = Checkpoint::load(sp);
      UNetConfig uc;
      uc.z_ch = int(sc.scalar("z_ch"));
      uc.ch = int(sc.scalar("ch"));
      uc.temb_dim = int(sc.scalar("temb_dim"));
      Rng rng(0);
      UNet<float> unet(uc, rng);
      unet.load(sp);
      LoraTrainConfig tc;
      tc.seed = block.value("seed", seed);
      tc.steps = block.value("steps", tc.steps);
      tc.batch = block.value("batch", tc.batch);
      tc.lr = block.value("lr", tc.lr);
      tc.rank = block.value("rank", tc.rank);
      tc.scale = block.value("scale", tc.scale);
      tc.prompt_dropout = block.value("prompt_dropout", tc.prompt_dropout);
      TrainReport rep = finetune_lora(unet, vae, train, val, tc);
      unet.save((out_dir / "lora.ckpt").string());
      save_report(out_dir, "lora", rep);
      print_report("lora", rep);
      std::cout << "saved " << (out_dir / "lora.ckpt").string() << "\n";
    }
    return 0;
  }

  if (stage == "codec") {
    CodecTrainConfig tc;
    tc.seed = block.value("seed", seed);
    tc.stage1_steps = block.value("stage1_steps", tc.stage1_steps);
    tc.stage2_steps = block.value("stage2_steps", tc.stage2_steps);
    tc.batch = block.value("batch", tc.batch);
    tc.lr = block.value("lr", tc.lr);
    tc.lambda = block.value("lambda", tc.lambda);
    tc.edge_proxy = block.value("edge_proxy", tc.edge_proxy);
    CodecConfig mc{block.value("ch", 16), block.value("z_ch", 24)};
    Rng rng(mix_seed(tc.seed, 0x636f64));
    CodecModel<float> codec(mc, rng);
    TrainReport rep = train_codec(codec, train, val, tc);
    const std::string name = "codec_lambda" + fmt_g(tc.lambda);
    codec.save((out_dir / (name + ".ckpt")).string());
    save_report(out_dir, name, rep);
    print_report(name, rep);
    std::cout << "saved " << (out_dir / (name + ".ckpt")).string() << "\n";
    return 0;
  }

  if (stage == "adaptor") {
    Checkpoint vc = Checkpoint::load(vae_path());
    Rng vrng(0);
    Vae<float> vae(VaeConfig{int(vc.scalar("ch")), int(vc.scalar("z_ch"))}, vrng);
    vae.load(vae_path());
    const std::string sp = pick_score(block, base, out_dir);
    Checkpoint sc = Checkpoint::load(sp);
    UNetConfig uc;
    uc.z_ch = int(sc.scalar("z_ch"));
    uc.ch = int(sc.scalar("ch"));
    uc.temb_dim = int(sc.scalar("temb_dim"));
    Rng srng(0);
    UNet<float> unet(uc, srng);
    unet.load(sp);
    std::string cp = block.value("codec", "");
    if (cp.empty()) {
      const double lam = j.value("codec", json::object()).value("lambda", 1.0);
      cp = (out_dir / ("codec_lambda" + fmt_g(lam) + ".ckpt")).string();
    } else if (fs::path(cp).is_relative()) {
      cp = (base / cp).string();
    }
    Checkpoint cc = Checkpoint::load(cp);
    Rng crng(0);
    CodecModel<float> codec(CodecConfig{int(cc.scalar("ch")), int(cc.scalar("z_ch"))},
                            crng);
    codec.load(cp);
    const std::string kind = block.value("kind", "hybrid");
    AdaptorConfig<float> ac;
    ac.kind = adaptor_kind_from(kind);
    ac.unet_ch = unet.cfg.ch;
    ac.vae_z = vae.cfg.z_ch;
    Rng arng(mix_seed(block.value("seed", seed), 0x616461));
    AdaptorModel<float> adaptor(ac, &unet, arng);
    AdaptorTrainConfig tc;
    tc.seed = block.value("seed", seed);
    tc.steps = block.value("steps", tc.steps);
    tc.batch = block.value("batch", tc.batch);
    tc.lr = block.value("lr", tc.lr);
    tc.prompt_dropout = block.value("prompt_dropout", tc.prompt_dropout);
    TrainReport rep = train_adaptor(adaptor, unet, vae, codec, train, val, tc);
    const std::string name = "adaptor_" + kind;
    adaptor.save((out_dir / (name + ".ckpt")).string());
    save_report(out_dir, name, rep);
    print_report(name, rep);
    std::cout << "saved " << (out_dir / (name + ".ckpt")).string() << "\n";
    return 0;
  }

  if (stage == "surrogate") {
    SurrogateTrainConfig tc;
    tc.seed = block.value("seed", seed);
    tc.steps = block.value("steps", tc.steps);
    tc.batch = block.value("batch", tc.batch);
    tc.lr = block.value("lr", tc.lr);
    tc.noise_hi = block.value("noise_hi", tc.noise_hi);
    tc.blank_frac = block.value("blank_frac", tc.blank_frac);
    Rng rng(mix_seed(tc.seed, 0x737572));
    CharCnn<float> model(rng);
    TrainReport rep = train_surrogate(model, train, val, tc);
    model.save((out_dir / "surrogate.ckpt").string());
    save_report(out_dir, "surrogate", rep);
    print_report("surrogate", rep);
    std::cout << "saved " << (out_dir / "surrogate.ckpt").string() << "\n";
    return 0;
  }

  throw std::runtime_error("unknown train stage '" + stage + "'");
}

// ---------------------------------------------------------------------------
// sweep

std::string substitute(std::string s, const std::string& key,
                       const std::string& value) {
  for (size_t pos; (pos = s.find(key)) != std::string::npos;)
    s.replace(pos, key.size(), value);
  return s;
}

int cmd_sweep(const std::string& config, const std::vector<double>& lambdas,
              const std::string& out, const std::string& plots, int count) {
  const json j = json::parse(read_file(config));
  const fs::path base = fs::path(config).parent_path();
  std::string cdir = j.at("corpus").get<std::string>();
  if (fs::path(cdir).is_relative()) cdir = (base / cdir).string();
  const CorpusManifest manifest = load_manifest(cdir);
  int begin = 0, end = manifest.count;
  if (j.contains("range")) {
    begin = j.at("range").at(0).get<int>();
    end = j.at("range").at(1).get<int>();
  }
  if (count > 0 && begin + count < end) end = begin + count;
  const uint64_t seed = j.value("seed", uint64_t(7));
  std::vector<std::string> methods =
      j.value("methods", std::vector<std::string>{"picd", "codec"});
  if (!j.contains("pipeline"))
    throw std::runtime_error("sweep config: missing 'pipeline' object");
  const std::string tmpl = j.at("pipeline").dump();

  std::vector<SweepItem> items;
  for (const std::string& method : methods) {
    for (double lam : lambdas) {
      SweepItem item;
      item.method = method;
      item.lambda = lam;
      item.decode_render = method != "codec";
      item.config =
          PipelineConfig::from_json(substitute(tmpl, "{lambda}", fmt_g(lam)));
      auto resolve = [&base](std::string& p) {
        if (!p.empty() && fs::path(p).is_relative()) p = (base / p).string();
      };
      resolve(item.config.codec_path);
      resolve(item.config.vae_path);
      resolve(item.config.score_path);
      resolve(item.config.lora_path);
      resolve(item.config.adaptor_path);
      resolve(item.config.surrogate_path);
      items.push_back(std::move(item));
    }
  }

  SweepOutcome oc = run_sweep(manifest, begin, end, items, seed);
  for (const std::string& s : oc.skipped) std::cerr << "skipped " << s << "\n";
  write_file(out, sweep_csv(oc.rows));
  std::cout << "wrote " << oc.rows.size() << " rows to " << out << "\n";
  if (!plots.empty()) {
    write_rd_plots(oc.rows, plots);
    std::cout << "wrote " << plots << "_psnr.png and " << plots
              << "_jaccard.png\n";
  }
  return oc.rows.empty() ? 1 : 0;
}

int cmd_eval(const std::string& ref, const std::string& test) {
  const Tensorf a = read_png(ref);
  const Tensorf b = read_png(test);
  std::cout << "psnr: " << fmt_g(double(psnr(b, a))) << "\n";
  std::cout << "jaccard: "
            << fmt_g(double(jaccard_text(extract(b).layout, extract(a).layout)))
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"perceptual screen/natural image codec"};
  app.require_subcommand(1);

  std::string in, out, mode, config, ref, test, plots;
  uint64_t seed = 1;
  bool fast = false;
  std::string stage;
  std::vector<double> lambdas;
  int count = 0;

  CLI::App* enc = app.add_subcommand("encode", "image -> container");
  enc->add_option("-i,--input", in, "input PNG")->required();
  enc->add_option("-o,--output", out, "output container")->required();
  enc->add_option("--mode", mode, "screen or natural (overrides the config)")
      ->check(CLI::IsMember({"screen", "natural"}));
  enc->add_option("--config", config, "pipeline config JSON")->required();

  CLI::App* dec = app.add_subcommand("decode", "container -> image");
  dec->add_option("-i,--input", in, "input container")->required();
  dec->add_option("-o,--output", out, "output PNG")->required();
  dec->add_option("--seed", seed, "sampler seed");
  dec->add_flag("--fast", fast, "skip instance guidance");
  dec->add_option("--config", config, "pipeline config JSON")->required();

  CLI::App* tr = app.add_subcommand("train", "train one model stage");
  tr->add_option("stage", stage, "vae|score|lora|codec|adaptor|surrogate")
      ->required()
      ->check(CLI::IsMember({"vae", "score", "lora", "codec", "adaptor",
                             "surrogate"}));
  tr->add_option("--config", config, "train config JSON")->required();

  CLI::App* sw = app.add_subcommand("sweep", "rate sweep -> CSV + plots");
  sw->add_option("--config", config, "sweep config JSON")->required();
  sw->add_option("--lambdas", lambdas, "rate points")
      ->required()
      ->delimiter(',');
  sw->add_option("--out", out, "output CSV path")->required();
  sw->add_option("--plots", plots, "RD plot path prefix");
  sw->add_option("--count", count, "cap on evaluated samples");

  CLI::App* ev = app.add_subcommand("eval", "compare two images");
  ev->add_option("--ref", ref, "reference PNG")->required();
  ev->add_option("--test", test, "test PNG")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (enc->parsed()) return cmd_encode(in, out, mode, config);
    if (dec->parsed()) return cmd_decode(in, out, seed, fast, config);
    if (tr->parsed()) return cmd_train(stage, config);
    if (sw->parsed()) return cmd_sweep(config, lambdas, out, plots, count);
    if (ev->parsed()) return cmd_eval(ref, test);
  } catch (const std::exception& e) {
    std::cerr << "picd: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
