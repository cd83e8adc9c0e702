#include "odcs/train.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "odcs/rng.hpp"
#include "odcs/synth.hpp"
#include "odcs/text.hpp"

namespace fs = std::filesystem;

namespace odcs {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::string read_text_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(std::string("cannot open ") + what + " '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int manifest_int(std::string_view v, const std::string& path, std::size_t offset) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ParseError("manifest '" + path + "': invalid integer '" + std::string(v) + "'", offset);
  }
  return out;
}

/// A manifest record with its image and mask already ROI-cropped to the
/// training resolution.
struct Sample {
  FundusImage image;
  SegmentationMask mask;
};

std::vector<Sample> load_dataset(const std::vector<ManifestRecord>& records, int input_size) {
  std::vector<Sample> out;
  out.reserve(records.size());
  for (const ManifestRecord& rec : records) {
    const FundusImage img = read_ppm(rec.image_path);
    const GrayImage gray = read_pgm(rec.mask_path);
    if (gray.width != img.width || gray.height != img.height) {
      throw DimensionError("manifest pair: image '" + rec.image_path + "' is " +
                           std::to_string(img.width) + "x" + std::to_string(img.height) +
                           " but mask '" + rec.mask_path + "' is " + std::to_string(gray.width) +
                           "x" + std::to_string(gray.height));
    }
    const MaskDecodeResult dec = decode_mask(gray);
    if (dec.snapped > 0) {
      std::fprintf(stderr, "warning: %d pixel(s) snapped to the nearest mask code in '%s'\n",
                   dec.snapped, rec.mask_path.c_str());
    }
    if (!cup_inside_disc(dec.mask)) {
      std::fprintf(stderr, "warning: cup region touches the background in '%s'\n",
                   rec.mask_path.c_str());
    }
    RoiBox box;
    if (rec.roi) {
      box = *rec.roi;
      validate_box(box, img.width, img.height, "manifest roi");
    } else {
      box = detect_roi(img);
    }
    out.push_back({crop_roi(img, box, input_size), crop_roi(dec.mask, box, input_size)});
  }
  return out;
}

AugmentOptions augment_options(const TrainConfig& cfg) {
  AugmentOptions o;
  o.hflip = cfg.aug_hflip;
  o.vflip = cfg.aug_vflip;
  o.scale = cfg.aug_scale;
  o.illumination = cfg.aug_illumination;
  o.scale_lo = static_cast<float>(cfg.aug_scale_lo);
  o.scale_hi = static_cast<float>(cfg.aug_scale_hi);
  o.illum_lo = static_cast<float>(cfg.aug_illum_lo);
  o.illum_hi = static_cast<float>(cfg.aug_illum_hi);
  return o;
}

void fill_slot(Tensor& x, Tensor& y, int slot, const Sample& s, bool do_augment,
               const AugmentOptions& opts, std::uint64_t aug_seed) {
  Tensor xi, yi;
  if (do_augment) {
    auto [img, msk] = augment(s.image, s.mask, opts, aug_seed);
    xi = image_to_tensor(img);
    yi = mask_to_target(msk);
  } else {
    xi = image_to_tensor(s.image);
    yi = mask_to_target(s.mask);
  }
  std::copy_n(xi.values().data(), xi.numel(), x.values().data() + slot * xi.numel());
  std::copy_n(yi.values().data(), yi.numel(), y.values().data() + slot * yi.numel());
}

/// Each worker takes the slots congruent to its id; slots touch disjoint
/// tensor regions and own their RNG, so the result is schedule-independent.
template <typename Fn>
void for_each_slot(int slots, int workers, Fn&& fn) {
  workers = std::max(1, std::min(workers, slots));
  if (workers == 1) {
    for (int k = 0; k < slots; ++k) fn(k);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (int k = w; k < slots; k += workers) fn(k);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<int> shuffled_indices(int n, Rng rng) {
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.below(static_cast<std::uint32_t>(i + 1)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  return order;
}

/// Existing loss-log content truncated to steps <= keep_step (header always
/// kept); a fresh header when the file does not exist yet.
std::string truncated_log(const std::string& path, std::int64_t keep_step, const char* header) {
  if (!fs::exists(path)) return header;
  const std::string text = read_text_file(path, "loss log");
  std::string out = header;
  std::size_t offset = 0;
  bool first = true;
  while (offset < text.size()) {
    std::size_t eol = text.find('\n', offset);
    if (eol == std::string::npos) eol = text.size();
    const std::string_view line(text.data() + offset, eol - offset);
    offset = eol + 1;
    if (first) {
      first = false;  // header line
      continue;
    }
    if (line.empty()) continue;
    std::int64_t step = 0;
    const auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), step);
    if (ec != std::errc{} || step > keep_step) continue;
    out.append(line);
    out.push_back('\n');
  }
  return out;
}

SegmentationMask predict_mask(Model& model, const FundusImage& roi_image) {
  const int s = roi_image.width;
  Tensor x = Tensor::zeros({1, 3, s, s});
  const Tensor xi = image_to_tensor(roi_image);
  std::copy_n(xi.values().data(), xi.numel(), x.values().data());
  const Tensor yhat = model.gen.forward(x, /*training=*/false);
  const std::span<const float> v = yhat.values();
  return target_to_mask(Tensor::from_values({1, s, s}, std::vector<float>(v.begin(), v.end())));
}

}  // namespace

std::vector<ManifestRecord> read_manifest(const std::string& path) {
  const std::string text = read_text_file(path, "manifest");
  const std::string base = parent_dir(path);
  std::vector<ManifestRecord> records;

  std::size_t offset = 0;
  while (offset < text.size()) {
    std::size_t eol = text.find('\n', offset);
    if (eol == std::string::npos) eol = text.size();
    std::string_view line(text.data() + offset, eol - offset);
    const std::size_t line_offset = offset;
    offset = eol + 1;

    line = trim(line);
    if (line.empty() || line.front() == '#') continue;

    std::vector<std::string_view> fields;
    std::size_t from = 0;
    while (true) {
      const std::size_t comma = line.find(',', from);
      fields.push_back(trim(line.substr(from, comma - from)));
      if (comma == std::string_view::npos) break;
      from = comma + 1;
    }
    if (fields.size() != 2 && fields.size() != 6) {
      throw ParseError("manifest '" + path + "': expected 'image,mask' or 'image,mask,x,y,w,h'",
                       line_offset);
    }
    if (fields[0].empty() || fields[1].empty()) {
      throw ParseError("manifest '" + path + "': empty path field", line_offset);
    }
    ManifestRecord rec;
    rec.image_path = resolve_path(base, std::string(fields[0]));
    rec.mask_path = resolve_path(base, std::string(fields[1]));
    if (fields.size() == 6) {
      rec.roi = RoiBox{manifest_int(fields[2], path, line_offset),
                       manifest_int(fields[3], path, line_offset),
                       manifest_int(fields[4], path, line_offset),
                       manifest_int(fields[5], path, line_offset)};
    }
    for (const std::string* p : {&rec.image_path, &rec.mask_path}) {
      if (!fs::exists(*p)) {
        throw IoError("manifest '" + path + "' references missing file '" + *p + "'");
      }
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void write_manifest(const std::vector<ManifestRecord>& records, const std::string& path) {
  std::string out;
  for (const ManifestRecord& r : records) {
    out += r.image_path;
    out += ',';
    out += r.mask_path;
    if (r.roi) {
      out += ',' + std::to_string(r.roi->x) + ',' + std::to_string(r.roi->y) + ',' +
             std::to_string(r.roi->w) + ',' + std::to_string(r.roi->h);
    }
    out += '\n';
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open manifest '" + path + "' for writing");
  f << out;
  if (!f) throw IoError("write failed on manifest '" + path + "'");
}

Model Model::create(const TrainConfig& cfg) {
  cfg.validate();
  GeneratorConfig g;
  g.width_scale = cfg.width_scale;
  g.input_size = cfg.input_size;
  g.init_seed = mix_seed(cfg.seed, 1);
  FeatureExtractorConfig f;
  f.width_scale = cfg.width_scale;
  f.init_seed = mix_seed(cfg.seed, 2);

  Model m{Generator(g), FeatureExtractor(f)};
  const auto apply_bn = [&](NetBlock& b) {
    if (b.has_bn) {
      b.bn.eps = static_cast<float>(cfg.bn_eps);
      b.bn.momentum = static_cast<float>(cfg.bn_momentum);
    }
  };
  for (NetBlock& b : m.gen.encoder()) apply_bn(b);
  for (NetBlock& b : m.gen.decoder()) apply_bn(b);
  for (NetBlock& b : m.fx.layers()) apply_bn(b);
  m.fx.set_trainable(cfg.extractor_trainable);
  return m;
}

std::vector<std::pair<std::string, Tensor>> Model::state() {
  std::vector<std::pair<std::string, Tensor>> out;
  for (auto& [n, t] : gen.parameters()) out.emplace_back("gen." + n, t);
  for (auto& [n, t] : gen.buffers()) out.emplace_back("gen." + n, t);
  for (auto& [n, t] : fx.parameters()) out.emplace_back("fx." + n, t);
  for (auto& [n, t] : fx.buffers()) out.emplace_back("fx." + n, t);
  return out;
}

std::vector<std::pair<std::string, Tensor>> Model::trainable(const TrainConfig& cfg) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (auto& [n, t] : gen.parameters()) out.emplace_back("gen." + n, t);
  if (cfg.extractor_trainable) {
    for (auto& [n, t] : fx.parameters()) out.emplace_back("fx." + n, t);
  }
  return out;
}

void Model::load_state(const Checkpoint& ckpt) {
  for (auto& [name, t] : state()) {
    const Tensor* src = ckpt.find(name);
    if (!src) throw ContractError("checkpoint is missing tensor '" + name + "'");
    if (src->shape() != t.shape()) {
      throw DimensionError("checkpoint tensor '" + name + "' has shape " +
                           shape_str(src->shape()) + ", model expects " + shape_str(t.shape()));
    }
    std::copy_n(src->values().data(), t.numel(), t.values().data());
  }
}

TrainResult run_train(const std::string& config_path, const std::string& resume_path,
                      int workers) {
  TrainConfig cfg = TrainConfig::load(config_path);
  cfg.validate();
  if (cfg.train_manifest.empty()) {
    throw ContractError("config: train_manifest is required for training");
  }
  const std::string base = parent_dir(config_path);
  const std::string manifest_path = resolve_path(base, cfg.train_manifest);
  const std::string ckpt_dir = resolve_path(base, cfg.checkpoint_dir);

  const std::vector<ManifestRecord> records = read_manifest(manifest_path);
  if (records.empty()) {
    throw ContractError("train: manifest '" + manifest_path + "' has no records");
  }
  const std::vector<Sample> samples = load_dataset(records, cfg.input_size);

  Model model = Model::create(cfg);
  AdamConfig acfg;
  acfg.lr = static_cast<float>(cfg.lr);
  acfg.beta1 = static_cast<float>(cfg.beta1);
  acfg.beta2 = static_cast<float>(cfg.beta2);
  Adam adam(model.trainable(cfg), acfg);
  const LossConfig lcfg{static_cast<float>(cfg.lambda), static_cast<float>(cfg.smooth)};

  fs::create_directories(ckpt_dir);
  const std::string log_path = ckpt_dir + "/losses.csv";
  const char* header = "step,l_dice,l_mfm,l_total\n";

  std::int64_t start_epoch = 0;
  std::string log_prefix = header;
  if (!resume_path.empty()) {
    const Checkpoint ckpt = load_checkpoint(resume_path);
    const TrainConfig old = TrainConfig::parse(ckpt.config_text);
    if (!config_equal_except_epochs(old, cfg)) {
      throw ContractError("resume: config does not match the checkpoint (only 'epochs' may "
                          "change between runs)");
    }
    if (ckpt.epoch >= cfg.epochs) {
      throw ContractError("resume: checkpoint already covers " + std::to_string(ckpt.epoch) +
                          " epoch(s), config asks for " + std::to_string(cfg.epochs));
    }
    model.load_state(ckpt);
    for (auto& [name, t] : adam.state_tensors()) {
      const Tensor* src = ckpt.find(name);
      if (!src) throw ContractError("checkpoint is missing optimizer tensor '" + name + "'");
      std::copy_n(src->values().data(), t.numel(), t.values().data());
    }
    adam.set_step_count(ckpt.step);
    start_epoch = ckpt.epoch;
    log_prefix = truncated_log(log_path, ckpt.step, header);
  }
  {
    std::ofstream f(log_path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open loss log '" + log_path + "' for writing");
    f << log_prefix;
  }
  std::ofstream log(log_path, std::ios::binary | std::ios::app);

  TrainResult result;
  result.loss_log = log_path;
  const std::string canonical = cfg.serialize();
  const AugmentOptions opts = augment_options(cfg);
  const int m = static_cast<int>(samples.size());
  std::int64_t step = adam.step_count();

  for (int epoch = static_cast<int>(start_epoch); epoch < cfg.epochs; ++epoch) {
    const std::vector<int> order =
        shuffled_indices(m, Rng(mix_seed(cfg.seed, 0x51u, static_cast<std::uint64_t>(epoch))));
    for (int begin = 0; begin < m; begin += cfg.batch_size) {
      const int b = std::min(cfg.batch_size, m - begin);
      Tensor x = Tensor::zeros({b, 3, cfg.input_size, cfg.input_size});
      Tensor y = Tensor::zeros({b, 1, cfg.input_size, cfg.input_size});
      for_each_slot(b, workers, [&](int k) {
        const int pos = begin + k;
        const std::uint64_t aug_seed = mix_seed(cfg.seed, 0xa6u,
                                                static_cast<std::uint64_t>(epoch),
                                                static_cast<std::uint64_t>(pos));
        fill_slot(x, y, k, samples[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])],
                  cfg.augment, opts, aug_seed);
      });

      adam.zero_grad();
      Graph graph;
      TotalLoss losses;
      {
        Recording rec(graph);
        const Tensor yhat = model.gen.forward(x, /*training=*/true);
        losses = total_loss(x, y, yhat, model.fx, lcfg);
      }
      backward(losses.total, graph);
      adam.step();
      ++step;

      result.last_dice = losses.dice.item();
      result.last_mfm = losses.mfm.item();
      result.last_total = losses.total.item();
      result.steps = step;
      log << step << ',' << format_float(result.last_dice) << ','
          << format_float(result.last_mfm) << ',' << format_float(result.last_total) << '\n';
      log.flush();
      if (!log) throw IoError("write failed on loss log '" + log_path + "'");
    }

    Checkpoint ckpt;
    ckpt.config_text = canonical;
    ckpt.epoch = epoch + 1;
    ckpt.step = step;
    ckpt.rng_state = cfg.seed;
    ckpt.rng_inc = Rng::kDefaultStream;
    ckpt.tensors = model.state();
    for (auto& entry : adam.state_tensors()) ckpt.tensors.push_back(entry);
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%04d.ckpt", epoch + 1);
    const std::string ckpt_path = ckpt_dir + "/" + name;
    save_checkpoint(ckpt, ckpt_path);
    result.last_checkpoint = ckpt_path;
  }
  return result;
}

EvalReport run_eval(const std::string& ckpt_path, const std::string& manifest_path) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  TrainConfig cfg = TrainConfig::parse(ckpt.config_text);
  cfg.validate();
  Model model = Model::create(cfg);
  model.load_state(ckpt);

  const std::vector<ManifestRecord> records = read_manifest(manifest_path);
  if (records.empty()) {
    throw ContractError("eval: manifest '" + manifest_path + "' has no records");
  }
  const std::vector<Sample> samples = load_dataset(records, cfg.input_size);

  std::vector<std::pair<std::string, SegmentationMask>> preds, truths;
  preds.reserve(samples.size());
  truths.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string id = fs::path(records[i].image_path).filename().string();
    preds.emplace_back(id, predict_mask(model, samples[i].image));
    truths.emplace_back(id, samples[i].mask);
  }
  return evaluate(preds, truths);
}

PredictResult run_predict(const std::string& ckpt_path, const std::string& image_path,
                          std::optional<RoiBox> roi, const std::string& out_path,
                          const std::string& overlay_path) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  TrainConfig cfg = TrainConfig::parse(ckpt.config_text);
  cfg.validate();
  Model model = Model::create(cfg);
  model.load_state(ckpt);

  const FundusImage img = read_ppm(image_path);
  RoiBox box;
  if (roi) {
    box = *roi;
    validate_box(box, img.width, img.height, "predict roi");
  } else {
    box = detect_roi(img);
  }
  const FundusImage cropped = crop_roi(img, box, cfg.input_size);
  const SegmentationMask pred = predict_mask(model, cropped);

  // Re-project the S x S prediction onto the source grid; everything outside
  // the ROI is background.
  SegmentationMask full;
  full.width = img.width;
  full.height = img.height;
  full.labels.assign(static_cast<std::size_t>(img.width) * img.height, MaskClass::background);
  const int s = cfg.input_size;
  for (int py = box.y; py < box.y + box.h; ++py) {
    const int si = static_cast<int>(static_cast<std::int64_t>(py - box.y) * s / box.h);
    for (int px = box.x; px < box.x + box.w; ++px) {
      const int sj = static_cast<int>(static_cast<std::int64_t>(px - box.x) * s / box.w);
      full.labels[static_cast<std::size_t>(py) * img.width + px] =
          pred.labels[static_cast<std::size_t>(si) * s + sj];
    }
  }
  write_pgm(encode_mask(full), out_path);

  if (!overlay_path.empty()) {
    FundusImage overlay = img;
    for (std::size_t i = 0; i < full.labels.size(); ++i) {
      if (full.labels[i] == MaskClass::background) continue;
      const bool cup = full.labels[i] == MaskClass::cup;
      std::uint8_t* px = overlay.pixels.data() + i * 3;
      px[0] = static_cast<std::uint8_t>((px[0] + (cup ? 255 : 0)) / 2);
      px[1] = static_cast<std::uint8_t>((px[1] + (cup ? 0 : 255)) / 2);
      px[2] = static_cast<std::uint8_t>(px[2] / 2);
    }
    write_ppm(overlay, overlay_path);
  }
  return PredictResult{box, out_path};
}

std::string run_synth(const std::string& out_dir, int count, int size, std::uint64_t seed) {
  if (count < 1) throw ContractError("synth: count must be at least 1");
  fs::create_directories(out_dir);
  std::vector<ManifestRecord> records;
  records.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const SynthSample s = synth_sample(mix_seed(seed, static_cast<std::uint64_t>(i)), size);
    char img_name[32], msk_name[32];
    std::snprintf(img_name, sizeof img_name, "img_%03d.ppm", i);
    std::snprintf(msk_name, sizeof msk_name, "msk_%03d.pgm", i);
    write_ppm(s.image, out_dir + "/" + img_name);
    write_pgm(encode_mask(s.mask), out_dir + "/" + msk_name);
    records.push_back({img_name, msk_name, s.roi});
  }
  const std::string manifest = out_dir + "/manifest.txt";
  write_manifest(records, manifest);
  return manifest;
}

}  // namespace odcs
