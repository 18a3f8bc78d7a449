#pragma once

// Frozen uni-modal encoders, each pretrained in-repo on the synthetic data:
// a pose VAE (feature = the pre-projection hidden vector), a text transformer
// trained by text-to-pose retrieval against the frozen pose encoder, and a
// keypoint-token view transformer trained to lift 2D views to camera-frame 3D.

#include "poseweave/datagen.hpp"
#include "poseweave/nn.hpp"

namespace poseweave::encoders {

using datagen::TriSample;
using datagen::Vocabulary;
using nlohmann::json;
using nn::Adam;
using nn::AdamConfig;
using nn::NetCtx;
using nn::Tensorf;

struct TrainingDiverged : std::runtime_error {
  explicit TrainingDiverged(const std::string& msg) : std::runtime_error(msg) {}
};

struct EncoderDims {
  int64_t d_enc = 512;       // published feature width of every encoder
  int64_t pose_latent = 32;  // VAE bottleneck
  int64_t ff = 1024;         // transformer feed-forward width
  int heads = 4;
  int layers = 4;
  double dropout = 0.1;
  int64_t max_tokens = 128;

  json to_json() const {
    return {{"d_enc", d_enc},   {"pose_latent", pose_latent}, {"ff", ff},
            {"heads", heads},   {"layers", layers},           {"dropout", dropout},
            {"max_tokens", max_tokens}};
  }
  static EncoderDims from_json(const json& j) {
    EncoderDims d;
    d.d_enc = j.at("d_enc");
    d.pose_latent = j.at("pose_latent");
    d.ff = j.at("ff");
    d.heads = j.at("heads");
    d.layers = j.at("layers");
    d.dropout = j.at("dropout");
    d.max_tokens = j.at("max_tokens");
    return d;
  }
};

struct StageTrainConfig {
  int epochs = 25;
  int64_t batch = 128;
  double lr = 1e-3;

  json to_json() const { return {{"epochs", epochs}, {"batch", batch}, {"lr", lr}}; }
  static StageTrainConfig from_json(const json& j) {
    return StageTrainConfig{j.at("epochs"), j.at("batch"), j.at("lr")};
  }
};

struct EncodersConfig {
  EncoderDims dims;
  StageTrainConfig pose{30, 128, 1e-3};
  StageTrainConfig text{20, 128, 5e-4};
  StageTrainConfig view{25, 128, 1e-3};
  double pose_kl_weight = 1e-4;

  json to_json() const {
    return {{"dims", dims.to_json()}, {"pose", pose.to_json()},
            {"text", text.to_json()}, {"view", view.to_json()},
            {"pose_kl_weight", pose_kl_weight}};
  }
  static EncodersConfig from_json(const json& j) {
    EncodersConfig c;
    c.dims = EncoderDims::from_json(j.at("dims"));
    c.pose = StageTrainConfig::from_json(j.at("pose"));
    c.text = StageTrainConfig::from_json(j.at("text"));
    c.view = StageTrainConfig::from_json(j.at("view"));
    c.pose_kl_weight = j.at("pose_kl_weight");
    return c;
  }
};

// ---------------------------------------------------------------------------
// Batch input builders
// ---------------------------------------------------------------------------

constexpr int64_t kPoseInputWidth = 3 * skeleton::kNumJoints;  // axis-angle, flattened

inline Tensorf pose_input(const std::vector<TriSample>& samples,
                          const std::vector<int>& idx) {
  auto t = Tensorf::leaf({int64_t(idx.size()), kPoseInputWidth});
  float* d = t.mutable_data();
  for (size_t b = 0; b < idx.size(); ++b) {
    const auto flat = samples[size_t(idx[b])].pose.flat();
    for (size_t k = 0; k < flat.size(); ++k) d[b * size_t(kPoseInputWidth) + k] = float(flat[k]);
  }
  return t;
}

// One token per joint: (x, y, visibility); invisible joints zeroed.
inline Tensorf view_input(const std::vector<TriSample>& samples, const std::vector<int>& idx) {
  const int64_t j = skeleton::kNumJoints;
  auto t = Tensorf::leaf({int64_t(idx.size()), j, 3});
  float* d = t.mutable_data();
  for (size_t b = 0; b < idx.size(); ++b) {
    const auto& view = samples[size_t(idx[b])].view;
    for (int64_t k = 0; k < j; ++k) {
      float* tok = d + (int64_t(b) * j + k) * 3;
      if (view.visible[size_t(k)]) {
        tok[0] = float(view.xy[size_t(2 * k)]);
        tok[1] = float(view.xy[size_t(2 * k + 1)]);
        tok[2] = 1.0f;
      } else {
        tok[0] = 0.0f;
        tok[1] = 0.0f;
        tok[2] = 0.0f;
      }
    }
  }
  return t;
}

struct TokenBatch {
  std::vector<int> ids;           // B * T, padded
  std::vector<uint8_t> mask;      // B * T, 1 = real token
  int64_t batch = 0, tokens = 0;
};

inline TokenBatch token_batch(const std::vector<std::vector<std::string>>& captions,
                              const Vocabulary& vocab, int64_t max_tokens) {
  TokenBatch tb;
  tb.batch = int64_t(captions.size());
  int64_t tmax = 1;
  for (const auto& c : captions) tmax = std::max(tmax, int64_t(c.size()));
  tb.tokens = std::min(tmax, max_tokens);
  tb.ids.assign(size_t(tb.batch * tb.tokens), Vocabulary::kPad);
  tb.mask.assign(size_t(tb.batch * tb.tokens), 0);
  for (int64_t b = 0; b < tb.batch; ++b) {
    const auto& cap = captions[size_t(b)];
    const int64_t n = std::min(int64_t(cap.size()), tb.tokens);
    for (int64_t k = 0; k < n; ++k) {
      tb.ids[size_t(b * tb.tokens + k)] = vocab.id(cap[size_t(k)]);
      tb.mask[size_t(b * tb.tokens + k)] = 1;
    }
  }
  return tb;
}

// ---------------------------------------------------------------------------
// Pose encoder (VAE)
// ---------------------------------------------------------------------------

class PoseVae : public nn::Module<float> {
 public:
  PoseVae(const EncoderDims& dims, Rng& rng)
      : enc1_(kPoseInputWidth, dims.d_enc, rng),
        enc2_(dims.d_enc, dims.d_enc, rng),
        mu_(dims.d_enc, dims.pose_latent, rng),
        logvar_(dims.d_enc, dims.pose_latent, rng),
        dec1_(dims.pose_latent, dims.d_enc, rng),
        dec2_(dims.d_enc, dims.d_enc, rng),
        out_(dims.d_enc, kPoseInputWidth, rng) {
    this->reg_child("enc1", enc1_);
    this->reg_child("enc2", enc2_);
    this->reg_child("mu", mu_);
    this->reg_child("logvar", logvar_);
    this->reg_child("dec1", dec1_);
    this->reg_child("dec2", dec2_);
    this->reg_child("out", out_);
  }

  // The published representation: the hidden vector feeding the latent heads.
  Tensorf feature(const Tensorf& x) {
    return relu(enc2_.forward(relu(enc1_.forward(x))));
  }

  struct VaeOut {
    Tensorf recon;
    Tensorf mu;
    Tensorf logvar;
  };

  VaeOut vae_forward(const Tensorf& x, Rng& noise_rng) {
    auto h = feature(x);
    auto mu = mu_.forward(h);
    auto lv = logvar_.forward(h);
    auto eps = Tensorf::randn(mu.shape(), noise_rng);
    auto z = add(mu, mul(eps, exp(mul_scalar(lv, 0.5f))));
    auto recon = out_.forward(relu(dec2_.forward(relu(dec1_.forward(z)))));
    return {recon, mu, lv};
  }

  Tensorf posterior_mean(const Tensorf& h) { return mu_.forward(h); }

  Tensorf decode(const Tensorf& z) {
    return out_.forward(relu(dec2_.forward(relu(dec1_.forward(z)))));
  }

 private:
  nn::Dense<float> enc1_, enc2_, mu_, logvar_, dec1_, dec2_, out_;
};

// KL(q || N(0, I)) for diagonal Gaussians, averaged over the batch.
inline Tensorf gaussian_kl(const Tensorf& mu, const Tensorf& logvar) {
  // -0.5 * sum(1 + logvar - mu^2 - exp(logvar)) / B
  auto term = sub(sub(add_scalar(logvar, 1.0f), mul(mu, mu)), exp(logvar));
  return mul_scalar(sum_all(term), -0.5f / float(mu.dim(0)));
}

// ---------------------------------------------------------------------------
// Text encoder
// ---------------------------------------------------------------------------

class TextEncoder : public nn::Module<float> {
 public:
  TextEncoder(const EncoderDims& dims, int vocab_size, Rng& rng)
      : dims_(dims),
        tokens_(vocab_size, dims.d_enc, rng),
        positions_(dims.max_tokens, dims.d_enc, rng),
        core_(dims.d_enc, dims.heads, dims.layers, dims.ff, dims.dropout,
              nn::Activation::kGELU, false, rng) {
    this->reg_child("tokens", tokens_);
    this->reg_child("positions", positions_);
    this->reg_child("core", core_);
  }

  // Mean-pooled embedding over the real (unpadded) tokens.
  Tensorf encode(const TokenBatch& tb, const NetCtx& ctx) {
    std::vector<int> pos_ids(size_t(tb.batch * tb.tokens));
    for (int64_t b = 0; b < tb.batch; ++b)
      for (int64_t k = 0; k < tb.tokens; ++k) pos_ids[size_t(b * tb.tokens + k)] = int(k);
    auto x = add(tokens_.forward(tb.ids, {tb.batch, tb.tokens}),
                 positions_.forward(pos_ids, {tb.batch, tb.tokens}));
    auto h = core_.forward(x, ctx, &tb.mask);
    return masked_mean_tokens(h, tb.mask);
  }

 private:
  EncoderDims dims_;
  nn::Embedding<float> tokens_, positions_;
  nn::TransformerEncoder<float> core_;
};

// ---------------------------------------------------------------------------
// View encoder
// ---------------------------------------------------------------------------

class ViewEncoder : public nn::Module<float> {
 public:
  ViewEncoder(const EncoderDims& dims, Rng& rng)
      : dims_(dims),
        input_proj_(3, dims.d_enc, rng),
        joint_embed_(skeleton::kNumJoints, dims.d_enc, rng),
        core_(dims.d_enc, dims.heads, dims.layers, dims.ff, dims.dropout,
              nn::Activation::kGELU, false, rng) {
    this->reg_child("input_proj", input_proj_);
    this->reg_child("joint_embed", joint_embed_);
    this->reg_child("core", core_);
  }

  // Returns one encoded token per joint: [B, 22, d_enc].
  Tensorf encode_tokens(const Tensorf& view_tokens, const NetCtx& ctx) {
    const int64_t b = view_tokens.dim(0);
    std::vector<int> joint_ids(size_t(b * skeleton::kNumJoints));
    for (int64_t i = 0; i < b; ++i)
      for (int64_t j = 0; j < skeleton::kNumJoints; ++j)
        joint_ids[size_t(i * skeleton::kNumJoints + j)] = int(j);
    auto x = add(input_proj_.forward(view_tokens),
                 joint_embed_.forward(joint_ids, {b, skeleton::kNumJoints}));
    return core_.forward(x, ctx, nullptr);
  }

 private:
  EncoderDims dims_;
  nn::Dense<float> input_proj_;
  nn::Embedding<float> joint_embed_;
  nn::TransformerEncoder<float> core_;
};

// 3D joint targets in the view's camera frame, used by view pretraining.
inline Tensorf camera_frame_targets(const std::vector<TriSample>& samples,
                                    const std::vector<int>& idx) {
  const auto& tree = skeleton::default_tree();
  const int64_t j = skeleton::kNumJoints;
  auto t = Tensorf::leaf({int64_t(idx.size()), j, 3});
  float* d = t.mutable_data();
  for (size_t b = 0; b < idx.size(); ++b) {
    const auto& s = samples[size_t(idx[b])];
    const auto pos = skeleton::forward_kinematics(s.pose, tree, &s.shape);
    Vec3 center = Vec3::Zero();
    for (const auto& p : pos.p) center += p;
    center /= double(j);
    const double az = s.view.azimuth, el = s.view.elevation;
    const Vec3 cam = center + s.view.distance * Vec3(std::cos(el) * std::sin(az), std::sin(el),
                                                     std::cos(el) * std::cos(az));
    const Vec3 fwd = (center - cam).normalized();
    const Vec3 right = fwd.cross(Vec3::UnitY()).normalized();
    const Vec3 up = right.cross(fwd);
    for (int64_t k = 0; k < j; ++k) {
      const Vec3 rel = pos.p[size_t(k)] - center;
      float* out = d + (int64_t(b) * j + k) * 3;
      out[0] = float(rel.dot(right));
      out[1] = float(rel.dot(up));
      out[2] = float(rel.dot(fwd));
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Bundle + pretraining
// ---------------------------------------------------------------------------

struct EncoderBundle {
  EncoderDims dims;
  std::unique_ptr<PoseVae> pose;
  std::unique_ptr<TextEncoder> text;
  std::unique_ptr<ViewEncoder> view;

  static EncoderBundle create(const EncoderDims& dims, uint64_t seed) {
    EncoderBundle b;
    b.dims = dims;
    Rng pr(derive_seed(seed, "pose-encoder-init"));
    Rng tr(derive_seed(seed, "text-encoder-init"));
    Rng vr(derive_seed(seed, "view-encoder-init"));
    b.pose = std::make_unique<PoseVae>(dims, pr);
    b.text = std::make_unique<TextEncoder>(dims, Vocabulary::instance().size(), tr);
    b.view = std::make_unique<ViewEncoder>(dims, vr);
    return b;
  }

  void freeze_all() {
    pose->freeze();
    text->freeze();
    view->freeze();
  }

  std::string param_hash() {
    auto blob = pose->param_blob();
    auto t = text->param_blob();
    auto v = view->param_blob();
    blob.insert(blob.end(), t.begin(), t.end());
    blob.insert(blob.end(), v.begin(), v.end());
    return sha256_hex(blob.data(), blob.size());
  }

  // Frozen single-sample interfaces (evaluation mode, no graph).
  Tensorf encode_pose(const std::vector<TriSample>& samples, const std::vector<int>& idx) {
    nn::NoGradGuard ng;
    return pose->feature(pose_input(samples, idx));
  }
  Tensorf encode_text(const std::vector<std::vector<std::string>>& captions) {
    nn::NoGradGuard ng;
    auto tb = token_batch(captions, Vocabulary::instance(), dims.max_tokens);
    return text->encode(tb, NetCtx::eval());
  }
  Tensorf encode_view(const std::vector<TriSample>& samples, const std::vector<int>& idx) {
    nn::NoGradGuard ng;
    return view->encode_tokens(view_input(samples, idx), NetCtx::eval());
  }

  void save(const std::filesystem::path& dir, const json& extra = json::object()) {
    nn::save_checkpoint(dir / "pose_encoder.ckpt", *pose, "pose-encoder", dims.to_json(), 0,
                        nullptr, extra);
    nn::save_checkpoint(dir / "text_encoder.ckpt", *text, "text-encoder", dims.to_json(), 0,
                        nullptr, extra);
    nn::save_checkpoint(dir / "view_encoder.ckpt", *view, "view-encoder", dims.to_json(), 0,
                        nullptr, extra);
  }

  static EncoderBundle load(const std::filesystem::path& dir) {
    auto bytes = read_file_bytes(dir / "pose_encoder.ckpt");
    uint64_t hlen;
    std::memcpy(&hlen, bytes.data() + 8, 8);
    json header = json::parse(std::string(bytes.begin() + 16, bytes.begin() + 16 + hlen));
    EncoderBundle b = create(EncoderDims::from_json(header.at("hyper")), 0);
    auto ph = nn::load_checkpoint(dir / "pose_encoder.ckpt", *b.pose);
    check(ph.at("role") == "pose-encoder", "encoder checkpoint role mismatch");
    auto th = nn::load_checkpoint(dir / "text_encoder.ckpt", *b.text);
    check(th.at("role") == "text-encoder", "encoder checkpoint role mismatch");
    auto vh = nn::load_checkpoint(dir / "view_encoder.ckpt", *b.view);
    check(vh.at("role") == "view-encoder", "encoder checkpoint role mismatch");
    return b;
  }
};

inline void require_finite(const Tensorf& loss, const std::string& stage, int epoch) {
  if (!loss.all_finite())
    throw TrainingDiverged(stage + ": non-finite loss at epoch " + std::to_string(epoch));
}

inline std::vector<std::vector<int>> epoch_batches(int n, int64_t batch, uint64_t seed,
                                                   int epoch) {
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[size_t(i)] = i;
  Rng rng(derive_seed(seed, "batch-order", uint64_t(epoch)));
  rng.shuffle(order);
  std::vector<std::vector<int>> batches;
  for (int64_t at = 0; at < n; at += batch)
    batches.emplace_back(order.begin() + at,
                         order.begin() + std::min<int64_t>(n, at + batch));
  return batches;
}

// Mean reconstruction mpjpe of the pose VAE over a split (axis-angle decoded
// through forward kinematics), in meters.
inline double pose_recon_mpjpe(PoseVae& vae, const std::vector<TriSample>& samples) {
  nn::NoGradGuard ng;
  const auto& tree = skeleton::default_tree();
  double total = 0;
  const int64_t chunk = 256;
  for (size_t at = 0; at < samples.size(); at += size_t(chunk)) {
    std::vector<int> idx;
    for (size_t i = at; i < std::min(samples.size(), at + size_t(chunk)); ++i)
      idx.push_back(int(i));
    auto x = pose_input(samples, idx);
    // deterministic reconstruction through the posterior mean
    auto recon = vae.decode(vae.posterior_mean(vae.feature(x)));
    for (size_t b = 0; b < idx.size(); ++b) {
      std::vector<double> flat(static_cast<size_t>(kPoseInputWidth));
      for (int64_t k = 0; k < kPoseInputWidth; ++k)
        flat[size_t(k)] = double(recon.data()[int64_t(b) * kPoseInputWidth + k]);
      auto pose = skeleton::PoseAA::from_flat(flat);
      total += skeleton::mpjpe(skeleton::forward_kinematics(pose, tree),
                               skeleton::forward_kinematics(samples[size_t(idx[b])].pose, tree));
    }
  }
  return total / double(samples.size());
}

// ---------------------------------------------------------------------------
// Pretraining stages. Each returns a JSON log; encoders are frozen afterward
// by pretrain_all.
// ---------------------------------------------------------------------------

inline json pretrain_pose_encoder(EncoderBundle& bundle, const std::vector<TriSample>& train,
                                  const std::vector<TriSample>& val,
                                  const EncodersConfig& cfg, uint64_t seed) {
  Adam<float> adam(*bundle.pose, AdamConfig{.lr = cfg.pose.lr});
  json log;
  log["loss"] = json::array();
  for (int epoch = 0; epoch < cfg.pose.epochs; ++epoch) {
    double epoch_loss = 0;
    int nb = 0;
    for (const auto& idx : epoch_batches(int(train.size()), cfg.pose.batch,
                                         derive_seed(seed, "pose-encoder"), epoch)) {
      Rng step_rng(derive_seed(seed, "pose-encoder-step", uint64_t(epoch), uint64_t(nb)));
      auto x = pose_input(train, idx);
      auto out = bundle.pose->vae_forward(x, step_rng);
      auto loss = add(mse(out.recon, x),
                      mul_scalar(gaussian_kl(out.mu, out.logvar), float(cfg.pose_kl_weight)));
      require_finite(loss, "pose-encoder", epoch);
      adam.zero_grad();
      nn::backward(loss);
      adam.step();
      epoch_loss += double(loss.item());
      ++nb;
    }
    log["loss"].push_back(epoch_loss / std::max(1, nb));
  }
  log["train_recon_mpjpe"] = pose_recon_mpjpe(*bundle.pose, train);
  log["val_recon_mpjpe"] = val.empty() ? 0.0 : pose_recon_mpjpe(*bundle.pose, val);
  return log;
}

// Precomputed frozen pose features as plain data rows.
inline std::vector<std::vector<float>> frozen_pose_features(EncoderBundle& bundle,
                                                            const std::vector<TriSample>& split) {
  std::vector<std::vector<float>> out(split.size());
  const int64_t chunk = 256;
  for (size_t at = 0; at < split.size(); at += size_t(chunk)) {
    std::vector<int> idx;
    for (size_t i = at; i < std::min(split.size(), at + size_t(chunk)); ++i) idx.push_back(int(i));
    auto f = bundle.encode_pose(split, idx);
    const int64_t d = f.dim(1);
    for (size_t b = 0; b < idx.size(); ++b)
      out[at + b].assign(f.data() + int64_t(b) * d, f.data() + (int64_t(b) + 1) * d);
  }
  return out;
}

inline Tensorf rows_tensor(const std::vector<std::vector<float>>& rows,
                           const std::vector<int>& idx) {
  const int64_t d = int64_t(rows.at(0).size());
  auto t = Tensorf::leaf({int64_t(idx.size()), d});
  for (size_t b = 0; b < idx.size(); ++b)
    std::copy(rows[size_t(idx[b])].begin(), rows[size_t(idx[b])].end(),
              t.mutable_data() + int64_t(b) * d);
  return t;
}

// Length-bucketed batches: similar caption lengths share a batch to bound
// padding waste; bucket order is shuffled per epoch.
inline std::vector<std::vector<int>> bucketed_batches(const std::vector<int64_t>& lengths,
                                                      int64_t batch, uint64_t seed, int epoch) {
  std::vector<int> order(lengths.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
  Rng rng(derive_seed(seed, "bucket-order", uint64_t(epoch)));
  rng.shuffle(order);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return lengths[size_t(a)] < lengths[size_t(b)]; });
  std::vector<std::vector<int>> batches;
  for (size_t at = 0; at < order.size(); at += size_t(batch))
    batches.emplace_back(order.begin() + int64_t(at),
                         order.begin() + std::min(order.size(), at + size_t(batch)));
  rng.shuffle(batches);
  return batches;
}

// Text->pose R@1 (%) with caption 0 queries over the whole split as gallery.
inline double text_to_pose_recall1(EncoderBundle& bundle,
                                   const std::vector<TriSample>& split) {
  if (split.empty()) return 0.0;
  nn::NoGradGuard ng;
  std::vector<std::vector<std::string>> caps;
  for (const auto& s : split) caps.push_back(s.captions.at(0));
  auto t = bundle.encode_text(caps);
  std::vector<int> all(split.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = int(i);
  auto p = bundle.encode_pose(split, all);
  const int64_t n = t.dim(0), d = t.dim(1);
  auto norm_rows = [&](const Tensorf& m) {
    std::vector<double> out(size_t(n * d));
    for (int64_t i = 0; i < n; ++i) {
      double sq = 0;
      for (int64_t k = 0; k < d; ++k) sq += double(m.data()[i * d + k]) * m.data()[i * d + k];
      const double inv = 1.0 / std::max(1e-12, std::sqrt(sq));
      for (int64_t k = 0; k < d; ++k) out[size_t(i * d + k)] = m.data()[i * d + k] * inv;
    }
    return out;
  };
  auto tn = norm_rows(t), pn = norm_rows(p);
  int hits = 0;
  for (int64_t i = 0; i < n; ++i) {
    double best = -2;
    int64_t best_j = -1;
    for (int64_t j = 0; j < n; ++j) {
      double s = 0;
      for (int64_t k = 0; k < d; ++k) s += tn[size_t(i * d + k)] * pn[size_t(j * d + k)];
      if (s > best) {
        best = s;
        best_j = j;
      }
    }
    if (best_j == i) ++hits;
  }
  return 100.0 * hits / double(n);
}

// Symmetric InfoNCE between text embeddings and frozen pose features.
inline json pretrain_text_encoder(EncoderBundle& bundle, const std::vector<TriSample>& train,
                                  const std::vector<TriSample>& val,
                                  const EncodersConfig& cfg, uint64_t seed) {
  auto pose_feats = frozen_pose_features(bundle, train);
  nn::Temperature<float> temp;
  auto params = bundle.text->parameters();
  for (auto* p : temp.parameters()) params.push_back(p);
  Adam<float> adam(params, AdamConfig{.lr = cfg.text.lr});
  const auto& vocab = Vocabulary::instance();

  json log;
  log["loss"] = json::array();
  for (int epoch = 0; epoch < cfg.text.epochs; ++epoch) {
    // one of the 3 captions per sample, chosen per epoch
    std::vector<int> cap_choice(train.size());
    std::vector<int64_t> lengths(train.size());
    for (size_t i = 0; i < train.size(); ++i) {
      cap_choice[i] = int(derive_seed(seed, "caption-choice", uint64_t(epoch), uint64_t(i)) % 3);
      lengths[i] = int64_t(train[i].captions[size_t(cap_choice[i])].size());
    }
    double epoch_loss = 0;
    int nb = 0;
    for (const auto& idx :
         bucketed_batches(lengths, cfg.text.batch, derive_seed(seed, "text-encoder"), epoch)) {
      Rng step_rng(derive_seed(seed, "text-encoder-step", uint64_t(epoch), uint64_t(nb)));
      NetCtx ctx{true, &step_rng};
      std::vector<std::vector<std::string>> caps;
      caps.reserve(idx.size());
      for (int i : idx) caps.push_back(train[size_t(i)].captions[size_t(cap_choice[size_t(i)])]);
      auto tb = token_batch(caps, vocab, bundle.dims.max_tokens);
      auto t = bundle.text->encode(tb, ctx);
      auto p = rows_tensor(pose_feats, idx);
      auto gamma = temp.gamma();
      auto loss = mul_scalar(add(nn::info_nce(t, p, gamma), nn::info_nce(p, t, gamma)), 0.5f);
      require_finite(loss, "text-encoder", epoch);
      adam.zero_grad();
      nn::backward(loss);
      adam.step();
      epoch_loss += double(loss.item());
      ++nb;
    }
    log["loss"].push_back(epoch_loss / std::max(1, nb));
  }
  log["train_r1"] = text_to_pose_recall1(bundle, train);
  log["val_r1"] = val.empty() ? 0.0 : text_to_pose_recall1(bundle, val);
  log["temperature"] = temp.value();
  return log;
}

// Mean per-joint 3D lifting error (meters) of the view regression probe.
inline double view_lift_error(ViewEncoder& enc, nn::Dense<float>& head,
                              const std::vector<TriSample>& split, bool fully_visible_only) {
  nn::NoGradGuard ng;
  std::vector<int> idx;
  for (size_t i = 0; i < split.size(); ++i)
    if (!fully_visible_only || split[i].view.visible_count() == skeleton::kNumJoints)
      idx.push_back(int(i));
  if (idx.empty()) return -1.0;
  double total = 0;
  int64_t count = 0;
  const int64_t chunk = 256;
  for (size_t at = 0; at < idx.size(); at += size_t(chunk)) {
    std::vector<int> part(idx.begin() + int64_t(at),
                          idx.begin() + int64_t(std::min(idx.size(), at + size_t(chunk))));
    auto pred = head.forward(enc.encode_tokens(view_input(split, part), NetCtx::eval()));
    auto gt = camera_frame_targets(split, part);
    const int64_t j = skeleton::kNumJoints;
    for (size_t b = 0; b < part.size(); ++b)
      for (int64_t k = 0; k < j; ++k) {
        const float* p = pred.data() + (int64_t(b) * j + k) * 3;
        const float* g = gt.data() + (int64_t(b) * j + k) * 3;
        total += std::sqrt(double(p[0] - g[0]) * (p[0] - g[0]) +
                           double(p[1] - g[1]) * (p[1] - g[1]) +
                           double(p[2] - g[2]) * (p[2] - g[2]));
        ++count;
      }
  }
  return total / double(count);
}

// Regress camera-frame 3D joints from the view tokens; the probe head is
// training-only and discarded (the published interface is the tokens).
inline json pretrain_view_encoder(EncoderBundle& bundle, const std::vector<TriSample>& train,
                                  const std::vector<TriSample>& val,
                                  const EncodersConfig& cfg, uint64_t seed) {
  Rng head_rng(derive_seed(seed, "view-head-init"));
  nn::Dense<float> head(bundle.dims.d_enc, 3, head_rng);
  auto params = bundle.view->parameters();
  for (auto* p : head.parameters()) params.push_back(p);
  Adam<float> adam(params, AdamConfig{.lr = cfg.view.lr});

  json log;
  log["loss"] = json::array();
  for (int epoch = 0; epoch < cfg.view.epochs; ++epoch) {
    double epoch_loss = 0;
    int nb = 0;
    for (const auto& idx : epoch_batches(int(train.size()), cfg.view.batch,
                                         derive_seed(seed, "view-encoder"), epoch)) {
      Rng step_rng(derive_seed(seed, "view-encoder-step", uint64_t(epoch), uint64_t(nb)));
      NetCtx ctx{true, &step_rng};
      auto tokens = bundle.view->encode_tokens(view_input(train, idx), ctx);
      auto pred = head.forward(tokens);
      auto loss = mse(pred, camera_frame_targets(train, idx));
      require_finite(loss, "view-encoder", epoch);
      adam.zero_grad();
      nn::backward(loss);
      adam.step();
      epoch_loss += double(loss.item());
      ++nb;
    }
    log["loss"].push_back(epoch_loss / std::max(1, nb));
  }
  log["train_lift_error"] = view_lift_error(*bundle.view, head, train, false);
  log["val_lift_error_visible"] =
      val.empty() ? -1.0 : view_lift_error(*bundle.view, head, val, true);
  return log;
}

inline json pretrain_all(EncoderBundle& bundle, const std::vector<TriSample>& train,
                         const std::vector<TriSample>& val, const EncodersConfig& cfg,
                         uint64_t seed) {
  json log;
  log["pose"] = pretrain_pose_encoder(bundle, train, val, cfg, seed);
  bundle.pose->freeze();
  log["text"] = pretrain_text_encoder(bundle, train, val, cfg, seed);
  bundle.text->freeze();
  log["view"] = pretrain_view_encoder(bundle, train, val, cfg, seed);
  bundle.view->freeze();
  return log;
}

}  // namespace poseweave::encoders
