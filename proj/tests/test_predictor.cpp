#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "qsym/predictor.hpp"
#include "qsym/rng.hpp"
#include "qsym/synth.hpp"
#include "qsym/data.hpp"

using namespace qsym;

namespace {

PredictorConfig tiny_config(PoolMode mode = PoolMode::NeuroSym, std::uint64_t seed = 11) {
  PredictorConfig c;
  c.obs_len = 3;
  c.pred_len = 2;
  c.encoder_hidden = 4;
  c.decoder_hidden = 4;
  c.embed_dim = 3;
  c.pool_mlp_dim = 4;
  c.noise_dim = 2;
  c.k_train = 2;
  c.mode = mode;
  c.seed = seed;
  return c;
}

ObservationWindow random_window(Rng& rng, std::size_t agents, std::size_t width) {
  ObservationWindow w;
  for (std::size_t i = 0; i < agents; ++i) {
    std::vector<Vec2> pos;
    Vec2 p{rng.uniform(-4, 4), rng.uniform(-4, 4)};
    for (std::size_t s = 0; s < width; ++s) {
      p = p + Vec2{rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)};
      pos.push_back(p);
    }
    w.agent_positions.emplace(static_cast<AgentId>(i + 1), std::move(pos));
  }
  w.t_last = 2.0;
  return w;
}

SceneWindow random_scene_window(Rng& rng, std::size_t agents, std::size_t obs_len,
                                std::size_t pred_len) {
  SceneWindow w;
  w.t_last = 1.2;
  for (std::size_t i = 0; i < agents; ++i) {
    std::vector<Vec2> obs, fut;
    Vec2 p{rng.uniform(-4, 4), rng.uniform(-4, 4)};
    for (std::size_t s = 0; s < obs_len; ++s) {
      p = p + Vec2{rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)};
      obs.push_back(p);
    }
    for (std::size_t s = 0; s < pred_len; ++s) {
      p = p + Vec2{rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)};
      fut.push_back(p);
    }
    w.obs.emplace(static_cast<AgentId>(i + 1), std::move(obs));
    w.fut.emplace(static_cast<AgentId>(i + 1), std::move(fut));
  }
  return w;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

bool batches_equal(const PredictionBatch& a, const PredictionBatch& b) {
  if (a.samples.size() != b.samples.size()) return false;
  for (const auto& [id, trajs] : a.samples) {
    const auto it = b.samples.find(id);
    if (it == b.samples.end() || it->second.size() != trajs.size()) return false;
    for (std::size_t k = 0; k < trajs.size(); ++k) {
      if (trajs[k].size() != it->second[k].size()) return false;
      for (std::size_t s = 0; s < trajs[k].size(); ++s) {
        if (!(trajs[k][s] == it->second[k][s])) return false;  // bitwise
      }
    }
  }
  return true;
}

}  // namespace

TEST_CASE("pool: alpha forced to 1 reproduces baseline output bit-exactly") {
  Rng rng(1);
  const PredictorModel model = PredictorModel::init(tiny_config(PoolMode::NeuroSym));
  for (int rep = 0; rep < 20; ++rep) {
    const ObservationWindow w = random_window(rng, 3, model.config.obs_len);
    const auto enc = encode_agents(model, w);
    const PoolResult neutral =
        pool(model, 1, w, enc, PoolMode::NeuroSym, default_cnd(), 1.0);
    const PoolResult baseline = pool(model, 1, w, enc, PoolMode::Baseline, default_cnd());
    REQUIRE(neutral.pooled == baseline.pooled);
  }
}

TEST_CASE("pool: coincident agents reduce the pose embedding to its bias") {
  const PredictorModel model = PredictorModel::init(tiny_config());
  ObservationWindow w;
  w.agent_positions[1] = {{0, 0}, {0.5, 0}, {1, 0}};
  w.agent_positions[2] = {{0, 1}, {0.5, 0.5}, {1, 0}};  // ends on top of agent 1
  w.t_last = 0.8;
  const auto enc = encode_agents(model, w);
  const PoolResult res = pool(model, 1, w, enc, PoolMode::NeuroSym, default_cnd());
  REQUIRE(res.neighbors.size() == 1);
  REQUIRE(res.neighbors[0].relative == Vec2{0.0, 0.0});
  for (std::size_t i = 0; i < res.neighbors[0].pose_out.size(); ++i) {
    REQUIRE(res.neighbors[0].pose_out[i] == model.pose_embed.bias[i]);
    REQUIRE(res.neighbors[0].scaled[i] ==
            Catch::Approx(res.neighbors[0].alpha * model.pose_embed.bias[i]).margin(1e-15));
  }
}

TEST_CASE("pool: the all-zero QTC state scales the pre-MLP embedding by 0.0125") {
  const PredictorModel model = PredictorModel::init(tiny_config());
  // Both agents at rest: the pair state is all-zero, alpha = 1/80.
  ObservationWindow w;
  w.agent_positions[1] = {{0, 0}, {0, 0}, {0, 0}};
  w.agent_positions[2] = {{2, 1}, {2, 1}, {2, 1}};
  w.t_last = 0.8;
  const auto enc = encode_agents(model, w);
  const PoolResult weighted = pool(model, 1, w, enc, PoolMode::NeuroSym, default_cnd());
  const PoolResult unweighted = pool(model, 1, w, enc, PoolMode::NeuroSym, default_cnd(), 1.0);
  REQUIRE(weighted.neighbors[0].alpha == Catch::Approx(0.0125).margin(1e-15));
  for (std::size_t i = 0; i < weighted.neighbors[0].scaled.size(); ++i) {
    REQUIRE(weighted.neighbors[0].scaled[i] ==
            Catch::Approx(0.0125 * unweighted.neighbors[0].scaled[i]).margin(1e-12));
  }
}

TEST_CASE("pool: no other agents returns the zero vector of pooling width") {
  const PredictorModel model = PredictorModel::init(tiny_config());
  ObservationWindow w;
  w.agent_positions[1] = {{0, 0}, {0.5, 0}, {1, 0}};
  w.t_last = 0.8;
  const auto enc = encode_agents(model, w);
  const PoolResult res = pool(model, 1, w, enc, PoolMode::NeuroSym, default_cnd());
  REQUIRE(res.pooled == Vecd(model.config.pool_mlp_dim, 0.0));
}

TEST_CASE("pool: missing hidden state is a contract error") {
  const PredictorModel model = PredictorModel::init(tiny_config());
  Rng rng(3);
  const ObservationWindow w = random_window(rng, 2, model.config.obs_len);
  std::map<AgentId, AgentEncoding> empty;
  REQUIRE_THROWS_AS(pool(model, 1, w, empty, PoolMode::Baseline, default_cnd()), ContractError);
}

TEST_CASE("predict: deterministic given model, window, k and seed") {
  Rng rng(5);
  const PredictorModel model = PredictorModel::init(tiny_config());
  const ObservationWindow w = random_window(rng, 2, model.config.obs_len);
  const PredictionBatch a = predict(model, w, 4, 99);
  const PredictionBatch b = predict(model, w, 4, 99);
  REQUIRE(batches_equal(a, b));
  const PredictionBatch c = predict(model, w, 4, 100);
  REQUIRE(!batches_equal(a, c));
}

TEST_CASE("predict: k=3 yields three pred_len trajectories per agent") {
  Rng rng(6);
  const PredictorModel model = PredictorModel::init(tiny_config());
  const ObservationWindow w = random_window(rng, 3, model.config.obs_len);
  const PredictionBatch batch = predict(model, w, 3, 1);
  REQUIRE(batch.samples.size() == 3);
  for (const auto& [id, trajs] : batch.samples) {
    REQUIRE(trajs.size() == 3);
    for (const auto& t : trajs) REQUIRE(t.size() == model.config.pred_len);
  }
}

TEST_CASE("predict: an all-zero model holds every agent at its last position") {
  PredictorModel model = PredictorModel::init(tiny_config());
  for (Vecd* t : model.tensors()) {
    for (double& v : *t) v = 0.0;
  }
  Rng rng(7);
  const ObservationWindow w = random_window(rng, 2, model.config.obs_len);
  const PredictionBatch batch = predict(model, w, 2, 3);
  for (const auto& [id, trajs] : batch.samples) {
    const Vec2 last = w.agent_positions.at(id).back();
    for (const auto& traj : trajs) {
      for (const Vec2 p : traj) {
        REQUIRE(p.x == Catch::Approx(last.x).margin(1e-15));
        REQUIRE(p.y == Catch::Approx(last.y).margin(1e-15));
      }
    }
  }
}

TEST_CASE("predict: single-agent window succeeds; malformed window fails") {
  const PredictorModel model = PredictorModel::init(tiny_config());
  Rng rng(8);
  const ObservationWindow solo = random_window(rng, 1, model.config.obs_len);
  REQUIRE_NOTHROW(predict(model, solo, 2, 1));

  ObservationWindow ragged = random_window(rng, 2, model.config.obs_len);
  ragged.agent_positions[2].pop_back();
  REQUIRE_THROWS_AS(predict(model, ragged, 2, 1), ContractError);

  const ObservationWindow wrong_width = random_window(rng, 2, model.config.obs_len + 1);
  REQUIRE_THROWS_AS(predict(model, wrong_width, 2, 1), ContractError);

  REQUIRE_THROWS_AS(predict(model, solo, 0, 1), ContractError);
}

TEST_CASE("mode equivalence: neurosym with alpha override 1 is bit-identical to baseline") {
  Rng rng(9);
  PredictorModel neurosym = PredictorModel::init(tiny_config(PoolMode::NeuroSym, 77));
  PredictorModel baseline = neurosym;
  baseline.config.mode = PoolMode::Baseline;
  for (int rep = 0; rep < 100; ++rep) {
    const ObservationWindow w = random_window(rng, 2 + rep % 3, neurosym.config.obs_len);
    const PredictionBatch a = predict(neurosym, w, 3, 5, default_cnd(), 1.0);
    const PredictionBatch b = predict(baseline, w, 3, 5, default_cnd());
    REQUIRE(batches_equal(a, b));
  }
}

TEST_CASE("alpha touches only the pose-embedding path: zero pool weights equalize modes") {
  Rng rng(10);
  PredictorModel neurosym = PredictorModel::init(tiny_config(PoolMode::NeuroSym, 31));
  for (double& v : neurosym.pool_mlp.weights.data) v = 0.0;
  for (double& v : neurosym.pool_mlp.bias) v = 0.0;
  PredictorModel baseline = neurosym;
  baseline.config.mode = PoolMode::Baseline;
  for (int rep = 0; rep < 20; ++rep) {
    const ObservationWindow w = random_window(rng, 3, neurosym.config.obs_len);
    REQUIRE(batches_equal(predict(neurosym, w, 2, 5), predict(baseline, w, 2, 5)));
  }
}

TEST_CASE("translation equivariance: shifting the window shifts the prediction") {
  Rng rng(12);
  const PredictorModel model = PredictorModel::init(tiny_config(PoolMode::NeuroSym, 13));
  for (int rep = 0; rep < 20; ++rep) {
    const ObservationWindow w = random_window(rng, 2, model.config.obs_len);
    const Vec2 shift{rng.uniform(-50, 50), rng.uniform(-50, 50)};
    ObservationWindow shifted = w;
    for (auto& [id, pos] : shifted.agent_positions) {
      for (Vec2& p : pos) p = p + shift;
    }
    const PredictionBatch a = predict(model, w, 2, 17);
    const PredictionBatch b = predict(model, shifted, 2, 17);
    for (const auto& [id, trajs] : a.samples) {
      for (std::size_t k = 0; k < trajs.size(); ++k) {
        for (std::size_t s = 0; s < trajs[k].size(); ++s) {
          REQUIRE(b.samples.at(id)[k][s].x == Catch::Approx(trajs[k][s].x + shift.x).margin(1e-9));
          REQUIRE(b.samples.at(id)[k][s].y == Catch::Approx(trajs[k][s].y + shift.y).margin(1e-9));
        }
      }
    }
  }
}

TEST_CASE("end-to-end gradient check on the tiny config") {
  Rng rng(14);
  for (int rep = 0; rep < 3; ++rep) {
    PredictorModel model = PredictorModel::init(tiny_config(
        rep % 2 == 0 ? PoolMode::NeuroSym : PoolMode::Baseline, 100 + rep));
    const SceneWindow window = random_scene_window(rng, 2, model.config.obs_len,
                                                   model.config.pred_len);
    // Frozen noise per (agent, sample) so finite differences see a fixed map.
    std::map<std::pair<AgentId, int>, Vecd> noise;
    for (const auto& [id, fut] : window.fut) {
      for (int s = 0; s < static_cast<int>(model.config.k_train); ++s) {
        Vecd z(model.config.noise_dim);
        for (double& v : z) v = rng.normal();
        noise[{id, s}] = z;
      }
    }
    const NoiseProvider noise_for = [&](AgentId id, int s) { return noise.at({id, s}); };

    ModelGrads grads = ModelGrads::zeros_like(model);
    window_variety_loss(model, window, default_cnd(), noise_for, &grads);
    const Vecd analytic = grads.pack();

    Vecd params = model.pack_params();
    const double h = 1e-5;
    int checked = 0;
    for (std::size_t i = 0; i < params.size(); i += 7) {  // stride keeps runtime sane
      const double keep = params[i];
      params[i] = keep + h;
      model.unpack_params(params);
      const double up = window_variety_loss(model, window, default_cnd(), noise_for, nullptr);
      params[i] = keep - h;
      model.unpack_params(params);
      const double down = window_variety_loss(model, window, default_cnd(), noise_for, nullptr);
      params[i] = keep;
      model.unpack_params(params);
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
      INFO("param " << i << ": analytic " << analytic[i] << " numeric " << numeric);
      REQUIRE(std::abs(analytic[i] - numeric) / denom < 1e-3);
      ++checked;
    }
    REQUIRE(checked > 30);
  }
}

TEST_CASE("train: overfits one constant-velocity scene") {
  PredictorConfig cfg = tiny_config(PoolMode::Baseline, 21);
  cfg.obs_len = 4;
  cfg.pred_len = 3;
  cfg.k_train = 3;
  PredictorModel model = PredictorModel::init(cfg);
  Scene scene;
  scene.rate_hz = 2.5;
  for (AgentId id = 1; id <= 2; ++id) {
    Track t;
    t.id = id;
    for (int k = 0; k < 12; ++k) {
      t.samples.push_back({k / 2.5, id, 0.4 * k, static_cast<double>(id)});
    }
    scene.tracks.push_back(t);
  }
  const TrainResult result = train(model, {scene}, 200, 5e-3);
  REQUIRE(result.epoch_loss.size() == 200);
  REQUIRE(result.epoch_loss.back() < 1e-2);
}

TEST_CASE("train: zero epochs leaves the model unchanged with an empty trace") {
  PredictorModel model = PredictorModel::init(tiny_config());
  const Vecd before = model.pack_params();
  Scene scene;
  scene.rate_hz = 2.5;
  Track t;
  t.id = 1;
  for (int k = 0; k < 10; ++k) t.samples.push_back({k / 2.5, 1, 0.4 * k, 0.0});
  scene.tracks.push_back(t);
  const TrainResult result = train(model, {scene}, 0, 1e-3);
  REQUIRE(result.epoch_loss.empty());
  REQUIRE(model.pack_params() == before);
}

TEST_CASE("train: same dataset and seed give identical loss traces") {
  Scene scene;
  scene.rate_hz = 2.5;
  Rng rng(33);
  for (AgentId id = 1; id <= 2; ++id) {
    Track t;
    t.id = id;
    Vec2 p{rng.uniform(-2, 2), rng.uniform(-2, 2)};
    for (int k = 0; k < 10; ++k) {
      p = p + Vec2{0.3, rng.uniform(-0.1, 0.1)};
      t.samples.push_back({k / 2.5, id, p.x, p.y});
    }
    scene.tracks.push_back(t);
  }
  PredictorModel m1 = PredictorModel::init(tiny_config(PoolMode::NeuroSym, 55));
  PredictorModel m2 = PredictorModel::init(tiny_config(PoolMode::NeuroSym, 55));
  const TrainResult r1 = train(m1, {scene}, 5, 1e-3);
  const TrainResult r2 = train(m2, {scene}, 5, 1e-3);
  REQUIRE(r1.epoch_loss == r2.epoch_loss);
  REQUIRE(m1.pack_params() == m2.pack_params());
}

TEST_CASE("train: empty dataset is a contract error") {
  PredictorModel model = PredictorModel::init(tiny_config());
  REQUIRE_THROWS_AS(train(model, {}, 1, 1e-3), ContractError);
}

TEST_CASE("save/load: byte-identical round trip and bit-equal predictions") {
  const PredictorModel model = PredictorModel::init(tiny_config(PoolMode::NeuroSym, 41));
  const std::string path1 = temp_path("qsym_model_rt1.qsym");
  const std::string path2 = temp_path("qsym_model_rt2.qsym");
  save_model(model, path1);
  const PredictorModel loaded = load_model(path1);
  save_model(loaded, path2);

  std::ifstream f1(path1, std::ios::binary), f2(path2, std::ios::binary);
  const std::string bytes1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string bytes2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  REQUIRE(!bytes1.empty());
  REQUIRE(bytes1 == bytes2);

  REQUIRE(loaded.config == model.config);
  REQUIRE(loaded.pack_params() == model.pack_params());

  Rng rng(2);
  const ObservationWindow w = random_window(rng, 2, model.config.obs_len);
  REQUIRE(batches_equal(predict(model, w, 3, 9), predict(loaded, w, 3, 9)));

  std::remove(path1.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("load: bumped version and truncation are data errors") {
  const PredictorModel model = PredictorModel::init(tiny_config());
  const std::string path = temp_path("qsym_model_bad.qsym");
  save_model(model, path);

  {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(4);
    const char bumped[4] = {9, 0, 0, 0};
    f.write(bumped, 4);
  }
  REQUIRE_THROWS_AS(load_model(path), DataError);

  save_model(model, path);
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    bytes.resize(bytes.size() / 2);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << bytes;
  }
  REQUIRE_THROWS_AS(load_model(path), DataError);
  std::remove(path.c_str());
}
