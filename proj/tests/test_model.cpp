#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <vector>

#include "mmcp/core/rng.hpp"
#include "mmcp/model/model.hpp"
#include "mmcp/objectives/objectives.hpp"
#include "oracles.hpp"

using namespace mmcp;
using namespace mmcp::model;
using Tape = nn::Tape<double>;
using Mat = nn::Mat<double>;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.latent_dim = 5;
  cfg.crop_size = 8;
  cfg.window = 2;
  cfg.spatial_channels = {4};
  cfg.temporal_channels = {3};
  cfg.gru_hidden = 6;
  cfg.pred_hidden = 7;
  return cfg;
}

std::vector<float> random_input(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

Eigen::VectorXd vec_of(const Mat& m) {
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

bool same_bits(const Mat& a, const Mat& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("conv_out_size halves with rounding up") {
    CHECK(conv_out_size(32) == 16);
    CHECK(conv_out_size(16) == 8);
    CHECK(conv_out_size(5) == 3);
    CHECK(conv_out_size(1) == 1);
  }

  TEST_CASE("im2col covers every patch and pads borders with -1") {
    const int size = 4, channels = 2;
    const auto idx = im2col_indices(size, channels);
    const int out = conv_out_size(size);
    REQUIRE(idx.size() == static_cast<std::size_t>(9 * channels) * out * out);
    // Reproduce the index arithmetic independently and compare.
    std::size_t k = 0;
    for (int p = 0; p < out * out; ++p) {
      const int oy = p / out, ox = p % out;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const int iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
          for (int c = 0; c < channels; ++c, ++k) {
            if (iy < 0 || iy >= size || ix < 0 || ix >= size) {
              CHECK(idx[k] == -1);
            } else {
              CHECK(idx[k] == (iy * size + ix) * channels + c);
            }
          }
        }
      }
    }
  }

  TEST_CASE("encoder matches a naive convolution oracle") {
    const auto cfg = tiny_config();
    const auto g = graph::build_graph(graph::Mode::COMPASS, graph::default_modalities());
    auto store = init_params<double>(cfg, g, 11);
    Tape tape;
    Forward<double> fwd(tape, store, cfg, g);

    const int S = cfg.crop_size;
    const auto input = random_input(static_cast<std::size_t>(S) * S * 3, 4);
    const int code = fwd.encode("rgb", input);
    REQUIRE(tape.value(code).rows() == cfg.latent_dim);
    REQUIRE(tape.value(code).cols() == 1);

    // Direct nested-loop conv: 3x3, stride 2, zero padding, tanh.
    const Mat& W = store.at("enc/rgb/conv0/W").value;   // [4, 27]
    const Mat& b = store.at("enc/rgb/conv0/b").value;   // [4, 1]
    const int out = conv_out_size(S);
    std::vector<double> flat(static_cast<std::size_t>(out) * out * 4);
    for (int oy = 0; oy < out; ++oy) {
      for (int ox = 0; ox < out; ++ox) {
        for (int oc = 0; oc < 4; ++oc) {
          double s = b(oc, 0);
          for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
              const int iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
              if (iy < 0 || iy >= S || ix < 0 || ix >= S) continue;
              for (int c = 0; c < 3; ++c) {
                s += W(oc, (ky * 3 + kx) * 3 + c) *
                     static_cast<double>(input[(static_cast<std::size_t>(iy) * S + ix) * 3 + c]);
              }
            }
          }
          flat[(static_cast<std::size_t>(oy) * out + ox) * 4 + oc] = std::tanh(s);
        }
      }
    }
    const Mat& fcW = store.at("enc/rgb/fc/W").value;
    const Mat& fcb = store.at("enc/rgb/fc/b").value;
    for (int r = 0; r < cfg.latent_dim; ++r) {
      double s = fcb(r, 0);
      for (std::size_t i = 0; i < flat.size(); ++i) s += fcW(r, static_cast<int>(i)) * flat[i];
      CHECK(tape.value(code)(r, 0) == doctest::Approx(s).epsilon(1e-9));
    }
  }

  TEST_CASE("temporal encoder consumes stacked windows") {
    const auto cfg = tiny_config();
    const auto g = graph::build_graph(graph::Mode::COMPASS, graph::default_modalities());
    auto store = init_params<double>(cfg, g, 3);
    Tape tape;
    Forward<double> fwd(tape, store, cfg, g);
    // flow has 2 channels x window 2 = 4 input channels.
    const auto input = random_input(static_cast<std::size_t>(8) * 8 * 4, 5);
    const int code = fwd.encode("flow", input);
    CHECK(tape.value(code).rows() == cfg.latent_dim);
    CHECK(store.at("enc/flow/conv0/W").value.cols() == 9 * 4);
    CHECK_THROWS_AS((void)fwd.encode("flow", random_input(8 * 8 * 2, 5)), std::invalid_argument);
    CHECK_THROWS_AS((void)fwd.encode("rgb", random_input(7, 5)), std::invalid_argument);
  }

  TEST_CASE("projection heads are per-space affine maps") {
    const auto cfg = tiny_config();
    const auto g = graph::build_graph(graph::Mode::COMPASS, graph::default_modalities());
    auto store = init_params<double>(cfg, g, 9);
    Tape tape;
    Forward<double> fwd(tape, store, cfg, g);
    Rng rng(2);
    Mat x(cfg.latent_dim, 1);
    for (int i = 0; i < cfg.latent_dim; ++i) x(i, 0) = rng.uniform(-1.0, 1.0);
    const int node = tape.constant(x);

    const int st = fwd.project("state", "rgb", node);
    const Eigen::VectorXd want_st = store.at("proj/state/W").value * x.col(0) +
                                    store.at("proj/state/b").value.col(0);
    CHECK((vec_of(tape.value(st)) - want_st).norm() < 1e-12);

    // state and motion apply different weights to the same code.
    const int mo = fwd.project("motion", "rgb", node);
    CHECK((vec_of(tape.value(mo)) - vec_of(tape.value(st))).norm() > 1e-6);

    CHECK_THROWS_AS((void)fwd.project("nowhere", "rgb", node), std::invalid_argument);
    CHECK_THROWS_AS((void)fwd.project("state", "flow", node), std::invalid_argument);

    // No hidden normalization inside the head: a zero code maps to the bias.
    Mat zero = Mat::Zero(cfg.latent_dim, 1);
    const int z = fwd.project("state", "rgb", tape.constant(zero));
    CHECK(same_bits(tape.value(z), store.at("proj/state/b").value));
  }

  TEST_CASE("aggregation matches a reference bidirectional gated unit") {
    const auto cfg = tiny_config();
    const auto g = graph::build_graph(graph::Mode::COMPASS, graph::default_modalities());
    auto store = init_params<double>(cfg, g, 21);
    Tape tape;
    Forward<double> fwd(tape, store, cfg, g);

    Rng rng(31);
    std::vector<Mat> values;
    std::vector<int> nodes;
    for (int i = 0; i < 3; ++i) {
      Mat v(cfg.latent_dim, 1);
      for (int r = 0; r < cfg.latent_dim; ++r) v(r, 0) = rng.uniform(-1.0, 1.0);
      values.push_back(v);
      nodes.push_back(tape.constant(v));
    }
    const int agg = fwd.aggregate(nodes);

    auto run_dir = [&](const std::string& dir, bool reverse) {
      const auto& Wz = store.at("agg/" + dir + "/Wz").value;
      const auto& Uz = store.at("agg/" + dir + "/Uz").value;
      const auto& bz = store.at("agg/" + dir + "/bz").value;
      const auto& Wr = store.at("agg/" + dir + "/Wr").value;
      const auto& Ur = store.at("agg/" + dir + "/Ur").value;
      const auto& br = store.at("agg/" + dir + "/br").value;
      const auto& Wh = store.at("agg/" + dir + "/Wh").value;
      const auto& Uh = store.at("agg/" + dir + "/Uh").value;
      const auto& bh = store.at("agg/" + dir + "/bh").value;
      auto sigmoid = [](const Eigen::VectorXd& v) {
        return Eigen::VectorXd((1.0 / (1.0 + (-v.array()).exp())).matrix());
      };
      Eigen::VectorXd h = Eigen::VectorXd::Zero(cfg.gru_hidden);
      for (std::size_t s = 0; s < values.size(); ++s) {
        const Eigen::VectorXd x = values[reverse ? values.size() - 1 - s : s].col(0);
        const Eigen::VectorXd z = sigmoid(Wz * x + Uz * h + bz.col(0));
        const Eigen::VectorXd r = sigmoid(Wr * x + Ur * h + br.col(0));
        const Eigen::VectorXd cand =
            Eigen::VectorXd((Wh * x + Uh * (r.array() * h.array()).matrix() + bh.col(0))
                                .array()
                                .tanh()
                                .matrix());
        h = ((1.0 - z.array()) * h.array() + z.array() * cand.array()).matrix();
      }
      return h;
    };
    Eigen::VectorXd both(2 * cfg.gru_hidden);
    both << run_dir("fwd", false), run_dir("bwd", true);
    const Eigen::VectorXd want =
        store.at("agg/out/W").value * both + store.at("agg/out/b").value.col(0);
    CHECK((vec_of(tape.value(agg)) - want).norm() < 1e-9);

    // Order sensitivity: reversing the sequence changes the context.
    std::vector<int> rev(nodes.rbegin(), nodes.rend());
    const int agg_rev = fwd.aggregate(rev);
    CHECK((vec_of(tape.value(agg_rev)) - vec_of(tape.value(agg))).norm() > 1e-8);

    CHECK_THROWS_AS((void)fwd.aggregate({}), std::invalid_argument);
  }

  TEST_CASE("future predictions are strictly recursive") {
    const auto cfg = tiny_config();
    const auto g = graph::build_graph(graph::Mode::COMPASS, graph::default_modalities());
    auto store = init_params<double>(cfg, g, 13);
    Tape tape;
    Forward<double> fwd(tape, store, cfg, g);
    Rng rng(8);
    Mat c(cfg.latent_dim, 1);
    for (int i = 0; i < cfg.latent_dim; ++i) c(i, 0) = rng.uniform(-1.0, 1.0);
    const int ctx = tape.constant(c);

    const auto preds = fwd.predict_future(ctx, 3);
    REQUIRE(preds.size() == 3);
    int chained = ctx;
    for (int j = 0; j < 3; ++j) {
      chained = fwd.predict_step(chained);
      CHECK(same_bits(tape.value(preds[j]), tape.value(chained)));
    }
    CHECK_THROWS_AS((void)fwd.predict_future(ctx, 0), std::invalid_argument);
  }

  TEST_CASE("initialization depends on names, not creation order") {
    const auto cfg = tiny_config();
    const auto compass = graph::build_graph(graph::Mode::COMPASS, graph::default_modalities());
    const auto cpc = graph::build_graph(graph::Mode::CPC, graph::default_modalities());
    const auto a = init_params<double>(cfg, compass, 77);
    const auto b = init_params<double>(cfg, cpc, 77);
    for (const char* shared : {"enc/rgb/conv0/W", "enc/flow/fc/b", "proj/motion/W",
                               "agg/fwd/Wz", "agg/bwd/Uh", "pred/fc1/W"}) {
      CAPTURE(shared);
      CHECK(same_bits(a.at(shared).value, b.at(shared).value));
    }
    CHECK(a.index.count("proj/state/W") == 1);
    CHECK(b.index.count("proj/state/W") == 0);

    const auto c = init_params<double>(cfg, compass, 78);
    CHECK(!same_bits(a.at("enc/rgb/conv0/W").value, c.at("enc/rgb/conv0/W").value));

    // Instance-only graphs never allocate aggregation or prediction heads.
    const auto cmc = init_params<double>(cfg, graph::build_graph(graph::Mode::CMC,
                                                                 graph::default_modalities()),
                                         77);
    CHECK(cmc.index.count("agg/out/W") == 0);
    CHECK(cmc.index.count("pred/fc0/W") == 0);
    CHECK(cmc.index.count("proj/cmc/W") == 1);

    // Disjoint allocates one head per space member.
    const auto dj = init_params<double>(cfg, graph::build_graph(graph::Mode::DISJOINT,
                                                                graph::default_modalities()),
                                        77);
    CHECK(dj.index.count("proj/pair:depth+rgb/rgb/W") == 1);
    CHECK(dj.index.count("proj/pair:depth+rgb/depth/W") == 1);
  }

  TEST_CASE("build_codes wires frames, windows, aggregation and predictions") {
    world::DatasetConfig dc;
    dc.world.map_size = 160;
    dc.world.crop_size = 8;
    dc.world.n_obstacles = 4;
    dc.n_sequences = 2;
    dc.seq_len = 16;
    dc.base_seed = 5;
    const auto ds = world::generate_dataset(dc, 1);

    const auto cfg = tiny_config();
    const auto g = graph::build_graph(graph::Mode::COMPASS, graph::default_modalities());
    auto store = init_params<double>(cfg, g, 1);

    graph::BatchParams p;
    p.span = 4;
    p.horizon = 2;
    p.negatives = 3;
    p.window = 2;
    const auto batches = graph::assemble_batches(ds, g, p, 6);
    REQUIRE(batches.size() == 3);

    Tape tape;
    Forward<double> fwd(tape, store, cfg, g);
    const auto codes = build_codes(fwd, ds.sequences[batches[0].seq_index], batches);
    REQUIRE(codes.count("state") == 1);
    REQUIRE(codes.count("motion") == 1);

    // Every node a term references exists and is a d-vector.
    for (const auto& batch : batches) {
      const auto& sc = codes.at(batch.space);
      for (const auto& term : batch.terms) {
        if (term.pred_step > 0) {
          REQUIRE(sc.predictions.count({term.anchor_modality, term.pred_step}) == 1);
          REQUIRE(sc.contexts.count(term.anchor_modality) == 1);
        } else {
          REQUIRE(sc.codes.count({term.anchor_modality, term.anchor_time}) == 1);
        }
        REQUIRE(sc.codes.count({term.target_modality, term.target_time}) == 1);
        for (int t : term.negative_times)
          REQUIRE(sc.codes.count({term.target_modality, t}) == 1);
        CHECK(tape.value(sc.codes.at({term.target_modality, term.target_time})).rows() ==
              cfg.latent_dim);
      }
    }

    // Spot-check the wiring against manual recomputation on the same tape.
    const auto& rec = ds.sequences[batches[0].seq_index];
    const int t0 = batches[0].t0;
    const auto& state = codes.at("state");
    const auto& motion = codes.at("motion");

    const int want_state =
        fwd.project("state", "rgb", fwd.encode("rgb", world::frame_view(rec, "rgb", t0)));
    CHECK(same_bits(tape.value(state.codes.at({"rgb", t0})), tape.value(want_state)));

    const int tau = t0 + p.window;  // first prediction target
    const int want_flow = fwd.project(
        "motion", "flow", fwd.encode("flow", world::window_view(rec, "flow", tau, p.window)));
    CHECK(same_bits(tape.value(motion.codes.at({"flow", tau})), tape.value(want_flow)));

    // Spatial modalities reach the motion space through aggregation over the
    // window of frame codes, then the projection.
    std::vector<int> frames;
    for (int u = tau; u < tau + p.window; ++u)
      frames.push_back(fwd.encode("rgb", world::frame_view(rec, "rgb", u)));
    const int want_agg = fwd.project("motion", "rgb", fwd.aggregate(frames));
    CHECK(same_bits(tape.value(motion.codes.at({"rgb", tau})), tape.value(want_agg)));

    // Predictions roll out recursively from the projected context.
    const auto preds = fwd.predict_future(motion.contexts.at("flow"), p.horizon);
    for (int j = 1; j <= p.horizon; ++j) {
      CHECK(same_bits(tape.value(motion.predictions.at({"flow", j})),
                      tape.value(preds[j - 1])));
    }

    // The full loss over these codes is finite and positive.
    objectives::SimilarityConfig sim;
    const auto loss = objectives::total_loss(tape, codes, g, batches, sim);
    CHECK(std::isfinite(loss.total));
    CHECK(loss.total > 0.0);
    CHECK(loss.temporal.term_count == p.horizon * 3);
    CHECK(loss.spatial.term_count == p.span);
    CHECK(loss.spatiotemporal.term_count == p.horizon * 3);
  }

  TEST_CASE("gradients flow end to end through encoder and projection") {
    auto cfg = tiny_config();
    cfg.crop_size = 4;
    const auto g = graph::build_graph(graph::Mode::COMPASS, graph::default_modalities());
    auto store = init_params<double>(cfg, g, 2);
    const auto input = random_input(4 * 4 * 3, 6);

    const std::vector<std::string> names{"enc/rgb/conv0/W", "enc/rgb/conv0/b", "enc/rgb/fc/W",
                                         "proj/state/W", "proj/state/b"};
    std::vector<Mat> leaves;
    for (const auto& n : names) leaves.push_back(store.at(n).value);

    auto build = [&](Tape& tape, const std::vector<Mat>& vals, std::vector<int>& ids) {
      for (std::size_t i = 0; i < names.size(); ++i) store.at(names[i]).value = vals[i];
      Forward<double> f(tape, store, cfg, g);
      const int proj = f.project("state", "rgb", f.encode("rgb", input));
      for (const auto& n : names) ids.push_back(f.binding().use(n));
      return tape.sum_all(tape.hadamard(proj, proj));
    };
    const auto r = oracle::gradcheck(build, leaves, 1e-5, 24);
    CAPTURE(r.worst);
    CHECK(r.max_rel_error < 1e-6);
    CHECK(r.checked > 50);
  }

  TEST_CASE("config validation rejects impossible geometry") {
    ModelConfig cfg = tiny_config();
    cfg.latent_dim = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.latent_dim = 1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = tiny_config();
    cfg.crop_size = 2;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = tiny_config();
    cfg.spatial_channels = {};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = tiny_config();
    cfg.temporal_channels = {0};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
}
