#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "spikegan/data.hpp"
#include "spikegan/train.hpp"

using namespace spikegan;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("spikegan_train_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

template <typename T>
Var<T> logits(Tape<T>& tape, std::vector<T> vals) {
    Tensor<T> t({static_cast<int64_t>(vals.size())});
    for (size_t i = 0; i < vals.size(); ++i) t[static_cast<int64_t>(i)] = vals[i];
    return tape.leaf(std::move(t), false);
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

// Bars on an 8x8 canvas: small enough that a full train step takes
// milliseconds, structured enough that gradients are nonzero.
TrainConfig tiny_train_cfg() {
    TrainConfig cfg;
    cfg.variant = Variant::swgan;
    cfg.epochs = 1;
    cfg.steps = 2;
    cfg.batch_size = 16;
    cfg.seed = 5;
    cfg.record_walltime = false;
    cfg.gen.latent_dim = 4;
    cfg.gen.channels = 1;
    cfg.gen.height = 8;
    cfg.gen.width = 8;
    cfg.gen.hidden0 = 2;
    cfg.gen.hidden1 = 2;
    cfg.gen.lif.v_th = 0.25;
    cfg.disc.channels = 1;
    cfg.disc.height = 8;
    cfg.disc.width = 8;
    cfg.disc.c1 = 2;
    cfg.disc.c2 = 2;
    cfg.disc.c3 = 2;
    cfg.disc.lif.v_th = 0.25;
    return cfg;
}

Tensor<float> tiny_dataset(int64_t n = 64) {
    ImageDataset ds = synthetic_dataset("bars", n, 1, 8, 8, 99);
    return normalize(ds.images);
}

}  // namespace

TEST_CASE("minimax losses at the indifferent point and in the confident limit") {
    Tape<double> tape;
    Var<double> zeros = logits<double>(tape, {0.0, 0.0, 0.0});
    auto [loss_d, loss_g] = minimax_losses(zeros, zeros);
    CHECK(loss_d.val()[0] == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    CHECK(loss_g.val()[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    Var<double> high = logits<double>(tape, {40.0, 40.0});
    Var<double> low = logits<double>(tape, {-40.0, -40.0});
    CHECK(minimax_d_loss(high, low).val()[0] < 1e-12);   // perfect scorer
    CHECK(minimax_g_loss(low).val()[0] > 39.0);          // fooled generator pays
    CHECK(minimax_g_loss(high).val()[0] < 1e-12);

    // Role swap with sign flip is a formula symmetry.
    Rng rng(3);
    Tape<double> t2;
    Var<double> a = t2.leaf(Tensor<double>::uniform({7}, rng, -3.0, 3.0), false);
    Var<double> b = t2.leaf(Tensor<double>::uniform({7}, rng, -3.0, 3.0), false);
    Var<double> nb = scalar_mul(b, -1.0);
    Var<double> na = scalar_mul(a, -1.0);
    CHECK(minimax_d_loss(a, b).val()[0] == doctest::Approx(minimax_d_loss(nb, na).val()[0]).epsilon(1e-12));
}

TEST_CASE("minimax losses stay finite for extreme logits") {
    Tape<float> tape;
    Var<float> huge = logits<float>(tape, {500.0f, -500.0f});
    CHECK(minimax_d_loss(huge, huge).val().all_finite());
    CHECK(minimax_g_loss(huge).val().all_finite());
}

TEST_CASE("earth-mover losses are linear score gaps") {
    Tape<double> tape;
    Var<double> real = logits<double>(tape, {1.0, 1.0});
    Var<double> fake = logits<double>(tape, {0.0, 0.0});
    auto [loss_d, loss_g] = em_losses(real, fake);
    CHECK(loss_d.val()[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(loss_g.val()[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(em_d_loss(real, real).val()[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(em_g_loss(real).val()[0] == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("earth-mover scorer loss ignores a constant shift of all logits") {
    Rng rng(17);
    for (int round = 0; round < 5; ++round) {
        Tape<double> tape;
        Var<double> real = tape.leaf(Tensor<double>::uniform({9}, rng, -2.0, 2.0), false);
        Var<double> fake = tape.leaf(Tensor<double>::uniform({9}, rng, -2.0, 2.0), false);
        const double base = em_d_loss(real, fake).val()[0];
        const double c = rng.uniform(-50.0, 50.0);
        const double shifted = em_d_loss(add_scalar(real, c), add_scalar(fake, c)).val()[0];
        CHECK(std::abs(shifted - base) <= 1e-6);
    }
}

TEST_CASE("non-finite logits abort with a divergence error") {
    Tape<float> tape;
    Tensor<float> bad({2});
    bad[0] = std::numeric_limits<float>::quiet_NaN();
    Var<float> nan_logits = tape.leaf(bad, false);
    Var<float> ok = logits<float>(tape, {0.0f, 0.0f});
    CHECK_THROWS_AS(minimax_d_loss(nan_logits, ok), DivergenceError);
    CHECK_THROWS_AS(minimax_d_loss(ok, nan_logits), DivergenceError);
    CHECK_THROWS_AS(minimax_g_loss(nan_logits), DivergenceError);
    CHECK_THROWS_AS(em_d_loss(nan_logits, ok), DivergenceError);
    CHECK_THROWS_AS(em_g_loss(nan_logits), DivergenceError);

    Tensor<float> inf({2});
    inf[0] = std::numeric_limits<float>::infinity();
    Var<float> inf_logits = tape.leaf(inf, false);
    CHECK_THROWS_AS(em_g_loss(inf_logits), DivergenceError);
}

TEST_CASE("loss string names round-trip") {
    CHECK(gan_loss_from_string("em") == GanLoss::em);
    CHECK(gan_loss_from_string("minimax") == GanLoss::minimax);
    CHECK(std::string(to_string(GanLoss::em)) == "em");
    CHECK(std::string(to_string(GanLoss::minimax)) == "minimax");
    CHECK_THROWS_AS(gan_loss_from_string("wasserstein"), ConfigError);
}

TEST_CASE("rmsprop single-step closed forms") {
    SUBCASE("no averaging, no damping: unit-scaled signed step") {
        Parameter<double> p("p", Tensor<double>::full({1}, 1.0));
        p.grad = Tensor<double>::full({1}, 3.0);
        RMSProp<double> opt({&p}, RMSPropConfig{0.1, 0.0, 0.0});
        opt.step();
        CHECK(p.value[0] == doctest::Approx(0.9).epsilon(1e-12));
        CHECK(opt.step_count() == 1);
    }

    SUBCASE("fresh accumulator: step is lr*g / (sqrt((1-alpha)) * |g| + eps)") {
        const double lr = 0.05, alpha = 0.99, eps = 1e-8, g = -2.0, p0 = 0.3;
        Parameter<double> p("p", Tensor<double>::full({1}, p0));
        p.grad = Tensor<double>::full({1}, g);
        RMSProp<double> opt({&p}, RMSPropConfig{lr, alpha, eps});
        opt.step();
        const double s1 = (1.0 - alpha) * g * g;
        const double expect = p0 - lr * g / (std::sqrt(s1) + eps);
        CHECK(p.value[0] == doctest::Approx(expect).epsilon(1e-12));
        CHECK(opt.square_avg()[0][0] == doctest::Approx(s1).epsilon(1e-12));
    }

    SUBCASE("zero gradient leaves parameters untouched") {
        Parameter<double> p("p", Tensor<double>::full({3}, 0.7));
        RMSProp<double> opt({&p}, RMSPropConfig{0.1, 0.99, 1e-8});
        opt.step();
        for (int64_t i = 0; i < 3; ++i) CHECK(p.value[i] == 0.7);
    }

    SUBCASE("identical sequences give bit-identical parameters") {
        Rng rng(7);
        Tensor<float> init = Tensor<float>::uniform({8}, rng, -1.0f, 1.0f);
        std::vector<Tensor<float>> grads;
        for (int k = 0; k < 5; ++k) grads.push_back(Tensor<float>::uniform({8}, rng, -1.0f, 1.0f));
        Tensor<float> first;
        for (int round = 0; round < 2; ++round) {
            Parameter<float> p("p", init);
            RMSProp<float> opt({&p}, RMSPropConfig{1e-3, 0.99, 1e-8});
            for (const auto& g : grads) {
                p.grad = g;
                opt.step();
            }
            if (round == 0)
                first = p.value;
            else
                for (int64_t i = 0; i < 8; ++i) CHECK(p.value[i] == first[i]);
        }
    }
}

TEST_CASE("cosine schedule holds flat then decays to near zero") {
    const double lr0 = 5e-5;
    for (int64_t e = 0; e < 100; ++e) CHECK(cosine_anneal_lr(lr0, e, 200) == lr0);
    CHECK(cosine_anneal_lr(lr0, 100, 200) == lr0);  // cos(0) = 1
    CHECK(cosine_anneal_lr(lr0, 150, 200) == doctest::Approx(lr0 / 2.0).epsilon(1e-12));
    const double tail = cosine_anneal_lr(lr0, 199, 200);
    const double expect = lr0 * (1.0 + std::cos(M_PI * 99.0 / 100.0)) / 2.0;
    CHECK(tail == doctest::Approx(expect).epsilon(1e-12));
    CHECK(tail / lr0 == doctest::Approx(2.467e-4).epsilon(1e-3));
    CHECK(cosine_anneal_lr(lr0, 0, 1) == lr0);  // degenerate half
    CHECK_THROWS_AS(cosine_anneal_lr(lr0, -1, 10), ConfigError);
    CHECK_THROWS_AS(cosine_anneal_lr(lr0, 10, 10), ConfigError);
}

TEST_CASE("variant names round-trip") {
    for (Variant v : {Variant::sgan, Variant::swgan, Variant::sgad, Variant::hybrid})
        CHECK(variant_from_string(to_string(v)) == v);
    CHECK_THROWS_AS(variant_from_string("gan"), ConfigError);
}

TEST_CASE("variants bind their objective, neuron kind, and decoder") {
    auto resolved = [](Variant v) {
        TrainConfig cfg = tiny_train_cfg();
        cfg.variant = v;
        cfg.resolve();
        return cfg;
    };

    TrainConfig sgan = resolved(Variant::sgan);
    CHECK(sgan.loss == GanLoss::minimax);
    CHECK(sgan.disc.neuron == NeuronKind::lif);
    CHECK_FALSE(sgan.gen.attention_decode);
    CHECK(sgan.disc.steps == sgan.steps);
    CHECK(sgan.lr_g == 2e-4);

    TrainConfig swgan = resolved(Variant::swgan);
    CHECK(swgan.loss == GanLoss::em);
    CHECK(swgan.disc.neuron == NeuronKind::lif);
    CHECK_FALSE(swgan.gen.attention_decode);
    CHECK(swgan.lr_g == 5e-5);
    CHECK(swgan.lr_d == 5e-5);

    TrainConfig sgad = resolved(Variant::sgad);
    CHECK(sgad.loss == GanLoss::em);
    CHECK(sgad.disc.neuron == NeuronKind::lif);
    CHECK(sgad.gen.attention_decode);

    TrainConfig hybrid = resolved(Variant::hybrid);
    CHECK(hybrid.loss == GanLoss::minimax);
    CHECK(hybrid.disc.neuron == NeuronKind::analog);
    CHECK_FALSE(hybrid.gen.attention_decode);
    CHECK(hybrid.disc.steps == 1);  // single pass, no time dimension
    CHECK(hybrid.gen.steps == hybrid.steps);
    CHECK(hybrid.lr_g == 2e-4);
}

TEST_CASE("explicitly pinned losses must match the variant binding") {
    auto pinned = [](Variant v, GanLoss l) {
        TrainConfig cfg = tiny_train_cfg();
        cfg.variant = v;
        cfg.loss = l;
        cfg.loss_explicit = true;
        return cfg;
    };
    CHECK_THROWS_AS(pinned(Variant::sgan, GanLoss::em).resolve(), ConfigError);
    CHECK_THROWS_AS(pinned(Variant::sgad, GanLoss::minimax).resolve(), ConfigError);
    CHECK_THROWS_AS(pinned(Variant::hybrid, GanLoss::em).resolve(), ConfigError);
    CHECK_NOTHROW(pinned(Variant::swgan, GanLoss::em).resolve());
    CHECK_NOTHROW(pinned(Variant::sgan, GanLoss::minimax).resolve());
}

TEST_CASE("resolve validates ranges and cross-checks shapes") {
    auto broken = [](auto mutate) {
        TrainConfig cfg = tiny_train_cfg();
        mutate(cfg);
        CHECK_THROWS_AS(cfg.resolve(), ConfigError);
    };
    broken([](TrainConfig& c) { c.epochs = 0; });
    broken([](TrainConfig& c) { c.steps = 0; });
    broken([](TrainConfig& c) { c.batch_size = 0; });
    broken([](TrainConfig& c) { c.n_critic = 0; });
    broken([](TrainConfig& c) { c.clip = -0.5; });
    broken([](TrainConfig& c) { c.rmsprop_alpha = 1.0; });
    broken([](TrainConfig& c) { c.rmsprop_eps = 0.0; });
    broken([](TrainConfig& c) { c.disc.height = 16; });          // shape disagreement
    broken([](TrainConfig& c) { c.gen.height = 10; });           // not a multiple of 4
    broken([](TrainConfig& c) { c.gen.lif.tau = 0.5; });

    TrainConfig keep = tiny_train_cfg();
    keep.lr_g = 3e-3;
    keep.lr_d = 7e-4;
    keep.resolve();
    CHECK(keep.lr_g == 3e-3);  // explicit rates survive resolve
    CHECK(keep.lr_d == 7e-4);
}

TEST_CASE("train config json round-trip preserves every field") {
    TrainConfig cfg = tiny_train_cfg();
    cfg.variant = Variant::sgad;
    cfg.n_critic = 3;
    cfg.clip = 0.01;
    cfg.cosine = false;
    cfg.checkpoint_every = 7;
    cfg.sample_every = 2;
    cfg.gen.d_k = 16;
    cfg.gen.lif.tau = 3.0;
    cfg.disc.readout = ReadoutMode::mean;
    cfg.disc.leaky_slope = 0.3;
    cfg.resolve();

    TrainConfig back = train_config_from_json(train_config_to_json(cfg));
    CHECK(back.variant == cfg.variant);
    CHECK(back.loss == cfg.loss);
    CHECK(back.epochs == cfg.epochs);
    CHECK(back.steps == cfg.steps);
    CHECK(back.batch_size == cfg.batch_size);
    CHECK(back.n_critic == cfg.n_critic);
    CHECK(back.lr_g == cfg.lr_g);
    CHECK(back.lr_d == cfg.lr_d);
    CHECK(back.rmsprop_alpha == cfg.rmsprop_alpha);
    CHECK(back.rmsprop_eps == cfg.rmsprop_eps);
    CHECK(back.clip == cfg.clip);
    CHECK(back.seed == cfg.seed);
    CHECK(back.cosine == cfg.cosine);
    CHECK(back.record_walltime == cfg.record_walltime);
    CHECK(back.checkpoint_every == cfg.checkpoint_every);
    CHECK(back.sample_every == cfg.sample_every);
    CHECK(back.gen.latent_dim == cfg.gen.latent_dim);
    CHECK(back.gen.hidden0 == cfg.gen.hidden0);
    CHECK(back.gen.hidden1 == cfg.gen.hidden1);
    CHECK(back.gen.d_k == cfg.gen.d_k);
    CHECK(back.gen.attention_decode == cfg.gen.attention_decode);
    CHECK(back.gen.lif.tau == cfg.gen.lif.tau);
    CHECK(back.gen.lif.v_th == cfg.gen.lif.v_th);
    CHECK(back.disc.c1 == cfg.disc.c1);
    CHECK(back.disc.c2 == cfg.disc.c2);
    CHECK(back.disc.c3 == cfg.disc.c3);
    CHECK(back.disc.readout == ReadoutMode::mean);
    CHECK(back.disc.leaky_slope == cfg.disc.leaky_slope);
    CHECK(back.disc.neuron == cfg.disc.neuron);
}

TEST_CASE("checkpoint container round-trips tensors and metadata bit-exactly") {
    TempDir dir("ckpt");
    Rng rng(11);
    Checkpoint out;
    out.tensors["a.w"] = Tensor<float>::uniform({3, 4}, rng, -2.0f, 2.0f);
    out.tensors["a.b"] = Tensor<float>::uniform({4}, rng, -2.0f, 2.0f);
    out.meta["kind"] = "test";
    out.meta["note"] = 42;
    const std::string path = dir.file("t.ckpt");
    save_checkpoint(path, out);

    Checkpoint in = load_checkpoint(path);
    CHECK(in.meta.at("kind") == "test");
    CHECK(in.meta.at("note") == 42);
    REQUIRE(in.tensors.size() == 2);
    for (const auto& [name, t] : out.tensors) {
        REQUIRE(in.tensors.count(name) == 1);
        const Tensor<float>& r = in.tensors.at(name);
        REQUIRE(r.shape() == t.shape());
        for (int64_t i = 0; i < t.size(); ++i) CHECK(r[i] == t[i]);
    }
}

TEST_CASE("checkpoint loader rejects damaged containers") {
    TempDir dir("ckpt_bad");
    Checkpoint out;
    out.tensors["p"] = Tensor<float>::full({2, 2}, 1.5f);
    const std::string path = dir.file("ok.ckpt");
    save_checkpoint(path, out);
    const std::string good = slurp(path);

    auto write_variant = [&](const std::string& name, std::string bytes) {
        const std::string p = dir.file(name);
        std::ofstream f(p, std::ios::binary | std::ios::trunc);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        f.close();
        return p;
    };

    SUBCASE("missing file") {
        CHECK_THROWS_WITH_AS(load_checkpoint(dir.file("absent.ckpt")), doctest::Contains("cannot open"),
                             CheckpointError);
    }
    SUBCASE("bad magic") {
        std::string bytes = good;
        bytes[0] = 'X';
        CHECK_THROWS_WITH_AS(load_checkpoint(write_variant("magic.ckpt", bytes)), doctest::Contains("magic"),
                             CheckpointError);
    }
    SUBCASE("unsupported version") {
        std::string bytes = good;
        bytes[8] = 9;  // little-endian u16 version at offset 8
        CHECK_THROWS_WITH_AS(load_checkpoint(write_variant("ver.ckpt", bytes)), doctest::Contains("version"),
                             CheckpointError);
    }
    SUBCASE("truncated header") {
        CHECK_THROWS_WITH_AS(load_checkpoint(write_variant("trunc.ckpt", good.substr(0, 10))),
                             doctest::Contains("truncated"), CheckpointError);
    }
    SUBCASE("truncated payload") {
        CHECK_THROWS_WITH_AS(load_checkpoint(write_variant("pay.ckpt", good.substr(0, good.size() - 4))),
                             doctest::Contains("truncated payload"), CheckpointError);
    }
    SUBCASE("malformed header json") {
        std::string bytes = good;
        const size_t brace = bytes.find('{');
        REQUIRE(brace != std::string::npos);
        bytes[brace] = '?';
        CHECK_THROWS_AS(load_checkpoint(write_variant("json.ckpt", bytes)), CheckpointError);
    }
}

TEST_CASE("parameter load reports missing names and shape clashes") {
    Checkpoint ckpt;
    ckpt.tensors["layer.w"] = Tensor<float>::full({2, 2}, 1.0f);

    Parameter<float> present("layer.w", Tensor<float>({2, 2}));
    Parameter<float> absent("layer.misc", Tensor<float>({2}));
    CHECK_NOTHROW(load_params(ckpt, {&present}));
    CHECK(present.value[0] == 1.0f);
    CHECK_THROWS_WITH_AS(load_params(ckpt, {&present, &absent}), doctest::Contains("layer.misc"), CheckpointError);

    Parameter<float> misshaped("layer.w", Tensor<float>({4}));
    CHECK_THROWS_WITH_AS(load_params(ckpt, {&misshaped}), doctest::Contains("does not match"), CheckpointError);
}

TEST_CASE("one epoch on a synthetic dataset emits one telemetry row") {
    TempDir dir("smoke");
    TrainConfig cfg = tiny_train_cfg();
    Trainer trainer(cfg);
    TrainSinks sinks;
    sinks.telemetry_csv = dir.file("telemetry.csv");
    sinks.checkpoint_path = dir.file("checkpoint.ckpt");
    TrainResult res = trainer.run(tiny_dataset(), sinks);

    CHECK(res.epochs_run == 1);
    REQUIRE(res.telemetry.rows() == 1);
    CHECK(res.telemetry.epoch[0] == 0.0);
    CHECK(std::isfinite(res.telemetry.loss_d[0]));
    CHECK(std::isfinite(res.telemetry.loss_g[0]));
    CHECK(res.telemetry.grad_norm_g[0] >= 0.0);
    CHECK(res.telemetry.grad_norm_d[0] >= 0.0);
    CHECK(res.telemetry.lr[0] == trainer.config().lr_g);
    CHECK(res.telemetry.wall_seconds[0] == 0.0);  // record_walltime off
    CHECK(trainer.epochs_done() == 1);

    const std::string csv = slurp(sinks.telemetry_csv);
    CHECK(csv.rfind("epoch,loss_d,loss_g,grad_norm_g,grad_norm_d,lr,wall_seconds\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
    CHECK(fs::exists(sinks.checkpoint_path));
}

TEST_CASE("telemetry lr column follows the cosine schedule") {
    TrainConfig cfg = tiny_train_cfg();
    cfg.epochs = 4;
    Trainer trainer(cfg);
    const double lr0 = trainer.config().lr_g;  // resolved objective default
    TrainResult res = trainer.run(tiny_dataset(32));
    REQUIRE(res.telemetry.rows() == 4);
    CHECK(res.telemetry.lr[0] == lr0);
    CHECK(res.telemetry.lr[1] == lr0);
    CHECK(res.telemetry.lr[2] == lr0);  // cosine start
    CHECK(res.telemetry.lr[3] == doctest::Approx(lr0 / 2.0).epsilon(1e-12));
}

TEST_CASE("identical config and seed reproduce telemetry byte for byte") {
    TempDir dir("det");
    std::string first;
    for (int round = 0; round < 2; ++round) {
        TrainConfig cfg = tiny_train_cfg();
        cfg.epochs = 2;
        Trainer trainer(cfg);
        TrainSinks sinks;
        sinks.telemetry_csv = dir.file("telemetry" + std::to_string(round) + ".csv");
        trainer.run(tiny_dataset(), sinks);
        const std::string csv = slurp(sinks.telemetry_csv);
        if (round == 0)
            first = csv;
        else
            CHECK(csv == first);
    }
}

TEST_CASE("resumed training matches an uninterrupted run exactly") {
    TempDir dir("resume");
    const Tensor<float> data = tiny_dataset();

    // Uninterrupted: 3 epochs straight through.
    TrainConfig cfg = tiny_train_cfg();
    cfg.epochs = 3;
    TrainSinks full_sinks;
    full_sinks.telemetry_csv = dir.file("full.csv");
    full_sinks.checkpoint_path = dir.file("full.ckpt");
    Trainer(cfg).run(data, full_sinks);

    // Interrupted: 2 epochs, checkpoint, fresh process-alike resume to 3.
    TrainConfig part1 = tiny_train_cfg();
    part1.epochs = 2;
    TrainSinks part_sinks;
    part_sinks.telemetry_csv = dir.file("part.csv");
    part_sinks.checkpoint_path = dir.file("part.ckpt");
    Trainer(part1).run(data, part_sinks);

    TrainConfig part2 = tiny_train_cfg();
    part2.epochs = 3;
    Trainer resumed(part2);
    resumed.resume_from(part_sinks.checkpoint_path);
    CHECK(resumed.epochs_done() == 2);
    resumed.run(data, part_sinks);

    CHECK(slurp(part_sinks.telemetry_csv) == slurp(full_sinks.telemetry_csv));
    CHECK(slurp(part_sinks.checkpoint_path) == slurp(full_sinks.checkpoint_path));
}

TEST_CASE("resume rejects non-training checkpoints") {
    TempDir dir("resume_bad");
    Checkpoint other;
    other.meta["kind"] = "extractor";
    other.tensors["x"] = Tensor<float>({1});
    save_checkpoint(dir.file("other.ckpt"), other);
    Trainer trainer(tiny_train_cfg());
    CHECK_THROWS_AS(trainer.resume_from(dir.file("other.ckpt")), CheckpointError);
}

TEST_CASE("a poisoned parameter aborts the run with a divergence error") {
    // A NaN planted in the generator's output convolution reaches the fake
    // images; the hybrid discriminator's analog units carry it through to the
    // logits. (A spiking discriminator would sanitize it: NaN comparisons
    // read as "below threshold", so Heaviside squelches the poison.)
    TrainConfig cfg = tiny_train_cfg();
    cfg.variant = Variant::hybrid;
    Trainer trainer(cfg);
    for (Parameter<float>* p : trainer.generator().params())
        if (p->name == "g.up2.w") p->value[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(trainer.run(tiny_dataset()), DivergenceError);
}

TEST_CASE("the trainer validates dataset shape against its config") {
    Trainer trainer(tiny_train_cfg());
    Rng rng(1);
    CHECK_THROWS_AS(trainer.run(Tensor<float>::uniform({16, 8, 8}, rng, -1.0f, 1.0f)), ShapeError);
    CHECK_THROWS_AS(trainer.run(Tensor<float>::uniform({16, 1, 12, 8}, rng, -1.0f, 1.0f)), ConfigError);
}

TEST_CASE("weight clipping bounds every discriminator parameter") {
    TrainConfig cfg = tiny_train_cfg();
    cfg.clip = 0.02;
    Trainer trainer(cfg);
    trainer.run(tiny_dataset());
    for (const Parameter<float>* p : trainer.discriminator().params())
        for (int64_t i = 0; i < p->value.size(); ++i) {
            CHECK(p->value[i] <= 0.02f);
            CHECK(p->value[i] >= -0.02f);
        }
}

TEST_CASE("saved gans reload with identical parameters and config") {
    TempDir dir("loadgan");
    TrainConfig cfg = tiny_train_cfg();
    cfg.variant = Variant::sgad;
    cfg.gen.d_k = 8;
    Trainer trainer(cfg);
    TrainSinks sinks;
    sinks.checkpoint_path = dir.file("gan.ckpt");
    trainer.run(tiny_dataset(), sinks);

    LoadedGan loaded = load_gan(sinks.checkpoint_path);
    CHECK(loaded.cfg.variant == Variant::sgad);
    CHECK(loaded.cfg.gen.d_k == 8);
    CHECK(loaded.meta.at("epochs_done") == 1);

    auto got = loaded.g->params();
    auto want = trainer.generator().params();
    REQUIRE(got.size() == want.size());
    for (size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i]->name == want[i]->name);
        for (int64_t k = 0; k < got[i]->value.size(); ++k) CHECK(got[i]->value[k] == want[i]->value[k]);
    }

    // Same latents, same generator state: identical samples.
    Tensor<float> a = trainer.sample_images(4, 21);
    Tensor<float> b = generate_images(*loaded.g, 4, 21);
    REQUIRE(a.shape() == b.shape());
    for (int64_t k = 0; k < a.size(); ++k) CHECK(a[k] == b[k]);
}

TEST_CASE("latent sampling validates counts and stays deterministic") {
    CHECK_THROWS_AS(sample_latents(0, 4, 1), ConfigError);
    Tensor<float> a = sample_latents(6, 4, 9);
    Tensor<float> b = sample_latents(6, 4, 9);
    CHECK(a.shape() == Shape{6, 4});
    for (int64_t k = 0; k < a.size(); ++k) CHECK(a[k] == b[k]);
    Tensor<float> c = sample_latents(6, 4, 10);
    bool any_diff = false;
    for (int64_t k = 0; k < c.size(); ++k) any_diff = any_diff || c[k] != a[k];
    CHECK(any_diff);
}

TEST_CASE("periodic checkpoints and sample grids are written on schedule") {
    TempDir dir("periodic");
    TrainConfig cfg = tiny_train_cfg();
    cfg.epochs = 2;
    cfg.sample_every = 1;
    cfg.checkpoint_every = 1;
    fs::create_directories(dir.file("samples"));
    Trainer trainer(cfg);
    TrainSinks sinks;
    sinks.checkpoint_path = dir.file("gan.ckpt");
    sinks.sample_dir = dir.file("samples");
    trainer.run(tiny_dataset(), sinks);
    CHECK(fs::exists(dir.file("samples") + "/samples_epoch0001.ppm"));
    CHECK(fs::exists(dir.file("samples") + "/samples_epoch0002.ppm"));
    CHECK(fs::exists(sinks.checkpoint_path));
}
