#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

// End-to-end checks of the command-line binary: every case shells out to the
// real executable and inspects exit codes, streams, and produced files.

namespace {

namespace fs = std::filesystem;

struct RunResult {
    int code = -1;
    std::string output;  // stdout and stderr interleaved
};

RunResult run(const std::string& args) {
    const std::string cmd = std::string(SPIKEGAN_BIN) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    RunResult r;
    char buf[4096];
    size_t got;
    while ((got = fread(buf, 1, sizeof(buf), pipe)) > 0) r.output.append(buf, got);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

size_t line_count(const std::string& text) {
    size_t n = 0;
    for (char c : text) n += c == '\n';
    return n;
}

// One tiny checkpoint per needed variant, trained once and reused. Bars are
// 16x16 by default, so two epochs with two-channel blocks finish in seconds.
struct Fixture {
    fs::path dir;
    std::string swgan_ckpt, sgad_ckpt;

    Fixture() : dir(fs::temp_directory_path() / "spikegan_cli_fixture") {
        fs::remove_all(dir);
        fs::create_directories(dir);
        const std::string tiny =
            " --dataset bars --synth-n 64 --data-seed 3 --epochs 2 --t 2 --batch-size 16 --seed 5"
            " --set model.gen_hidden0=2 --set model.gen_hidden1=2 --set model.d_k=4"
            " --set model.disc_c1=2 --set model.disc_c2=2 --set model.disc_c3=2 --set model.v_th=0.25";
        RunResult a = run("train --variant swgan" + tiny + " --out " + (dir / "swgan").string());
        REQUIRE(a.code == 0);
        RunResult b = run("train --variant sgad" + tiny + " --out " + (dir / "sgad").string());
        REQUIRE(b.code == 0);
        swgan_ckpt = (dir / "swgan" / "checkpoint.ckpt").string();
        sgad_ckpt = (dir / "sgad" / "checkpoint.ckpt").string();
    }
    ~Fixture() { fs::remove_all(dir); }

    std::string scratch(const std::string& name) const { return (dir / name).string(); }
};

Fixture& fx() {
    static Fixture f;
    return f;
}

}  // namespace

TEST_CASE("help text lists the subcommands and bad invocations exit nonzero") {
    RunResult help = run("--help");
    CHECK(help.code == 0);
    for (const char* sub : {"train", "generate", "fid", "inspect-scores", "gradreport", "train-extractor"})
        CHECK(help.output.find(sub) != std::string::npos);

    CHECK(run("").code == 1);                  // a subcommand is required
    CHECK(run("frobnicate").code == 1);        // unknown subcommand
    CHECK(run("train --no-such-flag").code == 1);
}

TEST_CASE("training writes telemetry a checkpoint and a reparseable config echo") {
    const std::string out = fx().scratch("smoke_dir");
    RunResult r = run(
        "train --variant swgan --dataset bars --synth-n 64 --epochs 2 --t 2 --batch-size 16 --seed 5"
        " --set model.gen_hidden0=2 --set model.gen_hidden1=2"
        " --set model.disc_c1=2 --set model.disc_c2=2 --set model.disc_c3=2 --set model.v_th=0.25"
        " --out " + out);
    CHECK(r.code == 0);
    CHECK(r.output.find("training swgan") != std::string::npos);
    CHECK(r.output.find("done: 2 epochs") != std::string::npos);

    const std::string telemetry = slurp(out + "/telemetry.csv");
    CHECK(line_count(telemetry) == 3);  // header plus one row per epoch
    CHECK(telemetry.rfind("epoch,loss_d,loss_g,grad_norm_g,grad_norm_d,lr,wall_seconds\n", 0) == 0);

    CHECK(slurp(out + "/checkpoint.ckpt").rfind("SGADCKPT", 0) == 0);

    const std::string echo = slurp(out + "/config_resolved.cfg");
    CHECK(echo.find("[train]") != std::string::npos);
    CHECK(echo.find("variant = swgan") != std::string::npos);
    CHECK(echo.find("[data]") != std::string::npos);
}

TEST_CASE("config files apply before point overrides") {
    const std::string cfg_path = fx().scratch("run.cfg");
    std::ofstream(cfg_path) << "[train]\n"
                               "epochs = 5\n"
                               "steps = 2\n"
                               "batch_size = 16\n"
                               "variant = swgan\n"
                               "[model]\n"
                               "gen_hidden0 = 2\n"
                               "gen_hidden1 = 2\n"
                               "disc_c1 = 2\ndisc_c2 = 2\ndisc_c3 = 2\nv_th = 0.25\n"
                               "[data]\n"
                               "dataset = bars\n"
                               "synth_n = 32\n";
    const std::string out = fx().scratch("cfg_dir");
    RunResult r = run("train --config " + cfg_path + " --set train.epochs=1 --out " + out);
    CHECK(r.code == 0);
    CHECK(line_count(slurp(out + "/telemetry.csv")) == 2);  // the override won

    CHECK(run("train --config " + fx().scratch("missing.cfg")).code == 2);

    std::ofstream(fx().scratch("broken.cfg")) << "[train]\nepochs\n";
    RunResult bad = run("train --config " + fx().scratch("broken.cfg"));
    CHECK(bad.code == 1);

    RunResult unknown = run("train --set bogus.key=1");
    CHECK(unknown.code == 1);
    CHECK(unknown.output.find("unknown config key") != std::string::npos);
}

TEST_CASE("exit codes separate config data divergence and metric-gate failures") {
    RunResult config_err = run("train --variant sgan --loss em --dataset bars --synth-n 32");
    CHECK(config_err.code == 1);
    CHECK(config_err.output.find("error") != std::string::npos);

    RunResult data_err = run("train --dataset idx --images " + fx().scratch("no_such.idx"));
    CHECK(data_err.code == 2);
    CHECK(data_err.output.find("error (data)") != std::string::npos);

    RunResult diverged = run(
        "train --variant hybrid --dataset bars --synth-n 64 --epochs 2 --t 2 --batch-size 16 --seed 5"
        " --lr-g 1e8 --lr-d 1e8 --set model.gen_hidden0=2 --set model.gen_hidden1=2"
        " --set model.disc_c1=2 --set model.disc_c2=2 --set model.disc_c3=2 --set model.v_th=0.25"
        " --out " + fx().scratch("diverge_dir"));
    CHECK(diverged.code == 3);
    CHECK(diverged.output.find("error (divergence)") != std::string::npos);

    RunResult gate_err = run("fid --checkpoint " + fx().swgan_ckpt + " --extractor " +
                             fx().scratch("no_extractor.ckpt") + " --dataset bars --synth-n 32");
    CHECK(gate_err.code == 4);
    CHECK(gate_err.output.find("error (metric gate)") != std::string::npos);
}

TEST_CASE("generation is reproducible and emits a valid ppm grid") {
    const std::string p1 = fx().scratch("grid1.ppm");
    const std::string p2 = fx().scratch("grid2.ppm");
    const std::string args = " --n 4 --rows 2 --cols 2 --seed 9 --checkpoint " + fx().swgan_ckpt;
    CHECK(run("generate" + args + " --out " + p1).code == 0);
    CHECK(run("generate" + args + " --out " + p2).code == 0);

    const std::string bytes = slurp(p1);
    CHECK(bytes == slurp(p2));                      // same checkpoint, seed, layout
    CHECK(bytes.rfind("P6\n32 32\n255\n", 0) == 0); // 2x2 grid of 16x16 images
    CHECK(bytes.size() == 13 + 3 * 32 * 32);        // header plus RGB payload

    CHECK(run("generate --n 0 --checkpoint " + fx().swgan_ckpt + " --out " + p1).code == 1);
    CHECK(run("generate --checkpoint " + fx().scratch("nope.ckpt") + " --out " + p1).code == 2);
}

TEST_CASE("score inspection requires an attention-decoding checkpoint") {
    RunResult r = run("inspect-scores --checkpoint " + fx().swgan_ckpt + " --out-csv " +
                      fx().scratch("s.csv") + " --out-strip " + fx().scratch("s.ppm"));
    CHECK(r.code == 1);
    CHECK(r.output.find("no attention decoder") != std::string::npos);
}

TEST_CASE("score inspection dumps per-step alphas and a frame strip") {
    const std::string csv_path = fx().scratch("scores.csv");
    const std::string strip_path = fx().scratch("strip.ppm");
    RunResult forced = run("inspect-scores --checkpoint " + fx().sgad_ckpt + " --n 2 --seed 3" +
                           " --force-equal-logits --out-csv " + csv_path + " --out-strip " + strip_path);
    CHECK(forced.code == 0);

    std::ifstream csv(csv_path);
    std::string header;
    std::getline(csv, header);
    CHECK(header == "sample_id,t,alpha_x,alpha_v");
    size_t rows = 0;
    std::string line;
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        ++rows;
        std::istringstream is(line);
        std::string sample, t, ax, av;
        std::getline(is, sample, ',');
        std::getline(is, t, ',');
        std::getline(is, ax, ',');
        std::getline(is, av, ',');
        CHECK(std::stod(ax) == 0.5);  // forced-equal bypass
        CHECK(std::stod(av) == 0.5);
    }
    CHECK(rows == 4);  // 2 samples x 2 steps

    const std::string strip = slurp(strip_path);
    CHECK(strip.rfind("P6\n32 32\n255\n", 0) == 0);  // T*w wide, n*h tall

    RunResult scored = run("inspect-scores --checkpoint " + fx().sgad_ckpt + " --n 2 --seed 3" +
                           " --out-csv " + csv_path + " --out-strip " + strip_path);
    CHECK(scored.code == 0);
    std::ifstream csv2(csv_path);
    std::getline(csv2, header);
    while (std::getline(csv2, line)) {
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string sample, t, ax, av;
        std::getline(is, sample, ',');
        std::getline(is, t, ',');
        std::getline(is, ax, ',');
        std::getline(is, av, ',');
        const double x = std::stod(ax), v = std::stod(av);
        CHECK(x > 0.0);
        CHECK(x < 1.0);
        CHECK(x + v == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("gradreport compares telemetry files and rejects misaligned runs") {
    const std::string header = "epoch,loss_d,loss_g,grad_norm_g,grad_norm_d,lr,wall_seconds\n";
    const std::string a_path = fx().scratch("a.csv");
    const std::string b_path = fx().scratch("b.csv");
    {
        std::ofstream a(a_path);
        a << header;
        for (int e = 0; e < 4; ++e) a << e << ",0,0," << (e + 1) << ",1,2e-4,0\n";
        std::ofstream b(b_path);
        b << header;
        for (int e = 0; e < 4; ++e) b << e << ",0,0," << 2 * (e + 1) << ",1,2e-4,0\n";
    }
    RunResult cmp = run("gradreport " + a_path + " " + b_path);
    CHECK(cmp.code == 0);
    CHECK(cmp.output.find("generator gradient-norm means") != std::string::npos);
    CHECK(cmp.output.find("verdict") != std::string::npos);
    CHECK(cmp.output.find(">") != std::string::npos);

    const std::string short_path = fx().scratch("short.csv");
    std::ofstream(short_path) << header << "0,0,0,1,1,2e-4,0\n";
    RunResult misaligned = run("gradreport " + a_path + " " + short_path);
    CHECK(misaligned.code == 1);
    CHECK(misaligned.output.find("misaligned") != std::string::npos);

    CHECK(run("gradreport " + fx().scratch("absent.csv")).code == 2);
}

TEST_CASE("the fid pipeline trains an extractor scores a checkpoint and caches real stats") {
    const std::string fx_path = fx().scratch("extractor.ckpt");
    RunResult trained = run(
        "train-extractor --dataset bars --synth-n 256 --data-seed 4 --classes 32 --feat-dim 16"
        " --batch-size 32 --seed 9 --out " + fx_path);
    REQUIRE(trained.code == 0);
    CHECK(trained.output.find("extractor trained: accuracy=") != std::string::npos);
    CHECK(trained.output.find("fingerprint=") != std::string::npos);

    const std::string cache = fx().scratch("real.stats");
    const std::string fid_args = "fid --checkpoint " + fx().swgan_ckpt + " --extractor " + fx_path +
                                 " --dataset bars --synth-n 256 --data-seed 4 --n 64 --stats-cache " + cache;
    RunResult first = run(fid_args);
    CHECK(first.code == 0);
    CHECK(first.output.find("proxy_fid=") != std::string::npos);
    CHECK(first.output.find("cached") == std::string::npos);
    CHECK(fs::exists(cache));

    RunResult second = run(fid_args);
    CHECK(second.code == 0);
    CHECK(second.output.find("(cached real stats)") != std::string::npos);
    // Identical inputs must reproduce the identical score line.
    CHECK(first.output.substr(first.output.find("proxy_fid="), 20) ==
          second.output.substr(second.output.find("proxy_fid="), 20));

    RunResult mismatched = run("fid --checkpoint " + fx().swgan_ckpt + " --extractor " + fx_path +
                               " --dataset bars --synth-n 64 --set data.height=8 --set data.width=8");
    CHECK(mismatched.code == 1);
    CHECK(mismatched.output.find("does not match the extractor") != std::string::npos);

    CHECK(run("fid --checkpoint " + fx().swgan_ckpt + " --dataset bars --synth-n 32").code == 1);
}

TEST_CASE("training resumes from an interrupted run via the cli") {
    const std::string tiny =
        " --dataset bars --synth-n 64 --data-seed 3 --t 2 --batch-size 16 --seed 5"
        " --set model.gen_hidden0=2 --set model.gen_hidden1=2"
        " --set model.disc_c1=2 --set model.disc_c2=2 --set model.disc_c3=2 --set model.v_th=0.25";
    const std::string full_dir = fx().scratch("full_dir");
    const std::string part_dir = fx().scratch("part_dir");
    REQUIRE(run("train --variant swgan --epochs 3" + tiny + " --out " + full_dir).code == 0);
    REQUIRE(run("train --variant swgan --epochs 2" + tiny + " --out " + part_dir).code == 0);
    RunResult resumed = run("train --variant swgan --epochs 3" + tiny + " --out " + part_dir +
                            " --resume " + part_dir + "/checkpoint.ckpt");
    CHECK(resumed.code == 0);
    CHECK(slurp(part_dir + "/checkpoint.ckpt") == slurp(full_dir + "/checkpoint.ckpt"));
}
