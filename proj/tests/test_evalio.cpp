#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mpde/evalio.hpp"

using namespace mpde;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("metapde_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

TrainConfig tiny_cfg() {
    TrainConfig cfg;
    cfg.model.method = Method::ours;
    cfg.model.width = 8;
    cfg.model.layers_b = 2;
    cfg.model.layers_u = 2;
    cfg.epochs = 6;
    cfg.problems_per_epoch = 2;
    cfg.batch_size = 2;
    cfg.n_f = 8;
    cfg.n_g = {6, 3, 3};
    cfg.seed = 77;
    return cfg;
}

std::vector<PdeProblem> some_problems(int n, std::uint64_t seed) {
    std::vector<PdeProblem> out;
    Rng master(seed);
    for (int i = 0; i < n; ++i) out.push_back(gen_problem(master.child(i).state()));
    return out;
}

bool params_equal(const ModelParams& a, const ModelParams& b) {
    if (a.tensors.size() != b.tensors.size()) return false;
    for (const auto& [name, t] : a.tensors)
        if (!b.has(name) || b.at(name).data != t.data) return false;
    return true;
}

}  // namespace

TEST(Evaluate, AggregatesRecomputableFromEntries) {
    TrainConfig cfg = tiny_cfg();
    ModelParams params = init_params(cfg.model, 3);
    auto problems = some_problems(8, 42);
    EvalReport rep = evaluate(params, cfg.model, problems, 64, {10, 5, 5}, 9);
    ASSERT_EQ(rep.n_problems, 8);
    EXPECT_EQ(rep.n_ok + rep.n_failed, 8);
    double mean = 0;
    for (const auto& e : rep.entries)
        if (!e.failed) mean += e.err.total;
    mean /= rep.n_ok;
    EXPECT_DOUBLE_EQ(rep.mean.total, mean);
    double var = 0;
    for (const auto& e : rep.entries)
        if (!e.failed) var += (e.err.total - mean) * (e.err.total - mean);
    var /= (rep.n_ok - 1);
    EXPECT_DOUBLE_EQ(rep.sem.total, std::sqrt(var / rep.n_ok));
}

TEST(Evaluate, DeterministicAndSideEffectFree) {
    TrainConfig cfg = tiny_cfg();
    ModelParams params = init_params(cfg.model, 5);
    ModelParams before = params;
    auto problems = some_problems(6, 43);
    EvalReport a = evaluate(params, cfg.model, problems, 32, {6, 3, 3}, 11, 1);
    EvalReport b = evaluate(params, cfg.model, problems, 32, {6, 3, 3}, 11, 2);
    EXPECT_TRUE(params_equal(params, before));
    ASSERT_EQ(a.entries.size(), b.entries.size());
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        EXPECT_EQ(a.entries[i].err.total, b.entries[i].err.total);
        EXPECT_EQ(a.entries[i].err.ge, b.entries[i].err.ge);
    }
}

TEST(Evaluate, SingleProblemReportsZeroSem) {
    TrainConfig cfg = tiny_cfg();
    ModelParams params = init_params(cfg.model, 7);
    auto problems = some_problems(1, 44);
    EvalReport rep = evaluate(params, cfg.model, problems, 16, {6, 3, 3}, 13);
    EXPECT_TRUE(rep.single);
    EXPECT_EQ(rep.sem.total, 0.0);
    EXPECT_EQ(rep.mean.total, rep.entries[0].err.total);
}

TEST(Grid, CornersAndRowCount) {
    TrainConfig cfg = tiny_cfg();
    cfg.model.method = Method::mt;
    ModelParams params = init_params(cfg.model, 9);
    DomainBox box;
    std::vector<Point2> pts;
    auto values = grid_values(params, cfg.model, {}, box, 2, 2, &pts);
    ASSERT_EQ(pts.size(), 4u);
    EXPECT_EQ(pts[0].t, 0.0);
    EXPECT_EQ(pts[0].x, -1.0);
    EXPECT_EQ(pts[3].t, 1.0);
    EXPECT_EQ(pts[3].x, 1.0);
    for (std::size_t i = 0; i < 4; ++i)
        EXPECT_NEAR(values[i], predict_value(params, cfg.model, {}, pts[i]), 1e-12);

    std::ostringstream csv;
    write_grid_csv(csv, pts, values);
    int lines = 0;
    std::string s = csv.str();
    for (char c : s) lines += c == '\n';
    EXPECT_EQ(lines, 5);  // header + 4 rows

    // 100x100 grid covers the closure with exact endpoints
    auto big = grid_values(params, cfg.model, {}, box, 100, 100, &pts);
    EXPECT_EQ(big.size(), 10000u);
    EXPECT_EQ(pts.front().t, 0.0);
    EXPECT_EQ(pts.back().t, 1.0);
    EXPECT_EQ(pts.back().x, 1.0);
}

TEST(Grid, PgmHeatmapFormat) {
    std::vector<double> values = {0.0, 0.5, 1.0, 0.25};
    std::ostringstream os;
    write_grid_pgm(os, values, 2, 2);
    std::string s = os.str();
    EXPECT_EQ(s.substr(0, 3), "P5\n");
    EXPECT_NE(s.find("2 2\n255\n"), std::string::npos);
    const std::string pixels = s.substr(s.find("255\n") + 4);
    ASSERT_EQ(pixels.size(), 4u);
    EXPECT_EQ(static_cast<unsigned char>(pixels[0]), 0);
    EXPECT_EQ(static_cast<unsigned char>(pixels[2]), 255);

    std::ostringstream flat;
    std::vector<double> constant = {0.3, 0.3, 0.3, 0.3};
    write_grid_pgm(flat, constant, 2, 2);
    const std::string fp = flat.str().substr(flat.str().find("255\n") + 4);
    for (char c : fp) EXPECT_EQ(c, 0);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    TempDir tmp;
    TrainConfig cfg = tiny_cfg();
    TrainState st = init_train_state(cfg);
    TrainLog log;
    meta_train(cfg, st, log);
    const std::string path = tmp.file("a.ckpt");
    save_checkpoint(path, cfg.model, st, cfg.seed, config_digest(cfg));

    Checkpoint ck = load_checkpoint(path);
    EXPECT_EQ(ck.kind, "meta");
    EXPECT_EQ(ck.seed, cfg.seed);
    EXPECT_EQ(ck.config_digest, config_digest(cfg));
    EXPECT_EQ(ck.state.epoch, st.epoch);
    EXPECT_EQ(ck.state.problems_seen, st.problems_seen);
    EXPECT_EQ(ck.state.opt.step, st.opt.step);
    EXPECT_TRUE(params_equal(ck.state.params, st.params));
    for (const auto& [name, t] : st.opt.m.tensors) {
        EXPECT_EQ(ck.state.opt.m.at(name).data, t.data);
        EXPECT_EQ(ck.state.opt.v.at(name).data, st.opt.v.at(name).data);
    }
}

TEST(Checkpoint, ResumeMatchesUninterruptedRun) {
    TempDir tmp;
    TrainConfig cfg = tiny_cfg();

    TrainState straight = init_train_state(cfg);
    TrainLog full_log;
    meta_train(cfg, straight, full_log);

    TrainConfig half = cfg;
    half.epochs = 3;
    TrainState st = init_train_state(half);
    TrainLog log_a;
    meta_train(half, st, log_a);
    const std::string path = tmp.file("resume.ckpt");
    save_checkpoint(path, half.model, st, half.seed, config_digest(half));

    Checkpoint ck = load_checkpoint(path);
    TrainLog log_b;
    meta_train(cfg, ck.state, log_b);  // continues to cfg.epochs

    EXPECT_TRUE(params_equal(ck.state.params, straight.params));
    ASSERT_EQ(log_a.size() + log_b.size(), full_log.size());
    for (std::size_t i = 0; i < log_b.size(); ++i) {
        const TrainRecord& r = full_log[log_a.size() + i];
        EXPECT_EQ(log_b[i].epoch, r.epoch);
        EXPECT_EQ(log_b[i].loss_total, r.loss_total);
        EXPECT_EQ(log_b[i].loss_ge, r.loss_ge);
        EXPECT_EQ(log_b[i].loss_bc, r.loss_bc);
        EXPECT_EQ(log_b[i].lr, r.lr);
    }
}

TEST(Checkpoint, DistinctErrorKinds) {
    TempDir tmp;
    TrainConfig cfg = tiny_cfg();
    TrainState st = init_train_state(cfg);
    const std::string path = tmp.file("x.ckpt");
    save_checkpoint(path, cfg.model, st, cfg.seed, config_digest(cfg));

    {  // version mismatch
        std::ifstream in(path, std::ios::binary);
        std::stringstream buf;
        buf << in.rdbuf();
        std::string data = buf.str();
        data.replace(data.find("v1"), 2, "v9");
        std::ofstream out(tmp.file("bad_version.ckpt"), std::ios::binary);
        out << data;
        out.close();
        EXPECT_THROW(load_checkpoint(tmp.file("bad_version.ckpt")), checkpoint_version_error);
    }
    {  // truncated blob
        std::ifstream in(path, std::ios::binary);
        std::stringstream buf;
        buf << in.rdbuf();
        std::string data = buf.str();
        std::ofstream out(tmp.file("short.ckpt"), std::ios::binary);
        out << data.substr(0, data.size() - 64);
        out.close();
        EXPECT_THROW(load_checkpoint(tmp.file("short.ckpt")), checkpoint_truncated_error);
    }
    {  // shape corruption
        std::ifstream in(path, std::ios::binary);
        std::stringstream buf;
        buf << in.rdbuf();
        std::string data = buf.str();
        const std::string needle = "b1.0.w 2 8 3";
        auto at = data.find(needle);
        ASSERT_NE(at, std::string::npos);
        data.replace(at, needle.size(), "b1.0.w 2 8 2");
        std::ofstream out(tmp.file("bad_shape.ckpt"), std::ios::binary);
        out << data;
        out.close();
        EXPECT_THROW(load_checkpoint(tmp.file("bad_shape.ckpt")), checkpoint_error);
    }
    EXPECT_THROW(load_checkpoint(tmp.file("missing.ckpt")), io_error);
}

TEST(TrainLogIo, DeterministicColumns) {
    TrainLog log;
    log.push_back({0, 0, 0.5, 0.25, 0.25, 1e-3, 12.3});
    log.push_back({0, 1, 0.25, 0.125, 0.125, 1e-3, 11.9});
    std::ostringstream a, b;
    write_train_log(a, log);
    log[0].wall_ms = 99.9;  // timings must not affect the deterministic log
    write_train_log(b, log);
    EXPECT_EQ(a.str(), b.str());
    EXPECT_NE(a.str().find("# epoch iter loss_total loss_ge loss_bc lr"), std::string::npos);
}
