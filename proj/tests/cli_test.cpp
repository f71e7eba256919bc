// SPDX-License-Identifier: Apache-2.0
//
// End-to-end tests of the occfield binary. The binary path arrives as argv[1].
#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "occfield/evalio.hpp"

namespace fs = std::filesystem;

namespace {

std::string g_binary;

struct RunResult {
    int exit_code = -1;
    std::string out;
};

RunResult run(const std::string& args) {
    static int counter = 0;
    fs::path out_file =
        fs::temp_directory_path() / ("occfield_cli_out_" + std::to_string(counter++));
    std::string cmd = g_binary + " " + args + " > " + out_file.string() + " 2>&1";
    int rc = std::system(cmd.c_str());
    RunResult res;
    res.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    std::ifstream is(out_file);
    std::stringstream ss;
    ss << is.rdbuf();
    res.out = ss.str();
    fs::remove(out_file);
    return res;
}

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("occfield_cli_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// tiny scene spec: fast to generate and train on
void write_tiny_spec(const fs::path& p, int frames = 3) {
    std::ofstream os(p);
    os << R"({
  "grid": {"dims": [8, 8, 8], "voxel_size": 1.0, "origin": [-4, -4, -4]},
  "classes": [{"name": "wall"}],
  "objects": [{"shape": "box", "class": 0, "center": [2.5, 0, 0], "size": [1, 8, 8]}],
  "trajectory": {"frames": )"
       << frames << R"(, "start": [-0.25, 0, 0], "step": [0.25, 0, 0]},
  "rig": [{"intrinsics": {"fx": 8, "fy": 8, "cx": 8, "cy": 8, "width": 16, "height": 16},
           "mount": {"rotation": [0, 0, 1, -1, 0, 0, 0, -1, 0], "translation": [0, 0, 0]}}]
})";
}

}  // namespace

TEST(Cli, NoArgsIsInputError) {
    EXPECT_EQ(run("").exit_code, 2);
    EXPECT_EQ(run("not-a-command").exit_code, 2);
}

TEST(Cli, ConfigSchemaDumpsDefaults) {
    RunResult r = run("config-schema");
    EXPECT_EQ(r.exit_code, 0);
    EXPECT_NE(r.out.find("\"raypool\""), std::string::npos);
    EXPECT_NE(r.out.find("\"rays_per_batch\""), std::string::npos);
    EXPECT_NE(r.out.find("\"lambda_var\""), std::string::npos);
}

TEST(Cli, GenSceneWritesAllArtifacts) {
    TempDir dir;
    RunResult r = run("gen-scene --out " + dir.str() + " --seed 1 --ppm");
    ASSERT_EQ(r.exit_code, 0) << r.out;
    // ablation profile: 7 frames x 6 cameras = 42 label pairs
    EXPECT_NE(r.out.find("\"label_pairs\":42"), std::string::npos) << r.out;
    EXPECT_TRUE(fs::exists(dir.path / "manifest.json"));
    for (int f = 0; f < 7; ++f) {
        char tag[8];
        std::snprintf(tag, sizeof(tag), "%03d", f);
        EXPECT_TRUE(fs::exists(dir.path / ("gt_frame_" + std::string(tag) + ".occ")));
        for (int c = 0; c < 6; ++c) {
            std::string stem =
                "frame_" + std::string(tag) + "_cam_" + std::to_string(c);
            EXPECT_TRUE(fs::exists(dir.path / (stem + "_sem.pgm")));
            EXPECT_TRUE(fs::exists(dir.path / (stem + "_depth.pgm")));
            EXPECT_TRUE(fs::exists(dir.path / (stem + "_sem.ppm")));
        }
    }
}

TEST(Cli, GenSceneDeterministic) {
    TempDir a, b;
    ASSERT_EQ(run("gen-scene --out " + a.str() + " --seed 3").exit_code, 0);
    ASSERT_EQ(run("gen-scene --out " + b.str() + " --seed 3").exit_code, 0);
    for (const char* name :
         {"gt_frame_003.occ", "frame_003_cam_0_sem.pgm",
          "frame_003_cam_0_depth.pgm", "manifest.json"}) {
        EXPECT_EQ(read_file(a.path / name), read_file(b.path / name)) << name;
    }
}

TEST(Cli, TrainExtractEvalPipeline) {
    TempDir data, out;
    write_tiny_spec(data.path / "spec.json");
    ASSERT_EQ(run("gen-scene --spec " + (data.path / "spec.json").string() +
                  " --out " + data.str())
                  .exit_code,
              0);
    RunResult tr = run(
        "train --data " + data.str() + " --out " + out.str() +
        " --set trainer.iterations=20 --set raypool.rays_per_batch=64"
        " --set raypool.m_aux=2 --set trainer.eval_every=10 --workers 2");
    ASSERT_EQ(tr.exit_code, 0) << tr.out;
    EXPECT_TRUE(fs::exists(out.path / "field.sdf"));
    EXPECT_TRUE(fs::exists(out.path / "metrics.jsonl"));
    EXPECT_TRUE(fs::exists(out.path / "effective_config.json"));
    // 20 metric lines, one per iteration
    std::ifstream metrics(out.path / "metrics.jsonl");
    int lines = 0;
    std::string line;
    while (std::getline(metrics, line))
        if (!line.empty()) ++lines;
    EXPECT_EQ(lines, 20);

    RunResult ex = run("extract-occ --field " + (out.path / "field.sdf").string() +
                       " --tau 0.2 --out " + (out.path / "pred.occ").string());
    ASSERT_EQ(ex.exit_code, 0) << ex.out;
    EXPECT_NE(ex.out.find("\"empty_voxels\""), std::string::npos);

    RunResult ev = run("eval --pred " + (out.path / "pred.occ").string() +
                       " --gt " + (data.path / "gt_frame_001.occ").string());
    ASSERT_EQ(ev.exit_code, 0) << ev.out;
    EXPECT_NE(ev.out.find("\"miou\""), std::string::npos);
}

TEST(Cli, TrainZeroIterationsWritesInitialField) {
    TempDir data, out;
    write_tiny_spec(data.path / "spec.json");
    ASSERT_EQ(run("gen-scene --spec " + (data.path / "spec.json").string() +
                  " --out " + data.str())
                  .exit_code,
              0);
    RunResult tr = run("train --data " + data.str() + " --out " + out.str() +
                       " --set trainer.iterations=0 --set raypool.m_aux=2");
    ASSERT_EQ(tr.exit_code, 0) << tr.out;
    auto field = occfield::io::with_input_file(
        (out.path / "field.sdf").string(),
        [](std::istream& is) { return occfield::io::read_sdf(is); });
    for (double v : field.density_params()) EXPECT_EQ(v, -5.0f);
}

TEST(Cli, TrainDeterministicAcrossWorkers) {
    TempDir data, out1, out2;
    write_tiny_spec(data.path / "spec.json");
    ASSERT_EQ(run("gen-scene --spec " + (data.path / "spec.json").string() +
                  " --out " + data.str())
                  .exit_code,
              0);
    std::string common = "train --data " + data.str() +
                         " --set trainer.iterations=10"
                         " --set raypool.rays_per_batch=64 --set raypool.m_aux=0";
    ASSERT_EQ(run(common + " --out " + out1.str() + " --workers 1").exit_code, 0);
    ASSERT_EQ(run(common + " --out " + out2.str() + " --workers 4").exit_code, 0);
    EXPECT_EQ(read_file(out1.path / "field.sdf"), read_file(out2.path / "field.sdf"));
}

TEST(Cli, ResumeContinuesFromCheckpoint) {
    TempDir data, full, halves;
    write_tiny_spec(data.path / "spec.json");
    ASSERT_EQ(run("gen-scene --spec " + (data.path / "spec.json").string() +
                  " --out " + data.str())
                  .exit_code,
              0);
    std::string base = "train --data " + data.str() +
                       " --set raypool.rays_per_batch=64 --set raypool.m_aux=0";
    ASSERT_EQ(run(base + " --out " + full.str() +
                  " --set trainer.iterations=16")
                  .exit_code,
              0);
    ASSERT_EQ(run(base + " --out " + halves.str() +
                  " --set trainer.iterations=8 --set trainer.checkpoint_every=8")
                  .exit_code,
              0);
    ASSERT_TRUE(fs::exists(halves.path / "checkpoint.ckpt"));
    ASSERT_EQ(run(base + " --out " + halves.str() +
                  " --set trainer.iterations=16 --resume " +
                  (halves.path / "checkpoint.ckpt").string())
                  .exit_code,
              0);
    EXPECT_EQ(read_file(full.path / "field.sdf"),
              read_file(halves.path / "field.sdf"));
}

TEST(Cli, RenderProducesImages) {
    TempDir data, out, render;
    write_tiny_spec(data.path / "spec.json");
    ASSERT_EQ(run("gen-scene --spec " + (data.path / "spec.json").string() +
                  " --out " + data.str())
                  .exit_code,
              0);
    ASSERT_EQ(run("train --data " + data.str() + " --out " + out.str() +
                  " --set trainer.iterations=5 --set raypool.rays_per_batch=32"
                  " --set raypool.m_aux=2")
                  .exit_code,
              0);
    RunResult r = run("render --field " + (out.path / "field.sdf").string() +
                      " --data " + data.str() + " --frame 1 --cam 0 --out " +
                      render.str());
    ASSERT_EQ(r.exit_code, 0) << r.out;
    EXPECT_TRUE(fs::exists(render.path / "render_frame_001_cam_0_sem.pgm"));
    EXPECT_TRUE(fs::exists(render.path / "render_frame_001_cam_0_depth.pgm"));
}

TEST(Cli, CheckGradPasses) {
    RunResult r = run("check-grad");
    EXPECT_EQ(r.exit_code, 0) << r.out;
    EXPECT_NE(r.out.find("\"pass\":true"), std::string::npos) << r.out;
}

TEST(Cli, InfoDescribesArtifacts) {
    TempDir data;
    write_tiny_spec(data.path / "spec.json");
    ASSERT_EQ(run("gen-scene --spec " + (data.path / "spec.json").string() +
                  " --out " + data.str())
                  .exit_code,
              0);
    RunResult r = run("info --file " + (data.path / "gt_frame_000.occ").string());
    EXPECT_EQ(r.exit_code, 0);
    EXPECT_NE(r.out.find("\"OCC1\""), std::string::npos);
}

TEST(Cli, ExitCodeContract) {
    TempDir dir;
    // 2: missing input file
    EXPECT_EQ(run("train --data /nonexistent --out " + dir.str()).exit_code, 2);
    // 4: malformed binary artifact
    std::ofstream(dir.path / "junk.occ") << "this is not an OCC1 file at all";
    EXPECT_EQ(run("info --file " + (dir.path / "junk.occ").string()).exit_code, 4);
    EXPECT_EQ(run("eval --pred " + (dir.path / "junk.occ").string() + " --gt " +
                  (dir.path / "junk.occ").string())
                  .exit_code,
              4);
    // 4: truncated artifact with a valid magic
    std::ofstream(dir.path / "trunc.occ", std::ios::binary) << "OCC1\x08";
    EXPECT_EQ(run("info --file " + (dir.path / "trunc.occ").string()).exit_code, 4);
    // 2: bad config override
    TempDir data;
    write_tiny_spec(data.path / "spec.json");
    ASSERT_EQ(run("gen-scene --spec " + (data.path / "spec.json").string() +
                  " --out " + data.str())
                  .exit_code,
              0);
    EXPECT_EQ(run("train --data " + data.str() + " --out " + dir.str() +
                  " --set trainer.bogus=1")
                  .exit_code,
              2);
}

int main(int argc, char** argv) {
    ::testing::InitGoogleTest(&argc, argv);
    if (argc < 2) {
        std::fprintf(stderr, "usage: cli_test <path-to-occfield-binary>\n");
        return 1;
    }
    g_binary = argv[1];
    return RUN_ALL_TESTS();
}
