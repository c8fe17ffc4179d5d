#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "s2m/config.hpp"

using namespace s2m;

namespace {

std::string write_temp_config(const char* name, const std::string& body) {
  const std::string path = (std::filesystem::temp_directory_path() / name).string();
  std::ofstream out(path);
  out << body;
  return path;
}

}  // namespace

TEST_CASE("defaults validate and resolve without a file") {
  PipelineConfig cfg;
  cfg.validate();
  const PipelineConfig resolved = resolve_config("", 0, false);
  CHECK(resolved.seed == cfg.seed);
  CHECK(resolved.image_size == 64);
  CHECK(resolved.num_views == 12);
  CHECK(resolved.decoder_layers == 5);
}

TEST_CASE("a full config file overrides every touched field") {
  const std::string path = write_temp_config("s2m_cfg_full.ini", R"(
# comment lines and blanks are ignored
[pipeline]
seed = 99
checkpoint_every = 50

[sketch25d]
image_size = 32
num_views = 14
view_index = 3
lambda_depth = 2.0
lambda_adv = 0
separate_decoders = true
dropout_rate = 0.25
steps = 10
lr = 0.0005

[implicit]
decoder_layers = 6
resolutions = 8,16
encoder_grid_n = 8
steps_per_resolution = 20
points_per_step = 256
w_surf = 2.5
invert_labels = true

[extract]
mesh_resolution = 16
threshold = 0.4
smooth_iterations = 2

[eval]
samples = 500
)");
  const PipelineConfig cfg = load_pipeline_config(path);
  CHECK(cfg.seed == 99);
  CHECK(cfg.checkpoint_every == 50);
  CHECK(cfg.image_size == 32);
  CHECK(cfg.num_views == 14);
  CHECK(cfg.view_index == 3);
  CHECK(cfg.lambda_depth == 2.0);
  CHECK(cfg.lambda_adv == 0.0);
  CHECK(cfg.separate_decoders == true);
  CHECK(cfg.dropout_rate == 0.25);
  CHECK(cfg.steps_25d == 10);
  CHECK(cfg.lr_25d == 0.0005);
  CHECK(cfg.decoder_layers == 6);
  CHECK(cfg.resolutions == std::vector<int>{8, 16});
  CHECK(cfg.encoder_grid_n == 8);
  CHECK(cfg.steps_per_resolution == 20);
  CHECK(cfg.points_per_step == 256);
  CHECK(cfg.w_surf == 2.5);
  CHECK(cfg.invert_labels == true);
  CHECK(cfg.mesh_resolution == 16);
  CHECK(cfg.threshold == 0.4);
  CHECK(cfg.smooth_iterations == 2);
  CHECK(cfg.eval_samples == 500);
  std::filesystem::remove(path);
}

TEST_CASE("unknown sections and keys are rejected with the offending line") {
  const std::string p1 = write_temp_config("s2m_cfg_badsec.ini", "[pipeline]\nseed = 1\n[nope]\nx = 2\n");
  CHECK_THROWS_WITH_AS(load_pipeline_config(p1), doctest::Contains(":3"), std::runtime_error);
  std::filesystem::remove(p1);

  const std::string p2 =
      write_temp_config("s2m_cfg_badkey.ini", "[sketch25d]\nimage_size = 64\nimg_size = 64\n");
  CHECK_THROWS_WITH_AS(load_pipeline_config(p2), doctest::Contains(":3"), std::runtime_error);
  std::filesystem::remove(p2);

  const std::string p3 = write_temp_config("s2m_cfg_nosec.ini", "seed = 1\n");
  CHECK_THROWS_WITH_AS(load_pipeline_config(p3), doctest::Contains(":1"), std::runtime_error);
  std::filesystem::remove(p3);

  const std::string p4 = write_temp_config("s2m_cfg_badval.ini", "[pipeline]\nseed = banana\n");
  CHECK_THROWS_WITH_AS(load_pipeline_config(p4), doctest::Contains(":2"), std::runtime_error);
  std::filesystem::remove(p4);
}

TEST_CASE("semantic validation rejects out-of-range values") {
  auto loaded = [](const std::string& body) {
    const std::string p = write_temp_config("s2m_cfg_sem.ini", body);
    PipelineConfig cfg;
    try {
      cfg = load_pipeline_config(p);
    } catch (...) {
      std::filesystem::remove(p);
      throw;
    }
    std::filesystem::remove(p);
    return cfg;
  };
  CHECK_THROWS(loaded("[sketch25d]\nimage_size = 48\n"));
  CHECK_THROWS(loaded("[sketch25d]\nnum_views = 13\n"));
  CHECK_THROWS(loaded("[sketch25d]\nview_index = 12\n"));
  CHECK_THROWS(loaded("[implicit]\ndecoder_layers = 7\n"));
  CHECK_THROWS(loaded("[implicit]\nresolutions = 32,16\n"));  // must ascend
  CHECK_THROWS(loaded("[implicit]\nencoder_grid_n = 10\n"));
  CHECK_THROWS(loaded("[extract]\nthreshold = 1.5\n"));
  CHECK_NOTHROW(loaded("[sketch25d]\nview_index = 11\n"));
}

TEST_CASE("missing config files fail loudly") {
  CHECK_THROWS(load_pipeline_config("/nonexistent/s2m.ini"));
}

TEST_CASE("seed override wins over the file value") {
  const std::string path = write_temp_config("s2m_cfg_seed.ini", "[pipeline]\nseed = 7\n");
  CHECK(resolve_config(path, 0, false).seed == 7);
  CHECK(resolve_config(path, 123, true).seed == 123);
  std::filesystem::remove(path);
}

TEST_CASE("structural hash tracks shape-determining fields only") {
  PipelineConfig a;
  const uint64_t base = a.structural_hash();
  CHECK(base == PipelineConfig{}.structural_hash());

  PipelineConfig b = a;
  b.image_size = 128;
  CHECK(b.structural_hash() != base);
  b = a;
  b.num_views = 14;
  CHECK(b.structural_hash() != base);
  b = a;
  b.separate_decoders = true;
  CHECK(b.structural_hash() != base);
  b = a;
  b.decoder_layers = 6;
  CHECK(b.structural_hash() != base);
  b = a;
  b.encoder_grid_n = 32;
  CHECK(b.structural_hash() != base);

  // training hyperparameters do not change parameter shapes
  b = a;
  b.steps_25d = 9999;
  b.lr_25d = 0.5;
  b.lambda_adv = 0.0;
  b.seed = 77;
  b.eval_samples = 5;
  CHECK(b.structural_hash() == base);
}
