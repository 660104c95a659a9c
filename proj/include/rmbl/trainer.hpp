#pragma once

#include <string>
#include <vector>

#include "rmbl/config.hpp"
#include "rmbl/data.hpp"

namespace rmbl::trainer {

// Proportional steering of a loss-weight factor toward a share band of the
// total loss: off band, k moves by target_mid/share capped at rate_cap per
// observation. k never drops to zero.
class ShareController {
 public:
  ShareController(double k_init, double share_lo, double share_hi, double rate_cap = 3.0,
                  double min_component = 0.0);
  double k() const { return k_; }
  double last_share() const { return last_share_; }
  // Components below min_component leave k alone: inflating a weight because
  // the raw term is still ~0 just distorts the objective.
  void observe(double component_value, double total_value);

 private:
  double k_, lo_, hi_, rate_cap_, min_component_;
  double last_share_ = 0.0;
};

// Stage entry points. Each writes its artifacts under out_dir:
// checkpoint.rmbl, traces.csv and summary.json.

struct CollectResult {
  int frames = 0;
  int episodes = 0;
  int completed_episodes = 0;
};
CollectResult collect(const Config& cfg, const std::string& out_dir);

struct VResult {
  double holdout_accuracy = 0.0;
  double final_k_kl = 0.0;
  std::vector<double> epoch_rec;  // mean reconstruction loss per epoch
  double kl_share_ok_fraction = 0.0;
};
VResult pretrain_v(const Config& cfg, const std::string& data_dir, const std::string& out_dir);

struct MResult {
  double phase_a_final = 0.0;   // smoothed total loss at the end of phase A
  double phase_b_final = 0.0;
  double share_ok_fraction = 0.0;  // post-warmup steps with all shares in band
};
MResult pretrain_m(const Config& cfg, const std::string& data_dir, const std::string& v_ckpt,
                   const std::string& out_dir);

struct IlResult {
  double holdout_loss = 0.0;
  std::vector<double> epoch_loss;
};
IlResult pretrain_il(const Config& cfg, const std::string& data_dir, const std::string& vm_ckpt,
                     const std::string& out_dir);

struct RlResult {
  double il_baseline_step_reward = 0.0;
  double min_reward_ema = 0.0;        // over the whole run, after the EMA warms up
  double min_reward_ema_early = 0.0;  // within the first 5000 env steps
  double final_reward_ema = 0.0;
  double final_rc_ema = 0.0;
  int episodes = 0;
  int env_steps = 0;
};
RlResult train_rl(const Config& cfg, const std::string& vmc_ckpt, const std::string& out_dir);

// Helpers shared with the CLI and tests.
void write_text_file(const std::string& path, const std::string& text);

}  // namespace rmbl::trainer
