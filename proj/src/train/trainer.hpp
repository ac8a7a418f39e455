#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/optim.hpp"
#include "data/dataset.hpp"
#include "policy/policy.hpp"
#include "wm/world_model.hpp"

namespace dmir {

struct TrainConfig {
    double lr = 0.001;
    int batch = 1024;
    int buffer = 50000;
    int update_size = 10000;
    double gamma = 0.95;
    int target_update = 1000;
    double droprate = 0.3;
    int dim = 64;
    int memory_size = 20;
    double eps_start = 0.3;
    int k_c = 2000;  // world-model steps per phase
    int k_q = 1000;  // policy steps per phase
    int outer_loops = 10;
    int horizon = 32;
    int n_samples = 8;            // Monte-Carlo draws for the dense reward
    bool binary_reward = false;   // train on sampled 0/1 instead of probability
    // Pick the bootstrap action with the online net and score it with the
    // target net; plain max-Q overestimates badly under the exponential head.
    bool double_dqn = true;
    int state_refresh = 500;      // recompute cached user states every N steps
    std::uint64_t seed = 0;

    void validate() const;
    static TrainConfig from_json_file(const std::string& path);
    static TrainConfig from_json_text(const std::string& text);
    std::string to_json() const;
};

/// One (phase, step, loss) sample of a training curve.
struct CurvePoint {
    std::string phase;
    int step = 0;
    double value = 0.0;
};

struct RunManifest {
    std::string config_json;
    std::vector<std::string> phase_log;   // phase names in execution order
    std::vector<double> loop_rewards;     // mean episode reward per outer loop
    std::vector<CurvePoint> curves;
    std::string world_model_path;
    std::string policy_path;
    bool converged = false;
    double wall_seconds = 0.0;
};

/// What one simulation pass produces: replay transitions for the policy and
/// raw trajectories for world-model finetuning.
struct CollectResult {
    std::vector<Transition> transitions;
    std::vector<std::vector<WmObs>> trajectories;
    double mean_reward = 0.0;
};

/// Runs the training loop: pretrain the world model, then alternate
/// {collect simulated episodes, train the policy, finetune the world model}
/// until the reward plateaus or the loop budget runs out.
class Trainer {
public:
    Trainer(const LoggedDataset& dataset, const TrainConfig& cfg);

    /// k_c ELBO steps over consecutive-timestamp pairs from the logged data.
    /// Appends (phase, step, loss) to `curves`. Throws on non-finite loss.
    void pretrain_world_model(WorldModel& wm, int steps, std::vector<CurvePoint>& curves);

    /// Rolls one epsilon-greedy episode per user against the world model.
    /// Dense reward = debiased feedback probability; the sampled binary
    /// outcome drives the split sequence. Both are recorded.
    CollectResult collect_trajectories(WorldModel& wm, Policy& policy,
                                       const std::vector<int>& users, int horizon,
                                       double epsilon, Rng& rng);

    /// k_q TD steps; no-op (with a log line) while the buffer holds fewer
    /// than update_size transitions. Target net synced every target_update.
    void train_policy(Policy& policy, Policy& target, ReplayBuffer& buffer, int steps,
                      Rng& rng, std::vector<CurvePoint>& curves);

    /// k_c additional ELBO steps over simulated trajectories.
    void finetune_world_model(WorldModel& wm, const std::vector<std::vector<WmObs>>& sim,
                              int steps, std::vector<CurvePoint>& curves);

    /// Full Algorithm-1 run; writes manifest.json, curves.csv and the two
    /// checkpoints under out_dir.
    RunManifest run(const std::string& out_dir);

    /// ELBO samples over consecutive pairs of `history` with folded states.
    static std::vector<WorldModel::ElboSample> make_pairs(WorldModel& wm,
                                                          const std::vector<WmObs>& history);

    const LoggedDataset& dataset() const { return ds_; }

private:
    void elbo_steps(WorldModel& wm, const std::vector<std::vector<WmObs>>& histories,
                    const std::string& phase, int steps, std::vector<CurvePoint>& curves);

    const LoggedDataset& ds_;
    TrainConfig cfg_;
    AdamOptimizer wm_opt_;
    AdamOptimizer policy_opt_;
    Rng rng_;
};

void write_manifest(const RunManifest& m, const std::string& out_dir);

}  // namespace dmir
