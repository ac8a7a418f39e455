#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "core/layers.hpp"
#include "core/optim.hpp"
#include "core/tape.hpp"
#include "data/dataset.hpp"

namespace dmir {

struct WorldModelConfig {
    int dim = 64;
    int n_users = 0;
    int n_items = 0;
    double droprate = 0.3;
    double sigma_floor = 1e-4;
    int n_samples = 8;  // Monte-Carlo samples for the debiased estimate
    std::uint64_t seed = 0;
};

/// One observed interaction with its per-bucket global context: the item,
/// the binary feedback, the user's neighbor list and popularity features.
struct WmObs {
    int item = 0;
    int feedback = 0;
    std::vector<int> neighbors;
    std::array<double, 3> pop = {0.0, 0.0, 0.0};  // z[item], mean(z), norm entropy
};

/// Popularity featurization: item share, bucket mean, normalized entropy.
std::array<double, 3> pop_features(const std::vector<double>& z, int item);

/// Builds the observation for record index `idx` of `user`.
WmObs make_obs(const LoggedDataset& ds, int user, std::size_t idx);

/// Debiased causal world model: recursive user-state network, Gaussian
/// context encoder with reparameterized sampling, sigmoid feedback head and
/// the ELBO objective over successive-timestamp pairs.
class WorldModel {
public:
    explicit WorldModel(const WorldModelConfig& cfg);

    struct PosteriorNodes {
        Tape::NodeId mu, sigma, sample;
    };

    // Graph builders. `train` enables dropout (driven by `rng`).
    Tape::NodeId state_update_node(Tape& t, Tape::NodeId prev_state, const WmObs& obs,
                                   bool train, Rng& rng);
    PosteriorNodes context_encode_node(Tape& t, const WmObs& prev_obs,
                                       Tape::NodeId prev_state, double delta, bool train,
                                       Rng& rng);
    Tape::NodeId feedback_logit_node(Tape& t, const WmObs& obs, Tape::NodeId state,
                                     Tape::NodeId context_or_zero, bool train, Rng& rng);

    // Forward-only conveniences (eval mode, deterministic).
    Tensor user_state(const Tensor& prev, const WmObs& obs);
    /// States after each observation; states[i] is s^u after obs[0..i].
    std::vector<Tensor> fold_states(const std::vector<WmObs>& history);
    double predict_feedback(const WmObs& obs, const Tensor& state, const Tensor& context);

    struct ElboSample {
        WmObs prev, cur;
        Tensor prev_state;  // s^u at t-1, treated as observed input
    };
    /// Negative ELBO averaged over the batch. One gaussian_kl node per sample.
    Tape::NodeId elbo_loss_node(Tape& t, const std::vector<ElboSample>& batch, bool train,
                                Rng& rng);
    double elbo_loss(const std::vector<ElboSample>& batch);  // eval mode, delta = 0

    /// Monte-Carlo estimate of the intervention probability for recommending
    /// `item` after `history`. n_samples == 1 uses the posterior mean.
    double debiased_feedback(const std::vector<WmObs>& history, int item,
                             const std::array<double, 3>& pop, int n_samples, Rng& rng);
    /// Same estimate given an already-folded state; `last_obs` may be null
    /// when there is no history (the context then falls back to the prior).
    double debiased_feedback_given(const Tensor& prev_state, const WmObs* last_obs,
                                   int item, const std::array<double, 3>& pop,
                                   int n_samples, Rng& rng);

    std::vector<Parameter*> params();
    const WorldModelConfig& config() const { return cfg_; }
    Tensor zero_state() const { return Tensor::zeros({std::size_t(cfg_.dim)}); }

    void save(const std::string& path) const;
    static WorldModel load(const std::string& path);

private:
    Tape::NodeId neighbor_summary_node(Tape& t, const std::vector<int>& neighbors,
                                       SelfAttention& attn, FeedForward& ffn, bool train,
                                       Rng& rng);

    WorldModelConfig cfg_;

    Parameter item_emb_;       // (n_items, d), shared by f_s / f_c / f_y
    Parameter user_emb_;       // (n_users, d) neighbor embeddings
    Parameter null_neighbor_;  // (d) token for users with no neighbors

    // f_s
    SelfAttention attn_s_;
    FeedForward ffn_s_;
    Linear pop_proj_s_;
    GruCell gru_s_;
    Linear out_s_;
    LayerNorm ln_s_;
    // f_c
    SelfAttention attn_c_;
    FeedForward ffn_c_;
    Linear pop_proj_c_;
    Linear trunk_c_;
    Linear mu_head_;
    Linear sigma_head_;
    // f_y
    Linear pop_proj_y_;
    Linear hidden_y_;
    Linear logit_y_;
};

}  // namespace dmir
