#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "core/layers.hpp"
#include "core/tape.hpp"

namespace dmir {

/// Marks a position with no event in a split sequence.
inline constexpr int EMPTY_SLOT = -1;

/// A history split by feedback sign: position i holds the item in exactly one
/// of the two tracks and EMPTY_SLOT in the other. Original order preserved.
struct SplitSequence {
    std::vector<int> positive;
    std::vector<int> negative;
};

/// Keeps the last `memory_size` (item, feedback) events and routes each item
/// to the track matching its feedback.
SplitSequence split_sequence(const std::vector<std::pair<int, int>>& history,
                             int memory_size);

struct PolicyState {
    Tensor o_plus, o_minus, o;  // o = o_plus - o_minus
};

/// One replayed step. States are stored as split histories so the encoder can
/// run inside the training graph.
struct Transition {
    SplitSequence state;
    int action = 0;
    double reward = 0.0;  // in [0, 1]
    SplitSequence next_state;
    bool done = false;
};

/// Fixed-capacity ring buffer with uniform sampling without replacement.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

    void push(Transition t);
    std::vector<Transition> sample(std::size_t batch, Rng& rng) const;
    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    void clear();

private:
    std::size_t capacity_;
    std::size_t next_ = 0;
    std::vector<Transition> data_;
};

struct PolicyConfig {
    int dim = 64;
    int n_items = 0;
    int memory_size = 20;
    /// Contrastive: shared GRU over the positive and negative tracks,
    /// o = o+ - o-. Full-sequence: one GRU pass over all events in order.
    bool contrastive = true;
    std::uint64_t seed = 0;
};

/// Exponential-Q DQN policy over GRU-encoded interaction histories.
class Policy {
public:
    explicit Policy(const PolicyConfig& cfg);

    struct StateNodes {
        Tape::NodeId o_plus, o_minus, o;
    };
    StateNodes encode_state_node(Tape& t, const SplitSequence& split);
    PolicyState encode_state(const SplitSequence& split);

    /// Q(o, a) = exp(a.o), exponent clamped at 700; `clamped` reports it.
    double q_value(const Tensor& o, int item, bool* clamped = nullptr) const;
    double q_logit(const Tensor& o, int item) const;  // a.o

    /// Epsilon-greedy over `candidates`; greedy ties break to lowest item id.
    int select_action(const Tensor& o, const std::vector<int>& candidates,
                      double epsilon, Rng& rng) const;

    /// Mean squared TD error. Targets come from `target` (no gradient);
    /// `double_dqn` picks the argmax with this net, evaluates with `target`.
    Tape::NodeId td_loss_node(Tape& t, const std::vector<Transition>& batch,
                              Policy& target, double gamma, bool double_dqn);
    double td_loss(const std::vector<Transition>& batch, Policy& target, double gamma,
                   bool double_dqn);

    /// Copies all weights from `src` (target-network sync).
    void sync_from(Policy& src);

    std::vector<Parameter*> params();
    const PolicyConfig& config() const { return cfg_; }

    void save(const std::string& path) const;
    static Policy load(const std::string& path);

private:
    Tape::NodeId run_gru_node(Tape& t, const std::vector<int>& slots);
    Tensor run_gru(const std::vector<int>& slots);

    PolicyConfig cfg_;
    Parameter item_emb_;  // (n_items, d): actions and GRU inputs share rows
    Parameter null_emb_;  // (d) embedding for EMPTY_SLOT
    GruCell gru_;
};

/// Numeric self-test of the debiasing identity: returns
/// lhs = -log sigmoid(a.o+ - a.o-) and rhs = -log(e^{a.o+}/(e^{a.o+}+e^{a.o-})),
/// computed along genuinely different floating-point paths.
std::pair<double, double> contrastive_identity_check(const Tensor& a,
                                                     const Tensor& o_plus,
                                                     const Tensor& o_minus);

/// Linear decay from eps_start to 0.05 over the first 80% of episodes.
double epsilon_at(int episode, int total_episodes, double eps_start);

}  // namespace dmir
