#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tape.hpp"

namespace dmir {

/// Uniform init in +-1/sqrt(fan_in).
Tensor init_uniform(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng);

struct Linear {
    Parameter W;  // (out, in)
    Parameter b;  // (out)

    Linear() = default;
    Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng);

    Tape::NodeId apply(Tape& t, Tape::NodeId x);
    std::vector<Parameter*> params();
};

/// Standard GRU cell: update gate z, reset gate r, candidate h~.
struct GruCell {
    Parameter Wz, Uz, bz;
    Parameter Wr, Ur, br;
    Parameter Wh, Uh, bh;

    GruCell() = default;
    GruCell(const std::string& name, std::size_t d_in, std::size_t d_h, Rng& rng);

    Tape::NodeId apply(Tape& t, Tape::NodeId x, Tape::NodeId h);
    std::vector<Parameter*> params();
};

/// Single-head scaled dot-product self-attention over an (L,d) sequence.
struct SelfAttention {
    Parameter Wq, Wk, Wv;  // each (d, d)

    SelfAttention() = default;
    SelfAttention(const std::string& name, std::size_t d, Rng& rng);

    Tape::NodeId apply(Tape& t, Tape::NodeId seq);
    std::vector<Parameter*> params();
};

/// Two-layer feed-forward block with ReLU.
struct FeedForward {
    Linear l1, l2;

    FeedForward() = default;
    FeedForward(const std::string& name, std::size_t d, std::size_t hidden, Rng& rng);

    Tape::NodeId apply(Tape& t, Tape::NodeId x);
    /// Row-wise application to an (L,d) matrix.
    Tape::NodeId apply_rows(Tape& t, Tape::NodeId m);
    std::vector<Parameter*> params();
};

struct LayerNorm {
    Parameter gain, bias;

    LayerNorm() = default;
    LayerNorm(const std::string& name, std::size_t d);

    Tape::NodeId apply(Tape& t, Tape::NodeId x);
    std::vector<Parameter*> params();
};

}  // namespace dmir
