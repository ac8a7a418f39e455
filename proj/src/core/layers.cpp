#include "layers.hpp"

#include <stdexcept>

namespace dmir {

Tensor init_uniform(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
    double bound = 1.0 / std::sqrt(double(fan_in ? fan_in : 1));
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng)
    : W(name + ".W", init_uniform({out, in}, in, rng)),
      b(name + ".b", Tensor::zeros({out})) {}

Tape::NodeId Linear::apply(Tape& t, Tape::NodeId x) {
    return t.add(t.matvec(t.param(W), x), t.param(b));
}

std::vector<Parameter*> Linear::params() { return {&W, &b}; }

GruCell::GruCell(const std::string& name, std::size_t d_in, std::size_t d_h, Rng& rng)
    : Wz(name + ".Wz", init_uniform({d_h, d_in}, d_in, rng)),
      Uz(name + ".Uz", init_uniform({d_h, d_h}, d_h, rng)),
      bz(name + ".bz", Tensor::zeros({d_h})),
      Wr(name + ".Wr", init_uniform({d_h, d_in}, d_in, rng)),
      Ur(name + ".Ur", init_uniform({d_h, d_h}, d_h, rng)),
      br(name + ".br", Tensor::zeros({d_h})),
      Wh(name + ".Wh", init_uniform({d_h, d_in}, d_in, rng)),
      Uh(name + ".Uh", init_uniform({d_h, d_h}, d_h, rng)),
      bh(name + ".bh", Tensor::zeros({d_h})) {}

Tape::NodeId GruCell::apply(Tape& t, Tape::NodeId x, Tape::NodeId h) {
    if (t.value(x).size() != Wz.value.cols() || t.value(h).size() != Uz.value.cols())
        throw std::invalid_argument("GruCell: input/hidden dimension mismatch");
    auto z = t.sigmoid(t.add(t.add(t.matvec(t.param(Wz), x), t.matvec(t.param(Uz), h)),
                             t.param(bz)));
    auto r = t.sigmoid(t.add(t.add(t.matvec(t.param(Wr), x), t.matvec(t.param(Ur), h)),
                             t.param(br)));
    auto cand = t.tanh_(t.add(
        t.add(t.matvec(t.param(Wh), x), t.matvec(t.param(Uh), t.mul(r, h))), t.param(bh)));
    // h' = (1-z).h + z.cand
    auto keep = t.sub(h, t.mul(z, h));
    return t.add(keep, t.mul(z, cand));
}

std::vector<Parameter*> GruCell::params() {
    return {&Wz, &Uz, &bz, &Wr, &Ur, &br, &Wh, &Uh, &bh};
}

SelfAttention::SelfAttention(const std::string& name, std::size_t d, Rng& rng)
    : Wq(name + ".Wq", init_uniform({d, d}, d, rng)),
      Wk(name + ".Wk", init_uniform({d, d}, d, rng)),
      Wv(name + ".Wv", init_uniform({d, d}, d, rng)) {}

Tape::NodeId SelfAttention::apply(Tape& t, Tape::NodeId seq) {
    const Tensor& X = t.value(seq);
    if (X.shape.size() != 2 || X.rows() < 1)
        throw std::invalid_argument("SelfAttention: expects non-empty (L,d) sequence");
    std::size_t d = X.cols();
    auto Q = t.matmul_nt(seq, t.param(Wq));
    auto K = t.matmul_nt(seq, t.param(Wk));
    auto V = t.matmul_nt(seq, t.param(Wv));
    auto scores = t.scale(t.matmul_nt(Q, K), 1.0 / std::sqrt(double(d)));
    auto weights = t.softmax_rows(scores);
    return t.matmul(weights, V);
}

std::vector<Parameter*> SelfAttention::params() { return {&Wq, &Wk, &Wv}; }

FeedForward::FeedForward(const std::string& name, std::size_t d, std::size_t hidden, Rng& rng)
    : l1(name + ".l1", d, hidden, rng), l2(name + ".l2", hidden, d, rng) {}

Tape::NodeId FeedForward::apply(Tape& t, Tape::NodeId x) {
    return l2.apply(t, t.relu(l1.apply(t, x)));
}

Tape::NodeId FeedForward::apply_rows(Tape& t, Tape::NodeId m) {
    auto h = t.relu(t.add_rowwise(t.matmul_nt(m, t.param(l1.W)), t.param(l1.b)));
    return t.add_rowwise(t.matmul_nt(h, t.param(l2.W)), t.param(l2.b));
}

std::vector<Parameter*> FeedForward::params() { return {&l1.W, &l1.b, &l2.W, &l2.b}; }

LayerNorm::LayerNorm(const std::string& name, std::size_t d)
    : gain(name + ".gain", Tensor::full({d}, 1.0)), bias(name + ".bias", Tensor::zeros({d})) {}

Tape::NodeId LayerNorm::apply(Tape& t, Tape::NodeId x) {
    return t.layer_norm(x, t.param(gain), t.param(bias));
}

std::vector<Parameter*> LayerNorm::params() { return {&gain, &bias}; }

}  // namespace dmir
