#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace dmir {

/// Named trainable tensor with an accumulated gradient of the same shape.
struct Parameter {
    std::string id;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string name, Tensor v)
        : id(std::move(name)), value(std::move(v)), grad(Tensor::zeros(value.shape)) {}

    void zero_grad() { grad.fill(0.0); }
};

/// Reverse-mode autodiff tape. Operations append nodes in evaluation order;
/// backward() walks the record in reverse, so every node is visited exactly
/// once and the traversal order is the reverse topological order.
class Tape {
public:
    using NodeId = int;

    struct Node {
        Tensor value;
        Tensor grad;
        std::string op;
        std::vector<NodeId> parents;
        std::function<void(Tape&, NodeId)> backward;
        Parameter* param = nullptr;
    };

    NodeId leaf(Tensor v, std::string op = "const");
    NodeId param(Parameter& p);

    // Elementwise / arithmetic
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    NodeId neg(NodeId a) { return scale(a, -1.0); }

    // Linear algebra
    NodeId matmul(NodeId a, NodeId b);     // (m,k)x(k,n) -> (m,n)
    NodeId matmul_nt(NodeId a, NodeId b);  // (m,k)x(n,k)^T -> (m,n)
    NodeId matvec(NodeId a, NodeId x);     // (m,k)x(k) -> (m)
    NodeId dot(NodeId x, NodeId y);        // (k)x(k) -> scalar

    // Shape plumbing
    NodeId concat(const std::vector<NodeId>& parts);  // 1-D concat
    NodeId as_row(NodeId x);                          // (d) -> (1,d)
    NodeId gather_rows(NodeId table, std::vector<std::size_t> idx);  // (M,d) -> (L,d)
    NodeId row(NodeId table, std::size_t i);                         // (M,d) -> (d)
    NodeId mean_rows(NodeId m);                                      // (L,d) -> (d)
    NodeId add_rowwise(NodeId m, NodeId v);                          // (L,d) + (d)

    // Nonlinearities
    NodeId sigmoid(NodeId a);
    NodeId tanh_(NodeId a);
    NodeId relu(NodeId a);
    NodeId softplus(NodeId a);
    NodeId exp_(NodeId a, double clamp = 700.0);
    NodeId softmax_rows(NodeId m);  // row-wise softmax of (L,K)

    // Reductions
    NodeId sum(NodeId a);
    NodeId mean_all(NodeId a);

    // Fused domain ops
    NodeId layer_norm(NodeId x, NodeId gain, NodeId bias, double eps = 1e-5);
    /// 0.5 * sum(mu^2 + sigma^2 - log sigma^2 - 1); KL(N(mu,sigma) || N(0,1)).
    NodeId gaussian_kl(NodeId mu, NodeId sigma);
    /// Binary cross-entropy from a scalar logit; numerically stable.
    NodeId bce_logits(NodeId logit, double label);
    /// Inverted dropout; identity when rate == 0 or train == false.
    NodeId dropout(NodeId x, double rate, Rng& rng, bool train);

    void backward(NodeId loss);

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    const Tensor& grad(NodeId id) const { return nodes_[id].grad; }
    std::size_t node_count() const { return nodes_.size(); }
    const Node& node(NodeId id) const { return nodes_[id]; }
    /// Number of nodes whose op name matches exactly. Used by graph audits.
    std::size_t count_op(std::string_view op) const;

private:
    NodeId push(Tensor value, std::string op, std::vector<NodeId> parents,
                std::function<void(Tape&, NodeId)> back);
    Tensor& grad_mut(NodeId id) { return nodes_[id].grad; }
    std::vector<Node> nodes_;

    friend struct TapeAccess;
};

}  // namespace dmir
