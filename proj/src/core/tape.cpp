#include "tape.hpp"

#include <cmath>
#include <stdexcept>

namespace dmir {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    shape_str(a.shape) + " vs " + shape_str(b.shape));
}

double stable_softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid_scalar(double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

Tape::NodeId Tape::push(Tensor value, std::string op, std::vector<NodeId> parents,
                        std::function<void(Tape&, NodeId)> back) {
    Node n;
    n.grad = Tensor::zeros(value.shape);
    n.value = std::move(value);
    n.op = std::move(op);
    n.parents = std::move(parents);
    n.backward = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
}

Tape::NodeId Tape::leaf(Tensor v, std::string op) {
    return push(std::move(v), std::move(op), {}, nullptr);
}

Tape::NodeId Tape::param(Parameter& p) {
    NodeId id = push(p.value, "param:" + p.id, {}, [](Tape& t, NodeId me) {
        Node& n = t.nodes_[me];
        for (std::size_t i = 0; i < n.grad.size(); ++i) n.param->grad.data[i] += n.grad.data[i];
    });
    nodes_[id].param = &p;
    return id;
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
    check_same_shape(nodes_[a].value, nodes_[b].value, "add");
    Tensor out = nodes_[a].value;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += nodes_[b].value.data[i];
    return push(std::move(out), "add", {a, b}, [a, b](Tape& t, NodeId me) {
        const Tensor& g = t.nodes_[me].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            t.nodes_[a].grad.data[i] += g.data[i];
            t.nodes_[b].grad.data[i] += g.data[i];
        }
    });
}

Tape::NodeId Tape::sub(NodeId a, NodeId b) {
    check_same_shape(nodes_[a].value, nodes_[b].value, "sub");
    Tensor out = nodes_[a].value;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= nodes_[b].value.data[i];
    return push(std::move(out), "sub", {a, b}, [a, b](Tape& t, NodeId me) {
        const Tensor& g = t.nodes_[me].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            t.nodes_[a].grad.data[i] += g.data[i];
            t.nodes_[b].grad.data[i] -= g.data[i];
        }
    });
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
    check_same_shape(nodes_[a].value, nodes_[b].value, "mul");
    Tensor out = nodes_[a].value;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= nodes_[b].value.data[i];
    return push(std::move(out), "mul", {a, b}, [a, b](Tape& t, NodeId me) {
        const Tensor& g = t.nodes_[me].grad;
        const Tensor& va = t.nodes_[a].value;
        const Tensor& vb = t.nodes_[b].value;
        for (std::size_t i = 0; i < g.size(); ++i) {
            t.nodes_[a].grad.data[i] += g.data[i] * vb.data[i];
            t.nodes_[b].grad.data[i] += g.data[i] * va.data[i];
        }
    });
}

Tape::NodeId Tape::scale(NodeId a, double c) {
    Tensor out = nodes_[a].value;
    for (auto& v : out.data) v *= c;
    return push(std::move(out), "scale", {a}, [a, c](Tape& t, NodeId me) {
        const Tensor& g = t.nodes_[me].grad;
        for (std::size_t i = 0; i < g.size(); ++i) t.nodes_[a].grad.data[i] += c * g.data[i];
    });
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    if (A.shape.size() != 2 || B.shape.size() != 2 || A.cols() != B.rows())
        throw std::invalid_argument("matmul: incompatible shapes " + shape_str(A.shape) +
                                    " x " + shape_str(B.shape));
    std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            double av = A.at(i, p);
            for (std::size_t j = 0; j < n; ++j) out.at(i, j) += av * B.at(p, j);
        }
    return push(std::move(out), "matmul", {a, b}, [a, b, m, k, n](Tape& t, NodeId me) {
        const Tensor& g = t.nodes_[me].grad;
        const Tensor& A = t.nodes_[a].value;
        const Tensor& B = t.nodes_[b].value;
        Tensor& ga = t.nodes_[a].grad;
        Tensor& gb = t.nodes_[b].grad;
        // dA = g B^T, dB = A^T g
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double gv = g.at(i, j);
                for (std::size_t p = 0; p < k; ++p) {
                    ga.at(i, p) += gv * B.at(p, j);
                    gb.at(p, j) += A.at(i, p) * gv;
                }
            }
    });
}

Tape::NodeId Tape::matmul_nt(NodeId a, NodeId b) {
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    if (A.shape.size() != 2 || B.shape.size() != 2 || A.cols() != B.cols())
        throw std::invalid_argument("matmul_nt: incompatible shapes");
    std::size_t m = A.rows(), k = A.cols(), n = B.rows();
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0;
            for (std::size_t p = 0; p < k; ++p) s += A.at(i, p) * B.at(j, p);
            out.at(i, j) = s;
        }
    return push(std::move(out), "matmul_nt", {a, b}, [a, b, m, k, n](Tape& t, NodeId me) {
        const Tensor& g = t.nodes_[me].grad;
        const Tensor& A = t.nodes_[a].value;
        const Tensor& B = t.nodes_[b].value;
        Tensor& ga = t.nodes_[a].grad;
        Tensor& gb = t.nodes_[b].grad;
        // out = A B^T: dA = g B, dB = g^T A
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double gv = g.at(i, j);
                for (std::size_t p = 0; p < k; ++p) {
                    ga.at(i, p) += gv * B.at(j, p);
                    gb.at(j, p) += gv * A.at(i, p);
                }
            }
    });
}

Tape::NodeId Tape::matvec(NodeId a, NodeId x) {
    const Tensor& A = nodes_[a].value;
    const Tensor& X = nodes_[x].value;
    if (A.shape.size() != 2 || X.shape.size() != 1 || A.cols() != X.size())
        throw std::invalid_argument("matvec: incompatible shapes " + shape_str(A.shape) +
                                    " x " + shape_str(X.shape));
    std::size_t m = A.rows(), k = A.cols();
    Tensor out = Tensor::zeros({m});
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0;
        for (std::size_t p = 0; p < k; ++p) s += A.at(i, p) * X.data[p];
        out.data[i] = s;
    }
    return push(std::move(out), "matvec", {a, x}, [a, x, m, k](Tape& t, NodeId me) {
        const Tensor& g = t.nodes_[me].grad;
        const Tensor& A = t.nodes_[a].value;
        const Tensor& X = t.nodes_[x].value;
        for (std::size_t i = 0; i < m; ++i) {
            double gv = g.data[i];
            for (std::size_t p = 0; p < k; ++p) {
                t.nodes_[a].grad.at(i, p) += gv * X.data[p];
                t.nodes_[x].grad.data[p] += gv * A.at(i, p);
            }
        }
    });
}

Tape::NodeId Tape::dot(NodeId x, NodeId y) {
    check_same_shape(nodes_[x].value, nodes_[y].value, "dot");
    double s = 0;
    for (std::size_t i = 0; i < nodes_[x].value.size(); ++i)
        s += nodes_[x].value.data[i] * nodes_[y].value.data[i];
    return push(Tensor::scalar(s), "dot", {x, y}, [x, y](Tape& t, NodeId me) {
        double g = t.nodes_[me].grad.data[0];
        const Tensor& vx = t.nodes_[x].value;
        const Tensor& vy = t.nodes_[y].value;
        for (std::size_t i = 0; i < vx.size(); ++i) {
            t.nodes_[x].grad.data[i] += g * vy.data[i];
            t.nodes_[y].grad.data[i] += g * vx.data[i];
        }
    });
}

Tape::NodeId Tape::concat(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat: empty");
    std::vector<double> out;
    std::vector<std::size_t> offsets;
    for (NodeId p : parts) {
        offsets.push_back(out.size());
        const Tensor& v = nodes_[p].value;
        out.insert(out.end(), v.data.begin(), v.data.end());
    }
    return push(Tensor::vec(std::move(out)), "concat", parts,
                [parts, offsets](Tape& t, NodeId me) {
                    const Tensor& g = t.nodes_[me].grad;
                    for (std::size_t p = 0; p < parts.size(); ++p) {
                        Tensor& gp = t.nodes_[parts[p]].grad;
                        for (std::size_t i = 0; i < gp.size(); ++i)
                            gp.data[i] += g.data[offsets[p] + i];
                    }
                });
}

Tape::NodeId Tape::as_row(NodeId x) {
    const Tensor& v = nodes_[x].value;
    if (v.shape.size() != 1) throw std::invalid_argument("as_row: expects vector");
    Tensor out({1, v.size()}, v.data);
    return push(std::move(out), "as_row", {x}, [x](Tape& t, NodeId me) {
        const Tensor& g = t.nodes_[me].grad;
        for (std::size_t i = 0; i < g.size(); ++i) t.nodes_[x].grad.data[i] += g.data[i];
    });
}

Tape::NodeId Tape::gather_rows(NodeId table, std::vector<std::size_t> idx) {
    const Tensor& T = nodes_[table].value;
    if (T.shape.size() != 2) throw std::invalid_argument("gather_rows: expects matrix");
    std::size_t d = T.cols();
    Tensor out = Tensor::zeros({idx.size(), d});
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= T.rows()) throw std::out_of_range("gather_rows: index out of range");
        for (std::size_t j = 0; j < d; ++j) out.at(r, j) = T.at(idx[r], j);
    }
    return push(std::move(out), "gather_rows", {table},
                [table, idx = std::move(idx), d](Tape& t, NodeId me) {
                    const Tensor& g = t.nodes_[me].grad;
                    Tensor& gt = t.nodes_[table].grad;
                    for (std::size_t r = 0; r < idx.size(); ++r)
                        for (std::size_t j = 0; j < d; ++j)
                            gt.at(idx[r], j) += g.at(r, j);
                });
}

Tape::NodeId Tape::row(NodeId table, std::size_t i) {
    const Tensor& T = nodes_[table].value;
    if (T.shape.size() != 2 || i >= T.rows())
        throw std::out_of_range("row: index out of range");
    std::size_t d = T.cols();
    Tensor out = Tensor::zeros({d});
    for (std::size_t j = 0; j < d; ++j) out.data[j] = T.at(i, j);
    return push(std::move(out), "row", {table}, [table, i, d](Tape& t, NodeId me) {
        const Tensor& g = t.nodes_[me].grad;
        for (std::size_t j = 0; j < d; ++j) t.nodes_[table].grad.at(i, j) += g.data[j];
    });
}

Tape::NodeId Tape::mean_rows(NodeId m) {
    const Tensor& M = nodes_[m].value;
    if (M.shape.size() != 2) throw std::invalid_argument("mean_rows: expects matrix");
    std::size_t L = M.rows(), d = M.cols();
    Tensor out = Tensor::zeros({d});
    for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < d; ++j) out.data[j] += M.at(i, j) / double(L);
    return push(std::move(out), "mean_rows", {m}, [m, L, d](Tape& t, NodeId me) {
        const Tensor& g = t.nodes_[me].grad;
        Tensor& gm = t.nodes_[m].grad;
        for (std::size_t i = 0; i < L; ++i)
            for (std::size_t j = 0; j < d; ++j) gm.at(i, j) += g.data[j] / double(L);
    });
}

Tape::NodeId Tape::add_rowwise(NodeId m, NodeId v) {
    const Tensor& M = nodes_[m].value;
    const Tensor& V = nodes_[v].value;
    if (M.shape.size() != 2 || V.shape.size() != 1 || M.cols() != V.size())
        throw std::invalid_argument("add_rowwise: incompatible shapes");
    std::size_t L = M.rows(), d = M.cols();
    Tensor out = M;
    for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < d; ++j) out.at(i, j) += V.data[j];
    return push(std::move(out), "add_rowwise", {m, v}, [m, v, L, d](Tape& t, NodeId me) {
        const Tensor& g = t.nodes_[me].grad;
        for (std::size_t i = 0; i < L; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                t.nodes_[m].grad.at(i, j) += g.at(i, j);
                t.nodes_[v].grad.data[j] += g.at(i, j);
            }
    });
}

Tape::NodeId Tape::sigmoid(NodeId a) {
    Tensor out = nodes_[a].value;
    for (auto& v : out.data) v = sigmoid_scalar(v);
    return push(std::move(out), "sigmoid", {a}, [a](Tape& t, NodeId me) {
        const Tensor& g = t.nodes_[me].grad;
        const Tensor& y = t.nodes_[me].value;
        for (std::size_t i = 0; i < g.size(); ++i)
            t.nodes_[a].grad.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
    });
}

Tape::NodeId Tape::tanh_(NodeId a) {
    Tensor out = nodes_[a].value;
    for (auto& v : out.data) v = std::tanh(v);
    return push(std::move(out), "tanh", {a}, [a](Tape& t, NodeId me) {
        const Tensor& g = t.nodes_[me].grad;
        const Tensor& y = t.nodes_[me].value;
        for (std::size_t i = 0; i < g.size(); ++i)
            t.nodes_[a].grad.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
    });
}

Tape::NodeId Tape::relu(NodeId a) {
    Tensor out = nodes_[a].value;
    for (auto& v : out.data) v = v > 0 ? v : 0.0;
    return push(std::move(out), "relu", {a}, [a](Tape& t, NodeId me) {
        const Tensor& g = t.nodes_[me].grad;
        const Tensor& x = t.nodes_[a].value;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x.data[i] > 0) t.nodes_[a].grad.data[i] += g.data[i];
    });
}

Tape::NodeId Tape::softplus(NodeId a) {
    Tensor out = nodes_[a].value;
    for (auto& v : out.data) v = stable_softplus(v);
    return push(std::move(out), "softplus", {a}, [a](Tape& t, NodeId me) {
        const Tensor& g = t.nodes_[me].grad;
        const Tensor& x = t.nodes_[a].value;
        for (std::size_t i = 0; i < g.size(); ++i)
            t.nodes_[a].grad.data[i] += g.data[i] * sigmoid_scalar(x.data[i]);
    });
}

Tape::NodeId Tape::exp_(NodeId a, double clamp) {
    const Tensor& x = nodes_[a].value;
    Tensor out = x;
    std::vector<bool> clamped(x.size(), false);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (x.data[i] > clamp) {
            out.data[i] = std::exp(clamp);
            clamped[i] = true;
        } else {
            out.data[i] = std::exp(x.data[i]);
        }
    }
    return push(std::move(out), "exp", {a}, [a, clamped](Tape& t, NodeId me) {
        const Tensor& g = t.nodes_[me].grad;
        const Tensor& y = t.nodes_[me].value;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (!clamped[i]) t.nodes_[a].grad.data[i] += g.data[i] * y.data[i];
    });
}

Tape::NodeId Tape::softmax_rows(NodeId m) {
    const Tensor& M = nodes_[m].value;
    if (M.shape.size() != 2) throw std::invalid_argument("softmax_rows: expects matrix");
    std::size_t L = M.rows(), K = M.cols();
    Tensor out = Tensor::zeros({L, K});
    for (std::size_t i = 0; i < L; ++i) {
        double mx = M.at(i, 0);
        for (std::size_t j = 1; j < K; ++j) mx = std::max(mx, M.at(i, j));
        double z = 0;
        for (std::size_t j = 0; j < K; ++j) z += std::exp(M.at(i, j) - mx);
        for (std::size_t j = 0; j < K; ++j) out.at(i, j) = std::exp(M.at(i, j) - mx) / z;
    }
    return push(std::move(out), "softmax_rows", {m}, [m, L, K](Tape& t, NodeId me) {
        const Tensor& g = t.nodes_[me].grad;
        const Tensor& y = t.nodes_[me].value;
        Tensor& gm = t.nodes_[m].grad;
        for (std::size_t i = 0; i < L; ++i) {
            double gy = 0;
            for (std::size_t j = 0; j < K; ++j) gy += g.at(i, j) * y.at(i, j);
            for (std::size_t j = 0; j < K; ++j)
                gm.at(i, j) += y.at(i, j) * (g.at(i, j) - gy);
        }
    });
}

Tape::NodeId Tape::sum(NodeId a) {
    double s = 0;
    for (double v : nodes_[a].value.data) s += v;
    return push(Tensor::scalar(s), "sum", {a}, [a](Tape& t, NodeId me) {
        double g = t.nodes_[me].grad.data[0];
        for (auto& gv : t.nodes_[a].grad.data) gv += g;
    });
}

Tape::NodeId Tape::mean_all(NodeId a) {
    std::size_t n = nodes_[a].value.size();
    double s = 0;
    for (double v : nodes_[a].value.data) s += v;
    return push(Tensor::scalar(s / double(n)), "mean", {a}, [a, n](Tape& t, NodeId me) {
        double g = t.nodes_[me].grad.data[0] / double(n);
        for (auto& gv : t.nodes_[a].grad.data) gv += g;
    });
}

Tape::NodeId Tape::layer_norm(NodeId x, NodeId gain, NodeId bias, double eps) {
    const Tensor& X = nodes_[x].value;
    if (X.shape.size() != 1 || X.size() < 2)
        throw std::invalid_argument("layer_norm: expects vector of dim >= 2");
    check_same_shape(X, nodes_[gain].value, "layer_norm gain");
    check_same_shape(X, nodes_[bias].value, "layer_norm bias");
    std::size_t d = X.size();
    double mu = 0;
    for (double v : X.data) mu += v;
    mu /= double(d);
    double var = 0;
    for (double v : X.data) var += (v - mu) * (v - mu);
    var /= double(d);
    double inv = 1.0 / std::sqrt(var + eps);
    Tensor xhat = Tensor::zeros({d});
    Tensor out = Tensor::zeros({d});
    for (std::size_t i = 0; i < d; ++i) {
        xhat.data[i] = (X.data[i] - mu) * inv;
        out.data[i] = nodes_[gain].value.data[i] * xhat.data[i] + nodes_[bias].value.data[i];
    }
    return push(std::move(out), "layer_norm", {x, gain, bias},
                [x, gain, bias, xhat = std::move(xhat), inv, d](Tape& t, NodeId me) {
                    const Tensor& g = t.nodes_[me].grad;
                    const Tensor& gn = t.nodes_[gain].value;
                    double mg = 0, mgx = 0;
                    std::vector<double> gh(d);
                    for (std::size_t i = 0; i < d; ++i) {
                        gh[i] = g.data[i] * gn.data[i];
                        mg += gh[i];
                        mgx += gh[i] * xhat.data[i];
                    }
                    mg /= double(d);
                    mgx /= double(d);
                    for (std::size_t i = 0; i < d; ++i) {
                        t.nodes_[x].grad.data[i] += (gh[i] - mg - xhat.data[i] * mgx) * inv;
                        t.nodes_[gain].grad.data[i] += g.data[i] * xhat.data[i];
                        t.nodes_[bias].grad.data[i] += g.data[i];
                    }
                });
}

Tape::NodeId Tape::gaussian_kl(NodeId mu, NodeId sigma) {
    const Tensor& M = nodes_[mu].value;
    const Tensor& S = nodes_[sigma].value;
    check_same_shape(M, S, "gaussian_kl");
    double kl = 0;
    for (std::size_t i = 0; i < M.size(); ++i) {
        if (S.data[i] <= 0)
            throw std::domain_error("gaussian_kl: sigma must be positive");
        double m = M.data[i], s = S.data[i];
        kl += 0.5 * (m * m + s * s - std::log(s * s) - 1.0);
    }
    return push(Tensor::scalar(kl), "gaussian_kl", {mu, sigma},
                [mu, sigma](Tape& t, NodeId me) {
                    double g = t.nodes_[me].grad.data[0];
                    const Tensor& M = t.nodes_[mu].value;
                    const Tensor& S = t.nodes_[sigma].value;
                    for (std::size_t i = 0; i < M.size(); ++i) {
                        t.nodes_[mu].grad.data[i] += g * M.data[i];
                        t.nodes_[sigma].grad.data[i] +=
                            g * (S.data[i] - 1.0 / S.data[i]);
                    }
                });
}

Tape::NodeId Tape::bce_logits(NodeId logit, double label) {
    const Tensor& L = nodes_[logit].value;
    if (!L.is_scalar()) throw std::invalid_argument("bce_logits: expects scalar logit");
    double l = L.data[0];
    double loss = stable_softplus(l) - label * l;
    return push(Tensor::scalar(loss), "bce_logits", {logit},
                [logit, label](Tape& t, NodeId me) {
                    double g = t.nodes_[me].grad.data[0];
                    double l = t.nodes_[logit].value.data[0];
                    t.nodes_[logit].grad.data[0] += g * (sigmoid_scalar(l) - label);
                });
}

Tape::NodeId Tape::dropout(NodeId x, double rate, Rng& rng, bool train) {
    if (!train || rate == 0.0) return x;
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate in [0,1)");
    const Tensor& X = nodes_[x].value;
    double keep = 1.0 - rate;
    std::vector<double> mask(X.size());
    for (auto& m : mask) m = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
    Tensor out = X;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= mask[i];
    return push(std::move(out), "dropout", {x}, [x, mask = std::move(mask)](Tape& t, NodeId me) {
        const Tensor& g = t.nodes_[me].grad;
        for (std::size_t i = 0; i < g.size(); ++i)
            t.nodes_[x].grad.data[i] += g.data[i] * mask[i];
    });
}

void Tape::backward(NodeId loss) {
    if (!nodes_[loss].value.is_scalar())
        throw std::logic_error("backward: loss must be scalar");
    nodes_[loss].grad.data[0] = 1.0;
    for (NodeId id = loss; id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.backward) n.backward(*this, id);
    }
}

std::size_t Tape::count_op(std::string_view op) const {
    std::size_t c = 0;
    for (const auto& n : nodes_)
        if (n.op == op) ++c;
    return c;
}

}  // namespace dmir
