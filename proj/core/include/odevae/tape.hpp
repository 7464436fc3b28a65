#pragma once

#include <functional>
#include <string>
#include <vector>

#include "odevae/tensor.hpp"

namespace odevae::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid as long as the tape lives.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Tensor& value() const;
    bool valid() const { return tape != nullptr && id >= 0; }
};

struct GradResult {
    double loss = 0.0;
    std::vector<Tensor> grads;  // one per requested parameter, same order
};

/// Records primitive operations for reverse-mode gradient accumulation.
/// Single-threaded per instance; independent tapes may run concurrently.
class Tape {
public:
    using BackFn = std::function<void(Tape&, const Tensor& gout, std::vector<Tensor>& adj)>;

    Var leaf(Tensor value);
    Var constant(Tensor value) { return leaf(std::move(value)); }

    Var push(Tensor value, BackFn back);

    const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    std::size_t size() const { return nodes_.size(); }

    /// Accumulates d(loss)/d(param) for each param by replaying the tape in
    /// reverse. Params not on the path from loss get zero gradients.
    GradResult backward(Var loss, const std::vector<Var>& params);

    static void accumulate(std::vector<Tensor>& adj, int id, const Tensor& g);

private:
    struct Node {
        Tensor value;
        BackFn back;  // empty for leaves
    };
    std::vector<Node> nodes_;
};

// ---- primitive ops ---------------------------------------------------------
// Elementwise ops require equal shapes or one scalar operand (scalar
// broadcasting only).

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var matmul(Var a, Var b);

Var tanh(Var v);
Var sigmoid(Var v);
Var exp(Var v);
Var log(Var v);
Var square(Var v);

Var sum(Var v);
Var mean(Var v);
Var scale(Var v, double c);
Var shift(Var v, double c);

/// Extracts element i of a rank-1 tensor as a scalar node.
Var slice(Var v, int i);
/// Stacks scalar or rank-1 nodes into one rank-1 tensor.
Var concat(const std::vector<Var>& parts);
Var reshape(Var v, std::vector<int> shape);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator*(double c, Var v) { return scale(v, c); }
inline Var operator-(Var v) { return scale(v, -1.0); }

/// sum(square(v)); the squared Euclidean norm.
Var sqnorm(Var v);

// ---- finite-difference gradient checker ------------------------------------

struct FiniteDiffReport {
    bool pass = false;
    double max_rel_err = 0.0;
    std::string worst;  // "param k, entry j" of the worst mismatch
};

/// Compares backward() gradients of f against central finite differences.
/// f must be deterministic: it receives a fresh tape plus one leaf per
/// parameter and returns a scalar loss node on that tape.
FiniteDiffReport finite_diff_check(
    const std::function<Var(Tape&, const std::vector<Var>&)>& f,
    const std::vector<Tensor>& params, double step, double tol);

}  // namespace odevae::ad
