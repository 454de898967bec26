#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "navrep/rng.hpp"
#include "navrep/tensor.hpp"

namespace navrep {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid as long as the tape lives.
struct Var {
    Tape* tape = nullptr;
    int idx = -1;

    const Tensor& val() const;
    const std::vector<std::int64_t>& shape() const { return val().shape; }
    double scalar() const;
};

// Reverse-mode tape with an explicit scalar loss root. Values are computed
// eagerly as ops are recorded; backward() replays the recorded closures in
// reverse. Every op output is checked for non-finite entries and throws
// NumericsError on violation. A tape is single-threaded; independent tapes
// may run on separate threads.
class Tape {
public:
    Var constant(Tensor value);
    // Leaf whose gradient is accumulated into *sink after backward().
    Var leaf(const Tensor& value, Tensor* sink);

    void backward(Var root);

    const Tensor& value(int idx) const { return nodes_[static_cast<std::size_t>(idx)].value; }
    Tensor& grad(int idx) { return nodes_[static_cast<std::size_t>(idx)].grad; }
    std::size_t size() const { return nodes_.size(); }

    // Internal: used by the op constructors.
    Var emplace(Tensor value, std::function<void(Tape&)> back, const char* op_name);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Tape&)> back;  // null for constants/leaves
    };
    std::vector<Node> nodes_;
    std::vector<std::pair<int, Tensor*>> sinks_;
};

// ---- ops ----
// All ops validate shapes (std::invalid_argument on mismatch) and finiteness
// (NumericsError).

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var div(Var a, Var b);  // elementwise
Var scale(Var a, double c);
Var neg(Var a);

Var relu(Var a);
Var tanh_(Var a);
Var sigmoid(Var a);
Var sqrt_(Var a);
Var exp_(Var a);
Var log_(Var a);
// Inverted dropout; identity when rate == 0. Mask drawn from rng.
Var dropout(Var a, double rate, Rng& rng);

Var matmul(Var a, Var b);       // [n,k]x[k,m] -> [n,m]
Var matvec(Var a, Var x);       // [n,m]x[m] -> [n]
Var vecmat(Var x, Var a);       // [n]x[n,m] -> [m]
Var transpose(Var a);           // [n,m] -> [m,n]
Var linear(Var x, Var w, std::optional<Var> b);  // x[*,in], w[out,in] -> [*,out]

Var embed(Var table, const std::vector<int>& ids);        // [V,d] -> [n,d]
Var gather_rows(Var a, const std::vector<int>& indices);  // [n,m] -> [k,m]
Var row(Var a, std::int64_t r);                           // [n,m] -> [m]
Var slice(Var a, std::int64_t offset, std::int64_t len);  // 1-D slice
Var concat_vec(const std::vector<Var>& parts);            // 1-D concat
Var stack_rows(const std::vector<Var>& rows);             // k vectors [m] -> [k,m]
Var vstack(const std::vector<Var>& blocks);               // 2-D concat along rows
Var hstack(Var a, Var b);                                 // [n,p],[n,q] -> [n,p+q]
Var reshape(Var a, std::vector<std::int64_t> shape);

// Softmax along the last axis (rows); axis 0 on rank-2 goes through a
// transpose. Max-subtraction for stability.
Var softmax(Var a, int axis = -1);
Var log_softmax(Var a, int axis = -1);
// Per-row normalization over the last axis, epsilon 1e-5 inside the sqrt.
Var layer_norm(Var x, Var gain, Var bias);

Var sum(Var a);        // -> scalar
Var mean(Var a);       // -> scalar
Var mean_rows(Var a);  // [n,m] -> [m]
Var dot(Var a, Var b);  // 1-D, -> scalar
Var pick(Var a, std::int64_t index);  // -> scalar (flattened index)
Var norm(Var a);       // -> scalar, ||a||_2
// a^T b / (||a|| ||b||); throws NumericsError if either vector has zero norm.
Var cosine_sim(Var a, Var b);

// Standard LSTM cell. wx [4H,in], wh [4H,H], bias [4H]; gate order
// input, forget, candidate, output. Returns (h', c').
std::pair<Var, Var> lstm_step(Var input, Var h, Var c, Var wx, Var wh, Var bias);

}  // namespace navrep
