#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "navrep/rng.hpp"
#include "navrep/tape.hpp"
#include "navrep/tensor.hpp"

namespace navrep {

// Named parameter tensors with accumulated gradients and per-parameter
// optimizer slots. Names are unique; iteration order is lexicographic
// (std::map), which keeps optimizer sweeps and checkpoints deterministic.
class ParamStore {
public:
    struct Entry {
        Tensor value;
        Tensor grad;
        Tensor slot_a;  // first moment (AdamW) / mean square (RMSProp)
        Tensor slot_b;  // second moment (AdamW only)
        std::int64_t steps = 0;
    };

    // Creates the parameter if absent (error if shapes disagree on re-add).
    Tensor& create(const std::string& name, Tensor init);
    Tensor& create_uniform(const std::string& name, std::vector<std::int64_t> shape, double range, Rng& rng);

    bool contains(const std::string& name) const { return entries_.count(name) > 0; }
    Entry& entry(const std::string& name);
    const Entry& entry(const std::string& name) const;
    Tensor& value(const std::string& name) { return entry(name).value; }

    void zero_grad();
    double grad_sq_norm() const;

    std::vector<std::string> names() const;
    std::vector<std::string> names_with_prefix(const std::string& prefix) const;
    std::size_t size() const { return entries_.size(); }

    // Copy parameters (values only) from another store, optionally restricted
    // to a prefix. Missing names are created.
    void adopt(const ParamStore& other, const std::string& prefix = "");

    std::map<std::string, Entry>& raw() { return entries_; }
    const std::map<std::string, Entry>& raw() const { return entries_; }

private:
    std::map<std::string, Entry> entries_;
};

// Per-tape parameter binding: the first use of a name leases the parameter
// onto the tape as a leaf whose gradient flows back into the store.
class ParamCtx {
public:
    ParamCtx(Tape& tape, ParamStore& store) : tape_(&tape), store_(&store) {}
    Var operator()(const std::string& name);
    ParamStore& store() { return *store_; }
    Tape& tape() { return *tape_; }

private:
    Tape* tape_;
    ParamStore* store_;
    std::map<std::string, Var> leased_;
};

// ---- optimizers ----

// Adam with decoupled weight decay; applied to parameters matching `prefix`.
struct AdamW {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    void step(ParamStore& store, const std::string& prefix = "");
};

// RMS-propagation with a small epsilon, no momentum.
struct RmsProp {
    double lr = 1e-4;
    double decay = 0.9;
    double eps = 1e-8;
    void step(ParamStore& store, const std::string& prefix = "");
};

// ---- checkpoint I/O ----
// Versioned binary format, bit-exact f64 round trip:
//   magic "NRCP", u32 version, u64 entry count,
//   per entry: u32 name length, name bytes, u32 rank, i64 dims, f64 data (LE).

void save_checkpoint(const ParamStore& store, const std::string& path);
void load_checkpoint(ParamStore& store, const std::string& path);
// FNV-1a content hash of a file, hex string (artifact provenance).
std::string file_hash_hex(const std::string& path);

}  // namespace navrep
