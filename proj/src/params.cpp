#include "navrep/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "navrep/error.hpp"
#include "navrep/kernels.hpp"

namespace navrep {

Tensor& ParamStore::create(const std::string& name, Tensor init) {
    auto it = entries_.find(name);
    if (it != entries_.end()) {
        if (it->second.value.shape != init.shape)
            throw std::invalid_argument("parameter '" + name + "' re-created with different shape");
        return it->second.value;
    }
    Entry e;
    e.grad = Tensor::zeros(init.shape);
    e.slot_a = Tensor::zeros(init.shape);
    e.slot_b = Tensor::zeros(init.shape);
    e.value = std::move(init);
    auto [pos, _] = entries_.emplace(name, std::move(e));
    return pos->second.value;
}

Tensor& ParamStore::create_uniform(const std::string& name, std::vector<std::int64_t> shape, double range,
                                   Rng& rng) {
    if (contains(name)) return value(name);
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& x : t.data) x = rng.uniform(-range, range);
    return create(name, std::move(t));
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::invalid_argument("unknown parameter '" + name + "'");
    return it->second;
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::invalid_argument("unknown parameter '" + name + "'");
    return it->second;
}

void ParamStore::zero_grad() {
    for (auto& [_, e] : entries_) e.grad.fill(0.0);
}

double ParamStore::grad_sq_norm() const {
    double s = 0.0;
    for (const auto& [_, e] : entries_) s += kern::dot(e.grad.data.size(), e.grad.data.data(), e.grad.data.data());
    return s;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [n, _] : entries_) out.push_back(n);
    return out;
}

std::vector<std::string> ParamStore::names_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [n, _] : entries_)
        if (n.rfind(prefix, 0) == 0) out.push_back(n);
    return out;
}

void ParamStore::adopt(const ParamStore& other, const std::string& prefix) {
    for (const auto& [n, e] : other.entries_) {
        if (!prefix.empty() && n.rfind(prefix, 0) != 0) continue;
        if (contains(n)) {
            Entry& mine = entry(n);
            if (mine.value.shape != e.value.shape)
                throw DataError("adopt: parameter '" + n + "' shape mismatch");
            mine.value = e.value;
        } else {
            create(n, e.value);
        }
    }
}

Var ParamCtx::operator()(const std::string& name) {
    auto it = leased_.find(name);
    if (it != leased_.end()) return it->second;
    ParamStore::Entry& e = store_->entry(name);
    Var v = tape_->leaf(e.value, &e.grad);
    leased_.emplace(name, v);
    return v;
}

void AdamW::step(ParamStore& store, const std::string& prefix) {
    for (auto& [name, e] : store.raw()) {
        if (!prefix.empty() && name.rfind(prefix, 0) != 0) continue;
        e.steps += 1;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(e.steps));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(e.steps));
        for (std::size_t i = 0; i < e.value.data.size(); ++i) {
            const double g = e.grad.data[i];
            e.slot_a.data[i] = beta1 * e.slot_a.data[i] + (1.0 - beta1) * g;
            e.slot_b.data[i] = beta2 * e.slot_b.data[i] + (1.0 - beta2) * g * g;
            const double mhat = e.slot_a.data[i] / bc1;
            const double vhat = e.slot_b.data[i] / bc2;
            // decoupled weight decay: applied to the parameter, not the gradient
            e.value.data[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * e.value.data[i]);
        }
    }
}

void RmsProp::step(ParamStore& store, const std::string& prefix) {
    for (auto& [name, e] : store.raw()) {
        if (!prefix.empty() && name.rfind(prefix, 0) != 0) continue;
        e.steps += 1;
        for (std::size_t i = 0; i < e.value.data.size(); ++i) {
            const double g = e.grad.data[i];
            e.slot_a.data[i] = decay * e.slot_a.data[i] + (1.0 - decay) * g * g;
            e.value.data[i] -= lr * g / (std::sqrt(e.slot_a.data[i]) + eps);
        }
    }
}

// ---- checkpoint I/O ----

namespace {

constexpr char kMagic[4] = {'N', 'R', 'C', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_raw(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw DataError("checkpoint: unexpected end of file");
    return v;
}

}  // namespace

void save_checkpoint(const ParamStore& store, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 4);
    write_raw<std::uint32_t>(os, kVersion);
    write_raw<std::uint64_t>(os, store.size());
    for (const auto& [name, e] : store.raw()) {
        write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(e.value.shape.size()));
        for (auto d : e.value.shape) write_raw<std::int64_t>(os, d);
        os.write(reinterpret_cast<const char*>(e.value.data.data()),
                 static_cast<std::streamsize>(e.value.data.size() * sizeof(double)));
    }
    if (!os) throw DataError("checkpoint write failed: " + path);
}

void load_checkpoint(ParamStore& store, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) throw DataError("not a checkpoint file: " + path);
    const auto version = read_raw<std::uint32_t>(is);
    if (version != kVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
    const auto count = read_raw<std::uint64_t>(is);
    for (std::uint64_t k = 0; k < count; ++k) {
        const auto name_len = read_raw<std::uint32_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const auto rank = read_raw<std::uint32_t>(is);
        std::vector<std::int64_t> shape(rank);
        for (auto& d : shape) d = read_raw<std::int64_t>(is);
        Tensor t = Tensor::zeros(shape);
        is.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!is) throw DataError("checkpoint: truncated tensor data in " + path);
        if (store.contains(name)) {
            if (store.value(name).shape != shape) throw DataError("checkpoint: shape mismatch for '" + name + "'");
            store.value(name) = std::move(t);
        } else {
            store.create(name, std::move(t));
        }
    }
}

std::string file_hash_hex(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot hash missing file: " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (is) {
        is.read(buf, sizeof(buf));
        for (std::streamsize i = 0; i < is.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return std::string(out);
}

}  // namespace navrep
