#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "rclip/errors.hpp"
#include "rclip/rng.hpp"
#include "rclip/tensor.hpp"

namespace rclip {

// Named parameter tensors in a stable (insertion) order. Initialization is
// keyed by (seed, name) so values do not depend on creation order.
template <typename T>
class ParamStore {
  public:
    struct Entry {
        std::string name;
        Tensor<T> value;
        bool trainable = false;
    };

    Tensor<T>& add(const std::string& name, std::vector<int64_t> shape, bool trainable) {
        if (index_.count(name)) throw Error("duplicate parameter: " + name);
        index_[name] = entries_.size();
        entries_.push_back(Entry{name, Tensor<T>(std::move(shape)), trainable});
        return entries_.back().value;
    }

    bool has(const std::string& name) const { return index_.count(name) > 0; }

    Tensor<T>& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw Error("unknown parameter: " + name);
        return entries_[it->second].value;
    }
    const Tensor<T>& at(const std::string& name) const {
        return const_cast<ParamStore*>(this)->at(name);
    }
    bool trainable(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw Error("unknown parameter: " + name);
        return entries_[it->second].trainable;
    }

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }

    std::vector<std::string> trainable_names() const {
        std::vector<std::string> out;
        for (const auto& e : entries_)
            if (e.trainable) out.push_back(e.name);
        return out;
    }

    int64_t count(bool trainable_only = false) const {
        int64_t n = 0;
        for (const auto& e : entries_)
            if (!trainable_only || e.trainable) n += e.value.numel();
        return n;
    }

    // Gaussian fill keyed by name; gains/ones handled by callers.
    void init_normal(const std::string& name, uint64_t seed, double stddev) {
        Tensor<T>& t = at(name);
        Rng rng = Rng(seed).fork(name);
        for (int64_t i = 0; i < t.numel(); ++i)
            t[i] = static_cast<T>(rng.normal() * stddev);
    }

    uint64_t checksum(const std::string& name) const {
        const Tensor<T>& t = at(name);
        return fnv1a64_bytes(t.ptr(), static_cast<size_t>(t.numel()) * sizeof(T));
    }

  private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, size_t> index_;
};

}  // namespace rclip
