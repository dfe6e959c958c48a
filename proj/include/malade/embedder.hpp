#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "malade/util.hpp"

namespace malade {

class Embedder {
   public:
    virtual ~Embedder() = default;
    virtual std::vector<float> embed(const std::string& text) const = 0;
    virtual int dimension() const = 0;
    virtual std::string id() const = 0;
};

// Deterministic feature-hash embedder for offline runs: FNV-1a token hashes
// spread over the center bucket and its two neighbors, L2-normalized.
class HashEmbedder : public Embedder {
   public:
    explicit HashEmbedder(int dimension = 256) : dim_(dimension) {}

    std::vector<float> embed(const std::string& text) const override {
        std::vector<float> v(static_cast<size_t>(dim_), 0.0f);
        bool any = false;
        for (const auto& token : tokenize_words(text)) {
            any = true;
            uint64_t h = fnv1a(token);
            size_t center = static_cast<size_t>(h % static_cast<uint64_t>(dim_));
            v[center] += 1.0f;
            v[(center + 1) % static_cast<size_t>(dim_)] += 0.5f;
            v[(center + static_cast<size_t>(dim_) - 1) % static_cast<size_t>(dim_)] += 0.5f;
        }
        if (!any) return v;
        double norm = 0.0;
        for (float x : v) norm += static_cast<double>(x) * x;
        norm = std::sqrt(norm);
        if (norm > 0.0)
            for (float& x : v) x = static_cast<float>(x / norm);
        return v;
    }

    int dimension() const override { return dim_; }
    std::string id() const override { return "hash-" + std::to_string(dim_); }

   private:
    static uint64_t fnv1a(const std::string& s) {
        uint64_t h = 14695981039346656037ull;
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
        return h;
    }

    int dim_;
};

}  // namespace malade
