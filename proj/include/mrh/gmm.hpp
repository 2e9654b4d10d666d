#ifndef MRH_GMM_HPP
#define MRH_GMM_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrh/binary_io.hpp"
#include "mrh/dct.hpp"
#include "mrh/parallel.hpp"

namespace mrh {

/// Posterior probabilities of one feature under every dictionary component.
using PosteriorHistogram = std::vector<double>;

struct TrainConfig {
    int components = 1024;
    std::uint64_t seed = 0;
    int max_em_iters = 100;
    double rel_tol = 1e-5;
    int kmeans_iters = 10;
    double variance_floor_scale = 1e-4;
    int threads = 1;

    void validate() const {
        if (components < 1) throw std::invalid_argument("component count must be >= 1");
        if (max_em_iters < 1 || kmeans_iters < 0) throw std::invalid_argument("iteration counts must be positive");
        if (rel_tol <= 0.0 || variance_floor_scale <= 0.0)
            throw std::invalid_argument("tolerances must be positive");
    }
};

/// Diagonal-covariance Gaussian mixture over the 15-dim DCT feature space.
/// Immutable after construction; per-component constants for density
/// evaluation are precomputed once.
class VisualDictionary {
public:
    VisualDictionary(std::vector<double> weights, std::vector<double> means,
                     std::vector<double> variances)
        : weights_(std::move(weights)), means_(std::move(means)), variances_(std::move(variances)) {
        const std::size_t g = weights_.size();
        if (g < 1) throw std::runtime_error("dictionary: no components");
        if (means_.size() != g * kFeatureDim || variances_.size() != g * kFeatureDim)
            throw std::runtime_error("dictionary: dimension mismatch");
        double wsum = 0.0;
        for (double w : weights_) {
            if (!std::isfinite(w) || w < 0.0) throw std::runtime_error("dictionary: invalid weight");
            wsum += w;
        }
        if (std::abs(wsum - 1.0) > 1e-9)
            throw std::runtime_error("dictionary: weights sum to " + std::to_string(wsum) + ", not 1");
        for (double m : means_)
            if (!std::isfinite(m)) throw std::runtime_error("dictionary: non-finite mean");
        for (double v : variances_)
            if (!std::isfinite(v) || v <= 0.0) throw std::runtime_error("dictionary: non-positive variance");

        const double log2pi = std::log(2.0 * std::acos(-1.0));
        log_weights_.resize(g);
        inv_variances_.resize(g * kFeatureDim);
        log_norms_.resize(g);
        for (std::size_t c = 0; c < g; ++c) {
            log_weights_[c] = std::log(weights_[c]);
            double ln = 0.0;
            for (int d = 0; d < kFeatureDim; ++d) {
                const double v = variances_[c * kFeatureDim + d];
                inv_variances_[c * kFeatureDim + d] = 1.0 / v;
                ln += log2pi + std::log(v);
            }
            log_norms_[c] = ln;
        }

        std::uint64_t h = fnv1a({});
        auto mix_u64 = [&h](std::uint64_t v) {
            std::uint8_t b[8];
            for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
            h = fnv1a({b, 8}, h);
        };
        mix_u64(static_cast<std::uint64_t>(g));
        mix_u64(static_cast<std::uint64_t>(kFeatureDim));
        for (double w : weights_) mix_u64(std::bit_cast<std::uint64_t>(w));
        for (double m : means_) mix_u64(std::bit_cast<std::uint64_t>(m));
        for (double v : variances_) mix_u64(std::bit_cast<std::uint64_t>(v));
        id_ = h;
    }

    int components() const { return static_cast<int>(weights_.size()); }
    const std::vector<double>& weights() const { return weights_; }
    const std::vector<double>& means() const { return means_; }
    const std::vector<double>& variances() const { return variances_; }

    /// Content hash binding signatures to the dictionary they were built with.
    std::uint64_t id() const { return id_; }

    /// log(w_g * p_g(f)) for every component.
    void log_joint(const double* f, double* out) const {
        const int g = components();
        for (int c = 0; c < g; ++c) {
            const double* mu = means_.data() + static_cast<std::size_t>(c) * kFeatureDim;
            const double* iv = inv_variances_.data() + static_cast<std::size_t>(c) * kFeatureDim;
            double quad = 0.0;
            for (int d = 0; d < kFeatureDim; ++d) {
                const double diff = f[d] - mu[d];
                quad += diff * diff * iv[d];
            }
            out[c] = log_weights_[c] - 0.5 * (log_norms_[c] + quad);
        }
    }

    bool operator==(const VisualDictionary& other) const {
        return weights_ == other.weights_ && means_ == other.means_ && variances_ == other.variances_;
    }

private:
    std::vector<double> weights_;    // G
    std::vector<double> means_;      // G x 15
    std::vector<double> variances_;  // G x 15
    std::vector<double> log_weights_, inv_variances_, log_norms_;
    std::uint64_t id_ = 0;
};

namespace detail {

inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::size_t uniform_below(std::mt19937_64& rng, std::size_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v;
    do {
        v = rng();
    } while (v >= limit);
    return static_cast<std::size_t>(v % n);
}

// Deterministic Fisher-Yates; std::shuffle is implementation-defined.
template <typename T>
inline void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[uniform_below(rng, i)]);
}

inline double sq_dist(const double* a, const double* b) {
    double s = 0.0;
    for (int d = 0; d < kFeatureDim; ++d) {
        const double diff = a[d] - b[d];
        s += diff * diff;
    }
    return s;
}

// Point chunk size for all training reductions. Fixed so that per-chunk
// partial sums (merged in chunk order) are identical for any thread count.
inline constexpr std::size_t kTrainChunk = 2048;

} // namespace detail

/// Normalized posteriors of f under the dictionary (Bayes rule over
/// components), evaluated in log space with max subtraction so distant
/// features cannot underflow to NaN. `out` must hold G doubles.
inline void posterior_histogram(const VisualDictionary& dict, const FeatureVector& f, double* out) {
    const int g = dict.components();
    dict.log_joint(f.data(), out);
    double m = out[0];
    for (int c = 1; c < g; ++c) m = std::max(m, out[c]);
    double sum = 0.0;
    for (int c = 0; c < g; ++c) {
        out[c] = std::exp(out[c] - m);
        sum += out[c];
    }
    const double inv = 1.0 / sum;
    for (int c = 0; c < g; ++c) out[c] *= inv;
}

inline PosteriorHistogram posterior_histogram(const VisualDictionary& dict, const FeatureVector& f) {
    PosteriorHistogram h(dict.components());
    posterior_histogram(dict, f, h.data());
    return h;
}

/// Total log-likelihood sum_i log sum_g w_g p_g(f_i).
inline double log_likelihood(const VisualDictionary& dict, const std::vector<FeatureVector>& features,
                             int threads = 1) {
    if (features.empty()) throw std::invalid_argument("log_likelihood: empty feature list");
    const int g = dict.components();
    const std::size_t nchunks = (features.size() + detail::kTrainChunk - 1) / detail::kTrainChunk;
    std::vector<double> partial(nchunks, 0.0);
    for_chunks(features.size(), detail::kTrainChunk, threads,
               [&](std::size_t ci, std::size_t b, std::size_t e) {
                   std::vector<double> lj(g);
                   double s = 0.0;
                   for (std::size_t i = b; i < e; ++i) {
                       dict.log_joint(features[i].data(), lj.data());
                       double m = lj[0];
                       for (int c = 1; c < g; ++c) m = std::max(m, lj[c]);
                       double acc = 0.0;
                       for (int c = 0; c < g; ++c) acc += std::exp(lj[c] - m);
                       s += m + std::log(acc);
                   }
                   partial[ci] = s;
               });
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

/// Trains the visual dictionary: k-means++ seeding, Lloyd refinement, then EM
/// with diagonal covariances until the relative log-likelihood improvement
/// drops below rel_tol. Deterministic for a fixed config, including across
/// thread counts. Appends the per-iteration log-likelihood to
/// `ll_history` when given.
inline VisualDictionary train_dictionary(const std::vector<FeatureVector>& features,
                                         const TrainConfig& cfg,
                                         std::vector<double>* ll_history = nullptr) {
    cfg.validate();
    const std::size_t n = features.size();
    const int g = cfg.components;
    const int d = kFeatureDim;
    if (n < static_cast<std::size_t>(g))
        throw std::runtime_error("training needs at least " + std::to_string(g) +
                                 " feature vectors, got " + std::to_string(n));
    for (const auto& f : features)
        for (double v : f)
            if (!std::isfinite(v)) throw std::runtime_error("non-finite feature input");

    // Per-dimension variance floor from the pooled training data.
    std::vector<double> data_mean(d, 0.0), data_var(d, 0.0), floor(d, 0.0);
    for (const auto& f : features)
        for (int k = 0; k < d; ++k) data_mean[k] += f[k];
    for (int k = 0; k < d; ++k) data_mean[k] /= static_cast<double>(n);
    for (const auto& f : features)
        for (int k = 0; k < d; ++k) {
            const double diff = f[k] - data_mean[k];
            data_var[k] += diff * diff;
        }
    for (int k = 0; k < d; ++k) {
        data_var[k] = std::max(data_var[k] / static_cast<double>(n), 1e-12);
        floor[k] = cfg.variance_floor_scale * data_var[k];
    }

    const std::size_t nchunks = (n + detail::kTrainChunk - 1) / detail::kTrainChunk;

    // --- k-means++ seeding ---
    std::mt19937_64 rng(cfg.seed);
    std::vector<double> centers(static_cast<std::size_t>(g) * d);
    std::vector<double> mindist(n, std::numeric_limits<double>::infinity());
    std::size_t fallback = 0;
    for (int c = 0; c < g; ++c) {
        std::size_t pick;
        if (c == 0) {
            pick = detail::uniform_below(rng, n);
        } else {
            std::vector<double> partial(nchunks, 0.0);
            for (std::size_t ci = 0; ci < nchunks; ++ci) {
                const std::size_t b = ci * detail::kTrainChunk;
                const std::size_t e = std::min(n, b + detail::kTrainChunk);
                double s = 0.0;
                for (std::size_t i = b; i < e; ++i) s += mindist[i];
                partial[ci] = s;
            }
            double total = 0.0;
            for (double p : partial) total += p;
            if (total > 0.0) {
                const double u = detail::uniform01(rng) * total;
                double acc = 0.0;
                pick = n - 1;
                for (std::size_t i = 0; i < n; ++i) {
                    acc += mindist[i];
                    if (acc >= u) {
                        pick = i;
                        break;
                    }
                }
            } else {
                pick = fallback++ % n; // all points coincide with existing centers
            }
        }
        double* ctr = centers.data() + static_cast<std::size_t>(c) * d;
        std::copy_n(features[pick].data(), d, ctr);
        for_chunks(n, detail::kTrainChunk, cfg.threads, [&](std::size_t, std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i)
                mindist[i] = std::min(mindist[i], detail::sq_dist(features[i].data(), ctr));
        });
    }

    // --- Lloyd refinement ---
    std::vector<std::uint32_t> assign(n, 0);
    auto assign_points = [&] {
        for_chunks(n, detail::kTrainChunk, cfg.threads, [&](std::size_t, std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                double best = std::numeric_limits<double>::infinity();
                std::uint32_t bc = 0;
                for (int c = 0; c < g; ++c) {
                    const double dist =
                        detail::sq_dist(features[i].data(), centers.data() + static_cast<std::size_t>(c) * d);
                    if (dist < best) {
                        best = dist;
                        bc = static_cast<std::uint32_t>(c);
                    }
                }
                assign[i] = bc;
            }
        });
    };
    std::vector<double> counts(g), sums(static_cast<std::size_t>(g) * d);
    std::vector<double> chunk_counts(nchunks * g), chunk_sums(nchunks * g * d);
    auto accumulate_clusters = [&] {
        std::fill(chunk_counts.begin(), chunk_counts.end(), 0.0);
        std::fill(chunk_sums.begin(), chunk_sums.end(), 0.0);
        for_chunks(n, detail::kTrainChunk, cfg.threads, [&](std::size_t ci, std::size_t b, std::size_t e) {
            double* cc = chunk_counts.data() + ci * g;
            double* cs = chunk_sums.data() + ci * g * d;
            for (std::size_t i = b; i < e; ++i) {
                const std::uint32_t c = assign[i];
                cc[c] += 1.0;
                for (int k = 0; k < d; ++k) cs[static_cast<std::size_t>(c) * d + k] += features[i][k];
            }
        });
        std::fill(counts.begin(), counts.end(), 0.0);
        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t ci = 0; ci < nchunks; ++ci) {
            for (int c = 0; c < g; ++c) counts[c] += chunk_counts[ci * g + c];
            for (std::size_t k = 0; k < static_cast<std::size_t>(g) * d; ++k)
                sums[k] += chunk_sums[ci * g * d + k];
        }
    };
    for (int it = 0; it < cfg.kmeans_iters; ++it) {
        assign_points();
        accumulate_clusters();
        for (int c = 0; c < g; ++c) {
            if (counts[c] == 0.0) continue; // empty cluster keeps its center
            for (int k = 0; k < d; ++k)
                centers[static_cast<std::size_t>(c) * d + k] = sums[static_cast<std::size_t>(c) * d + k] / counts[c];
        }
    }

    // --- GMM init from the final hard assignment ---
    assign_points();
    accumulate_clusters();
    std::vector<double> chunk_sumsq(nchunks * g * d, 0.0);
    for_chunks(n, detail::kTrainChunk, cfg.threads, [&](std::size_t ci, std::size_t b, std::size_t e) {
        double* cs = chunk_sumsq.data() + ci * g * d;
        for (std::size_t i = b; i < e; ++i) {
            const std::uint32_t c = assign[i];
            for (int k = 0; k < d; ++k) {
                const double v = features[i][k];
                cs[static_cast<std::size_t>(c) * d + k] += v * v;
            }
        }
    });
    std::vector<double> sumsq(static_cast<std::size_t>(g) * d, 0.0);
    for (std::size_t ci = 0; ci < nchunks; ++ci)
        for (std::size_t k = 0; k < static_cast<std::size_t>(g) * d; ++k)
            sumsq[k] += chunk_sumsq[ci * g * d + k];

    std::vector<double> weights(g), means(static_cast<std::size_t>(g) * d),
        variances(static_cast<std::size_t>(g) * d);
    for (int c = 0; c < g; ++c) {
        weights[c] = counts[c] / static_cast<double>(n);
        for (int k = 0; k < d; ++k) {
            const std::size_t idx = static_cast<std::size_t>(c) * d + k;
            if (counts[c] > 0.0) {
                means[idx] = sums[idx] / counts[c];
                variances[idx] = std::max(sumsq[idx] / counts[c] - means[idx] * means[idx], floor[k]);
            } else {
                means[idx] = centers[idx];
                variances[idx] = std::max(data_var[k], floor[k]);
            }
        }
    }

    // --- EM ---
    const std::size_t stat_stride = static_cast<std::size_t>(g) * (1 + 2 * d);
    std::vector<double> chunk_stats(nchunks * stat_stride);
    double prev_ll = 0.0;
    for (int iter = 0; iter < cfg.max_em_iters; ++iter) {
        VisualDictionary model(weights, means, variances);
        std::fill(chunk_stats.begin(), chunk_stats.end(), 0.0);
        std::vector<double> ll_partial(nchunks, 0.0);
        for_chunks(n, detail::kTrainChunk, cfg.threads, [&](std::size_t ci, std::size_t b, std::size_t e) {
            std::vector<double> lj(g);
            double* nk = chunk_stats.data() + ci * stat_stride;
            double* sx = nk + g;
            double* sxx = sx + static_cast<std::size_t>(g) * d;
            double ll = 0.0;
            for (std::size_t i = b; i < e; ++i) {
                model.log_joint(features[i].data(), lj.data());
                double m = lj[0];
                for (int c = 1; c < g; ++c) m = std::max(m, lj[c]);
                double sum = 0.0;
                for (int c = 0; c < g; ++c) {
                    lj[c] = std::exp(lj[c] - m);
                    sum += lj[c];
                }
                ll += m + std::log(sum);
                const double inv = 1.0 / sum;
                for (int c = 0; c < g; ++c) {
                    const double r = lj[c] * inv;
                    if (r == 0.0) continue;
                    nk[c] += r;
                    for (int k = 0; k < d; ++k) {
                        const double v = features[i][k];
                        sx[static_cast<std::size_t>(c) * d + k] += r * v;
                        sxx[static_cast<std::size_t>(c) * d + k] += r * v * v;
                    }
                }
            }
            ll_partial[ci] = ll;
        });
        double ll = 0.0;
        for (double p : ll_partial) ll += p;
        if (ll_history) ll_history->push_back(ll);
        if (iter > 0 && ll - prev_ll < cfg.rel_tol * std::max(std::abs(prev_ll), 1e-300))
            return model; // converged at the parameters this ll was computed for
        prev_ll = ll;

        std::vector<double> nk(g, 0.0), sx(static_cast<std::size_t>(g) * d, 0.0),
            sxx(static_cast<std::size_t>(g) * d, 0.0);
        for (std::size_t ci = 0; ci < nchunks; ++ci) {
            const double* base = chunk_stats.data() + ci * stat_stride;
            for (int c = 0; c < g; ++c) nk[c] += base[c];
            for (std::size_t k = 0; k < static_cast<std::size_t>(g) * d; ++k) {
                sx[k] += base[g + k];
                sxx[k] += base[g + static_cast<std::size_t>(g) * d + k];
            }
        }
        for (int c = 0; c < g; ++c) {
            weights[c] = nk[c] / static_cast<double>(n);
            if (nk[c] == 0.0) continue; // dead component keeps its parameters
            for (int k = 0; k < d; ++k) {
                const std::size_t idx = static_cast<std::size_t>(c) * d + k;
                means[idx] = sx[idx] / nk[c];
                variances[idx] = std::max(sxx[idx] / nk[c] - means[idx] * means[idx], floor[k]);
            }
        }
    }
    return VisualDictionary(std::move(weights), std::move(means), std::move(variances));
}

inline constexpr std::string_view kDictMagic = "MRHDICT1";

inline Bytes save_dict(const VisualDictionary& dict) {
    ByteWriter w;
    w.tag(kDictMagic);
    w.u32(static_cast<std::uint32_t>(dict.components()));
    w.u32(kFeatureDim);
    for (double v : dict.weights()) w.f64(v);
    for (double v : dict.means()) w.f64(v);
    for (double v : dict.variances()) w.f64(v);
    return w.take();
}

inline VisualDictionary load_dict(std::span<const std::uint8_t> bytes,
                                  const std::string& name = "dictionary") {
    ByteReader r(bytes, name);
    r.expect_tag(kDictMagic);
    const std::uint32_t g = r.u32();
    const std::uint32_t d = r.u32();
    if (g < 1) throw std::runtime_error(name + ": no components");
    if (d != kFeatureDim)
        throw std::runtime_error(name + ": dimension " + std::to_string(d) + ", expected " +
                                 std::to_string(kFeatureDim));
    const std::size_t expected = kDictMagic.size() + 8 + static_cast<std::size_t>(g) * (1 + 2 * d) * 8;
    if (bytes.size() != expected)
        throw std::runtime_error(name + ": truncated or oversized (expected " + std::to_string(expected) +
                                 " bytes, got " + std::to_string(bytes.size()) + ")");
    std::vector<double> weights(g), means(static_cast<std::size_t>(g) * d),
        variances(static_cast<std::size_t>(g) * d);
    for (auto& v : weights) v = r.f64();
    for (auto& v : means) v = r.f64();
    for (auto& v : variances) v = r.f64();
    try {
        return VisualDictionary(std::move(weights), std::move(means), std::move(variances));
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(name + ": " + e.what());
    }
}

inline VisualDictionary load_dict_file(const std::filesystem::path& path) {
    return load_dict(read_file(path), path.string());
}

inline void save_dict_file(const VisualDictionary& dict, const std::filesystem::path& path) {
    write_file_atomic(path, save_dict(dict));
}

} // namespace mrh

#endif
