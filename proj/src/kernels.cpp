#include "feateval/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <exception>
#include <mutex>
#include <unordered_map>
#include <unordered_set>

#include "feateval/text.hpp"

namespace feateval {
namespace {

// Exceptions must not cross an OpenMP region boundary; the first one thrown
// by any thread is kept and rethrown afterwards.
class FirstError {
 public:
  template <typename F>
  void run(F&& f) noexcept {
    try {
      f();
    } catch (...) {
      std::lock_guard lock(mu_);
      if (!error_) error_ = std::current_exception();
    }
  }
  void rethrow() const {
    if (error_) std::rethrow_exception(error_);
  }

 private:
  std::mutex mu_;
  std::exception_ptr error_;
};

std::vector<Sentence> batch_of(const Corpus& corpus, std::size_t b, std::size_t batch_size) {
  std::size_t begin = b * batch_size;
  std::size_t end = std::min(corpus.size(), begin + batch_size);
  std::vector<Sentence> out;
  out.reserve(end - begin);
  for (std::size_t id = begin; id < end; ++id) out.push_back(corpus.at(id));
  return out;
}

std::size_t batch_count(const Corpus& corpus, std::size_t batch_size) {
  return (corpus.size() + batch_size - 1) / batch_size;
}

bool ranks_before(double a_score, std::uint64_t a_id, double b_score, std::uint64_t b_id) {
  return a_score > b_score || (a_score == b_score && a_id < b_id);
}

// Bounded heap whose top is the worst retained element.
template <typename T, typename Key>
class TopK {
 public:
  TopK(std::size_t k, Key key) : k_(k), key_(key) {}

  void offer(T item) {
    if (k_ == 0) return;
    if (heap_.size() < k_) {
      heap_.push_back(std::move(item));
      std::push_heap(heap_.begin(), heap_.end(), cmp());
    } else if (before(item, heap_.front())) {
      std::pop_heap(heap_.begin(), heap_.end(), cmp());
      heap_.back() = std::move(item);
      std::push_heap(heap_.begin(), heap_.end(), cmp());
    }
  }

  std::vector<T> take_sorted() {
    std::sort(heap_.begin(), heap_.end(), [&](const T& a, const T& b) { return before(a, b); });
    return std::move(heap_);
  }

 private:
  bool before(const T& a, const T& b) const {
    auto [as, ai] = key_(a);
    auto [bs, bi] = key_(b);
    return ranks_before(as, ai, bs, bi);
  }
  auto cmp() const {
    return [this](const T& a, const T& b) { return before(a, b); };
  }

  std::size_t k_;
  Key key_;
  std::vector<T> heap_;
};

auto trace_key = [](const ActivationTrace& t) { return std::pair<double, std::uint64_t>(t.aggregate, t.sentence_id); };

template <typename T, typename Key>
std::vector<T> merge_top(std::vector<std::vector<T>>& parts, std::size_t k, Key key) {
  TopK<T, Key> merged(k, key);
  for (auto& part : parts)
    for (auto& item : part) merged.offer(std::move(item));
  return merged.take_sorted();
}

}  // namespace

std::vector<TraceAggregate> scan_aggregates(Provider& provider, const FeatureHandle& feature, const Corpus& corpus,
                                            std::size_t batch_size) {
  std::vector<TraceAggregate> out(corpus.size());
  const auto n_batches = static_cast<std::int64_t>(batch_count(corpus, batch_size));
  FirstError error;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t b = 0; b < n_batches; ++b) {
    error.run([&] {
      auto batch = batch_of(corpus, static_cast<std::size_t>(b), batch_size);
      auto traces = provider.activations(feature, batch);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        out[batch[i].id] = {traces[i].signed_max, traces[i].aggregate};
      }
    });
  }
  error.rethrow();
  return out;
}

std::vector<ActivationTrace> scan_top_activating(Provider& provider, const FeatureHandle& feature,
                                                 const Corpus& corpus, std::size_t k, std::size_t batch_size) {
  const auto n_batches = static_cast<std::int64_t>(batch_count(corpus, batch_size));
  std::vector<std::vector<ActivationTrace>> parts(static_cast<std::size_t>(omp_get_max_threads()));
  FirstError error;
#pragma omp parallel
  {
    TopK<ActivationTrace, decltype(trace_key)> local(k, trace_key);
#pragma omp for schedule(dynamic)
    for (std::int64_t b = 0; b < n_batches; ++b) {
      error.run([&] {
        auto batch = batch_of(corpus, static_cast<std::size_t>(b), batch_size);
        for (auto& t : provider.activations(feature, batch)) local.offer(std::move(t));
      });
    }
    parts[static_cast<std::size_t>(omp_get_thread_num())] = local.take_sorted();
  }
  error.rethrow();
  return merge_top(parts, k, trace_key);
}

std::vector<std::uint64_t> top_k_indices(std::span<const double> scores, std::size_t k) {
  auto key = [&scores](std::uint64_t i) { return std::pair<double, std::uint64_t>(scores[i], i); };
  std::vector<std::vector<std::uint64_t>> parts(static_cast<std::size_t>(omp_get_max_threads()));
  const auto n = static_cast<std::int64_t>(scores.size());
#pragma omp parallel
  {
    TopK<std::uint64_t, decltype(key)> local(k, key);
#pragma omp for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) local.offer(static_cast<std::uint64_t>(i));
    parts[static_cast<std::size_t>(omp_get_thread_num())] = local.take_sorted();
  }
  return merge_top(parts, k, key);
}

std::vector<std::uint64_t> document_frequency(const Corpus& corpus, std::span<const std::string> terms) {
  std::unordered_map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < terms.size(); ++i) slot.emplace(terms[i], i);
  std::vector<std::uint64_t> df(terms.size(), 0);
  const auto n = static_cast<std::int64_t>(corpus.size());
  FirstError error;
#pragma omp parallel
  {
    std::vector<std::uint64_t> local(terms.size(), 0);
    std::vector<char> seen(terms.size(), 0);
#pragma omp for schedule(static)
    for (std::int64_t id = 0; id < n; ++id) {
      error.run([&] {
        std::vector<std::size_t> hits;
        for (const auto& term : text::terms(corpus.at(static_cast<std::uint64_t>(id)).text)) {
          auto it = slot.find(term);
          if (it != slot.end() && !seen[it->second]) {
            seen[it->second] = 1;
            hits.push_back(it->second);
          }
        }
        for (auto h : hits) {
          ++local[h];
          seen[h] = 0;
        }
      });
    }
#pragma omp critical
    for (std::size_t i = 0; i < df.size(); ++i) df[i] += local[i];
  }
  error.rethrow();
  return df;
}

namespace serial {

std::vector<TraceAggregate> scan_aggregates(Provider& provider, const FeatureHandle& feature, const Corpus& corpus,
                                            std::size_t batch_size) {
  std::vector<TraceAggregate> out(corpus.size());
  for (std::size_t b = 0; b < batch_count(corpus, batch_size); ++b) {
    auto batch = batch_of(corpus, b, batch_size);
    auto traces = provider.activations(feature, batch);
    for (std::size_t i = 0; i < batch.size(); ++i) out[batch[i].id] = {traces[i].signed_max, traces[i].aggregate};
  }
  return out;
}

std::vector<ActivationTrace> scan_top_activating(Provider& provider, const FeatureHandle& feature,
                                                 const Corpus& corpus, std::size_t k, std::size_t batch_size) {
  std::vector<ActivationTrace> all;
  for (std::size_t b = 0; b < batch_count(corpus, batch_size); ++b) {
    auto batch = batch_of(corpus, b, batch_size);
    for (auto& t : provider.activations(feature, batch)) all.push_back(std::move(t));
  }
  std::sort(all.begin(), all.end(), [](const ActivationTrace& a, const ActivationTrace& b) {
    return ranks_before(a.aggregate, a.sentence_id, b.aggregate, b.sentence_id);
  });
  if (all.size() > k) all.resize(k);
  return all;
}

std::vector<std::uint64_t> top_k_indices(std::span<const double> scores, std::size_t k) {
  std::vector<std::uint64_t> idx(scores.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(),
            [&](std::uint64_t a, std::uint64_t b) { return ranks_before(scores[a], a, scores[b], b); });
  if (idx.size() > k) idx.resize(k);
  return idx;
}

std::vector<std::uint64_t> document_frequency(const Corpus& corpus, std::span<const std::string> terms) {
  std::vector<std::uint64_t> df(terms.size(), 0);
  for (std::uint64_t id = 0; id < corpus.size(); ++id) {
    auto ts = text::terms(corpus.at(id).text);
    std::unordered_set<std::string> present(ts.begin(), ts.end());
    for (std::size_t i = 0; i < terms.size(); ++i) df[i] += present.count(terms[i]);
  }
  return df;
}

}  // namespace serial
}  // namespace feateval
