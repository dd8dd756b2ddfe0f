#include "mlcap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <unordered_map>

#include "mlcap/errors.hpp"

namespace mlcap {
namespace {

constexpr int kMaxOrder = 4;

// n-gram key: tokens joined by a unit separator, which never occurs inside a
// whitespace-delimited token.
using NgramCounts = std::map<std::string, int>;

NgramCounts count_ngrams(const std::vector<std::string>& tokens, int n) {
  NgramCounts counts;
  const auto len = tokens.size();
  const auto order = static_cast<std::size_t>(n);
  if (len < order) return counts;
  for (std::size_t i = 0; i + order <= len; ++i) {
    std::string key = tokens[i];
    for (std::size_t j = 1; j < order; ++j) {
      key += '\x1f';
      key += tokens[i + j];
    }
    ++counts[key];
  }
  return counts;
}

void check_corpus(std::span<const EvalItem> corpus) {
  if (corpus.empty()) throw ContractError("cannot score an empty corpus");
  for (const auto& item : corpus) {
    if (item.references.empty()) {
      throw ContractError("every image needs at least one reference caption");
    }
  }
}

// Order-independent sum: adding sorted values makes the result independent of
// the order images or references were supplied in.
double sorted_sum(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double total = 0.0;
  for (double v : values) total += v;
  return total;
}

std::size_t closest_reference_length(const EvalItem& item) {
  const std::size_t c = item.candidate.size();
  std::size_t best = item.references.front().size();
  for (const auto& ref : item.references) {
    const std::size_t r = ref.size();
    const auto dist = [c](std::size_t x) { return x > c ? x - c : c - x; };
    if (dist(r) < dist(best) || (dist(r) == dist(best) && r < best)) best = r;
  }
  return best;
}

}  // namespace

double bleu(std::span<const EvalItem> corpus, int n) {
  if (n < 1 || n > kMaxOrder) throw ContractError("BLEU order must be in 1..4");
  check_corpus(corpus);

  std::size_t candidate_len = 0, reference_len = 0;
  for (const auto& item : corpus) {
    candidate_len += item.candidate.size();
    reference_len += closest_reference_length(item);
  }
  if (candidate_len == 0) return 0.0;

  double log_precision = 0.0;
  for (int k = 1; k <= n; ++k) {
    long long matched = 0, total = 0;
    for (const auto& item : corpus) {
      const NgramCounts cand = count_ngrams(item.candidate, k);
      std::unordered_map<std::string, int> max_ref;
      for (const auto& ref : item.references) {
        for (const auto& [gram, count] : count_ngrams(ref, k)) {
          auto& slot = max_ref[gram];
          slot = std::max(slot, count);
        }
      }
      for (const auto& [gram, count] : cand) {
        total += count;
        const auto it = max_ref.find(gram);
        if (it != max_ref.end()) matched += std::min(count, it->second);
      }
    }
    if (matched == 0 || total == 0) return 0.0;
    log_precision += std::log(static_cast<double>(matched) / static_cast<double>(total));
  }
  const double brevity =
      candidate_len >= reference_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(reference_len) / static_cast<double>(candidate_len));
  return brevity * std::exp(log_precision / n);
}

double cider(std::span<const EvalItem> corpus) {
  check_corpus(corpus);
  const double images = static_cast<double>(corpus.size());

  // per_image[i][n-1] accumulates CIDEr_n for image i.
  std::vector<std::array<double, kMaxOrder>> per_image(corpus.size());
  for (int n = 1; n <= kMaxOrder; ++n) {
    std::vector<NgramCounts> cand_counts(corpus.size());
    std::vector<std::vector<NgramCounts>> ref_counts(corpus.size());
    std::unordered_map<std::string, int> doc_freq;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      cand_counts[i] = count_ngrams(corpus[i].candidate, n);
      std::map<std::string, bool> present;
      for (const auto& ref : corpus[i].references) {
        ref_counts[i].push_back(count_ngrams(ref, n));
        for (const auto& entry : ref_counts[i].back()) present[entry.first] = true;
      }
      for (const auto& entry : present) ++doc_freq[entry.first];
    }
    const auto idf = [&](const std::string& gram) {
      const auto it = doc_freq.find(gram);
      const int df = it == doc_freq.end() ? 0 : it->second;
      return std::log(images / static_cast<double>(std::max(1, df)));
    };
    const auto squared_norm = [&](const NgramCounts& counts) {
      double sq = 0.0;
      for (const auto& [gram, tf] : counts) {
        const double w = tf * idf(gram);
        sq += w * w;
      }
      return sq;
    };

    for (std::size_t i = 0; i < corpus.size(); ++i) {
      const NgramCounts& cand = cand_counts[i];
      const double cand_sq = squared_norm(cand);
      std::vector<double> sims;
      for (const NgramCounts& ref : ref_counts[i]) {
        const double ref_sq = squared_norm(ref);
        if (cand_sq == 0.0 || ref_sq == 0.0) {
          sims.push_back(0.0);
          continue;
        }
        double dot = 0.0;
        for (const auto& [gram, tf] : cand) {
          const auto it = ref.find(gram);
          if (it == ref.end()) continue;
          const double w = idf(gram);
          dot += (tf * w) * (it->second * w);
        }
        // Identical vectors give exactly 1: sqrt(fl(x * x)) == x.
        sims.push_back(std::min(1.0, dot / std::sqrt(cand_sq * ref_sq)));
      }
      per_image[i][static_cast<std::size_t>(n - 1)] =
          sorted_sum(std::move(sims)) / static_cast<double>(ref_counts[i].size());
    }
  }

  std::vector<double> scores;
  scores.reserve(corpus.size());
  for (const auto& by_order : per_image) {
    double s = 0.0;
    for (double v : by_order) s += v;
    scores.push_back(s / kMaxOrder);
  }
  return sorted_sum(std::move(scores)) / images;
}

MetricReport evaluate_corpus(std::span<const EvalItem> corpus) {
  MetricReport report;
  for (int n = 1; n <= kMaxOrder; ++n) report.bleu[static_cast<std::size_t>(n - 1)] = bleu(corpus, n);
  report.cider = cider(corpus);
  report.images = corpus.size();
  for (const auto& item : corpus) report.candidate_tokens += item.candidate.size();
  return report;
}

}  // namespace mlcap
