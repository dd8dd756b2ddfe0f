#pragma once

// Corpus-level BLEU-1..4 and plain CIDEr over multi-reference captions.

#include <array>
#include <span>
#include <string>
#include <vector>

namespace mlcap {

struct EvalItem {
  std::vector<std::string> candidate;
  std::vector<std::vector<std::string>> references;  // at least one
};

struct MetricReport {
  std::array<double, 4> bleu{};  // bleu[n - 1] is BLEU-n
  double cider = 0.0;
  std::size_t images = 0;
  std::size_t candidate_tokens = 0;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

// Modified k-gram precisions (k = 1..n) with counts clipped by the per-image
// maximum reference count, summed over the corpus, combined by a uniform
// geometric mean and the brevity penalty. The effective reference length of
// an image is the reference length closest to the candidate's, ties going to
// the shorter one. No smoothing: any zero precision, or an empty candidate
// corpus, scores 0.
double bleu(std::span<const EvalItem> corpus, int n);

// Plain CIDEr: TF-IDF n-gram vectors for n = 1..4 with
// IDF = log(M / max(1, images whose references contain the n-gram)),
// cosine similarity averaged over references, then over n, then over images.
// No x10 scaling, length penalty, or count clipping.
double cider(std::span<const EvalItem> corpus);

MetricReport evaluate_corpus(std::span<const EvalItem> corpus);

}  // namespace mlcap
