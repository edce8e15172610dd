"""Hierarchical kernel sentence embedding on a toy vocabulary.

Shows how the two random-feature layers approximate the exact kernel
between bags of word vectors, how fast the approximation tightens with
feature count, and what the sufficient-dimension bounds prescribe.
"""

import numpy as np

from ccax import (
    EmbeddingTable,
    bandwidth_heuristic,
    build_map,
    dimension_bound,
    embed_sentence,
    exact_kernel,
    word_feature,
)

rng = np.random.default_rng(0)
d = 12
vocab = tuple(f"word{i:02d}" for i in range(60))
table = EmbeddingTable(vocab, rng.standard_normal((60, d)))

print("=== bandwidth from the median pairwise distance ===")
gamma = bandwidth_heuristic(table, sample_size=2000, seed=0)
print(f"gamma = 1/median(distance)^2 = {gamma:.4f}\n")

eta = 0.01  # sentence-level bandwidth preset

print("=== word-level feature map vs the Gaussian kernel ===")
a, b = table.vector("word03"), table.vector("word41")
exact = np.exp(-0.5 * gamma * np.sum((a - b) ** 2))
for m in (128, 512, 2048, 8192):
    fmap = build_map("rbf", "lin", gamma, eta, m, 0, d, seed=1)
    approx = word_feature(fmap, a) @ word_feature(fmap, b)
    print(f"m = {m:>5}: <phi(a), phi(b)> = {approx:.4f} "
          f"(exact {exact:.4f}, err {abs(approx - exact):.4f})")
print()

print("=== sentence level: two stacked maps vs the exact kernel ===")
fmap = build_map("rbf", "rbf", gamma, eta, 2048, 4096, d, seed=2)
sentences = [
    [table.vector(t) for t in ("word01", "word02", "word03")],
    [table.vector(t) for t in ("word01", "word02", "word04")],
    [table.vector(t) for t in ("word50", "word51")],
]
for i in range(len(sentences)):
    for j in range(i, len(sentences)):
        approx = embed_sentence(fmap, sentences[i]) @ embed_sentence(
            fmap, sentences[j])
        exact = exact_kernel(sentences[i], sentences[j], gamma, eta)
        print(f"K(s{i}, s{j}): approx {approx:.4f}, exact {exact:.4f}")
print()

print("=== the lin,lin variant is exactly the mean word vector ===")
lin = build_map("lin", "lin", gamma, eta, 0, 0, d, seed=0)
sent = sentences[0]
print("max |embed - mean| =",
      np.abs(embed_sentence(lin, sent) - np.mean(sent, axis=0)).max())
print()

print("=== sufficient feature counts from the union bound ===")
for vocab_size, max_len in ((10**4, 10), (2 * 10**4, 20)):
    m_word, m_sent = dimension_bound(vocab_size, max_len,
                                     delta=0.1, epsilon=0.01)
    print(f"|A|={vocab_size:>6}, s={max_len:>2}: "
          f"word layer >= {m_word}, sentence layer >= {m_sent}")
