"""Hierarchical kernel sentence embedding via two stacked random feature maps.

A sentence is treated as a bag of word vectors.  The word layer maps each
vector through random Fourier features approximating a Gaussian kernel
exp(-gamma/2 ||a-b||^2) (or passes it through unchanged, the ``lin``
variant); mean pooling the word features gives an empirical kernel mean
embedding; the sentence layer applies a second feature map with bandwidth
eta (or none).  Inner products of the resulting vectors approximate a
kernel between the two bags of words.  With both layers linear this is
exactly the mean word vector.

:func:`exact_kernel` computes the kernel the maps approximate, by the
double sum over token pairs -- the oracle every approximation here is
tested against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .io import (
    DataFormatError,
    EmbeddingTable,
    FeatureMatrix,
    ModelArchive,
    SentenceCorpus,
    format_manifest_value,
)

VARIANTS = ("lin", "rbf")

# labels for the per-layer RNG sub-streams, so the word draw never
# perturbs the sentence draw
_WORD_STREAM = 11
_SENT_STREAM = 12


@dataclass(frozen=True)
class HkseMap:
    """Frozen two-layer random feature map.

    ``rbf`` layers carry a projection matrix (rows drawn from a zero-mean
    Gaussian with covariance bandwidth * I) and phases uniform on
    [0, 2pi); ``lin`` layers carry none and act as the identity.
    Embedding the same sentence twice yields bitwise-identical vectors.
    """

    word_variant: str
    sent_variant: str
    gamma: float
    eta: float
    input_dim: int                 # word-vector dimension d
    w_word: np.ndarray | None      # (n_word_features, d)
    b_word: np.ndarray | None
    w_sent: np.ndarray | None      # (n_sent_features, pooled dim)
    b_sent: np.ndarray | None
    seed: int
    stream: int = 0

    @property
    def pooled_dim(self) -> int:
        if self.word_variant == "rbf":
            return self.w_word.shape[0]
        return self.input_dim

    @property
    def output_dim(self) -> int:
        if self.sent_variant == "rbf":
            return self.w_sent.shape[0]
        return self.pooled_dim


def build_map(word_variant: str, sent_variant: str, gamma: float, eta: float,
              n_word_features: int, n_sent_features: int, input_dim: int,
              seed: int, stream: int = 0) -> HkseMap:
    """Draw and freeze the random layers; deterministic per (seed, stream)."""
    for variant in (word_variant, sent_variant):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
    if input_dim < 1:
        raise ValueError("input_dim must be >= 1")
    w_word = b_word = w_sent = b_sent = None
    if word_variant == "rbf":
        if gamma <= 0:
            raise ValueError("rbf word layer needs gamma > 0")
        if n_word_features < 1:
            raise ValueError("rbf word layer needs n_word_features >= 1")
        rng = np.random.default_rng([seed, stream, _WORD_STREAM])
        w_word = rng.normal(0.0, math.sqrt(gamma),
                            size=(n_word_features, input_dim))
        b_word = rng.uniform(0.0, 2.0 * math.pi, size=n_word_features)
        w_word.flags.writeable = False
        b_word.flags.writeable = False
    if sent_variant == "rbf":
        if eta <= 0:
            raise ValueError("rbf sentence layer needs eta > 0")
        if n_sent_features < 1:
            raise ValueError("rbf sentence layer needs n_sent_features >= 1")
        pooled = n_word_features if word_variant == "rbf" else input_dim
        rng = np.random.default_rng([seed, stream, _SENT_STREAM])
        w_sent = rng.normal(0.0, math.sqrt(eta), size=(n_sent_features, pooled))
        b_sent = rng.uniform(0.0, 2.0 * math.pi, size=n_sent_features)
        w_sent.flags.writeable = False
        b_sent.flags.writeable = False
    return HkseMap(word_variant=word_variant, sent_variant=sent_variant,
                   gamma=gamma, eta=eta, input_dim=input_dim,
                   w_word=w_word, b_word=b_word,
                   w_sent=w_sent, b_sent=b_sent,
                   seed=seed, stream=stream)


def word_feature(hkse_map: HkseMap, a: np.ndarray) -> np.ndarray:
    """One word vector through the word layer.

    rbf: sqrt(2/m) * cos(W a + b), whose inner products concentrate on the
    Gaussian kernel.  lin: the vector itself.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (hkse_map.input_dim,):
        raise ValueError(
            f"word vector has shape {a.shape}, expected ({hkse_map.input_dim},)"
        )
    if hkse_map.word_variant == "lin":
        return a
    m = hkse_map.w_word.shape[0]
    return math.sqrt(2.0 / m) * np.cos(hkse_map.w_word @ a + hkse_map.b_word)


def _sent_feature(hkse_map: HkseMap, pooled: np.ndarray) -> np.ndarray:
    if hkse_map.sent_variant == "lin":
        return pooled
    m = hkse_map.w_sent.shape[0]
    return math.sqrt(2.0 / m) * np.cos(hkse_map.w_sent @ pooled + hkse_map.b_sent)


def embed_sentence(hkse_map: HkseMap, token_vectors) -> np.ndarray:
    """Mean-pool word features, then apply the sentence layer.

    ``token_vectors`` is a sequence of word vectors (repeats contribute
    repeatedly; order never matters).
    """
    features = [word_feature(hkse_map, a) for a in token_vectors]
    if not features:
        raise ValueError("cannot embed an empty sentence")
    pooled = np.mean(features, axis=0)
    return _sent_feature(hkse_map, pooled)


def exact_kernel(s1, s2, gamma: float, eta: float,
                 word_variant: str = "rbf", sent_variant: str = "rbf") -> float:
    """The kernel the feature maps approximate, by brute-force double sums.

    With word kernel k (Gaussian for rbf, dot product for lin) and token
    bags {a_i}, {b_j}:

        delta = 2/(n1 n2) sum k(a_i, b_j) - 1/n1^2 sum k(a_i, a_j)
                - 1/n2^2 sum k(b_i, b_j)

    (= -||mu_1 - mu_2||^2 between the kernel mean embeddings).  The rbf
    sentence layer returns exp(eta * delta / 2); the linear one returns the
    plain inner product of the mean embeddings.

    For lin words + rbf sentences this is the Gaussian product-kernel
    similarity of two sentences up to its constant normalization factor,
    which is dropped: a global positive scale cannot change any cosine or
    nearest-neighbor ranking.
    """
    a = np.atleast_2d(np.asarray(s1, dtype=np.float64))
    b = np.atleast_2d(np.asarray(s2, dtype=np.float64))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("cannot compare an empty sentence")
    # canonical argument order: both call directions sum the same floats
    # in the same order, so K(s1, s2) == K(s2, s1) bitwise
    if (b.shape, b.tobytes()) < (a.shape, a.tobytes()):
        a, b = b, a

    def gram(lhs, rhs):
        if word_variant == "rbf":
            sq = (
                np.sum(lhs * lhs, axis=1)[:, None]
                + np.sum(rhs * rhs, axis=1)[None, :]
                - 2.0 * lhs @ rhs.T
            )
            return np.exp(-0.5 * gamma * sq)
        return lhs @ rhs.T

    cross = float(np.mean(gram(a, b)))
    if sent_variant == "lin":
        return cross
    delta = 2.0 * cross - float(np.mean(gram(a, a))) - float(np.mean(gram(b, b)))
    return float(np.exp(0.5 * eta * delta))


def bandwidth_heuristic(table: EmbeddingTable, sample_size: int = 2000,
                        seed: int = 0) -> float:
    """gamma = 1 / median(pairwise distance)^2 over a word sample.

    The median of an even-length list is its lower middle element.  With
    ``sample_size >= vocab_size`` the whole vocabulary is used and the seed
    is irrelevant.
    """
    if table.vocab_size < 2:
        raise ValueError("need at least 2 words in the table")
    if sample_size < 2:
        raise ValueError("need a sample of at least 2 words")
    if sample_size >= table.vocab_size:
        sample = table.vectors
    else:
        rng = np.random.default_rng(seed)
        rows = rng.choice(table.vocab_size, size=sample_size, replace=False)
        sample = table.vectors[np.sort(rows)]
    sq = (
        np.sum(sample * sample, axis=1)[:, None]
        + np.sum(sample * sample, axis=1)[None, :]
        - 2.0 * sample @ sample.T
    )
    iu = np.triu_indices(sample.shape[0], k=1)
    dists = np.sqrt(np.maximum(sq[iu], 0.0))
    dists.sort()
    median = dists[(dists.shape[0] - 1) // 2]
    if median == 0.0:
        raise ValueError("all sampled pairwise distances are zero")
    return float(1.0 / median**2)


def dimension_bound(vocab_size: int, max_sentence_len: int,
                    delta: float, epsilon: float) -> tuple[int, int]:
    """Feature counts sufficient for delta-accurate kernel estimates.

    Word layer: ceil(log(|A|^2 / eps) / (2 delta^2)); sentence layer the
    same with |A|^(2s).  Both computed in log space (|A|^(2s) overflows
    floats quickly) with natural logs, clamped to at least 1.
    """
    if vocab_size < 1 or max_sentence_len < 1:
        raise ValueError("vocab_size and max_sentence_len must be >= 1")
    if delta <= 0 or epsilon <= 0:
        raise ValueError("delta and epsilon must be > 0")
    log_a = math.log(vocab_size)
    m_word = (2.0 * log_a - math.log(epsilon)) / (2.0 * delta**2)
    m_sent = (2.0 * max_sentence_len * log_a - math.log(epsilon)) / (2.0 * delta**2)
    return max(1, math.ceil(m_word)), max(1, math.ceil(m_sent))


def embed_corpus(maps, corpus: SentenceCorpus,
                 table: EmbeddingTable) -> FeatureMatrix:
    """One embedded row per sentence; several maps concatenate column-wise.

    Word features are cached per vocabulary token, so each row is
    bitwise-identical to calling :func:`embed_sentence` on its tokens.
    """
    if isinstance(maps, HkseMap):
        maps = [maps]
    if not maps:
        raise ValueError("need at least one map")
    blocks = []
    for hkse_map in maps:
        if hkse_map.input_dim != table.dim:
            raise ValueError(
                f"map expects {hkse_map.input_dim}-dim words, table has {table.dim}"
            )
        cache: dict[str, np.ndarray] = {}
        rows = np.empty((len(corpus), hkse_map.output_dim))
        for i, sentence in enumerate(corpus.sentences):
            features = []
            for token in sentence:
                if token not in cache:
                    if token not in table:
                        raise DataFormatError(f"token {token!r} not in table")
                    cache[token] = word_feature(hkse_map, table.vector(token))
                features.append(cache[token])
            pooled = np.mean(features, axis=0)
            rows[i] = _sent_feature(hkse_map, pooled)
        blocks.append(rows)
    return FeatureMatrix(np.hstack(blocks) if len(blocks) > 1 else blocks[0])


# ---------------------------------------------------------------------------
# Archive round trip
# ---------------------------------------------------------------------------

def maps_to_archive(maps) -> ModelArchive:
    """Serialize one map (pinned blob names) or a concatenation of maps."""
    if isinstance(maps, HkseMap):
        maps = [maps]
    manifest: dict[str, str] = {"kind": "hkse", "n_maps": str(len(maps))}
    blobs: dict[str, FeatureMatrix] = {}
    for idx, m in enumerate(maps):
        suffix = "" if idx == 0 else f"_{idx}"
        manifest.update({
            f"word_variant{suffix}": m.word_variant,
            f"sent_variant{suffix}": m.sent_variant,
            f"gamma{suffix}": format_manifest_value(m.gamma),
            f"eta{suffix}": format_manifest_value(m.eta),
            f"d{suffix}": str(m.input_dim),
            f"m{suffix}": str(m.w_word.shape[0] if m.w_word is not None else 0),
            f"m_prime{suffix}": str(m.w_sent.shape[0] if m.w_sent is not None else 0),
            f"seed{suffix}": str(m.seed),
            f"stream{suffix}": str(m.stream),
        })
        if m.w_word is not None:
            blobs[f"W_WORD{suffix}"] = FeatureMatrix(m.w_word)
            blobs[f"B_WORD{suffix}"] = FeatureMatrix(m.b_word[None, :])
        if m.w_sent is not None:
            blobs[f"W_SENT{suffix}"] = FeatureMatrix(m.w_sent)
            blobs[f"B_SENT{suffix}"] = FeatureMatrix(m.b_sent[None, :])
    return ModelArchive(manifest, blobs)


def maps_from_archive(archive: ModelArchive) -> list[HkseMap]:
    man = archive.manifest
    n_maps = int(man.get("n_maps", "1"))
    out = []
    for idx in range(n_maps):
        suffix = "" if idx == 0 else f"_{idx}"
        w_word = b_word = w_sent = b_sent = None
        if f"W_WORD{suffix}" in archive.blobs:
            w_word = archive.blobs[f"W_WORD{suffix}"].values
            b_word = archive.blobs[f"B_WORD{suffix}"].values[0]
            if w_word.shape != (int(man[f"m{suffix}"]), int(man[f"d{suffix}"])):
                raise ValueError("manifest dimensions disagree with W_WORD blob")
        if f"W_SENT{suffix}" in archive.blobs:
            w_sent = archive.blobs[f"W_SENT{suffix}"].values
            b_sent = archive.blobs[f"B_SENT{suffix}"].values[0]
            if w_sent.shape[0] != int(man[f"m_prime{suffix}"]):
                raise ValueError("manifest dimensions disagree with W_SENT blob")
        out.append(HkseMap(
            word_variant=man[f"word_variant{suffix}"],
            sent_variant=man[f"sent_variant{suffix}"],
            gamma=float(man[f"gamma{suffix}"]),
            eta=float(man[f"eta{suffix}"]),
            input_dim=int(man[f"d{suffix}"]),
            w_word=w_word, b_word=b_word, w_sent=w_sent, b_sent=b_sent,
            seed=int(man[f"seed{suffix}"]),
            stream=int(man[f"stream{suffix}"]),
        ))
    return out
