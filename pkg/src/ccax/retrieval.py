"""Task-dependent embeddings, ranking, and the recall@k / median-rank protocol.

Retrieval runs in the canonical space of a fitted model.  The query side
keeps plain canonical weights while the search side is weighted by the
canonical correlations -- which directions to trust -- so the effective
projections depend on the task:

    search      images -> Sigma U'x,  captions -> V'y
    annotation  images -> U'x,        captions -> Sigma V'y

The symmetric alternative scales both sides by Sigma^alpha, and the sweep
family (Sigma^alpha U', Sigma^(1-alpha) V') interpolates between the two
asymmetric placements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cca import CcaModel
from .io import FeatureMatrix

TASKS = ("search", "annotation")


@dataclass(frozen=True)
class TaskEmbedding:
    """Effective projections applied to train-mean-centered test vectors."""

    task: str
    weighting: str
    image_proj: np.ndarray  # (k, m_x)
    text_proj: np.ndarray   # (k, m_y)
    mean_x: np.ndarray
    mean_y: np.ndarray

    def embed_images(self, x) -> np.ndarray:
        values = x.values if isinstance(x, FeatureMatrix) else np.asarray(x)
        return (values - self.mean_x) @ self.image_proj.T

    def embed_texts(self, y) -> np.ndarray:
        values = y.values if isinstance(y, FeatureMatrix) else np.asarray(y)
        return (values - self.mean_y) @ self.text_proj.T


def _sigma_power(sigma: np.ndarray, alpha: float) -> np.ndarray:
    # 0^0 = 1 so alpha = 0 is exactly the unweighted CCA baseline
    return np.power(sigma, alpha)


def make_task_embedding(model: CcaModel, task: str, weighting: str = "asymmetric",
                        alpha: float | None = None) -> TaskEmbedding:
    """Build the projections of one retrieval task.

    ``weighting`` is ``asymmetric`` (canonical correlations on the search
    side only), ``symmetric`` (Sigma^alpha on both sides, alpha >= 0), or
    ``sweep`` (Sigma^alpha on images, Sigma^(1-alpha) on captions,
    alpha in [0, 1]; the task only labels which side is queried).
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    ut, vt = model.u.T, model.v.T
    sigma = model.sigma
    if weighting == "asymmetric":
        if task == "search":
            image_proj, text_proj = sigma[:, None] * ut, vt
        else:
            image_proj, text_proj = ut, sigma[:, None] * vt
        label = "asymmetric"
    elif weighting == "symmetric":
        if alpha is None or alpha < 0:
            raise ValueError("symmetric weighting needs alpha >= 0")
        w = _sigma_power(sigma, alpha)[:, None]
        image_proj, text_proj = w * ut, w * vt
        label = f"symmetric:{alpha:g}"
    elif weighting == "sweep":
        if alpha is None or not 0.0 <= alpha <= 1.0:
            raise ValueError("sweep weighting needs alpha in [0, 1]")
        image_proj = _sigma_power(sigma, alpha)[:, None] * ut
        text_proj = _sigma_power(sigma, 1.0 - alpha)[:, None] * vt
        label = f"sweep:{alpha:g}"
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    return TaskEmbedding(task=task, weighting=label,
                         image_proj=image_proj, text_proj=text_proj,
                         mean_x=model.mean_x, mean_y=model.mean_y)


def rank(queries: np.ndarray, items: np.ndarray,
         similarity: str = "cosine") -> np.ndarray:
    """Order item indices for each query row.

    Returns an (n_queries, n_items) integer array whose rows are
    permutations: best item first.  Cosine ranks by descending inner
    product of normalized vectors, ``l2`` by ascending distance; ties break
    toward the smaller item index.
    """
    queries = np.asarray(queries, dtype=np.float64)
    items = np.asarray(items, dtype=np.float64)
    if queries.shape[1] != items.shape[1]:
        raise ValueError(
            f"query dim {queries.shape[1]} != item dim {items.shape[1]}"
        )
    if similarity == "cosine":
        qn = np.linalg.norm(queries, axis=1)
        sn = np.linalg.norm(items, axis=1)
        for name, norms in (("query", qn), ("item", sn)):
            if np.any(norms == 0):
                offender = int(np.flatnonzero(norms == 0)[0])
                raise ValueError(
                    f"zero-norm {name} vector at index {offender} under cosine"
                )
        scores = -((queries / qn[:, None]) @ (items / sn[:, None]).T)
    elif similarity == "l2":
        # expanded ||q - s||^2; the -2 q.s term carries all the ordering
        scores = (
            -2.0 * queries @ items.T
            + np.sum(items * items, axis=1)[None, :]
            + np.sum(queries * queries, axis=1)[:, None]
        )
    else:
        raise ValueError(f"unknown similarity {similarity!r}")
    return np.argsort(scores, axis=1, kind="stable")


@dataclass(frozen=True)
class EvalReport:
    """Recall percentages and median rank for one retrieval task."""

    task: str
    recalls: dict[int, float]  # k -> percent of queries hit within top k
    median_rank: float
    n_queries: int
    n_items: int

    @property
    def r1(self) -> float:
        return self.recalls[1]


def evaluate(ranked: np.ndarray, ground_truth, ks=(1, 5, 10),
             task: str = "") -> EvalReport:
    """Score a ranked list against per-query sets of correct items.

    A query is a hit at k when its best-ranked ground-truth item appears
    within the top k.  Median rank is the median of those best ranks
    (1-indexed; the median of an even count is the mean of the middle two).
    """
    ranked = np.asarray(ranked)
    n_queries, n_items = ranked.shape
    if len(ground_truth) != n_queries:
        raise ValueError(
            f"{len(ground_truth)} ground-truth sets for {n_queries} queries"
        )
    # positions[q, item] = 0-based rank of item in query q's list
    positions = np.empty_like(ranked)
    rows = np.arange(n_queries)[:, None]
    positions[rows, ranked] = np.arange(n_items)[None, :]
    lengths = np.fromiter((len(g) for g in ground_truth), dtype=np.int64,
                          count=n_queries)
    if np.any(lengths == 0):
        bad = int(np.flatnonzero(lengths == 0)[0])
        raise ValueError(f"query {bad} has no ground-truth items")
    flat = np.concatenate([np.asarray(g, dtype=np.int64)
                           for g in ground_truth])
    query_of = np.repeat(np.arange(n_queries), lengths)
    if flat.min() < 0 or flat.max() >= n_items:
        bad = int(query_of[np.flatnonzero((flat < 0) | (flat >= n_items))[0]])
        raise ValueError(
            f"query {bad}: ground-truth index out of range [0, {n_items})"
        )
    starts = np.zeros(n_queries, dtype=np.int64)
    np.cumsum(lengths[:-1], out=starts[1:])
    best_ranks = (
        np.minimum.reduceat(positions[query_of, flat], starts) + 1
    ).astype(np.float64)
    recalls = {
        int(k): 100.0 * int(np.sum(best_ranks <= k)) / n_queries for k in ks
    }
    return EvalReport(
        task=task,
        recalls=recalls,
        median_rank=float(np.median(best_ranks)),
        n_queries=n_queries,
        n_items=n_items,
    )


def pairing_to_ground_truth(pair_index: np.ndarray, n_items: int,
                            direction: str) -> list[list[int]]:
    """Ground-truth sets for either task from a caption->image pairing.

    ``search``: each caption query's single correct image.
    ``annotation``: each image query's set of captions.
    """
    pair_index = np.asarray(pair_index, dtype=np.int64)
    if direction == "search":
        return [[int(i)] for i in pair_index]
    if direction == "annotation":
        groups: list[list[int]] = [[] for _ in range(n_items)]
        for caption_row, image_row in enumerate(pair_index):
            groups[int(image_row)].append(caption_row)
        if any(not g for g in groups):
            empty = next(i for i, g in enumerate(groups) if not g)
            raise ValueError(f"image {empty} has no paired captions")
        return groups
    raise ValueError(f"unknown direction {direction!r}")


def evaluate_bidirectional(model: CcaModel, images: FeatureMatrix,
                           captions: FeatureMatrix,
                           pair_index: np.ndarray | None = None,
                           weighting: str = "asymmetric",
                           alpha: float | None = None,
                           similarity: str = "cosine",
                           ks=(1, 5, 10)) -> tuple[EvalReport, EvalReport]:
    """Run both retrieval tasks; returns (search, annotation) reports.

    ``pair_index`` maps caption rows to image rows and defaults to the
    identity (requires equally many captions and images).
    """
    if pair_index is None:
        if captions.rows != images.rows:
            raise ValueError("pair_index required when row counts differ")
        pair_index = np.arange(images.rows, dtype=np.int64)
    pair_index = np.asarray(pair_index, dtype=np.int64)
    if pair_index.shape[0] != captions.rows:
        raise ValueError("pair_index length must match caption count")
    if pair_index.min() < 0 or pair_index.max() >= images.rows:
        raise ValueError("pair_index out of image range")

    emb_search = make_task_embedding(model, "search", weighting, alpha)
    ranked = rank(emb_search.embed_texts(captions),
                  emb_search.embed_images(images), similarity)
    search = evaluate(
        ranked, pairing_to_ground_truth(pair_index, images.rows, "search"),
        ks, task="search",
    )

    emb_ann = make_task_embedding(model, "annotation", weighting, alpha)
    ranked = rank(emb_ann.embed_images(images),
                  emb_ann.embed_texts(captions), similarity)
    annotation = evaluate(
        ranked, pairing_to_ground_truth(pair_index, images.rows, "annotation"),
        ks, task="annotation",
    )
    return search, annotation


@dataclass(frozen=True)
class SweepCurve:
    """Per-alpha r@k for both tasks over one shared sweep embedding."""

    alphas: np.ndarray
    search_scores: np.ndarray
    annotation_scores: np.ndarray
    k: int


def alpha_sweep(model: CcaModel, images: FeatureMatrix,
                captions: FeatureMatrix,
                alphas, pair_index: np.ndarray | None = None,
                k: int = 10, similarity: str = "cosine") -> SweepCurve:
    """Evaluate both tasks under (Sigma^a U', Sigma^(1-a) V') for each a.

    The endpoints recover the asymmetric embeddings: a = 1 is asymmetric
    search, a = 0 is asymmetric annotation.
    """
    alphas = np.asarray(list(alphas), dtype=np.float64)
    if alphas.size == 0 or alphas.min() < 0 or alphas.max() > 1:
        raise ValueError("alpha grid must lie in [0, 1]")
    search_scores = np.empty_like(alphas)
    annotation_scores = np.empty_like(alphas)
    for i, alpha in enumerate(alphas):
        search, annotation = evaluate_bidirectional(
            model, images, captions, pair_index,
            weighting="sweep", alpha=float(alpha),
            similarity=similarity, ks=(k,),
        )
        search_scores[i] = search.recalls[k]
        annotation_scores[i] = annotation.recalls[k]
    return SweepCurve(alphas, search_scores, annotation_scores, k)


# ---------------------------------------------------------------------------
# TSV export
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return format(v, ".6g")


def reports_to_tsv(reports) -> str:
    lines = ["task\tr1\tr5\tr10\tmedr\tn_queries\tn_items"]
    for rep in reports:
        lines.append(
            f"{rep.task}\t{_fmt(rep.recalls[1])}\t{_fmt(rep.recalls[5])}\t"
            f"{_fmt(rep.recalls[10])}\t{_fmt(rep.median_rank)}\t"
            f"{rep.n_queries}\t{rep.n_items}"
        )
    return "\n".join(lines) + "\n"


def sweep_to_tsv(curve: SweepCurve) -> str:
    lines = [f"alpha\tr{curve.k}_search\tr{curve.k}_annotation"]
    for alpha, s, a in zip(curve.alphas, curve.search_scores,
                           curve.annotation_scores):
        lines.append(f"{_fmt(alpha)}\t{_fmt(s)}\t{_fmt(a)}")
    return "\n".join(lines) + "\n"
