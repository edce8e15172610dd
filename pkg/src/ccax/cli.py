"""The ``ccax`` command line: generate, embed, fit, select, evaluate.

Subcommands: ``synth``, ``embed``, ``fit``, ``path``, ``timing``, ``eval``,
``sweep``, ``inspect``.  Exit codes: 0 success, 1 runtime or data error,
2 usage error.  An optional ``--config`` key=value file supplies defaults;
flags given on the command line win.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import cca, hkse, io, retrieval, selection, synthetic

_REG_KINDS = ("none", "tikhonov", "tsvd", "guided-tsvd")


class _OnceAction(argparse.Action):
    """Reject a repeated flag instead of silently keeping the last value."""

    def __call__(self, parser, namespace, values, option_string=None):
        if getattr(namespace, self.dest + "_seen", False):
            parser.error(f"{option_string} given more than once")
        setattr(namespace, self.dest + "_seen", True)
        setattr(namespace, self.dest, values)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ccax",
        description="Regularized CCA retrieval pipeline: generate or ingest "
                    "features, embed sentences, fit and select models, "
                    "evaluate bidirectional retrieval.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", help="key=value file of flag defaults")

    p = sub.add_parser("synth", help="generate seeded latent-factor data")
    add_config(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-train", type=int, default=2000)
    p.add_argument("--n-val", type=int, default=500)
    p.add_argument("--n-test", type=int, default=500)
    p.add_argument("--latent", type=int, default=20)
    p.add_argument("--mx", type=int, default=128)
    p.add_argument("--my", type=int, default=64)
    p.add_argument("--noise-x", type=float, default=0.25)
    p.add_argument("--noise-y", type=float, default=0.25)
    p.add_argument("--captions", type=int, default=1,
                   help="captions per image (default 1)")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("embed", help="embed a sentence corpus")
    add_config(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--vectors", required=True, help="word-embedding text file")
    p.add_argument("--pairing",
                   help="caption->image row file, validated against the corpus")
    p.add_argument("--variant", default="lin,lin",
                   help="word,sentence layer kinds, e.g. rbf,rbf")
    p.add_argument("--concat", help="second map variant to concatenate")
    p.add_argument("--m", type=int, default=2000,
                   help="word-layer feature count")
    p.add_argument("--mprime", type=int, default=2000,
                   help="sentence-layer feature count")
    p.add_argument("--gamma", default="median",
                   help="word bandwidth, a float or 'median'")
    p.add_argument("--eta", type=float, default=0.01)
    p.add_argument("--gamma-sample", type=int, default=2000,
                   help="words sampled by the median heuristic")
    p.add_argument("--oov", choices=("skip", "error"), default="skip")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output FMAT1 path")
    p.add_argument("--map-out", help="save the feature map archive here")
    p.add_argument("--map", help="reuse a saved feature map archive")

    p = sub.add_parser("fit", help="fit a CCA model")
    add_config(p)
    p.add_argument("--x", required=True, help="training view X (FMAT1)")
    p.add_argument("--y", required=True, help="training view Y (FMAT1)")
    p.add_argument("--reg", action=_OnceAction, choices=_REG_KINDS,
                   default="none")
    p.add_argument("--gamma-x", type=float, default=0.0)
    p.add_argument("--gamma-y", type=float, default=0.0)
    p.add_argument("--kx", type=int)
    p.add_argument("--ky", type=int)
    p.add_argument("--grid", help="grid size for guided-tsvd, e.g. 20x20")
    p.add_argument("--grid-x", help="comma-separated k_x grid")
    p.add_argument("--grid-y", help="comma-separated k_y grid")
    p.add_argument("--val-x", help="validation images (FMAT1)")
    p.add_argument("--val-y", help="validation captions (FMAT1)")
    p.add_argument("--val-pairing", help="validation caption->image rows")
    p.add_argument("--metric", choices=selection.METRICS, default="r1")
    p.add_argument("--threads", type=int, default=0,
                   help="path workers; 0 = all cores")
    p.add_argument("--path-out", help="write the T-SVD path TSV here")
    p.add_argument("--out", required=True, help="model archive path")

    p = sub.add_parser("path", help="regularization-path grid search")
    add_config(p)
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--val-x", required=True)
    p.add_argument("--val-y", required=True)
    p.add_argument("--val-pairing")
    p.add_argument("--reg", action=_OnceAction,
                   choices=("tikhonov", "tsvd"), default="tsvd")
    p.add_argument("--grid", default="20x20")
    p.add_argument("--grid-x")
    p.add_argument("--grid-y")
    p.add_argument("--metric", choices=selection.METRICS, default="r1")
    p.add_argument("--threads", type=int, default=0)
    p.add_argument("--out", required=True, help="path TSV")

    p = sub.add_parser("timing", help="time the T-SVD vs Tikhonov paths")
    add_config(p)
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--val-x", required=True)
    p.add_argument("--val-y", required=True)
    p.add_argument("--val-pairing")
    p.add_argument("--grid", default="20x20")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out", required=True, help="timing TSV")

    p = sub.add_parser("eval", help="evaluate bidirectional retrieval")
    add_config(p)
    p.add_argument("--model", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--captions", required=True)
    p.add_argument("--pairing")
    p.add_argument("--weighting", default="asymmetric",
                   help="asymmetric | symmetric:<alpha>")
    p.add_argument("--similarity", choices=("cosine", "l2"), default="cosine")
    p.add_argument("--blocks", type=int, default=1,
                   help="evaluate on N disjoint image blocks and average")
    p.add_argument("--out", required=True, help="report TSV")

    p = sub.add_parser("sweep", help="alpha sweep of the weighting exponent")
    add_config(p)
    p.add_argument("--model", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--captions", required=True)
    p.add_argument("--pairing")
    p.add_argument("--alphas",
                   default="0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1",
                   help="comma-separated grid on [0, 1]")
    p.add_argument("--k", type=int, default=10, help="recall cutoff")
    p.add_argument("--out", required=True, help="sweep TSV")

    p = sub.add_parser("inspect", help="print a model archive manifest")
    add_config(p)
    p.add_argument("--model", required=True)

    return parser


def _apply_config(argv: list[str]) -> list[str]:
    """Prepend flags from a --config file; explicit flags still win."""
    config_path = None
    for i, arg in enumerate(argv):
        if arg == "--config" and i + 1 < len(argv):
            config_path = argv[i + 1]
        elif arg.startswith("--config="):
            config_path = arg.split("=", 1)[1]
    if config_path is None:
        return argv
    injected: list[str] = []
    with open(config_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise io.DataFormatError(
                    f"{config_path}:{lineno}: expected key=value"
                )
            key, value = line.split("=", 1)
            flag = "--" + key.strip().replace("_", "-")
            given = any(
                a == flag or a.startswith(flag + "=") for a in argv
            )
            if not given:
                injected.extend([flag, value.strip()])
    # keep the subcommand first, inject after it
    return argv[:1] + injected + argv[1:]


def _parse_grid(args, ints: bool):
    """--grid-x/--grid-y lists win over a square --grid size."""

    def parse_list(text):
        kind = int if ints else float
        return [kind(v) for v in text.split(",") if v.strip()]

    grid_x = parse_list(args.grid_x) if getattr(args, "grid_x", None) else None
    grid_y = parse_list(args.grid_y) if getattr(args, "grid_y", None) else None
    count = None
    if getattr(args, "grid", None):
        parts = args.grid.lower().split("x")
        if len(parts) != 2:
            raise ValueError(f"--grid must look like 20x20, got {args.grid!r}")
        count = (int(parts[0]), int(parts[1]))
    return grid_x, grid_y, count


def _workers(args) -> int | None:
    threads = getattr(args, "threads", 0)
    return None if threads == 0 else threads


def _load_val(args):
    val_images = io.load_matrix(args.val_x)
    val_captions = io.load_matrix(args.val_y)
    pair_index = (io.load_pairing(args.val_pairing)
                  if args.val_pairing else None)
    return val_images, val_captions, pair_index


def _cmd_synth(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = synthetic.LatentModelConfig(
        n_train=args.n_train, n_val=args.n_val, n_test=args.n_test,
        latent_dim=args.latent, image_dim=args.mx, text_dim=args.my,
        noise_x=args.noise_x, noise_y=args.noise_y, seed=args.seed,
    )
    data = synthetic.generate_caption_like(cfg, args.captions)
    io.save_matrix(data.images, out / "images.fmat")
    io.save_matrix(data.captions, out / "captions.fmat")
    io.save_pairing(data.pair_index, out / "pairing.txt")
    io.save_split_file(data.image_splits, out / "splits.tsv")
    train_x, train_y = data.paired_training_views()
    io.save_matrix(train_x, out / "train_x.fmat")
    io.save_matrix(train_y, out / "train_y.fmat")
    for split in ("val", "test"):
        images, captions, pairs = data.split_views(split)
        io.save_matrix(images, out / f"{split}_images.fmat")
        io.save_matrix(captions, out / f"{split}_captions.fmat")
        io.save_pairing(pairs, out / f"{split}_pairing.txt")
    print(f"wrote synthetic data under {out}")
    return 0


def _parse_variant(text: str) -> tuple[str, str]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2 or any(p not in hkse.VARIANTS for p in parts):
        raise ValueError(f"variant must be like lin,rbf; got {text!r}")
    return parts[0], parts[1]


def _cmd_embed(args) -> int:
    table = io.load_embedding_table(args.vectors)
    corpus = io.load_corpus(args.corpus, table, oov_policy=args.oov,
                            pairing_path=args.pairing)
    if args.map:
        maps = hkse.maps_from_archive(io.load_archive(args.map))
    else:
        if args.gamma == "median":
            gamma = hkse.bandwidth_heuristic(table, args.gamma_sample,
                                             seed=args.seed)
        else:
            gamma = float(args.gamma)
        variants = [_parse_variant(args.variant)]
        if args.concat:
            variants.append(_parse_variant(args.concat))
        maps = [
            hkse.build_map(word, sent, gamma, args.eta, args.m, args.mprime,
                           table.dim, args.seed, stream=idx)
            for idx, (word, sent) in enumerate(variants)
        ]
    embedded = hkse.embed_corpus(maps, corpus, table)
    io.save_matrix(embedded, args.out)
    if args.map_out:
        io.save_archive(hkse.maps_to_archive(maps), args.map_out)
    print(f"embedded {embedded.rows} sentences into {embedded.cols} dims "
          f"-> {args.out}")
    return 0


def _guided_out_paths(out: str) -> tuple[Path, Path]:
    base = Path(out)
    return (base.with_name(base.stem + "_search" + base.suffix),
            base.with_name(base.stem + "_annotation" + base.suffix))


def _save_guided(result, args) -> None:
    sel = result.tsvd_selection

    def archive_for(model, spec):
        # gamma_x / gamma_y in the manifest already carry the mapped
        # penalties; the winning ranks are recorded alongside them
        arc = cca.model_to_archive(model)
        arc.manifest["guided_k_x"] = str(spec.k_x)
        arc.manifest["guided_k_y"] = str(spec.k_y)
        arc.manifest["metric"] = sel.metric
        return arc

    if sel.metric == "mean-r1":
        io.save_archive(archive_for(result.search_model, sel.best_search),
                        args.out)
        print(f"wrote {args.out}")
        return
    search_path, annotation_path = _guided_out_paths(args.out)
    io.save_archive(archive_for(result.search_model, sel.best_search),
                    search_path)
    io.save_archive(archive_for(result.annotation_model, sel.best_annotation),
                    annotation_path)
    print(f"wrote {search_path} and {annotation_path}")


def _cmd_fit(args) -> int:
    x = io.load_matrix(args.x)
    y = io.load_matrix(args.y)
    if args.reg == "none":
        model = cca.cca_fit(x, y)
    elif args.reg == "tikhonov":
        model = cca.cca_fit_tikhonov(x, y, args.gamma_x, args.gamma_y)
    elif args.reg == "tsvd":
        if args.kx is None or args.ky is None:
            raise ValueError("--reg tsvd needs --kx and --ky")
        model = cca.cca_fit_tsvd(x, y, args.kx, args.ky)
    else:  # guided-tsvd
        if not (args.val_x and args.val_y):
            raise ValueError("--reg guided-tsvd needs --val-x and --val-y")
        val_images, val_captions, pair_index = _load_val(args)
        grid_x, grid_y, count = _parse_grid(args, ints=True)
        if count is not None and grid_x is None:
            xc, _ = cca.center_columns(x)
            yc, _ = cca.center_columns(y)
            grid_x = selection.default_rank_grid(cca.thin_svd(xc).rank,
                                                 count[0])
            grid_y = selection.default_rank_grid(cca.thin_svd(yc).rank,
                                                 count[1])
        result = selection.guided_tikhonov(
            x, y, val_images, val_captions, grid_x, grid_y,
            metric=args.metric, pair_index=pair_index,
            workers=_workers(args),
        )
        if args.path_out:
            with open(args.path_out, "w", encoding="utf-8") as fh:
                fh.write(selection.grid_to_tsv(result.tsvd_grid))
        _save_guided(result, args)
        return 0
    io.save_archive(cca.model_to_archive(model), args.out)
    print(f"fit {model.reg.kind} model: k={model.k}, "
          f"top correlation {model.sigma[0]:.4f} -> {args.out}")
    return 0


def _cmd_path(args) -> int:
    x = io.load_matrix(args.x)
    y = io.load_matrix(args.y)
    val_images, val_captions, pair_index = _load_val(args)
    ints = args.reg == "tsvd"
    grid_x, grid_y, count = _parse_grid(args, ints=ints)
    if grid_x is None or grid_y is None:
        xc, _ = cca.center_columns(x)
        yc, _ = cca.center_columns(y)
        fx, fy = cca.thin_svd(xc), cca.thin_svd(yc)
        nx, ny = count if count else (20, 20)
        if ints:
            grid_x = grid_x if grid_x is not None else \
                selection.default_rank_grid(fx.rank, nx)
            grid_y = grid_y if grid_y is not None else \
                selection.default_rank_grid(fy.rank, ny)
        else:
            grid_x = grid_x if grid_x is not None else \
                selection.default_penalty_grid(fx.s, nx)
            grid_y = grid_y if grid_y is not None else \
                selection.default_penalty_grid(fy.s, ny)
    runner = selection.tsvd_path if ints else selection.tikhonov_path
    grid, sel = runner(x, y, val_images, val_captions, grid_x, grid_y,
                       metric=args.metric, pair_index=pair_index,
                       workers=_workers(args))
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(selection.grid_to_tsv(grid))

    def describe(spec):
        if spec.kind == "tsvd":
            return f"k_x={spec.k_x} k_y={spec.k_y}"
        return f"gamma_x={spec.gamma_x:.6g} gamma_y={spec.gamma_y:.6g}"

    print(f"best search: {describe(sel.best_search)} "
          f"(r@1 {sel.best_search_score:.4g})")
    print(f"best annotation: {describe(sel.best_annotation)} "
          f"(r@1 {sel.best_annotation_score:.4g})")
    return 0


def _cmd_timing(args) -> int:
    x = io.load_matrix(args.x)
    y = io.load_matrix(args.y)
    val_images, val_captions, pair_index = _load_val(args)
    _, _, count = _parse_grid(args, ints=True)
    xc, _ = cca.center_columns(x)
    yc, _ = cca.center_columns(y)
    nx, ny = count if count else (20, 20)
    grid_x = selection.default_rank_grid(cca.thin_svd(xc).rank, nx)
    grid_y = selection.default_rank_grid(cca.thin_svd(yc).rank, ny)
    report = selection.measure_path_timing(
        x, y, val_images, val_captions, grid_x, grid_y,
        pair_index=pair_index, repeats=args.repeats,
    )
    lines = [
        "quantity\tvalue",
        f"tsvd_median_seconds\t{report.tsvd_seconds:.6g}",
        f"tikhonov_median_seconds\t{report.tikhonov_seconds:.6g}",
        f"speedup_ratio\t{report.speedup:.6g}",
        f"cells\t{report.cells}",
        f"repeats\t{report.repeats}",
    ]
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"T-SVD {report.tsvd_seconds:.3f}s vs Tikhonov "
          f"{report.tikhonov_seconds:.3f}s ({report.speedup:.2f}x)")
    return 0


def _parse_weighting(text: str) -> tuple[str, float | None]:
    if text == "asymmetric":
        return "asymmetric", None
    if text.startswith("symmetric:"):
        return "symmetric", float(text.split(":", 1)[1])
    raise ValueError(f"weighting must be asymmetric or symmetric:<alpha>, "
                     f"got {text!r}")


def _cmd_eval(args) -> int:
    model = cca.model_from_archive(io.load_archive(args.model))
    images = io.load_matrix(args.images)
    captions = io.load_matrix(args.captions)
    pair_index = (io.load_pairing(args.pairing) if args.pairing
                  else np.arange(images.rows, dtype=np.int64))
    weighting, alpha = _parse_weighting(args.weighting)
    if args.blocks < 1:
        raise ValueError("--blocks must be >= 1")
    reports = []
    if args.blocks == 1:
        reports.extend(retrieval.evaluate_bidirectional(
            model, images, captions, pair_index,
            weighting=weighting, alpha=alpha, similarity=args.similarity))
    else:
        block_edges = np.linspace(0, images.rows, args.blocks + 1).astype(int)
        per_task: dict[str, list[retrieval.EvalReport]] = {
            "search": [], "annotation": [],
        }
        for b in range(args.blocks):
            lo, hi = block_edges[b], block_edges[b + 1]
            keep = (pair_index >= lo) & (pair_index < hi)
            block_images = io.FeatureMatrix(images.values[lo:hi])
            block_captions = io.FeatureMatrix(captions.values[keep])
            block_pairs = pair_index[keep] - lo
            search, annotation = retrieval.evaluate_bidirectional(
                model, block_images, block_captions, block_pairs,
                weighting=weighting, alpha=alpha,
                similarity=args.similarity)
            for rep in (search, annotation):
                per_task[rep.task].append(rep)
                reports.append(retrieval.EvalReport(
                    task=f"{rep.task}_block{b}", recalls=rep.recalls,
                    median_rank=rep.median_rank, n_queries=rep.n_queries,
                    n_items=rep.n_items))
        for task in ("search", "annotation"):
            blocks = per_task[task]
            reports.append(retrieval.EvalReport(
                task=f"{task}_mean",
                recalls={
                    k: float(np.mean([r.recalls[k] for r in blocks]))
                    for k in (1, 5, 10)
                },
                median_rank=float(np.mean([r.median_rank for r in blocks])),
                n_queries=int(np.mean([r.n_queries for r in blocks])),
                n_items=int(np.mean([r.n_items for r in blocks])),
            ))
    text = retrieval.reports_to_tsv(reports)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    print(text, end="")
    return 0


def _cmd_sweep(args) -> int:
    model = cca.model_from_archive(io.load_archive(args.model))
    images = io.load_matrix(args.images)
    captions = io.load_matrix(args.captions)
    pair_index = io.load_pairing(args.pairing) if args.pairing else None
    alphas = [float(v) for v in args.alphas.split(",") if v.strip()]
    curve = retrieval.alpha_sweep(model, images, captions, alphas,
                                  pair_index=pair_index, k=args.k)
    text = retrieval.sweep_to_tsv(curve)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    print(text, end="")
    return 0


def _cmd_inspect(args) -> int:
    archive = io.load_archive(args.model)
    for key, value in archive.manifest.items():
        print(f"{key}={value}")
    for name, blob in archive.blobs.items():
        print(f"[blob] {name}: {blob.rows}x{blob.cols}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "embed": _cmd_embed,
    "fit": _cmd_fit,
    "path": _cmd_path,
    "timing": _cmd_timing,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "inspect": _cmd_inspect,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        argv = _apply_config(argv)
    except (OSError, ValueError) as exc:
        print(f"ccax: error: {exc}", file=sys.stderr)
        return 1
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (OSError, ValueError) as exc:
        print(f"ccax: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
