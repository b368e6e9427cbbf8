"""Command-line harness: experiment orchestration, CSV/report emission.

Subcommands: ``coherence``, ``recovery``, ``sense``, ``train``, ``eval``.
Every experiment is described by a JSON spec file; the flags ``--seed``,
``--trials``, ``--out`` and ``--threads`` override the matching spec fields.
Exit code is 0 only when all requested work completed; otherwise a
machine-readable JSON error summary goes to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .images import load_image, save_image
from .learning import (LossConfig, TrainConfig, load_checkpoint,
                       save_checkpoint, train)
from .metrics import mutual_coherence, psnr, ssim
from .operators import build_adjoint, build_operator
from .recovery import GaussianSource, TensorSumSource, exact_recovery_rate
from .tensorfile import write_tensor
from .utils import atomic_write_bytes, derive_rng

COHERENCE_HEADER = ["source", "T", "m", "N", "trials", "mean_mu", "std_mu"]
RECOVERY_HEADER = ["source", "T", "m", "k", "N", "trials", "rate"]
SENSE_HEADER = ["file", "psnr_db", "ssim"]
TRAIN_HEADER = ["epoch", "lr", "train_l1", "val_l1", "val_psnr_db"]


class SpecError(ValueError):
    """The experiment spec is malformed or references missing inputs."""


def _load_spec(path: str, kind: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            spec = json.load(fh)
    except OSError as exc:
        raise SpecError(f"cannot read spec {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SpecError(f"spec {path} is not valid JSON: {exc}") from exc
    if spec.get("kind") != kind:
        raise SpecError(f"spec kind {spec.get('kind')!r} does not match subcommand {kind!r}")
    return spec


def _require(spec: dict, key: str):
    if key not in spec:
        raise SpecError(f"spec is missing required field {key!r}")
    return spec[key]


def _resolve_threads(args, spec) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    if spec.get("threads"):
        return max(1, int(spec["threads"]))
    env = os.environ.get("TSCS_THREADS")
    return max(1, int(env)) if env else 1


def _write_csv(path: str, header: list, rows: list) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    atomic_write_bytes(path, buf.getvalue().encode("utf-8"))


def _fmt(value: float) -> str:
    return repr(float(value))


# ---------------------------------------------------------------------------
# coherence / recovery experiments
# ---------------------------------------------------------------------------


def _sources(spec, n_shape, m_shape):
    blocks = spec.get("blocks")
    sources = []
    if spec.get("include_unconstrained", True):
        sources.append((GaussianSource(), 0))
    for t in spec.get("branch_counts", []):
        src = TensorSumSource(int(t), tuple(n_shape), tuple(m_shape),
                              blocks=tuple(blocks) if blocks else None)
        sources.append((src, int(t)))
    if not sources:
        raise SpecError("no sources requested")
    return sources


def run_coherence_experiment(spec: dict, threads: int = 1) -> list:
    """Average mutual coherence per source over seeded realizations."""
    n_shape = tuple(_require(spec, "signal_shape"))
    m_shape = tuple(_require(spec, "measurement_shape"))
    trials = int(_require(spec, "trials"))
    seed = int(_require(spec, "seed"))
    n = int(np.prod(n_shape))
    m = int(np.prod(m_shape))
    if n < 2:
        raise SpecError("coherence needs at least 2 matrix columns (N >= 2)")
    if trials < 1:
        raise SpecError("trials must be >= 1")
    rows = []
    for source, tag in _sources(spec, n_shape, m_shape):
        def one(i, source=source, tag=tag):
            matrix = source.build(derive_rng(seed, tag, i), n, m)
            return mutual_coherence(matrix).value
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                values = np.array(list(pool.map(one, range(trials))))
        else:
            values = np.array([one(i) for i in range(trials)])
        rows.append([source.name, tag, m, n, trials, _fmt(values.mean()), _fmt(values.std())])
    return rows


def run_recovery_experiment(spec: dict, threads: int = 1) -> list:
    """Exact-recovery probability per source over the m sweep."""
    n_shape = tuple(_require(spec, "signal_shape"))
    k = int(_require(spec, "k"))
    m_shapes = [tuple(s) for s in _require(spec, "measurement_shapes")]
    trials = int(_require(spec, "trials"))
    seed = int(_require(spec, "seed"))
    n = int(np.prod(n_shape))
    rows = []
    for m_shape in m_shapes:
        m = int(np.prod(m_shape))
        for source, tag in _sources(spec, n_shape, m_shape):
            rate = exact_recovery_rate(source, n, k, m, trials,
                                       seed=[seed, tag, m], threads=threads)
            rows.append([source.name, tag, m, k, n, trials, _fmt(rate)])
    return rows


# ---------------------------------------------------------------------------
# sense / train / eval pipelines
# ---------------------------------------------------------------------------


def _operator_from_spec(op_spec: dict, signal_shape, adjoint_init: str = "transpose"):
    if "checkpoint" in op_spec:
        op, adj, _ = load_checkpoint(op_spec["checkpoint"])
        return op, adj
    m_shape = tuple(_require(op_spec, "measurement_shape"))
    blocks = op_spec.get("blocks")
    op = build_operator(tuple(signal_shape), m_shape, int(op_spec.get("T", 1)),
                        basis_plan=list(blocks) if blocks else None,
                        rng_seed=int(op_spec.get("seed", 0)))
    adj = build_adjoint(op, init=adjoint_init,
                        rng_seed=op_spec.get("adjoint_seed"))
    return op, adj


def _image_paths(spec: dict) -> list:
    if "images" in spec:
        return [str(p) for p in spec["images"]]
    directory = _require(spec, "image_dir")
    names = sorted(
        f for f in os.listdir(directory) if f.lower().endswith((".pgm", ".ppm"))
    )
    if not names:
        raise SpecError(f"no PGM/PPM files in {directory}")
    return [os.path.join(directory, f) for f in names]


def _quality_row(name: str, proxy: np.ndarray, reference: np.ndarray) -> list:
    value = psnr(proxy, reference, peak=1.0)
    if proxy.ndim == 2:
        similarity = ssim(proxy, reference, peak=1.0)
    else:
        similarity = float(np.mean([
            ssim(proxy[..., c], reference[..., c], peak=1.0) for c in range(proxy.shape[2])
        ]))
    return [name, _fmt(value), _fmt(similarity)]


def run_sense(spec: dict) -> tuple:
    """Sense images, write measurements and proxy images, collect metrics."""
    signal_shape = tuple(_require(spec, "signal_shape"))
    out_dir = _require(spec, "out_dir")
    op, adj = _operator_from_spec(_require(spec, "operator"), signal_shape,
                                  spec.get("adjoint_init", "transpose"))
    os.makedirs(out_dir, exist_ok=True)
    rows, failures = [], []
    for path in _image_paths(spec):
        name = os.path.basename(path)
        try:
            image = load_image(path).as_tensor()
            if tuple(image.shape) != op.input_shape:
                raise ValueError(
                    f"image shape {tuple(image.shape)} does not match operator "
                    f"input {op.input_shape}"
                )
            measurement = op.apply(image)
            proxy = np.clip(adj.apply(measurement), 0.0, 1.0)
            stem = os.path.splitext(name)[0]
            write_tensor(os.path.join(out_dir, stem + ".measurement.tsr"), measurement)
            ext = ".pgm" if proxy.ndim == 2 else ".ppm"
            save_image(proxy, os.path.join(out_dir, stem + ".proxy" + ext))
            rows.append(_quality_row(name, proxy, image))
        except (ValueError, OSError) as exc:
            failures.append({"file": name, "error": str(exc)})
    _write_csv(os.path.join(out_dir, "metrics.csv"), SENSE_HEADER, rows)
    return rows, failures


def _ingest_patches(spec: dict) -> tuple:
    patch_shape = tuple(_require(spec, "patch_shape"))
    rows = []
    skipped = 0
    for path in _image_paths(spec if "images" in spec else {"image_dir": _require(spec, "corpus_dir")}):
        image = load_image(path).as_tensor()
        if image.ndim != len(patch_shape):
            skipped += 1
            continue
        if any(have < want for have, want in zip(image.shape, patch_shape)):
            skipped += 1
            continue
        crop = image[tuple(slice(0, want) for want in patch_shape)]
        rows.append(np.ascontiguousarray(crop))
    return rows, skipped


def run_training(spec: dict) -> tuple:
    """Ingest a patch corpus, train, write checkpoint and per-epoch CSV."""
    out_dir = _require(spec, "out_dir")
    patch_shape = tuple(_require(spec, "patch_shape"))
    dataset, skipped = _ingest_patches(spec)
    if not dataset:
        raise SpecError("corpus is empty after ingestion")
    op, adj = _operator_from_spec(_require(spec, "operator"), patch_shape,
                                  spec.get("adjoint_init", "transpose"))
    loss_spec = spec.get("loss", {})
    loss_cfg = LossConfig(
        alpha=float(loss_spec.get("alpha", 0.005)),
        beta=float(loss_spec.get("beta", 10.0)),
        gamma=float(loss_spec.get("gamma", 0.9)),
    )
    schedule = tuple((int(s), float(r)) for s, r in _require(spec, "schedule"))
    train_cfg = TrainConfig(
        epochs=int(_require(spec, "epochs")),
        batch_size=int(spec.get("batch_size", 16)),
        schedule=schedule,
        seed=int(spec.get("seed", 0)),
        split=tuple(spec.get("split", (0.8, 0.2))),
    )
    op, adj, history = train(op, adj, dataset, loss_cfg, train_cfg)
    os.makedirs(out_dir, exist_ok=True)
    rows = [
        [entry.epoch, _fmt(entry.learning_rate), _fmt(entry.train_l1),
         _fmt(entry.val_l1), _fmt(entry.val_psnr_db)]
        for entry in history
    ]
    _write_csv(os.path.join(out_dir, "metrics.csv"), TRAIN_HEADER, rows)
    state = {
        "epoch": train_cfg.epochs,
        "seed": train_cfg.seed,
        "schedule": [list(item) for item in schedule],
        "schedule_position": train_cfg.epochs,
        "skipped_files": skipped,
    }
    save_checkpoint(os.path.join(out_dir, "checkpoint"), op, adj, state)
    return rows, skipped


def run_eval(spec: dict) -> tuple:
    """Sense and proxy a corpus through a trained checkpoint; emit metrics."""
    op, adj, _ = load_checkpoint(_require(spec, "checkpoint"))
    out_path = _require(spec, "out")
    rows, failures = [], []
    for path in _image_paths(spec):
        name = os.path.basename(path)
        try:
            image = load_image(path).as_tensor()
            if tuple(image.shape) != op.input_shape:
                raise ValueError(
                    f"image shape {tuple(image.shape)} does not match operator "
                    f"input {op.input_shape}"
                )
            proxy = np.clip(adj.apply(op.apply(image)), 0.0, 1.0)
            rows.append(_quality_row(name, proxy, image))
        except (ValueError, OSError) as exc:
            failures.append({"file": name, "error": str(exc)})
    _write_csv(out_path, SENSE_HEADER, rows)
    return rows, failures


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tscs",
        description="Tensor-summation compressive sensing experiment harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("coherence", "average mutual coherence per source"),
        ("recovery", "exact-recovery probability over an m sweep"),
        ("sense", "sense images and write measurements/proxies/metrics"),
        ("train", "jointly learn sensing and adjoint weights on a patch corpus"),
        ("eval", "evaluate a trained checkpoint on a corpus"),
    ):
        cmd = sub.add_parser(name, help=doc)
        cmd.add_argument("--spec", required=True, help="experiment spec (JSON)")
        cmd.add_argument("--seed", type=int, default=None, help="override the spec seed")
        cmd.add_argument("--trials", type=int, default=None, help="override the trial count")
        cmd.add_argument("--out", default=None, help="override the output path")
        cmd.add_argument("--threads", type=int, default=None,
                         help="trial parallelism (default: TSCS_THREADS or 1)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        spec = _load_spec(args.spec, args.command)
        if args.seed is not None:
            spec["seed"] = args.seed
        if args.trials is not None:
            spec["trials"] = args.trials
        if args.out is not None:
            key = "out_dir" if args.command in ("sense", "train") else "out"
            spec[key] = args.out
        threads = _resolve_threads(args, spec)

        failures = []
        if args.command == "coherence":
            rows = run_coherence_experiment(spec, threads=threads)
            _write_csv(_require(spec, "out"), COHERENCE_HEADER, rows)
        elif args.command == "recovery":
            rows = run_recovery_experiment(spec, threads=threads)
            _write_csv(_require(spec, "out"), RECOVERY_HEADER, rows)
        elif args.command == "sense":
            _, failures = run_sense(spec)
        elif args.command == "train":
            run_training(spec)
        elif args.command == "eval":
            _, failures = run_eval(spec)
        if failures:
            print(json.dumps({"error": "some inputs failed", "failures": failures}),
                  file=sys.stderr)
            return 1
        return 0
    except Exception as exc:  # surface every failure as a machine-readable line
        print(json.dumps({"error": type(exc).__name__, "detail": str(exc)}),
              file=sys.stderr)
        return 1


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
