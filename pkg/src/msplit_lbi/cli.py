"""The ``msplit`` command line tool.

Exit codes: 0 success, 1 usage or input error, 2 numeric failure,
3 verification outside tolerance.

Every command takes ``--out`` for its result files and writes a
``manifest.json`` (command, resolved parameters, timestamps, outputs) last,
so the manifest's presence implies the run completed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path as FsPath

import numpy as np

from . import embedding, simulation
from .baselines import FitError
from .matrices import MatrixError, format_float, load_matrix_csv, save_matrix_csv
from .solver import (
    DivergenceError,
    Hyperparams,
    Problem,
    SolverError,
    decompose,
    path_to_csv,
    path_to_json,
    run_path,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_VERIFY = 3

#: Dense JSON path export is written when d*p is at most this.
JSON_EXPORT_MAX_ENTRIES = 10_000


class _UsageError(Exception):
    pass


def _write_manifest(out_dir: FsPath, command: str, params: dict, seed, outputs, started: float):
    manifest = {
        "command": command,
        "params": params,
        "seed": seed,
        "started": started,
        "finished": time.time(),
        "outputs": [str(p) for p in outputs],
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)


def _out_dir(args) -> FsPath:
    out = FsPath(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_csv(path: str) -> np.ndarray:
    p = FsPath(path)
    if not p.exists():
        raise _UsageError(f"input file not found: {p}")
    return load_matrix_csv(p)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    if args.trials < 1:
        raise _UsageError("--trials must be >= 1")
    sigmas = args.sigma or [0.2, 0.4, 0.6, 0.8]
    started = time.time()
    out = _out_dir(args)
    tables = []
    for sigma in sigmas:
        cfg = simulation.SimConfig(
            sigma=sigma,
            n=args.n,
            d=args.d,
            noise_sd=args.noise_sd,
            trials=args.trials,
            seed=args.seed,
            kappa=args.kappa,
            nu=args.nu,
        )
        tables.append(simulation.run_table1(cfg))
    table_path = out / "table.csv"
    with open(table_path, "w") as fh:
        simulation.error_tables_to_csv(tables, fh)
    for t in tables:
        line = "  ".join(
            f"{m}={t.mean(m):.4f}+/-{t.sd(m):.4f}" for m in simulation.METHODS
        )
        print(f"sigma={t.sigma:g}  {line}")
    _write_manifest(out, "simulate", _params(args), args.seed, [table_path], started)
    return EXIT_OK


# ---------------------------------------------------------------------------
# path
# ---------------------------------------------------------------------------

def cmd_path(args) -> int:
    started = time.time()
    X = _load_csv(args.x_file)
    E = _load_csv(args.e_file)
    out = _out_dir(args)
    hyper = Hyperparams(
        kappa=args.kappa,
        nu=args.nu,
        t_max=args.t_max,
        alpha=args.alpha,
    )
    try:
        problem = Problem(X, E, hyper)
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc
    path = run_path(problem)
    outputs = []
    path_csv = out / "path.csv"
    with open(path_csv, "w") as fh:
        path_to_csv(path, fh)
    outputs.append(path_csv)
    if problem.d * problem.p <= JSON_EXPORT_MAX_ENTRIES:
        path_json = out / "path.json"
        with open(path_json, "w") as fh:
            json.dump(path_to_json(path), fh)
        outputs.append(path_json)
    if args.t is not None:
        t_grid = path.t_grid
        if args.t < 0 or args.t > t_grid[-1]:
            raise _UsageError(
                f"--t {args.t:g} outside the path horizon [0, {t_grid[-1]:g}]"
            )
        idx = int(np.argmin(np.abs(t_grid - args.t)))
        pt = path.points[idx]
        dec = decompose(pt.B, pt.Btilde, args.decompose_tau)
        dec_csv = out / "decomposition.csv"
        with open(dec_csv, "w") as fh:
            fh.write("row_index,column_index,strong,weak,noise\n")
            for i in range(pt.B.shape[0]):
                for j in range(pt.B.shape[1]):
                    fh.write(
                        f"{i},{j},{format_float(dec.strong[i, j])},"
                        f"{format_float(dec.weak[i, j])},{format_float(dec.noise[i, j])}\n"
                    )
        outputs.append(dec_csv)
        print(f"decomposed at t={format_float(t_grid[idx])} with tau={dec.tau!r}")
    print(f"path with {len(path.points)} recorded points, alpha={path.alpha!r}")
    _write_manifest(out, "path", _params(args), None, outputs, started)
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def cmd_verify(args) -> int:
    if args.draws < simulation.MIN_DRAWS:
        raise _UsageError(f"--draws must be >= {simulation.MIN_DRAWS}")
    started = time.time()
    out = _out_dir(args)
    lemmas = args.lemma or [1, 2]
    all_passed = True
    report_path = out / "verify.json"
    reports = {}
    for lemma in lemmas:
        if lemma == 1:
            rep = simulation.verify_lemma1(
                lambda_l2=args.lambda2,
                lambda_l1=args.lambda1,
                draws=args.draws,
                seed=args.seed,
            )
            print(
                f"lemma1 ridge: mean={rep.ridge_mean:.4f} target={rep.ridge_target:.4f} "
                f"z={rep.z_ridge_vs_target:+.2f} bias_z={rep.z_ridge_vs_unbiased:+.2f}"
            )
            print(
                f"lemma1 elastic net: mean={rep.enet_mean:.4f} target={rep.enet_target:.4f} "
                f"z={rep.z_enet_vs_target:+.2f}"
            )
        else:
            rep = simulation.verify_lemma2(
                nu=args.nu,
                draws=args.draws,
                seed=args.seed,
                kappa=args.kappa,
                noise_sd=args.noise_sd,
            )
            print(
                f"lemma2: captured={rep.captured}/{rep.draws} "
                f"on_mean={rep.on_mean:.4f} (target {rep.on_target:.4f}, z={rep.z_on:+.2f}) "
                f"off_mean={rep.off_mean:.4f} (target {rep.off_target:.4f}, z={rep.z_off:+.2f})"
            )
        status = "PASS" if rep.passed else "FAIL"
        print(f"lemma{lemma}: {status}")
        all_passed = all_passed and rep.passed
        reports[f"lemma{lemma}"] = {
            k: (None if isinstance(v, float) and not math.isfinite(v) else v)
            for k, v in rep.__dict__.items()
        }
    with open(report_path, "w") as fh:
        json.dump(reports, fh, indent=2)
    _write_manifest(out, "verify", _params(args), args.seed, [report_path], started)
    return EXIT_OK if all_passed else EXIT_VERIFY


# ---------------------------------------------------------------------------
# embed
# ---------------------------------------------------------------------------

def _split_holdout(data: embedding.LabeledFeatures, fraction: float, seed: int):
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for k in range(data.n_classes):
        idx = np.nonzero(data.labels == k)[0]
        idx = rng.permutation(idx)
        n_test = max(1, int(round(fraction * len(idx)))) if len(idx) > 1 else 0
        test_idx.extend(idx[:n_test])
        train_idx.extend(idx[n_test:])
    train_idx = np.sort(np.array(train_idx, dtype=int))
    test_idx = np.sort(np.array(test_idx, dtype=int))
    return train_idx, test_idx


def cmd_embed_fsl(args) -> int:
    started = time.time()
    X = _load_csv(args.features)
    labels = _load_labels(args.labels)
    out = _out_dir(args)
    n_classes = int(labels.max()) + 1
    data = embedding.LabeledFeatures(X=X, labels=labels, n_classes=n_classes)

    if args.test_features:
        X_test = _load_csv(args.test_features)
        if not args.test_labels:
            raise _UsageError("--test-labels required with --test-features")
        y_test = _load_labels(args.test_labels)
        X_train, y_train = data.X, data.labels
    else:
        train_idx, test_idx = _split_holdout(data, args.holdout, args.seed)
        if len(test_idx) == 0:
            raise _UsageError("holdout split produced no test rows")
        X_train, y_train = data.X[train_idx], data.labels[train_idx]
        X_test, y_test = data.X[test_idx], data.labels[test_idx]

    E = embedding.one_hot(y_train, n_classes)
    B = embedding.fit_embedding(
        X_train, E, args.method, folds=args.folds, seed=args.seed,
        kappa=args.kappa, nu=args.nu, t_max=args.t_max,
    )
    acc = embedding.fsl_accuracy(B, X_test, y_test)
    print(f"fsl accuracy: {acc:.4f}")
    b_path = out / "embedding.csv"
    save_matrix_csv(b_path, B)
    _write_manifest(out, "embed fsl", _params(args), args.seed, [b_path], started)
    return EXIT_OK


def cmd_embed_zsl(args) -> int:
    started = time.time()
    E_source = _load_csv(args.source_semantic)
    E_target = _load_csv(args.target_semantic)
    X_source = _load_csv(args.source_features)
    labels_source = _load_labels(args.source_labels)
    X_test = _load_csv(args.test_features)
    labels_test = _load_labels(args.test_labels)
    out = _out_dir(args)

    k_source = E_source.shape[0]
    data = embedding.LabeledFeatures(X=X_source, labels=labels_source, n_classes=k_source)
    protos_source = embedding.class_prototypes(data)

    if args.method in ("msplit_dense", "msplit_sparse"):
        # Keep the path around for the signal report.
        problem = Problem(
            E_source.T,
            E_target.T,
            Hyperparams(kappa=args.kappa, nu=args.nu, t_max=args.t_max),
        )
        from .solver import run_path as _run_path, select_t_cv

        cv = select_t_cv(problem, folds=min(args.folds, problem.n), seed=args.seed)
        path = _run_path(problem)
        idx = int(np.argmin(np.abs(path.t_grid - cv.t)))
        pt = path.points[idx]
        B = pt.B if args.method == "msplit_dense" else pt.Btilde
        report = embedding.signal_report(pt, args.top)
    else:
        B = embedding.learn_structure(E_source, E_target, args.method)
        report = None

    protos_target = embedding.synthesize_prototypes(protos_source, B)
    acc = embedding.zsl_accuracy(X_test, labels_test, protos_target)
    print(f"zsl accuracy: {acc:.4f}")
    outputs = []
    proto_path = out / "prototypes.csv"
    save_matrix_csv(proto_path, protos_target.F)
    outputs.append(proto_path)
    if report is not None:
        rep_path = out / "signals.csv"
        with open(rep_path, "w") as fh:
            embedding.signal_report_to_csv(report, fh)
        outputs.append(rep_path)
    _write_manifest(out, "embed zsl", _params(args), args.seed, outputs, started)
    return EXIT_OK


def _load_labels(path: str) -> np.ndarray:
    p = FsPath(path)
    if not p.exists():
        raise _UsageError(f"labels file not found: {p}")
    try:
        return embedding.load_labels(p)
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _params(args) -> dict:
    skip = {"func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msplit",
        description="MSplit LBI regularization paths, baselines and embedding pipelines",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="benchmark estimators on synthetic designs")
    p_sim.add_argument("--sigma", type=float, action="append",
                       help="correlation level (repeatable; default all four)")
    p_sim.add_argument("--trials", type=int, default=20)
    p_sim.add_argument("--seed", type=int, default=7)
    p_sim.add_argument("--kappa", type=float, default=5.0)
    p_sim.add_argument("--nu", type=float, default=None,
                       help="override the per-sigma default")
    p_sim.add_argument("--n", type=int, default=100, help="sample count")
    p_sim.add_argument("--d", type=int, default=80, help="feature count")
    p_sim.add_argument("--noise-sd", type=float, default=0.5)
    p_sim.add_argument("--out", default="msplit_out")
    p_sim.set_defaults(func=cmd_simulate)

    p_path = sub.add_parser("path", help="run the solver path on matrices from CSV files")
    p_path.add_argument("--x-file", required=True)
    p_path.add_argument("--e-file", required=True)
    p_path.add_argument("--kappa", type=float, default=5.0)
    p_path.add_argument("--nu", type=float, default=3.0)
    p_path.add_argument("--alpha", type=float, default=None)
    p_path.add_argument("--t-max", type=float, default=10.0)
    p_path.add_argument("--t", type=float, default=None,
                        help="decompose the path point nearest this t")
    p_path.add_argument("--decompose-tau", type=float, default=None)
    p_path.add_argument("--out", default="msplit_out")
    p_path.set_defaults(func=cmd_path)

    p_ver = sub.add_parser("verify", help="Monte-Carlo bias checks")
    p_ver.add_argument("--lemma", type=int, action="append", choices=(1, 2))
    p_ver.add_argument("--lambda1", type=float, default=0.5)
    p_ver.add_argument("--lambda2", type=float, default=1.0)
    p_ver.add_argument("--nu", type=float, default=3.0)
    p_ver.add_argument("--kappa", type=float, default=100.0)
    p_ver.add_argument("--noise-sd", type=float, default=0.15)
    p_ver.add_argument("--draws", type=int, default=10_000)
    p_ver.add_argument("--seed", type=int, default=7)
    p_ver.add_argument("--out", default="msplit_out")
    p_ver.set_defaults(func=cmd_verify)

    p_embed = sub.add_parser("embed", help="few-shot / zero-shot pipelines")
    esub = p_embed.add_subparsers(dest="embed_command", required=True)

    p_fsl = esub.add_parser("fsl", help="one-hot embedding with argmax prediction")
    p_fsl.add_argument("--features", required=True)
    p_fsl.add_argument("--labels", required=True)
    p_fsl.add_argument("--test-features")
    p_fsl.add_argument("--test-labels")
    p_fsl.add_argument("--holdout", type=float, default=0.5,
                       help="held-out fraction when no test files are given")
    p_fsl.add_argument("--method", default="msplit_dense", choices=embedding.FIT_METHODS)
    p_fsl.add_argument("--folds", type=int, default=5)
    p_fsl.add_argument("--kappa", type=float, default=5.0)
    p_fsl.add_argument("--nu", type=float, default=3.0)
    p_fsl.add_argument("--t-max", type=float, default=20.0)
    p_fsl.add_argument("--seed", type=int, default=7)
    p_fsl.add_argument("--out", default="msplit_out")
    p_fsl.set_defaults(func=cmd_embed_fsl)

    p_zsl = esub.add_parser("zsl", help="structure transfer with prototype classification")
    p_zsl.add_argument("--source-semantic", required=True)
    p_zsl.add_argument("--target-semantic", required=True)
    p_zsl.add_argument("--source-features", required=True)
    p_zsl.add_argument("--source-labels", required=True)
    p_zsl.add_argument("--test-features", required=True)
    p_zsl.add_argument("--test-labels", required=True)
    p_zsl.add_argument("--method", default="msplit_dense", choices=embedding.FIT_METHODS)
    p_zsl.add_argument("--folds", type=int, default=5)
    p_zsl.add_argument("--kappa", type=float, default=5.0)
    p_zsl.add_argument("--nu", type=float, default=3.0)
    p_zsl.add_argument("--t-max", type=float, default=20.0)
    p_zsl.add_argument("--top", type=int, default=3, help="signals per target class")
    p_zsl.add_argument("--seed", type=int, default=7)
    p_zsl.add_argument("--out", default="msplit_out")
    p_zsl.set_defaults(func=cmd_embed_zsl)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; map onto our contract.
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MatrixError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, SolverError, FitError, RuntimeError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
