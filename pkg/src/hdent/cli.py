"""Command-line front end: simulate tables, certify them, run analytic sweeps
and evaluate the multipartite bound.

Exit codes: 0 success, 2 configuration error, 3 data-format or dimension error,
4 numerical failure, 5 incomplete tilted basis (a Schmidt coefficient is zero).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import certify as cert
from .bases import tilted_basis
from .errors import (
    DataFormatError,
    DimensionMismatchError,
    IncompleteBasisError,
    InvalidStateError,
    NumericalError,
    UnsupportedModeError,
)
from .estimate import (
    ResampleSpec,
    estimate_standard,
    estimate_standard_corrected,
    estimate_tilted,
    nominate_target,
    resample_pipeline,
)
from .expsim import (
    LossModel,
    MeasurementSetting,
    marginals,
    sample_counts,
    setting_probabilities,
    standard_measurement,
)
from .bases import GlobalProductBasis
from .qstate import (
    DEFAULT_DIM_CAP,
    DensityMatrix,
    SchmidtSpectrum,
    dephased_state,
    ghz_state,
    isotropic_state,
    pure_target_state,
    rank_k_mixture,
    white_noise_mixture,
)
from .tables import CoincidenceTable, dumps, file_sha256, load_table, save_table

OUTPUT_ENV = "HDENT_OUTPUT_DIR"
DEFAULT_OUTPUT = "hdent-out"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4
EXIT_INCOMPLETE = 5


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------- helpers


def _out_dir(arg: str | None) -> Path:
    path = Path(arg or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _int_range(text: str) -> list[int]:
    """'7' -> [7]; '3..10' -> [3, ..., 10]; '1,2,7' -> [1, 2, 7]."""
    try:
        if ".." in text:
            lo, hi = text.split("..")
            return list(range(int(lo), int(hi) + 1))
        return [int(x) for x in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"cannot parse integer range '{text}'") from exc


def _floats(text: str | None) -> list[float] | None:
    if text is None:
        return None
    try:
        return [float(x) for x in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"cannot parse number list '{text}'") from exc


def load_lambda(path: str | Path) -> SchmidtSpectrum:
    """JSON list of amplitudes, or an object with a "lambda" list; renormalized."""
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read lambda file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON ({exc})") from exc
    values = doc.get("lambda") if isinstance(doc, dict) else doc
    if not isinstance(values, list) or not values:
        raise DataFormatError(f"{path}: expected a non-empty list of amplitudes")
    return SchmidtSpectrum.normalized([float(v) for v in values])


def _write_csv(rows: Sequence[Sequence[Any]], header: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


def _fmt(x: Any) -> Any:
    if isinstance(x, float):
        return repr(x)
    return "" if x is None else x


def _spectrum_arg(args: argparse.Namespace, d: int | None) -> SchmidtSpectrum | None:
    if getattr(args, "lambda_file", None):
        lam = load_lambda(args.lambda_file)
    elif getattr(args, "lam", None):
        lam = SchmidtSpectrum.normalized(_floats(args.lam))
    else:
        return None
    if d is not None and lam.d != d:
        raise ConfigError(f"lambda has {lam.d} entries but --d is {d}")
    return lam


# ---------------------------------------------------------------- simulate


def build_state(args: argparse.Namespace) -> tuple[DensityMatrix, SchmidtSpectrum, dict]:
    fam = args.family
    lam = _spectrum_arg(args, args.d)
    d = args.d if args.d is not None else (lam.d if lam is not None else None)
    if d is None or d < 2:
        raise ConfigError("a dimension --d >= 2 (or a lambda file) is required")
    params: dict[str, Any] = {"family": fam, "d": d}
    p = args.p
    if p is not None and not 0.0 <= p <= 1.0:
        raise ConfigError("--p must lie in [0, 1]")
    if fam == "isotropic":
        if p is None:
            raise ConfigError("--p is required for the isotropic family")
        rho, lam = isotropic_state(d, p), SchmidtSpectrum.uniform(d)
        params["p"] = p
    elif fam in ("target", "dephased", "noisy-target"):
        lam = lam or SchmidtSpectrum.uniform(d)
        if fam == "target":
            rho = pure_target_state(lam)
        elif fam == "dephased":
            if p is None:
                raise ConfigError("--p is required for the dephased family")
            rho = dephased_state(lam, p)
            params["p"] = p
        else:
            if p is None:
                raise ConfigError("--p is required for the noisy-target family")
            rho = white_noise_mixture(pure_target_state(lam), p)
            params["p"] = p
        params["lambda"] = lam.to_list()
    elif fam == "rank-k":
        if args.k is None or not 1 <= args.k <= d:
            raise ConfigError("--k in [1, d] is required for the rank-k family")
        rho, lam = rank_k_mixture(d, args.k), SchmidtSpectrum.uniform(d)
        params["k"] = args.k
    else:  # argparse restricts choices
        raise ConfigError(f"unknown family {fam}")
    return rho, lam, params


def _loss(args: argparse.Namespace, d: int) -> LossModel:
    ea = _floats(args.eta_a) or [1.0] * d
    eb = _floats(args.eta_b) or [1.0] * d
    if len(ea) != d or len(eb) != d:
        raise ConfigError(f"loss vectors must have {d} entries")
    try:
        return LossModel(np.array(ea), np.array(eb))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_simulate(args: argparse.Namespace) -> int:
    rho, lam_true, params = build_state(args)
    d = rho.local_dim
    if args.M < 1:
        raise ConfigError("--M must be at least 1")
    if args.pairs < 0 or args.accidental < 0:
        raise ConfigError("--pairs and --accidental must be nonnegative")
    loss = _loss(args, d)
    out = _out_dir(args.out)
    ext = args.format

    def sample(setting: MeasurementSetting) -> CoincidenceTable:
        probs = setting_probabilities(rho, setting)
        return sample_counts(
            probs, args.pairs, 1.0, loss, args.accidental, args.seed, setting.label, marginals=marginals(rho, setting)
        )

    std = sample(standard_measurement(d))
    # adaptive step: the tilted bases follow the lambda nominated from the standard data
    if args.assume_uniform:
        lam_tilt = SchmidtSpectrum.uniform(d)
    elif args.tilt_from == "truth":
        lam_tilt = lam_true
    else:
        lam_tilt = nominate_target(estimate_standard(std))
    tables = [std]
    for k in range(args.M):
        b = tilted_basis(lam_tilt, k)
        label = f"{'mub' if b.kind == 'mub' else 'tilt'}{k}"
        t = sample(MeasurementSetting(GlobalProductBasis(b, b), label))
        meta = dict(t.meta, lambda_tilt=lam_tilt.to_list(), k=k)
        tables.append(CoincidenceTable(t.label, t.counts, t.singles_a, t.singles_b, t.exposure, meta))
    files = {}
    for t in tables:
        path = save_table(t, out / f"{t.label}.{ext}", ext)
        files[path.name] = file_sha256(path)
    manifest = {
        "schema": 1,
        "command": "simulate",
        "state": params,
        "M": args.M,
        "pairs": args.pairs,
        "accidental_rate": args.accidental,
        "eta_A": loss.eta_a.tolist(),
        "eta_B": loss.eta_b.tolist(),
        "seed": args.seed,
        "lambda_tilt": lam_tilt.to_list(),
        "target_fidelity": cert.target_fidelity(rho, lam_true),
        "files": files,
    }
    (out / "manifest.json").write_text(dumps(manifest))
    print(f"wrote {len(tables)} tables and manifest.json to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- certify


def _collect_tables(args: argparse.Namespace) -> list[Path]:
    paths: list[Path] = [Path(p) for p in args.inputs or []]
    if args.dir:
        root = Path(args.dir)
        if not root.is_dir():
            raise ConfigError(f"{root} is not a directory")
        for p in sorted(root.iterdir()):
            if p.suffix.lower() in (".json", ".csv") and p.name not in ("manifest.json", "report.json"):
                paths.append(p)
    if not paths:
        raise ConfigError("no input tables given (use --dir or --inputs)")
    return paths


def _tilt_index(label: str) -> int | None:
    for prefix in ("tilt", "mub"):
        if label.startswith(prefix) and label[len(prefix):].isdigit():
            return int(label[len(prefix):])
    return None


def _split_tables(tables: Sequence[CoincidenceTable]) -> tuple[CoincidenceTable, list[CoincidenceTable]]:
    std = [t for t in tables if t.label == "standard"]
    if len(std) != 1:
        raise ConfigError(f"expected exactly one 'standard' table, found {len(std)}")
    tilted = sorted((t for t in tables if _tilt_index(t.label) is not None), key=lambda t: _tilt_index(t.label))
    if not tilted:
        raise ConfigError("no tilted/MUB tables found (labels tilt<k> or mub<k>)")
    ks = [_tilt_index(t.label) for t in tilted]
    if ks != list(range(len(ks))):
        raise ConfigError(f"tilted families must be 0..M-1, found {ks}")
    dims = {t.dim for t in tables}
    if len(dims) != 1:
        raise DimensionMismatchError(f"tables disagree on dimension: {sorted(dims)}")
    return std[0], tilted


def _measured_lambda(tilted: Sequence[CoincidenceTable]) -> SchmidtSpectrum | None:
    lams = [t.meta.get("lambda_tilt") for t in tilted]
    if all(l is None for l in lams):
        return None
    if any(l is None for l in lams) or any(not np.allclose(l, lams[0], atol=1e-12) for l in lams):
        raise DataFormatError("tilted tables were measured with different lambda")
    return SchmidtSpectrum.normalized(lams[0])


def _run_pipeline(std, tilted, lam, loss_correct: bool) -> dict[str, float]:
    use_loss = loss_correct and std.has_singles
    std_est = estimate_standard_corrected(std) if use_loss else estimate_standard(std)
    tilt_est = [estimate_tilted(t, lam, std_est) for t in tilted]
    br = cert.fidelity_bound(std_est, tilt_est, lam)
    out = {"f_tilde": br.f_tilde}
    for k, b in enumerate(cert.thresholds(lam), start=1):
        out[f"margin_B_{k}"] = br.f_tilde - b
    if lam.is_uniform:
        out["eof_bound"] = cert.eof_bound(std_est, br.f_tilde, lam.d)
    return out


def cmd_certify(args: argparse.Namespace) -> int:
    paths = _collect_tables(args)
    tables = [load_table(p) for p in paths]
    std, tilted = _split_tables(tables)
    d = std.dim
    measured = _measured_lambda(tilted)
    if args.assume_uniform:
        lam, source = SchmidtSpectrum.uniform(d), "assumed-uniform"
    elif args.lambda_file:
        lam, source = load_lambda(args.lambda_file), "lambda-file"
    elif measured is not None:
        lam, source = measured, "table-metadata"
    else:
        use_loss = args.loss_correction and std.has_singles
        std_est = estimate_standard_corrected(std) if use_loss else estimate_standard(std)
        lam, source = nominate_target(std_est), "nominated"
    if lam.d != d:
        raise DimensionMismatchError(f"lambda has {lam.d} entries, tables have d={d}")
    if not lam.strictly_positive:
        tilted_basis(lam)  # raises IncompleteBasisError with the offending indices
    flags_extra = {}
    if measured is not None and not np.allclose(measured.lambdas, lam.lambdas, atol=1e-9):
        flags_extra["lambda_differs_from_measured_basis"] = True

    use_loss = args.loss_correction and std.has_singles
    std_est = estimate_standard_corrected(std) if use_loss else estimate_standard(std)
    tilt_est = [estimate_tilted(t, lam, std_est) for t in tilted]
    sigma = None
    summary = None
    if args.resamples >= 2:
        summary = resample_pipeline(
            [std, *tilted],
            ResampleSpec(args.resamples, args.seed),
            lambda ts: _run_pipeline(ts[0], ts[1:], lam, args.loss_correction),
        )
        sigma = summary.std
    provenance = {
        "inputs": {p.name: file_sha256(p) for p in paths},
        "lambda_source": source,
        "loss_corrected": use_loss,
        "resamples": args.resamples,
        "seed": args.seed,
    }
    if summary is not None:
        provenance["resample"] = summary.to_json()
    report = cert.certify(std_est, tilt_est, lam, sigma, provenance)
    report.flags.update(flags_extra)
    out = Path(args.out) if args.out else _out_dir(None) / "report.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(dumps(report.to_json()))

    pm = f" +/- {report.f_tilde_sigma:.4f}" if report.f_tilde_sigma is not None else ""
    print(f"d = {d}, M = {report.M}, lambda from {source}")
    print(f"F~ = {report.f_tilde:.4f}{pm}")
    print("B_k: " + ", ".join(f"B_{k}={b:.4f}" for k, b in enumerate(report.thresholds, start=1)))
    print(f"d_ent = {report.d_ent}" + ("" if report.entanglement_certified else " (no entanglement certified)"))
    if report.eof_bound is not None:
        es = f" +/- {report.eof_sigma:.4f}" if report.eof_sigma is not None else ""
        print(f"EoF >= {report.eof_bound:.4f}{es} ebits")
    if summary is not None and summary.n_failed:
        print(f"warning: {summary.n_failed} of {args.resamples} resamples failed: {summary.failures}")
    print(f"report written to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- sweep


def _grid(n: int, hi: float = 1.0) -> list[float]:
    if n < 2:
        raise ConfigError("--points must be at least 2")
    return [hi * i / (n - 1) for i in range(n)]


def cmd_sweep(args: argparse.Namespace) -> int:
    out = _out_dir(args.out)
    fam = args.family
    ds = _int_range(args.d) if args.d else [3]
    Ms = _int_range(args.M) if args.M else [1]
    if any(d < 2 for d in ds) or any(M < 1 for M in Ms):
        raise ConfigError("need d >= 2 and M >= 1")
    thresholds: dict[str, Any] = {"schema": 1, "family": fam}
    if fam == "isotropic":
        rows = []
        for d in ds:
            for M in Ms:
                for pt in cert.isotropic_sweep(d, _grid(args.points), M):
                    rows.append((d, M, pt.x, pt.f_tilde, pt.d_ent, pt.eof_bound))
                thresholds[f"d={d},M={M}"] = {f"p_{k}": p for k, p in cert.isotropic_thresholds(d, M).items()}
        header = ("d", "M", "p", "f_tilde", "d_ent", "eof_bound")
    elif fam == "M-comparison":
        rows = []
        for d in ds:
            Mlist = Ms if args.M else list(range(1, d + 1))
            for M in Mlist:
                for pt in cert.isotropic_sweep(d, _grid(args.points), M):
                    rows.append((d, M, pt.x, pt.f_tilde, pt.d_ent))
                thresholds[f"d={d},M={M}"] = {f"p_{k}": p for k, p in cert.isotropic_thresholds(d, M).items()}
        header = ("d", "M", "p", "f_tilde", "d_ent")
    elif fam == "rotation":
        d = ds[0]
        rows = [(pt.x, pt.f_tilde, pt.d_ent) for pt in cert.rotation_sweep(_grid(args.points, math.pi / 2), d)]
        th = cert.rotation_threshold(d)
        thresholds[f"d={d}"] = {"theta_max_full_dimension": th, "fraction_of_quarter_turn": None if th is None else th / (math.pi / 2)}
        header = ("theta", "f_tilde", "d_ent")
    elif fam == "eof-crit":
        rows = []
        for d in ds:
            bw = cert.p_crit_bw(d)
            for M in Ms:
                rows.append((d, M, cert.f_of_M(None, d, M), cert.p_crit(d, M), cert.eof_zero_crossing(d, M), bw))
        header = ("d", "M", "f_M", "p_crit", "p_crit_bisection", "p_crit_bw")
    else:
        raise ConfigError(f"unknown sweep family {fam}")
    name = fam.replace("-", "_")
    if args.format == "json":
        (out / f"{name}.json").write_text(dumps({"schema": 1, "columns": list(header), "rows": [list(r) for r in rows]}))
    else:
        (out / f"{name}.csv").write_text(_write_csv(rows, header))
    (out / f"{name}_thresholds.json").write_text(dumps(thresholds))
    print(f"{fam}: {len(rows)} rows written to {out}")
    for key, val in thresholds.items():
        if key not in ("schema", "family"):
            print(f"  {key}: {val}")
    return EXIT_OK


# ---------------------------------------------------------------- ghz


def _load_matrix(path: str, dims: tuple[int, ...]) -> DensityMatrix:
    try:
        doc = json.loads(Path(path).read_text())
        arr = np.asarray(doc["matrix"] if isinstance(doc, dict) else doc, dtype=float)
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise DataFormatError(f"cannot read matrix from {path}: {exc}") from exc
    if arr.ndim == 3 and arr.shape[-1] == 2:
        mat = arr[..., 0] + 1j * arr[..., 1]
    elif arr.ndim == 2:
        mat = arr.astype(complex)
    else:
        raise DataFormatError("matrix must be D x D reals or D x D x 2 [re, im] pairs")
    return DensityMatrix(dims, mat)


def cmd_ghz(args: argparse.Namespace) -> int:
    lam = _spectrum_arg(args, args.d)
    d = args.d if args.d is not None else (lam.d if lam else None)
    if d is None or d < 2 or args.n < 2:
        raise ConfigError("need --d >= 2 (or a lambda) and --n >= 2")
    lam = lam or SchmidtSpectrum.uniform(d)
    if d**args.n > args.cap:
        raise ConfigError(f"total dimension {d}^{args.n} exceeds cap {args.cap}")
    if not lam.strictly_positive:
        raise IncompleteBasisError("incomplete tilted basis: lambda contains zeros")
    dims = (d,) * args.n
    if args.matrix_file:
        rho = _load_matrix(args.matrix_file, dims)
        exact = None
    else:
        if not 0.0 <= args.p <= 1.0:
            raise ConfigError("--p must lie in [0, 1]")
        rho = white_noise_mixture(ghz_state(lam, args.n, args.cap), args.p)
        exact = cert.ghz_exact_fidelity(rho, lam, args.n)
    bound = cert.ghz_fidelity_bound(rho, lam, args.n)
    doc = {"schema": 1, "d": d, "n": args.n, "lambda": lam.to_list(), "p": None if args.matrix_file else args.p,
           "bound": bound, "exact_fidelity": exact}
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(dumps(doc))
    print(f"GHZ bound (n={args.n}, d={d}) = {bound:.6f}")
    if exact is not None:
        print(f"exact fidelity = {exact:.6f}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdent", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="write Poisson-sampled coincidence tables")
    s.add_argument("--family", choices=["isotropic", "target", "dephased", "noisy-target", "rank-k"], required=True)
    s.add_argument("--d", type=int)
    s.add_argument("--p", type=float)
    s.add_argument("--k", type=int)
    s.add_argument("--lambda", dest="lam", help="comma-separated Schmidt amplitudes (renormalized)")
    s.add_argument("--lambda-file")
    s.add_argument("--M", type=int, default=1, help="number of tilted bases")
    s.add_argument("--pairs", type=float, default=1e6, help="expected pairs per setting")
    s.add_argument("--accidental", type=float, default=0.0, help="flat accidental rate per cell")
    s.add_argument("--eta-a")
    s.add_argument("--eta-b")
    s.add_argument("--assume-uniform", action="store_true", help="measure MUBs regardless of the standard data")
    s.add_argument("--tilt-from", choices=["data", "truth"], default="data")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--format", choices=["json", "csv"], default="json")
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("certify", help="certify entanglement dimensionality from tables")
    c.add_argument("--dir")
    c.add_argument("--inputs", nargs="*")
    c.add_argument("--assume-uniform", action="store_true")
    c.add_argument("--lambda-file")
    c.add_argument("--no-loss-correction", dest="loss_correction", action="store_false")
    c.add_argument("--resamples", type=int, default=1000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out")
    c.set_defaults(func=cmd_certify)

    w = sub.add_parser("sweep", help="analytic curves and thresholds")
    w.add_argument("--family", choices=["isotropic", "rotation", "M-comparison", "eof-crit"], required=True)
    w.add_argument("--d", help="dimension, list or range like 3..10")
    w.add_argument("--M", help="number of tilted bases, list or range")
    w.add_argument("--points", type=int, default=101)
    w.add_argument("--format", choices=["json", "csv"], default="csv")
    w.add_argument("--out")
    w.set_defaults(func=cmd_sweep)

    g = sub.add_parser("ghz", help="multipartite fidelity bound")
    g.add_argument("--d", type=int)
    g.add_argument("--n", type=int, default=3)
    g.add_argument("--lambda", dest="lam")
    g.add_argument("--lambda-file")
    g.add_argument("--p", type=float, default=1.0, help="white-noise visibility")
    g.add_argument("--matrix-file")
    g.add_argument("--cap", type=int, default=DEFAULT_DIM_CAP)
    g.add_argument("--out")
    g.set_defaults(func=cmd_ghz)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IncompleteBasisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCOMPLETE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataFormatError, DimensionMismatchError, InvalidStateError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except UnsupportedModeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
