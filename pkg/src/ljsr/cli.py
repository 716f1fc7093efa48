"""Command-line front end.

Grammar::

    ljsr <subcommand> [--key value]... [--config file]

A config file holds one ``key = value`` per line (``#`` starts a comment);
command-line keys override file keys. Unknown keys are rejected. Exit codes
are 0 on success, 2 on configuration or input errors and 3 on numerical
failures. ``LJSR_THREADS`` caps the worker threads used by sweeps
(0 = serial).

Every run writes the resolved configuration to ``<out>/config``, which can
be fed back through ``--config`` to reproduce the run.
"""

import argparse
import logging
import os
import sys
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, model, recovery, sampling, subspace
from .fmx import FMXError, read_fmx, write_fmx

log = logging.getLogger("ljsr")

REQUIRED = object()


class ConfigError(ValueError):
    """Invalid, missing or unknown configuration key."""


# -- value parsers -------------------------------------------------------------

def _int(lo=None):
    def parse(s):
        v = int(s)
        if lo is not None and v < lo:
            raise ValueError(f"must be >= {lo}")
        return v
    parse.kind = "int" if lo is None else f"int >= {lo}"
    return parse


def _float(positive=False):
    def parse(s):
        v = float(s)
        if not np.isfinite(v) or (positive and v <= 0):
            raise ValueError("must be a positive number" if positive else "must be finite")
        return v
    parse.kind = "float > 0" if positive else "float"
    return parse


def _optional(inner, word):
    def parse(s):
        return None if str(s).lower() == word else inner(s)
    parse.kind = f"{inner.kind} or '{word}'"
    parse.word = word
    return parse


def _choice(*opts):
    def parse(s):
        if s not in opts:
            raise ValueError(f"must be one of {', '.join(opts)}")
        return s
    parse.kind = "|".join(opts)
    return parse


def _int_list(s):
    """``"1,2,5"`` or an inclusive range ``"1:12"``."""
    out = []
    for part in str(s).split(","):
        part = part.strip()
        if ":" in part:
            a, b = part.split(":")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    if not out or min(out) < 1:
        raise ValueError("needs positive integers")
    return out


_int_list.kind = "list like 1,2,5 or 1:12"


def _text(s):
    if not str(s):
        raise ValueError("must not be empty")
    return str(s)


_text.kind = "text"


def _fmt(v):
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ",".join(str(x) for x in v)
    return str(v)


# -- key tables ----------------------------------------------------------------

def _keys(*rows):
    return {name: (parser, default, doc) for name, parser, default, doc in rows}


OUT = _keys(("out", _text, ".", "output directory"),
            ("seed", _int(0), 0, "base seed"))

PHANTOM = _keys(
    ("nx", _int(4), 32, "frame rows"),
    ("ny", _int(4), 32, "frame columns"),
    ("N", _int(1), 60, "number of frames"),
    ("period", _int(1), 6, "phantom period (its rank)"),
    ("k_target", _optional(_int(1), "none"), None, "target gradient-support size"),
)

SAMPLING = _keys(
    ("common_kind", _choice(*sampling.KINDS), "fourier-lines", "common operator kind"),
    ("common_size", _int(1), 4, "common rows (dense) or lines (Fourier)"),
    ("var_kind", _choice(*sampling.KINDS), "fourier-lines", "variable operator kind"),
    ("var_size", _int(1), 3, "rows or lines per variable operator"),
    ("scheme", _choice(*sampling.SCHEMES), "consecutive", "clustering scheme"),
    ("clusters", _int(1), 10, "number of distinct variable operators"),
    ("snr_db", _optional(_float(), "none"), None, "measurement SNR in dB"),
)

SOLVER = _keys(
    ("rank", _optional(_int(1), "auto"), None, "subspace rank (auto: eigenvalue threshold)"),
    ("rank_tol", _float(True), 1e-8, "relative eigenvalue threshold for auto rank"),
    ("solver", _choice("admm", "lsq"), "admm", "step-two solver"),
    ("lam", _float(True), 1e-5, "gradient-penalty weight (normalized units)"),
    ("beta", _float(True), 10.0, "ADMM penalty (normalized units)"),
    ("max_outer", _int(1), 5000, "ADMM iteration cap"),
    ("pcg_tol", _float(True), 1e-8, "PCG relative tolerance"),
    ("pcg_max", _int(1), 100, "PCG iteration cap"),
    ("stop_tol", _float(True), 1e-5, "ADMM stopping tolerance"),
    ("precond", _choice("auto", "circulant", "fourier-block", "none"), "auto",
     "P-step preconditioner"),
    ("lsq_tol", _float(True), 1e-10, "least-squares CG tolerance"),
    ("lsq_max", _int(1), 1000, "least-squares CG iteration cap"),
)

RANDOM = _keys(
    ("n", _int(1), 20, "signal length (random signal)"),
    ("r", _int(1), 2, "rank (random signal)"),
    ("k", _int(1), 5, "joint sparsity (random signal)"),
)

SUBCOMMAND_KEYS = {
    "phantom": {**OUT, **_keys(
        ("nx", _int(4), REQUIRED, "frame rows"),
        ("ny", _int(4), REQUIRED, "frame columns"),
        ("N", _int(1), REQUIRED, "number of frames"),
        ("period", _int(1), REQUIRED, "phantom period"),
        ("k_target", _optional(_int(1), "none"), None, "target gradient-support size"),
        ("n", _int(1), REQUIRED, "signal length (random model)"),
        ("r", _int(1), REQUIRED, "rank (random model)"),
        ("k", _int(1), REQUIRED, "joint sparsity (random model)"),
    )},
    "pipeline": {**OUT, **_keys(
        ("signal", _choice("phantom", "random", "file"), "phantom", "signal source"),
        ("x_path", _optional(_text, "none"), None, "X.fmx for signal=file"),
    ), **PHANTOM, **RANDOM, **SAMPLING, **SOLVER},
    "recover": {**OUT, **_keys(
        ("measurements", _text, REQUIRED, "MeasurementSet directory"),
        ("operators", _text, REQUIRED, "variable operator directory"),
        ("q", _text, REQUIRED, "subspace factor Q.fmx"),
        ("nx", _optional(_int(1), "none"), None, "frame rows (dense operators)"),
        ("ny", _optional(_int(1), "none"), None, "frame columns (dense operators)"),
        ("truth", _optional(_text, "none"), None, "ground-truth X.fmx"),
    ), **{k: v for k, v in SOLVER.items() if k not in ("rank", "rank_tol")}},
    "fig2": {**OUT, **PHANTOM, **_keys(
        ("kind", _choice(*sampling.KINDS), "dense-gaussian", "common operator kind"),
        ("mc_values", _int_list, _int_list("1:12"), "common sizes to sweep"),
        ("trials", _int(1), 10, "trials per size"),
    )},
    "fig3": {**OUT, **PHANTOM, **{k: v for k, v in SAMPLING.items() if k != "snr_db"},
             **SOLVER, **_keys(
        ("snr_db", _float(), 35.0, "SNR of the noisy run"),
        ("lam_noisy", _float(True), 1e-3, "gradient-penalty weight of the noisy run"),
    )},
    "fig4": {**OUT, **PHANTOM,
             **{k: v for k, v in SAMPLING.items() if k not in ("scheme",)},
             **SOLVER, **_keys(
        ("periodic_clusters", _optional(_int(1), "auto"), None,
         "operators in the periodic scheme (auto: the period)"),
    )},
    "budget": {**_keys(
        ("k", _int(1), REQUIRED, "joint sparsity"),
        ("r", _int(1), REQUIRED, "rank"),
        ("N", _int(1), REQUIRED, "number of frames"),
        ("format", _choice("text", "csv"), "text", "output format"),
    )},
    "spark": {**_keys(("path", _text, REQUIRED, "matrix in FMX format"))},
}

PHANTOM_RANDOM = ("n", "r", "k")
PHANTOM_GRID = ("nx", "ny", "N", "period")


def _threads():
    raw = os.environ.get("LJSR_THREADS", "0")
    try:
        t = int(raw)
    except ValueError:
        raise ConfigError(f"LJSR_THREADS must be an integer, got {raw!r}") from None
    if t < 0:
        raise ConfigError("LJSR_THREADS must be >= 0")
    return t


def parse_pairs(tokens):
    """``--key value`` / ``--key=value`` tokens to a dict."""
    out = {}
    it = iter(tokens)
    for tok in it:
        if not tok.startswith("--") or len(tok) < 3:
            raise ConfigError(f"expected --key, got {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
        else:
            try:
                val = next(it)
            except StopIteration:
                raise ConfigError(f"key {key!r} has no value") from None
        out[key.replace("-", "_")] = val
    return out


def read_config_file(path):
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e.strerror}") from None
    out = {}
    for num, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, val = line.partition("=")
        if not eq or not key.strip():
            raise ConfigError(f"{path}:{num}: expected 'key = value'")
        out[key.strip()] = val.strip()
    return out


def resolve(command, raw):
    """Validate raw string values against the key table of `command`.

    Returns a dict of typed values with defaults filled in. Required keys
    that are absent raise ConfigError naming the key.
    """
    table = SUBCOMMAND_KEYS[command]
    unknown = sorted(set(raw) - set(table))
    if unknown:
        raise ConfigError(f"unknown key(s) for {command}: {', '.join(unknown)}")
    need = set(k for k, (_, d, _) in table.items() if d is REQUIRED)
    if command == "phantom":
        # Either the grid phantom or the random model.
        random_mode = any(k in raw for k in PHANTOM_RANDOM)
        need = set(PHANTOM_RANDOM + ("N",)) if random_mode else set(PHANTOM_GRID)
    cfg = {}
    for key, (parser, default, _) in table.items():
        if key in raw:
            try:
                cfg[key] = parser(raw[key])
            except (TypeError, ValueError) as e:
                raise ConfigError(f"key {key!r}: invalid value {raw[key]!r} "
                                  f"({parser.kind}): {e}") from None
        elif key in need:
            raise ConfigError(f"missing required key {key!r}")
        elif default is not REQUIRED:
            cfg[key] = default
    return cfg


def write_config(path, command, cfg, note=None):
    lines = [f"# ljsr {command}"]
    if note:
        lines += [f"# {n}" for n in note]
    table = SUBCOMMAND_KEYS[command]
    for k, v in cfg.items():
        word = getattr(table[k][0], "word", None) if k in table else None
        lines.append(f"{k} = {word if v is None and word else _fmt(v)}")
    Path(path).write_text("\n".join(lines) + "\n")


def _csv(path, header, rows):
    body = [",".join(header)]
    body += [",".join(_fmt(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(body) + "\n")


# -- subcommands ---------------------------------------------------------------

def cmd_phantom(cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    if "n" in cfg:
        X = model.make_random_lrjs(cfg["n"], cfg["N"], cfg["r"], cfg["k"], cfg["seed"])
        meta = {"model": "random", "n": cfg["n"], "N": cfg["N"], "r": cfg["r"],
                "k": cfg["k"], "support": " ".join(map(str, sorted(X.true_support)))}
    else:
        spec = model.PhantomSpec(cfg["nx"], cfg["ny"], cfg["N"], cfg["period"],
                                 cfg.get("k_target"), cfg["seed"])
        X = model.make_dynamic_phantom(spec)
        meta = {"model": "phantom", "nx": spec.nx, "ny": spec.ny, "N": spec.N,
                "period": spec.period, "n_static": X.meta["n_static"]}
    meta.update({"seed": cfg["seed"], "rank": X.true_rank})
    write_fmx(out / "X.fmx", X.values)
    sampling.write_kv(out / "meta", meta)
    write_config(out / "config", "phantom", cfg)
    print(f"wrote {out / 'X.fmx'} ({X.n} x {X.N}, rank {X.true_rank})")
    return 0


def _make_signal(cfg):
    if cfg["signal"] == "random":
        return model.make_random_lrjs(cfg["n"], cfg["N"], cfg["r"], cfg["k"], cfg["seed"])
    if cfg["signal"] == "file":
        if cfg["x_path"] is None:
            raise ConfigError("signal=file needs x_path")
        X = read_fmx(cfg["x_path"])
        if X.shape[0] != cfg["nx"] * cfg["ny"]:
            raise ConfigError(f"x_path has {X.shape[0]} rows, nx*ny = "
                              f"{cfg['nx'] * cfg['ny']}")
        return model.SignalMatrix(X.astype(complex), frame_shape=(cfg["nx"], cfg["ny"]),
                                  true_rank=model.numerical_rank(X))
    spec = model.PhantomSpec(cfg["nx"], cfg["ny"], cfg["N"], cfg["period"],
                             cfg["k_target"], cfg["seed"])
    return model.make_dynamic_phantom(spec)


def _seeds(seed):
    return {"common": seed + 1, "variable": seed + 2, "noise": seed + 3}


def _solve(cfg, ms, A, est, shape):
    """Step two; returns (P, report rows, iterations, converged, extras)."""
    if cfg["solver"] == "lsq":
        B = recovery.BlockSystem(A, est)
        res = recovery.solve_least_squares(B, ms.Y, tol=cfg["lsq_tol"],
                                           max_iter=cfg["lsq_max"])
        obj = 0.5 * sum(float(np.sum(np.abs(f - y) ** 2))
                        for f, y in zip(B.forward(res.P), ms.Y))
        rows = [(res.iterations, obj, None, res.iterations)]
        return res.P, rows, res.iterations, res.converged, {"unique": res.unique}
    acfg = recovery.ADMMConfig(lam=cfg["lam"], beta=cfg["beta"], max_outer=cfg["max_outer"],
                               pcg_tol=cfg["pcg_tol"], pcg_max=cfg["pcg_max"],
                               stop_tol=cfg["stop_tol"], precond=cfg["precond"],
                               seed=cfg["seed"])
    res, report = recovery.admm_recover(ms.Y, A, est, acfg, frame_shape=shape)
    return res.P, report.rows(), report.iterations_run, report.converged, {}


def run_pipeline(cfg, out):
    """Full two-step run; writes every artifact under `out` and returns the summary."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    X = _make_signal(cfg)
    shape = X.frame_shape
    seeds = _seeds(cfg["seed"])
    dims = shape if shape is not None else X.n
    for kind in (cfg["common_kind"], cfg["var_kind"]):
        if kind == "fourier-lines" and shape is None:
            raise ConfigError("fourier-lines operators need a 2D signal (signal=phantom|file)")
    Phi = sampling.build_common(cfg["common_kind"], cfg["common_size"], dims, seeds["common"])
    A = sampling.build_variable_set(cfg["scheme"], cfg["clusters"], X.N, cfg["var_size"],
                                    dims, cfg["var_kind"], seeds["variable"])
    sigma = 0.0
    if cfg["snr_db"] is not None:
        sigma = sampling.noise_sigma_for_snr(X, Phi, A, cfg["snr_db"])
    ms = sampling.measure(X, Phi, A, sigma, seeds["noise"])
    t1 = time.perf_counter()

    G = subspace.gram(ms.Z)
    est = subspace.estimate_right_subspace(G, cfg["rank"], cfg["rank_tol"])
    t2 = time.perf_counter()

    P, rows, iters, converged, extra = _solve(cfg, ms, A, est, shape)
    Xhat = recovery.reconstruct(P, est.Q, shape)
    t3 = time.perf_counter()

    sampling.save_measurements(out / "measurements", ms, {"seed": seeds["noise"]})
    sampling.save_variable_set(out / "operators", A)
    sampling.save_operator(out / "operators" / "common", Phi)
    write_fmx(out / "X.fmx", X.values)
    write_fmx(out / "Q.fmx", est.Q)
    _csv(out / "eigenvalues.csv", ["index", "eigenvalue"],
         [(i + 1, float(v)) for i, v in enumerate(est.eigenvalues)])
    write_fmx(out / "P.fmx", P)
    write_fmx(out / "Xhat.fmx", Xhat.values)
    _csv(out / "report.csv", ["iter", "objective", "primal_residual", "pcg_iters"], rows)

    summary = {
        "r_est": est.r_est,
        "true_rank": X.true_rank,
        "projection_error": None,
        "relative_error": recovery.relative_error(Xhat, X),
        "iterations": iters,
        "converged": int(bool(converged)),
        "noise_sigma": sigma,
    }
    if X.true_rank:
        V = model.truncated_svd(X.values, X.true_rank).V
        summary["projection_error"] = subspace.projection_error(est.Q, V)
    if "unique" in extra:
        summary["unique"] = extra["unique"]
    summary.update({"time_acquire": t1 - t0, "time_subspace": t2 - t1,
                    "time_recover": t3 - t2})
    sampling.write_kv(out / "summary", {k: _fmt(v) for k, v in summary.items()})
    write_config(out / "config", "pipeline", {**cfg, "out": str(out)},
                 note=[f"derived seeds: common={seeds['common']} "
                       f"variable={seeds['variable']} noise={seeds['noise']}"])
    return summary


def cmd_pipeline(cfg):
    s = run_pipeline(cfg, cfg["out"])
    print(f"relative_error = {_fmt(s['relative_error'])}")
    print(f"projection_error = {_fmt(s['projection_error'])}")
    return 0


def cmd_recover(cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    ms = sampling.load_measurements(cfg["measurements"])
    A = sampling.load_variable_set(cfg["operators"])
    Q = read_fmx(cfg["q"])
    shape = None
    if cfg["nx"] is not None and cfg["ny"] is not None:
        shape = (cfg["nx"], cfg["ny"])
    elif isinstance(A.clusters[0], sampling.FourierLinesOperator):
        shape = A.clusters[0].shape
    X = None
    if cfg["truth"] is not None:
        X = model.SignalMatrix(read_fmx(cfg["truth"]).astype(complex), frame_shape=shape)
    if cfg["solver"] == "admm" and shape is None:
        raise ConfigError("ADMM needs nx and ny for dense operators")
    P, rows, iters, converged, _ = _solve(cfg, ms, A, Q, shape)
    Xhat = recovery.reconstruct(P, Q, shape)
    write_fmx(out / "P.fmx", P)
    write_fmx(out / "Xhat.fmx", Xhat.values)
    _csv(out / "report.csv", ["iter", "objective", "primal_residual", "pcg_iters"], rows)
    summary = {"iterations": iters, "converged": int(bool(converged))}
    if X is not None:
        summary["relative_error"] = recovery.relative_error(Xhat, X)
    sampling.write_kv(out / "summary", {k: _fmt(v) for k, v in summary.items()})
    write_config(out / "config", "recover", cfg)
    for k, v in summary.items():
        print(f"{k} = {_fmt(v)}")
    return 0


def cmd_fig2(cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    spec = model.PhantomSpec(cfg["nx"], cfg["ny"], cfg["N"], cfg["period"],
                             cfg["k_target"], cfg["seed"])
    X = model.make_dynamic_phantom(spec)
    rows = subspace.subspace_error_curve(X, cfg["mc_values"], cfg["trials"], cfg["seed"],
                                         kind=cfg["kind"], threads=_threads())
    _csv(out / "fig2.csv", ["m_c", "mean_proj_err", "max_proj_err"], rows)
    write_config(out / "config", "fig2", cfg)
    for m, mean, worst in rows:
        print(f"m_c={m:3d}  mean={mean:.3e}  max={worst:.3e}")
    return 0


def _phantom_rank(cfg):
    return cfg["rank"] if cfg["rank"] is not None else cfg["period"]


def cmd_fig3(cfg):
    out = Path(cfg["out"])
    base = {k: v for k, v in cfg.items() if k in SUBCOMMAND_KEYS["pipeline"]}
    base.update(signal="phantom", x_path=None, rank=_phantom_rank(cfg),
                **{k: d for k, (_, d, _) in RANDOM.items()})
    runs = [("noiseless", {**base, "snr_db": None}),
            ("noisy", {**base, "snr_db": cfg["snr_db"], "lam": cfg["lam_noisy"]})]
    rows = []
    for name, rc in runs:
        s = run_pipeline(rc, out / name)
        rows.append((name, rc["snr_db"], rc["lam"], s["relative_error"],
                     s["projection_error"], s["iterations"], s["converged"]))
    _csv(out / "fig3.csv", ["run", "snr_db", "lam", "relative_error",
                            "projection_error", "iterations", "converged"], rows)
    write_config(out / "config", "fig3", cfg)
    for row in rows:
        print(f"{row[0]:>10}: relative_error={row[3]:.3e}")
    return 0


def cmd_fig4(cfg):
    out = Path(cfg["out"])
    base = {k: v for k, v in cfg.items() if k in SUBCOMMAND_KEYS["pipeline"]}
    base.update(signal="phantom", x_path=None, rank=_phantom_rank(cfg),
                **{k: d for k, (_, d, _) in RANDOM.items()})
    periodic_p = cfg["periodic_clusters"] or cfg["period"]
    runs = [("consecutive", {**base, "scheme": "consecutive"}),
            ("permuted", {**base, "scheme": "permuted"}),
            ("periodic", {**base, "scheme": "periodic", "clusters": periodic_p})]
    threads = _threads()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=min(threads, len(runs))) as ex:
            summaries = list(ex.map(lambda nr: run_pipeline(nr[1], out / nr[0]), runs))
    else:
        summaries = [run_pipeline(rc, out / name) for name, rc in runs]
    rows = [(name, rc["clusters"], s["relative_error"], s["projection_error"],
             s["iterations"], s["converged"])
            for (name, rc), s in zip(runs, summaries)]
    _csv(out / "fig4.csv", ["scheme", "clusters", "relative_error", "projection_error",
                            "iterations", "converged"], rows)
    write_config(out / "config", "fig4", cfg)
    for row in rows:
        print(f"{row[0]:>12}: relative_error={row[2]:.3e}")
    return 0


def cmd_budget(cfg):
    try:
        rep = analysis.budget(cfg["k"], cfg["r"], cfg["N"])
    except ValueError as e:
        raise ConfigError(str(e)) from None
    if cfg["format"] == "csv":
        print(rep.csv_header())
        print(rep.csv_row())
    else:
        print(rep.as_text())
    return 0


def cmd_spark(cfg):
    M = read_fmx(cfg["path"])
    if M.shape[1] > model.SPARK_MAX_COLS:
        raise ConfigError(f"{cfg['path']}: {M.shape[1]} columns exceed the spark "
                          f"oracle limit of {model.SPARK_MAX_COLS}")
    print(model.spark_bruteforce(M))
    return 0


COMMANDS = {
    "phantom": (cmd_phantom, "write a phantom or random low-rank jointly sparse X"),
    "pipeline": (cmd_pipeline, "measure, estimate the subspace and recover"),
    "recover": (cmd_recover, "recover from saved measurements, operators and Q"),
    "fig2": (cmd_fig2, "subspace error vs common-operator size"),
    "fig3": (cmd_fig3, "noiseless and noisy recovery of the phantom"),
    "fig4": (cmd_fig4, "effect of the clustering scheme"),
    "budget": (cmd_budget, "measurement budgets"),
    "spark": (cmd_spark, "brute-force spark of a small FMX matrix"),
}


def _key_help(command):
    lines = ["keys:"]
    for key, (parser, default, doc) in SUBCOMMAND_KEYS[command].items():
        d = "required" if default is REQUIRED else f"default {_fmt(default)}"
        lines.append(f"  --{key:<18} {doc} [{parser.kind}; {d}]")
    return "\n".join(lines)


def build_parser():
    parser = argparse.ArgumentParser(prog="ljsr", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, doc) in COMMANDS.items():
        p = sub.add_parser(name, help=doc, description=doc, epilog=_key_help(name),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", help="key = value file")
    return parser


def _origin(exc):
    """Module in which `exc` was raised, for error prefixes."""
    tb = exc.__traceback__
    name = "ljsr"
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", "")
        if mod.startswith("ljsr"):
            name = mod
        tb = tb.tb_next
    return name


def main(argv=None):
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        raw = read_config_file(args.config) if args.config else {}
        if args.command == "spark" and extra and not extra[0].startswith("--"):
            # `ljsr spark file.fmx` shorthand for --path.
            extra = ["--path"] + extra
        raw.update(parse_pairs(extra))
        cfg = resolve(args.command, raw)
        return COMMANDS[args.command][0](cfg)
    except (recovery.DivergenceError, model.RankError, np.linalg.LinAlgError,
            FloatingPointError) as e:
        print(f"ljsr: numerical failure in {_origin(e)}: {e}", file=sys.stderr)
        return 3
    except (ConfigError, FMXError, ValueError, OSError) as e:
        print(f"ljsr: error in {_origin(e)}: {e}", file=sys.stderr)
        log.debug("%s", traceback.format_exc())
        return 2


if __name__ == "__main__":
    sys.exit(main())
