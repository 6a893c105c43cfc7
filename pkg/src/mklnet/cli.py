"""Command-line entry point: ``mklnet <subcommand> [flags]``.

Every run writes ``manifest.json`` (config echo, library version, seed) next
to its outputs; ``mklnet --manifest path/manifest.json`` replays it. Flags can
also come from ``--config file.json``; explicit flags win.

Exit codes: 0 success, 1 invalid input, 2 usage error, 3 numeric failure
(a ``numeric_error.json`` with diagnostics is written to the output location).
"""
import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .data import NoiseSpec, TruthSpec, read_dataset, sample_dataset
from .errors import InputError, MklError, NumericError, SelectionError
from .functions import KernelExpansion
from .geometry import (
    gaussian_copula_sampler,
    geometry_analytic_product,
    geometry_spectral_mc,
    lemma2_diagnostic,
    theorem_constants,
    uniform_sampler,
)
from .kernels import kernel_from_json
from .rates import ScheduleInputs, d_sweep, preconditions, run_rate_sweep, schedule
from .selection import ClipSpec, build_grid, select
from .solver import FitOptions, RegParams, fit, objective

log = logging.getLogger("mklnet")

EXIT_INPUT, EXIT_USAGE, EXIT_NUMERIC = 1, 2, 3
SEED_ENV = "MKLNET_SEED"
# keys that describe where to write rather than what to compute
_NOT_ECHOED = {"out", "config", "manifest", "command", "func", "verbose"}


def _ints(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


class _Out:
    """Resolve ``--out``: a directory, or a file whose parent receives the manifest."""

    def __init__(self, out, default_name):
        p = Path(out)
        if p.suffix:
            self.dir, self.main = p.parent, p
        else:
            self.dir, self.main = p, p / default_name
        self.dir.mkdir(parents=True, exist_ok=True)

    def path(self, name):
        return self.dir / name

    def write(self, name, text):
        target = self.main if name is None else self.path(name)
        target.write_text(text)
        return target


def _truth_spec(a):
    return TruthSpec(M=a.M, d=a.d, q=a.q, s=a.s, K=a.K, profile=a.profile, R_target=a.R_target,
                     support=a.support, permute=a.permute, seed=a.seed)


def _noise(a):
    if a.noise == "none":
        return NoiseSpec("none", 0.0)
    return NoiseSpec(a.noise, a.noise_level)


def _params_for(a, ds):
    explicit = [a.lam1, a.lam2, a.lam3]
    if any(v is not None for v in explicit):
        if any(v is None for v in explicit):
            raise InputError("give all of --lam1 --lam2 --lam3, or none of them")
        return RegParams(*explicit)
    if ds.truth is None:
        raise InputError("no truth sidecar for the schedule; pass --lam1 --lam2 --lam3")
    truth = ds.truth.build()
    inp = ScheduleInputs(n=ds.n, M=ds.M, d=max(truth.d, 1), s=ds.truth.s, q=ds.truth.q,
                         R2g=truth.R(2, "g"), R1f=truth.R(1, "f"), t=a.t, psi=a.psi)
    return schedule(inp, a.branch)[0]


def _kernels_for(a, ds):
    if ds.truth is not None:
        return ds.truth.build().kernels
    return kernel_from_json({"s": a.s, "K": a.K})


def _opts(a):
    return FitOptions(tol=a.tol, max_sweeps=a.max_sweeps)


# -- subcommands ------------------------------------------------------------


def cmd_gen_data(a):
    out = _Out(a.out, "data.csv")
    truth = _truth_spec(a).build()
    ds = sample_dataset(truth, a.n, _noise(a), seed=a.seed)
    ds.write(out.main)
    return out


def cmd_fit(a):
    out = _Out(a.out, "model.json")
    ds = read_dataset(a.data)
    kernels = _kernels_for(a, ds)
    params = _params_for(a, ds)
    model = fit(ds, kernels, params, _opts(a))
    body = model.to_dict(a.data)
    body["recomputed_objective"] = objective(model, ds, kernels, params)
    out.write(None, _dump(body))
    return out


def cmd_select(a):
    out = _Out(a.out, "selection.csv")
    ds = read_dataset(a.data)
    kernels = _kernels_for(a, ds)
    grid = build_grid(ds.n, a.grid_mode, a.budget)
    truth = ds.truth.build() if ds.truth is not None else None
    res = select(ds, kernels, grid, ClipSpec(a.B, a.delta), _opts(a), truth=truth, jobs=a.jobs)
    out.write(None, res.to_csv())
    chosen = res.model.model.to_dict(a.data)
    chosen["clip_B"] = res.model.B
    chosen["index"] = res.index
    out.write("selected_model.json", _dump(chosen))
    return out


def cmd_geometry(a):
    out = _Out(a.out, "geometry.json")
    I = _ints(a.I)
    if a.design == "product" and a.method == "analytic":
        rep = geometry_analytic_product(I, a.M)
    else:
        if a.design == "product":
            sampler = uniform_sampler(a.M)
        else:
            if not -1.0 / (a.M - 1) < a.corr < 1.0:
                raise InputError("equicorrelation must lie in (-1/(M-1), 1)")
            corr = np.full((a.M, a.M), a.corr)
            np.fill_diagonal(corr, 1.0)
            sampler = gaussian_copula_sampler(corr)
        kernels = [kernel_from_json({"s": a.s, "K": a.K})] * a.M
        rep = geometry_spectral_mc(kernels, I, sampler, a.K_trunc, a.n_mc, seed=a.seed)
    out.write(None, rep.to_json() + "\n")
    return out


def cmd_rates(a):
    out = _Out(a.out, "report.csv")
    opts = _opts(a)
    seeds = range(a.seed, a.seed + a.seeds)
    if a.d_grid:
        rep = d_sweep(a.n, _ints(a.d_grid), a.branch, seeds, a.M, s=a.s, q=a.q, noise=_noise(a),
                      t=a.t, psi=a.psi, K=a.K, support=a.support, opts=opts, jobs=a.jobs)
    else:
        spec = TruthSpec(M=a.M, d=a.d, q=a.q, s=a.s, K=a.K, support=a.support)
        rep = run_rate_sweep(spec, _ints(a.n_grid), seeds, a.branch, t=a.t, noise=_noise(a),
                             psi=a.psi, opts=opts, jobs=a.jobs)
    out.write(None, rep.to_csv())
    out.write("flags.json", _dump(rep.flags))
    return out


def cmd_diagnose(a):
    out = _Out(a.out, "diagnostics.json")
    ds = read_dataset(a.data)
    if ds.truth is None:
        raise InputError("diagnose needs a dataset with a truth sidecar")
    truth = ds.truth.build()
    saved = json.loads(Path(a.model).read_text())
    alphas = np.asarray(saved["alphas"], dtype=float)
    if alphas.shape != (ds.M, ds.n):
        raise InputError(f"model alphas have shape {alphas.shape}, data is {ds.n} x {ds.M}")
    kernels = [kernel_from_json(k) for k in saved["kernels"]]
    blocks = [KernelExpansion(k, ds.X[:, m], alphas[m]) for m, k in enumerate(kernels)]
    diag = lemma2_diagnostic(blocks, truth)
    const = theorem_constants(truth) if truth.d else None
    inp = ScheduleInputs(n=ds.n, M=ds.M, d=max(truth.d, 1), s=ds.truth.s, q=ds.truth.q,
                         R2g=truth.R(2, "g"), R1f=truth.R(1, "f"), t=a.t, psi=a.psi)
    body = {
        "lemma2": diag.to_dict(),
        "constants": None if const is None else asdict(const),
        "preconditions": {b: preconditions(inp, b) for b in ("l1", "elastic")},
        "R": {"R1f": truth.R(1, "f"), "R2f": truth.R(2, "f"), "R2g": truth.R(2, "g")},
    }
    out.write(None, _dump(body))
    return out


# -- parser -----------------------------------------------------------------


def _add_truth(p):
    p.add_argument("--M", type=int, default=8)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--q", type=float, default=0.0)
    p.add_argument("--s", type=float, default=0.5)
    p.add_argument("--K", type=int, default=512, help="kernel truncation")
    p.add_argument("--profile", choices=["homogeneous", "inhomogeneous", "custom"], default="homogeneous")
    p.add_argument("--R-target", dest="R_target", type=float, default=None)
    p.add_argument("--support", type=int, default=8)
    p.add_argument("--permute", action="store_true")


def _add_noise(p, default="bounded"):
    p.add_argument("--noise", choices=["bounded", "gaussian", "none"], default=default)
    p.add_argument("--noise-level", dest="noise_level", type=float, default=0.5)


def _add_fit_opts(p):
    p.add_argument("--tol", type=float, default=FitOptions.tol)
    p.add_argument("--max-sweeps", dest="max_sweeps", type=int, default=FitOptions.max_sweeps)


def _add_schedule(p):
    p.add_argument("--branch", choices=["l1", "elastic"], default="elastic")
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--psi", type=float, default=1.0)


def build_parser():
    parser = argparse.ArgumentParser(prog="mklnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mklnet {__version__}")
    parser.add_argument("--manifest", help="replay the run recorded in this manifest")
    parser.add_argument("--config", help="JSON file of flag defaults for the subcommand")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    def add(name, func, out_default, helptext):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--seed", type=int, default=None, help=f"default: ${SEED_ENV} or 0")
        p.add_argument("--out", default=out_default)
        p.set_defaults(func=func)
        return p

    p = add("gen-data", cmd_gen_data, "data", "sample a synthetic dataset")
    _add_truth(p)
    _add_noise(p)
    p.add_argument("--n", type=int, required=True)

    p = add("fit", cmd_fit, "fit", "fit one model")
    p.add_argument("--data", required=True)
    _add_schedule(p)
    for name in ("lam1", "lam2", "lam3"):
        p.add_argument(f"--{name}", type=float, default=None)
    p.add_argument("--s", type=float, default=0.5, help="kernel decay when the data has no sidecar")
    p.add_argument("--K", type=int, default=512)
    _add_fit_opts(p)

    p = add("select", cmd_select, "select", "hold-out selection over the regularization grid")
    p.add_argument("--data", required=True)
    p.add_argument("--grid-mode", dest="grid_mode", choices=["log", "exact"], default="log")
    p.add_argument("--budget", type=int, default=8)
    p.add_argument("--B", type=float, default=None, help="clipping bound (default 1.1 max|y|)")
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--s", type=float, default=0.5)
    p.add_argument("--K", type=int, default=512)
    _add_fit_opts(p)

    p = add("geometry", cmd_geometry, "geometry", "kappa, rho and the restricted-eigenvalue bound")
    p.add_argument("--M", type=int, default=4)
    p.add_argument("--I", default="0")
    p.add_argument("--design", choices=["product", "copula"], default="product")
    p.add_argument("--method", choices=["analytic", "mc"], default="analytic")
    p.add_argument("--corr", type=float, default=0.5, help="copula equicorrelation")
    p.add_argument("--s", type=float, default=0.5)
    p.add_argument("--K", type=int, default=512)
    p.add_argument("--K-trunc", dest="K_trunc", type=int, default=32)
    p.add_argument("--n-mc", dest="n_mc", type=int, default=100_000)

    p = add("rates", cmd_rates, "rates", "error-rate sweep along n (or d)")
    _add_schedule(p)
    p.add_argument("--s", type=float, default=0.5)
    p.add_argument("--q", type=float, default=0.0)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--M", type=int, default=8)
    p.add_argument("--K", type=int, default=512)
    p.add_argument("--support", type=int, default=8)
    p.add_argument("--n-grid", dest="n_grid", default="128,256,512,1024,2048")
    p.add_argument("--d-grid", dest="d_grid", default=None, help="sweep d at fixed --n instead")
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--seeds", type=int, default=20, help="number of seeds, starting at --seed")
    p.add_argument("--jobs", type=int, default=1)
    _add_noise(p)
    _add_fit_opts(p)

    p = add("diagnose", cmd_diagnose, "diagnose", "norm-recovery check and theory constants")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--psi", type=float, default=1.0)
    return parser, sub


def _parse(argv):
    parser, sub = build_parser()
    early = argparse.ArgumentParser(add_help=False)
    early.add_argument("--manifest")
    early.add_argument("--config")
    pre, _ = early.parse_known_args(argv)
    pre.command = next((v for v in argv if v in sub.choices), None)
    if pre.manifest:
        man = json.loads(Path(pre.manifest).read_text())
        command, config = man["subcommand"], dict(man["config"])
        rest = [v for v in argv if v not in ("--manifest", pre.manifest)]
        out_given = "--out" in rest
        # rebuild argv: subcommand, required flags from the manifest, then overrides
        subp = sub.choices[command]
        subp.set_defaults(**config)
        for action in subp._actions:
            action.required = False
        a = parser.parse_args([command] + rest)
        if not out_given:
            a.out = man.get("out", a.out)
        return parser, a
    if pre.config and pre.command:
        config = json.loads(Path(pre.config).read_text())
        subp = sub.choices[pre.command]
        subp.set_defaults(**{k.replace("-", "_"): v for k, v in config.items()})
        for action in subp._actions:
            if action.dest in config:
                action.required = False
    return parser, parser.parse_args(argv)


def _manifest(a):
    config = {k: v for k, v in sorted(vars(a).items()) if k not in _NOT_ECHOED}
    return {"subcommand": a.command, "config": config, "version": __version__, "seed": a.seed,
            "out": str(a.out)}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser, a = _parse(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"mklnet: cannot read manifest/config: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if not a.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if a.seed is None:
        env = os.environ.get(SEED_ENV)
        try:
            a.seed = int(env) if env not in (None, "") else 0
        except ValueError:
            print(f"mklnet: {SEED_ENV} must be an integer, got {env!r}", file=sys.stderr)
            return EXIT_INPUT
    try:
        out = a.func(a)
    except (NumericError, SelectionError) as exc:
        diag = getattr(exc, "diagnostics", None)
        target = _Out(a.out, "numeric_error.json").path("numeric_error.json")
        target.write_text(_dump({"error": type(exc).__name__, "message": str(exc),
                                 "diagnostics": diag, "manifest": _manifest(a)}))
        print(f"mklnet: numeric failure: {exc} (details in {target})", file=sys.stderr)
        return EXIT_NUMERIC
    except (MklError, ValueError, OSError) as exc:
        print(f"mklnet: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    out.write("manifest.json", _dump(_manifest(a)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
