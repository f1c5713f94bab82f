"""Command line driver: ``quadobs <command> [options]``.

Every command prints (or writes with ``--json``) one JSON document holding
the resolved configuration, its hash, the seed and the result.  Options may
come from a JSON file given with ``--config``; flags on the command line
win over the file.  Relative output paths resolve against
``$QUADOBS_OUT_DIR`` when set.

Exit codes: 0 success, 2 scientific failure (a check or scan did not
pass, or a precondition was refused), 1 usage or runtime error.
"""
from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import math
import os
import sys

SCHEMA = 1
EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
OUT_ENV = "QUADOBS_OUT_DIR"
DEFAULT_EPS = "1e-2,5e-3,2.5e-3,1.25e-3"
# options that change where or how fast, never what
_UNHASHED = {"config", "json", "csv", "threads", "no_timestamp", "command"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _jsonable(obj):
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if obj is None or isinstance(obj, (str, int)):
        return obj
    return str(obj)


def config_hash(command, options):
    doc = {"command": command, **{k: v for k, v in options.items() if k not in _UNHASHED}}
    text = json.dumps(_jsonable(doc), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _out_path(path):
    base = os.environ.get(OUT_ENV)
    if base and not os.path.isabs(path):
        os.makedirs(base, exist_ok=True)
        return os.path.join(base, path)
    return path


def _emit(args, options, result, passed=True):
    doc = {"schema": SCHEMA, "command": args.command,
           "config": {k: v for k, v in options.items() if k not in _UNHASHED},
           "config_hash": config_hash(args.command, options),
           "seed": options.get("seed"), "passed": bool(passed), "result": result}
    if not args.no_timestamp:
        doc["timestamp"] = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    text = json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"
    if args.json:
        with open(_out_path(args.json), "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if passed else EXIT_FAIL


# -- shared inputs ---------------------------------------------------------------

def _dipoles(spec, k, K, J):
    """``golden:<k>`` or a path; returns ``(DipoleSet, ProblemConfig)``."""
    from .mu_design import golden_config, load_golden
    from .spectral_basis import ProblemConfig, load_dipoles

    if spec is None:
        raise UsageError("--mu is required")
    if spec.startswith("golden:"):
        try:
            gk = int(spec.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"bad golden reference {spec!r}") from None
        mus, cfg, _ = load_golden(gk)
        base = golden_config(gk)
        cfg = base.replace(K=K or base.K, J=J or base.J)
        return mus, cfg.replace(k=k or gk)
    mus = load_dipoles(spec)
    return mus, ProblemConfig(k=k or 1, K=K or 2, r=mus.r, J=J)


def _config(args):
    mus, cfg = _dipoles(args.mu, args.k, args.K, args.J)
    changes = {name: getattr(args, name) for name in ("T", "dt")
               if getattr(args, name, None) is not None}
    return mus, cfg.replace(**changes) if changes else cfg


# -- commands ----------------------------------------------------------------------

def cmd_check(args):
    from .brackets import check_hypotheses

    mus, cfg = _config(args)
    report = check_hypotheses(mus, cfg)
    return report.to_dict(), report.passed


def cmd_simulate(args):
    from .propagator import solve_nonlinear
    from .signals import load_control

    mus, cfg = _config(args)
    if args.control is None:
        raise UsageError("--control is required")
    u = load_control(args.control, T=cfg.T, N=max(2, int(round(cfg.T / cfg.dt))))
    if u.r != mus.r:
        raise UsageError(f"control has {u.r} channels, dipole set has {mus.r}")
    traj = solve_nonlinear(mus, u, cfg, store=bool(args.csv))
    if args.csv:
        traj.to_csv(_out_path(args.csv), j_export=args.export_modes)
    out = traj.summary()
    return out, out["max_norm_drift"] <= 1e-9


def cmd_expansion_scan(args):
    from .propagator import expansion_order_scan
    from .signals import load_control

    mus, cfg = _config(args)
    if args.control_profile is None:
        raise UsageError("--control-profile is required")
    u = load_control(args.control_profile, T=cfg.T, N=max(2, int(round(cfg.T / cfg.dt))))
    try:
        eps = [float(e) for e in args.eps_list.split(",")]
    except ValueError:
        raise UsageError(f"bad --eps-list {args.eps_list!r}") from None
    scan = expansion_order_scan(mus, u, cfg, eps)
    return scan.to_dict(), not scan.degenerate


def cmd_drift_scan(args):
    from .drift_lab import drift_scan, unreachable_sweep

    mus, cfg = _config(args)
    res = drift_scan(mus, cfg, n_samples=args.samples, seed=args.seed,
                     amplitude=args.amplitude, T=args.T, n_steps=args.n_steps)
    if args.csv:
        res.to_csv(_out_path(args.csv))
    out = res.summary()
    out["unreachable"] = unreachable_sweep(res)
    return out, res.passed


def cmd_design_mu(args):
    from .mu_design import design_mu, golden_document
    from .spectral_basis import ProblemConfig

    cfg = ProblemConfig(k=args.k or 1, K=args.K or 2, r=2, J=args.J)
    res = design_mu(cfg, seed=args.seed, m=args.bumps)
    return golden_document(res), res.report.passed


def cmd_gamma(args):
    import numpy as np

    from .brackets import c_sequence, commutator_gamma, commutator_scale, gamma_table
    from .spectral_basis import eigendata, moment_table

    mus, cfg = _config(args)
    table = moment_table(mus, cfg)
    eig = eigendata(cfg)
    gamma = gamma_table(c_sequence(table, cfg), eig, cfg)
    out = {"gamma": gamma.to_dict()}
    ok = True
    if args.xcheck_commutator:
        worst, rows = 0.0, []
        for p in range(2 * cfg.k):
            for ell in range(1, cfg.r + 1):
                for L in range(1, cfg.r + 1):
                    series = gamma.get(p, ell, L)
                    comm = commutator_gamma(table, eig, p, ell, L, cfg)
                    scale = max(commutator_scale(table, eig, p, ell, L, cfg), abs(series), 1e-300)
                    rel = abs(series - comm) / scale
                    worst = max(worst, rel)
                    rows.append({"p": p, "l": ell, "L": L, "series": series,
                                 "commutator": comm, "relative": rel})
        ok = bool(np.isfinite(worst) and worst <= args.rtol)
        out["xcheck"] = {"rtol": args.rtol, "max_relative": worst, "entries": rows}
    return out, ok


def cmd_toy(args):
    import numpy as np

    from . import toy_ode

    if args.what == "brackets":
        fields = toy_ode.toy_fields()
        words = args.words.split(";")
        vals = {}
        for w in words:
            v = toy_ode.evaluate_bracket_word(toy_ode.parse_word(w.strip()), fields)
            vals[w.strip()] = [str(c) for c in v]
        form = toy_ode.toy_quadratic_form_check()
        return {"words": vals, "form": {k: (str(v) if not isinstance(v, bool) else v)
                                        for k, v in form.items()}}, form["passed"]
    if args.what == "drift":
        res = toy_ode.toy_drift_scan(n_samples=args.samples, T=args.T or 0.05,
                                     amplitude=args.amplitude, seed=args.seed)
        return res.summary(), res.passed
    from .signals import load_control

    if args.control is None:
        raise UsageError("--control is required for toy --what simulate")
    T = args.T or 0.05
    N = max(2, int(round(T / (args.dt or 1e-4))))
    u = load_control(args.control, T=T, N=N + N % 2)
    states = toy_ode.simulate_toy(u)
    return {"T": u.T, "final_state": states[-1].tolist(),
            "max_abs": float(np.abs(states).max())}, True


def cmd_interp_check(args):
    import numpy as np

    from .drift_lab import interpolation_check

    try:
        Ts = [float(t) for t in args.T_list.split(",")]
    except ValueError:
        raise UsageError(f"bad --T-list {args.T_list!r}") from None
    rows = []
    for T in Ts:
        t = np.linspace(0.0, T, args.n_steps + 1)
        fs = [np.sin(2 * np.pi * n * t / T) for n in range(1, args.n_max + 1)]
        worst, ratios = interpolation_check(args.k or 2, fs, T)
        rows.append({"T": T, "max_ratio": worst, "ratios": ratios})
    return {"k": args.k or 2, "per_T": rows}, all(math.isfinite(r["max_ratio"]) for r in rows)


# -- parser ------------------------------------------------------------------------

def _problem_opts(p, mu=True):
    if mu:
        p.add_argument("--mu", help="dipole set JSON file or golden:<k>")
    p.add_argument("--k", type=int, help="obstruction order")
    p.add_argument("--K", type=int, help="lost mode")
    p.add_argument("--J", type=int, help="Galerkin truncation")


def _io_opts(p):
    p.add_argument("--config", help="JSON file of option values (schema 1)")
    p.add_argument("--json", help="write the result document here instead of stdout")
    p.add_argument("--threads", type=int, help="cap on BLAS worker threads")
    p.add_argument("--no-timestamp", action="store_true", help="omit the timestamp field")


def build_parser():
    parser = _Parser(prog="quadobs", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    cmds = {}

    p = cmds["check"] = sub.add_parser("check", help="hypothesis report")
    _problem_opts(p)

    p = cmds["simulate"] = sub.add_parser("simulate", help="nonlinear trajectory")
    _problem_opts(p)
    p.add_argument("--control", help="CSV file, JSON generator file or inline JSON")
    p.add_argument("--T", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--csv", help="trajectory table output")
    p.add_argument("--export-modes", type=int, default=None)

    p = cmds["expansion-scan"] = sub.add_parser("expansion-scan", help="remainder orders")
    _problem_opts(p)
    p.add_argument("--control-profile")
    p.add_argument("--eps-list", default=DEFAULT_EPS)
    p.add_argument("--T", type=float)
    p.add_argument("--dt", type=float)

    p = cmds["drift-scan"] = sub.add_parser("drift-scan", help="drift inequality scan")
    _problem_opts(p)
    p.add_argument("--T", type=float, help="horizon, default 0.9 pi / (3 w_K)")
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--amplitude", type=float, default=1e-2)
    p.add_argument("--n-steps", type=int, default=None)
    p.add_argument("--csv", help="per-sample table output")

    p = cmds["design-mu"] = sub.add_parser("design-mu", help="dipole design")
    _problem_opts(p, mu=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bumps", type=int, default=8, help="bumps per channel")

    p = cmds["gamma"] = sub.add_parser("gamma", help="gamma coefficients")
    _problem_opts(p)
    p.add_argument("--xcheck-commutator", action="store_true")
    p.add_argument("--rtol", type=float, default=1e-6)

    p = cmds["toy"] = sub.add_parser("toy", help="four-dimensional example")
    p.add_argument("--what", choices=("simulate", "brackets", "drift"), required=True)
    p.add_argument("--control")
    p.add_argument("--T", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--amplitude", type=float, default=0.05)
    p.add_argument("--words", default="W(1,0,1);W(1,0,2);C(1,0,1,2)",
                   help="semicolon separated bracket words")

    p = cmds["interp-check"] = sub.add_parser("interp-check", help="interpolation ratios")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--T-list", default="0.1,1")
    p.add_argument("--n-max", type=int, default=20)
    p.add_argument("--n-steps", type=int, default=2000)

    for p in cmds.values():
        _io_opts(p)
    return parser, cmds


_COMMANDS = {"check": cmd_check, "simulate": cmd_simulate,
             "expansion-scan": cmd_expansion_scan, "drift-scan": cmd_drift_scan,
             "design-mu": cmd_design_mu, "gamma": cmd_gamma, "toy": cmd_toy,
             "interp-check": cmd_interp_check}


def parse(argv):
    parser, cmds = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError(parser.format_usage().strip())
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(doc, dict) or doc.pop("schema", SCHEMA) != SCHEMA:
            raise UsageError(f"config must be a JSON object with schema {SCHEMA}")
        sub = cmds[args.command]
        known = {a.dest for a in sub._actions}
        doc = {k.replace("-", "_"): v for k, v in doc.items()}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise UsageError(f"unknown config keys for {args.command}: {unknown}")
        sub.set_defaults(**doc)
        args = parser.parse_args(argv)
    return args


def main(argv=None):
    try:
        args = parse(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    from .errors import (ConsistencyError, DesignError, DomainError, HypothesisRefusal,
                         IntegrationError, QuadratureError)

    options = {k: v for k, v in vars(args).items()}
    try:
        result, passed = _COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    except (HypothesisRefusal, DesignError, ConsistencyError) as exc:
        return _emit(args, options, {"error": type(exc).__name__, "reason": str(exc)}, passed=False)
    except (DomainError, IntegrationError, QuadratureError, OSError, ValueError, KeyError) as exc:
        print(f"quadobs {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return _emit(args, options, result, passed)


if __name__ == "__main__":
    sys.exit(main())
