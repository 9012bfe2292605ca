"""Command-line front end: ``volterra-markov <command> [--config FILE] [flags]``.

Every command reads an optional JSON config whose keys are the long flag names
with underscores (``--n-paths`` is ``n_paths``).  Flags given on the command
line override the file; unknown keys and flags are errors.  The fully resolved
config is written to ``<out>/config.json`` next to the command's artifacts.

Exit status: 0 on success, 2 when ``--expect-consistent`` is set and a verdict
is "violated", 1 on any error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from . import affine_moments as am
from . import clt, gaussian_rl, kernels, mc_sim
from .errors import ConfigError, SearchExhaustedError, VolterraMarkovError
from .volterra_solver import Grid, resolvent_table

OUT_ENV = "SVE_MARKOV_OUT"
DEFAULT_OUT = "sve_markov_out"


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def _ints(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def _json_obj(text):
    if isinstance(text, dict):
        return text
    try:
        value = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON {text!r}: {exc}") from None
    if not isinstance(value, dict):
        raise ConfigError(f"expected a JSON object, got {text!r}")
    return value


def _bool(text):
    return text if isinstance(text, bool) else str(text).lower() in ("1", "true", "yes")


DEFAULT_KERNEL = {"kind": "fractional", "H": 0.25, "scale": 1.0}
DEFAULT_MODEL = {"x": 1.0}

# command -> {key: (parser, default, help)}
COMMANDS: dict[str, dict[str, tuple]] = {
    "kernel-info": {
        "kernel": (_json_obj, DEFAULT_KERNEL, "kernel as a JSON object"),
        "times": (_floats, [0.25, 0.5, 1.0], "evaluation times"),
        "n_values": (_ints, [10, 100, 1000], "n for the normalising sequence"),
    },
    "resolvent": {
        "kernel": (_json_obj, DEFAULT_KERNEL, "kernel as a JSON object"),
        "beta": (float, -1.0, "linear drift coefficient"),
        "lam": (float, 0.0, "initial-curve rate"),
        "T": (float, 1.0, "horizon"),
        "N": (int, 1024, "number of steps"),
    },
    "moment-check": {
        "kernel": (_json_obj, DEFAULT_KERNEL, "kernel as a JSON object"),
        "model": (_json_obj, DEFAULT_MODEL, "model as a JSON object"),
        "T": (float, 1.0, "horizon"),
        "N": (int, 500, "number of steps"),
        "n_paths": (int, 0, "Monte Carlo paths (0 skips the simulation)"),
        "seed": (int, 0, "random seed"),
    },
    "defect-sweep": {
        "functional": (str, "first", "first, sqrt or linear"),
        "kernel": (_json_obj, DEFAULT_KERNEL, "kernel as a JSON object"),
        "model": (_json_obj, DEFAULT_MODEL, "model for the first-moment functional"),
        "lam": (float, 0.0, "rate for the second-moment functionals"),
        "sigma0": (float, 1.0, "volatility for the linear functional"),
        "T_values": (_floats, list(am.DEFAULT_T_VALUES), "horizons T"),
        "fractions": (_floats, list(am.DEFAULT_T_FRACTIONS), "t as fractions of T"),
        "steps_per_unit": (int, 2000, "grid steps per unit time"),
        "tol": (float, None, "defect tolerance (functional default when omitted)"),
    },
    "doob": {
        "H": (float, 0.25, "Hurst parameter"),
        "triple": (_floats, [1.0, 2.0, 3.0], "times s,t,u"),
    },
    "lemma31": {
        "H": (float, 0.25, "Hurst parameter"),
        "margin_min": (float, gaussian_rl.MARGIN_MIN, "required probability margin"),
        "delta": (float, 1.0, "observed value at the earliest time"),
        "interval": (str, "likelihood_ratio", "likelihood_ratio or one_sigma"),
    },
    "clt-check": {
        "kernel": (_json_obj, {"kind": "fractional", "H": 0.25, "scale": 1.0 / math.gamma(0.75)}, "kernel"),
        "model": (_json_obj, {"x": 1.0, "diffusion": {"kind": "sqrt", "sigma0": 0.3}}, "model"),
        "times": (_floats, [1.0], "rescaled times"),
        "n": (int, 10000, "rescaling index"),
        "n_paths": (int, 20000, "Monte Carlo paths"),
        "seed": (int, 0, "random seed"),
        "steps": (int, clt.STEPS, "steps on [0, max(times)/n]"),
    },
    "simulate": {
        "kernel": (_json_obj, DEFAULT_KERNEL, "kernel as a JSON object"),
        "model": (_json_obj, DEFAULT_MODEL, "model as a JSON object"),
        "T": (float, 1.0, "horizon"),
        "N": (int, 100, "number of steps"),
        "n_paths": (int, 1000, "number of paths"),
        "seed": (int, 0, "random seed"),
        "csv": (_bool, False, "also write a CSV copy"),
    },
    "cond-prob": {
        "ensemble": (str, None, "ensemble file written by 'simulate'"),
        "conditioning": (str, "", "bins 'index:center:half_width' separated by ';'"),
        "target": (str, None, "target 'index:low:high'"),
        "min_effective": (int, mc_sim.MIN_EFFECTIVE, "minimum paths in the bins"),
    },
}

CONSISTENCY_COMMANDS = {"defect-sweep", "clt-check", "moment-check"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit status 1 for usage errors, not argparse's 2
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="volterra-markov",
        description="Markov-defect laboratory for stochastic Volterra equations",
        allow_abbrev=False,
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, spec in COMMANDS.items():
        p = sub.add_parser(name, help=f"run the {name} pipeline", allow_abbrev=False)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
        p.add_argument("--threads", type=int, default=None, help="cap on worker threads")
        if name in CONSISTENCY_COMMANDS:
            p.add_argument("--expect-consistent", action="store_true", help="exit 2 on any violated verdict")
        for key, (_, default, text) in spec.items():
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, help=f"{text} (default {default!r})")
    return parser


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    spec = COMMANDS[command]
    cfg = {k: default for k, (_, default, _) in spec.items()}
    cfg["threads"] = 1
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(data) - set(spec) - {"threads", "out", "expect_consistent"}
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")
        cfg.update(data)
    for key in spec:
        value = getattr(args, key)
        if value is not None:
            cfg[key] = value
    if args.threads is not None:
        cfg["threads"] = args.threads
    if getattr(args, "expect_consistent", False):
        cfg["expect_consistent"] = True
    for key, (parse, _, _) in spec.items():
        if cfg[key] is not None:
            try:
                cfg[key] = parse(cfg[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}") from None
    cfg["out"] = args.out or cfg.get("out") or os.environ.get(OUT_ENV) or DEFAULT_OUT
    return cfg


def _write_csv(path: Path, header, rows) -> None:
    def fmt(v):
        return "%.17g" % v if isinstance(v, float) else str(v)

    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


# ---------------------------------------------------------------------------
# commands; each returns True when every verdict is consistent
# ---------------------------------------------------------------------------


def cmd_kernel_info(cfg, out: Path) -> bool:
    k = kernels.kernel_from_dict(cfg["kernel"])
    rows = [(t, float(k(t)), k.integrate(0.0, t), k.integrate_sq(t)) for t in cfg["times"]]
    _write_csv(out / "kernel_values.csv", ["t", "K", "integral", "square_integral"], rows)
    lam_rows = []
    for n in cfg["n_values"]:
        try:
            lam_rows.append((n, kernels.lambda_n(k, n)))
        except VolterraMarkovError:  # square integral underflows to zero
            lam_rows.append((n, "undefined"))
    _write_csv(out / "lambda_n.csv", ["n", "lambda_n"], lam_rows)
    try:
        limit = k.limit_kernel().to_dict()
    except VolterraMarkovError as exc:
        limit = {"unsupported": str(exc)}
    summary = {"kernel": k.to_dict(), "limit_kernel": limit}
    (out / "kernel_info.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, sort_keys=True))
    return True


def cmd_resolvent(cfg, out: Path) -> bool:
    k = kernels.kernel_from_dict(cfg["kernel"])
    tb = resolvent_table(k, cfg["beta"], cfg["lam"], Grid(cfg["T"], cfg["N"]))
    tb.to_csv(out / "resolvent.csv")
    print(f"residual {tb.residual:.3e}")
    return True


def cmd_moment_check(cfg, out: Path) -> bool:
    k = kernels.kernel_from_dict(cfg["kernel"])
    model = am.ModelSpec.from_dict(cfg["model"])
    grid = Grid(cfg["T"], cfg["N"])
    T = cfg["T"]
    analytic = {"mean": am.first_moment(model, k, T, grid)}
    if isinstance(model.diffusion, am.SqrtVol):
        analytic["second"] = am.second_moment_sqrt_affine(model, k, T, grid)
    elif isinstance(model.diffusion, am.LinearVol) and model.drift_is_zero:
        analytic["second"] = am.second_moment_linear(model, k, T, grid)
    rows, ok = [], True
    ens = None
    if cfg["n_paths"] > 0:
        ens = mc_sim.simulate_sve(model, k, grid, cfg["n_paths"], cfg["seed"], threads=cfg["threads"])
    for name, value in analytic.items():
        if ens is None:
            rows.append((name, value, "", "", ""))
            continue
        est, se = mc_sim.empirical_moment(ens, -1, 1 if name == "mean" else 2)
        allowance = 0.0 if name == "mean" else 0.02 * abs(value)
        good = abs(est - value) <= 3.0 * se + allowance
        ok &= good
        rows.append((name, value, est, se, "consistent" if good else "violated"))
    _write_csv(out / "moments.csv", ["quantity", "analytic", "empirical", "se", "verdict"], rows)
    return ok


def cmd_defect_sweep(cfg, out: Path) -> bool:
    k = kernels.kernel_from_dict(cfg["kernel"])
    pairs = am.lattice(cfg["T_values"], cfg["fractions"])
    horizon = max(T for _, T in pairs)
    grid = Grid(horizon, max(1, int(round(cfg["steps_per_unit"] * horizon))))
    model = am.ModelSpec.from_dict(cfg["model"]) if cfg["functional"] == "first" else None
    reports = am.defect_sweep(
        cfg["functional"], k, model=model, lam=cfg["lam"], sigma0=cfg["sigma0"], pairs=pairs, grid=grid, tol=cfg["tol"]
    )
    am.write_defect_csv(reports, out / "defects.csv")
    n_bad = sum(not r.consistent for r in reports)
    print(f"{len(reports) - n_bad} consistent, {n_bad} violated")
    return n_bad == 0


def cmd_doob(cfg, out: Path) -> bool:
    s, t, u = cfg["triple"]
    d = gaussian_rl.doob_defect(cfg["H"], s, t, u)
    _write_csv(out / "doob.csv", ["H", "s", "t", "u", "defect"], [(cfg["H"], s, t, u, d)])
    print("%.17g" % d)
    return True


def cmd_lemma31(cfg, out: Path) -> bool:
    try:
        cert = gaussian_rl.lemma31_certificate(
            cfg["H"], margin_min=cfg["margin_min"], delta=cfg["delta"], interval=cfg["interval"]
        )
    except SearchExhaustedError as exc:
        (out / "certificate.txt").write_text(f"search exhausted\nbest_margin = {exc.best_margin!r}\n")
        raise
    (out / "certificate.txt").write_text(cert.to_text())
    print(cert.to_text(), end="")
    return True


def cmd_clt_check(cfg, out: Path) -> bool:
    k = kernels.kernel_from_dict(cfg["kernel"])
    model = am.ModelSpec.from_dict(cfg["model"])
    rep = clt.clt_empirical_check(
        model, k, cfg["times"], cfg["n"], cfg["n_paths"], cfg["seed"], steps=cfg["steps"], threads=cfg["threads"]
    )
    rep.to_csv(out / "clt.csv")
    return rep.ok


def cmd_simulate(cfg, out: Path) -> bool:
    k = kernels.kernel_from_dict(cfg["kernel"])
    model = am.ModelSpec.from_dict(cfg["model"])
    ens = mc_sim.simulate_sve(model, k, Grid(cfg["T"], cfg["N"]), cfg["n_paths"], cfg["seed"], threads=cfg["threads"])
    ens.save(out / "ensemble.svee")
    if cfg["csv"]:
        ens.to_csv(out / "ensemble.csv")
    return True


def _parse_bins(text: str):
    bins = []
    for part in filter(None, (p.strip() for p in text.split(";"))):
        fields = part.split(":")
        if len(fields) != 3:
            raise ConfigError(f"bad conditioning bin {part!r}; expected index:center:half_width")
        bins.append((int(fields[0]), float(fields[1]), float(fields[2])))
    return bins


def cmd_cond_prob(cfg, out: Path) -> bool:
    if not cfg["ensemble"] or not cfg["target"]:
        raise ConfigError("cond-prob needs 'ensemble' and 'target'")
    ens = mc_sim.PathEnsemble.load(cfg["ensemble"])
    fields = cfg["target"].split(":")
    if len(fields) != 3:
        raise ConfigError("target must be index:low:high")
    target = (int(fields[0]), (float(fields[1]), float(fields[2])))
    p, half, n_eff = mc_sim.conditional_prob_estimate(ens, _parse_bins(cfg["conditioning"]), target, cfg["min_effective"])
    _write_csv(out / "cond_prob.csv", ["probability", "ci_half_width", "n_effective"], [(p, half, n_eff)])
    print(f"{p:.6f} +/- {half:.6f} (n_effective={n_eff})")
    return True


HANDLERS = {
    "kernel-info": cmd_kernel_info,
    "resolvent": cmd_resolvent,
    "moment-check": cmd_moment_check,
    "defect-sweep": cmd_defect_sweep,
    "doob": cmd_doob,
    "lemma31": cmd_lemma31,
    "clt-check": cmd_clt_check,
    "simulate": cmd_simulate,
    "cond-prob": cmd_cond_prob,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve_config(args.command, args)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(json.dumps({"command": args.command, **cfg}, indent=2, sort_keys=True) + "\n")
        ok = HANDLERS[args.command](cfg, out)
    except (VolterraMarkovError, OSError, ValueError, TypeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if cfg.get("expect_consistent") and not ok:
        print("verdict: violated", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
