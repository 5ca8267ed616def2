"""Command-line interface: run/compare experiments, self-test, dump fixtures.

Exit codes: 0 success, 1 invalid configuration, 2 numerical failure,
3 self-test failure.
"""

import argparse
import configparser
import sys
from pathlib import Path

import numpy as np

from .config import NetworkConfig
from .harness import ExperimentSpec, compare_schemes, run_experiment
from .mmse import NumericalError
from .simulation import parse_scheme

_INT_FIELDS = {"K", "N", "L", "n_r", "P", "G", "N_tr"}
_EXP_KEYS = {
    "sweep": str,
    "values": "list",
    "trials": int,
    "seed": int,
    "out": str,
    "schemes": "schemes",
    "lognormal_db": float,
    "genie_relays": "bool",
    "jobs": int,
    "symbol_bin": int,
}


def _parse_values(text: str):
    return [float(tok) for tok in text.replace(",", " ").split()]


def _parse_bool(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes", "on")


def load_experiment(config_path: str | None, overrides: dict) -> ExperimentSpec:
    """Build an ExperimentSpec from an INI file plus dotted-key overrides."""
    net: dict = {}
    exp: dict = {}
    if config_path:
        parser = configparser.ConfigParser()
        parser.optionxform = str  # keep key case (K vs k, N_tr)
        read = parser.read(config_path)
        if not read:
            raise ValueError(f"cannot read config file {config_path}")
        if parser.has_section("network"):
            net.update(dict(parser.items("network")))
        if parser.has_section("experiment"):
            exp.update(dict(parser.items("experiment")))
    for key, val in overrides.items():
        if val is None:
            continue
        section, _, name = key.partition(".")
        if section == "network":
            net[name] = val
        elif section == "experiment":
            exp[name] = val
        else:
            raise ValueError(f"unknown override section {section!r}")
    cfg_kwargs = {}
    for name, raw in net.items():
        if name not in NetworkConfig.field_names():
            raise ValueError(f"unknown network key {name!r}")
        if isinstance(raw, str):
            cfg_kwargs[name] = int(raw) if name in _INT_FIELDS else float(raw)
        else:
            cfg_kwargs[name] = raw
    cfg = NetworkConfig(**cfg_kwargs)
    kw = {"config": cfg}
    schemes_text = exp.pop("schemes", "JPAIS-GBC-RALS, CIS-RLS, NCIS-RLS")
    if isinstance(schemes_text, str):
        kw["schemes"] = [parse_scheme(tok) for tok in schemes_text.split(",") if tok.strip()]
    else:
        kw["schemes"] = schemes_text
    for name, raw in exp.items():
        if name not in _EXP_KEYS:
            raise ValueError(f"unknown experiment key {name!r}")
        typ = _EXP_KEYS[name]
        if name == "out":
            kw["out_dir"] = raw
        elif typ == "list":
            kw["values"] = _parse_values(raw) if isinstance(raw, str) else raw
        elif typ == "bool":
            kw[name] = _parse_bool(raw) if isinstance(raw, str) else bool(raw)
        elif isinstance(raw, str):
            kw[name] = typ(raw)
        else:
            kw[name] = raw
    return ExperimentSpec(**kw)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI experiment file ([network]/[experiment] sections)")
    p.add_argument("--seed", type=int, default=None, help="master seed (default 1)")
    p.add_argument("--trials", type=int, default=None, help="packets per sweep point (default 200)")
    p.add_argument("--out", default=None, help="output directory (default results/)")
    p.add_argument("--jobs", type=int, default=None, help="parallel packet workers")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VAL",
                   help="override any dotted config key, e.g. network.K=8 or experiment.sweep=users")


def _collect_overrides(args) -> dict:
    overrides = {}
    for item in args.set:
        key, _, val = item.partition("=")
        if not val:
            raise ValueError(f"malformed --set {item!r} (expected KEY=VAL)")
        overrides[key] = val
    if args.seed is not None:
        overrides["experiment.seed"] = str(args.seed)
    if args.trials is not None:
        overrides["experiment.trials"] = str(args.trials)
    if args.out is not None:
        overrides["experiment.out"] = args.out
    if args.jobs is not None:
        overrides["experiment.jobs"] = str(args.jobs)
    return overrides


def cmd_run(args) -> int:
    spec = load_experiment(args.config, _collect_overrides(args))
    records = run_experiment(spec)
    for r in records:
        lo, hi = r.ci
        print(f"{r.scheme:28s} {r.axis}={r.value:g} BER={r.ber:.4e} [{lo:.3e}, {hi:.3e}] ({r.packets} packets)")
    print(f"results written to {spec.out_dir}")
    return 0


def cmd_compare(args) -> int:
    spec = load_experiment(args.config, _collect_overrides(args))
    if len(spec.schemes) < 2:
        print("compare needs at least two schemes", file=sys.stderr)
        return 1
    records, summary = compare_schemes(spec)
    print(summary)
    print(f"results written to {spec.out_dir}")
    if getattr(args, "plot", False):
        _render_report_figure(spec)
    return 0


def _render_report_figure(spec) -> None:
    """Render a figure next to the CSVs when the plotting package is installed."""
    try:
        from berplot import PlotSpec, render
    except ImportError:
        print("plotting package not installed; skipping figure", file=sys.stderr)
        return
    out = Path(spec.out_dir)
    try:
        path = render(PlotSpec(inputs=[out / "results.csv"], axis=spec.sweep, out=out / "comparison.svg"))
        print(f"figure written to {path}")
    except Exception as exc:  # noqa: BLE001 - figure is a best-effort report artifact
        print(f"figure rendering failed: {exc}", file=sys.stderr)


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    ok = run_selftest(verbose=True)
    return 0 if ok else 3


def cmd_dump_fixtures(args) -> int:
    from .channels import dump_channels_csv, generate_channels
    from .spreading import generate_codes

    out = Path(args.out or "fixtures")
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.PCG64(args.seed if args.seed is not None else 1))
    cfg = NetworkConfig(K=4, N=8, L=3, n_r=1, P=60, N_tr=20, G=2)
    codes = generate_codes(rng, cfg.K, cfg.N)
    np.savetxt(out / "codes.txt", np.sign(codes), fmt="%+d")
    chans = generate_channels(cfg.K, cfg.L, cfg.n_r, rng)
    dump_channels_csv(chans, out / "channels.csv")
    spec = ExperimentSpec(
        config=cfg,
        schemes=[parse_scheme("CIS-MMSE"), parse_scheme("NCIS-MMSE")],
        sweep="snr_db",
        values=[6.0, 12.0],
        trials=3,
        seed=7,
        out_dir=str(out / "comparison"),
    )
    run_experiment(spec)
    print(f"fixtures written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coopcdma", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, hlp in (
        ("run", cmd_run, "run one experiment spec"),
        ("compare", cmd_compare, "run and compare multiple schemes"),
        ("selftest", cmd_selftest, "run the invariant self-test suite"),
        ("dump-fixtures", cmd_dump_fixtures, "write golden test fixtures"),
    ):
        sp = sub.add_parser(name, help=hlp)
        _add_common(sp)
        if name == "compare":
            sp.add_argument("--plot", action="store_true", help="also render a figure (needs the berplot package)")
        sp.set_defaults(fn=fn)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError, configparser.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
