"""Command-line entry point.

::

    featurelab sample --model stable-beta:alpha=2,c=1,sigma=0.5 --n 10 --seed 1
    featurelab predict --model stable-beta:alpha=2,c=1,sigma=0.5 --stats '{"n":10,"m":[3]}'
    featurelab psi-posterior --model sp:levy=stable,sigma=0.5,prior=exponential,rate=1 \\
        --stats '{"n":5,"m":[2,3]}'
    featurelab growth --model stable-beta:alpha=2,c=1,sigma=0.5 --n 50 --reps 1000 --seed 1
    featurelab verify --suite all

Exit status: 0 on success, 1 when a verification fails, 2 on bad arguments
or model specifications, 3 when a numerical routine does not converge.
"""
from __future__ import annotations

import argparse
import io
import json
import os
import sys

import numpy as np

from . import alloc, crm, harness, levy, sp, species
from .alloc import Partition, SuffStats
from .numerics import DEFAULT_SPEC, DomainError, QuadratureError, QuadratureSpec

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
CONFIG_ENV = "FEATURELAB_CONFIG"
SUITES = ("closed-forms", "thm41", "thm42", "exchangeability", "gibbs", "all")

_LEVY_ALIASES = {"stable-beta": "stable_beta", "stable_beta": "stable_beta", "stable": "stable",
                 "log": "log", "gamma": "gamma"}
_SPECIES_ALIASES = {"dirichlet": "dirichlet", "pitman-yor": "pitman_yor",
                    "pitman_yor": "pitman_yor", "py": "pitman_yor"}
_PRIOR_KEYS = {"uniform": ("lo", "hi"), "exponential": ("rate",)}


class UsageError(Exception):
    """Bad command-line input; reported with exit status 2."""


# --- model parsing ---------------------------------------------------------------

def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _parse_shorthand(text):
    kind, _, rest = text.partition(":")
    params = {}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        key, eq, val = item.partition("=")
        if not eq:
            raise UsageError(f"expected key=value in model shorthand, got {item!r}")
        params[key.strip()] = _parse_value(val.strip())
    return kind.strip().lower(), params


def _shorthand_model(kind, params):
    if kind in _LEVY_ALIASES:
        return levy.from_dict({"kind": _LEVY_ALIASES[kind], "params": params})
    if kind in _SPECIES_ALIASES:
        return species.GibbsModel.from_dict({"kind": _SPECIES_ALIASES[kind], "params": params})
    if kind == "sp":
        params = dict(params)
        lkind = params.pop("levy", None)
        pkind = params.pop("prior", None)
        if lkind not in _LEVY_ALIASES or pkind not in _PRIOR_KEYS:
            raise UsageError("sp shorthand needs levy=<stable|log|gamma|stable-beta> "
                             "and prior=<uniform|exponential>")
        pparams = {k: params.pop(k) for k in _PRIOR_KEYS[pkind] if k in params}
        return sp.SPModel.from_dict({
            "levy": {"kind": _LEVY_ALIASES[lkind], "params": params},
            "prior": {"kind": pkind, "params": pparams}})
    raise UsageError(f"unknown model kind {kind!r}")


def model_from_dict(d):
    """Model from its JSON form; the family is inferred from the keys."""
    if not isinstance(d, dict):
        raise UsageError("model JSON must be an object")
    if "levy" in d and "prior" in d:
        return sp.SPModel.from_dict(d)
    kind = d.get("kind")
    if kind in _SPECIES_ALIASES:
        return species.GibbsModel.from_dict({"kind": _SPECIES_ALIASES[kind],
                                             "params": d.get("params", {})})
    if kind in levy.KINDS:
        return levy.from_dict(d)
    raise UsageError(f"cannot tell the model family from keys {sorted(d)}")


def parse_model(text):
    """Model from a JSON file path, a JSON string, or ``kind:key=val,...``."""
    try:
        if os.path.exists(text):
            with open(text) as fh:
                return model_from_dict(json.load(fh))
        if text.lstrip().startswith("{"):
            return model_from_dict(json.loads(text))
        return _shorthand_model(*_parse_shorthand(text))
    except json.JSONDecodeError as exc:
        raise UsageError(f"invalid model JSON: {exc}") from None
    except (DomainError, ValueError, TypeError, KeyError) as exc:
        raise UsageError(f"invalid model {text!r}: {exc}") from None


def _model_json(model):
    try:
        return model.to_dict()
    except (TypeError, AttributeError):
        return repr(model)


def parse_stats(text, model):
    try:
        d = json.loads(text)
        if isinstance(model, species.GibbsModel):
            return Partition.from_dict(d)
        return SuffStats.from_dict(d)
    except json.JSONDecodeError as exc:
        raise UsageError(f"invalid --stats JSON: {exc}") from None
    except (ValueError, TypeError, KeyError) as exc:
        raise UsageError(f"invalid --stats: {exc}") from None


def load_spec(args):
    """Quadrature settings: defaults, then ``$FEATURELAB_CONFIG``, then flags."""
    values = {}
    path = os.environ.get(CONFIG_ENV)
    if path:
        try:
            with open(path) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read {CONFIG_ENV}={path}: {exc}") from None
        cfg = cfg.get("quadrature", cfg) if isinstance(cfg, dict) else {}
        for key in ("rel_tol", "abs_tol", "max_refinements"):
            if key in cfg:
                values[key] = cfg[key]
    for key in ("rel_tol", "abs_tol", "max_refinements"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    try:
        return QuadratureSpec(**{**_spec_dict(DEFAULT_SPEC), **values})
    except (DomainError, TypeError) as exc:
        raise UsageError(f"invalid quadrature settings: {exc}") from None


def _spec_dict(spec):
    return {"rel_tol": spec.rel_tol, "abs_tol": spec.abs_tol,
            "max_refinements": spec.max_refinements}


def _seed(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _nonneg(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return v


# --- output ----------------------------------------------------------------------

def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# --- subcommands ---------------------------------------------------------------------

def cmd_sample(args, spec):
    model = parse_model(args.model)
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    if isinstance(model, species.GibbsModel):
        labels = species.sample_sequence(rng, model, args.n)
        if args.n == 0:
            text = ""
        elif args.sequence:
            text = json.dumps(labels) + "\n"
        else:
            text = json.dumps(Partition.from_labels(labels).to_dict()) + "\n"
        _emit(text, args.out)
        return EXIT_OK
    if isinstance(model, sp.SPModel):
        Z = sp.sample_allocation(rng, model, args.n, spec)
    else:
        Z = crm.sample_allocation(rng, model, args.n, spec)
    buf = io.StringIO()
    if args.format == "csv":
        alloc.write_csv(Z, buf)
    else:
        for row in Z.to_lists():
            buf.write(json.dumps(row) + "\n")
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_predict(args, spec):
    model = parse_model(args.model)
    stats = parse_stats(args.stats, model)
    if isinstance(model, species.GibbsModel):
        result = species.gibbs_predictive(model, stats).to_dict()
    elif isinstance(model, sp.SPModel):
        if args.psi is not None:
            result = sp.conditional_predictive(model, stats, args.psi, spec).to_dict()
        else:
            result = sp.marginal_predictive(model, stats, args.ymax, spec).to_dict()
    else:
        if args.marginal:
            raise UsageError("--marginal applies to scaled-process (sp) models only")
        result = crm.predictive(model, stats, spec).to_dict()
    _emit(json.dumps(result) + "\n", args.out)
    return EXIT_OK


def cmd_psi_posterior(args, spec):
    model = parse_model(args.model)
    if not isinstance(model, sp.SPModel):
        raise UsageError("psi-posterior needs a scaled-process (sp) model")
    stats = parse_stats(args.stats, model)
    if stats.n < 1:
        raise UsageError("psi-posterior needs n >= 1")
    table = sp.psi_posterior(model, stats, spec, n_grid=args.n_grid)
    buf = io.StringIO()
    table.to_csv(buf)
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def _finish_report(report, args, spec, model=None):
    report.config = {**report.config, "argv": args.argv, "quadrature": _spec_dict(spec)}
    if model is not None:
        report.config["model"] = _model_json(model)
    text = report.to_text() + "\n" if getattr(args, "text", False) else report.to_json() + "\n"
    _emit(text, args.out)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_growth(args, spec):
    model = parse_model(args.model)
    if args.reps < 100:
        raise UsageError("--reps must be at least 100")
    report = harness.growth_curve(model, args.n, args.reps, args.seed, workers=args.workers,
                                  spec=spec)
    return _finish_report(report, args, spec, model)


def run_suite(name, spec, seed=0):
    """Build the named verification report (``all`` merges every suite)."""
    if name == "closed-forms":
        return harness.verify_closed_forms(spec=spec)
    if name == "thm41":
        return harness.n_only_certificate(spec=spec)
    if name == "thm42":
        return harness.nk_only_certificate(spec=spec)
    if name == "exchangeability":
        parts = [
            harness.exchangeability_suite("crm", levy.stable_beta(1.0, 1.0, 0.5), 4, spec=spec),
            harness.exchangeability_suite("species", species.dirichlet(1.0), 5),
            harness.exchangeability_suite("species", species.pitman_yor(0.5, 0.5), 5),
            harness.exchangeability_suite(
                "sp", sp.SPModel(levy.stable(0.5), sp.exponential_prior(1.0)), 3, spec=spec),
        ]
        return harness.merge_reports("exchangeability", parts)
    if name == "gibbs":
        parts = [harness.gibbs_report()]
        parts += [harness.sufficientness_report(m) for m in
                  (species.dirichlet(1.0), species.pitman_yor(0.5, 0.5))]
        return harness.merge_reports("gibbs", parts)
    if name == "all":
        return harness.merge_reports(
            "all", [run_suite(s, spec, seed) for s in SUITES if s != "all"])
    raise UsageError(f"unknown suite {name!r}")


def cmd_verify(args, spec):
    report = run_suite(args.suite, spec, args.seed)
    report.seed = args.seed
    return _finish_report(report, args, spec)


# --- argument parsing -------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="featurelab", description=(
        "Sampling, prediction and verification for CRM, scaled-process and "
        "Gibbs-type species models."))
    p.add_argument("--rel-tol", dest="rel_tol", type=float, help="quadrature relative tolerance")
    p.add_argument("--abs-tol", dest="abs_tol", type=float, help="quadrature absolute tolerance")
    p.add_argument("--max-refinements", dest="max_refinements", type=int,
                   help="quadrature refinement levels")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp_, model=True):
        if model:
            sp_.add_argument("--model", required=True,
                             help="JSON file, JSON string, or kind:key=val,... shorthand")
        sp_.add_argument("--out", help="output path (default: standard output)")
        return sp_

    s = common(sub.add_parser("sample", help="draw an allocation or partition"))
    s.add_argument("--n", type=_nonneg, required=True)
    s.add_argument("--seed", type=_seed, required=True)
    s.add_argument("--format", choices=("jsonl", "csv"), default="jsonl",
                   help="allocation output format")
    s.add_argument("--sequence", action="store_true",
                   help="species models: print block labels instead of the partition")
    s.set_defaults(func=cmd_sample)

    s = common(sub.add_parser("predict", help="predictive law of the next observation"))
    s.add_argument("--stats", required=True,
                   help='{"n": .., "m": [..]} (or {"n": .., "blocks": [..]} for species)')
    s.add_argument("--marginal", action="store_true",
                   help="sp models: average over the scale posterior (the default)")
    s.add_argument("--psi", type=float, help="sp models: condition on this scale instead")
    s.add_argument("--ymax", type=_nonneg, help="largest new-feature count in the pmf")
    s.set_defaults(func=cmd_predict)

    s = common(sub.add_parser("psi-posterior", help="tabulated scale posterior as CSV"))
    s.add_argument("--stats", required=True)
    s.add_argument("--n-grid", dest="n_grid", type=int, default=sp.GRID_SIZE)
    s.set_defaults(func=cmd_psi_posterior)

    s = common(sub.add_parser("growth", help="Monte Carlo feature-count growth report"))
    s.add_argument("--n", type=_nonneg, required=True)
    s.add_argument("--reps", type=int, required=True)
    s.add_argument("--seed", type=_seed, required=True)
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--text", action="store_true", help="human-readable report")
    s.set_defaults(func=cmd_growth)

    s = common(sub.add_parser("verify", help="run a verification suite"), model=False)
    s.add_argument("--suite", choices=SUITES, default="all")
    s.add_argument("--seed", type=_seed, default=0)
    s.add_argument("--text", action="store_true", help="human-readable report")
    s.set_defaults(func=cmd_verify)
    return p


def run(argv=None):
    """Run the command line; returns the exit status."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    args.argv = argv
    try:
        spec = load_spec(args)
        return args.func(args, spec)
    except UsageError as exc:
        print(f"featurelab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (QuadratureError, ArithmeticError) as exc:
        print(f"featurelab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DomainError, ValueError) as exc:
        print(f"featurelab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main():
    try:
        status = run()
        sys.stdout.flush()
    except BrokenPipeError:
        # downstream closed early (e.g. piped into head); not an error here
        devnull = os.open(os.devnull, os.O_WRONLY)
        os.dup2(devnull, sys.stdout.fileno())
        status = EXIT_OK
    sys.exit(status)


if __name__ == "__main__":
    main()
