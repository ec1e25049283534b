"""Command-line front end.

Every subcommand reads its inputs, calls one library operation and writes
the result into ``--out``.  Exit codes: 0 success, 1 computation error or
failed verification, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import warnings

import numpy as np

from . import acceptance, io
from .amde import (RieszSpec, orthogonal_ad, regression_plugin_ad, weighted_outcome_estimate)
from .errors import ImpulseWeightsError
from .lab import (DgpSpec, factor_reconstruct, generate, hetero_iv_estimate, hetero_weights,
                  ica2d, independence_battery, mte_reduced_form, rank1_stat, reports_csv,
                  symmetric_twin)
from .lab.ica import excess_kurtosis, recovered_effect
from .numcore import residualize
from .projections import (add_lags, local_projection, partially_linear_projection,
                          proxy_projection, quadratic_projection, state_dependent_projection)
from .weights import covariate_weights, observed_weights, proxy_weights, weight_integral

STOCHASTIC = {"simulate", "hetero-demo", "ica-demo", "factor-reconstruct", "mte-demo", "verify"}


class UsageError(Exception):
    pass


def _csv_list(text):
    return [s.strip() for s in text.split(",") if s.strip()] if text else []


def _horizons(text):
    msg = "horizons must be nonnegative integers, e.g. 0-8 or 0,2,4"
    out = []
    try:
        for part in _csv_list(text):
            if "-" in part[1:]:
                a, b = part.split("-", 1)
                out.extend(range(int(a), int(b) + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise UsageError(msg) from None
    if not out or min(out) < 0:
        raise UsageError(msg)
    return out


def _build(suppress: bool) -> argparse.ArgumentParser:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p = argparse.ArgumentParser(prog="iw", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def cmd(name, help_, data=True, seed=False):
        s = sub.add_parser(name, help=help_, description=help_)
        s.add_argument("--config", default=d(None), help="JSON file of option values; flags win")
        s.add_argument("--out", default=d(None), help="output directory")
        if data:
            s.add_argument("--input", default=d(None), help="CSV file with a header row")
        if seed:
            s.add_argument("--seed", type=int, default=d(None), help="random seed (required)")
        return s

    def common_lp(s):
        s.add_argument("--outcome", default=d(None))
        s.add_argument("--shock", default=d(None))
        s.add_argument("--controls", default=d(""), help="comma-separated control columns")
        s.add_argument("--se", choices=("hc1", "nw", "classical"), default=d("hc1"))
        s.add_argument("--nw-lags", type=int, default=d(None), dest="nw_lags")
        s.add_argument("--lags", type=int, default=d(0),
                       help="append this many lags of outcome and shock as controls")

    s = cmd("weights", "weight function of a shock, proxy or cell-adjusted shock")
    s.add_argument("--shock", default=d(None))
    s.add_argument("--controls", default=d(""))
    s.add_argument("--proxy", default=d(None))
    s.add_argument("--cells", default=d(None), help="discrete control for cell-mean adjustment")
    s.add_argument("--se", choices=("hc1", "nw", "none"), default=d("hc1"))
    s.add_argument("--nw-lags", type=int, default=d(None), dest="nw_lags")
    s.add_argument("--svg", action="store_true", default=d(False))

    s = cmd("weights-integral", "integral of the shock weights over [lo, hi]")
    s.add_argument("--shock", default=d(None))
    s.add_argument("--controls", default=d(""))
    s.add_argument("--lo", type=float, default=d(-np.inf))
    s.add_argument("--hi", type=float, default=d(np.inf))

    s = cmd("lp", "local projections over horizons")
    common_lp(s)
    s.add_argument("--horizons", default=d("0"))
    s.add_argument("--svg", action="store_true", default=d(False))

    s = cmd("lp-quad", "quadratic local projection and sign-reversal region")
    common_lp(s)
    s.add_argument("--horizon", type=int, default=d(0))

    s = cmd("lp-state", "state-dependent local projections")
    common_lp(s)
    s.add_argument("--state", default=d(None))
    s.add_argument("--horizons", default=d("0"))

    s = cmd("lp-partial", "partially linear projection with a chosen control class")
    common_lp(s)
    s.add_argument("--pi-spec", choices=("linear", "cell_means"), default=d("linear"),
                   dest="pi_spec")
    s.add_argument("--horizon", type=int, default=d(0))

    s = cmd("lp-proxy", "reduced-form projections on a proxy, optionally normalized")
    common_lp(s)
    s.add_argument("--proxy", default=d(None))
    s.add_argument("--normalize", default=d(None), help="outcome whose horizon-0 response is 1")
    s.add_argument("--horizons", default=d("0"))

    s = cmd("riesz", "weighted average derivative through a Riesz representer")
    s.add_argument("--outcome", default=d(None))
    s.add_argument("--shock", default=d(None))
    s.add_argument("--variant", default=d("linear"),
                   choices=("linear", "score", "density_weighted", "delta_change", "orthogonal",
                            "plugin"))
    s.add_argument("--delta", type=float, default=d(None))
    s.add_argument("--bandwidth", type=float, default=d(None))
    s.add_argument("--no-se", action="store_true", default=d(False), dest="no_se")

    s = cmd("simulate", "draw a sample from a JSON data-generating spec", data=False, seed=True)
    s.add_argument("--spec", default=d(None), help="JSON spec file")
    s.add_argument("--n", type=int, default=d(None))
    s.add_argument("--latent", action="store_true", default=d(False),
                   help="also write latent.csv")

    s = cmd("hetero-demo", "heteroskedasticity-IV estimates, weights and symmetric twin",
            data=False, seed=True)
    s.add_argument("--spec", default=d(None))
    s.add_argument("--n", type=int, default=d(200_000))

    s = cmd("ica-demo", "ICA on a counterexample design", data=False, seed=True)
    s.add_argument("--kind", choices=("box_muller", "rotation"), default=d("box_muller"))
    s.add_argument("--n", type=int, default=d(100_000))

    s = cmd("rank-test", "rank-one restriction statistic")
    s.add_argument("--regime", default=d("d"))
    s.add_argument("--outcomes", default=d(""))

    s = cmd("factor-reconstruct", "rebuild the joint law from one column and fresh uniforms",
            seed=True)
    s.add_argument("--columns", default=d(""))
    s.add_argument("--k", type=int, default=d(None))

    s = cmd("mte-demo", "reduced form against the binned latent oracle", data=False, seed=True)
    s.add_argument("--spec", default=d(None))
    s.add_argument("--n", type=int, default=d(100_000))

    cmd("verify", "run the acceptance suite", data=False, seed=True)
    return p


def parse(argv):
    parser = _build(False)
    args = parser.parse_args(argv)
    given = vars(_build(True).parse_args(argv))
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config {args.config}: {e}") from None
        if not isinstance(cfg, dict):
            raise UsageError("config must be a JSON object")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        types = {a.dest: a.type for a in sub._actions}
        for k, v in cfg.items():
            key = k.replace("-", "_")
            if key not in vars(args) or key == "command":
                raise UsageError(f"config key {k!r} is not an option of {args.command}")
            if key in given:
                continue
            if isinstance(v, list):
                v = ",".join(map(str, v))
            elif types.get(key) is not None and v is not None:
                try:
                    v = types[key](v)
                except (TypeError, ValueError):
                    raise UsageError(f"config key {k!r}: bad value {v!r}") from None
            setattr(args, key, v)
    return parser, args


def _need(args, *names):
    for n in names:
        if getattr(args, n, None) in (None, ""):
            raise UsageError(f"--{n.replace('_', '-')} is required")


def _load(args, cols):
    _need(args, "input")
    if cols is not None:
        cols = [c for c in dict.fromkeys(cols) if c]
    try:
        ds, rep = io.load_csv(args.input, cols)
    except FileNotFoundError:
        raise UsageError(f"input file not found: {args.input}") from None
    except KeyError as e:
        raise UsageError(str(e.args[0])) from None
    print(f"read {rep.rows_read} rows, kept {rep.rows_kept}, dropped {rep.rows_dropped}",
          file=sys.stderr)
    return ds


def _out(args, name):
    return os.path.join(args.out, name)


def _se(args):
    return None if args.se == "none" else args.se


def _lp_data(args, extra=()):
    controls = _csv_list(args.controls)
    ds = _load(args, [args.outcome, args.shock, *controls, *extra])
    if args.lags:
        ds, lagged = add_lags(ds, [args.outcome, args.shock], args.lags)
        controls = controls + lagged
    return ds, controls


def _weights(args):
    _need(args, "shock")
    controls = _csv_list(args.controls)
    ds = _load(args, [args.shock, *controls, args.proxy, args.cells])
    x = ds[args.shock]
    W = np.column_stack([ds[c] for c in controls]) if controls else None
    se = _se(args)
    if args.cells:
        if controls:
            raise UsageError("--cells and --controls cannot be combined")
        rep = covariate_weights(x, ds[args.cells], se=se).report
    elif args.proxy:
        rep = proxy_weights(x, residualize(ds[args.proxy], W), se=se, lags=args.nw_lags)
    else:
        rep = observed_weights(residualize(x, W), se=se, lags=args.nw_lags)
    io.atomic_write(_out(args, "weights.csv"), io.weights_text(rep))
    if args.svg:
        io.emit_svg(rep, _out(args, "weights.svg"))
    return {"total_mass": rep.total_mass, "positive_mass": rep.positive_mass,
            "negative_mass": rep.negative_mass, "mean_of_x": rep.mean_of_X}


def _weights_integral(args):
    _need(args, "shock")
    controls = _csv_list(args.controls)
    ds = _load(args, [args.shock, *controls])
    W = np.column_stack([ds[c] for c in controls]) if controls else None
    x = residualize(ds[args.shock], W) if W is not None else ds[args.shock]
    val = weight_integral(x, args.lo, args.hi)
    res = {"lo": args.lo, "hi": args.hi, "integral": val}
    io.write_json(res, _out(args, "weights_integral.json"))
    return res


def _lp(args):
    _need(args, "outcome", "shock")
    ds, controls = _lp_data(args)
    res = local_projection(ds, args.outcome, args.shock, controls, _horizons(args.horizons),
                           se=args.se, lags=args.nw_lags)
    io.atomic_write(_out(args, "lp.csv"), io.lp_text(res))
    io.write_json([{"h": r.h, "beta": r.beta_h, "se": r.se, "n": r.n,
                    "total_mass": r.weight_report.total_mass,
                    "positive_mass": r.weight_report.positive_mass} for r in res],
                  _out(args, "lp.json"))
    if args.svg:
        io.emit_svg(res, _out(args, "lp.svg"))
    return {"horizons": len(res)}


def _lp_quad(args):
    _need(args, "outcome", "shock")
    ds, controls = _lp_data(args)
    q = quadratic_projection(ds, args.outcome, args.shock, args.horizon, controls, se=args.se,
                             lags=args.nw_lags)
    res = {"h": q.h, "beta0": q.beta0, "beta1": q.beta1, "beta2": q.beta2, "se": q.se,
           "sign_reversal_region": q.sign_reversal_region, "n": q.n}
    io.write_json(res, _out(args, "lp_quad.json"))
    return res


def _lp_state(args):
    _need(args, "outcome", "shock", "state")
    ds, controls = _lp_data(args, [args.state])
    res = state_dependent_projection(ds, args.outcome, args.shock, args.state, controls,
                                     _horizons(args.horizons), se=args.se, lags=args.nw_lags)
    rows = [(s, r.h, r.beta_h, r.se, *r.ci) for s, rs in res.items() for r in rs]
    io.atomic_write(_out(args, "lp_state.csv"),
                    io.table_text(("state", "horizon", "beta", "se", "ci_lo", "ci_hi"), rows))
    return {"states": list(res)}


def _lp_partial(args):
    _need(args, "outcome", "shock", "controls")
    ds, controls = _lp_data(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        r = partially_linear_projection(ds, args.outcome, args.shock, controls, args.pi_spec,
                                        h=args.horizon, se=args.se, lags=args.nw_lags)
    res = {"beta": r.beta, "se": r.se, "pi_spec": r.pi_spec, "r2_linear": r.r2_linear,
           "r2_flexible": r.r2_flexible, "warnings": [str(w.message) for w in caught],
           "total_mass": r.weight_report.total_mass,
           "negative_mass": r.weight_report.negative_mass}
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    io.write_json(res, _out(args, "lp_partial.json"))
    return res


def _lp_proxy(args):
    _need(args, "outcome", "proxy")
    controls = _csv_list(args.controls)
    ds = _load(args, [args.outcome, args.proxy, args.normalize, args.shock, *controls])
    if args.lags:
        ds, lagged = add_lags(ds, [args.outcome, args.proxy], args.lags)
        controls = controls + lagged
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = proxy_projection(ds, args.outcome, args.proxy, controls, _horizons(args.horizons),
                               normalization_outcome=args.normalize, shock=args.shock,
                               se=args.se, lags=args.nw_lags)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    rows = [(r.h, r.beta_h, r.se, *r.ci, r.reduced_form, r.reduced_form_se) for r in res]
    io.atomic_write(_out(args, "lp_proxy.csv"),
                    io.table_text(("horizon", "beta", "se", "ci_lo", "ci_hi", "reduced_form",
                                   "reduced_form_se"), rows))
    return {"horizons": len(res)}


def _riesz(args):
    _need(args, "outcome", "shock")
    ds = _load(args, [args.outcome, args.shock])
    y, x = ds[args.outcome], ds[args.shock]
    if args.variant == "orthogonal":
        r = orthogonal_ad(y, x, se=not args.no_se, density_bandwidth_value=args.bandwidth)
        res = r.to_dict()
    elif args.variant == "plugin":
        res = {"variant": "plugin", "theta": regression_plugin_ad(y, x, bandwidth=args.bandwidth),
               "n": x.shape[0]}
    else:
        spec = RieszSpec(args.variant, delta=args.delta, bandwidth=args.bandwidth)
        r = weighted_outcome_estimate(y, x, spec, se=not args.no_se)
        res = r.to_dict()
        io.atomic_write(_out(args, "riesz_weights.csv"), io.weights_text(r.implied_weight_fn))
    io.write_json(res, _out(args, "riesz.json"))
    return res


def _read_spec(path, default=None):
    if path is None:
        if default is None:
            raise UsageError("--spec is required")
        return default
    try:
        with open(path, encoding="utf-8") as fh:
            return DgpSpec.from_json(fh.read())
    except OSError as e:
        raise UsageError(f"cannot read spec {path}: {e}") from None


def _simulate(args):
    _need(args, "n")
    spec = _read_spec(args.spec)
    d = generate(spec, args.n, args.seed)
    meta = {"kind": spec.kind, "n": args.n, "seed": args.seed}
    io.write_csv(d.observed, _out(args, "observed.csv"), meta)
    if args.latent:
        io.write_csv(d.latent, _out(args, "latent.csv"), meta)
    io.atomic_write(_out(args, "spec.json"), spec.to_json() + "\n")
    return meta


def _hetero(args):
    spec = _read_spec(args.spec, DgpSpec("hetero_rigobon"))
    d = generate(spec, args.n, args.seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        r = hetero_iv_estimate(d)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    io.atomic_write(_out(args, "hetero.csv"),
                    io.table_text(("outcome", "estimate", "se"),
                                  zip(r.outcomes, r.estimates, r.se)))
    res = {"estimates": dict(zip(r.outcomes, r.estimates)), "se": dict(zip(r.outcomes, r.se))}
    if spec.kind == "hetero_rigobon":
        hw = hetero_weights(d)
        io.atomic_write(_out(args, "hetero_weights.csv"), io.weights_text(hw.weight_fn))
        res["weight_integral"] = hw.weight_fn.integral()
    try:
        tw = symmetric_twin(d)
        res["twin"] = {"passed": tw.passed, "evenness_exact": tw.evenness_exact,
                       "ks": {f"d={k[0]:g},{k[1]}": [v.statistic, v.critical]
                              for k, v in tw.ks.items()}}
    except ImpulseWeightsError as e:
        res["twin"] = {"skipped": str(e)}
    io.write_json(res, _out(args, "hetero.json"))
    return res


def _ica(args):
    kind = "ica_box_muller" if args.kind == "box_muller" else "ica_rotation"
    d = generate(DgpSpec(kind), args.n, args.seed)
    y1, y2 = d.observed["y1"], d.observed["y2"]
    r = ica2d(y1, y2)
    est, se = recovered_effect(y1, y2)
    b = independence_battery(y1, y2, seed=args.seed)
    res = {"angle_deg": r.angle, "unmixing": r.unmixing,
           "alignment_ratio": r.alignment_ratio(y1, y2),
           "excess_kurtosis": [excess_kurtosis(y1), excess_kurtosis(y2)],
           "recovered_effect": est, "recovered_effect_se": se,
           "battery": {"pearson": b.pearson, "dcor": b.dcor, "dcor_p": b.dcor_p,
                       "min_p": b.min_p, "reject": b.reject}}
    io.write_json(res, _out(args, "ica.json"))
    return res


def _rank(args):
    ds = _load(args, [args.regime, *_csv_list(args.outcomes)] if args.outcomes else None)
    outs = _csv_list(args.outcomes) or None
    r = rank1_stat(ds, outs, regime=args.regime)
    res = {"ratio": r.ratio, "eigenvalues": r.eigenvalues, "delta_cov": r.delta_cov,
           "degenerate": r.degenerate, "n0": r.n0, "n1": r.n1}
    io.write_json(res, _out(args, "rank1.json"))
    return res


def _factor(args):
    ds = _load(args, _csv_list(args.columns) or None)
    f = factor_reconstruct(ds, args.k, seed=args.seed)
    io.write_csv(f.draws.observed, _out(args, "reconstructed.csv"), {"seed": args.seed})
    res = {"k_neighbors": f.k_neighbors, "energy": f.energy.statistic,
           "energy_null_q95": f.energy.null_q95, "energy_passed": f.energy.passed,
           "ks": {c: [r.statistic, r.critical] for c, r in f.ks.items()}, "passed": f.passed}
    io.write_json(res, _out(args, "factor.json"))
    return res


def _mte(args):
    spec = _read_spec(args.spec, DgpSpec("mte_iv"))
    m = mte_reduced_form(generate(spec, args.n, args.seed))
    io.atomic_write(_out(args, "mte.csv"), reports_csv([m.report]))
    return {"beta": m.beta, "se": m.se, "oracle": m.oracle, "pass": m.report.passed}


def _verify(args):
    def show(run):
        mark = "PASS" if run.passed else "FAIL"
        print(f"{mark} criterion {run.number} ({run.title}) {run.seconds:.1f}s", file=sys.stderr)
        for r in run.reports:
            if not r.passed:
                print("   " + r.line(), file=sys.stderr)

    runs = acceptance.run_all(args.seed, progress=show)
    reps = [r for run in runs for r in run.reports]
    io.atomic_write(_out(args, "acceptance.csv"), reports_csv(reps))
    failed = [r.name for r in reps if not r.passed]
    return {"rows": len(reps), "failed": failed}


HANDLERS = {
    "weights": _weights, "weights-integral": _weights_integral, "lp": _lp, "lp-quad": _lp_quad,
    "lp-state": _lp_state, "lp-partial": _lp_partial, "lp-proxy": _lp_proxy, "riesz": _riesz,
    "simulate": _simulate, "hetero-demo": _hetero, "ica-demo": _ica, "rank-test": _rank,
    "factor-reconstruct": _factor, "mte-demo": _mte, "verify": _verify,
}


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser, args = parse(argv)
    except SystemExit as e:
        return int(e.code or 0)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    sub = parser._subparsers._group_actions[0].choices[args.command]
    try:
        if args.command in STOCHASTIC and args.seed is None:
            raise UsageError("--seed is required for this command")
        _need(args, "out")
        res = HANDLERS[args.command](args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        print(sub.format_usage().strip(), file=sys.stderr)
        return 2
    except (ImpulseWeightsError, ValueError, OSError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    if args.command == "verify" and res["failed"]:
        print(f"{len(res['failed'])} acceptance rows failed", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
