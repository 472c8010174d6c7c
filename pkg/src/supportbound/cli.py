"""Command-line front end: ``supportbound {bounds,decode,generate,experiment}``.

Exit codes: 0 success, 2 violated precondition, 64 usage error, 66 missing
input file, 73 output file cannot be written.  Statistical failures are
recorded in the output data and never change the exit status.

Parameters resolve as command-line flags, then ``--config`` (a JSON object
keyed by option name with dashes or underscores), then defaults.  The
effective parameters are echoed into every output; ``--workers`` and the
output paths are left out so outputs do not depend on them.
"""

import argparse
import json
import math
import os
import sys

from . import bounds, experiments, io
from .decoders import mce_decode, mle_decode
from .errors import SupportBoundError
from .model import (
    ENUMERATION_CAP_ENV,
    MeasurementSetup,
    SparseSignal,
    measure,
    sample_gaussian_ensemble,
)

EX_OK = 0
EX_DOMAIN = 2
EX_USAGE = 64
EX_NOINPUT = 66
EX_CANTCREAT = 73

NOT_ECHOED = {"command", "kind", "output", "csv", "workers", "config", "matrix_out", "y_out", "signal_out"}


class UsageError(Exception):
    pass


class InputMissing(Exception):
    pass


class OutputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text):
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


S = argparse.SUPPRESS

# name -> (type, default, help)
OPTIONS = {
    "p": (int, None, "signal dimension p (count)"),
    "k": (int, None, "sparsity k (count)"),
    "m": (int, None, "number of measurements m (count)"),
    "theta_min": (float, None, "smallest nonzero coefficient magnitude (dimensionless)"),
    "sigma_sq": (float, 1.0, "noise variance sigma^2 (dimensionless)"),
    "seed": (int, 0, "seed of the Gaussian measurement matrix and the noise (nonnegative integer)"),
    "beta": (float, None, "distinguishability factor; computed from the seeded instance when omitted"),
    "epsilon": (float, 0.1, "slack epsilon of the unbiasedness threshold"),
    "trials": (int, None, "number of Monte Carlo trials (required)"),
    "base_seed": (int, None, "base seed of the per-trial noise streams (required)"),
    "phi_seed": (int, None, "seed of the measurement matrix; defaults to --base-seed"),
    "decoder": (str, "mle", "support decoder: mle or mce"),
    "coefficients": (_float_list, None, "comma-separated coefficients on (1..k); default all theta_min"),
    "regime": (str, "sublinear-const", f"scaling regime: {', '.join(bounds.REGIMES)}"),
    "p_grid": (_int_list, None, "comma-separated signal dimensions for the sweep"),
    "multipliers": (_float_list, [0.5, 1.0, 2.0], "comma-separated multiples of the reference m"),
    "reference": (str, "sufficient", "sweep reference count: sufficient or necessary"),
    "ell": (int, 1, "number of swapped indices between s and s'"),
}


def _add(parser, *names):
    for name in names:
        type_, default, help_ = OPTIONS[name]
        shown = "required" if default is None else f"default: {default}"
        parser.add_argument("--" + name.replace("_", "-"), dest=name, type=type_, default=S,
                            help=f"{help_} ({shown})")


def _add_common(parser, output_help):
    parser.add_argument("--output", default=S, help=f"{output_help} (default: stdout)")
    parser.add_argument("--config", default=S, help="JSON file of parameter defaults (flags override it)")
    parser.add_argument("--enum-cap", dest="enum_cap", type=int, default=S,
                        help=f"cap on C(p, k) for exhaustive enumeration (default: ${ENUMERATION_CAP_ENV} or 1000000)")


EXPERIMENTS = {
    "monte-carlo": ("p", "k", "m", "theta_min", "sigma_sq", "phi_seed", "decoder", "coefficients"),
    "verify-lemma2": ("p", "k", "m", "theta_min", "sigma_sq", "phi_seed", "decoder", "coefficients"),
    "verify-hcr": ("p", "k", "m", "theta_min", "sigma_sq", "phi_seed", "decoder", "coefficients", "epsilon"),
    "theorem3-witness": ("p", "k", "m", "theta_min", "sigma_sq"),
    "regime-sweep": ("regime", "p_grid", "multipliers", "reference", "sigma_sq", "decoder"),
    "integer-mean": ("m", "sigma_sq"),
    "chi2-projection": ("p", "k", "m", "ell"),
}

COMMAND_OPTIONS = {
    "bounds": ("p", "k", "m", "theta_min", "sigma_sq", "seed", "beta", "epsilon"),
    "decode": ("p", "k", "m", "theta_min", "sigma_sq", "seed"),
    "generate": ("p", "k", "m", "theta_min", "sigma_sq", "seed"),
    **{kind: ("trials", "base_seed") + names for kind, names in EXPERIMENTS.items()},
}
FLAG_DEFAULTS = {
    "bounds": {"verbose": False},
    "decode": {"method": "mle", "normalized": False, "generate": False},
    "generate": {},
}

BOUNDS = ("hcr", "lemma2", "theorem4", "theorem3", "msuff", "example1", "remark", "table1")


def build_parser():
    parser = _Parser(prog="supportbound", description="Support-recovery bounds, decoders and Monte Carlo checks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("bounds", help="evaluate a closed-form bound")
    b.add_argument("--which", choices=BOUNDS, default=S, help="which bound to evaluate (required)")
    _add(b, *COMMAND_OPTIONS["bounds"])
    b.add_argument("--verbose", action="store_true", default=S, help="emit per-support HCR terms (default: off)")
    _add_common(b, "JSON report path")

    d = sub.add_parser("decode", help="decode a support from a measurement vector")
    d.add_argument("--matrix-file", dest="matrix_file", default=S, help="measurement matrix file ('rows cols' header)")
    d.add_argument("--y-file", dest="y_file", default=S, help="measurement vector file (matrix format, one column)")
    d.add_argument("--generate", action="store_true", default=S,
                   help="decode a seeded Gaussian instance built from --p --k --m --theta-min --sigma-sq --seed")
    d.add_argument("--method", choices=("mle", "mce"), default=S, help="decoder (default: mle)")
    d.add_argument("--normalized", action="store_true", default=S,
                   help="MCE divides correlations by column norms (default: off)")
    _add(d, *COMMAND_OPTIONS["decode"])
    _add_common(d, "JSON result path")

    g = sub.add_parser("generate", help="write a seeded Gaussian instance to files")
    _add(g, *COMMAND_OPTIONS["generate"])
    g.add_argument("--matrix-out", dest="matrix_out", required=True, help="output path of the matrix")
    g.add_argument("--y-out", dest="y_out", required=True, help="output path of the noisy measurement")
    g.add_argument("--signal-out", dest="signal_out", default=S, help="output path of the signal record (JSON)")
    g.add_argument("--config", default=S, help="JSON file of parameter defaults")

    e = sub.add_parser("experiment", help="run a seeded Monte Carlo experiment")
    kinds = e.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    for kind, names in EXPERIMENTS.items():
        k = kinds.add_parser(kind, help=f"{kind} experiment")
        _add(k, *COMMAND_OPTIONS[kind])
        k.add_argument("--workers", type=int, default=S, help="worker threads; never changes outputs (default: 1)")
        k.add_argument("--csv", default=S, help="flat comma-separated export path (default: none)")
        _add_common(k, "JSON-lines record path")
    return parser


def _resolve(args):
    """Merge flags over the --config file over defaults."""
    given = vars(args)
    active = given.get("kind") or given["command"]
    values = {name: OPTIONS[name][1] for name in COMMAND_OPTIONS[active]}
    values.update(FLAG_DEFAULTS.get(given["command"], {"workers": 1}))
    if "config" in given:
        path = given["config"]
        try:
            with open(path) as fh:
                loaded = json.load(fh)
        except FileNotFoundError:
            raise InputMissing(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(loaded, dict):
            raise UsageError(f"config file {path} must hold a JSON object")
        for key, value in loaded.items():
            name = key.replace("-", "_")
            if name not in values:
                raise UsageError(f"config file {path}: option {key!r} does not apply to this command")
            entry = OPTIONS.get(name)
            if entry is not None and entry[0] in (_int_list, _float_list) and isinstance(value, list):
                value = entry[0](",".join(map(str, value)))
            elif entry is not None and value is not None:
                value = entry[0](value)
            values[name] = value
    values.update(given)
    return values


def _require(values, *names):
    missing = [n for n in names if values.get(n) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _echo(values):
    return {k: v for k, v in values.items() if k not in NOT_ECHOED and v is not None}


def _emit(text, path):
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from None


def _instance(v):
    _require(v, "p", "k", "m", "theta_min")
    signal = SparseSignal.constant(v["p"], v["k"], v["theta_min"])
    setup = MeasurementSetup(sample_gaussian_ensemble(v["m"], v["p"], v["seed"]), v["sigma_sq"], v["k"])
    return setup, signal


def _instance_beta(v):
    setup, signal = _instance(v)
    dmin = bounds.d_min(setup, signal)
    return bounds.distinguishability(dmin, v["m"], v["sigma_sq"]), dmin


def cmd_bounds(v):
    _require(v, "which")
    which = v["which"]
    if which == "hcr":
        setup, signal = _instance(v)
        report = bounds.hcr_support_bound(setup, signal, keep_terms=v["verbose"])
        out = report.to_dict(verbose=v["verbose"])
        out["beta"] = bounds.distinguishability(report.d_min, v["m"], v["sigma_sq"])
    elif which in ("lemma2", "theorem4"):
        _require(v, "m")
        if v["m"] % 2 or v["m"] < 2:
            raise bounds.OddM(f"m must be an even positive integer, got m={v['m']}")
        dmin = None
        beta = v["beta"]
        if beta is None:
            beta, dmin = _instance_beta(v)
        if which == "lemma2":
            out = bounds.BoundReport("lemma2", bounds.mle_error_upper_bound(v["m"], beta),
                                     {"m": v["m"], "beta": beta}, {"c_beta": bounds.c_beta(beta), "d_min": dmin}).to_dict()
        else:
            _require(v, "p", "k")
            out = bounds.BoundReport(
                "theorem4",
                bounds.mle_cov_trace_bound(v["k"], v["m"], v["p"], beta),
                {"k": v["k"], "m": v["m"], "p": v["p"], "beta": beta, "epsilon": v["epsilon"]},
                {"unbiasedness_threshold": bounds.unbiasedness_threshold(v["p"], beta, v["epsilon"]),
                 "exponent_ratio": bounds.hcr_exponent_ratio(beta),
                 "gap_db": 10 * math.log10(bounds.hcr_exponent_ratio(beta)), "d_min": dmin},
            ).to_dict()
    elif which == "theorem3":
        _require(v, "p", "k", "theta_min")
        value = bounds.necessary_m_lower(v["p"], v["k"], v["theta_min"], v["sigma_sq"])
        out = bounds.BoundReport("theorem3", value, {"p": v["p"], "k": v["k"], "theta_min": v["theta_min"],
                                                      "sigma_sq": v["sigma_sq"]}).to_dict()
        if v["m"] is not None:
            out["m"] = v["m"]
            out["unreliable"] = v["m"] < value
    elif which == "msuff":
        _require(v, "p", "k", "theta_min")
        out = bounds.sufficient_m_suff(v["p"], v["k"], v["theta_min"], v["sigma_sq"]).to_dict()
    elif which == "example1":
        _require(v, "m")
        cr, hcr = bounds.integer_mean_hcr(v["m"], v["sigma_sq"])
        out = bounds.BoundReport("example1", hcr, {"m": v["m"], "sigma_sq": v["sigma_sq"]},
                                 {"cr": cr, "hcr": hcr}).to_dict()
    elif which == "remark":
        _require(v, "k", "theta_min")
        sigma = math.sqrt(v["sigma_sq"])
        out = bounds.BoundReport("remark", bounds.direct_measurement_error(v["k"], v["theta_min"], sigma),
                                 {"k": v["k"], "theta_min": v["theta_min"], "sigma_sq": v["sigma_sq"]}).to_dict()
    else:
        _require(v, "p")
        out = {"name": "table1", "rows": bounds.regime_table(v["p"], v["sigma_sq"])}
    out["config"] = _echo(v)
    _emit(io.dumps(out) + "\n", v.get("output"))


def cmd_decode(v):
    _require(v, "k")
    truth = None
    if v["generate"]:
        setup, signal = _instance(v)
        y = measure(setup, signal, v["seed"])
        truth = list(signal.support.indices)
    else:
        _require(v, "matrix_file", "y_file")
        try:
            phi = io.read_matrix(v["matrix_file"])
            y = io.read_vector(v["y_file"])
        except FileNotFoundError as exc:
            raise InputMissing(f"input file not found: {exc.filename}") from None
        setup = MeasurementSetup(phi, v["sigma_sq"], v["k"])
    if v["method"] == "mle":
        result = mle_decode(setup, y, v["k"])
    else:
        result = mce_decode(setup, y, v["k"], normalized=v["normalized"])
    out = result.to_dict()
    if truth is not None:
        out["true_support"] = truth
    out["config"] = _echo(v)
    _emit(io.dumps(out) + "\n", v.get("output"))


def cmd_generate(v):
    setup, signal = _instance(v)
    y = measure(setup, signal, v["seed"])
    try:
        io.write_matrix(v["matrix_out"], setup.phi)
        io.write_matrix(v["y_out"], y[:, None])
        if v.get("signal_out"):
            with open(v["signal_out"], "w") as fh:
                fh.write(io.dumps({"signal": signal.to_dict(), "config": _echo(v)}) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write output: {exc}") from None


def _trial_config(v):
    _require(v, "p", "k", "m", "theta_min")
    return experiments.TrialConfig(
        p=v["p"], k=v["k"], m=v["m"], theta_min=v["theta_min"], sigma_sq=v["sigma_sq"], trials=v["trials"],
        base_seed=v["base_seed"], decoder=v["decoder"], phi_seed=v["phi_seed"],
        coefficients=tuple(v["coefficients"]) if v["coefficients"] else None,
    )


def _summary_line(r):
    if "empirical_p_err" in r and "check" not in r:
        base = f"p={r.get('p', r.get('config', {}).get('p'))}"
        if "multiplier" in r:
            base += f" multiplier={r['multiplier']} m={r.get('m')}"
        if r.get("error"):
            return base + f" error: {r['error']}"
        return base + f" p_err={r['empirical_p_err']:.6g} mean_rho2={r['mean_rho2']:.6g}"
    parts = [str(r.get("check", "record"))]
    for key in ("beta", "bound", "empirical_p_err", "hcr_value", "empirical_cov_trace", "theorem4_bound",
                "empirical_variance", "hcr", "cr", "rho2_pair", "lemma1_violations", "voided", "reason"):
        if r.get(key) is not None:
            val = r[key]
            parts.append(f"{key}={val:.6g}" if isinstance(val, float) else f"{key}={val}")
    if "ks" in r:
        parts.append(f"ks_pvalue={r['ks']['pvalue']:.4g} ks_passed={r['ks']['passed']}")
    if r.get("tail", {}).get("applicable"):
        parts.append(f"tail_passed={r['tail']['passed']}")
    if "passed" in r:
        parts.append(f"passed={r['passed']}")
    return " ".join(parts)


def cmd_experiment(v):
    _require(v, "trials", "base_seed")
    if v["trials"] < 1:
        raise UsageError(f"--trials must be a positive integer, got {v['trials']}")
    if v["workers"] < 1:
        raise UsageError(f"--workers must be a positive integer, got {v['workers']}")
    kind, workers = v["kind"], v["workers"]
    if kind == "monte-carlo":
        records = [experiments.run_monte_carlo(_trial_config(v), workers).to_dict()]
    elif kind == "verify-lemma2":
        records = [experiments.verify_lemma2(_trial_config(v), workers)]
    elif kind == "verify-hcr":
        records = [experiments.verify_hcr(_trial_config(v), workers, epsilon=v["epsilon"])]
    elif kind == "theorem3-witness":
        _require(v, "p", "k", "m", "theta_min")
        records = [experiments.theorem3_witness(v["p"], v["k"], v["theta_min"], v["sigma_sq"], v["m"],
                                                v["base_seed"], v["trials"])]
    elif kind == "regime-sweep":
        _require(v, "p_grid")
        records = experiments.regime_sweep(v["regime"], v["p_grid"], v["trials"], v["base_seed"],
                                           multipliers=tuple(v["multipliers"]), reference=v["reference"],
                                           decoder=v["decoder"], sigma_sq=v["sigma_sq"], workers=workers)
    elif kind == "integer-mean":
        _require(v, "m")
        records = [experiments.integer_mean_experiment(v["m"], v["sigma_sq"], v["trials"], v["base_seed"])]
    else:
        _require(v, "p", "k", "m")
        records = [experiments.chi2_projection_check(v["m"], v["k"], v["p"], v["trials"], v["base_seed"], v["ell"])]
    echo = _echo(v)
    for r in records:
        r["run_config"] = echo
    _emit(io.dumps_lines(records), v.get("output"))
    if v.get("csv"):
        _emit(io.dumps_csv(records), v["csv"])
    summary = "".join(f"{kind}: {_summary_line(r)}\n" for r in records)
    (sys.stdout if v.get("output") else sys.stderr).write(summary)


COMMANDS = {"bounds": cmd_bounds, "decode": cmd_decode, "generate": cmd_generate, "experiment": cmd_experiment}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # --help and usage errors; return the status so callers need not catch it
        return exc.code
    saved_cap = os.environ.get(ENUMERATION_CAP_ENV)
    try:
        values = _resolve(args)
        if values.get("enum_cap") is not None:
            if values["enum_cap"] < 1:
                raise UsageError("--enum-cap must be positive")
            os.environ[ENUMERATION_CAP_ENV] = str(values["enum_cap"])
        COMMANDS[values["command"]](values)
    except UsageError as exc:
        print(f"supportbound: usage error: {exc}", file=sys.stderr)
        return EX_USAGE
    except InputMissing as exc:
        print(f"supportbound: {exc}", file=sys.stderr)
        return EX_NOINPUT
    except OutputError as exc:
        print(f"supportbound: {exc}", file=sys.stderr)
        return EX_CANTCREAT
    except (SupportBoundError, ValueError) as exc:
        print(f"supportbound: precondition violated ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EX_DOMAIN
    finally:
        if saved_cap is None:
            os.environ.pop(ENUMERATION_CAP_ENV, None)
        else:
            os.environ[ENUMERATION_CAP_ENV] = saved_cap
    return EX_OK


if __name__ == "__main__":
    sys.exit(main())
