"""Command-line entry point and flat key = value run configuration.

Every run is described by a RunConfig: defaults, then an optional
config file, then --set overrides, then direct flags. Validation
collects all problems before reporting. Exit codes: 0 success, 1
invalid configuration or input, 2 numerical failure (unconverged,
unresolved); numerical failures still write their outputs. Each run
drops a metadata sidecar (config echo including defaulted keys,
versions, seed, wall time) next to its primary output; timestamps live
only there, so repeated runs produce bit-identical data files.
"""

import argparse
import sys
import time

import numpy as np

from . import __version__, io
from ._core_np import active_cells
from ._kernels import backend_name
from .defects import (MonotonicityResult, UnderResolvedCellError,
                      classify_defects, monotonicity_check)
from .elastic import PowerModulus, check_hypotheses
from .fields import GENERATOR_KINDS, Field, GridSpec, generate
from .lifting import ResolutionError, obstruction_chain
from .manifolds import BUILTIN_TARGETS
from .minimizer import (MinimizeOptions, PenalizedOptions, minimize,
                        minimize_penalized)

SUBCOMMANDS = ("generate", "minimize", "minimize-penalized", "lift",
               "analyze", "monotonicity", "check-modulus", "export")
EXPORT_FORMATS = ("dfsc", "vtk", "csv", "json")

_DEFAULT_OUTPUT = {
    "generate": "field.dfsc",
    "minimize": "minimized.dfsc",
    "minimize-penalized": "minimized-penalized.dfsc",
    "lift": "chain.csv",
    "analyze": "report.json",
    "monotonicity": "monotonicity.json",
    "check-modulus": "modulus-report.json",
}


class ConfigError(ValueError):
    """Carries the full list of configuration problems."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _positive(x):
    return x > 0


# key -> (type tag, default, validator or None, description)
# type tags: str int float bool vec, opt* variants admit "none"
_SCHEMA = {
    "subcommand": ("str", None, lambda v: v in SUBCOMMANDS,
                   "one of " + ", ".join(SUBCOMMANDS)),
    "target": ("str", "RP2", lambda v: v in BUILTIN_TARGETS,
               "one of " + ", ".join(sorted(BUILTIN_TARGETS))),
    "grid.n": ("int", 32, lambda v: v >= 8, "at least 8 nodes per axis"),
    "grid.dims": ("int", 3, lambda v: v in (2, 3), "2 or 3"),
    "grid.shape": ("str", "box", lambda v: v in ("box", "ball"),
                   "box or ball"),
    "modulus.p": ("float", 1.5, lambda v: 1.0 < v < 2.0,
                  "exponent in the open interval (1, 2)"),
    "modulus.b": ("float", 1.0, lambda v: v >= 0.0, "nonnegative"),
    "generator.kind": ("str", "hedgehog", lambda v: v in GENERATOR_KINDS,
                       "one of " + ", ".join(GENERATOR_KINDS)),
    "generator.k": ("float", 0.5, lambda v: v in (0.5, -0.5),
                    "+0.5 or -0.5"),
    "generator.n_pairs": ("int", 1, lambda v: v >= 1, "at least 1"),
    "generator.value": ("optvec", None, None, "constant field components"),
    "generator.support": ("optfloat", None, _positive,
                          "positive dipole support radius"),
    "seed": ("int", 0, lambda v: v >= 0, "nonnegative"),
    "opts.max_iters": ("optint", None, lambda v: v >= 1, "at least 1"),
    "opts.grad_tol": ("optfloat", None, _positive, "positive"),
    "opts.armijo_c": ("float", 1e-4, lambda v: 0.0 < v < 1.0,
                      "in the open interval (0, 1)"),
    "opts.backtrack": ("float", 0.5, lambda v: 0.0 < v < 1.0,
                       "in the open interval (0, 1)"),
    "opts.step0": ("float", 1.0, _positive, "positive"),
    "opts.delta_grad": ("optfloat", None, _positive, "positive"),
    "penalized.epsilon": ("float", 0.2, _positive,
                          "positive correlation length"),
    "analysis.theta": ("optfloat", None, _positive,
                       "positive density threshold"),
    "analysis.center": ("optvec", None, None, "ball center coordinates"),
    "analysis.r_inner": ("optfloat", None, _positive, "positive"),
    "analysis.r_outer": ("optfloat", None, _positive, "positive"),
    "analysis.write_vtk": ("bool", False, None, "true or false"),
    "input": ("optstr", None, None, "input field path"),
    "output": ("optstr", None, None, "primary output path"),
    "format": ("optstr", None, lambda v: v in EXPORT_FORMATS,
               "one of " + ", ".join(EXPORT_FORMATS)),
}

_REQUIRED = {
    "lift": ("input",),
    "analyze": ("input",),
    "monotonicity": ("input", "analysis.center", "analysis.r_inner",
                     "analysis.r_outer"),
    "export": ("input", "format"),
}


class RunConfig:
    """Validated flat mapping of run keys; compares by content."""

    def __init__(self, values):
        self._values = dict(values)

    def __getitem__(self, key):
        return self._values[key]

    def __eq__(self, other):
        return (isinstance(other, RunConfig)
                and self._values == other._values)

    def __repr__(self):
        return f"RunConfig({self._values!r})"

    def items(self):
        return sorted(self._values.items())

    def serialize(self):
        """key = value text; parse_config inverts this exactly."""
        lines = []
        for key, val in self.items():
            lines.append(f"{key} = {_format_value(val)}")
        return "\n".join(lines) + "\n"

    def echo(self):
        """Every key as serialized text, for the metadata sidecar."""
        return {key: _format_value(val) for key, val in self.items()}


def _format_value(val):
    if val is None:
        return "none"
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, float):
        return f"{val:.17g}"
    if isinstance(val, tuple):
        return ", ".join(f"{x:.17g}" for x in val)
    return str(val)


def _convert(key, text, errors, where):
    tag = _SCHEMA[key][0]
    opt = tag.startswith("opt")
    base = tag[3:] if opt else tag
    if opt and text.lower() == "none":
        return None
    try:
        if base == "str":
            return text
        if base == "int":
            return int(text)
        if base == "float":
            return float(text)
        if base == "bool":
            low = text.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(text)
        if base == "vec":
            parts = [s for s in text.replace(",", " ").split() if s]
            if not parts:
                raise ValueError(text)
            return tuple(float(s) for s in parts)
    except ValueError:
        errors.append(f"{where}: cannot parse {text!r} as {base} "
                      f"for key {key}")
        return _MISSING
    raise AssertionError(f"unhandled type tag {tag}")


_MISSING = object()


def _validate(values, errors):
    for key, val in values.items():
        if val is _MISSING or val is None:
            continue
        check, desc = _SCHEMA[key][2], _SCHEMA[key][3]
        if check is not None and not check(val):
            errors.append(f"key {key}: value {_format_value(val)} out of "
                          f"range, expected {desc}")
    sub = values.get("subcommand")
    if sub in _REQUIRED:
        for key in _REQUIRED[sub]:
            if values.get(key) is None:
                errors.append(f"subcommand {sub} requires key {key}")
    ri, ro = values.get("analysis.r_inner"), values.get("analysis.r_outer")
    if ri is not None and ro is not None and not ri < ro:
        errors.append("analysis.r_inner must be strictly below "
                      "analysis.r_outer")


def parse_config(text):
    """Parse key = value text into a RunConfig; collects all errors.

    Lines are UTF-8 with # comments; unknown keys, unparsable values,
    out-of-range values and missing subcommand keys are all reported
    together in a single ConfigError.
    """
    values = {k: spec[1] for k, spec in _SCHEMA.items()}
    errors = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected key = value, got "
                          f"{line!r}")
            continue
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _SCHEMA:
            errors.append(f"line {lineno}: unknown key {key!r}")
            continue
        converted = _convert(key, val, errors, f"line {lineno}")
        if converted is not _MISSING:
            values[key] = converted
    if values["subcommand"] is None:
        errors.append("missing required key: subcommand")
    _validate(values, errors)
    if errors:
        raise ConfigError(errors)
    return RunConfig(values)


# ------------------------------------------------------ subcommands ---


def _build_modulus(cfg):
    return PowerModulus(p=cfg["modulus.p"], b=cfg["modulus.b"])


def _build_options(cfg, penalized=False):
    kw = dict(
        max_iters=cfg["opts.max_iters"],
        grad_tol=cfg["opts.grad_tol"],
        armijo_c=cfg["opts.armijo_c"],
        backtrack=cfg["opts.backtrack"],
        step0=cfg["opts.step0"],
        delta_grad=cfg["opts.delta_grad"],
    )
    if penalized:
        return PenalizedOptions(epsilon=cfg["penalized.epsilon"], **kw)
    return MinimizeOptions(**kw)


def _initial_field(cfg):
    if cfg["input"] is not None:
        return io.read_field(cfg["input"])
    grid = GridSpec.cube(cfg["grid.n"], dims=cfg["grid.dims"],
                         shape=cfg["grid.shape"])
    target = BUILTIN_TARGETS[cfg["target"]]
    return generate(cfg["generator.kind"], grid, target, seed=cfg["seed"],
                    value=cfg["generator.value"], k=cfg["generator.k"],
                    n_pairs=cfg["generator.n_pairs"],
                    support=cfg["generator.support"])


def _run_generate(cfg, out):
    field = _initial_field(cfg)
    io.write_field(field, out)
    return 0, {"loci": field.singular_loci,
               "nodes": list(field.grid.n)}


def _run_minimize(cfg, out, penalized=False):
    field = _initial_field(cfg)
    modulus = _build_modulus(cfg)
    options = _build_options(cfg, penalized=penalized)
    runner = minimize_penalized if penalized else minimize
    result = runner(field, modulus, options)
    io.write_field(result.field, out)
    io.write_trace_csv(result.trace, out + ".trace.csv")
    summary = {
        "status": result.status,
        "energy": result.energy,
        "grad_norm": result.grad_norm,
        "iterations": result.iterations,
    }
    if penalized:
        summary["penalty_energy"] = result.penalty_energy
        summary["ambiguous_projections"] = int(
            np.count_nonzero(result.projection_ambiguous))
    return (0 if result.status == "converged" else 2), summary


def _run_lift(cfg, out):
    field = io.read_field(cfg["input"])
    chain = obstruction_chain(field)
    io.write_chain_csv(chain, active_cells(field.inside), out)
    return 0, {"chain_length": chain.length,
               "support_plaquettes": len(chain.support)}


def _run_analyze(cfg, out):
    field = io.read_field(cfg["input"])
    report = classify_defects(field, _build_modulus(cfg),
                              theta=cfg["analysis.theta"])
    io.write_json(io.report_payload(report), out)
    if cfg["analysis.write_vtk"]:
        io.write_vtk_defects(report, out + ".vtk")
    return 0, {
        "lines": len(report.line_polylines),
        "points": len(report.points),
        "unclassified": len(report.unclassified),
        "chain_length": report.chain_length,
    }


def _run_monotonicity(cfg, out):
    field = io.read_field(cfg["input"])
    result = monotonicity_check(field, _build_modulus(cfg),
                                cfg["analysis.center"],
                                cfg["analysis.r_inner"],
                                cfg["analysis.r_outer"])
    payload = {
        "lhs": result.lhs,
        "rhs": result.rhs,
        "residual": result.residual,
        "rhs_nonnegative": result.rhs_nonnegative,
        "psi_correction": result.psi_correction,
        "psi_bound": result.psi_bound,
        "profile": [list(row) for row in result.profile],
    }
    io.write_json(payload, out)
    code = 0 if result.rhs_nonnegative else 2
    return code, payload


def _run_check_modulus(cfg, out):
    report = check_hypotheses(_build_modulus(cfg))
    payload = {
        "admissible": report.admissible,
        "p": report.p,
        "alpha": report.alpha,
        "M": report.M,
        "alpha_estimate": report.alpha_estimate,
        "M_estimate": report.M_estimate,
        "blowup_residual": report.blowup_residual,
        "checks": report.checks,
        "notes": report.notes,
    }
    io.write_json(payload, out)
    return (0 if report.admissible else 2), payload


def _run_export(cfg, out):
    field = io.read_field(cfg["input"])
    fmt = cfg["format"]
    if fmt == "dfsc":
        io.write_field(field, out)
    elif fmt == "vtk":
        io.write_vtk_field(field, out,
                           include_q=len(field.target.group) == 2)
    else:
        raise ConfigError([f"format {fmt} does not apply to a field "
                           "payload; export dfsc or vtk (csv is for "
                           "traces, json for reports)"])
    return 0, {"format": fmt}


def _dispatch(cfg, out):
    sub = cfg["subcommand"]
    if sub == "generate":
        return _run_generate(cfg, out)
    if sub == "minimize":
        return _run_minimize(cfg, out)
    if sub == "minimize-penalized":
        return _run_minimize(cfg, out, penalized=True)
    if sub == "lift":
        return _run_lift(cfg, out)
    if sub == "analyze":
        return _run_analyze(cfg, out)
    if sub == "monotonicity":
        return _run_monotonicity(cfg, out)
    if sub == "check-modulus":
        return _run_check_modulus(cfg, out)
    if sub == "export":
        return _run_export(cfg, out)
    raise AssertionError(sub)


# -------------------------------------------------------- CLI layer ---


class _ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgumentError(message)


_FLAG_KEYS = (
    ("--target", "target"),
    ("--grid", "grid.n"),
    ("--dims", "grid.dims"),
    ("--shape", "grid.shape"),
    ("--p", "modulus.p"),
    ("--b", "modulus.b"),
    ("--kind", "generator.kind"),
    ("--k", "generator.k"),
    ("--n-pairs", "generator.n_pairs"),
    ("--seed", "seed"),
    ("--epsilon", "penalized.epsilon"),
    ("--theta", "analysis.theta"),
    ("--center", "analysis.center"),
    ("--r-inner", "analysis.r_inner"),
    ("--r-outer", "analysis.r_outer"),
    ("--in", "input"),
    ("--out", "output"),
    ("--format", "format"),
)


def _build_parser():
    parser = _Parser(prog="defectoscope",
                     description="manifold-constrained elastic fields and "
                                 "their singular sets")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--set", action="append", default=[],
                        metavar="KEY=VALUE", help="override one config key")
    parser.add_argument("--json-errors", action="store_true",
                        help="report failures as JSON on stdout")
    for flag, key in _FLAG_KEYS:
        parser.add_argument(flag, dest=key.replace(".", "__"),
                            metavar=key, default=None)
    return parser


def _assemble_text(args):
    """Merge config file, --set pairs and direct flags into config text.

    Later lines win for repeated keys, so precedence is defaults, file,
    --set in order, then flags.
    """
    parts = [f"subcommand = {args.subcommand}"]
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            parts.append(fh.read())
    parts.extend(args.set)
    for _, key in _FLAG_KEYS:
        val = getattr(args, key.replace(".", "__"))
        if val is not None:
            parts.append(f"{key} = {val}")
    return "\n".join(parts) + "\n"


def _emit_errors(messages, code, json_errors):
    if json_errors:
        payload = {"errors": [str(m) for m in messages], "exit_code": code}
        print(io.dumps_canonical(payload))
    else:
        for msg in messages:
            print(f"defectoscope: error: {msg}", file=sys.stderr)
    return code


def _sidecar(cfg, out, code, summary, wall):
    meta = {
        "config": cfg.echo(),
        "versions": {
            "defectoscope": __version__,
            "numpy": np.__version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
            "backend": backend_name(),
        },
        "seed": cfg["seed"],
        "exit_code": code,
        "wall_time_s": wall,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "result": summary,
    }
    io.write_json(meta, out + ".meta.json")


def run_cli(argv=None):
    """Parse argv, run one subcommand, return the process exit code."""
    parser = _build_parser()
    raw = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(raw)
    except _ArgumentError as exc:
        return _emit_errors([str(exc)], 1, "--json-errors" in raw)
    try:
        text = _assemble_text(args)
    except OSError as exc:
        return _emit_errors([f"cannot read config: {exc}"], 1,
                            args.json_errors)
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        return _emit_errors(exc.errors, 1, args.json_errors)

    out = cfg["output"]
    if out is None:
        if cfg["subcommand"] == "export":
            stem = cfg["input"].rsplit(".", 1)[0]
            out = f"{stem}.{cfg['format'] or 'out'}"
        else:
            out = _DEFAULT_OUTPUT[cfg["subcommand"]]
        cfg = RunConfig(dict(cfg.items(), output=out))

    start = time.perf_counter()
    try:
        code, summary = _dispatch(cfg, out)
    except ConfigError as exc:
        return _emit_errors(exc.errors, 1, args.json_errors)
    except (ResolutionError, UnderResolvedCellError,
            FloatingPointError) as exc:
        # numerical failure after a valid config: still leave a sidecar
        wall = time.perf_counter() - start
        _sidecar(cfg, out, 2, {"error": str(exc)}, wall)
        return _emit_errors([str(exc)], 2, args.json_errors)
    except (OSError, ValueError) as exc:
        return _emit_errors([str(exc)], 1, args.json_errors)
    wall = time.perf_counter() - start
    _sidecar(cfg, out, code, summary, wall)
    if code != 0:
        _emit_errors([f"numerical failure: {summary}"], code,
                     args.json_errors)
    return code


def main():
    raise SystemExit(run_cli())


if __name__ == "__main__":
    main()
