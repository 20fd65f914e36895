"""Batch experiment runner.

Every experiment is a subcommand.  Parameters come from three layers,
later ones winning: built-in defaults, a JSON config file (``--config``),
then command-line flags.  Outputs go to ``--out``, else the config's
``output`` field, else ``$BSLATTICE_OUT``, else ``./bslattice-out``.

Exit codes: 0 success, 1 usage or config error, 2 failed assertion.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import platform
import sys
import time
from importlib import resources

import jsonschema
import numpy as np
import scipy
import scipy.fft
from threadpoolctl import threadpool_limits

from . import __version__

EXIT_OK, EXIT_USAGE, EXIT_ASSERT = 0, 1, 2
OUT_ENV = "BSLATTICE_OUT"
DEFAULT_OUT = "bslattice-out"

EXPERIMENTS = {
    "bs-sweep": "Thm 1.1 / Thm 1.7 (iv)",
    "eig-count": "Cor 1.6",
    "weak-coupling": "Cor 1.2 (proxy)",
    "dispersive-fit": "Prop 3.1",
    "strichartz": "Cor 3.2",
    "knapp": "Thm 1.7 (iii)",
    "flatband": "Thm 1.7 (ii)",
    "threshold-div": "Thm 1.7 (i)",
    "holder-bv": "Thm 1.5",
    "ultra-probe": "Prop 2.8 / Lemma 2.6",
    "continuum-dispersive": "App A",
}

SUMMARIES = {
    "bs-sweep": "sup of ||K(mu + i eps)|| over mu along an eps ladder, with verdict",
    "eig-count": "randomised eigenvalue counting certificates on a box",
    "weak-coupling": "weak-coupling margin 1/sup||K|| from a sweep",
    "dispersive-fit": "decay exponent of ||e^{-itH0} delta_0||_inf",
    "strichartz": "endpoint Strichartz norm of e^{-itH0} delta_0 on [0, T]",
    "knapp": "Knapp family scaling of quadratic form and norm",
    "flatband": "flat-band kernel factorisation and weighted blow-up",
    "threshold-div": "resolvent quadratic form as mu -> 0 at the bottom threshold",
    "holder-bv": "Hoelder continuity of weighted boundary values",
    "ultra-probe": "ultrahyperbolic surface form and Sobolev refinement table",
    "continuum-dispersive": "continuum ultrahyperbolic dispersive decay fit",
}


class ConfigError(ValueError):
    """Invalid configuration; carries the failing field path."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


# ---------------------------------------------------------------------------
# Potentials


def parse_potential(desc, d):
    """Build a potential from a descriptor.

    Strings: ``power:<exponent>[:<amplitude>]`` with a negative exponent
    (``power:-2`` is (1 + |x|)^-2; a negative amplitude flips the sign),
    ``point:<value>`` at the origin, ``aniso:<p>``, ``flatband`` and
    ``table:<x,y,..>=<v>;...``.  Dicts are read by
    :func:`~bslattice.lattice_core.potential_from_json`.
    """
    from .lattice_core import (AnisotropicWeight, FlatBandWeight, PointMass, PowerDecay, Table,
                               potential_from_json)

    if desc is None:
        return None
    if isinstance(desc, dict):
        return potential_from_json(desc)
    kind, _, rest = str(desc).partition(":")
    try:
        if kind == "power":
            parts = rest.split(":")
            expo = float(parts[0])
            if expo > 0:
                raise ValueError("the exponent must be <= 0")
            amp = float(parts[1]) if len(parts) > 1 else 1.0
            return PowerDecay(-expo, -1 if amp < 0 else 1, abs(amp))
        if kind == "point":
            return PointMass((0,) * d, float(rest))
        if kind == "aniso":
            return AnisotropicWeight(float(rest))
        if kind == "flatband":
            return FlatBandWeight()
        if kind == "table":
            entries = {}
            for item in rest.split(";"):
                site, _, val = item.partition("=")
                entries[tuple(int(c) for c in site.split(","))] = float(val)
            return Table.from_dict(entries)
    except (ValueError, IndexError) as exc:
        raise ConfigError("params.potential", f"bad descriptor {desc!r}: {exc}") from None
    raise ConfigError("params.potential", f"unknown potential kind {kind!r}")


# ---------------------------------------------------------------------------
# Schemas and config loading


def load_schema(command, which):
    """Schema ``which`` ('config' or 'output') of ``command``."""
    text = resources.files("bslattice").joinpath("schemas", f"{command}.{which}.json").read_text()
    return json.loads(text)


def _field_path(error):
    parts = [str(p) for p in error.absolute_path]
    if error.validator == "required":
        missing = error.message.split("'")[1]
        parts.append(missing)
    elif error.validator == "additionalProperties":
        extra = error.message.split("'")[1]
        parts.append(extra)
    return ".".join(parts) if parts else "<root>"


def validate(instance, schema):
    """Raise ConfigError naming the first failing field."""
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(instance), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigError(_field_path(errors[0]), errors[0].message)


def read_config(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError("<file>", str(exc)) from None
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    return data


def resolve(command, config, flags):
    """Merge defaults, config params and flags, then validate.

    Returns the full experiment config with every parameter filled in.
    """
    params = dict(DEFAULTS[command])
    params.update(config.get("params", {}))
    params.update({k: v for k, v in flags.items() if v is not None})
    full = {"command": command, "params": params, "seed": config.get("seed", 0)}
    if "output" in config:
        full["output"] = config["output"]
    validate(full, load_schema(command, "config"))
    return full


def output_dir(flag, config):
    return flag or config.get("output") or os.environ.get(OUT_ENV) or DEFAULT_OUT


# ---------------------------------------------------------------------------
# Output writing


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return _jsonable(x.item())
    if isinstance(x, float) and not np.isfinite(x):
        return None if np.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


class Artifacts:
    """Single writer for one invocation's output directory."""

    def __init__(self, root, command):
        self.root = root
        self.command = command
        self.files = []
        os.makedirs(root, exist_ok=True)

    def path(self, name):
        self.files.append(name)
        return os.path.join(self.root, name)

    def write_json(self, name, obj):
        with open(self.path(name), "w") as fh:
            fh.write(_dump(_jsonable(obj)))

    def write_manifest(self, config, started, wall):
        digests = {}
        for name in sorted(set(self.files)):
            with open(os.path.join(self.root, name), "rb") as fh:
                digests[name] = hashlib.sha256(fh.read()).hexdigest()
        manifest = {
            "command": self.command,
            "config": config,
            "files": digests,
            "versions": {"bslattice": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__, "python": platform.python_version()},
            "timestamp": {"started": started, "wall_time_s": wall},
        }
        with open(os.path.join(self.root, "manifest.json"), "w") as fh:
            fh.write(_dump(_jsonable(manifest)))


# ---------------------------------------------------------------------------
# Commands.  Each returns (result dict, check dict or None).


def _box(d, R):
    from .lattice_core import LatticeBox
    return LatticeBox(int(d), int(R))


def run_bs_sweep(p, out, seed, threads):
    from .birman_schwinger import bs_sup_sweep
    V = parse_potential(p["potential"], p["d"])
    rep = bs_sup_sweep(V, _box(p["d"], p["R"]), p["mu"], p["eps"], tol=p["tol"],
                       method=p["method"], workers=threads)
    rep.write_csv(out.path("bs-sweep.csv"))
    print(rep.verdict_table())
    check = None
    if p["assert"] is not None:
        check = {"expected": p["assert"], "observed": rep.verdict,
                 "passed": rep.verdict == p["assert"]}
    return rep.to_json(), check


def run_weak_coupling(p, out, seed, threads):
    from .birman_schwinger import NoUniformMarginError, bs_sup_sweep, weak_coupling_margin
    V = parse_potential(p["potential"], p["d"])
    rep = bs_sup_sweep(V, _box(p["d"], p["R"]), p["mu"], p["eps"], tol=p["tol"],
                       method=p["method"], workers=threads)
    rep.write_csv(out.path("weak-coupling.csv"))
    try:
        margin, err = weak_coupling_margin(V, rep), None
    except NoUniformMarginError as exc:
        margin, err = None, str(exc)
    res = {"sweep": rep.to_json(), "margin": margin, "error": err}
    print(f"verdict={rep.verdict} margin={margin}" + (f" ({err})" if err else ""))
    return res, {"expected": "uniform margin", "observed": rep.verdict, "passed": err is None}


def run_eig_count(p, out, seed, threads):
    from .spectral_box import counting_check, write_certificates
    V = parse_potential(p["potential"], p["d"])
    certs = counting_check(V, p["lam"], trials=p["trials"], box=_box(p["d"], p["R"]),
                           seed=seed, margin=p["margin"], bc=p["bc"])
    write_certificates(out.path("eig-count.jsonl"), certs)
    failing = [c.to_json() for c in certs if not c.passed]
    res = {"d": p["d"], "R": p["R"], "lam": p["lam"], "trials": p["trials"],
           "certificates": len(certs), "failing": len(failing),
           "failures": failing, "hypothesis": certs[0].hypothesis if certs else None}
    print(f"{len(certs)} certificates, {len(failing)} failing")
    return res, {"expected": "0 failing", "observed": len(failing), "passed": not failing}


def run_dispersive_fit(p, out, seed, threads):
    from .dynamics import dispersive_fit
    fit = dispersive_fit(p["d"], (p["t_min"], p["t_max"]), p["samples"])
    fit.run.write_csv(out.path("dispersive-fit.csv"))
    expected = -p["d"] / 3.0
    res = fit.to_json()
    res["expected_slope"] = expected
    print(f"d={p['d']} slope={fit.slope:.5f} (expected {expected:.5f}) residual={fit.residual:.2e}")
    ok = abs(fit.slope - expected) <= p["slope_tol"] and not fit.inconclusive
    return res, {"expected": expected, "observed": fit.slope, "passed": ok}


def run_strichartz(p, out, seed, threads):
    from .dynamics import point_strichartz_norm, strichartz_exponent
    q, r = 2.0, strichartz_exponent(p["d"])
    values = [float(point_strichartz_norm(p["d"], T)) for T in p["T"]]
    with open(out.path("strichartz.csv"), "w") as fh:
        fh.write("T,value\n")
        for T, v in zip(p["T"], values):
            fh.write(f"{float(T)!r},{v!r}\n")
    growth = values[-1] / values[-2] if len(values) > 1 else 1.0
    res = {"d": p["d"], "q": q, "r": r, "T": p["T"], "values": values, "last_ratio": growth}
    for T, v in zip(p["T"], values):
        print(f"T={T:g} value={v:.6g}")
    return res, {"expected": f"last ratio <= {p['ratio_tol']}", "observed": growth,
                 "passed": growth <= p["ratio_tol"]}


def run_knapp(p, out, seed, threads):
    from .counterexamples import knapp_family
    rep = knapp_family(p["d"], p["p"], p["a"], tuple(p["eps"]), p["nodes"])
    rep.write_csv(out.path("knapp.csv"))
    res = rep.to_json()
    m_expected = (p["d"] + 2) * (1 - 2.0 / p["p"])
    res["expected"] = {"Q_slope": float(p["d"] - 1), "M_slope": m_expected}
    print(f"a={res['a']} Q_slope={rep.Q_slope:.4f} M_slope={rep.M_slope:.4f} "
          f"tube_ok={res['tube_ok']}")
    ok = (abs(rep.Q_slope - (p["d"] - 1)) <= 0.15 and abs(rep.M_slope - m_expected) <= 0.2
          and res["tube_ok"])
    return res, {"expected": res["expected"], "observed": [rep.Q_slope, rep.M_slope],
                 "passed": bool(ok)}


def run_flatband(p, out, seed, threads):
    from .counterexamples import flatband_kernel, flatband_weighted_blowup
    table = flatband_kernel(p["radius"], p["x_range"])
    table.write_csv(out.path("flatband-kernel.csv"))
    s = np.arange(-50, 51)
    along_s = np.abs(table.I1(s, 0))
    t = np.arange(0, 61)
    along_t = np.abs(table.I1(0, t)) / abs(table.I1(0, 0))
    with open(out.path("flatband-profiles.csv"), "w") as fh:
        fh.write("u,abs_I1_s0,rel_abs_I1_0t\n")
        for u in range(0, 61):
            a = repr(float(along_s[u + 50])) if u <= 50 else ""
            fh.write(f"{u},{a},{float(along_t[u])!r}\n")
    blow = flatband_weighted_blowup({(0, 0): 1.0}, p["s_max"], p["radius"])
    blow.write_csv(out.path("flatband-blowup.csv"))
    std_ratio = float(along_s.std() / along_s.mean())
    tail = float(along_t[20:].max())
    res = {"radius": p["radius"], "factor_residual": table.factor_residual,
           "std_over_mean_s": std_ratio, "max_rel_t_ge_20": tail,
           "blowup_slope": blow.slope, "blowup_log_slope": blow.log_slope}
    print(f"std/mean={std_ratio:.2e} tail(t>=20)={tail:.2e} blowup slope={blow.slope:.4f}")
    ok = std_ratio < 1e-10 and tail < 1e-4 and abs(blow.slope + 0.5) < 0.05
    return res, {"expected": "factorised, decaying in t, blow-up slope -1/2",
                 "observed": [std_ratio, tail, blow.slope], "passed": bool(ok)}


def run_threshold_div(p, out, seed, threads):
    from .counterexamples import threshold_divergence
    V = parse_potential(p["potential"], p["d"])
    eta = {(0,) * p["d"]: 1.0}
    ser = threshold_divergence(p["d"], V, eta, p["mu"])
    ser.write_csv(out.path("threshold-div.csv"))
    expected = {1: "power", 2: "logarithmic"}.get(p["d"], "bounded")
    print(f"d={p['d']} classification={ser.classification} log_slope={ser.log_slope:.6f}")
    return ser.to_json(), {"expected": expected, "observed": ser.classification,
                           "passed": ser.classification == expected}


def run_holder_bv(p, out, seed, threads):
    from .resolvent import boundary_value_continuity
    mu = p["mu"] if p["mu"] is not None else 2.0 * p["d"]
    rep = boundary_value_continuity(p["s"], mu, p["eps"], _box(p["d"], p["R"]), tol=p["tol"])
    with open(out.path("holder-bv.csv"), "w") as fh:
        fh.write("eps1,eps2,M\n")
        for (a, b), m in zip(rep.eps_pairs, rep.M_values):
            fh.write(f"{float(a)!r},{float(b)!r},{float(m)!r}\n")
    expected = "cauchy" if p["s"] > 0.5 else "divergent"
    print(f"s={p['s']} classification={rep.classification} exponent={rep.fitted_exponent:.4f}")
    return rep.to_json(), {"expected": expected, "observed": rep.classification,
                           "passed": rep.classification == expected}


def run_ultra_probe(p, out, seed, threads):
    from .counterexamples import sobolev_blowup_probe, ultra_surface_form
    surf = ultra_surface_form(p["d"], p["eps"])
    surf.write_csv(out.path("ultra-surface.csv"))
    sob = sobolev_blowup_probe(p["d"], tuple(p["s_list"]), tuple(p["N_list"]), p["half_length"])
    sob.write_csv(out.path("ultra-sobolev.csv"))
    res = {"surface": surf.to_json(), "sobolev": sob.to_json()}
    print(f"surface log_slope={surf.log_slope:.5f}")
    for s, n, dr, g in zip(sob.s_list, sob.norms, sob.drift, sob.growth):
        print(f"s={s:g} norms={np.round(n, 5).tolist()} drift={dr:.3e} growth/doubling={g:.3e}")
    return res, {"expected": "positive log slope", "observed": surf.log_slope,
                 "passed": surf.log_slope > 0}


def run_continuum_dispersive(p, out, seed, threads):
    from .dynamics import continuum_decay_fit
    fit = continuum_decay_fit(p["d"], p["k"], (p["t_min"], p["t_max"]), p["samples"])
    fit.run.write_csv(out.path("continuum-dispersive.csv"))
    expected = -p["d"] / 2.0
    res = fit.to_json()
    res["expected_slope"] = expected
    print(f"d={p['d']} slope={fit.slope:.5f} (expected {expected})")
    return res, {"expected": expected, "observed": fit.slope,
                 "passed": abs(fit.slope - expected) <= p["slope_tol"]}


RUNNERS = {
    "bs-sweep": run_bs_sweep,
    "eig-count": run_eig_count,
    "weak-coupling": run_weak_coupling,
    "dispersive-fit": run_dispersive_fit,
    "strichartz": run_strichartz,
    "knapp": run_knapp,
    "flatband": run_flatband,
    "threshold-div": run_threshold_div,
    "holder-bv": run_holder_bv,
    "ultra-probe": run_ultra_probe,
    "continuum-dispersive": run_continuum_dispersive,
}

_LADDER = [0.1, 0.03162277660168379, 0.01, 0.0031622776601683794, 0.001]

DEFAULTS = {
    "bs-sweep": {"d": 3, "R": 40, "potential": "power:-2", "mu": None, "eps": _LADDER,
                 "tol": 1e-6, "method": "auto", "assert": None},
    "weak-coupling": {"d": 3, "R": 40, "potential": "power:-2", "mu": None, "eps": _LADDER,
                      "tol": 1e-6, "method": "auto"},
    "eig-count": {"d": 3, "R": 15, "lam": 0.0, "potential": None, "trials": 100,
                  "margin": None, "bc": "dirichlet"},
    "dispersive-fit": {"d": 1, "t_min": 100.0, "t_max": 10000.0, "samples": 25,
                       "slope_tol": 0.05},
    "strichartz": {"d": 4, "T": [1.0, 2.0, 4.0, 8.0], "ratio_tol": 1.05},
    "knapp": {"d": 3, "p": 6.0, "a": None, "eps": [0.2, 0.14, 0.1, 0.07, 0.05], "nodes": 128},
    "flatband": {"radius": 0.2, "x_range": 20, "s_max": 2000},
    "threshold-div": {"d": 2, "potential": "point:-1",
                      "mu": [0.1, 0.03162277660168379, 0.01, 0.0031622776601683794, 0.001,
                             0.00031622776601683794, 0.0001]},
    "holder-bv": {"d": 3, "R": 20, "s": 1.5, "mu": None, "eps": _LADDER, "tol": 1e-8},
    "ultra-probe": {"d": 3, "eps": [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8],
                    "s_list": [0.0, 0.5, 0.9, 1.0], "N_list": [64, 128, 256, 512],
                    "half_length": 4.0},
    "continuum-dispersive": {"d": 2, "k": 1, "t_min": 10.0, "t_max": 1000.0, "samples": 9,
                             "slope_tol": 0.05},
}


# ---------------------------------------------------------------------------
# Argument parsing


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _opt_float(text):
    return None if text.lower() == "none" else float(text)


FLAGS = {
    "d": (int, "dimension"),
    "R": (int, "box radius"),
    "potential": (str, "potential descriptor, e.g. power:-2, point:-1, table:0,0=-1"),
    "mu": (_floats, "comma-separated real energies"),
    "eps": (_floats, "comma-separated decreasing eps ladder"),
    "tol": (float, "relative tolerance"),
    "method": (str, "kernel route: auto, fft or bessel"),
    "lam": (float, "coupling constant"),
    "trials": (int, "number of random trials"),
    "margin": (float, "weak-coupling margin of the background potential"),
    "bc": (str, "boundary condition: dirichlet or periodic"),
    "t_min": (float, "first time"),
    "t_max": (float, "last time"),
    "samples": (int, "number of sample times"),
    "slope_tol": (float, "accepted deviation of the fitted slope"),
    "T": (_floats, "comma-separated time horizons"),
    "ratio_tol": (float, "accepted ratio between the last two horizons"),
    "p": (float, "Lebesgue exponent"),
    "a": (_opt_float, "aperture constant (default: automatic)"),
    "nodes": (int, "quadrature nodes per axis"),
    "radius": (float, "cutoff support radius"),
    "x_range": (int, "half side of the tabulated square"),
    "s_max": (int, "last diagonal coordinate"),
    "s": (float, "weight exponent"),
    "s_list": (_floats, "comma-separated Sobolev orders"),
    "N_list": (_ints, "comma-separated grid sizes"),
    "half_length": (float, "half side of the continuum domain"),
    "k": (int, "number of negative signs in the ultrahyperbolic symbol"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="bslattice", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    lst = sub.add_parser("list", help="list experiments")
    lst.add_argument("name", nargs="?", help="show one experiment; unknown names fail")
    show = sub.add_parser("show", help="render the verdict table of a saved sweep JSON")
    show.add_argument("path")
    run = sub.add_parser("run", help="run the experiment named in a config file")
    run.add_argument("config")
    _common(run)
    for name in RUNNERS:
        sp = sub.add_parser(name, help=SUMMARIES[name])
        sp.add_argument("--config", help="JSON config; flags override its params")
        _common(sp)
        for key in DEFAULTS[name]:
            if key == "assert":
                sp.add_argument("--assert", dest="assert_", choices=
                                ["bounded", "divergent", "inconclusive"],
                                help="exit 2 unless the verdict matches")
                continue
            conv, text = FLAGS[key]
            sp.add_argument(f"--{key}", type=conv, default=None, help=text)
        if name != "bs-sweep":
            sp.add_argument("--assert", dest="assert_", action="store_true",
                            help="exit 2 unless the expected behaviour is observed")
    return parser


def _common(sp):
    sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    sp.add_argument("--threads", type=int, default=1, help="worker threads for FFT and BLAS")
    sp.add_argument("--seed", type=int, default=None, help="random seed")


def list_experiments(name=None, stream=None):
    stream = stream or sys.stdout
    if name is not None and name not in EXPERIMENTS:
        print(f"unknown experiment {name!r}", file=sys.stderr)
        return EXIT_USAGE
    rows = [name] if name else list(EXPERIMENTS)
    width = max(len(r) for r in rows)
    for r in rows:
        print(f"{r:<{width}}  {EXPERIMENTS[r]:<22}  {SUMMARIES[r]}", file=stream)
    return EXIT_OK


def execute(command, config, flags, out_flag=None, threads=1, assert_flag=False, seed=None):
    """Run one experiment; returns the exit code."""
    full = resolve(command, config, flags)
    if seed is not None:
        full["seed"] = seed
    out = Artifacts(output_dir(out_flag, config), command)
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    t0 = time.perf_counter()
    params = full["params"]
    with threadpool_limits(threads), scipy.fft.set_workers(threads):
        result, check = RUNNERS[command](params, out, full["seed"], threads)
    payload = {"command": command, "params": params, "seed": full["seed"],
               "result": result, "check": check}
    payload = _jsonable(payload)
    validate(payload, load_schema(command, "output"))
    out.write_json(f"{command}.json", payload)
    out.write_manifest(full, started, time.perf_counter() - t0)
    enforce = assert_flag or (command == "bs-sweep" and params.get("assert") is not None)
    if enforce and check is not None and not check["passed"]:
        print(f"assertion failed: expected {check['expected']}, observed {check['observed']}",
              file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    if args.command == "list":
        return list_experiments(args.name)
    if args.command == "show":
        from .birman_schwinger import SweepReport
        try:
            data = read_config(args.path)
        except ConfigError as exc:
            print(f"error: {exc.message}", file=sys.stderr)
            return EXIT_USAGE
        data = data.get("result", data)
        if "sweep" in data:
            data = data["sweep"]
        try:
            print(SweepReport.from_json(data).verdict_table())
        except (KeyError, TypeError) as exc:
            print(f"error: not a sweep report ({exc})", file=sys.stderr)
            return EXIT_USAGE
        return EXIT_OK
    try:
        if args.command == "run":
            config = read_config(args.config)
            command = config.get("command")
            if command not in RUNNERS:
                raise ConfigError("command", f"expected one of {sorted(RUNNERS)}, got {command!r}")
            flags = {}
            assert_flag = False
        else:
            command = args.command
            config = read_config(args.config) if args.config else {}
            if config.get("command", command) != command:
                raise ConfigError("command", f"config is for {config['command']!r}")
            flags = {k: getattr(args, k) for k in DEFAULTS[command] if k != "assert"}
            assert_flag = bool(args.assert_) if command != "bs-sweep" else False
            if command == "bs-sweep":
                flags["assert"] = args.assert_
        return execute(command, config, flags, args.out, args.threads, assert_flag, args.seed)
    except ConfigError as exc:
        print(f"config error at {exc.path}: {exc.message}", file=sys.stderr)
        return EXIT_USAGE
