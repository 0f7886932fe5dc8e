"""Command-line front end: `euler-shell <subcommand> [options]`.

Every subcommand takes its parameters from flags, from a flat `key = value`
config file (`--config FILE`), or both (flags win).  Harmonic perturbations
are repeated `perturb.<field> = n,m,amplitude` lines or `--perturb
field=n,m,amplitude` flags.  Exit codes: 0 success, 2 invalid input or
violated precondition, 3 no convergence.
"""

import argparse
import json
import os
import sys
from pathlib import Path

THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

EXIT_OK, EXIT_INVALID, EXIT_NOCONV = 0, 2, 3


class ConfigError(ValueError):
    pass


# key -> (type, default); None default means required
SCHEMAS = {
    "background": {
        "gamma": (float, 1.4), "M0": (float, None), "r0": (float, 1.0), "r1": (float, 1.2),
        "p0": (float, 1.0), "rho0": (float, 1.0), "n": (int, 201),
        "kind": (str, "subsonic"), "field_L": (int, 0), "field_nr": (int, 64),
    },
    "transonic-background": {
        "gamma": (float, 1.4), "r_b": (float, None), "p_s": (float, 1.0),
        "rho_s": (float, 1.0), "M_s": (float, None), "r0": (float, 1.0), "r1": (float, 1.2),
        "n": (int, 201),
    },
    "coeffs": {"gamma": (float, None), "t": (float, None)},
    "scondition": {
        "gamma": (float, 1.4), "rb_grid": (str, None), "n_max": (int, 64),
        "p_s": (float, 1.0), "rho_s": (float, 1.0), "M_s": (float, 0.6),
        "r0": (float, 1.0), "r1": (float, 1.2), "threshold": (float, 1e-8),
    },
    "subsonic": {
        "gamma": (float, 1.4), "M0": (float, None), "r0": (float, 1.0), "r1": (float, 1.05),
        "p0": (float, 1.0), "rho0": (float, 1.0), "L_max": (int, 8), "N_r": (int, 128),
        "tol": (float, 1e-10), "max_iter": (int, 100),
    },
    "transonic": {
        "gamma": (float, 1.4), "r0": (float, 1.0), "r1": (float, 1.2), "r_b": (float, None),
        "p_s": (float, 1.0), "rho_s": (float, 1.0), "M_s": (float, None),
        "L_max": (int, 8), "N_r": (int, 128), "tol": (float, 1e-10), "max_iter": (int, 100),
        "theta": (float, 1.0), "theta_min": (float, 0.25),
    },
    "residuals": {},
}

PERTURB_FIELDS = {
    "subsonic": ("p0", "E1", "s1", "u1", "u1curl"),
    # p1 is the exit pressure; the rest perturb the inflow at r0
    "transonic": ("p1", "p", "rho", "u0", "V"),
}


def fmt(v):
    return f"{float(v):.17g}"


def _convert(kind, key, raw, where):
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{where}: cannot read {key!r} value {raw!r} as {kind.__name__}")


def _perturb_item(raw, where):
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != 3:
        raise ConfigError(f"{where}: perturbation needs n,m,amplitude, got {raw!r}")
    try:
        n, m, amp = int(parts[0]), int(parts[1]), float(parts[2])
    except ValueError:
        raise ConfigError(f"{where}: malformed perturbation {raw!r}")
    return [n, m, amp]


def parse_config(text, sub, source="config"):
    """Parse `key = value` lines; returns (params, perturb)."""
    schema = SCHEMAS[sub]
    fields = PERTURB_FIELDS.get(sub, ())
    params, perturb = {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key.startswith("perturb."):
            fld = key[len("perturb."):]
            if fld not in fields:
                raise ConfigError(f"{where}: unknown perturbation field {fld!r}")
            perturb.setdefault(fld, []).append(_perturb_item(raw, where))
        elif key in schema:
            if key in params:
                raise ConfigError(f"{where}: duplicate key {key!r}")
            params[key] = _convert(schema[key][0], key, raw, where)
        else:
            raise ConfigError(f"{where}: unknown key {key!r}")
    return params, perturb


def config_text(echo):
    """Inverse of parse_config for a parameter echo."""
    lines = []
    for k, v in echo["params"].items():
        lines.append(f"{k} = {fmt(v) if isinstance(v, float) else v}")
    for fld, items in echo.get("perturb", {}).items():
        for n, m, a in items:
            lines.append(f"perturb.{fld} = {n},{m},{fmt(a)}")
    return "\n".join(lines) + "\n"


def resolve(sub, args):
    schema = SCHEMAS[sub]
    params, perturb = {}, {}
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}")
        params, perturb = parse_config(text, sub, str(path))
    for key, (kind, _) in schema.items():
        v = getattr(args, key, None)
        if v is not None:
            params[key] = v
    for raw in getattr(args, "perturb", None) or []:
        if "=" not in raw:
            raise ConfigError(f"--perturb: expected field=n,m,amplitude, got {raw!r}")
        fld, item = raw.split("=", 1)
        if fld not in PERTURB_FIELDS.get(sub, ()):
            raise ConfigError(f"--perturb: unknown perturbation field {fld!r}")
        perturb.setdefault(fld, []).append(_perturb_item(item, "--perturb"))
    for key, (kind, default) in schema.items():
        if key not in params:
            if default is None:
                raise ConfigError(f"missing required parameter {key!r}")
            params[key] = default
    return {k: params[k] for k in schema}, perturb


def _validate_gas(p):
    if "gamma" in p and not p["gamma"] > 1:
        raise ConfigError("gamma must exceed 1")
    if "r0" in p and "r1" in p and not 0 < p["r0"] < p["r1"]:
        raise ConfigError("need 0 < r0 < r1")
    for k in ("L_max", "N_r"):
        if k in p and p[k] < 1:
            raise ConfigError(f"{k} must be positive")


def write_echo(out, name, sub, params, perturb, extra=None):
    echo = {"subcommand": sub, "params": params, "perturb": perturb}
    if extra:
        echo.update(extra)
    with open(out / name, "w") as fh:
        json.dump(echo, fh, indent=2, default=float)
        fh.write("\n")
    return echo


def write_table(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_background(p, perturb, out):
    import numpy as np
    from .background import subsonic_from_mach, supersonic_from_mach

    _validate_gas(p)
    if p["kind"] == "subsonic":
        prof = subsonic_from_mach(p["gamma"], p["M0"], p["r0"], p["r1"], p["p0"], p["rho0"])
    elif p["kind"] == "supersonic":
        prof = supersonic_from_mach(p["gamma"], p["M0"], p["r0"], p["r1"], p["p0"], p["rho0"])
    else:
        raise ConfigError("kind must be subsonic or supersonic")
    r = np.linspace(p["r0"], p["r1"], max(p["n"], 2))
    write_table(out / "background.csv", ["r", "u", "p", "rho", "M", "E", "A"], prof.table(r))
    extra = {}
    if p["field_L"] > 0:
        from .gas_core import ShellField, ShellGrid

        grid = ShellGrid(p["r0"], p["r1"], p["field_nr"], p["field_L"])
        x = np.broadcast_to(grid.r[:, None], grid.shape)
        u, pp, rho = prof.state(x)
        field = ShellField(grid, u, np.zeros(grid.shape + (3,)), pp, rho, p["gamma"])
        field.to_csv(out / "background_field.csv")
        extra["field"] = "background_field.csv"
    write_echo(out, "background.json", "background", p, perturb, extra)
    return EXIT_OK


def cmd_transonic_background(p, perturb, out):
    import numpy as np
    from .background import solve_transonic_background

    _validate_gas(p)
    tb = solve_transonic_background(p["gamma"], p["r_b"], p["p_s"], p["rho_s"], p["M_s"],
                                    p["r0"], p["r1"])
    hdr = ["r", "u", "p", "rho", "M", "E", "A"]
    write_table(out / "supersonic.csv", hdr, tb.supersonic.table(np.linspace(p["r0"], p["r_b"], p["n"])))
    write_table(out / "subsonic.csv", hdr, tb.subsonic.table(np.linspace(p["r_b"], p["r1"], p["n"])))
    extra = {"h_sharp": tb.h_sharp, "rh_residual": tb.rh_residual(),
             "pressure_jump": tb.pressure_jump()}
    write_echo(out, "transonic_background.json", "transonic-background", p, perturb, extra)
    return EXIT_OK


def cmd_coeffs(p, perturb, out):
    import numpy as np
    from .coeffs import linearization_coeffs, stability_poly

    if not p["gamma"] > 1:
        raise ConfigError("gamma must exceed 1")
    g, t = p["gamma"], p["t"]
    sp = float(stability_poly(g, t))
    if t == 1.0:
        # pole of the coefficients; the numerator row is still meaningful
        b = e = d1 = d2 = float("nan")
    else:
        b, e, d1, d2 = (float(v) for v in linearization_coeffs(g, t))
    header = ["gamma", "t", "b", "e", "d1", "d2", "stability_poly"]
    row = [g, t, b, e, d1, d2, sp]
    print(",".join(header))
    print(",".join(fmt(v) for v in row))
    write_table(out / "coeffs.csv", header, [row])
    write_echo(out, "coeffs.json", "coeffs", p, perturb,
               {"row": dict(zip(header, (v if np.isfinite(v) else None for v in row)))})
    return EXIT_OK


def _rb_grid(spec):
    import numpy as np

    if ":" in spec:
        a, b, n = spec.split(":")
        return np.linspace(float(a), float(b), int(n))
    return np.array([float(v) for v in spec.split(",") if v.strip()])


def cmd_scondition(p, perturb, out):
    from .background import solve_transonic_background
    from .spectral_elliptic import check_s_condition

    _validate_gas(p)
    try:
        grid = _rb_grid(p["rb_grid"])
    except ValueError:
        raise ConfigError("rb_grid must be 'a:b:n' or a comma list")
    if grid.size == 0:
        raise ConfigError("rb_grid is empty")
    rows, reports = [], []
    for rb in grid:
        tb = solve_transonic_background(p["gamma"], rb, p["p_s"], p["rho_s"], p["M_s"],
                                        p["r0"], p["r1"])
        rep = check_s_condition(tb, p["n_max"], p["threshold"])
        rows += [(rb, n, th) for n, th in enumerate(rep.thetas)]
        reports.append(rep.as_dict())
    with open(out / "scondition.csv", "w") as fh:
        fh.write("rb,n,theta\n")
        for rb, n, th in rows:
            fh.write(f"{fmt(rb)},{n},{fmt(th)}\n")
    verdict = "holds" if all(r["verdict"] == "holds" for r in reports) else "violated"
    write_echo(out, "scondition.json", "scondition", p, perturb,
               {"verdict": verdict, "reports": reports})
    print(json.dumps({"verdict": verdict, "points": len(reports)}))
    return EXIT_OK


def cmd_subsonic(p, perturb, out):
    from .subsonic_stability import (IterationOptions, SubsonicBCs, SubsonicProblem,
                                     iterate_subsonic)

    _validate_gas(p)
    prob = SubsonicProblem.from_mach(p["gamma"], p["M0"], p["r0"], p["r1"], p["L_max"],
                                     p["N_r"], p["p0"], p["rho0"])
    bcs = SubsonicBCs.from_perturbations(prob, perturb)
    field, rep, _ = iterate_subsonic(bcs, prob, IterationOptions(p["tol"], p["max_iter"]))
    field.to_csv(out / "field.csv")
    rep.to_json(out / "report.json")
    write_echo(out, "subsonic.json", "subsonic", p, perturb)
    print(json.dumps({"converged": rep.converged, "iterations": rep.iterations,
                      "contraction_ratio": rep.contraction_ratio}))
    return EXIT_OK if rep.converged else EXIT_NOCONV


def cmd_transonic(p, perturb, out):
    from .sphere import write_coeffs_csv
    from .transonic_stability import (TransonicOptions, TransonicProblem, iterate_transonic,
                                      solve_supersonic)

    _validate_gas(p)
    prob = TransonicProblem.from_parameters(p["gamma"], p["r_b"], p["p_s"], p["rho_s"],
                                            p["M_s"], p["r0"], p["r1"], L_max=p["L_max"],
                                            N_r=p["N_r"])
    inflow_pert = {k: v for k, v in perturb.items() if k != "p1"}
    inflow = solve_supersonic(prob.tb, p["L_max"], p["N_r"], inflow_pert)
    p1 = prob.back_pressure(perturb.get("p1", []))
    opts = TransonicOptions(p["tol"], p["max_iter"], p["theta"], p["theta_min"])
    sol = iterate_transonic(inflow, p1, prob, opts)
    s = prob.sphere
    write_table(out / "front.csv", ["theta", "phi", "psi"],
                zip(s.theta, s.phi, sol.front.psi))
    write_coeffs_csv(out / "front_coeffs.csv", sol.front.coeffs, s.L)
    sol.field.to_csv(out / "field.csv")
    sol.report.to_json(out / "report.json")
    write_echo(out, "transonic.json", "transonic", p, perturb)
    rep = sol.report
    print(json.dumps({"converged": rep.converged, "iterations": rep.iterations,
                      "r_p": sol.front.r_p, "contraction_ratio": rep.contraction_ratio}))
    return EXIT_OK if rep.converged else EXIT_NOCONV


def cmd_residuals(args, out):
    from .gas_core import ShellField, euler_residual

    results = {}
    for path in args.files:
        if not Path(path).is_file() or Path(path).stat().st_size == 0:
            raise ConfigError(f"{path}: missing or empty field file")
        if not Path(str(path) + ".json").is_file():
            raise ConfigError(f"{path}: metadata sidecar {path}.json not found")
        try:
            field = ShellField.from_csv(path)
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}")
        results[str(path)] = euler_residual(field)["norms"]
    with open(out / "residuals.json", "w") as fh:
        json.dump(results, fh, indent=2)
        fh.write("\n")
    print(json.dumps(results))
    return EXIT_OK


COMMANDS = {
    "background": cmd_background,
    "transonic-background": cmd_transonic_background,
    "coeffs": cmd_coeffs,
    "scondition": cmd_scondition,
    "subsonic": cmd_subsonic,
    "transonic": cmd_transonic,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="euler-shell", description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="euler_shell_out", help="output directory")
    ap.add_argument("--threads", type=int, default=None, help="thread count for numerics")
    ap.add_argument("--seed", type=int, default=0, help="seed recorded with the outputs")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, schema in SCHEMAS.items():
        sp = sub.add_parser(name)
        if name == "residuals":
            sp.add_argument("files", nargs="+")
            continue
        sp.add_argument("--config")
        for key, (kind, _) in schema.items():
            flags = {f"--{key}", f"--{key.replace('_', '-')}"}
            sp.add_argument(*sorted(flags), dest=key, type=kind, default=None)
        if name in PERTURB_FIELDS:
            sp.add_argument("--perturb", action="append")
    return ap


def set_threads(n):
    if n is not None:
        for var in THREAD_VARS:
            os.environ[var] = str(n)


def run(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    env = os.environ.get("EULER_SHELL_THREADS")
    threads = int(env) if env and env.isdigit() else args.threads
    set_threads(threads)
    out = Path(args.out)
    from .gas_core import ConfigurationError, DomainError
    from .sphere import SolvabilityError

    try:
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "residuals":
            return cmd_residuals(args, out)
        params, perturb = resolve(args.command, args)
        return COMMANDS[args.command](params, perturb, out)
    except (ConfigError, ConfigurationError, DomainError, SolvabilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
