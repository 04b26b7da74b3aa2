"""Command-line front end.

Subcommands: run, bound, sweep, dilution-check, selftest-bound. Parameters
come from a TOML config file (sections [game], [device], [protocol],
[schedule], [sweep], [dilution], [selftest]), overridden by ``--set
section.key=value`` and the common flags. Every output embeds the resolved
config and the package version.

Exit codes: 0 success, 2 protocol abort (``run`` only), 1 usage or config error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .devices import DeviceModel, apply_white_noise, classical_device, reference_device, visibility_for_deficit
from .dilution import dilution_spec, entropy_gap, exact_dilution_distance, typical_set
from .eat import certificate
from .errors import DomainError
from .game import GameSpec, game_from_beta, game_from_theta
from .protocol import STORE_LIMIT, ProtocolParams, run_protocol
from .scaling import SWEEP_COLUMNS, ExponentSchedule, decay_exponents, sweep, validate_schedule
from .selftest import LOOSE_CONSTANT, TIGHT_CONSTANT, max_long_factor, selftest_bound

THREADS_ENV = "TILTEDRNG_THREADS"

DEFAULTS: dict = {
    "seed": 0,
    "game": {"beta": 0.0, "theta": None},
    "device": {"kind": "reference", "zeta": 0.0, "visibility": 1.0, "file": ""},
    "protocol": {"n": 100_000, "gamma": 0.1, "xi": 0.05, "eps_s": 1e-6, "eps_prime": 1e-6},
    "schedule": {"lambda_theta": 0.8, "lambda_xi": 0.45, "lambda_gamma": 0.04, "lambda_c": 0.4},
    "sweep": {"log10_n": list(range(10, 301, 10)), "diluted": True, "lambda_zeta": 0.0},
    "dilution": {
        "theta": [math.pi / 16, math.pi / 8, 3 * math.pi / 16, math.pi / 4.01],
        "n": [10, 100, 1000, 10_000],
        "delta_over_gap": [0.01, 0.05, 0.1, 0.3],
    },
    "selftest": {
        "points": 10_000,
        "theta": [k * math.pi / 64 for k in range(1, 17)],
        "epsilon": [1e-8, 1e-6, 1e-4],
    },
}

# keys that may be left unset in a config
_NULLABLE = {("game", "theta"), ("game", "beta")}


class UsageError(Exception):
    """Bad command line or config; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- config


def _key_line(text: str, section: str | None, key: str) -> int | None:
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        m = re.match(r"\[\s*([A-Za-z0-9_\-]+)\s*\]", stripped)
        if m:
            current = m.group(1)
            if section is not None and key is None and current == section:
                return i
            continue
        if current == section and re.match(rf"{re.escape(key)}\s*=", stripped):
            return i
    return None


def _where(text: str, path: str, section: str | None, key: str | None) -> str:
    line = _key_line(text, section, key) if text else None
    return f"{path}:{line}" if line else path


def _check_type(default, value) -> bool:
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, str):
        return isinstance(value, str)
    if isinstance(default, list):
        return isinstance(value, list) and all(_check_type(default[0], v) or isinstance(v, (int, float)) for v in value)
    return True


def _merge(cfg: dict, data: dict, text: str, path: str) -> None:
    for top, value in data.items():
        if top not in DEFAULTS:
            raise UsageError(f"{_where(text, path, None, top)}: unknown key {top!r}")
        if not isinstance(DEFAULTS[top], dict):
            if not _check_type(DEFAULTS[top], value):
                raise UsageError(f"{_where(text, path, None, top)}: {top} has the wrong type")
            cfg[top] = value
            continue
        if not isinstance(value, dict):
            raise UsageError(f"{_where(text, path, None, top)}: {top} must be a table")
        for key, v in value.items():
            where = _where(text, path, top, key)
            if key not in DEFAULTS[top]:
                raise UsageError(f"{where}: unknown key {top}.{key}")
            default = DEFAULTS[top][key]
            if default is None or (top, key) in _NULLABLE:
                if not isinstance(v, (int, float)) or isinstance(v, bool):
                    raise UsageError(f"{where}: {top}.{key} must be a number")
            elif not _check_type(default, v):
                raise UsageError(f"{where}: {top}.{key} must be of type {type(default).__name__}")
            cfg[top][key] = v


def load_config(path: str | None, overrides: list[str]) -> dict:
    """Defaults, then the TOML file, then ``section.key=value`` overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise UsageError(f"cannot read config {path}: {e.strerror}") from None
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as e:
            raise UsageError(f"{path}: {e}") from None
        if "game" in data and "theta" in data["game"] and "beta" not in data["game"]:
            cfg["game"]["beta"] = None
        _merge(cfg, data, text, path)
    for item in overrides:
        name, sep, raw = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects section.key=value, got {item!r}")
        try:
            value = tomllib.loads(f"v = {raw}")["v"]
        except tomllib.TOMLDecodeError:
            value = raw
        section, dot, key = name.strip().partition(".")
        _merge(cfg, {section: {key: value}} if dot else {section: value}, "", f"--set {item}")
        if dot and section == "game":
            cfg["game"]["beta" if key == "theta" else "theta"] = None
    return cfg


def _game(cfg: dict) -> GameSpec:
    beta, theta = cfg["game"]["beta"], cfg["game"]["theta"]
    if beta is not None and theta is not None:
        raise UsageError("set only one of game.beta and game.theta")
    if theta is not None:
        return game_from_theta(float(theta))
    return game_from_beta(float(beta if beta is not None else 0.0))


def _device(cfg: dict, spec: GameSpec) -> DeviceModel:
    d = cfg["device"]
    if d["kind"] == "reference":
        dev = reference_device(spec.theta)
    elif d["kind"] == "classical":
        dev = classical_device()
    elif d["kind"] == "file":
        try:
            dev = DeviceModel.from_json(Path(d["file"]).read_text())
        except OSError as e:
            raise UsageError(f"cannot read device file {d['file']!r}: {e.strerror}") from None
    else:
        raise UsageError(f"device.kind must be reference, classical or file, got {d['kind']!r}")
    if d["visibility"] != 1.0:
        dev = apply_white_noise(dev, float(d["visibility"]))
    if d["zeta"] > 0.0:
        dev = apply_white_noise(dev, visibility_for_deficit(dev, spec, float(d["zeta"])))
    return dev


def _params(cfg: dict) -> ProtocolParams:
    p = cfg["protocol"]
    return ProtocolParams(
        n=int(p["n"]), gamma=float(p["gamma"]), xi=float(p["xi"]),
        eps_s=float(p["eps_s"]), eps_prime=float(p["eps_prime"]), seed=int(cfg["seed"]),
    )


def _schedule(cfg: dict) -> ExponentSchedule:
    s = ExponentSchedule(**{k: float(v) for k, v in cfg["schedule"].items()})
    problems = validate_schedule(s)
    if problems:
        raise UsageError("invalid schedule: " + "; ".join(problems))
    return s


# ---------------------------------------------------------------- output


def fmt(value) -> str:
    """CSV cell: 17 significant digits for reals, lower-case booleans."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, (list, tuple)):
        return ";".join(str(v) for v in value)
    return str(value)


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _json_doc(command: str, cfg: dict, body: dict) -> str:
    doc = {"command": command, "config": cfg, "version": __version__, **body}
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def _csv_doc(command: str, cfg: dict, notes: list[str], header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    buf.write(f"# tiltedrng {__version__} {command}\n")
    buf.write("# config " + json.dumps(_jsonable(cfg), sort_keys=True, separators=(",", ":")) + "\n")
    for note in notes:
        buf.write(f"# {note}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- commands


def cmd_run(cfg: dict, fmt_: str, out: str | None, threads: int) -> int:
    spec = _game(cfg)
    params = _params(cfg)
    params.check_game(spec)
    dev = _device(cfg, spec)
    store = fmt_ == "csv"
    if store and params.n > STORE_LIMIT:
        raise UsageError(f"per-round CSV is limited to n <= {STORE_LIMIT}; use --format json")
    tr = run_protocol(dev, spec, params, threads=threads, store_rounds=store)
    cert = certificate(spec, params)
    if fmt_ == "json":
        text = _json_doc("run", cfg, {"certificate": cert.to_dict(), "transcript": tr.summary(params)})
    else:
        summary = json.dumps(_jsonable(tr.summary()), sort_keys=True, separators=(",", ":"))
        notes = [f"summary {summary}", f"hmin_bound {fmt(cert.hmin_bound)} tau {fmt(cert.tau)}"]
        body = tr.to_csv().splitlines()
        text = _csv_doc("run", cfg, notes, body[0].split(","), [])
        text += "".join(line + "\n" for line in body[1:])
    _emit(text, out)
    return 0 if tr.success else 2


def cmd_bound(cfg: dict, fmt_: str, out: str | None, threads: int) -> int:
    spec = _game(cfg)
    params = _params(cfg)
    cert = certificate(spec, params).to_dict()
    cert.update(beta=spec.beta, theta=spec.theta, omega_q=spec.omega_q, omega_c=spec.omega_c, kappa=spec.kappa)
    if fmt_ == "json":
        text = _json_doc("bound", cfg, {"certificate": cert})
    else:
        text = _csv_doc("bound", cfg, [], ["quantity", "value"], sorted(cert.items()))
    _emit(text, out)
    return 0


def cmd_sweep(cfg: dict, fmt_: str, out: str | None, threads: int) -> int:
    s = _schedule(cfg)
    sw = cfg["sweep"]
    if any(int(e) != e or e < 1 for e in sw["log10_n"]):
        raise UsageError("sweep.log10_n must be positive integers")
    grid = [10 ** int(e) for e in sw["log10_n"]]
    lz = float(sw["lambda_zeta"]) or None
    rows = sweep(s, grid, bool(sw["diluted"]), eps_s=cfg["protocol"]["eps_s"],
                 eps_prime=cfg["protocol"]["eps_prime"], threads=threads, lambda_zeta=lz)
    exps = decay_exponents(s)
    notes = [f"k {fmt(s.k)} k_prime {fmt(s.k_prime)}"]
    notes += [f"exponent {name} {fmt(v)}" for name, v in exps.items()]
    if fmt_ == "json":
        body = {
            "k": s.k, "k_prime": s.k_prime, "exponents": exps,
            "rows": [dict(zip(SWEEP_COLUMNS, r.as_tuple())) for r in rows],
        }
        text = _json_doc("sweep", cfg, body)
    else:
        text = _csv_doc("sweep", cfg, notes, list(SWEEP_COLUMNS), [list(r.as_tuple()) for r in rows])
    _emit(text, out)
    return 0


DILUTION_COLUMNS = ("theta", "n", "delta", "S", "Delta", "eps_pi", "exact_atypical", "eps_prep", "exact_distance", "m")


def _dilution_row(theta: float, n: int, ratio: float) -> list:
    delta = ratio * entropy_gap(theta)
    d = dilution_spec(theta, n, delta)
    return [theta, n, delta, d.S, d.Delta, d.eps_pi, typical_set(theta, n, delta).atypical,
            d.eps_prep, exact_dilution_distance(theta, n, delta), d.m]


def cmd_dilution_check(cfg: dict, fmt_: str, out: str | None, threads: int) -> int:
    dc = cfg["dilution"]
    points = sorted((float(t), int(n), float(r)) for t in dc["theta"] for n in dc["n"] for r in dc["delta_over_gap"])
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda p: _dilution_row(*p), points))
    else:
        rows = [_dilution_row(*p) for p in points]
    ok = all(r[6] <= r[5] and r[8] <= r[7] for r in rows)
    notes = [f"dominance {'holds' if ok else 'VIOLATED'}: exact_atypical <= eps_pi and exact_distance <= eps_prep"]
    if fmt_ == "json":
        text = _json_doc("dilution-check", cfg, {"dominance": ok, "rows": [dict(zip(DILUTION_COLUMNS, r)) for r in rows]})
    else:
        text = _csv_doc("dilution-check", cfg, notes, list(DILUTION_COLUMNS), rows)
    _emit(text, out)
    return 0


SELFTEST_COLUMNS = ("theta", "epsilon", "long_bound", "simplified_bound", "pguess_bound", "hmin_bound")


def cmd_selftest_bound(cfg: dict, fmt_: str, out: str | None, threads: int) -> int:
    st = cfg["selftest"]
    theta_star, peak = max_long_factor(int(st["points"]))
    rows = []
    for t, e in sorted((float(t), float(e)) for t in st["theta"] for e in st["epsilon"]):
        b = selftest_bound(t, e)
        rows.append([b.theta, b.epsilon, b.long_bound, b.simplified_bound, b.pguess_bound, b.hmin_bound])
    summary = (f"max over theta of s^4 (2 delta_bar + delta_a) / sqrt(eps) = {peak:.2f} "
               f"({fmt(peak)} at theta {fmt(theta_star)}); loose constant 8 + 61 sqrt 2 = {LOOSE_CONSTANT:.2f}")
    if fmt_ == "json":
        body = {"max_factor": peak, "theta_star": theta_star, "tight_constant": TIGHT_CONSTANT,
                "loose_constant": LOOSE_CONSTANT, "rows": [dict(zip(SELFTEST_COLUMNS, r)) for r in rows]}
        text = _json_doc("selftest-bound", cfg, body)
    else:
        text = _csv_doc("selftest-bound", cfg, [summary], list(SELFTEST_COLUMNS), rows)
    _emit(text, out)
    return 0


COMMANDS = {
    "run": cmd_run,
    "bound": cmd_bound,
    "sweep": cmd_sweep,
    "dilution-check": cmd_dilution_check,
    "selftest-bound": cmd_selftest_bound,
}


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        v = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if v < 1:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    common.add_argument("--seed", type=int, help="64-bit master seed")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--threads", type=int, help=f"worker threads (default: ${THREADS_ENV} or 1)")

    parser = _Parser(prog="tiltedrng", description="Tilted-CHSH randomness generation toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "run": "simulate one protocol run and certify its min-entropy",
        "bound": "min-entropy certificate for the configured parameters",
        "sweep": "evaluate an exponent schedule over a grid of n",
        "dilution-check": "exact dilution errors against their bounds",
        "selftest-bound": "self-testing bounds table and the optimised constant",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        if args.seed is not None:
            if not 0 <= args.seed < 1 << 64:
                raise UsageError("--seed must be a 64-bit unsigned integer")
            cfg["seed"] = args.seed
        threads = args.threads if args.threads is not None else _default_threads()
        if threads < 1:
            raise UsageError("--threads must be positive")
        return COMMANDS[args.command](cfg, args.format, args.out, threads)
    except (UsageError, DomainError, ValueError) as e:
        print(f"tiltedrng {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
