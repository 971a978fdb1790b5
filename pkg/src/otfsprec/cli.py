"""Command-line front end.

Exit codes: 0 ok, 1 runtime failure, 2 usage error, 3 capacity or
unsupported grid size, 4 non-exhaustive scan under ``--require-exhaustive``.

Configuration precedence is flags, then ``--config`` (flat ``key=value``
text), then built-in defaults. ``OTFS_SEED`` in the environment overrides
``--seed``.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis as ana
from . import channel as chn
from . import montecarlo as mc
from .detector import DEFAULT_ML_BUDGET, check_ml_feasible
from .errors import CapacityError, OtfsError, UnsupportedDimensionError
from .modem import OtfsDims, get_alphabet
from .precoder import SUPPORTED_CLASSES, make_precoder, vandermonde_theta

log = logging.getLogger("otfsprec")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_CAPACITY, EXIT_NOT_EXHAUSTIVE = 0, 1, 2, 3, 4

DEFAULTS = {
    "alphabet": "qpsk",
    "precoder": "proposed",
    "detector": "ml",
    "frames": 10**6,
    "target_errors": 500,
    "seed": 0,
    "delta_f": chn.DEFAULT_DELTA_F,
    "carrier": chn.DEFAULT_CARRIER,
    "ml_budget": DEFAULT_ML_BUDGET,
    "pair_budget": ana.DEFAULT_PAIR_BUDGET,
    "format": "csv",
    "workers": 1,
}

_INT_KEYS = {"M", "N", "frames", "target_errors", "seed", "ml_budget", "pair_budget", "workers", "cp_len"}
_FLOAT_KEYS = {"delta_f", "carrier"}


class UsageError(Exception):
    def __init__(self, flag: str, msg: str):
        super().__init__(f"{flag}: {msg}")
        self.flag = flag


# --------------------------------------------------------------------- parsing

def parse_snr(text: str) -> tuple[float, ...]:
    """``lo:step:hi`` (inclusive), a comma list, or a single value."""
    text = str(text).strip()
    try:
        if ":" in text:
            lo, step, hi = (float(t) for t in text.split(":"))
            if step <= 0 or hi < lo:
                raise ValueError
            n = int(math.floor((hi - lo) / step + 1e-9)) + 1
            return tuple(round(lo + i * step, 10) + 0.0 for i in range(n))
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise UsageError("--snr", f"expected lo:step:hi or a comma list, got {text!r}") from None


def parse_scenario(text: str, carrier: float) -> tuple[str, float]:
    """Return ``(kind, value)`` with kind ``L``, ``Q`` or ``fmax`` (velocity becomes Hz here)."""
    text = str(text).strip()
    fam, _, rest = text.partition(":")
    key, _, val = rest.partition("=")
    try:
        if fam == "fir" and key == "L":
            return "L", int(val)
        if fam == "bem" and key == "Q":
            return "Q", int(val)
        if fam == "bem" and key == "fmax":
            return "fmax", float(val)
        if fam == "bem" and key == "v":
            return "fmax", chn.doppler_from_velocity(float(val), carrier)
    except ValueError:
        pass
    raise UsageError("--scenario", f"expected fir:L=<n>, bem:v=<kmh>, bem:fmax=<Hz> or bem:Q=<n>, got {text!r}")


def resolve_scenario(spec: tuple[str, float], dims: OtfsDims, delta_f: float):
    kind, val = spec
    if kind == "L":
        if not 1 <= val <= dims.MN:
            raise UsageError("--scenario", f"L must be in 1..MN={dims.MN}, got {val}")
        return chn.FreqSelective(int(val))
    if kind == "Q":
        if val < 0:
            raise UsageError("--scenario", f"Q must be >= 0, got {val}")
        return chn.TimeSelective(int(val))
    if val < 0:
        raise UsageError("--scenario", "Doppler must be non-negative")
    return chn.TimeSelective(chn.bem_order(dims, val, delta_f), float(val))


def parse_precoder(text: str) -> tuple[str, float | None]:
    name, _, arg = str(text).partition(":")
    if name in ("proposed", "identity") and not arg:
        return name, None
    if name == "phase":
        if not arg:
            return name, None
        try:
            return name, float(arg)
        except ValueError:
            pass
    raise UsageError("--precoder", f"expected proposed, identity or phase[:<theta>], got {text!r}")


def read_config(path: str) -> dict:
    """Flat ``key=value`` lines; ``#`` starts a comment, dashes in keys become underscores."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError("--config", str(exc)) from None
    for no, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise UsageError("--config", f"line {no}: expected key=value")
        out[key.strip().replace("-", "_")] = val.strip()
    return out


def _merged(args: argparse.Namespace, keys) -> dict:
    """Apply flags > config file > defaults over ``keys``."""
    conf = read_config(args.config) if getattr(args, "config", None) else {}
    unknown = set(conf) - set(keys)
    if unknown:
        raise UsageError("--config", f"unknown key(s): {', '.join(sorted(unknown))}")
    out = {}
    for k in keys:
        v = getattr(args, k, None)
        if v is None:
            v = conf.get(k, DEFAULTS.get(k))
        if v is not None:
            try:
                if k in _INT_KEYS:
                    v = int(v)
                elif k in _FLOAT_KEYS:
                    v = float(v)
            except ValueError:
                raise UsageError("--" + k.replace("_", "-"), f"invalid value {v!r}") from None
        out[k] = v
    seed_env = os.environ.get("OTFS_SEED")
    out["seed_source"] = "default"
    if "seed" in keys:
        if seed_env is not None:
            try:
                out["seed"] = int(seed_env)
            except ValueError:
                raise UsageError("OTFS_SEED", f"not an integer: {seed_env!r}") from None
            out["seed_source"] = "env:OTFS_SEED"
        elif getattr(args, "seed", None) is not None:
            out["seed_source"] = "flag"
        elif "seed" in conf:
            out["seed_source"] = "config"
    return out


def _require(opts: dict, *keys: str) -> None:
    for k in keys:
        if opts.get(k) is None:
            raise UsageError("--" + k.replace("_", "-"), "required option is missing")


def _dims(opts: dict) -> OtfsDims:
    for k in ("M", "N"):
        if opts[k] < 1:
            raise UsageError(f"--{k}", "must be a positive integer")
    return OtfsDims(opts["M"], opts["N"])


def _alphabet(name: str):
    try:
        return get_alphabet(name)
    except (ValueError, KeyError):
        raise UsageError("--alphabet", f"expected bpsk or qpsk, got {name!r}") from None


# --------------------------------------------------------------------- output

def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _manifest_path(out: str) -> Path:
    return Path(out + ".manifest.json")


def _write_manifest(command: str, config: dict, seed: int, seed_source: str, out: str | None,
                    extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "master_seed": seed,
        "seed_source": seed_source,
        "config": config,
    }
    if extra:
        manifest.update(extra)
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    if out:
        _manifest_path(out).write_text(text)
    else:
        sys.stderr.write(text)


def _load_manifest(path: str, command: str) -> dict:
    try:
        m = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError("--manifest", str(exc)) from None
    if m.get("command") != command:
        raise UsageError("--manifest", f"manifest is for {m.get('command')!r}, not {command!r}")
    return m


def _fmt_complex_rows(a: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in np.atleast_2d(a):
        w.writerow([repr(float(p)) for z in row for p in (z.real, z.imag)])
    return buf.getvalue()


# --------------------------------------------------------------------- commands

_BER_KEYS = ["M", "N", "scenario", "precoder", "detector", "alphabet", "snr", "frames", "target_errors",
             "seed", "delta_f", "carrier", "ml_budget", "cp_len", "format", "workers"]


def _ber_config(args) -> tuple[mc.SimConfig, dict]:
    opts = _merged(args, _BER_KEYS)
    _require(opts, "M", "N", "scenario", "snr")
    dims = _dims(opts)
    scen = resolve_scenario(parse_scenario(opts["scenario"], opts["carrier"]), dims, opts["delta_f"])
    prec, theta = parse_precoder(opts["precoder"])
    det = str(opts["detector"]).upper()
    if det not in ("ML", "LMMSE"):
        raise UsageError("--detector", f"expected ml or lmmse, got {opts['detector']!r}")
    _alphabet(opts["alphabet"])
    if opts["format"] not in ("csv", "json"):
        raise UsageError("--format", f"expected csv or json, got {opts['format']!r}")
    for k in ("frames", "target_errors", "ml_budget", "workers"):
        if opts[k] < 1:
            raise UsageError("--" + k.replace("_", "-"), "must be >= 1")
    grid = parse_snr(opts["snr"])
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise UsageError("--snr", "grid must be strictly increasing")
    if opts["cp_len"] is not None and isinstance(scen, chn.FreqSelective) and opts["cp_len"] < scen.L - 1:
        raise UsageError("--cp-len", "must be at least L - 1")
    cfg = mc.SimConfig(
        dims=dims, scenario=scen, snr_grid_db=grid, precoder=prec, theta_step=theta,
        alphabet=opts["alphabet"], detector=det, max_frames=opts["frames"],
        target_bit_errors=opts["target_errors"], master_seed=opts["seed"],
        delta_f=opts["delta_f"], carrier=opts["carrier"], ml_budget=opts["ml_budget"],
        cp_len=opts["cp_len"],
    )
    return cfg, opts


def _summary(records) -> str:
    lines = [f"{'snr_db':>8} {'frames':>10} {'bit_errors':>10} {'ber':>12}"]
    for r in records:
        lines.append(f"{r.snr_db:8.2f} {r.frames:10d} {r.bit_errors:10d} {r.ber:12.4e}")
    return "\n".join(lines) + "\n"


def cmd_ber(args) -> int:
    if args.manifest:
        m = _load_manifest(args.manifest, "ber")
        cfg = mc.SimConfig.from_dict(m["config"])
        fmt = args.format or m.get("format", "csv")
        workers = args.workers or 1
        seed_source = f"replay:{args.manifest}"
        out = args.out
    else:
        cfg, opts = _ber_config(args)
        fmt, workers, seed_source, out = opts["format"], opts["workers"], opts["seed_source"], args.out

    if cfg.detector == "ML":
        check_ml_feasible(cfg.dims.MN, get_alphabet(cfg.alphabet), cfg.ml_budget)
    records = mc.run_ber(cfg, workers=workers)
    text = mc.records_to_csv(records) if fmt == "csv" else mc.records_to_json(records)
    _emit(text, out)
    _write_manifest("ber", cfg.to_dict(), cfg.master_seed, seed_source, out,
                    {"format": fmt, "fingerprint": cfg.fingerprint()})
    (sys.stdout if out else sys.stderr).write(_summary(records))
    return EXIT_OK


_DIV_KEYS = ["M", "N", "scenario", "precoder", "alphabet", "pair_budget", "seed", "delta_f", "carrier"]


def diversity_json(report: ana.DiversityReport, dims: OtfsDims, alphabet: str, kind: str,
                   max_vectors: int = 64) -> dict:
    sc = report.scenario
    scen = {"family": "fir", "L": sc.L} if isinstance(sc, chn.FreqSelective) else {
        "family": "bem", "Q": sc.Q, "f_max": sc.f_max}
    worst = report.worst_pairs[:max_vectors]
    if report.full_diversity:
        verdict = f"full diversity: every examined difference reaches rank {report.max_diversity}"
    else:
        verdict = (f"rank deficient: minimum rank {report.g_d} < {report.max_diversity} "
                   f"for {len(report.worst_pairs)} difference vector(s)")
    return {
        "scenario": scen,
        "dims": {"M": dims.M, "N": dims.N},
        "alphabet": alphabet.upper(),
        "precoder": kind,
        "g_d": report.g_d,
        "g_c": report.g_c,
        "g_c_normalized": report.g_c_normalized,
        "max_diversity": report.max_diversity,
        "full_diversity": report.full_diversity,
        "verdict": verdict,
        "exhaustive": report.exhaustive,
        "pairs_examined": report.pairs_examined,
        "worst_count": int(len(report.worst_pairs)),
        "worst_difference_vectors": [
            {"re": [float(v) for v in e.real], "im": [float(v) for v in e.imag]} for e in worst
        ],
    }


def cmd_diversity(args) -> int:
    if args.manifest:
        c = _load_manifest(args.manifest, "diversity")["config"]
        seed_source = f"replay:{args.manifest}"
    else:
        opts = _merged(args, _DIV_KEYS)
        _require(opts, "M", "N", "scenario")
        dims = _dims(opts)
        scen = resolve_scenario(parse_scenario(opts["scenario"], opts["carrier"]), dims, opts["delta_f"])
        prec, theta = parse_precoder(opts["precoder"])
        _alphabet(opts["alphabet"])
        if opts["pair_budget"] < 1:
            raise UsageError("--pair-budget", "must be >= 1")
        c = {
            "M": dims.M, "N": dims.N, "alphabet": opts["alphabet"].upper(), "precoder": prec,
            "theta_step": theta, "pair_budget": opts["pair_budget"], "seed": opts["seed"],
            "scenario": ({"family": "fir", "L": scen.L} if isinstance(scen, chn.FreqSelective)
                         else {"family": "bem", "Q": scen.Q, "f_max": scen.f_max}),
        }
        seed_source = opts["seed_source"]

    dims = OtfsDims(c["M"], c["N"])
    sc = c["scenario"]
    scen = chn.FreqSelective(sc["L"]) if sc["family"] == "fir" else chn.TimeSelective(sc["Q"], sc.get("f_max"))
    alphabet = get_alphabet(c["alphabet"])
    n_diff = len(alphabet.difference_set()) ** dims.MN - 1
    if args.require_exhaustive and n_diff > c["pair_budget"]:
        print(f"error: {n_diff} nonzero difference vectors exceed --pair-budget {c['pair_budget']}; "
              "an exhaustive scan is not possible", file=sys.stderr)
        return EXIT_NOT_EXHAUSTIVE
    p = make_precoder(c["precoder"], dims, scen.family, c["theta_step"])
    rep = ana.diversity_gain(scen, p.V, dims, alphabet, pair_budget=c["pair_budget"], seed=c["seed"])
    doc = diversity_json(rep, dims, c["alphabet"], p.kind.value)
    _emit(json.dumps(doc, indent=2) + "\n", args.out)
    _write_manifest("diversity", c, c["seed"], seed_source, args.out)
    if args.require_exhaustive and not rep.exhaustive:
        return EXIT_NOT_EXHAUSTIVE
    return EXIT_OK


def cmd_precoder_dump(args) -> int:
    if args.M is None or args.N is None:
        raise UsageError("--M" if args.M is None else "--N", "required option is missing")
    if args.which not in ("theta", "v"):
        raise UsageError("--which", "expected theta or v")
    dims = _dims({"M": args.M, "N": args.N})
    family = (args.scenario or "fir").split(":", 1)[0]
    if family not in ("fir", "bem"):
        raise UsageError("--scenario", f"expected a fir or bem scenario, got {args.scenario!r}")
    if args.which == "theta":
        mat = vandermonde_theta(dims.MN)[0]
    else:
        mat = make_precoder("proposed", dims, family).V
    _emit(_fmt_complex_rows(mat), args.out)
    return EXIT_OK


def cmd_channel_dump(args) -> int:
    opts = _merged(args, ["M", "N", "scenario", "seed", "delta_f", "carrier"])
    _require(opts, "M", "N", "scenario")
    dims = _dims(opts)
    scen = resolve_scenario(parse_scenario(opts["scenario"], opts["carrier"]), dims, opts["delta_f"])
    rng = np.random.default_rng(opts["seed"])
    if isinstance(scen, chn.FreqSelective):
        ch = chn.sample_fir(scen.L, rng)
    else:
        ch = chn.sample_bem_order(dims, scen.Q, rng)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "re", "im"])
    for i, re, im in chn.channel_csv_rows(ch):
        w.writerow([i, repr(re), repr(im)])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_selfcheck(args) -> int:
    from .selfcheck import run_all

    ok = True
    for name, passed, detail in run_all():
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name}" + (f": {detail}" if detail else ""))
    return EXIT_OK if ok else EXIT_RUNTIME


def _series_name(row: dict) -> str:
    return f"{row['precoder']}_{row['detector']}_{row['scenario']}{row['L_or_Q']}_M{row['M']}N{row['N']}"


def cmd_plotdata(args) -> int:
    if not args.inputs:
        raise UsageError("--in", "at least one CSV file is required")
    series: dict[str, dict[float, float]] = {}
    for path in args.inputs:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise UsageError("--in", str(exc)) from None
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames != mc.CSV_FIELDS:
            raise UsageError("--in", f"{path}: columns {reader.fieldnames} do not match {mc.CSV_FIELDS}")
        names = {}
        for row in reader:
            base = _series_name(row)
            name = names.get(base)
            if name is None:
                name = base if base not in series else f"{base}@{Path(path).stem}"
                names[base] = name
            pts = series.setdefault(name, {})
            snr = float(row["snr_db"])
            if snr in pts:
                log.warning("%s: duplicate rows at %g dB in series %s; keeping the last", path, snr, name)
            pts[snr] = float(row["ber"])
    if not series:
        raise UsageError("--in", "no data rows")
    grid = sorted({s for pts in series.values() for s in pts})
    names = list(series)
    lines = ["# BER versus SNR; plot with: set logscale y", "# snr_db " + " ".join(names)]
    for s in grid:
        vals = [repr(series[n][s]) if s in series[n] else "NaN" for n in names]
        lines.append(" ".join([repr(s)] + vals))
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


# --------------------------------------------------------------------- entry

def _add_common(p: argparse.ArgumentParser, *, sim: bool) -> None:
    p.add_argument("--M", type=int, help="delay bins")
    p.add_argument("--N", type=int, help="Doppler bins")
    p.add_argument("--scenario", help="fir:L=<n> | bem:v=<km/h> | bem:fmax=<Hz> | bem:Q=<n>")
    p.add_argument("--precoder", help="proposed | identity | phase[:<theta>]")
    p.add_argument("--alphabet", help="bpsk | qpsk (default qpsk)")
    p.add_argument("--seed", type=int, help="master seed (OTFS_SEED overrides)")
    p.add_argument("--delta-f", dest="delta_f", type=float, help="subcarrier spacing in Hz")
    p.add_argument("--carrier", type=float, help="carrier frequency in Hz")
    p.add_argument("--config", help="flat key=value file")
    p.add_argument("--manifest", help="replay a previous run from its manifest")
    p.add_argument("--out", help="output path (default stdout)")
    if sim:
        p.add_argument("--detector", help="ml | lmmse")
        p.add_argument("--snr", help="lo:step:hi in dB")
        p.add_argument("--frames", type=int, help="maximum frames per SNR point")
        p.add_argument("--target-errors", dest="target_errors", type=int, help="stop a point at this many bit errors")
        p.add_argument("--ml-budget", dest="ml_budget", type=int, help="maximum ML candidates per frame")
        p.add_argument("--cp-len", dest="cp_len", type=int, help="cyclic prefix length")
        p.add_argument("--format", choices=["csv", "json"])
        p.add_argument("--workers", type=int, help="concurrent blocks; results do not depend on it")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="otfsprec", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ber", help="Monte Carlo BER curve")
    _add_common(p, sim=True)
    p.set_defaults(func=cmd_ber)

    p = sub.add_parser("diversity", help="pairwise rank scan of a precoder")
    _add_common(p, sim=False)
    p.add_argument("--pair-budget", dest="pair_budget", type=int)
    p.add_argument("--require-exhaustive", action="store_true")
    p.set_defaults(func=cmd_diversity)

    p = sub.add_parser("precoder", help="precoder utilities")
    psub = p.add_subparsers(dest="action", required=True)
    d = psub.add_parser("dump", help="write the generator or the full precoder as CSV")
    d.add_argument("--M", type=int)
    d.add_argument("--N", type=int)
    d.add_argument("--which", default="theta", choices=["theta", "v"])
    d.add_argument("--scenario", default="fir")
    d.add_argument("--out")
    d.set_defaults(func=cmd_precoder_dump)

    p = sub.add_parser("channel", help="channel utilities")
    csub = p.add_subparsers(dest="action", required=True)
    d = csub.add_parser("dump", help="write one seeded channel realization as CSV")
    d.add_argument("--M", type=int)
    d.add_argument("--N", type=int)
    d.add_argument("--scenario")
    d.add_argument("--seed", type=int)
    d.add_argument("--delta-f", dest="delta_f", type=float)
    d.add_argument("--carrier", type=float)
    d.add_argument("--config")
    d.add_argument("--out")
    d.set_defaults(func=cmd_channel_dump)

    p = sub.add_parser("selfcheck", help="run built-in property checks")
    p.set_defaults(func=cmd_selfcheck)

    p = sub.add_parser("plotdata", help="merge BER CSVs into a gnuplot data file")
    p.add_argument("--in", dest="inputs", nargs="*", default=[])
    p.add_argument("--out")
    p.set_defaults(func=cmd_plotdata)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UnsupportedDimensionError as exc:
        msg = str(exc) if SUPPORTED_CLASSES in str(exc) else f"{exc}; supported: {SUPPORTED_CLASSES}"
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_CAPACITY
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (OtfsError, ArithmeticError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
