"""Command-line front end.

Exit codes: 0 success, 1 ``compare`` found differences, 2 configuration
error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .gaussian import log_negativity, pt_symplectic_spectrum
from .lattice import MASSLESS, CorrelationKernel, KernelKind, LatticeSpec
from .patches import ObservationProtocol, PatchPair, patch_state
from .precision import NumericError, PrecisionContext
from .scans import ScanGrid, ghgamma_ground_wavefunction, negativity_scan, separability_radius

EXIT_OK, EXIT_DIFF, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

PROTOCOL_COLUMNS = {
    ObservationProtocol.MeasuredPhi: "neg_m_phi",
    ObservationProtocol.MeasuredPi: "neg_m_pi",
    ObservationProtocol.Traced: "neg_traced",
}
TABLE3_RT = (0, 5, 50, 150, 300)
TABLE4_RT = (0, 5, 20, 40, 70)


class ConfigError(ValueError):
    pass


@dataclass
class Table:
    columns: list
    rows: list
    metadata: dict


def parse_rt(text: str) -> list:
    """'0..10', '0..320:4' or '0,5,50'."""
    try:
        if ".." in text:
            span, _, step = text.partition(":")
            a, b = span.split("..")
            return list(range(int(a), int(b) + 1, int(step) if step else 1))
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad separation list {text!r}") from exc


def parse_protocols(text: str) -> list:
    out = []
    for name in text.split(","):
        try:
            out.append(ObservationProtocol(name.strip()))
        except ValueError as exc:
            choices = ", ".join(p.value for p in ObservationProtocol)
            raise ConfigError(f"unknown protocol {name!r} (choose from {choices})") from exc
    return out


def fmt(value, digits: int) -> str:
    if isinstance(value, (int, str)):
        return str(value)
    x = float(value)
    if x == 0:
        return "0"
    return f"{x:.{digits}g}"


def render(table: Table, form: str, digits: int) -> str:
    if form == "json":
        doc = {
            "metadata": {k: str(v) for k, v in table.metadata.items()},
            "records": [{c: fmt(v, digits) for c, v in zip(table.columns, row)} for row in table.rows],
        }
        return json.dumps(doc, indent=1) + "\n"
    buf = io.StringIO()
    for k, v in table.metadata.items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.rows:
        w.writerow([fmt(v, digits) for v in row])
    return buf.getvalue()


def read_table(path) -> Table:
    """Re-read a CSV or JSON file written by :func:`render`."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        recs = doc["records"]
        cols = list(recs[0]) if recs else []
        return Table(cols, [[r[c] for c in cols] for r in recs], doc.get("metadata", {}))
    meta, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            meta[k] = v
        elif line.strip():
            body.append(line)
    rows = list(csv.reader(body))
    return Table(rows[0], rows[1:], meta)


def compare_tables(a: Table, b: Table, rtol: dict, default_rtol: float) -> list:
    """Differences between two tables as human-readable strings."""
    problems = []
    if a.columns != b.columns:
        return [f"column mismatch: {a.columns} vs {b.columns}"]
    if len(a.rows) != len(b.rows):
        return [f"row count mismatch: {len(a.rows)} vs {len(b.rows)}"]
    for i, (ra, rb) in enumerate(zip(a.rows, b.rows)):
        for col, x, y in zip(a.columns, ra, rb):
            if x == y:
                continue
            try:
                fx, fy = float(x), float(y)
            except ValueError:
                problems.append(f"row {i} {col}: {x!r} != {y!r}")
                continue
            tol = rtol.get(col, default_rtol)
            if abs(fx - fy) > tol * max(abs(fx), abs(fy)):
                problems.append(f"row {i} {col}: {x} vs {y} (rtol {tol:g})")
    return problems


# commands

def _setup(args):
    ctx = PrecisionContext(args.bits)
    spec = LatticeSpec(args.mass)
    return ctx, CorrelationKernel(spec, ctx)


def _meta(args, **extra) -> dict:
    meta = {"command": args.command, "mass": args.mass, "d": args.d, "bits": args.bits,
            "version": __version__}
    meta.update(extra)
    return meta


def _scan_table(args, rts, protocols) -> Table:
    ctx, kernel = _setup(args)
    grid = ScanGrid(args.d, float(args.mass), protocols, rts, ctx)
    records = negativity_scan(grid, kernel, workers=args.threads)
    by_rt = {}
    for rec in records:
        by_rt.setdefault(rec.rt, {})[rec.protocol] = rec
    columns = ["rt", "rt_over_d"] + [PROTOCOL_COLUMNS[p] for p in protocols] + \
        [PROTOCOL_COLUMNS[p].replace("neg_", "ptmin_") for p in protocols]
    rows = []
    for rt in rts:
        recs = by_rt[rt]
        rows.append([rt, rt / args.d] + [recs[p].negativity for p in protocols] + [recs[p].pt_min for p in protocols])
    return Table(columns, rows, _meta(args))


def cmd_scan(args) -> Table:
    return _scan_table(args, parse_rt(args.rt), parse_protocols(args.protocol))


def table1_rts(d: int) -> list:
    return list(range(0, 20 * d + 1, max(1, d // 4)))


def cmd_table1(args) -> Table:
    protocols = [ObservationProtocol.MeasuredPhi, ObservationProtocol.MeasuredPi, ObservationProtocol.Traced]
    full = _scan_table(args, table1_rts(args.d), protocols)
    rows = [[row[1]] + row[2:5] for row in full.rows]
    return Table(["rt_over_d", "neg_m_phi", "neg_m_pi", "neg_traced"], rows, full.metadata)


def cmd_separability(args) -> Table:
    ctx, kernel = _setup(args)
    r = separability_radius(kernel, args.d, ObservationProtocol.Traced, ctx)
    return Table(["d", "mass", "separability_radius"], [[args.d, args.mass, r]], _meta(args))


def _wavefunction_rows(args, rts, protocols) -> Table:
    ctx, kernel = _setup(args)
    rows = []
    for proto in protocols:
        for rt in rts:
            pair = PatchPair(args.d, rt)
            v = ghgamma_ground_wavefunction(patch_state(kernel, pair, proto, ctx), pair, ctx)
            rows.append([proto.value, rt] + list(v[: args.d]))
    cols = ["protocol", "rt"] + [f"c{i}" for i in range(args.d)]
    return Table(cols, rows, _meta(args, convention="unit 2d-norm, nonnegative component sum"))


def cmd_wavefunction(args) -> Table:
    return _wavefunction_rows(args, parse_rt(args.rt), parse_protocols(args.protocol))


def cmd_table3(args) -> Table:
    return _wavefunction_rows(args, TABLE3_RT, [ObservationProtocol.MeasuredPhi, ObservationProtocol.Traced])


def cmd_table4(args) -> Table:
    return _wavefunction_rows(args, TABLE4_RT, [ObservationProtocol.MeasuredPhi, ObservationProtocol.Traced])


def two_body_row(kernel, d: int, rt: int, ctx) -> list:
    from .symplectic import local_williamson, negativity_basis, two_body_negativity_sum

    pair = PatchPair(d, rt)
    gm = patch_state(kernel, pair, ObservationProtocol.MeasuredPhi, ctx)
    gt = patch_state(kernel, pair, ObservationProtocol.Traced, ctx)
    n_m = log_negativity(pt_symplectic_spectrum(gm, pair.B_modes, ctx))
    n_t = log_negativity(pt_symplectic_spectrum(gt, pair.B_modes, ctx))
    sw = local_williamson(gm, pair, ctx)
    n_mw = two_body_negativity_sum(gm, sw, None, ctx)
    n_tw = two_body_negativity_sum(gt, sw, None, ctx)
    n_tn = two_body_negativity_sum(gt, negativity_basis(gt, pair, ctx), None, ctx) if n_t > 0 else n_t
    return [rt / d, n_m, n_mw, n_t, n_tw, n_tn]


TWO_BODY_COLUMNS = ["rt_over_d", "neg_m_phi", "neg_m_phi_W", "neg_traced", "neg_traced_W", "neg_traced_N"]


def cmd_two_body(args) -> Table:
    ctx, kernel = _setup(args)
    rows = [two_body_row(kernel, args.d, rt, ctx) for rt in parse_rt(args.rt)]
    return Table(TWO_BODY_COLUMNS, rows, _meta(args))


def cmd_table2(args) -> Table:
    ctx, kernel = _setup(args)
    rts = sorted({k * args.d // 16 for k in range(11)})
    rows = [two_body_row(kernel, args.d, rt, ctx) for rt in rts]
    return Table(TWO_BODY_COLUMNS, rows, _meta(args))


def sigma2_matrix(mass: float = 1.0, sites: int = 4):
    """Precision matrix for the sigma2 qubit bench: infinite-volume K on neighbouring sites."""
    ctx = PrecisionContext(128)
    kernel = CorrelationKernel(LatticeSpec(mass), ctx)
    return [[float(kernel.element(KernelKind.K, i - j)) for j in range(sites)] for i in range(sites)]


def cmd_qubit_bench(args) -> Table:
    import numpy as np

    from .qubits import correlated_noise_negativity, ghz_extraction_check

    ghz = ghz_extraction_check()
    s1 = correlated_noise_negativity(np.eye(4) / 0.1 ** 2, args.order)
    s2 = correlated_noise_negativity(np.array(sigma2_matrix()), args.order)
    rows = [
        ["ghz_traced_pair", ghz.traced_pair_negativity, ""],
        ["ghz_conditioned_0", ghz.conditioned_negativity[0], ""],
        ["ghz_conditioned_1", ghz.conditioned_negativity[1], ""],
        ["sigma1", s1.total, s1.two_body_sum],
        ["sigma2", s2.total, s2.two_body_sum],
    ]
    meta = {"command": args.command, "order": args.order, "version": __version__}
    return Table(["case", "total", "two_body_sum"], rows, meta)


def bits_sweep(mass, d: int, rts, bits_list, protocols=None, threshold: float = 1e-3) -> Table:
    """Smallest precision from which a row agrees with the next doubling."""
    protocols = protocols or [ObservationProtocol.Traced]
    values = {}
    for bits in bits_list:
        ctx = PrecisionContext(bits)
        kernel = CorrelationKernel(LatticeSpec(mass), ctx)
        for rt in rts:
            pair = PatchPair(d, rt)
            for proto in protocols:
                try:
                    spec = pt_symplectic_spectrum(patch_state(kernel, pair, proto, ctx), pair.B_modes, ctx)
                    values[(bits, rt, proto)] = float(log_negativity(spec))
                except NumericError:
                    values[(bits, rt, proto)] = float("nan")
    rows = []
    for rt in rts:
        for proto in protocols:
            series = [values[(b, rt, proto)] for b in bits_list]
            stable = None
            for i in range(len(bits_list) - 1):
                a, b = series[i], series[i + 1]
                scale = max(abs(a), abs(b))
                drift = 0.0 if scale == 0 else abs(a - b) / scale
                if drift == drift and drift < threshold:
                    if stable is None:
                        stable = bits_list[i]
                else:
                    stable = None
            rows.append([rt, rt / d, proto.value] + series + [stable if stable is not None else "unstable"])
    cols = ["rt", "rt_over_d", "protocol"] + [f"neg_{b}" for b in bits_list] + ["stable_from_bits"]
    return Table(cols, rows, {"command": "bits-sweep", "mass": mass, "d": d, "version": __version__})


def cmd_bits_sweep(args) -> Table:
    bits_list = [int(b) for b in args.bits_list.split(",")]
    if any(b < 128 for b in bits_list) or bits_list != sorted(set(bits_list)):
        raise ConfigError("--bits-list must be increasing values >= 128")
    rts = parse_rt(args.rt) if args.rt else [4 * args.d, 8 * args.d, 12 * args.d, 16 * args.d, 16 * args.d + args.d // 4]
    return bits_sweep(args.mass, args.d, rts, bits_list, parse_protocols(args.protocol))


COMMANDS = {
    "scan": cmd_scan,
    "separability": cmd_separability,
    "wavefunction": cmd_wavefunction,
    "two-body": cmd_two_body,
    "qubit-bench": cmd_qubit_bench,
    "table1": cmd_table1,
    "table2": cmd_table2,
    "table3": cmd_table3,
    "table4": cmd_table4,
    "bits-sweep": cmd_bits_sweep,
}


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _bits(text):
    v = int(text)
    if v < 128:
        raise argparse.ArgumentTypeError("precision must be >= 128 bits")
    return v


def _mass(text):
    try:
        ok = float(text) > 0
    except ValueError:
        ok = False
    if not ok:
        raise argparse.ArgumentTypeError(f"mass must be a positive number, got {text!r}")
    return str(text)


def build_parser(default_bits: int) -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file; command-line flags take precedence")
    common.add_argument("--mass", type=_mass, default=None, help="default 1e-10 (0.3 for table4)")
    common.add_argument("--d", type=_positive_int, default=16, help="sites per patch")
    common.add_argument("--bits", type=_bits, default=default_bits, help="working precision (env VN_BITS)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--digits", type=_positive_int, default=6, help="significant digits in output")
    common.add_argument("-o", "--output", help="output file (default stdout)")
    common.add_argument("--threads", type=_positive_int, default=1, help="worker processes for scans")
    common.add_argument("--seed", type=int, default=0)

    parser = argparse.ArgumentParser(prog="vacneg", description="Patch-pair negativities of the lattice scalar vacuum")
    parser.add_argument("--version", action="version", version=f"vacneg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("scan", parents=[common], help="negativity vs separation")
    p.add_argument("--rt", default="0..10", help="separations: a..b[:step] or a,b,c")
    p.add_argument("--protocol", default="m_phi,m_pi,traced")
    sub.add_parser("separability", parents=[common], help="separability radius of the traced patches")
    p = sub.add_parser("wavefunction", parents=[common], help="G H^Gamma ground-state wavefunctions")
    p.add_argument("--rt", default="0")
    p.add_argument("--protocol", default="m_phi,traced")
    p = sub.add_parser("two-body", parents=[common], help="two-body negativity sums in the S_W and S_N bases")
    p.add_argument("--rt", default="0..10")
    p = sub.add_parser("qubit-bench", parents=[common], help="GHZ and correlated-noise checks")
    p.add_argument("--order", type=_positive_int, default=32, help="Gauss-Hermite order")
    for name, help_ in (("table1", "negativity table, r/d = 0 .. 20"), ("table2", "two-body table"),
                        ("table3", "wavefunctions, massless"), ("table4", "wavefunctions, m = 0.3")):
        sub.add_parser(name, parents=[common], help=help_)
    p = sub.add_parser("bits-sweep", parents=[common], help="precision stability of negativity rows")
    p.add_argument("--rt", default="")
    p.add_argument("--protocol", default="traced")
    p.add_argument("--bits-list", default="128,256,512,1024")
    p = sub.add_parser("compare", help="diff two emitted tables")
    p.add_argument("left")
    p.add_argument("right")
    p.add_argument("--rtol", action="append", default=[], help="COL=TOL, repeatable")
    p.add_argument("--default-rtol", type=float, default=1e-6)
    return parser


def read_config(path) -> dict:
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{n}: expected key=value")
        out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out


def _env_bits() -> int:
    raw = os.environ.get("VN_BITS")
    if not raw:
        return 512
    try:
        bits = int(raw)
    except ValueError as exc:
        raise ConfigError(f"VN_BITS must be an integer, got {raw!r}") from exc
    if bits < 128:
        raise ConfigError("VN_BITS must be >= 128")
    return bits


def parse_args(argv):
    parser = build_parser(_env_bits())
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        cfg = read_config(known.config)
        cmd = next((a for a in argv if a in parser._subparsers._group_actions[0].choices), None)
        if cmd is None:
            raise ConfigError("no command given")
        subparser = parser._subparsers._group_actions[0].choices[cmd]
        dests = {a.dest for a in subparser._actions}
        unknown = sorted(set(cfg) - dests)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        subparser.set_defaults(**cfg)
    args = parser.parse_args(argv)
    # parent-parser actions are shared between subcommands, so per-command
    # defaults are filled in here rather than through set_defaults
    if getattr(args, "mass", "") is None:
        args.mass = "0.3" if args.command == "table4" else repr(MASSLESS)
    return args


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK

    if args.command == "compare":
        try:
            rtol = {}
            for item in args.rtol:
                col, sep, val = item.partition("=")
                if not sep or not col:
                    raise ConfigError(f"--rtol expects COL=TOL, got {item!r}")
                rtol[col] = float(val)
            problems = compare_tables(read_table(args.left), read_table(args.right), rtol, args.default_rtol)
        except (OSError, ValueError, KeyError, IndexError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        for line in problems:
            print(line)
        return EXIT_DIFF if problems else EXIT_OK

    try:
        table = COMMANDS[args.command](args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # ConfigError, GeometryError and invalid scan grids
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = render(table, args.format, args.digits)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
