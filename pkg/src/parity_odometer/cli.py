"""Command-line front end.

Every command writes ``report.json`` (config echo, version, outputs, flags)
plus command-specific CSV/DOT/JSON files and PNG figures into ``--out``.
Exit codes: 0 success, 1 invalid config, 2 replay incomplete, 3 budget
exceeded without fallback.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import fields, replace
from fractions import Fraction
from math import prod

from . import __version__, plotting
from .bratteli import build_diagram, pushforward_audit
from .dynamics import Point, orbit_rows
from .errors import BudgetExceeded, ConfigError, NoFeasibleScale, OdometerError
from .krieger.audit import AUDIT_HEADER, lemma_audit
from .krieger.kset import k_set_measure
from .krieger.proof import (
    ProofContext,
    auto_search,
    default_region,
    replay_proof,
)
from .krieger.events import Region
from .krieger.tables import CenteredLaw, build_table, centering, ks_gaussian, scaling
from .measure import Cylinder, LogValue, parse_rational
from .reports import Emitter, RunConfig, RunReport, env_overrides, load_config

log = logging.getLogger("parity_odometer")

EXIT_OK, EXIT_CONFIG, EXIT_INCOMPLETE, EXIT_BUDGET = 0, 1, 2, 3


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.replace("(", "").replace(")", "").split(",") if v.strip()]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


class _Parser(argparse.ArgumentParser):
    """Usage errors map to the config exit code rather than argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override it")
    common.add_argument("--q", type=int)
    common.add_argument("--beta")
    common.add_argument("--delta", type=float)
    common.add_argument("--depth", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--mode", choices=("exact", "monte-carlo", "auto"))
    common.add_argument("--out")
    common.add_argument("--state-budget", dest="state_budget", type=int)

    parser = _Parser(prog="parity-odometer", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("orbit", parents=[common], help="forward orbit with cocycles")
    p.add_argument("--start", type=_int_list)
    p.add_argument("--buffer", type=int, help="working buffer length L")
    p.add_argument("--steps", type=int)

    p = sub.add_parser("dist", parents=[common], help="weighted parity law, scaling, KS")
    p.add_argument("--ks-depths", dest="ks_depths", type=_int_list)

    p = sub.add_parser("replay", parents=[common], help="replay the density argument")
    p.add_argument("--i-k", dest="i_k", type=int, help="force the block end instead of searching")
    p.add_argument("--candidates", type=_int_list, help="search range lo,hi")
    p.add_argument("--rho")
    p.add_argument("--centering", choices=("block", "full"))
    p.add_argument("--u", type=_int_list)
    p.add_argument("--region", help="'default' (thin defects) or 'whole' (B = Z_u)")

    p = sub.add_parser("kset", parents=[common], help="K-set measures over an s-grid")
    p.add_argument("--s-grid", dest="s_grid", type=_float_list)
    p.add_argument("--relation", choices=("parity", "full-tail", "both"))
    p.add_argument("--region", help="'whole', 'prefix:a,b,...' or a cylinder JSON file")
    p.add_argument("--samples", type=int)

    p = sub.add_parser("bratteli", parents=[common], help="diagram DOT and pushforward audit")

    p = sub.add_parser("lemma-audit", parents=[common], help="randomized exact lemma instances")
    p.add_argument("--count", type=int)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    data = load_config(args.config)
    data.update(env_overrides())
    names = {f.name for f in fields(RunConfig)}
    for key, value in vars(args).items():
        if key in names and value is not None:
            data[key] = value
    if "beta" in data:
        data["beta"] = str(data["beta"])
    try:
        cfg = replace(RunConfig(), **data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


@contextmanager
def worker_pool(workers: int):
    """Yields ``mapper(fn, items) -> list`` preserving item order."""
    if workers <= 1:
        yield lambda fn, items: list(map(fn, items))
        return
    with ProcessPoolExecutor(max_workers=workers) as ex:
        yield lambda fn, items: list(ex.map(fn, items))


# --------------------------------------------------------------------------
# Commands


def cmd_orbit(cfg: RunConfig, em: Emitter) -> tuple[RunReport, int]:
    L = cfg.buffer or cfg.depth or max(len(cfg.start), 2)
    buf = (list(cfg.start) + [0] * L)[:L]
    try:
        point = Point(tuple(buf), cfg.q)
    except (ValueError, OdometerError) as exc:
        raise ConfigError(f"bad start point: {exc}") from exc
    rows, overflowed = orbit_rows(point, cfg.steps)
    em.csv("orbit.csv", ["step", "prefix", "cocycle.a", "cocycle.b"],
           [[t, "(" + ",".join(map(str, s)) + ")", c.a, c.b] for t, s, c in rows])
    plotting.plot_orbit(em.path("orbit.png"), [r[0] for r in rows], [float(r[2].b) for r in rows])
    if overflowed:
        log.warning("orbit left the buffer after %d steps; dump truncated", len(rows))
    report = RunReport("orbit", cfg, outputs={"start": buf, "L": L, "rows": len(rows)},
                       flags={"truncated": overflowed})
    return report, EXIT_OK


def cmd_dist(cfg: RunConfig, em: Emitter) -> tuple[RunReport, int]:
    i = 3 if cfg.depth is None else cfg.depth
    beta = cfg.beta_value
    out: dict = {"i": i, "c": centering(cfg.q, i).to_json()}
    flags: dict = {}
    if i == 0:
        em.csv("table.csv", ["m", "parity", "count"], [])
        out.update(t=None, b=None, note="empty table")
    else:
        table = build_table(1, i)
        em.csv("table.csv", ["m", "parity", "count"], [[m, p, c] for m, p, c in table.items()])
        law = CenteredLaw.build(i, table)
        try:
            sc = scaling(cfg.q, i, beta, law)
            out.update(t=sc.t, b=LogValue(0, sc.t).to_json(), b_real=sc.b_real,
                       p_interior=sc.p_interior, p_upper=sc.p_upper, p_lower=sc.p_lower)
            flags.update(sc.flags)
            b_plot = float(sc.t)
        except NoFeasibleScale as exc:
            out.update(t=None, b=None, infeasible=str(exc), diagnostics=exc.diagnostics)
            flags["no_feasible_scale"] = True
            b_plot = None
        total = 2**i
        plotting.plot_distribution(em.path("distribution.png"), [d / 2 for d in law.doubled],
                                   [c / total for c in law.counts], b_plot)
    ks_rows = [[k, f"{ks_gaussian(cfg.q, k):.12g}"] for k in cfg.ks_depths if k >= 2]
    em.csv("ks.csv", ["i", "ks"], ks_rows)
    out["ks"] = {str(k): float(v) for k, v in ks_rows}
    return RunReport("dist", cfg, outputs=out, flags=flags), EXIT_OK


def _replay_region(cfg: RunConfig) -> Region:
    kind = cfg.region or "default"
    if kind == "default":
        return default_region(cfg.q, tuple(cfg.u))
    if kind == "whole":
        return Region.build(cfg.q, tuple(cfg.u))
    raise ConfigError(f"unknown replay region {kind!r}")


def _margins(report) -> tuple[list[str], list[float]]:
    labels, margins = [], []
    for r in report.records:
        lhs, rhs = r.lhs, r.rhs
        try:
            a, b = float(lhs), float(rhs)
        except (TypeError, ValueError):
            continue
        if a > 0 and b > 0:
            labels.append(r.label)
            margins.append(math.log(a / b))
    return labels, margins


def cmd_replay(cfg: RunConfig, em: Emitter) -> tuple[RunReport, int]:
    region = _replay_region(cfg)
    rho = None if cfg.rho is None else parse_rational(cfg.rho)
    beta = cfg.beta_value
    if cfg.i_k is not None:
        try:
            ctx = ProofContext.build(cfg.q, beta, region, cfg.i_k, rho=rho, delta=cfg.delta,
                                     centering_mode=cfg.centering)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        proof, search = replay_proof(ctx), []
    else:
        lo, hi = cfg.candidates
        with worker_pool(cfg.workers) as mapper:
            proof, search = auto_search(cfg.q, beta, region, range(max(lo, region.I + 1), hi + 1), rho=rho,
                                        centering_mode=cfg.centering, mapper=mapper, chunk=cfg.workers)
    out = {"search": search}
    flags = {"passed": bool(proof and proof.passed)}
    if proof is not None:
        em.text("proof_report.json", proof.dumps())
        out["failure"] = proof.failure
        out["stages"] = [[r.label, r.passed] for r in proof.records]
        labels, margins = _margins(proof)
        plotting.plot_margins(em.path("margins.png"), labels, margins)
        flags["borderline"] = any(r.borderline for r in proof.records)
    code = EXIT_OK if flags["passed"] else EXIT_INCOMPLETE
    return RunReport("replay", cfg, outputs=out, flags=flags), code


def _kset_region(cfg: RunConfig, q: int) -> Cylinder:
    kind = cfg.region or "whole"
    if kind == "whole":
        return Cylinder.whole()
    if kind.startswith("prefix:"):
        return Cylinder.from_prefix(tuple(_int_list(kind[len("prefix:"):])))
    import json

    try:
        with open(kind, encoding="utf-8") as fh:
            return Cylinder.from_json(json.load(fh), q)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load region {kind!r}: {exc}") from exc


def cmd_kset(cfg: RunConfig, em: Emitter) -> tuple[RunReport, int]:
    depth = 2 if cfg.depth is None else cfg.depth
    B = _kset_region(cfg, cfg.q)
    relations = ("parity", "full-tail") if cfg.relation == "both" else (cfg.relation,)
    rows, series, flags = [], {}, {"borderline": False, "monte_carlo": False}
    with worker_pool(cfg.workers) as mapper:
        for rel in relations:
            xs, ys = [], []
            for s in cfg.s_grid:
                res = k_set_measure(B, s, cfg.delta, depth, cfg.q, relation=rel, mode=cfg.mode,
                                    samples=cfg.samples, seed=cfg.seed, budget=cfg.state_budget,
                                    mapper=mapper)
                flags["borderline"] |= res.borderline
                flags["monte_carlo"] |= res.mode == "monte-carlo"
                d = res.to_json()
                value = float(res.measure) if res.measure is not None else res.estimate
                rows.append([rel, s, d["mode"], d.get("measure", ""), f"{value:.12g}",
                             d.get("half_width", ""), int(res.borderline)])
                xs.append(s)
                ys.append(value)
            series[rel] = (xs, ys)
    em.csv("kset.csv", ["relation", "s", "mode", "measure", "value", "half_width", "borderline"], rows)
    plotting.plot_kset(em.path("kset.png"), series)
    out = {"depth": depth, "region": B.to_json(), "rows": len(rows)}
    return RunReport("kset", cfg, outputs=out, flags=flags), EXIT_OK


def cmd_bratteli(cfg: RunConfig, em: Emitter) -> tuple[RunReport, int]:
    depth = 2 if cfg.depth is None else cfg.depth
    states = prod(cfg.q**j + 1 for j in range(1, depth + 1))
    if states > cfg.state_budget:
        raise BudgetExceeded(f"audit needs {states} path prefixes > budget {cfg.state_budget}")
    if depth >= 1:
        em.text("diagram.dot", build_diagram(cfg.q, depth).to_dot())
    audit = pushforward_audit(cfg.q, depth)
    return RunReport("bratteli", cfg, outputs={"audit": audit},
                     flags={"mismatch": audit["mismatches"] > 0}), EXIT_OK


def cmd_lemma_audit(cfg: RunConfig, em: Emitter) -> tuple[RunReport, int]:
    with worker_pool(cfg.workers) as mapper:
        rows = lemma_audit(cfg.count, cfg.seed, mapper)
    em.csv("lemma_audit.csv", AUDIT_HEADER, [r.to_row() for r in rows])
    plotting.plot_ratios(em.path("lemma_ratios.png"), [float(r.mu_E0 / r.mu_E) for r in rows])
    out = {
        "instances": len(rows),
        "certificates": sum(r.certificate for r in rows),
        "oracle_agreements": sum(r.oracle_agrees for r in rows),
        "strict_refinements": sum(r.mu_E0 < r.mu_E for r in rows),
    }
    flags = {"counterexample": out["certificates"] < len(rows),
             "oracle_mismatch": out["oracle_agreements"] < len(rows)}
    return RunReport("lemma-audit", cfg, outputs=out, flags=flags), EXIT_OK


COMMANDS = {
    "orbit": cmd_orbit,
    "dist": cmd_dist,
    "replay": cmd_replay,
    "kset": cmd_kset,
    "bratteli": cmd_bratteli,
    "lemma-audit": cmd_lemma_audit,
}


def run(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve_config(args)
        em = Emitter(cfg.out)
        report, code = COMMANDS[args.command](cfg, em)
    except ConfigError as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_CONFIG
    except BudgetExceeded as exc:
        log.error("budget exceeded: %s", exc)
        return EXIT_BUDGET
    em.report(report)
    log.info("wrote %s", em.dir / "report.json")
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
