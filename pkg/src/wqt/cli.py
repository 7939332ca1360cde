"""Batch driver: configure a parameter point, run named verification suites,
emit machine-readable reports.

Each check record carries the mathematical claim it verifies, the residual
(as a decimal string, to keep reports diffable), the tolerance, and a status:
theorem- and relation-backed checks report pass/fail and drive the exit
code; conjecture-backed ones report status "experiment" and never do.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import __version__
from .params import DegenerateParameterError, ParamPoint
from .fock import Sector, WeightVector, basis_up_to, osc_bracket, eta_on_oscillator

TOOL_VERSION = __version__


@dataclass
class RunConfig:
    x: float = 0.3
    r: complex = 2.5
    s: complex = 2.4
    N: int = 2
    kq: int = 28
    kz: int = 12
    cap: int = 2
    seed: int = 7
    tol: dict = field(default_factory=dict)
    suites: list = field(default_factory=lambda: ["all"])
    out: str | None = None

    def point(self, **over) -> ParamPoint:
        kw = dict(x=self.x, r=self.r, s=self.s, N=self.N, kq=self.kq, kz=self.kz)
        kw.update(over)
        return ParamPoint(**kw)


@dataclass
class Record:
    check: str
    claim: str
    residual: str
    tolerance: float
    status: str  # pass | fail | experiment


@dataclass
class Report:
    version: str
    config: dict
    records: list
    wall_time: float

    @property
    def failed(self) -> bool:
        return any(r.status == "fail" for r in self.records)

    def to_json(self) -> str:
        return json.dumps(
            {
                "version": self.version,
                "config": self.config,
                "records": [asdict(r) for r in self.records],
                "wall_time": self.wall_time,
            },
            indent=2,
            default=str,
        )


def _rec(records, check, claim, residual, tol, experiment=False):
    status = "experiment" if experiment else ("pass" if residual < tol else "fail")
    records.append(Record(check, claim, repr(float(residual)), tol, status))


def _tolerance(cfg: RunConfig, key: str, default: float) -> float:
    return float(cfg.tol.get(key, default))


def _sectors(N: int):
    return [Sector.vacuum(N),
            Sector(WeightVector.alpha(1, N), WeightVector.eps_bar(2, N))]


def suite_exchange(cfg: RunConfig, records: list):
    from .vertex import (verify_exchange, verify_delta_commutator,
                         verify_far_commute, verify_eta_screenings)

    p = cfg.point()
    tol = _tolerance(cfg, "exchange", 1e-8)
    for j in range(1, cfg.N + 1):
        r = verify_exchange(j, p, cap=cfg.cap)
        _rec(records, r.name, "screening exchange relations", r.residual, tol)
        r = verify_delta_commutator(j, p, cap=cfg.cap)
        _rec(records, r.name, "delta-function commutators", r.residual, tol)
    r = verify_eta_screenings(p, cap=min(cfg.cap, 1))
    _rec(records, r.name, "Dynkin rotation of vertex operators", r.residual, tol)
    if cfg.N >= 4:
        r = verify_far_commute(1, 3, p, cap=1)
        _rec(records, r.name, "distant screenings commute", r.residual, 1e-9)


def suite_quadratic(cfg: RunConfig, records: list):
    from .walgebra import verify_quadratic

    p = cfg.point()
    tol = _tolerance(cfg, "quadratic", 1e-8)
    for i in range(1, cfg.N + 1):
        for j in range(i, cfg.N + 1):
            r = verify_quadratic(i, j, p, cap=cfg.cap, box=3)
            _rec(records, r.name, "quadratic generator relations", r.residual, tol)


def suite_dwa(cfg: RunConfig, records: list):
    from .walgebra import verify_dwa_z_commute, verify_quadratic

    p = cfg.point()
    tol = _tolerance(cfg, "dwa", 1e-8)
    for j in range(1, cfg.N):
        r = verify_dwa_z_commute(j, p, cap=cfg.cap, box=3)
        _rec(records, r.name, "split generators commute with the extra boson",
             r.residual, tol)
    pd = cfg.point(s=float(cfg.N))
    for i in range(1, cfg.N):
        for j in range(i, cfg.N):
            r = verify_quadratic(i, j, pd, cap=cfg.cap, box=3, flavor="dwa")
            _rec(records, r.name, "reduced-flavor quadratic relations", r.residual, tol)


def suite_degeneration(cfg: RunConfig, records: list):
    from .walgebra import verify_degeneration

    pd = cfg.point(s=float(cfg.N))
    r = verify_degeneration(pd, cap=cfg.cap)
    _rec(records, r.name, "top generator collapses to the unit operator",
         r.residual, _tolerance(cfg, "degeneration", 1e-10))


def suite_virasoro(cfg: RunConfig, records: list):
    from .walgebra import virasoro_limit_check

    rep = virasoro_limit_check([0.3, 0.2, 0.12], 0.8, cap=cfg.cap)
    tol = _tolerance(cfg, "virasoro", 1e-3)
    _rec(records, "virasoro central charge beta=0.8",
         "conformal limit central charge", rep["central_error"], tol)
    _rec(records, "virasoro commutator [L_1, L_-1] = 2 L_0",
         "conformal limit algebra", rep["algebra_resid"], tol)


def suite_iom_local(cfg: RunConfig, records: list):
    from .iom import check_commute_local, check_weak_sn, build_I

    p = cfg.point()
    tol = _tolerance(cfg, "iom-local", 1e-7)
    for sec in _sectors(cfg.N):
        r = check_commute_local(1, 2, sec, cfg.cap, p)
        _rec(records, r.name, "local charges commute", r.residual, tol)
    r = check_weak_sn(2, p, cap=cfg.cap)
    _rec(records, r.name, "weak permutation covariance", r.residual, 1e-8)
    # truncation stability of the second charge
    sec = Sector.vacuum(cfg.N)
    a = build_I(2, sec, cfg.cap, p)
    b = build_I(2, sec, cfg.cap, cfg.point(kz=cfg.kz + 4))
    drift = float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), 1e-30))
    _rec(records, "I_2 window stability kz->kz+4", "truncation stability", drift,
         _tolerance(cfg, "stability", 1e-9))


def suite_iom_nonlocal(cfg: RunConfig, records: list):
    from .iom import (build_G, check_commute_mixed, check_commute_nonlocal,
                      check_eta_invariance, g_kernel_exponent)

    if cfg.N != 2:
        return
    p = cfg.point()
    tol = _tolerance(cfg, "iom-nonlocal", 1e-6)
    for sec in _sectors(2):
        kappa, kappa_tau = g_kernel_exponent(sec, p)
        dk = kappa - kappa_tau
        _rec(records, "nonlocal charge exponent integrality",
             "contour exponents are integers", abs(dk - round(dk.real)), 1e-9)
    sec = Sector.vacuum(2)
    r = check_commute_nonlocal(1, 1, sec, cfg.cap, p)
    _rec(records, r.name, "nonlocal charges commute", r.residual, tol)
    r = check_commute_mixed(1, 1, sec, cfg.cap, p)
    _rec(records, r.name, "first local and nonlocal charges commute", r.residual, tol)
    r = check_eta_invariance("G", 1, sec, cfg.cap, p)
    _rec(records, r.name, "nonlocal charge Dynkin invariance", r.residual, tol)
    r = check_commute_mixed(2, 1, sec, cfg.cap, p)
    _rec(records, r.name, "second local against nonlocal charge", r.residual, tol,
         experiment=True)


def suite_identities(cfg: RunConfig, records: list, local_n: int | None = None,
                     local_m: int | None = None):
    from .identities import (MultiTheta, check_local_identity,
                             check_nonlocal_identity, check_quasi_periodicity)

    p = cfg.point()
    tol_local = _tolerance(cfg, "identities-local", 1e-9)
    tol_nonlocal = _tolerance(cfg, "identities-nonlocal", 1e-8)
    th = MultiTheta(2, 0.37 + 0.21j)
    qp = check_quasi_periodicity(th, p, samples=100, seed=cfg.seed)
    for cond, resid in qp.items():
        _rec(records, f"kernel theta {cond}", "kernel theta quasi-periodicity",
             resid, 1e-8)
    pairs = [(local_n, local_m)] if local_n else [(1, 1), (1, 2), (2, 2), (2, 3)]
    for (n, m) in pairs:
        res = check_local_identity(n, m, p, samples=50, seed=cfg.seed)
        _rec(records, f"subset-sum theta identity ({n},{m})",
             "local commutativity reduces to this identity", res["worst"], tol_local)
    for (m, n) in [(1, 1), (1, 2)]:
        res = check_nonlocal_identity(m, n, p, samples=20, seed=cfg.seed)
        _rec(records, f"permutation-sum theta identity ({m},{n})",
             "nonlocal commutativity reduces to this identity", res["worst"], tol_nonlocal)


def suite_eta(cfg: RunConfig, records: list):
    from .iom import check_eta_invariance

    p = cfg.point()
    worst = 0.0
    for i in range(1, cfg.N + 1):
        for j in range(1, cfg.N + 1):
            for m in range(1, 7):
                ci, mi = eta_on_oscillator(i, m, p)
                cj, mj = eta_on_oscillator(j, -m, p)
                b0 = osc_bracket(i, m, j, -m, p)
                b1 = mi * mj * osc_bracket(ci, m, cj, -m, p)
                worst = max(worst, abs(b1 - b0) / max(abs(b0), 1e-30))
    _rec(records, "oscillator bracket Dynkin invariance",
         "the rotation is an algebra automorphism", worst,
         _tolerance(cfg, "eta", 1e-10))
    sec = Sector.vacuum(cfg.N)
    for n in (1, 2):
        r = check_eta_invariance("I", n, sec, cfg.cap, p)
        _rec(records, r.name, "local charge Dynkin invariance", r.residual, 1e-6,
             experiment=True)
    if cfg.N == 2:
        r = check_eta_invariance("G", 1, sec, cfg.cap, p)
        _rec(records, r.name, "nonlocal charge Dynkin invariance", r.residual, 1e-6)


SUITES = {
    "exchange": suite_exchange,
    "quadratic": suite_quadratic,
    "dwa": suite_dwa,
    "degeneration": suite_degeneration,
    "virasoro-limit": suite_virasoro,
    "iom-local": suite_iom_local,
    "iom-nonlocal": suite_iom_nonlocal,
    "identities": suite_identities,
    "eta": suite_eta,
}


def run_suite(cfg: RunConfig) -> Report:
    t0 = time.time()
    records: list = []
    names = list(SUITES) if "all" in cfg.suites else cfg.suites
    for name in names:
        fn = SUITES.get(name)
        if fn is None:
            raise KeyError(name)
        fn(cfg, records)
    return Report(TOOL_VERSION, asdict(cfg), records, time.time() - t0)


# ---------------------------------------------------------------------------
# golden values
# ---------------------------------------------------------------------------

def golden_payload(cfg: RunConfig) -> dict:
    from .qfunc import struct_f, s_weight
    from .iom import build_G, build_I

    p = cfg.point()
    f11 = struct_f(1, 1, p)
    sw = s_weight(p)
    sec = Sector.vacuum(cfg.N)
    i2 = build_I(2, sec, min(cfg.cap, 1), p)
    payload = {
        "version": TOOL_VERSION,
        "config": asdict(cfg),
        "f11_coeffs": [[n, repr(f11[n].real), repr(f11[n].imag)] for n in range(9)],
        "s_window": [[n, repr(sw[n].real), repr(sw[n].imag)] for n in range(-8, 9)],
        "I2_vacuum": [repr(complex(i2[0, 0]).real), repr(complex(i2[0, 0]).imag)],
    }
    if cfg.N == 2:
        g1 = build_G(1, sec, min(cfg.cap, 1), p)
        payload["G1_vacuum"] = [repr(complex(g1[0, 0]).real), repr(complex(g1[0, 0]).imag)]
    return payload


def emit_goldens(cfg: RunConfig, path: str, force: bool = False) -> dict:
    """Write oracle-computed golden values; refuses to overwrite unless
    forced.  When the file exists and matches the configuration, returns the
    comparison of fresh values against it."""
    payload = golden_payload(cfg)
    if os.path.exists(path) and not force:
        with open(path) as fh:
            old = json.load(fh)
        if old.get("version") != TOOL_VERSION:
            payload["warning"] = "tool version differs from stored goldens"
        drift = 0.0
        for key in ("f11_coeffs", "s_window"):
            for (na, ra, ia), (nb, rb, ib) in zip(payload[key], old[key]):
                drift = max(drift, abs(float(ra) - float(rb)), abs(float(ia) - float(ib)))
        payload["comparison_drift"] = drift
        return payload
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
    return payload


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _parse_complex(text: str) -> complex:
    return complex(text.replace(" ", ""))


def load_config_file(path: str) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            out[key.strip()] = val.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wqt", description=__doc__)
    ap.add_argument("--x", type=float)
    ap.add_argument("--r", type=_parse_complex)
    ap.add_argument("--s", type=_parse_complex)
    ap.add_argument("--N", type=int)
    ap.add_argument("--kq", type=int)
    ap.add_argument("--kz", type=int)
    ap.add_argument("--cap", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--tol", action="append", default=[],
                    metavar="KEY=VALUE", help="tolerance override, repeatable")
    ap.add_argument("--suite", action="append", default=[],
                    choices=sorted(SUITES) + ["all"])
    ap.add_argument("--config", help="key=value config file mirroring the flags")
    ap.add_argument("--out", help="write the JSON report here")
    ap.add_argument("--emit-goldens", metavar="PATH")
    ap.add_argument("--force", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    threads = os.environ.get("WQT_THREADS")
    if threads:
        os.environ.setdefault("OMP_NUM_THREADS", threads)
        os.environ.setdefault("OPENBLAS_NUM_THREADS", threads)
    kw = {}
    if args.config:
        raw = load_config_file(args.config)
        casts = {"x": float, "r": _parse_complex, "s": _parse_complex, "N": int,
                 "kq": int, "kz": int, "cap": int, "seed": int, "out": str}
        for key, cast in casts.items():
            if key in raw:
                kw[key] = cast(raw[key])
        if "suite" in raw:
            kw["suites"] = raw["suite"].split(",")
    for key in ("x", "r", "s", "N", "kq", "kz", "cap", "seed", "out"):
        val = getattr(args, key, None)
        if val is not None:
            kw[key] = val
    tol = {}
    for item in args.tol:
        key, _, val = item.partition("=")
        tol[key] = float(val)
    if tol:
        kw["tol"] = tol
    if args.suite:
        kw["suites"] = args.suite
    try:
        cfg = RunConfig(**kw)
        cfg.point()  # validate parameters early
    except (ValueError, TypeError) as e:
        print(f"parameter error: {e}", file=sys.stderr)
        return 2
    if args.emit_goldens:
        try:
            payload = emit_goldens(cfg, args.emit_goldens, force=args.force)
        except DegenerateParameterError as e:
            print(f"parameter error: {e}", file=sys.stderr)
            return 2
        print(json.dumps(payload, indent=2, default=str))
        return 0
    try:
        report = run_suite(cfg)
    except KeyError as e:
        print(f"unknown suite: {e}", file=sys.stderr)
        return 2
    except DegenerateParameterError as e:
        print(f"parameter error: {e}", file=sys.stderr)
        return 2
    text = report.to_json()
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    print(text)
    return 1 if report.failed else 0


if __name__ == "__main__":
    sys.exit(main())
