"""Cross-checks of the sparse pipeline against exact counts and dense oracles.

``run_checks`` returns one :class:`Check` per item; ``fault`` deliberately
breaks one stage (a test hook) so the table can be seen to catch it.
"""

from __future__ import annotations

import contextlib
import time
from dataclasses import dataclass
from unittest import mock

import numpy as np
import scipy.sparse as sp

from . import operators
from .lattice import Lattice
from .linalg import SchurPlan, factorize, perturbed_logdet_family, schur_complement
from .materials import DielectricModel, MaterialMap
from .oracle import dense_free_energy_difference, dense_logdet
from .quadrature import build_grid, free_energy_difference
from .scenes import particle_links

FAULTS = ("operator_assembly", "curl_sign", "schur")


@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def random_map(lat: Lattice, rng, lo: float = 1.0, hi: float = 10.0) -> MaterialMap:
    """Every link gets its own constant permittivity drawn from [lo, hi]."""
    eps = rng.uniform(lo, hi, lat.n_links)
    models = (MaterialMap.vacuum(lat).models[0],) + tuple(DielectricModel.constant(e) for e in eps)
    return MaterialMap(lat, np.arange(1, lat.n_links + 1, dtype=np.int32), models)


def _check_counts():
    bad = []
    for L in (4, 5, 6):
        lat3, lat2 = Lattice.cube(L), Lattice.square(L)
        V3, V2 = lat3.n_sites, lat2.n_sites
        curl = operators.assemble_curl(lat3).matrix
        cc = (curl.T @ curl).tocsc()
        cc.eliminate_zeros()
        vac2 = MaterialMap.vacuum(lat2)
        got = {
            "3D curl": (curl.nnz, 12 * V3),
            "3D curl*curl": (cc.nnz, 39 * V3),
            "2D DA": (operators.assemble_DA(lat2, vac2, 0.5).nnz, 14 * V2),
            "2D DG": (operators.assemble_DG(lat2, vac2, 0.5).nnz, 5 * V2),
        }
        bad += [f"L={L} {k}: {a} != {b}" for k, (a, b) in got.items() if a != b]
    return not bad, "; ".join(bad) or "12V, 39V, 14V, 5V exact for L=4..6"


def _check_adjoint():
    bad = []
    for lat in (Lattice.square(5), Lattice.cube(4)):
        c = operators.assemble_curl(lat).matrix
        cs = operators.assemble_curl_star(lat).matrix
        if (cs != c.T).nnz:
            bad.append(f"{lat.dim}D curl* != curl^T")
        g = operators.assemble_gradient(lat).matrix
        if abs(c @ g).max() != 0:
            bad.append(f"{lat.dim}D curl grad != 0")
    return not bad, "; ".join(bad) or "curl* = curl^T, curl grad = 0 (2D, 3D)"


def _check_logdet(rng):
    worst = 0.0
    for lat in (Lattice.square(8), Lattice.cube(4)):
        for kind in ("DA", "DG"):
            for _ in range(3):
                A = operators.assemble(kind, random_map(lat, rng), float(rng.uniform(0.05, 2.0)))
                ref = dense_logdet(A)
                for method in ("simplicial", "supernodal"):
                    got = factorize(A, method=method).logdet()
                    worst = max(worst, abs(got - ref) / abs(ref))
    return worst < 1e-8, f"max relative error {worst:.2e} (tol 1e-8)"


def _check_schur(rng):
    worst = 0.0
    lat = Lattice.square(10)
    for kind in ("DA", "DG"):
        A = operators.assemble(kind, random_map(lat, rng), 0.3)
        n = A.shape[0]
        z = rng.choice(n, size=int(rng.integers(5, 30)), replace=False)
        plan = SchurPlan(n, z)
        fx, S = schur_complement(A, plan)
        total = fx.logdet() + np.linalg.slogdet(S)[1]
        ref = dense_logdet(A)
        worst = max(worst, abs(total - ref) / abs(ref))
    return worst < 1e-8, f"ln det X + ln det S vs dense: {worst:.2e} (tol 1e-8)"


def _check_three_level(rng):
    lat = Lattice.square(12)
    model = DielectricModel.constant(8.0)
    bg = MaterialMap.vacuum(lat).assign(particle_links(lat, (0, 0)), model)
    spots = [(3, 3), (4, 4), (6, 6)]
    worst = 0.0
    for kind in ("DG", "DA"):
        omega = 0.4
        A = operators.assemble(kind, bg, omega)
        subs = {p: operators.dofs_touching_links(lat, kind, particle_links(lat, p)) for p in spots}
        plan = SchurPlan.from_subsets(A.shape[0], subs)
        _, S = schur_complement(A, plan)
        perts, local, direct = [], [], []
        for p in spots:
            m = bg.assign(particle_links(lat, p), model)
            B = operators.assemble(kind, m, omega)
            perts.append(plan.restrict(B.matrix - A.matrix))
            local.append(plan.local(subs[p]))
            direct.append(dense_logdet(B))
        vals = perturbed_logdet_family(S, perts, local)
        got = np.diff(vals)
        ref = np.diff(direct)
        worst = max(worst, float(np.max(np.abs(got - ref))))
    return worst < 1e-9, f"differences vs dense: {worst:.2e} (tol 1e-9)"


def _pair(lat, model, q):
    links = np.concatenate([particle_links(lat, (0, 0)), particle_links(lat, q)])
    return MaterialMap.vacuum(lat).assign(links, model)


def _check_formulations(rng):
    lat = Lattice.square(12)
    model = DielectricModel.constant(8.0)
    grid = build_grid(0.3, 20)
    a, b = _pair(lat, model, (2, 2)), _pair(lat, model, (6, 6))
    ua = dense_free_energy_difference(a, b, grid, "DA")
    ug = dense_free_energy_difference(a, b, grid, "DG")
    rel = abs(ua - ug) / abs(ug)
    return rel < 1e-6, f"DA {ua:.6e} vs DG {ug:.6e}, relative {rel:.1e}"


def _check_pipeline(rng):
    lat = Lattice.square(16)
    model = DielectricModel.constant(8.0)
    grid = build_grid(0.2, 20)
    a, b = _pair(lat, model, (3, 3)), _pair(lat, model, (8, 8))
    worst = 0.0
    for kind in ("DG", "DA"):
        got = free_energy_difference(a, b, grid, kind)
        ref = dense_free_energy_difference(a, b, grid, kind)
        worst = max(worst, abs(got - ref) / abs(ref))
    return worst < 1e-6, f"Schur path vs dense end to end: {worst:.2e} (tol 1e-6)"


def _check_quadrature(rng):
    g = build_grid(1.0, 2)
    z_ok = np.allclose(g.z, [0.5 - 0.5 / np.sqrt(3), 0.5 + 0.5 / np.sqrt(3)], atol=1e-14)
    w_ok = np.allclose(g.weights, [0.5, 0.5], atol=1e-14)
    worst = 0.0
    for n in (5, 20, 40):
        x, w = np.polynomial.legendre.leggauss(n)
        gg = build_grid(1.0, n)
        worst = max(worst, float(np.max(np.abs(gg.z - 0.5 * (x + 1)))), float(np.max(np.abs(gg.weights - 0.5 * w))))
    ok = z_ok and w_ok and worst < 1e-13
    return ok, f"N_g=2 nodes/weights {'ok' if z_ok and w_ok else 'wrong'}; max deviation from reference {worst:.1e}"


CHECKS = (
    ("operator nonzero counts", _check_counts),
    ("adjointness and gauge", _check_adjoint),
    ("sparse vs dense logdet", _check_logdet),
    ("Schur identity", _check_schur),
    ("three-level perturbation", _check_three_level),
    ("DA/DG equivalence", _check_formulations),
    ("end-to-end vs dense oracle", _check_pipeline),
    ("Gauss-Legendre grid", _check_quadrature),
)


@contextlib.contextmanager
def inject_fault(fault: str | None):
    """Break one stage of the pipeline for the duration of the block."""
    if fault is None:
        yield
        return
    if fault == "operator_assembly":
        orig = operators.OperatorPattern.values

        def broken(self, *a, **k):
            data = orig(self, *a, **k)
            data[min(1, len(data) - 1)] *= 1.01
            return data

        with mock.patch.object(operators.OperatorPattern, "values", broken):
            operators.operator_pattern.cache_clear()
            yield
    elif fault == "curl_sign":
        orig_curl = operators.assemble_curl

        def broken_curl(lat):
            m = orig_curl(lat).matrix.copy()
            m.data[0] = -m.data[0]
            return operators.SparseOperator(m)

        with mock.patch.object(operators, "assemble_curl", broken_curl):
            yield
    elif fault == "schur":
        import casimir_lattice.validation as me

        orig_sc = me.schur_complement

        def broken_sc(*a, **k):
            fx, S = orig_sc(*a, **k)
            return fx, S * (1 + 1e-6)

        with mock.patch.object(me, "schur_complement", broken_sc):
            yield
    else:
        raise ValueError(f"unknown fault {fault!r}; expected one of {FAULTS}")
    operators.operator_pattern.cache_clear()


def run_checks(fault: str | None = None, seed: int = 12345) -> list[Check]:
    rng = np.random.default_rng(seed)
    out = []
    with inject_fault(fault):
        for name, fn in CHECKS:
            t = time.perf_counter()
            try:
                ok, detail = fn(rng) if fn.__code__.co_argcount else fn()
            except Exception as err:  # a crash is a failed check, not an abort
                ok, detail = False, f"{type(err).__name__}: {err}"
            out.append(Check(name, bool(ok), detail, time.perf_counter() - t))
    return out


def format_table(checks: list[Check]) -> str:
    width = max(len(c.name) for c in checks)
    lines = [f"{'check':<{width}}  result  seconds  detail"]
    for c in checks:
        lines.append(f"{c.name:<{width}}  {'PASS' if c.passed else 'FAIL':<6}  {c.seconds:7.2f}  {c.detail}")
    return "\n".join(lines)
