"""Acceptance criteria 1-12, one PASS/FAIL line each.

Criteria 6-11 read the desk-scale runs produced by the command line tool.
They are started with ``--resume`` in ``--runs-dir`` (default ``runs/`` at
the repository root), so a directory that already holds finished runs is
reused and a missing one is computed from scratch (hours for 10 and 11).
"""

import math
import os
from pathlib import Path

import numpy as np
import pytest

from casimir_lattice import cli, operators
from casimir_lattice.experiments import fit_power_law, local_slopes, run_crossover_sweep
from casimir_lattice.lattice import Lattice
from casimir_lattice.linalg import SchurPlan, factorize, perturbed_logdet_family, schur_complement
from casimir_lattice.materials import DielectricModel, MaterialMap
from casimir_lattice.oracle import dense_logdet
from casimir_lattice.quadrature import build_grid, select_alpha
from casimir_lattice.scenes import particle_links

from conftest import random_eps_map

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def runs_dir(request):
    d = request.config.getoption("--runs-dir") or os.environ.get("CASIMIR_RUNS_DIR") or ROOT / "runs"
    return Path(d)


def desk_run(runs_dir, experiment):
    out = runs_dir / experiment
    code = cli.main([experiment, "--config", str(ROOT / "configs" / f"desk_{experiment}.ini"),
                     "--out", str(out), "--threads", "1", "--resume"])
    assert code == cli.EXIT_OK, (out / "error.json").read_text() if (out / "error.json").exists() else code
    return out


def read_table(path):
    rows = [line.split(",") for line in path.read_text().splitlines() if not line.startswith("#")]
    names, data = rows[0], np.array(rows[1:], dtype=float).reshape(len(rows) - 1, len(rows[0]))
    return {n: data[:, i] for i, n in enumerate(names)}


# ------------------------------------------------------------- exact algebra


def test_c01_operator_counts(criterion):
    rng = np.random.default_rng(1)
    bad, seen = [], []
    for _ in range(6):
        e3 = tuple(int(x) for x in rng.integers(4, 9, 3))
        e2 = tuple(int(x) for x in rng.integers(4, 9, 2))
        lat3, lat2 = Lattice(e3), Lattice(e2)
        curl = operators.assemble_curl(lat3).matrix
        cc = (curl.T @ curl).tocsr()
        cc.eliminate_zeros()
        vac = MaterialMap.vacuum(lat2)
        got = [(curl.nnz, 12 * lat3.n_sites), (cc.nnz, 39 * lat3.n_sites),
               (operators.assemble_DA(lat2, vac, 0.7).nnz, 14 * lat2.n_sites),
               (operators.assemble_DG(lat2, vac, 0.7).nnz, 5 * lat2.n_sites)]
        bad += [(e3, e2, g) for g in got if g[0] != g[1]]
        seen.append((e3, e2))
    ok = criterion(1, not bad, f"12V/39V/14V/5V exact on {len(seen)} random extent pairs in 4..8; mismatches {bad}")
    assert ok


def test_c02_adjoint_and_gauge(criterion):
    rng = np.random.default_rng(2)
    worst_adj, worst_gauge = 0, 0.0
    for _ in range(4):
        for dim in (2, 3):
            lat = Lattice(tuple(int(x) for x in rng.integers(4, 9, dim)))
            c = operators.assemble_curl(lat).matrix
            cs = operators.assemble_curl_star(lat).matrix
            worst_adj = max(worst_adj, (cs != c.T).nnz)
            worst_gauge = max(worst_gauge, float(abs(c @ operators.assemble_gradient(lat).matrix).max()))
    ok = criterion(2, worst_adj == 0 and worst_gauge == 0.0,
                   f"entries where curl* != curl^T: {worst_adj}; max |curl grad| = {worst_gauge}")
    assert ok


def test_c03_sparse_vs_dense_logdet(criterion):
    rng = np.random.default_rng(3)
    worst, trials = 0.0, 0
    for lat in (Lattice.square(8), Lattice.cube(4)):
        for kind in ("DA", "DG"):
            for _ in range(20):
                A = operators.assemble(kind, random_eps_map(lat, rng), float(rng.uniform(0.05, 2.0)))
                ref = dense_logdet(A)
                for method in ("simplicial", "supernodal"):
                    worst = max(worst, abs(factorize(A, method=method).logdet() - ref) / abs(ref))
                trials += 1
    ok = criterion(3, worst < 1e-8, f"{trials} random trials (8x8, 4^3; DA, DG), max relative error {worst:.1e}")
    assert ok


def test_c04_schur_identity_and_three_level(criterion):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(20):
        lat = Lattice.square(int(rng.integers(4, 11)))
        kind = str(rng.choice(["DA", "DG"]))
        A = operators.assemble(kind, random_eps_map(lat, rng), float(rng.uniform(0.05, 2.0)))
        n = A.shape[0]
        assert n <= 200
        z = rng.choice(n, size=int(rng.integers(1, n // 2)), replace=False)
        fx, S = schur_complement(A, SchurPlan(n, z))
        ref = dense_logdet(A)
        worst = max(worst, abs(fx.logdet() + np.linalg.slogdet(S)[1] - ref) / abs(ref))

    lat = Lattice.square(12)
    model = DielectricModel.constant(8.0)
    bg = MaterialMap.vacuum(lat).assign(particle_links(lat, (0, 0)), model)
    spots = [(2, 2), (3, 3), (4, 4), (6, 6), (3, 7)]
    worst3 = 0.0
    for kind in ("DG", "DA"):
        for omega in (0.05, 0.5, 2.0):
            A = operators.assemble(kind, bg, omega)
            subs = {p: operators.dofs_touching_links(lat, kind, particle_links(lat, p)) for p in spots}
            plan = SchurPlan.from_subsets(A.shape[0], subs)
            _, S = schur_complement(A, plan)
            perts, local, direct = [], [], []
            for p in spots:
                B = operators.assemble(kind, bg.assign(particle_links(lat, p), model), omega)
                perts.append(plan.restrict(B.matrix - A.matrix))
                local.append(plan.local(subs[p]))
                direct.append(dense_logdet(B))
            got = np.asarray(perturbed_logdet_family(S, perts, local))
            worst3 = max(worst3, float(np.max(np.abs((got - got[-1]) - (np.array(direct) - direct[-1])))))
    ok = criterion(4, worst < 1e-8 and worst3 < 1e-9,
                   f"Schur split relative error {worst:.1e} (20 partitions, n <= 200); "
                   f"three-level vs dense differences {worst3:.1e} (L = 12)")
    assert ok


# --------------------------------------------------------- small physics


def test_c05_da_dg_equivalence(criterion):
    L = 48
    offsets_rmax = 12.0
    r_mid = math.sqrt(4 * offsets_rmax)
    grid = build_grid(select_alpha(r_mid), 20)
    curves = {k: run_crossover_sweep(L, [None], grid=grid, kind=k, r_max=offsets_rmax)[None] for k in ("DA", "DG")}
    rel = np.abs(curves["DA"].U / curves["DG"].U - 1)
    ok = criterion(5, float(rel.max()) < 0.01,
                   f"L = 48, N_g = 20, r = {np.round(curves['DG'].r, 2).tolist()}: "
                   f"max |U_DA / U_DG - 1| = {rel.max():.1e}")
    assert ok


def test_c12_quadrature_robustness(criterion):
    L = 64
    a0 = select_alpha(math.sqrt(4 * L / 5))
    d_alpha = d_nodes = 0.0
    for w0 in (None, 0.03):
        U = {}
        for a, n in ((a0, 25), (a0 / 2, 25), (2 * a0, 25), (a0, 40)):
            U[(a, n)] = run_crossover_sweep(L, [w0], grid=build_grid(a, n))[w0].U
        base = U[(a0, 25)]
        d_alpha = max([d_alpha] + [float(np.max(np.abs(U[(a, 25)] / base - 1))) for a in (a0 / 2, 2 * a0)])
        d_nodes = max(d_nodes, float(np.max(np.abs(U[(a0, 40)] / base - 1))))
    ok = criterion(12, d_alpha < 0.01 and d_nodes < 0.005,
                   f"L = 64 pair (constant and omega0 = 0.03): alpha x0.5/x2 changes U by {d_alpha:.1e} "
                   f"(< 1e-2); N_g 25 vs 40 by {d_nodes:.1e} (< 5e-3)")
    assert ok


# ----------------------------------------------------- desk-scale runs


@pytest.fixture(scope="module")
def crossover(runs_dir):
    out = desk_run(runs_dir, "crossover2d")
    return {name: read_table(out / f"crossover_omega0_{name}.csv") for name in ("inf", "0.03", "0.003")}


def test_c06_retarded_exponent(crossover, criterion):
    t = crossover["inf"]
    f = fit_power_law(t["r"], -t["U"], (8, 40))
    ok = criterion(6, abs(f.exponent + 5) <= 0.3,
                   f"constant eps = 8, L = 256, r in [8, 40]: exponent {f.exponent:.3f} +- {f.stderr:.3f} (target -5 +- 0.3)")
    assert ok


def test_c07_nonretarded_exponent(crossover, criterion):
    t = crossover["0.003"]
    f = fit_power_law(t["r"], -t["U"], (8, 40))
    ok = criterion(7, abs(f.exponent + 4) <= 0.3,
                   f"single pole omega0/c = 0.003, r in [8, 40]: exponent {f.exponent:.3f} +- {f.stderr:.3f} (target -4 +- 0.3)")
    assert ok


def test_c08_crossover_visible(crossover, criterion):
    # log-slope of -U r^5 is 1 in the linear (non-retarded) rise and 0 once flat
    # (retarded); the two limiting curves calibrate both levels on this lattice
    slope = {k: local_slopes(t["r"], t["U_scaled"]) for k, t in crossover.items()}
    rise, flat = float(np.mean(slope["0.003"])), float(np.mean(slope["inf"]))
    mid = 0.5 * (rise + flat)
    s = slope["0.03"]
    starts_rising = s[0] > mid + 0.5 * (rise - mid)
    crosses = s[-1] < mid
    decreasing = bool(np.all(np.diff(s) < 0.02))
    ok = criterion(8, bool(starts_rising and crosses and decreasing),
                   f"omega0/c = 0.03: log-slopes of -U r^5 {np.round(s, 2).tolist()} fall from the linear "
                   f"rise ({rise:.2f}) through the midpoint {mid:.2f} towards flat ({flat:.2f})")
    assert ok


def test_c09_flat_surface_exponent(runs_dir, criterion):
    t = read_table(desk_run(runs_dir, "flat2d") / "flat_curve.csv")
    f = fit_power_law(t["r"], -t["U"], (8, 32))
    ok = criterion(9, abs(f.exponent + 3) <= 0.3,
                   f"flat half-space, L = 256, r in [8, 32]: exponent {f.exponent:.3f} +- {f.stderr:.3f} (target -3 +- 0.3)")
    assert ok


@pytest.mark.slow
def test_c10_roughness_scalings(runs_dir, criterion):
    out = desk_run(runs_dir, "rough2d")
    t = read_table(out / "rough_aggregate.csv")
    n = int(next(line for line in (out / "rough_aggregate.csv").read_text().splitlines()
                 if line.startswith("# realizations=")).split("=")[1])
    fs = fit_power_law(t["r"], t["sigma"], (8, 32))
    fd = fit_power_law(t["r"], t["deltaU"], (8, 32))
    ok = criterion(10, n >= 100 and abs(fs.exponent + 3.5) <= 0.5 and abs(fd.exponent + 4) <= 0.7,
                   f"L = 256, {n} realizations, r in [8, 32]: sigma_u exponent {fs.exponent:.2f} "
                   f"(target -3.5 +- 0.5), deltaU exponent {fd.exponent:.2f} (target -4 +- 0.7)")
    assert ok


@pytest.mark.slow
def test_c11_torque_properties(runs_dir, criterion):
    t = read_table(desk_run(runs_dir, "torque3d") / "torque_curve.csv")
    theta, U = t["theta"], t["U"]
    at = {round(a / (math.pi / 8)): u for a, u in zip(theta, U)}
    zero = at[0] == 0.0
    period = all(at[k] == at[k + 8] for k in range(8) if k + 8 in at)
    mirror = max(abs(at[k] - at[8 - k]) / abs(at[k]) for k in range(1, 8) if k != 4)
    rise = [at[k] for k in range(0, 5)]
    monotone = bool(np.all(np.diff(rise) > 0))
    ok = criterion(11, zero and period and mirror < 0.1 and monotone,
                   f"25^3, d = 16: U(0) = {at[0]}, U(theta + pi) == U(theta) {period}, "
                   f"max |U(theta) - U(pi - theta)| / |U| = {mirror:.1e}, rise on [0, pi/2] "
                   f"{', '.join(f'{u:.2e}' for u in rise)}")
    assert ok
