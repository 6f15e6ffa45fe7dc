"""Acceptance suite: one PASS/FAIL line per criterion, printed to the terminal.

Reference iteration counts below are the published table values.  Averages
are compared unrounded, which is never looser than comparing rounded values.
"""

from __future__ import annotations

import numpy as np
import pytest
import scipy.linalg

from tfmg.fastlinalg import (
    BTTBDescriptor, CirculantDescriptor, ToeplitzDescriptor, bttb_matvec, circulant_solve,
    materialize_dense, toeplitz_matvec,
)
from tfmg.krylov import build_preconditioner
from tfmg.multigrid import CycleConfig, TransferOp, build_hierarchy, prolongation_1d
from tfmg.problems import (
    SolverConfig, consistency_order, example, run, run_experiment, table_plans,
)
from tfmg.stencil import (
    DiffusionField1D, DiffusionField2D, Grid1D, boundary_rhs, cn_operator, make_params,
    operator_2d, tempered_stencil,
)
from tfmg.symbol import f_symbol, omega_star, partial_symbol, stability_check, szego_sampling_check

# (lambda, alpha) -> rows for M = 2^6..2^9, columns omega = 0.5..0.9, omega*
TABLE1 = {
    (0, 1.2): [[7, 6, 5, 4, 4, 4], [6, 5, 4, 4, 4, 3], [6, 5, 4, 3, 4, 3], [5, 4, 4, 3, 3, 3]],
    (0, 1.5): [[8, 6, 5, 6, 9, 6], [7, 6, 5, 6, 9, 6], [7, 6, 5, 6, 8, 6], [6, 6, 5, 5, 8, 5]],
    (0, 1.8): [[11, 8, 8, 11, 19, 8], [10, 8, 7, 11, 18, 7], [10, 8, 7, 10, 18, 7],
               [9, 7, 7, 10, 17, 7]],
    (2, 1.2): [[7, 5, 5, 4, 4, 4], [6, 5, 4, 4, 4, 3], [6, 5, 4, 3, 4, 3], [5, 4, 4, 3, 3, 3]],
    (2, 1.5): [[8, 7, 5, 6, 9, 6], [7, 6, 5, 6, 9, 6], [6, 5, 5, 6, 8, 6], [6, 5, 5, 5, 8, 5]],
    (2, 1.8): [[11, 9, 8, 11, 19, 8], [10, 8, 7, 11, 19, 7], [10, 8, 7, 10, 18, 7],
               [9, 7, 7, 10, 17, 7]],
    (10, 1.2): [[7, 5, 4, 4, 5, 5], [6, 5, 4, 3, 4, 4], [5, 4, 4, 3, 4, 3], [5, 4, 3, 3, 3, 3]],
    (10, 1.5): [[9, 7, 6, 8, 11, 7], [8, 6, 5, 7, 10, 7], [7, 5, 5, 6, 9, 6], [6, 5, 4, 6, 8, 6]],
    (10, 1.8): [[11, 9, 8, 12, 21, 8], [10, 8, 7, 11, 20, 8], [10, 8, 7, 11, 18, 7],
                [9, 7, 7, 10, 17, 7]],
}

# column -> (solver config, tolerance); tolerance < 1 is relative
TABLE2_COLUMNS = {
    "CG": (SolverConfig("cg"), 0.10),
    "V(1,1) w=0.8": (SolverConfig("mg", omega=0.8), 1),
    "V(1,1) w*": (SolverConfig("mg"), 1),
    "V(0,1) w*": (SolverConfig("mg", nu1=0, nu2=1), 2),
    "PV(1,1) w*": (SolverConfig("cg", "mg:1,1"), 1),
    "P_C": (SolverConfig("cg", "circulant"), 2),
    "P_2": (SolverConfig("cg", "laplacian"), 3),
}
TABLE2_M1024 = {
    1.4: {"CG": 322, "V(1,1) w=0.8": 9, "V(1,1) w*": 9, "V(0,1) w*": 13, "PV(1,1) w*": 6,
          "P_C": 17, "P_2": 35},
    1.7: {"CG": 603, "V(1,1) w=0.8": 11, "V(1,1) w*": 10, "V(0,1) w*": 14, "PV(1,1) w*": 6,
          "P_C": 24, "P_2": 19},
    1.9: {"CG": 891, "V(1,1) w=0.8": 14, "V(1,1) w*": 11, "V(0,1) w*": 15, "PV(1,1) w*": 7,
          "P_C": 32, "P_2": 10},
}

TABLE3_COLUMNS = {
    "GMRES": (SolverConfig("gmres"), 0.10),
    "V(1,1)": (SolverConfig("mg"), 2),
    "V(0,1)": (SolverConfig("mg", nu1=0, nu2=1), 2),
    "PV(1,1)": (SolverConfig("gmres", "mg:1,1"), 1),
    "PV(0,1)": (SolverConfig("gmres", "mg:0,1"), 1),
    "P_C": (SolverConfig("gmres", "circulant"), 2),
    "P_2": (SolverConfig("gmres", "laplacian"), 1),
}
TABLE3_M1024 = {
    1.4: {"GMRES": 567, "V(1,1)": 9, "V(0,1)": 13, "PV(1,1)": 4, "PV(0,1)": 6, "P_C": 16,
          "P_2": 22},
    1.7: {"GMRES": 761, "V(1,1)": 9, "V(0,1)": 14, "PV(1,1)": 4, "PV(0,1)": 6, "P_C": 22,
          "P_2": 12},
    1.9: {"GMRES": 944, "V(1,1)": 11, "V(0,1)": 15, "PV(1,1)": 4, "PV(0,1)": 7, "P_C": 27,
          "P_2": 6},
}

# 2D columns in the order of table_plans(4 or 5)
COLS_2D = ("GMRES", "P~2", "P2^1", "P2^2", "P~V(1,1)", "PV(1,1)", "P_C")
TOL_2D = (0.10, 1, 2, 2, 2, 2, 2)
TABLE4 = {
    (0.0, 16): (38, 9, 14, 11, 8, 8, 16), (0.0, 32): (74, 9, 16, 13, 9, 9, 22),
    (1.0, 16): (41, 7, 14, 10, 8, 9, 17), (1.0, 32): (76, 7, 15, 12, 9, 9, 21),
    (5.0, 16): (42, 7, 14, 10, 8, 12, 17), (5.0, 32): (81, 6, 15, 10, 9, 13, 21),
}
TABLE5 = {
    (0.0, 16): (38, 10, 14, 12, 8, 8, 13), (0.0, 32): (60, 10, 15, 12, 8, 9, 15),
    (1.0, 16): (35, 8, 13, 10, 8, 8, 13), (1.0, 32): (54, 7, 14, 11, 8, 8, 15),
    (5.0, 16): (30, 7, 13, 9, 7, 8, 12), (5.0, 32): (43, 7, 12, 9, 7, 8, 13),
}


@pytest.fixture
def report(capsys):
    def emit(n: int, ok: bool, detail: str, extra: list[str] = ()):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}")
            for line in extra:
                print(f"    {line}")
    return emit


def within(got: float, ref: float, tol: float) -> bool:
    return abs(got - ref) <= (tol * ref if tol < 1 else tol)


def compare(label: str, got: float | None, ref: float, tol: float, misses: list[str]):
    if got is None or not within(got, ref, tol):
        t = f"{tol:.0%}" if tol < 1 else f"{tol}"
        misses.append(f"{label}: got {got}, reference {ref} (tol {t})")


@pytest.mark.slow
def test_criterion_1_table1(report):
    (plan,) = table_plans(1)
    rows = run_experiment(plan)
    sizes = (64, 128, 256, 512)
    omegas = (0.5, 0.6, 0.7, 0.8, 0.9, None)
    misses, worst = [], 0.0
    for r, rs in zip(rows, plan.runs()):
        ref = TABLE1[(int(rs.lam), rs.alpha)][sizes.index(rs.M)][omegas.index(rs.omega)]
        label = f"lambda={rs.lam:g} alpha={rs.alpha} M={rs.M} omega={rs.omega or 'w*'}"
        if r.avg_iters is not None:
            worst = max(worst, abs(r.avg_iters - ref))
        compare(label, r.avg_iters, ref, 1, misses)
    ok = not misses
    report(1, ok, f"{len(rows) - len(misses)}/{len(rows)} cells within +-1 "
                  f"(largest deviation {worst:g})", misses)
    assert ok


def run_columns(problem: int, alpha: float, columns: dict, refs: dict, misses: list[str],
                lines: list[str]):
    spec = example(problem, alpha=alpha, M=1024)
    got = {}
    for name, (cfg, tol) in columns.items():
        got[name] = run(spec, cfg).avg_iterations
        compare(f"alpha={alpha} {name}", got[name], refs[name], tol, misses)
    lines.append(f"alpha={alpha}: " + ", ".join(f"{k} {v:g}/{refs[k]}" for k, v in got.items()))


def test_criterion_2_table2(report):
    misses, lines = [], []
    for alpha, refs in TABLE2_M1024.items():
        run_columns(2, alpha, TABLE2_COLUMNS, refs, misses, lines)
    report(2, not misses, "Example 2, M=2^10 (got/reference)", lines + misses)
    assert not misses


def test_criterion_3_table3(report):
    misses, lines = [], []
    for alpha, refs in TABLE3_M1024.items():
        run_columns(3, alpha, TABLE3_COLUMNS, refs, misses, lines)
    report(3, not misses, "Example 3, M=2^10 (got/reference)", lines + misses)
    assert not misses


def run_2d(table: int, refs: dict):
    (plan,) = table_plans(table, sizes=(16, 32))
    rows = run_experiment(plan)
    cells = {}
    for r in rows:
        cells.setdefault((r.lam, r.M), []).append(r)
    out = {}
    for key, ref in refs.items():
        misses = []
        for name, tol, r, v in zip(COLS_2D, TOL_2D, cells[key], ref):
            compare(f"lambda={key[0]:g} N={key[1]} {name}", r.avg_iters, v, tol, misses)
        out[key] = (cells[key], misses)
    return out


def describe(key, rows, ref):
    got = ", ".join(f"{n} {r.avg_iters:g}/{v}" for n, r, v in zip(COLS_2D, rows, ref))
    return f"lambda={key[0]:g} N={key[1]}: {got}"


def test_criterion_4_table4(report):
    cells = run_2d(4, TABLE4)
    gating = [(1.0, 16), (1.0, 32)]
    misses = [m for k in gating for m in cells[k][1]]
    gmres_cpu = cells[(1.0, 32)][0][0].cpu_seconds
    mg_cpu = cells[(1.0, 32)][0][4].cpu_seconds
    faster = mg_cpu < gmres_cpu
    if not faster:
        misses.append(f"PV(1,1) cpu {mg_cpu:.3f}s not below GMRES cpu {gmres_cpu:.3f}s")
    lines = [describe(k, cells[k][0], TABLE4[k]) for k in gating]
    lines.append(f"cpu at N=2^5: GMRES {gmres_cpu:.3f}s, PV(1,1) {mg_cpu:.3f}s")
    other = [m for k in TABLE4 if k not in gating for m in cells[k][1]]
    lines.append(f"other lambda rows (not gating): {len(other)} cells outside tolerance")
    lines += [f"  {m}" for m in other]
    report(4, not misses, "Example 4, lambda=1, N in {2^4, 2^5}", lines + misses)
    assert not misses


def test_criterion_5_table5(report):
    cells = run_2d(5, TABLE5)
    key = (5.0, 16)
    rows, _ = cells[key]
    ref = TABLE5[key]
    misses = []
    for idx in (0, 1, 6, 5):  # GMRES, P~2, P_C, PV(1,1)
        compare(f"{COLS_2D[idx]}", rows[idx].avg_iters, ref[idx], TOL_2D[idx], misses)
    lines = [describe(key, rows, ref)]
    other = [m for k in TABLE5 if k != key for m in cells[k][1]]
    lines.append(f"remaining desk-scale cells (not gating): {len(other)} outside tolerance")
    lines += [f"  {m}" for m in other]
    report(5, not misses, "Example 5, lambda=5, N=2^4", lines + misses)
    assert not misses


def test_criterion_6_omega_star(report):
    one = [round(omega_star(a, 0.01), 2) for a in (1.2, 1.5, 1.8)]
    two = [round(omega_star(a, 0.00235), 2) for a in (1.4, 1.7, 1.9)]
    w2 = omega_star(1.8, 0.0235, 1.6)
    ok = one == [0.85, 0.79, 0.71] and two == [0.85, 0.75, 0.69] and round(w2, 4) == 0.8507
    report(6, ok, f"1D {one} {two}, 2D {w2:.6f}")
    assert ok


def test_criterion_7_consistency(report):
    slopes = {}
    for alpha in (1.2, 1.5, 1.8):
        for lam in (0.0, 2.0):
            for g3 in (0.0, 0.01):
                for side in ("left", "right"):
                    slopes[(alpha, lam, g3, side)] = consistency_order(
                        make_params(alpha, g3, lam), side)[0]
    lo, hi = min(slopes.values()), max(slopes.values())
    ok = 1.9 <= lo and hi <= 2.1
    report(7, ok, f"{len(slopes)} cases, observed order in [{lo:.4f}, {hi:.4f}]")
    assert ok


def test_criterion_8_stability(report):
    radii = {}
    for alpha in (1.2, 1.5, 1.8):
        for lam in (0.0, 2.0, 10.0):
            radii[(alpha, lam)] = stability_check(make_params(alpha, 0.01, lam),
                                                  Grid1D(0, 1, 64), 1 / 64)
    worst = max(radii.values())
    ok = worst < 1
    report(8, ok, f"max spectral radius {worst:.6f} over {len(radii)} cases at M=64")
    assert ok


def test_criterion_9_symbol(report):
    x = np.linspace(-np.pi, np.pi, 4096)
    sign_ok = True
    for alpha in np.round(np.arange(1.1, 2.0, 0.1), 1):
        for g3 in (0.0, 0.00235, 0.01, 0.0235):
            if not make_params(float(alpha), g3, 0.0, warn=False).valid:
                continue
            f = f_symbol(float(alpha), g3, x)
            sign_ok &= bool(np.all(f < 0)) and f_symbol(float(alpha), g3, 0.0) == 0.0
    p = make_params(1.5, 0.01, 2.0)
    xs = np.linspace(-np.pi, np.pi, 2001)
    ref = f_symbol(1.5, 0.01, xs)
    sup = [float(np.max(np.abs(partial_symbol(p, 1e-9, M, xs) - ref)))
           for M in (500, 1000, 5000)]
    sz = [szego_sampling_check(make_params(1.5, 0.01, 0.0), M) for M in (64, 256)]
    ok = sign_ok and sup[0] > sup[1] > sup[2] and sz[0] > sz[1]
    report(9, ok, f"sign ok={sign_ok}; partial-sum sup errors "
                  f"{', '.join(f'{e:.2e}' for e in sup)}; Szego deviation {sz[0]:.4f} -> {sz[1]:.4f}")
    assert ok


def rel(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def dense_B(params, h, M):
    """Entry-by-entry stencil matrix, independent of the Toeplitz descriptor."""
    st_ = tempered_stencil(params, h, M + 1)
    i, j = np.indices((M, M))
    k = i - j + 1
    B = np.where(k >= 0, st_.g[np.clip(k, 0, M)], 0.0)
    return B - st_.phi * np.eye(M)


def dense_H(M):
    return np.eye(M, k=1) - np.eye(M, k=-1)


def chan_dense(T):
    """Optimal circulant first column from diagonal averages of a dense Toeplitz."""
    n = T.shape[0]
    return np.array([np.trace(T) / n if k == 0 else (np.trace(T, -k) + np.trace(T, n - k)) / n
                     for k in range(n)])


def test_criterion_10_structured_oracles(report):
    rng = np.random.default_rng(10)
    errs = {}
    M = 256
    col, row = rng.standard_normal(M), rng.standard_normal(M)
    row[0] = col[0]
    v = rng.standard_normal(M)
    errs["toeplitz matvec"] = rel(toeplitz_matvec(ToeplitzDescriptor(col, row), v),
                                  scipy.linalg.toeplitz(col, row) @ v)
    c = rng.standard_normal(M)
    c[0] += 20
    errs["circulant solve"] = rel(circulant_solve(CirculantDescriptor(c), v),
                                  np.linalg.solve(scipy.linalg.circulant(c), v))
    coeffs = rng.standard_normal((31, 31))
    u = rng.standard_normal(256)
    i1, i2 = np.meshgrid(np.arange(16), np.arange(16))
    i1, i2 = i1.ravel(), i2.ravel()
    Bd = coeffs[i1[:, None] - i1[None, :] + 15, i2[:, None] - i2[None, :] + 15]
    errs["BTTB matvec"] = rel(bttb_matvec(BTTBDescriptor(coeffs, 16, 16), u), Bd @ u)

    grid = Grid1D(0, 1, M)
    p = make_params(1.6, 0.01, 2.0)
    x = grid.interior
    cl, cr = 1 + x, 2 - x
    op = cn_operator(p, grid, 1 / 256, DiffusionField1D(lambda x: 1 + x, lambda x: 2 - x))
    B = dense_B(p, grid.h, M)
    A = np.eye(M) - op.diff_scale * (np.diag(cl) @ B + np.diag(cr) @ B.T) \
        + op.adv_scale * np.diag(cl - cr) @ dense_H(M)
    errs["1D operator"] = rel(materialize_dense(op), A)
    P = prolongation_1d(M).toarray()
    gal = build_hierarchy(op, CycleConfig(min_size=M // 2), "galerkin").levels[1].op.A
    errs["1D Galerkin RAP"] = rel(gal, P.T @ A @ P)

    const = cn_operator(p, grid, 1 / 256, DiffusionField1D(0.3, 0.7))
    Ac = materialize_dense(const)
    Pc = scipy.linalg.circulant(chan_dense(Ac))
    errs["1D circulant preconditioner"] = rel(build_preconditioner("circulant", const)
                                              .apply(Pc @ v), v)

    st_ = tempered_stencil(p, grid.h, M + 3)
    Bext = dense_B(p, grid.h, M + 2)
    ghosts = np.zeros(M + 2)
    ghosts[0], ghosts[-1] = 0.4, -0.9
    expect = op.diff_scale * (cl * (Bext @ ghosts)[1:-1] + cr * (Bext.T @ ghosts)[1:-1]) \
        - op.adv_scale * (cl - cr) * (dense_H(M + 2) @ ghosts)[1:-1]
    errs["boundary vector"] = rel(boundary_rhs(st_, grid, (cl, cr), 0.4, -0.9, op.diff_scale,
                                               op.adv_scale), expect)

    fields = DiffusionField2D(lambda x, y: 1 + x * y, lambda x, y: 2 - y, lambda x, y: 1 + x,
                              lambda x, y: 0.5 + y ** 2)
    op2 = operator_2d(make_params(1.8, 0.0235, 1.0), make_params(1.6, 0.0235, 5.0),
                      Grid1D(0, 1, 16), Grid1D(0, 1, 16), 0.05, fields)
    Bx, By = dense_B(op2.px, op2.gx.h, 16), dense_B(op2.py, op2.gy.h, 16)
    I, H16 = np.eye(16), dense_H(16)
    Cl, Cr, El, Er = (np.diag(cc.ravel()) for cc in op2.coeffs)
    A2 = np.eye(256) - op2.r1 * (Cl @ np.kron(I, Bx) + Cr @ np.kron(I, Bx.T)) \
        + op2.s1 * (Cl - Cr) @ np.kron(I, H16) \
        - op2.r2 * (El @ np.kron(By, I) + Er @ np.kron(By.T, I)) \
        + op2.s2 * (El - Er) @ np.kron(H16, I)
    errs["2D operator"] = rel(materialize_dense(op2), A2)
    P2 = TransferOp.build((16, 16)).P.toarray()
    gal2 = build_hierarchy(op2, CycleConfig(min_size=64), "galerkin").levels[1].op.A
    errs["2D Galerkin RAP"] = rel(gal2, P2.T @ A2 @ P2)

    c2 = example(5, lam=5.0, M=16).operator()
    cl2, cr2, el2, er2 = (float(np.mean(cc)) for cc in c2.coeffs)
    Cx = scipy.linalg.circulant(chan_dense(dense_B(c2.px, c2.gx.h, 16)))
    Cy = scipy.linalg.circulant(chan_dense(dense_B(c2.py, c2.gy.h, 16)))
    Hc = scipy.linalg.circulant(chan_dense(H16))
    Px = c2.r1 * (cl2 * Cx + cr2 * Cx.T) - c2.s1 * (cl2 - cr2) * Hc
    Py = c2.r2 * (el2 * Cy + er2 * Cy.T) - c2.s2 * (el2 - er2) * Hc
    Pcirc = np.eye(256) - np.kron(I, Px) - np.kron(Py, I)
    errs["2D circulant preconditioner"] = rel(build_preconditioner("circulant", c2)
                                              .apply(Pcirc @ u), u)

    worst = max(errs.values())
    ok = worst <= 1e-12
    report(10, ok, f"largest relative deviation {worst:.2e}",
           [f"{k}: {e:.2e}" for k, e in errs.items()])
    assert ok
