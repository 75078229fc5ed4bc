"""Acceptance criteria, one recorded pass/fail line each.

Run under pytest (lines are echoed in the terminal summary) or directly
with ``python tests/test_acceptance.py``.
"""
import math
import sys
import time
from pathlib import Path

import numpy as np
import scipy.linalg as la
import scipy.optimize as so

sys.path.insert(0, str(Path(__file__).parent))

import conftest  # noqa: E402
from conftest import lti2_plant, random_states, schur_instance  # noqa: E402
from lpvp.cr3bp import Cr3bpConfig, build_scenario, dynamics, lpv_matrices, measurement, rho_of_state  # noqa: E402
from lpvp.simulation import NoiseSpec, initial_estimate, metrics, simulate  # noqa: E402
from lpvp.synthesis import (SynthesisRequest, min_feasible_gamma, noise_angle,  # noqa: E402
                            synthesize)
from lpvp.verify import certify, freq_response, h2_norm, hinf_norm  # noqa: E402

GAMMA = 0.1
REFERENCE_ANGLES = {"h2": 2.6, "hinf": 6.3}
_cache = {}


def record(number, title, passed, detail, elapsed, budget=None):
    within = budget is None or elapsed < budget
    ok = bool(passed and within)
    limit = f" (limit {budget:g} s)" if budget is not None else ""
    line = f"[{'PASS' if ok else 'FAIL'}] {number}. {title}: {detail}; {elapsed:.2f} s{limit}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def cr3bp_designs():
    """Scenario plus both gamma=0.1, p=1 designs, with the synthesis wall time."""
    if not _cache:
        scen = build_scenario()
        t0 = time.perf_counter()
        res = {n: synthesize(SynthesisRequest(scen.plant, n, GAMMA, p=1)) for n in ("h2", "hinf")}
        _cache.update(scenario=scen, results=res, elapsed=time.perf_counter() - t0)
    return _cache["scenario"], _cache["results"], _cache["elapsed"]


def test_1_exact_embedding():
    states = random_states(1000, seed=3)
    t0 = time.perf_counter()
    worst = 0.0
    for s in states:
        A, b, C, d = lpv_matrices(rho_of_state(s).rho)
        worst = max(worst, np.linalg.norm(A @ s + b[:, 0] - dynamics(s)),
                    np.linalg.norm(C @ s + d[:, 0] - measurement(s)))
    el = time.perf_counter() - t0
    assert record(1, "exact embedding", worst <= 1e-12,
                  f"max residual {worst:.2e} over 1000 states (tol 1e-12)", el, 1.0)


def _random_stable(rng):
    A = rng.standard_normal((4, 4))
    A -= (np.max(np.linalg.eigvals(A).real) + rng.uniform(0.1, 1.0)) * np.eye(4)
    return A, rng.standard_normal((4, 2)), rng.standard_normal((2, 4))


def test_2_norm_oracles():
    t0 = time.perf_counter()
    e_h2 = abs(h2_norm(-1, 1, 1) - math.sqrt(0.5))
    e_hinf = abs(hinf_norm(-1, 1, 1) - 1.0)
    rng = np.random.default_rng(11)
    w = np.concatenate([[0.0], np.logspace(-4, 4, 10_000)])
    worst = 0.0
    for _ in range(20):
        A, B, C = _random_stable(rng)
        exact = hinf_norm(A, B, C)
        worst = max(worst, abs(exact - freq_response(A, B, C, None, w).max()) / exact)
    el = time.perf_counter() - t0
    ok = e_h2 <= 1e-10 and e_hinf <= 1e-6 and worst <= 1e-4
    assert record(2, "norm oracles", ok,
                  f"|h2 - sqrt(0.5)| {e_h2:.1e}, |hinf - 1| {e_hinf:.1e}, "
                  f"grid mismatch {worst:.1e} on 20 systems", el, 5.0)


def test_3_schur_equivalence():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    agree = neg = 0
    for _ in range(1000):
        M11, U, R = schur_instance(rng)
        reduced = np.linalg.eigvalsh(M11 + U @ R @ U.T)[-1] < 0
        big = np.block([[M11, U], [U.T, -np.linalg.inv(R)]])
        agree += reduced == (np.linalg.eigvalsh(big)[-1] < 0)
        neg += reduced
    el = time.perf_counter() - t0
    assert record(3, "Schur equivalence", agree == 1000,
                  f"{agree}/1000 agree ({neg} negative definite)", el, 5.0)


def _reference_norms(plant, beta_max):
    """Fixed-precision optimal estimation norms with ``S_n = I/sqrt(beta_max)``."""
    A, Bd, C, Cz = (plant.at([0.0])[k] for k in ("A", "B_d", "C_y", "C_z"))
    Sn = np.eye(C.shape[0]) / math.sqrt(beta_max)
    R = Sn @ Sn.T
    P = la.solve_continuous_are(A.T, C.T, Bd @ Bd.T, R)
    L_k = -P @ C.T @ np.linalg.inv(R)
    h2 = math.sqrt(np.trace(Cz @ P @ Cz.T))

    def peak(v):
        L = v.reshape(L_k.shape)
        try:
            return hinf_norm(A + L @ C, np.hstack([Bd, L @ Sn]), Cz)
        except ValueError:
            return 1e6

    starts = [L_k.ravel(), -np.ones(L_k.size), -3 * np.eye(*L_k.shape).ravel()]
    opts = dict(xatol=1e-8, fatol=1e-10, maxiter=4000)
    hinf = min(so.minimize(peak, x0, method="Nelder-Mead", options=opts).fun for x0 in starts)
    return {"h2": h2, "hinf": hinf}


def test_4_lti_sanity():
    plant, beta_max = lti2_plant(), 4.0
    t0 = time.perf_counter()
    ref = _reference_norms(plant, beta_max)
    ok, parts = True, []
    for norm in ("h2", "hinf"):
        res = synthesize(SynthesisRequest(plant, norm, 10.0, beta_max=beta_max))
        rep = certify(res, plant)
        g = min_feasible_gamma(SynthesisRequest(plant, norm, 1e-3, beta_max=beta_max), hi=10.0)
        rel = abs(g / ref[norm] - 1) if g else math.inf
        ok &= res.ok and rep.passed and rel <= 0.05
        parts.append(f"{norm} {res.status}, certify {'pass' if rep.passed else 'fail'}, "
                     f"min gamma {g:.5f} vs {ref[norm]:.5f} ({rel:.1e})")
    el = time.perf_counter() - t0
    assert record(4, "LTI sanity", ok, "; ".join(parts), el, 30.0)


def test_5_sparsity():
    scen, results, el = cr3bp_designs()
    ok, parts = True, []
    for norm, res in results.items():
        b = res.beta
        others = b[2:].max() / b.max()
        ratio = abs(res.kappa[0] / res.kappa[1] - 1)
        ok &= res.ok and others <= 1e-6 and ratio <= 0.05 and len(res.vertex_set) == 64
        parts.append(f"{norm} other/max beta {others:.1e}, kappa1/kappa2 - 1 = {ratio:.1e}")
    assert record(5, "CR3BP sparsity", ok, "; ".join(parts) + " at 64 vertices", el, 60.0)


def test_6_noise_angles():
    t0 = time.perf_counter()
    _, results, _ = cr3bp_designs()
    ang = {n: noise_angle(r.kappa[0], r.kappa[1]).from_sin_deg for n, r in results.items()}
    in_band = {n: REFERENCE_ANGLES[n] / 3 <= ang[n] <= 3 * REFERENCE_ANGLES[n] for n in ang}
    ok = all(in_band.values()) and ang["hinf"] > ang["h2"]
    el = time.perf_counter() - t0
    assert record(6, "noise angles", ok,
                  f"h2 {ang['h2']:.3f} deg (band [0.867, 7.8]), "
                  f"hinf {ang['hinf']:.3f} deg (band [2.1, 18.9]), hinf > h2: {ang['hinf'] > ang['h2']}",
                  el)


def _run(cfg, results, level, schedule):
    noise = NoiseSpec(level=level, seed=0)
    x0_hat = initial_estimate(cfg.initial_state, 0.1)
    return {n: metrics(simulate(cfg, r.L, noise, x0_hat=x0_hat, schedule=schedule))
            for n, r in results.items()}


def test_7_closed_loop():
    _, results, _ = cr3bp_designs()
    cfg = Cr3bpConfig()
    level = noise_angle(results["h2"].kappa[0], results["h2"].kappa[1]).from_sin_deg
    t0 = time.perf_counter()
    m = _run(cfg, results, level, "truth")
    el = time.perf_counter() - t0
    ok = m["h2"].converged and m["hinf"].post_variance > m["h2"].post_variance
    est = _run(cfg, results, level, "estimate")
    info = (f"[INFO] 7. estimate-scheduled run (not a criterion): h2 converged "
            f"{est['h2'].converged}, hinf converged {est['hinf'].converged}")
    conftest.ACCEPTANCE_LINES.append(info)
    print(info)
    assert record(7, "closed-loop simulation", ok,
                  f"noise {level:.4f} deg, 10% initial error, seed 0, truth-scheduled: "
                  f"h2 converged {m['h2'].converged} at t={m['h2'].convergence_time:.3f}, "
                  f"post-transient variance hinf {m['hinf'].post_variance:.2e} vs "
                  f"h2 {m['h2'].post_variance:.2e}", el, 30.0)


def test_8_certification():
    scen, results, _ = cr3bp_designs()
    samples = scen.plant.box.sample(100, 0)
    t0 = time.perf_counter()
    ok, parts = True, []
    for norm, res in results.items():
        rep = certify(res, scen.plant, samples)
        hurwitz = all(r.hurwitz for r in rep.rows)
        n_v = sum(r.kind == "vertex" for r in rep.rows)
        resid = res.max_residual()
        ok &= hurwitz and n_v == 64 and len(rep.rows) == 164 and resid <= -res.eps / 2
        worst_eig = max(r.max_real_eig for r in rep.rows)
        parts.append(f"{norm} max Re eig {worst_eig:.3f} over {n_v}+100 points, "
                     f"LMI residual {resid:.2e} (limit {-res.eps / 2:.1e})")
    el = time.perf_counter() - t0
    assert record(8, "certification invariants", ok, "; ".join(parts), el)


if __name__ == "__main__":
    failed = 0
    for name, fn in sorted((k, v) for k, v in globals().items() if k.startswith("test_")):
        try:
            fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
