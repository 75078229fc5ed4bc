"""``lpvp`` command line: synth | sweep | simulate | verify.

Exit codes: 0 success, 1 usage/IO/solver error, 2 infeasible,
3 certification failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .lpv import ShapeError
from .sdp import INFEASIBLE, SolverUnavailable
from .serialization import (DocumentError, read_result, write_json, write_result,
                            write_sweep_csv, write_trace_csv)
from .simulation import NoiseSpec, metrics, range_sigma_from_kappa, simulate, initial_estimate
from .synthesis import (SynthesisRequest, noise_angle, sweep_gamma,
                        synthesize_with_advisory)
from .verify import certify

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_CERT = 0, 1, 2, 3

log = logging.getLogger("lpvp")


class UsageError(Exception):
    pass


def _gamma_list(text):
    try:
        return [float(g) for g in text.split(",") if g.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad gamma list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lpvp", description=(
        "Joint LPV observer gain and sensing-precision synthesis."))
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--out", help="output directory (default from config, else .)")
        return p

    def synth_flags(p):
        p.add_argument("--norm", choices=["h2", "hinf", "both"])
        p.add_argument("--p", dest="p", choices=["1", "2", "inf"])
        p.add_argument("--eps", type=float)
        p.add_argument("--backend", choices=["clarabel", "cvxopt"])

    p = common(sub.add_parser("synth", help="synthesize L and minimal precision at one gamma"))
    synth_flags(p)
    p.add_argument("--gamma", type=float)

    p = common(sub.add_parser("sweep", help="synthesize over a list of gamma values"))
    synth_flags(p)
    p.add_argument("--gammas", type=_gamma_list, help="comma-separated, ascending")
    p.add_argument("--workers", type=int)

    p = common(sub.add_parser("simulate", help="closed-loop simulation of a design"))
    p.add_argument("result", help="result document written by synth")
    p.add_argument("--seed", type=int)
    p.add_argument("--noise-deg", type=float, help="bearing noise amplitude in degrees")
    p.add_argument("--schedule", choices=["estimate", "truth"])
    p.add_argument("--t-final", type=float)

    p = common(sub.add_parser("verify", help="certify a design with the norm oracles"))
    p.add_argument("result", help="result document written by synth")
    p.add_argument("--samples", type=int, default=100, help="interior rho samples")
    p.add_argument("--seed", type=int)
    return ap


def _config(args):
    over = {"out": args.out}
    for flag, key in (("norm", "synthesis.norm"), ("gamma", "synthesis.gamma"),
                      ("gammas", "synthesis.gammas"), ("p", "synthesis.p"),
                      ("eps", "synthesis.eps"), ("backend", "synthesis.backend"),
                      ("workers", "synthesis.workers"), ("seed", "simulation.seed"),
                      ("noise_deg", "simulation.noise_deg"), ("schedule", "simulation.schedule"),
                      ("t_final", "simulation.t_final")):
        over[key] = getattr(args, flag, None)
    return load_config(args.config, over)


def _norms(cfg):
    n = cfg.synthesis.norm
    return ["h2", "hinf"] if n == "both" else [n]


def _request_kw(cfg):
    s = cfg.synthesis
    return dict(p=s.p, eps=s.eps, backend=s.backend, polish=s.polish, polish_slack=s.polish_slack)


def summary_table(res) -> str:
    names = res.channel_names or tuple(f"y{i + 1}" for i in range(len(res.beta)))
    used = res.active_channels()
    lines = [f"norm={res.norm} gamma={res.gamma:g} p={res.p:g} status={res.status}",
             f"||beta||_p = {res.objective_value:.6g} (optimum {res.optimal_value:.6g})",
             f"{'channel':<12} {'beta':>13} {'kappa':>13} {'noise 1/kappa':>14}  used"]
    for i, name in enumerate(names):
        lines.append(f"{name:<12} {res.beta[i]:13.6g} {res.kappa[i]:13.6g} "
                     f"{1 / res.kappa[i]:14.6g}  {'yes' if used[i] else 'no'}")
    if len(res.kappa) >= 2:
        try:
            a = noise_angle(res.kappa[0], res.kappa[1])
            lines.append(f"allowable theta1 noise: {a.from_sin_deg:.4f} deg (sin), "
                         f"{a.from_cos_deg:.4f} deg (cos)")
        except ValueError as exc:
            lines.append(f"allowable theta1 noise: undefined ({exc})")
    return "\n".join(lines)


def cmd_synth(args) -> int:
    cfg = _config(args)
    plant = cfg.load_plant()
    out = Path(cfg.out)
    code = EXIT_OK
    for norm in _norms(cfg):
        req = SynthesisRequest(plant, norm, cfg.synthesis.gamma, **_request_kw(cfg))
        res = synthesize_with_advisory(req)
        crcfg = cfg.cr3bp if cfg.plant_source == "cr3bp" else None
        path = write_result(out / f"result_{norm}.json", res, plant, crcfg)
        if res.ok:
            text = summary_table(res)
            (out / f"summary_{norm}.txt").write_text(text + "\n")
            print(text)
        elif res.status == INFEASIBLE:
            adv = ("no feasible gamma up to 1000x the request" if res.advisory_gamma is None
                   else f"smallest feasible gamma ~ {res.advisory_gamma:.6g}")
            print(f"{norm}: infeasible at gamma={req.gamma:g}; {adv}")
            code = max(code, EXIT_INFEASIBLE)
        else:
            print(f"{norm}: solver failure ({res.status}, {res.solver_status})", file=sys.stderr)
            return EXIT_ERROR
        print(f"wrote {path}")
    return code


def cmd_sweep(args) -> int:
    cfg = _config(args)
    gammas = list(cfg.synthesis.gammas)
    if not gammas:
        raise UsageError("empty gamma list (use --gammas or synthesis.gammas)")
    if any(b < a for a, b in zip(gammas, gammas[1:])):
        raise UsageError("gammas must be sorted ascending")
    plant = cfg.load_plant()
    out = Path(cfg.out)
    code = EXIT_OK
    for norm in _norms(cfg):
        sw = sweep_gamma(plant, norm, gammas, workers=cfg.synthesis.workers, **_request_kw(cfg))
        csv_path = write_sweep_csv(out / f"sweep_{norm}.csv", sw.results, plant.n_y)
        write_json(out / f"sweep_{norm}.json", {
            "norm": norm, "gammas": gammas, "monotone": sw.monotone,
            "violations": [list(v) for v in sw.violations],
            "status": [r.status for r in sw.results]})
        ok = sum(r.ok for r in sw.results)
        print(f"{norm}: {ok}/{len(gammas)} feasible, cost non-increasing in gamma: {sw.monotone}")
        print(f"wrote {csv_path}")
        if any(r.status == INFEASIBLE for r in sw.results):
            code = max(code, EXIT_INFEASIBLE)
        if ok + sum(r.status == INFEASIBLE for r in sw.results) < len(gammas):
            code = EXIT_ERROR
    return code


def _load(path):
    try:
        return read_result(path)
    except OSError as exc:
        raise UsageError(f"cannot read result: {exc}") from None


def cmd_simulate(args) -> int:
    cfg = _config(args)
    res, plant, crcfg = _load(args.result)
    if not res.ok:
        raise UsageError(f"result status is {res.status}; nothing to simulate")
    if res.L.shape != (4, 6):
        raise UsageError(f"simulation needs the 4x6 CR3BP gain, got {res.L.shape}")
    crcfg = crcfg or cfg.cr3bp
    m = cfg.simulation
    level = m.noise_deg
    if level is None:
        level = noise_angle(res.kappa[0], res.kappa[1]).from_sin_deg
    noise = NoiseSpec(level=level, seed=m.seed, distribution=m.distribution,
                      range_sigma=range_sigma_from_kappa(res.kappa, res.active_channels()))
    x0_hat = initial_estimate(crcfg.initial_state, m.initial_error)
    trace = simulate(crcfg, res.L, noise, x0_hat=x0_hat, schedule=m.schedule, t_final=m.t_final)
    met = metrics(trace)
    out = Path(cfg.out)
    path = write_trace_csv(out / f"trace_{res.norm}.csv", trace)
    write_json(out / f"metrics_{res.norm}.json",
               {**met.to_dict(), "noise_deg": level, "schedule": m.schedule, "seed": m.seed,
                "angle_noise_peak_deg": trace.metadata["angle_noise_peak_deg"],
                "angle_noise_rms_deg": trace.metadata["angle_noise_rms_deg"]})
    print(f"noise {level:.4f} deg ({m.distribution}, peak {trace.metadata['angle_noise_peak_deg']:.4f}, "
          f"rms {trace.metadata['angle_noise_rms_deg']:.4f}), schedule={m.schedule}")
    print(f"RMS eps (final half) {met.rms_eps:.6g}, peak eps {met.peak_eps:.6g}, "
          f"converged to 10% band: {met.converged} (t={met.convergence_time:.4g})")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _config(args)
    res, plant, _ = _load(args.result)
    if plant is None:
        plant = cfg.load_plant()
    if not res.ok:
        raise UsageError(f"result status is {res.status}; nothing to verify")
    if res.L.shape != (plant.n_x, plant.n_y):
        raise UsageError(f"L has shape {res.L.shape}, plant needs {(plant.n_x, plant.n_y)}")
    seed = cfg.simulation.seed if args.seed is None else args.seed
    samples = plant.box.sample(args.samples, np.random.default_rng(seed))
    rep = certify(res, plant, samples)
    write_json(Path(cfg.out) / f"certification_{res.norm}.json", rep.to_dict())
    print(rep.summary())
    return EXIT_OK if rep.passed else EXIT_CERT


COMMANDS = {"synth": cmd_synth, "sweep": cmd_sweep, "simulate": cmd_simulate, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DocumentError, UsageError, ShapeError, SolverUnavailable) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
