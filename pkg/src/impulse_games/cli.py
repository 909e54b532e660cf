"""Command line front end.

Exit codes: 0 success, 1 malformed or ill-posed configuration, 2 numerical
failure (no convergence, too few sweep points solved), 3 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import replace

import numpy as np

from .config import SWEEP_PARAMS, ConfigError, RunConfig, load_config
from .errors import CascadeOverflow, DegenerateBand, GridTooSmall, IllPosed, NoConvergence
from .mfg import gamma_map, solve_mfg, validate_mfg_by_simulation
from .model import ValueKind, params_to_dict
from .oracle import default_grid, solve_qvi_grid
from .sim import (
    dictator_strategies,
    epsilon_nash_gap,
    ne1_strategies,
    simulate_nplayer,
)
from .solver import (
    solve_mfg_thresholds,
    solve_single_player,
    solve_two_player_dictator,
    solve_two_player_symmetric,
)
from .svg import Panel, Series, write_svg
from .verifier import check_opponent_condition, check_qvi, check_symmetry

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3
MODES = ("single", "ne1", "ne2", "mfg")
SWEEP_MODES = MODES + ("compare",)
MIN_SOLVED = 0.9


# ---------------------------------------------------------------------------
# output helpers

def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            if isinstance(row, dict):
                row = [row.get(h, "") for h in header]
            w.writerow([_cell(v) for v in row])


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.floating, float)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    return o


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out(args, name):
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    sim = cfg.sim
    kw = {}
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    if getattr(args, "paths", None) is not None:
        kw["n_paths"] = args.paths
    if getattr(args, "dt", None) is not None:
        kw["dt"] = args.dt
    if getattr(args, "threads", None) is not None:
        kw["threads"] = args.threads
    if kw:
        try:
            cfg.sim = replace(sim, **kw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return cfg


# ---------------------------------------------------------------------------
# solving

def _solve(cfg: RunConfig, mode: str):
    """Returns (report_dict, values) with values a list of (label, PiecewiseValue)."""
    prm = cfg.params
    if mode == "single":
        rep = solve_single_player(prm)
        return rep.to_dict(), [("V", rep.value)]
    if mode == "ne1":
        rep = solve_two_player_symmetric(prm)
        return rep.to_dict(), [("w1", rep.value)]
    if mode == "ne2":
        rep = solve_two_player_dictator(prm)
        return rep.to_dict(), [("dictator", rep.value), ("follower", rep.follower)]
    if mode == "mfg":
        sol = solve_mfg(prm, float(cfg.mfg.get("init_mean", cfg.sim.init_dist.mean)))
        d = sol.report.to_dict()
        d.update(m_star=sol.m_star, fixed_point_iterations=sol.iterations,
                 fixed_point_residual=sol.residual, offset=sol.offset)
        return d, [("V", sol.report.value)]
    raise ValueError(mode)


def _value_rows(values, n=1001):
    v0 = values[0][1]
    pol = v0.policy
    w = pol.u - pol.d
    xs = np.linspace(v0.center + pol.d - 0.5 * w, v0.center + pol.u + 0.5 * w, n)
    cols = [xs]
    header = ["x"]
    for label, v in values:
        header.append(label)
        cols.append(v(xs))
    if ValueKind(v0.kind) is ValueKind.TWO_PLAYER_SYMMETRIC:
        header.append("w2")
        cols.append(v0(-xs))
    return header, list(zip(*cols))


def _checks(values):
    out = []
    for label, v in values:
        for rep in (check_qvi(v), check_opponent_condition(v), check_symmetry(v)):
            d = rep.to_dict()
            d["value"] = label
            out.append(d)
    return out


def _print_checks(checks):
    for c in checks:
        print(f"  {c['value']:>9s} {c['check']:<19s} {c['status']:<5s} worst={c['worst_violation']:.3e}")


def cmd_solve(args):
    cfg = _load(args)
    rep, values = _solve(cfg, args.mode)
    checks = _checks(values)
    rep["checks"] = checks
    ok = all(c["pass"] is not False for c in checks)
    rep["verified"] = ok
    write_json(_out(args, f"solve_{args.mode}.json"), rep)
    header, rows = _value_rows(values)
    write_csv(_out(args, f"value_{args.mode}.csv"), header, rows)
    print(f"{args.mode}: d={rep['d']:.6f} D={rep['D']:.6f} U={rep['U']:.6f} u={rep['u']:.6f} "
          f"c1={rep['c1']:.6f} c2={rep['c2']:.6f} residual={rep['residual_norm']:.2e}")
    _print_checks(checks)
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_verify(args):
    cfg = _load(args)
    rep, values = _solve(cfg, args.mode)
    if args.perturb_u:
        v = values[0][1]
        pol = replace(v.policy, u=v.policy.u + args.perturb_u, d=v.policy.d - args.perturb_u)
        values = [(values[0][0] + "_perturbed", replace(v, policy=pol))]
    checks = _checks(values)
    ok = all(c["pass"] is not False for c in checks)
    write_json(_out(args, f"verify_{args.mode}.json"),
               {"mode": args.mode, "perturb_u": args.perturb_u, "checks": checks, "verified": ok})
    _print_checks(checks)
    print("verified" if ok else "verification FAILED")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_oracle(args):
    cfg = _load(args)
    prm = cfg.params
    m = float(cfg.mfg.get("init_mean", 0.0)) if args.mode == "mfg" else 0.0
    if args.mode not in ("single", "mfg"):
        raise ConfigError("oracle supports --mode single or mfg")
    grid = default_grid(prm, m, n=args.n)
    if args.mode == "single":
        prm_o = prm.with_updates(alpha_slope=0.0, alpha_intercept=0.0)
        ref = solve_single_player(prm)
    else:
        prm_o = prm
        ref = solve_mfg_thresholds(prm, m)
    t0 = time.perf_counter()
    sol = solve_qvi_grid(prm_o, m, grid)
    elapsed = time.perf_counter() - t0
    edges = sol.band_edges()
    closed = ref.policy.thresholds()
    err = [abs(a - b) for a, b in zip(edges, closed)]
    sol.to_csv(_out(args, "oracle_grid.csv"))
    vgap = float(np.max(np.abs(sol.values - ref.value(sol.x))))
    write_json(_out(args, "oracle.json"), {
        "n": grid.n, "step": grid.step, "iterations": sol.iterations,
        "grid_edges": dict(zip("dDUu", edges)), "closed_form": dict(zip("dDUu", closed)),
        "edge_error": dict(zip("dDUu", err)), "edge_error_steps": max(err) / grid.step,
        "value_max_gap": vgap,
    })
    print(f"grid n={grid.n} step={grid.step:.4g} iterations={sol.iterations} ({elapsed:.2f}s)")
    for name, a, b in zip(("d", "D", "U", "u"), edges, closed):
        print(f"  {name}: grid {a:+.6f}  closed form {b:+.6f}  diff {abs(a - b):.2e}")
    print(f"  max value gap {vgap:.2e}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweeps

def _with_param(prm, name, v, mode="mfg"):
    # the two-player game has one running-cost rate: keep h = p
    if name in ("h", "p") and mode in ("ne1", "ne2", "compare") and prm.costs.h == prm.costs.p:
        return prm.with_updates(h=v, p=v)
    if name == "K":
        return prm.with_updates(K_plus=v, K_minus=v)
    if name == "k":
        return prm.with_updates(k_plus=v, k_minus=v)
    return prm.with_updates(**{name: v})


def _sweep_point(cfg, mode, prm):
    if mode == "compare":
        duo = solve_two_player_symmetric(prm).policy
        mono = solve_single_player(prm).policy
        return {"U": duo.U, "u": duo.u, "U_mono": mono.U, "u_mono": mono.u}
    if mode == "mfg":
        sol = solve_mfg(prm, float(cfg.mfg.get("init_mean", 0.0)))
        pol = sol.policy
        # thresholds in centered coordinates
        return {"d": pol.d, "D": pol.D, "U": pol.U, "u": pol.u, "m_star": sol.m_star}
    fn = {"single": solve_single_player, "ne1": solve_two_player_symmetric,
          "ne2": solve_two_player_dictator}[mode]
    pol = fn(prm).policy
    return {"d": pol.d, "D": pol.D, "U": pol.U, "u": pol.u}


def run_sweep(cfg: RunConfig, param: str, lo: float, hi: float, steps: int, mode: str):
    """Rows of {param, thresholds..., status}; failures leave NaN gaps."""
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"unknown sweep parameter {param!r}")
    if steps < 2:
        raise ConfigError("sweep needs at least 2 steps")
    keys = {"compare": ["U", "u", "U_mono", "u_mono"], "mfg": ["d", "D", "U", "u", "m_star"]}.get(
        mode, ["d", "D", "U", "u"])
    rows = []
    for v in np.linspace(lo, hi, steps):
        row = {param: float(v)}
        try:
            prm = _with_param(cfg.params, param, float(v), mode)
            row.update(_sweep_point(cfg, mode, prm))
            row["status"] = "ok"
        except (IllPosed, NoConvergence, DegenerateBand) as exc:
            row.update({k: float("nan") for k in keys})
            row["status"] = f"{type(exc).__name__}: {exc}".replace("\n", " ")
        rows.append(row)
    return keys, rows


def _sweep_svg(path, param, keys, rows, mode, title):
    x = np.array([r[param] for r in rows])
    th_keys = [k for k in keys if k != "m_star"]
    panel = Panel(title="Thresholds", xlabel=param, ylabel="threshold",
                  series=[Series(x, np.array([r[k] for r in rows]), k, markers=True,
                                 dashed=k.endswith("_mono")) for k in th_keys])
    panels = [panel]
    if mode == "mfg":
        panels.append(Panel(title="Fixed point", xlabel=param, ylabel="m*",
                            series=[Series(x, np.array([r["m_star"] for r in rows]), "m*", markers=True)]))
    write_svg(path, panels, title)


def cmd_sweep(args):
    cfg = _load(args)
    sw = cfg.sweep
    param = args.param or sw.get("param")
    mode = args.mode or sw.get("mode", "ne1")
    if args.range:
        try:
            parts = [float(t) for t in args.range.split(",")]
            lo, hi, steps = parts[0], parts[1], int(parts[2])
        except (ValueError, IndexError) as exc:
            raise ConfigError("--range must be lo,hi,steps") from exc
    elif "range" in sw:
        lo, hi, steps = sw["range"]
    else:
        raise ConfigError("no sweep range given (--range or [sweep] range)")
    if param is None:
        raise ConfigError("no sweep parameter given (--param or [sweep] param)")
    if mode not in SWEEP_MODES:
        raise ConfigError(f"sweep mode must be one of {', '.join(SWEEP_MODES)}")
    keys, rows = run_sweep(cfg, param, lo, hi, steps, mode)
    stem = f"sweep_{mode}_{param}"
    write_csv(_out(args, stem + ".csv"), [param] + keys + ["status"], rows)
    title = cfg.meta.get("title", f"{mode} sensitivity to {param}")
    _sweep_svg(_out(args, stem + ".svg"), param, keys, rows, mode, title)
    solved = sum(r["status"] == "ok" for r in rows)
    for r in rows:
        vals = " ".join(f"{k}={r[k]:+.4f}" for k in keys)
        print(f"  {param}={r[param]:.4g} {vals} {'' if r['status'] == 'ok' else r['status']}")
    print(f"{solved}/{len(rows)} points solved")
    return EXIT_OK if solved >= MIN_SOLVED * len(rows) else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# simulation

def _sim_setup(cfg: RunConfig, mode: str, n: int | None):
    """(strategies, sim config, closed-form reference per player)."""
    prm = cfg.params
    sim = cfg.sim
    if mode in ("ne1", "ne2"):
        if n not in (None, 2):
            raise ConfigError(f"mode {mode} is a two-player game")
        sim = replace(sim, n_players=2)
        if mode == "ne1":
            rep = solve_two_player_symmetric(prm)
            strategies = ne1_strategies(rep.policy)
            ref = [rep.value, rep.value]  # player 2's value at s is w1(-s)
        else:
            rep = solve_two_player_dictator(prm)
            strategies = dictator_strategies(rep.policy)
            ref = [rep.value, rep.follower]
        x0 = sim.init_dist
        closed = [float(ref[0](0.0)), float(ref[1](0.0))] if x0.kind == "point" else [math.nan] * 2
        return strategies, sim, closed
    n = n or sim.n_players
    if mode == "single":
        pol = solve_single_player(prm).policy
    else:
        pol = solve_mfg(prm, float(cfg.mfg.get("init_mean", sim.init_dist.mean))).policy
    sim = replace(sim, n_players=n)
    closed = [math.nan] * n
    if n == 1:
        # with one player the population reference is the player itself
        sim = replace(sim, cost_reference="center")
        if mode == "single" and sim.init_dist.kind == "point":
            closed = [float(solve_single_player(prm).value(sim.init_dist.a))]
    return [pol] * n, sim, closed


def cmd_simulate(args):
    cfg = _load(args)
    mode = args.mode or "single"
    strategies, sim, closed = _sim_setup(cfg, mode, args.n)
    t0 = time.perf_counter()
    st = simulate_nplayer(cfg.params, strategies, sim)
    elapsed = time.perf_counter() - t0
    rows = st.summary_rows()
    for row, cf in zip(rows, closed):
        row["closed_form"] = cf
    header = ["player", "running", "running_se", "own", "own_se", "opponent", "opponent_se",
              "total", "total_se", "interventions", "closed_form"]
    stem = f"simulate_{mode}"
    write_csv(_out(args, stem + ".csv"), header, rows)
    # running estimate of player 0's cost as paths accumulate
    tot = st.total_per_path(0)
    k = np.arange(1, len(tot) + 1)
    run_mean = np.cumsum(tot) / k
    run_var = np.maximum(np.cumsum(tot ** 2) / k - run_mean ** 2, 0.0)
    se = np.sqrt(run_var / np.maximum(k - 1, 1))
    series = [Series(k, run_mean, "estimate", yerr=None), Series(k, run_mean + 2 * se, "+2 SE", dashed=True),
              Series(k, run_mean - 2 * se, "-2 SE", dashed=True)]
    if math.isfinite(closed[0]):
        series.append(Series(k[[0, -1]], np.array([closed[0]] * 2), "closed form"))
    write_svg(_out(args, stem + ".svg"),
              Panel(title="Discounted cost, player 1", xlabel="paths", ylabel="cost", series=series))
    write_json(_out(args, stem + ".json"), {
        "mode": mode, "n_players": sim.n_players, "n_paths": sim.n_paths, "dt": sim.dt,
        "horizon": st.horizon, "seed": sim.seed, "discount_tail": st.discount_tail,
        "players": rows, "params": params_to_dict(cfg.params),
    })
    for row in rows:
        cf = row["closed_form"]
        cmp = f"  closed form {cf:.5f} ({(row['total'] - cf) / row['total_se']:+.2f} SE)" if math.isfinite(cf) else ""
        print(f"  player {row['player'] + 1}: cost {row['total']:.5f} +- {row['total_se']:.5f}"
              f"  interventions {row['interventions']:.2f}{cmp}")
    print(f"{sim.n_paths} paths, dt={sim.dt:g}, T={st.horizon:.4g} ({elapsed:.1f}s)")
    return EXIT_OK


def cmd_epsnash(args):
    cfg = _load(args)
    en = cfg.epsnash
    n_values = [int(v) for v in (args.n_values.split(",") if args.n_values else en.get("n_values", [2, 4, 8, 16, 32, 64]))]
    factors = [float(v) for v in en.get("factors", [0.5, 0.75, 1.0, 1.25, 1.5])]
    sol = solve_mfg(cfg.params, float(cfg.mfg.get("init_mean", cfg.sim.init_dist.mean)))
    t0 = time.perf_counter()
    curve = epsilon_nash_gap(cfg.params, sol.policy, n_values, factors, cfg.sim)
    elapsed = time.perf_counter() - t0
    rows = curve.rows()
    write_csv(_out(args, "epsnash.csv"), ["N", "gap", "se", "best_factor", "cost"], rows)
    x = np.array(n_values, float)
    series = [Series(x, curve.gaps, "gap", markers=True)]
    note = "no positive gaps to fit"
    if math.isfinite(curve.slope):
        series.append(Series(x, np.exp(curve.intercept) * x ** curve.slope, "fit", dashed=True))
        note = f"fitted slope {curve.slope:.3f}"
    write_svg(_out(args, "epsnash.svg"),
              Panel(title="Unilateral deviation gain", xlabel="N", ylabel="gap", series=series,
                    logx=True, logy=True, note=note))
    write_json(_out(args, "epsnash.json"), {
        "n_values": n_values, "factors": factors, "slope": curve.slope, "intercept": curve.intercept,
        "non_increasing_2se": curve.non_increasing(2.0), "rows": rows, "n_paths": cfg.sim.n_paths,
        "dt": cfg.sim.dt, "seed": cfg.sim.seed, "m_star": sol.m_star,
    })
    for r in rows:
        print(f"  N={r['N']:>3d} gap={r['gap']:.5f} se={r['se']:.5f} best factor={r['best_factor']:.2f}")
    print(f"{note}; non-increasing within 2 SE: {curve.non_increasing(2.0)} ({elapsed:.1f}s)")
    return EXIT_OK


def cmd_mfg(args):
    cfg = _load(args)
    prm = cfg.params
    init_mean = float(cfg.mfg.get("init_mean", cfg.sim.init_dist.mean))
    sol = solve_mfg(prm, init_mean)
    # Picard iterates from the initial mean, for the record
    its = [(0, init_mean, gamma_map(prm, init_mean, sol.report))]
    m = init_mean
    for i in range(1, sol.iterations + 1):
        m = its[-1][2]
        its.append((i, m, gamma_map(prm, m, sol.report)))
    write_csv(_out(args, "mfg_iterates.csv"), ["iteration", "m", "gamma"], its)
    out = sol.to_dict()
    if prm.alpha_slope != 1.0:
        out["closed_form_m_star"] = (prm.alpha_intercept + sol.offset) / (1.0 - prm.alpha_slope)
    code = EXIT_OK
    if args.validate:
        val = validate_mfg_by_simulation(sol, prm, cfg.sim)
        out["validation"] = val
        print(f"  simulated long-run mean {val['mean']:.5f} +- {val['mean_se']:.5f} vs m* {sol.m_star:.5f}")
        print(f"  upper-jump fraction {val['upper_fraction']:.4f} +- {val['upper_fraction_se']:.4f} "
              f"vs {val['p_inf']:.4f}")
        if not val["pass"]:
            code = EXIT_VERIFY
    write_json(_out(args, "mfg.json"), out)
    span = max(1.0, 2 * abs(sol.m_star), abs(init_mean))
    ms = np.linspace(sol.m_star - span, sol.m_star + span, 101)
    g = np.array([gamma_map(prm, v, sol.report) for v in ms])
    write_svg(_out(args, "mfg.svg"), Panel(
        title="Fixed point", xlabel="m", ylabel="Gamma(m)",
        series=[Series(ms, g, "Gamma"), Series(ms, ms, "identity", dashed=True)],
        note=f"m* = {sol.m_star:.6g}"))
    pol = sol.policy
    print(f"m*={sol.m_star:.10g} after {sol.iterations} iterations (residual {sol.residual:.1e}); "
          f"band d={pol.d:.5f} D={pol.D:.5f} U={pol.U:.5f} u={pol.u:.5f} around {pol.center:.5f}")
    return code


# ---------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="impulse-games", description="Band equilibria of impulse-control games")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, mode_choices=None, mode_default=None, sim=False):
        p.add_argument("--config", required=True)
        p.add_argument("--out-dir", default=".")
        if mode_choices:
            p.add_argument("--mode", choices=mode_choices, default=mode_default)
        if sim:
            p.add_argument("--seed", type=int)
            p.add_argument("--paths", type=int)
            p.add_argument("--dt", type=float)
            p.add_argument("--threads", type=int)

    p = sub.add_parser("solve", help="solve a band equilibrium and verify it")
    common(p, MODES, "ne1")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="run the equilibrium checks")
    common(p, MODES, "ne1")
    p.add_argument("--perturb-u", type=float, default=0.0, help="shift u (and d) outward before checking")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("oracle", help="grid policy iteration vs closed form")
    common(p, ("single", "mfg"), "single")
    p.add_argument("--n", type=int, default=1601)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("sweep", help="threshold sensitivity to one parameter")
    common(p, SWEEP_MODES, None)
    p.add_argument("--param")
    p.add_argument("--range", help="lo,hi,steps")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="Monte Carlo costs under the solved bands")
    common(p, MODES, "single", sim=True)
    p.add_argument("--n", type=int, help="number of players (single/mfg modes)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("epsnash", help="deviation gain of the mean-field band in N-player games")
    common(p, sim=True)
    p.add_argument("--n-values", help="comma separated N values")
    p.set_defaults(func=cmd_epsnash)

    p = sub.add_parser("mfg", help="mean-field fixed point")
    common(p, sim=True)
    p.add_argument("--validate", action="store_true", help="check m* and the jump law by simulation")
    p.set_defaults(func=cmd_mfg)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, IllPosed) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NoConvergence, GridTooSmall, CascadeOverflow, DegenerateBand) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
