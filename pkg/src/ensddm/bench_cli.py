"""Experiment surface: scenario configuration, runners, CSV emission, CLI.

Scenarios
---------
manufactured   closed-form benchmark on [0,pi]x[0,1] over [0,pi]x[-1,0]:
               per-sample errors, iteration counts, convergence orders.
small_k        same geometry with conductivities of order 1e-4 and
               delta_S > delta_D.
channel_mc     water channel [0,3]x[0,1] over porous bed [0,3]x[-3,0] with a
               random conductivity field: Monte Carlo expectation study and
               shared-matrix vs per-sample timing comparison.
symbol_sweep   worst-case damping factor over a (delta_S, delta_D) grid.

Config files are flat `key = value` text (comma-separated lists, '#'
comments); every key has a scenario default.  See the README for the key
reference and the CSV schemas.
"""

import argparse
import csv
import os
import sys
import time
from dataclasses import dataclass, replace

import numpy as np

from .mesh import Rect, build_rect_mesh, pair_interface
from .fields import ConstantConductivity, KLConductivity
from .random_field import RandomFieldSpec, draw_samples, evaluate_k, mc_expectation
from .robin_params import frequency_band, optimized_delta_d, worst_case_rho, \
    convergence_factor, symbol_iteration, measured_contraction
from .manufactured import ManufacturedSolution
from .ensemble_driver import (make_sample, make_context, BoundaryConditions,
                              run_ensemble_ddm, run_traditional_ddm,
                              zero_vector_field, zero_scalar_field)
from .norms import error_norms
from . import quadrature

CSV_COLUMNS = ["scenario", "h", "j", "iterations", "err_us_l2", "err_us_h1",
               "err_ps_l2", "err_phid_l2", "err_ud_l2", "err_ud_div",
               "t_assemble_ms", "t_factor_ms", "t_solve_ms", "converged"]

SCENARIOS = ("manufactured", "small_k", "channel_mc", "symbol_sweep")


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    scenario: str = "manufactured"
    h_list: tuple = (1 / 16, 1 / 32, 1 / 64)
    nu: float = 1.0
    g: float = 1.0
    z: float = 0.0
    alpha: float = 1.0
    robin_mode: str = "optimized"        # optimized | explicit
    delta_s: float = 1.0
    delta_d: float = 0.0                 # used when robin_mode == explicit
    tol: float = 1e-6
    max_iters: int = 500
    J: int = 3
    k_list: tuple = (2.21, 4.11, 6.21)   # fixed conductivities (manufactured)
    seed: int = 20240901
    J0: int = 500                        # Monte Carlo reference size
    J_list: tuple = (40, 60, 100, 160)
    field_a0: float = 1.0
    field_sigma: float = 0.15
    field_lc: float = 0.25
    field_nf: int = 3
    field_scale: float = 1.0
    out: str = "out"
    allow_nonconverged: bool = False
    per_sample_stop: bool = False
    dump_draws: bool = False
    compare_traditional: bool = False
    sweep_delta_s: tuple = (0.01, 0.1, 1.0, 10.0)
    sweep_points: int = 25
    threads: int = 1

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario '{self.scenario}'")
        if self.robin_mode not in ("optimized", "explicit"):
            raise ConfigError(f"unknown robin_mode '{self.robin_mode}'")
        if self.robin_mode == "explicit" and self.delta_d <= 0:
            raise ConfigError("explicit robin_mode requires delta_d > 0")
        if self.delta_s <= 0:
            raise ConfigError("delta_s must be positive")
        if self.tol <= 0 or self.max_iters < 1:
            raise ConfigError("tol must be positive and max_iters >= 1")
        if any(h <= 0 for h in self.h_list):
            raise ConfigError("mesh sizes must be positive")
        if self.J < 1 or self.J0 < 1:
            raise ConfigError("sample counts must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        return self


def parse_config_text(text):
    """Parse the flat key = value grammar into a dict of raw strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


_TUPLE_KEYS = {"h_list": float, "k_list": float, "J_list": int, "sweep_delta_s": float}
_BOOL_KEYS = {"allow_nonconverged", "per_sample_stop", "dump_draws", "compare_traditional"}
_INT_KEYS = {"max_iters", "J", "J0", "seed", "field_nf", "sweep_points", "threads"}
_STR_KEYS = {"scenario", "robin_mode", "out"}


def config_from_mapping(raw, base=None):
    cfg = base or ScenarioConfig()
    updates = {}
    for key, value in raw.items():
        if not hasattr(cfg, key):
            raise ConfigError(f"unknown config key '{key}'")
        if key in _TUPLE_KEYS:
            conv = _TUPLE_KEYS[key]
            updates[key] = tuple(conv(v.strip()) for v in str(value).split(",") if v.strip())
        elif key in _BOOL_KEYS:
            v = str(value).strip().lower()
            if v not in ("true", "false"):
                raise ConfigError(f"boolean key '{key}' must be true or false")
            updates[key] = v == "true"
        elif key in _INT_KEYS:
            updates[key] = int(str(value).strip())
        elif key in _STR_KEYS:
            updates[key] = str(value).strip()
        else:
            updates[key] = float(str(value).strip())
    return replace(cfg, **updates).validate()


def load_config(path, base=None):
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_mapping(parse_config_text(fh.read()), base=base)


# --------------------------------------------------------------------------
# geometry and boundary-condition factories

MANUFACTURED_RECTS = (Rect(0.0, np.pi, 0.0, 1.0), Rect(0.0, np.pi, -1.0, 0.0))
CHANNEL_RECTS = (Rect(0.0, 3.0, 0.0, 1.0), Rect(0.0, 3.0, -3.0, 0.0))


def manufactured_meshes(h):
    """Benchmark meshes at nominal size h: n = round(1/h) rows per unit
    height and 2 n columns across the pi-wide domains (cells pi/(2n) wide,
    the resolution that reproduces the published error magnitudes)."""
    n = max(1, round(1 / h))
    rs, rd = MANUFACTURED_RECTS
    mesh_s = build_rect_mesh(rs, 2 * n, n, side_tags={"bottom": "INTERFACE"})
    mesh_d = build_rect_mesh(rd, 2 * n, n, side_tags={"top": "INTERFACE", "bottom": "BOTTOM",
                                                      "left": "SIDE", "right": "SIDE"})
    return mesh_s, mesh_d, pair_interface(mesh_s, mesh_d)


def channel_meshes(h):
    """Channel meshes with square cells of side 1/round(1/h)."""
    n = max(1, round(1 / h))
    rs, rd = CHANNEL_RECTS
    mesh_s = build_rect_mesh(rs, 3 * n, n, side_tags={"bottom": "INTERFACE",
                                                      "left": "INFLOW", "right": "OUTFLOW",
                                                      "top": "WALL"})
    mesh_d = build_rect_mesh(rd, 3 * n, 3 * n, side_tags={"top": "INTERFACE",
                                                          "bottom": "BOTTOM",
                                                          "left": "SIDE", "right": "SIDE"})
    return mesh_s, mesh_d, pair_interface(mesh_s, mesh_d)


def darcy_scan_points(mesh_d):
    bary, _ = quadrature.triangle_rule(2)
    return quadrature.physical_points(mesh_d.verts, mesh_d.tris, bary).reshape(-1, 2)


def manufactured_samples(cfg, mesh_d):
    scan = darcy_scan_points(mesh_d)
    samples, exacts = [], []
    for k in cfg.k_list:
        ms = ManufacturedSolution(k, k, nu=cfg.nu, g=cfg.g)
        K = ConstantConductivity(k)
        samples.append(make_sample(K, f_S=ms.f_S, f_D=ms.f_D, alpha=cfg.alpha,
                                   interface_y=0.0, scan_points=scan))
        exacts.append(ms)
    return samples, exacts


def manufactured_bc(exacts, pin_pressure=False):
    """Exact velocity as Dirichlet data on the outer free-flow sides; exact
    head as natural data on the outer porous sides (the natural condition of
    the mixed form, which also pins the head and pressure levels).

    `pin_pressure` adds the zero-mean pressure multiplier; useful in the
    small-conductivity regime, where the porous velocity response is too
    weak to carry the pressure level at a useful rate.
    """
    return BoundaryConditions(
        stokes_pressure_multiplier=pin_pressure,
        darcy_head_multiplier=False,
        stokes_values=lambda j, pts: exacts[j].u_S(pts),
        darcy_values=None,
        darcy_essential_tags=frozenset(),
        darcy_natural_tags=frozenset({"BOTTOM", "SIDE"}),
        darcy_natural_head=lambda j, pts: exacts[j].phi_D(pts),
    )


def channel_inflow(points):
    pts = np.atleast_2d(points)
    out = np.zeros((len(pts), 2))
    out[:, 0] = 4.0 * pts[:, 1] * (1.0 - pts[:, 1])
    return out


def channel_bc():
    return BoundaryConditions(
        stokes_dirichlet_tags=frozenset({"INFLOW", "WALL"}),
        darcy_essential_tags=frozenset({"SIDE"}),
        stokes_pressure_multiplier=False,
        darcy_head_multiplier=False,
        stokes_values=lambda j, pts: channel_inflow(pts),
        darcy_values=None,
    )


def channel_samples(cfg, mesh_d, J=None):
    spec = RandomFieldSpec(a0=cfg.field_a0, sigma=cfg.field_sigma,
                           L_c=cfg.field_lc, n_f=cfg.field_nf)
    draws = draw_samples(spec, J or cfg.J, cfg.seed)
    scan = darcy_scan_points(mesh_d)
    samples = []
    for d in draws:
        K = KLConductivity(spec, d, scale=cfg.field_scale)
        samples.append(make_sample(K, alpha=cfg.alpha, interface_y=0.0, scan_points=scan))
    return samples, draws, spec


def resolve_delta_d(cfg, interface_length, h):
    if cfg.robin_mode == "explicit":
        return cfg.delta_d
    band = frequency_band(interface_length, h)
    return optimized_delta_d(cfg.delta_s, cfg.nu, band)


# --------------------------------------------------------------------------
# scenario runners


def _write_csv(path, columns, rows):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
    return path


def _result_rows(cfg, h, report, exacts=None, space_s=None, space_d=None):
    rows = []
    for j in range(len(report.us)):
        if exacts is not None:
            tab = error_norms(space_s, space_d, report.us[j], report.ud[j],
                              exacts[j], h, j=j, iterations=int(report.iterations[j]))
            errs = dict(err_us_l2=tab.err_us_l2, err_us_h1=tab.err_us_h1,
                        err_ps_l2=tab.err_ps_l2, err_phid_l2=tab.err_phid_l2,
                        err_ud_l2=tab.err_ud_l2, err_ud_div=tab.err_ud_div)
        else:
            errs = dict(err_us_l2="", err_us_h1="", err_ps_l2="",
                        err_phid_l2="", err_ud_l2="", err_ud_div="")
        rows.append(dict(scenario=cfg.scenario, h=repr(h), j=j,
                         iterations=int(report.iterations[j]), **errs,
                         t_assemble_ms=round(1e3 * report.t_assembly, 3),
                         t_factor_ms=round(1e3 * report.t_factor, 3),
                         t_solve_ms=round(1e3 * report.t_solve, 3),
                         converged=bool(report.converged[j])))
    return rows


def run_manufactured(cfg, iteration_log=None):
    """Error/iteration rows over the h grid; one ensemble run per h."""
    rows = []
    reports = {}
    for h in cfg.h_list:
        mesh_s, mesh_d, pairing = manufactured_meshes(h)
        samples, exacts = manufactured_samples(cfg, mesh_d)
        delta_d = resolve_delta_d(cfg, pairing.length, h)
        ctx, _ = make_context(samples, nu=cfg.nu, g=cfg.g, z=cfg.z, alpha=cfg.alpha,
                              delta_s=cfg.delta_s, delta_d=delta_d,
                              tol=cfg.tol, max_iters=cfg.max_iters)
        bc = manufactured_bc(exacts, pin_pressure=(cfg.scenario == "small_k"))
        report = run_ensemble_ddm(ctx, mesh_s, mesh_d, pairing, bc,
                                  per_sample_stop=cfg.per_sample_stop,
                                  threads=cfg.threads)
        rows.extend(_result_rows(cfg, h, report, exacts, report.space_s, report.space_d))
        reports[h] = (report, ctx, bc, exacts)
        if iteration_log is not None:
            for j, hist in enumerate(report.norm_history):
                for it, norm in enumerate(hist, 1):
                    iteration_log.append(dict(scenario=cfg.scenario, h=repr(h), j=j,
                                              iter=it, stopping_norm=repr(norm)))
    return rows, reports


def run_channel_mc(cfg):
    """Monte Carlo expectation study against a cached large-J reference."""
    h = cfg.h_list[0]
    mesh_s, mesh_d, pairing = channel_meshes(h)
    delta_d = resolve_delta_d(cfg, pairing.length, h)
    bc = channel_bc()

    def expectation(J):
        samples, draws, spec = channel_samples(cfg, mesh_d, J=J)
        ctx, _ = make_context(samples, nu=cfg.nu, g=cfg.g, z=cfg.z, alpha=cfg.alpha,
                              delta_s=cfg.delta_s, delta_d=delta_d,
                              tol=cfg.tol, max_iters=cfg.max_iters)
        report = run_ensemble_ddm(ctx, mesh_s, mesh_d, pairing, bc,
                                  per_sample_stop=cfg.per_sample_stop,
                                  threads=cfg.threads)
        eu_s = mc_expectation(list(report.us))
        eu_d = mc_expectation(list(report.ud))
        return eu_s, eu_d, report, draws

    os.makedirs(cfg.out, exist_ok=True)
    n = max(1, round(1 / h))
    ref_path = os.path.join(cfg.out, f"mc_ref_seed{cfg.seed}_n{n}_J{cfg.J0}.npz")
    if os.path.exists(ref_path):
        data = np.load(ref_path)
        ref_s, ref_d = data["eu_s"], data["eu_d"]
        report0 = None
    else:
        ref_s, ref_d, report0, _ = expectation(cfg.J0)
        np.savez(ref_path, eu_s=ref_s, eu_d=ref_d)

    # norms need space objects; run the smallest J first to grab them
    mc_rows = []
    spaces = None
    for J in cfg.J_list:
        eu_s, eu_d, report, draws = expectation(J)
        spaces = (report.space_s, report.space_d)
        num_s = report.space_s.velocity_l2(eu_s - ref_s)
        den_s = report.space_s.velocity_l2(ref_s)
        num_d = report.space_d.velocity_l2(eu_d - ref_d)
        den_d = report.space_d.velocity_l2(ref_d)
        mc_rows.append(dict(J=J, err_eu_s=num_s / den_s, err_eu_d=num_d / den_d,
                            converged=bool(report.converged.all())))
        if cfg.dump_draws:
            dump = os.path.join(cfg.out, f"draws_J{J}.csv")
            cols = ["j"] + [f"Y{i}" for i in range(2 * cfg.field_nf + 1)]
            _write_csv(dump, cols, [dict(j=j, **{f"Y{i}": y for i, y in enumerate(d.Y)})
                                    for j, d in enumerate(draws)])
    return mc_rows, ref_path


def run_timing_comparison(cfg, h, J):
    """Shared-matrix vs per-sample wall time on the benchmark geometry."""
    mesh_s, mesh_d, pairing = manufactured_meshes(h)
    spec = RandomFieldSpec(a0=cfg.field_a0, sigma=cfg.field_sigma,
                           L_c=cfg.field_lc, n_f=cfg.field_nf)
    draws = draw_samples(spec, J, cfg.seed)
    scan = darcy_scan_points(mesh_d)
    samples, exacts = [], []
    for d in draws:
        k = float(evaluate_k(spec, d, 0.0)) * cfg.field_scale
        ms = ManufacturedSolution(k, k, nu=cfg.nu, g=cfg.g)
        samples.append(make_sample(ConstantConductivity(k), f_S=ms.f_S, f_D=ms.f_D,
                                   alpha=cfg.alpha, scan_points=scan))
        exacts.append(ms)
    delta_d = resolve_delta_d(cfg, pairing.length, h)
    ctx, _ = make_context(samples, nu=cfg.nu, g=cfg.g, z=cfg.z, alpha=cfg.alpha,
                          delta_s=cfg.delta_s, delta_d=delta_d,
                          tol=cfg.tol, max_iters=cfg.max_iters)
    bc = manufactured_bc(exacts)
    t0 = time.perf_counter()
    rep_e = run_ensemble_ddm(ctx, mesh_s, mesh_d, pairing, bc, record_history=False)
    t_ens = time.perf_counter() - t0
    t0 = time.perf_counter()
    rep_t = run_traditional_ddm(ctx, mesh_s, mesh_d, pairing, bc, record_history=False)
    t_trad = time.perf_counter() - t0
    return dict(J=J, h=repr(h), t_ensemble_s=t_ens, t_traditional_s=t_trad,
                speedup=t_trad / t_ens,
                nfact_ensemble=rep_e.n_factorizations,
                nfact_traditional=rep_t.n_factorizations), rep_e, rep_t, ctx


def run_symbol_sweep(cfg, L=np.pi, h=None):
    """rho_max over a (delta_s, delta_d) grid around the optimizer."""
    h = h or cfg.h_list[0]
    band = frequency_band(L, h)
    rows = []
    for ds in cfg.sweep_delta_s:
        dstar = optimized_delta_d(ds, cfg.nu, band)
        grid = np.linspace(0.5 * dstar, 2.0 * dstar, cfg.sweep_points)
        grid = np.sort(np.append(grid, dstar))
        for dd in grid:
            rows.append(dict(delta_s=ds, delta_d=dd, m_min=band.m_min,
                             m_max=band.m_max,
                             rho_max=worst_case_rho(ds, dd, cfg.nu, band)))
    return rows


def run_symbol_validation(cfg, n_cases=20):
    """Measured two-step contraction of the interface recursion vs the
    closed-form factor, over seeded random parameter tuples."""
    rng = np.random.default_rng(cfg.seed)
    rows = []
    for case in range(n_cases):
        delta_s = float(rng.uniform(0.05, 5.0))
        delta_d = float(rng.uniform(0.05, 5.0))
        nu = float(rng.uniform(0.2, 3.0))
        m = float(rng.uniform(0.3, 20.0))
        k_bar = float(rng.uniform(0.2, 5.0))
        k_j_inv = k_bar * float(rng.uniform(0.5, 1.5))
        rho = convergence_factor(delta_s, delta_d, nu, m)
        cs = symbol_iteration(delta_s, delta_d, nu, k_bar, k_j_inv, m, n_steps=16)
        ratios = measured_contraction(cs)
        measured = ratios[-1]
        rows.append(dict(case=case, delta_s=delta_s, delta_d=delta_d, nu=nu, m=m,
                         k_bar=k_bar, k_j_inv=k_j_inv, predicted_rho=rho,
                         measured_ratio=measured, abs_diff=abs(measured - rho)))
    return rows


def run_scenario(config):
    """Dispatch a validated ScenarioConfig; returns the list of files written."""
    cfg = config.validate()
    os.makedirs(cfg.out, exist_ok=True)
    written = []
    ok = True
    if cfg.scenario in ("manufactured", "small_k"):
        itlog = []
        rows, _ = run_manufactured(cfg, iteration_log=itlog)
        written.append(_write_csv(os.path.join(cfg.out, f"{cfg.scenario}.csv"),
                                  CSV_COLUMNS, rows))
        written.append(_write_csv(os.path.join(cfg.out, f"{cfg.scenario}_iterations.csv"),
                                  ["scenario", "h", "j", "iter", "stopping_norm"], itlog))
        ok = all(r["converged"] for r in rows)
        if cfg.compare_traditional:
            trow, _, _, _ = run_timing_comparison(cfg, cfg.h_list[0], cfg.J)
            written.append(_write_csv(os.path.join(cfg.out, "timing.csv"),
                                      list(trow.keys()), [trow]))
    elif cfg.scenario == "channel_mc":
        mc_rows, ref_path = run_channel_mc(cfg)
        written.append(_write_csv(os.path.join(cfg.out, "mc_convergence.csv"),
                                  ["J", "err_eu_s", "err_eu_d", "converged"], mc_rows))
        written.append(ref_path)
        ok = all(r["converged"] for r in mc_rows)
    elif cfg.scenario == "symbol_sweep":
        rows = run_symbol_sweep(cfg)
        written.append(_write_csv(os.path.join(cfg.out, "rho_sweep.csv"),
                                  ["delta_s", "delta_d", "m_min", "m_max", "rho_max"],
                                  rows))
    if not ok and not cfg.allow_nonconverged:
        raise RuntimeError("a requested run did not converge "
                           "(set allow_nonconverged = true to accept)")
    return written


# --------------------------------------------------------------------------
# command line


_SUBCOMMAND_DEFAULTS = {
    "converge": ScenarioConfig(scenario="manufactured"),
    "small-k": ScenarioConfig(scenario="small_k",
                              k_list=(1e-4, 2e-4, 3e-4),
                              robin_mode="explicit", delta_s=100.0, delta_d=50.0,
                              tol=1e-9, h_list=(1 / 8, 1 / 16, 1 / 32)),
    "mc": ScenarioConfig(scenario="channel_mc", h_list=(1 / 32,), J=40),
    "sweep": ScenarioConfig(scenario="symbol_sweep", h_list=(1 / 32,)),
    "symbol": ScenarioConfig(scenario="symbol_sweep", h_list=(1 / 32,)),
}


def main(argv=None):
    parser = argparse.ArgumentParser(prog="ensddm",
                                     description="Stokes-Darcy ensemble DDM benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [("converge", "benchmark convergence study"),
                           ("small-k", "small-conductivity study"),
                           ("mc", "channel Monte Carlo study"),
                           ("sweep", "Robin-parameter damping-factor sweep"),
                           ("symbol", "interface-recursion contraction check")]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="random seed")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for per-sample assembly")
    args = parser.parse_args(argv)

    cfg = _SUBCOMMAND_DEFAULTS[args.command]
    if args.config:
        cfg = load_config(args.config, base=cfg)
    overrides = {}
    if args.out:
        overrides["out"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads != 1:
        overrides["threads"] = args.threads
    if overrides:
        cfg = replace(cfg, **overrides).validate()

    try:
        if args.command == "symbol":
            os.makedirs(cfg.out, exist_ok=True)
            rows = run_symbol_validation(cfg)
            path = _write_csv(os.path.join(cfg.out, "symbol_contraction.csv"),
                              list(rows[0].keys()), rows)
            written = [path]
            worst = max(r["abs_diff"] for r in rows)
            print(f"max |measured - predicted| = {worst:.3e}")
            if worst > 1e-8:
                return 1
        else:
            written = run_scenario(cfg)
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
