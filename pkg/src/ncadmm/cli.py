"""Command-line interface.

Subcommands:
  gen-graph    sample a connected graph and write its edge list
  theory       print the certificate constants per sweep cell as JSON
  run          single trajectory of one sweep cell, with audit columns
  experiment   the full Monte Carlo sweep -> CSV (and optionally SVG)
  audit        per-iteration contraction audit of one cell -> CSV

Flags override config fields; ``--seed`` always wins.  Exit code is 0 on
success and 1 on any failure, with the reason on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .admm import reference_point, run_decentralized
from .analysis import (audit_contraction, edc_metric, gnorm_series,
                       optimize_delta, theory_constants, x_err_series)
from .config import (ConfigError, ExperimentConfig, default_config,
                     full_config, load_config)
from .experiment import (emit_csv, emit_svg, format_sci, preflight_reports,
                         run_experiment, trial_seeds)
from .noise import RandomStream, derive_ez_block
from .objective import make_problem
from .topology import (build_arc_matrices, gen_connected_graph,
                       spectral_summary, write_edge_list)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ncadmm",
        description="Decentralized consensus-ADMM simulator with additive "
                    "computation error and convergence certification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_graph = sub.add_parser("gen-graph", help="sample a connected graph")
    p_graph.add_argument("--nodes", type=int, required=True)
    p_graph.add_argument("--rho", type=float, required=True)
    p_graph.add_argument("--seed", type=int, required=True)
    p_graph.add_argument("--out", required=True)

    for name in ("theory", "run", "experiment", "audit"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON experiment config (defaults to the desk profile)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--trials", type=int, help="override the trial count")
        p.add_argument("--max-iter", type=int, help="override admm.max_iter")
        p.add_argument("--model", help="override the noise model kind")
        if name in ("run", "audit"):
            p.add_argument("--cell", required=True,
                           help="sweep cell as `c,sigma_e` (must match config values)")
            p.add_argument("--out", help="output CSV path (default: stdout)")
        if name == "experiment":
            p.add_argument("--full", action="store_true",
                           help="use the large profile (200 nodes, 100 trials)")
            p.add_argument("--jobs", type=int,
                           default=int(os.environ.get("NCADMM_JOBS", "1")),
                           help="concurrent trials (env NCADMM_JOBS as fallback)")
            p.add_argument("--csv", help="override output.csv_path")
            p.add_argument("--svg", help="override output.svg_path")
    return parser


def _load_with_overrides(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = load_config(args.config)
    elif getattr(args, "full", False):
        cfg = full_config()
    else:
        cfg = default_config()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.trials is not None:
        cfg = replace(cfg, trials=args.trials)
    if args.max_iter is not None:
        cfg = replace(cfg, admm=replace(cfg.admm, max_iter=args.max_iter))
    if args.model is not None:
        cfg = replace(cfg, noise=replace(cfg.noise, model=args.model))
    if getattr(args, "csv", None):
        cfg = replace(cfg, output=replace(cfg.output, csv_path=args.csv))
    if getattr(args, "svg", None):
        cfg = replace(cfg, output=replace(cfg.output, svg_path=args.svg))
    cfg.validate()
    return cfg


def _parse_cell(cfg: ExperimentConfig, text: str) -> int:
    try:
        c_str, sigma_str = text.split(",")
        cell = (float(c_str), float(sigma_str))
    except ValueError:
        raise ConfigError(f"--cell must be `c,sigma_e`, got {text!r}") from None
    cells = cfg.cells()
    if cell not in cells:
        raise ConfigError(f"cell {cell} is not in the config sweep {cells}")
    return cells.index(cell)


def _cell_trajectory(cfg: ExperimentConfig, cell_idx: int):
    """Trial 0 of one sweep cell, full record, plus its reference point."""
    graph_seed, problem_seed = trial_seeds(cfg, 0)
    g = gen_connected_graph(cfg.graph.n_nodes, cfg.graph.rho, graph_seed)
    obj, _ = make_problem(cfg.graph.n_nodes, cfg.problem.dim,
                          cfg.problem.obs_noise_var, cfg.problem.design_kind,
                          problem_seed)
    c, sigma_e = cfg.cells()[cell_idx]
    traj = run_decentralized(
        g, obj, c, cfg.noise_model(sigma_e), cfg.noise.placement_mode,
        cfg.admm.max_iter, RandomStream(seed=cfg.seed, trial=0, cell=cell_idx),
        record="full",
    )
    return g, obj, traj, reference_point(g, obj), c, sigma_e


def _write_lines(lines, out_path) -> None:
    text = "\n".join(lines) + "\n"
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w", encoding="ascii", newline="") as fh:
            fh.write(text)


def _cmd_gen_graph(args) -> int:
    g = gen_connected_graph(args.nodes, args.rho, args.seed)
    write_edge_list(g, args.out)
    print(f"wrote {args.out}: {g.n_nodes} nodes, {g.n_edges} edges")
    return 0


def _cmd_theory(args) -> int:
    cfg = _load_with_overrides(args)
    reports = preflight_reports(cfg)
    docs = []
    for report, (c, sigma_e) in zip(reports, cfg.cells()):
        if report is None:
            raise ConfigError(
                f"instance has m_f = 0 at c={c:g}; no certificate exists "
                "(try design_kind=well_conditioned)")
        docs.append(report.to_json_dict())
    print(json.dumps(docs[0] if len(docs) == 1 else docs, indent=2))
    return 0


def _cmd_run(args) -> int:
    cfg = _load_with_overrides(args)
    cell_idx = _parse_cell(cfg, args.cell)
    g, obj, traj, ref, c, sigma_e = _cell_trajectory(cfg, cell_idx)
    gnorm = gnorm_series(traj, ref)
    xerr = x_err_series(traj, ref)
    edc = edc_metric(traj, ref.x_central)
    am = build_arc_matrices(g)
    e_z = derive_ez_block(traj.e_xs, am)
    ez_norm = (e_z * e_z).sum(axis=(1, 2)) ** 0.5
    lines = ["k,gnorm_sq,x_err_2,edc_mean,gate_satisfied"]
    for k in range(len(traj)):
        gate = ""
        if k < traj.n_iter:
            gate = "1" if ez_norm[k] <= xerr[k + 1] else "0"
        lines.append(f"{k},{format_sci(gnorm[k])},{format_sci(xerr[k])},"
                     f"{format_sci(edc[k])},{gate}")
    _write_lines(lines, args.out)
    return 0


def _cmd_audit(args) -> int:
    cfg = _load_with_overrides(args)
    cell_idx = _parse_cell(cfg, args.cell)
    g, obj, traj, ref, c, sigma_e = _cell_trajectory(cfg, cell_idx)
    if obj.m_f <= 0.0:
        raise ConfigError("instance has m_f = 0; no certificate to audit "
                          "(try design_kind=well_conditioned)")
    spec = spectral_summary(build_arc_matrices(g))
    mu_star, delta_star = optimize_delta(spec, obj.m_f, obj.M_f, c)
    report = theory_constants(spec, obj.m_f, obj.M_f, c, mu_star, sigma_e=sigma_e)
    audit = audit_contraction(traj, ref, report)
    lines = ["k,gnorm_ratio,gate_satisfied,skipped,checked,x_bound_slack,violation"]
    contraction = set(audit.contraction_violations)
    x_bound = set(audit.x_bound_violations)
    for k in range(traj.n_iter):
        ratio = "" if audit.skipped[k] else format_sci(audit.ratios[k])
        slack = audit.x_bound_slack[k]
        slack_str = format_sci(slack) if np.isfinite(slack) else ""
        lines.append(f"{k},{ratio},{int(audit.gates[k])},{int(audit.skipped[k])},"
                     f"{int(audit.checked[k])},{slack_str},"
                     f"{int(k in contraction or k in x_bound)}")
    _write_lines(lines, args.out)
    print(f"delta_star={delta_star:.12g} at mu={mu_star:.6g}; "
          f"bound={audit.bound:.12g}; "
          f"violations: contraction={len(audit.contraction_violations)} "
          f"x_bound={len(audit.x_bound_violations)}", file=sys.stderr)
    return 0


def _cmd_experiment(args) -> int:
    cfg = _load_with_overrides(args)
    result = run_experiment(cfg, jobs=max(1, args.jobs))
    emit_csv(result, cfg.output.csv_path)
    print(f"wrote {cfg.output.csv_path} "
          f"({len(result.cells)} cells x {result.trials} trials, "
          f"{result.wall_time:.1f}s)")
    if cfg.output.svg_path:
        emit_svg(result, cfg.output.svg_path)
        print(f"wrote {cfg.output.svg_path}")
    return 0


_COMMANDS = {
    "gen-graph": _cmd_gen_graph,
    "theory": _cmd_theory,
    "run": _cmd_run,
    "experiment": _cmd_experiment,
    "audit": _cmd_audit,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
