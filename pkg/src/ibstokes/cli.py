"""Batch command-line interface for kernel certification and rate studies.

Every subcommand reads an optional JSON config file (flags override file
values), writes a manifest plus CSV artifacts into the output directory, and
exits 0 when all gates pass, 2 on validation or gate failure, and 3 when a
study aborts mid-run.  No timestamps are written: identical config and seed
give byte-identical outputs.
"""

from __future__ import annotations

import json
import os
import sys

import click
import numpy as np

from . import auxfun
from . import contour as ct
from . import dynamics as dyn
from . import experiments as ex
from . import kernels
from . import stepper as st

EXIT_GATE_FAIL = 2
EXIT_ABORT = 3


class GateFailure(click.ClickException):
    exit_code = EXIT_GATE_FAIL


class StudyAborted(click.ClickException):
    exit_code = EXIT_ABORT


def _common(f):
    f = click.option("--config", "config_path",
                     type=click.Path(exists=True, dir_okay=False),
                     default=None, help="JSON config; flags override it.")(f)
    f = click.option("--out", "out_dir", type=click.Path(file_okay=False),
                     default="runs", show_default=True,
                     help="Output directory for manifest and CSVs.")(f)
    f = click.option("--seed", type=int, default=7, show_default=True)(f)
    return f


def _kernel_opts(f):
    f = click.option("--kernel", "kernel_type",
                     type=click.Choice(["bump", "two_scale"]),
                     default="bump", show_default=True)(f)
    f = click.option("--r", "kernel_r", type=float, default=0.35,
                     show_default=True,
                     help="Fine-scale ratio for the two_scale kernel.")(f)
    f = click.option("--table", "table_path",
                     type=click.Path(exists=True, dir_okay=False),
                     default=None,
                     help="Precomputed aux-table CSV (skips the build).")(f)
    return f


def _contour_opts(f):
    f = click.option("--contour", "contour_kind",
                     type=click.Choice(["circle", "ellipse",
                                        "perturbed_circle"]),
                     default="perturbed_circle", show_default=True)(f)
    f = click.option("--contour-file",
                     type=click.Path(exists=True, dir_okay=False),
                     default=None, help="Contour CSV (overrides --contour).")(f)
    f = click.option("--bandwidth", "K", type=int, default=64,
                     show_default=True)(f)
    f = click.option("--rough-boost", type=float, default=1.0,
                     show_default=True)(f)
    f = click.option("--boost-from", type=int, default=8,
                     show_default=True)(f)
    f = click.option("--amp", type=float, default=0.1, show_default=True,
                     help="Perturbation amplitude of the perturbed circle.")(f)
    return f


def _merge_config(ctx: click.Context, values: dict) -> dict:
    """File < flag precedence; unknown file keys are rejected."""
    path = values.pop("config_path", None)
    if not path:
        return values
    try:
        with open(path) as fh:
            file_cfg = json.load(fh)
    except json.JSONDecodeError as err:
        raise click.UsageError(f"config {path}: not valid JSON ({err})")
    unknown = sorted(set(file_cfg) - set(values))
    if unknown:
        raise click.UsageError(
            f"config {path}: unknown keys {', '.join(unknown)}")
    from click.core import ParameterSource
    for key, val in file_cfg.items():
        if ctx.get_parameter_source(key) != ParameterSource.COMMANDLINE:
            values[key] = val
    return values


def _build_profile(cfg: dict):
    spec = {"type": cfg["kernel_type"]}
    if cfg["kernel_type"] == "two_scale":
        spec["r"] = cfg["kernel_r"]
    profile, _ = kernels.kernel_from_config(spec)
    return profile


def _load_or_build_table(cfg: dict, profile) -> auxfun.AuxTable:
    if cfg.get("table_path"):
        table = auxfun.load_table(cfg["table_path"])
        if table.kernel_id != profile.label:
            raise click.UsageError(
                f"table {cfg['table_path']} was built for kernel "
                f"{table.kernel_id!r}, not {profile.label!r}")
        return table
    click.echo(f"building aux table for {profile.label} ...", err=True)
    return auxfun.build_aux_table(profile)


def _build_contour(cfg: dict) -> ct.Contour:
    if cfg.get("contour_file"):
        return ct.load_contour(cfg["contour_file"])
    kind = cfg["contour_kind"]
    params = {"K": cfg["K"]}
    if kind == "perturbed_circle":
        params.update(seed=cfg["seed"], theta=cfg.get("theta", 0.5),
                      amp=cfg.get("amp", 0.1),
                      rough_boost=cfg.get("rough_boost", 1.0),
                      boost_from=cfg.get("boost_from", 8))
    return ct.make_test_contour(kind, **params)


def _write_manifest(out_dir: str, name: str, cfg: dict, outputs: list,
                    passed: bool, payload: dict) -> str:
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "subcommand": name,
        "config": {k: v for k, v in cfg.items() if not k.startswith("_")},
        "outputs": outputs,
        "passed": bool(passed),
        "results": payload,
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")
    return path


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def _write_rates_csv(out_dir: str, filename: str, reports: dict) -> str:
    os.makedirs(out_dir, exist_ok=True)
    names = list(reports)
    first = reports[names[0]]
    cols = [first.abscissae] + [reports[n].values for n in names]
    path = os.path.join(out_dir, filename)
    np.savetxt(path, np.column_stack(cols), delimiter=",",
               header=",".join(["abscissa"] + names), comments="",
               fmt="%.17g")
    return path


def _finish(name, cfg, out_dir, reports: dict, extra_outputs=(),
            extra_payload=None) -> None:
    payload = {n: r.to_dict() for n, r in reports.items()}
    if extra_payload:
        payload.update(extra_payload)
    passed = all(r.passed is not False for r in reports.values())
    csv_path = _write_rates_csv(out_dir, f"{name.replace('-', '_')}_rates.csv",
                                reports)
    outputs = [os.path.basename(csv_path)] + list(extra_outputs)
    _write_manifest(out_dir, name, cfg, outputs, passed, payload)
    for n, r in reports.items():
        verdict = {True: "pass", False: "FAIL", None: "n/a"}[r.passed]
        click.echo(f"{n}: slope={r.slope:.4f} predicted={r.predicted} "
                   f"[{verdict}]")
    if not passed:
        raise GateFailure(f"{name}: rate gates failed (see {out_dir})")


@click.group()
def main():
    """Immersed-boundary Stokes contour studies."""


@main.group()
def kernel():
    """Kernel construction and certification."""


@kernel.command()
@_common
@click.option("--type", "kernel_type",
              type=click.Choice(["bump", "two_scale", "peskin"]),
              default="bump", show_default=True)
@click.option("--r", "kernel_r", type=float, default=0.35, show_default=True)
@click.option("--tolerance", type=float, default=1e-8, show_default=True,
              help="|m1| gate for the two_scale construction.")
@click.pass_context
def certify(ctx, **kwargs):
    """Compute and gate kernel moments; writes certificate JSON."""
    cfg = _merge_config(ctx, kwargs)
    spec = {"type": {"peskin": "peskin4"}.get(cfg["kernel_type"],
                                              cfg["kernel_type"])}
    if cfg["kernel_type"] == "two_scale":
        spec.update(r=cfg["kernel_r"], tolerance=cfg["tolerance"])
    try:
        _, cert = kernels.kernel_from_config(spec)
    except (kernels.NoAdmissibleRootError, ValueError,
            ArithmeticError) as err:
        raise click.UsageError(str(err))
    os.makedirs(cfg["out_dir"], exist_ok=True)
    cert_path = os.path.join(cfg["out_dir"], "certificate.json")
    with open(cert_path, "w") as fh:
        fh.write(cert.to_json())
        fh.write("\n")
    passed = True
    if cfg["kernel_type"] == "two_scale":
        passed = abs(cert.m1) < cfg["tolerance"]
    _write_manifest(cfg["out_dir"], "kernel-certify", cfg,
                    ["certificate.json"], passed,
                    {"m1": cert.m1, "m2": cert.m2,
                     "m1_directional": cert.m1_directional})
    click.echo(cert.to_json())
    if not passed:
        raise GateFailure(f"|m1| = {abs(cert.m1):.3e} >= {cfg['tolerance']:g}")


@main.command("aux-table")
@_common
@_kernel_opts
@click.option("--x-max", type=float, default=40.0, show_default=True)
@click.option("--n", "n_nodes", type=int, default=4096, show_default=True)
@click.pass_context
def aux_table(ctx, **kwargs):
    """Build, verify, and save the auxiliary-function table."""
    cfg = _merge_config(ctx, kwargs)
    profile = _build_profile(cfg)
    try:
        table = auxfun.build_aux_table(profile, x_max=cfg["x_max"],
                                       n=cfg["n_nodes"])
    except auxfun.TableRejectedError as err:
        raise StudyAborted(f"table rejected: {err}")
    os.makedirs(cfg["out_dir"], exist_ok=True)
    table_path = os.path.join(cfg["out_dir"], "aux_table.csv")
    auxfun.save_table(table, table_path)
    checks = {
        "int_f2_minus_4m1": auxfun.integral_identity(table, "f2")
        - 4.0 * table.m1,
        "int_f3_plus_4m1": auxfun.integral_identity(table, "f3")
        + 4.0 * table.m1,
    }
    _write_manifest(cfg["out_dir"], "aux-table", cfg, ["aux_table.csv"],
                    True, {"m1": table.m1, "m2": table.tail_m2, **checks})
    click.echo(f"table written to {table_path} "
               f"(m1={table.m1:.6g}, m2={table.tail_m2:.6g})")


@main.command("static-error")
@_common
@_kernel_opts
@_contour_opts
@click.option("--theta", type=float, default=0.5, show_default=True)
@click.option("--law", "law_kind", type=click.Choice(["hookean", "curvature"]),
              default="hookean", show_default=True)
@click.option("--eps-count", type=int, default=6, show_default=True)
@click.pass_context
def static_error(ctx, **kwargs):
    """Static regularization-error rates in L2, H1, and the normal part."""
    cfg = _merge_config(ctx, kwargs)
    profile = _build_profile(cfg)
    table = _load_or_build_table(cfg, profile)
    contour = _build_contour(cfg)
    law = ct.HOOKEAN if cfg["law_kind"] == "hookean" \
        else ct.ElasticityLaw(kind="curvature")
    lam = ct.well_stretched_lambda(contour)
    eps_list = ex.default_eps_grid(lam, count=cfg["eps_count"])
    reports = ex.static_error_study(contour, law, table, eps_list,
                                    theta=cfg["theta"])
    _finish("static-error", cfg, cfg["out_dir"], reports,
            extra_payload={"lambda": lam})


@main.command("leading-term")
@_common
@_kernel_opts
@_contour_opts
@click.option("--theta", type=float, default=0.5, show_default=True)
@click.option("--eps-count", type=int, default=6, show_default=True)
@click.pass_context
def leading_term(ctx, **kwargs):
    """Rate of the error with its predicted first-order term removed."""
    cfg = _merge_config(ctx, kwargs)
    profile = _build_profile(cfg)
    table = _load_or_build_table(cfg, profile)
    contour = _build_contour(cfg)
    lam = ct.well_stretched_lambda(contour)
    eps_list = ex.default_eps_grid(lam, count=cfg["eps_count"])
    report = ex.leading_term_check(contour, ct.HOOKEAN, table, eps_list,
                                   theta=cfg["theta"])
    _finish("leading-term", cfg, cfg["out_dir"],
            {"corrected_l2": report}, extra_payload={"lambda": lam})


@main.command("dynamic-error")
@_common
@_kernel_opts
@_contour_opts
@click.option("--theta", type=float, default=0.5, show_default=True)
@click.option("--T", "T", type=float, default=0.5, show_default=True)
@click.option("--dt", type=float, default=2e-3, show_default=True)
@click.option("--eps-count", type=int, default=6, show_default=True)
@click.pass_context
def dynamic_error(ctx, **kwargs):
    """Trajectory error rates of the regularized versus exact problem."""
    cfg = _merge_config(ctx, kwargs)
    profile = _build_profile(cfg)
    table = _load_or_build_table(cfg, profile)
    contour = _build_contour(cfg)
    lam = ct.well_stretched_lambda(contour)
    eps_list = ex.default_eps_grid(lam, count=cfg["eps_count"])
    try:
        reports = ex.dynamic_error_study(
            contour, table, eps_list, T=cfg["T"], theta=cfg["theta"],
            dt=cfg["dt"])
    except ex.StudyAbortError as err:
        raise StudyAborted(_abort(cfg["out_dir"], "dynamic-error", err))
    _finish("dynamic-error", cfg, cfg["out_dir"], reports,
            extra_payload={"lambda": lam})


@main.command("eps-n")
@_common
@_kernel_opts
@_contour_opts
@click.option("--eps-tilde", type=float, default=0.02, show_default=True,
              help="Regularization parameter relative to lambda.")
@click.option("--n-list", default="8,16,32,64", show_default=True,
              help="Comma-separated mode counts.")
@click.option("--theta", type=float, default=0.5, show_default=True,
              help="Spectral decay of the seeded test contour.")
@click.option("--T", "T", type=float, default=0.4, show_default=True)
@click.option("--dt", type=float, default=2e-3, show_default=True)
@click.pass_context
def eps_n(ctx, **kwargs):
    """Error of the projected problem versus the mode count N."""
    cfg = _merge_config(ctx, kwargs)
    profile = _build_profile(cfg)
    table = _load_or_build_table(cfg, profile)
    contour = _build_contour(cfg)
    lam = ct.well_stretched_lambda(contour)
    eps = cfg["eps_tilde"] * lam
    N_list = [int(v) for v in str(cfg["n_list"]).split(",")]
    moll = dyn.mollified_stokeslet(profile, eps)
    try:
        report = ex.eps_N_study(contour, eps, N_list, moll, table=table,
                                T=cfg["T"], dt=cfg["dt"])
    except ex.StudyAbortError as err:
        raise StudyAborted(_abort(cfg["out_dir"], "eps-n", err))
    gates = {}
    passed = True
    if "plateau_change" in report.extras:
        gates["plateau_change"] = report.extras["plateau_change"]
        passed &= report.extras["plateau_change"] < 0.10
    if "full_N_rel_gap" in report.extras:
        gates["full_N_rel_gap"] = report.extras["full_N_rel_gap"]
        passed &= report.extras["full_N_rel_gap"] < 0.05
    report.passed = bool(passed)
    _finish("eps-n", cfg, cfg["out_dir"], {"eps_N_h1": report},
            extra_payload={"lambda": lam, "eps": eps, **gates})


@main.command("model-problem")
@_common
@click.option("--kernel", "kernel_type",
              type=click.Choice(["bump", "two_scale"]),
              default="bump", show_default=True)
@click.option("--r", "kernel_r", type=float, default=0.35, show_default=True)
@click.option("--f1", type=float, default=1.0, show_default=True)
@click.option("--f2", type=float, default=1.0, show_default=True)
@click.pass_context
def model_problem(ctx, **kwargs):
    """Mollification error of the straight-segment flow at the origin."""
    cfg = _merge_config(ctx, kwargs)
    profile = _build_profile(cfg)
    reports = ex.model_problem_check(profile, f=(cfg["f1"], cfg["f2"]))
    _finish("model-problem", cfg, cfg["out_dir"], reports)


@main.command()
@_common
@_kernel_opts
@_contour_opts
@click.option("--variant", type=click.Choice(["exact", "regularized",
                                              "eps_n"]),
              default="exact", show_default=True)
@click.option("--eps", type=float, default=None)
@click.option("--n", "N", type=int, default=None)
@click.option("--T", "T", type=float, default=1.0, show_default=True)
@click.option("--dt", type=float, default=2e-3, show_default=True)
@click.option("--stride", type=int, default=10, show_default=True)
@click.option("--snapshots", is_flag=True, default=False,
              help="Also write one contour CSV per recorded snapshot.")
@click.pass_context
def evolve(ctx, **kwargs):
    """Run one trajectory and gate its conservation properties."""
    cfg = _merge_config(ctx, kwargs)
    variant = "projected" if cfg["variant"] == "eps_n" else cfg["variant"]
    if variant != "exact" and cfg["eps"] is None:
        raise click.UsageError(f"variant {cfg['variant']} requires --eps")
    if variant == "projected" and cfg["N"] is None:
        raise click.UsageError("variant eps_n requires --n")
    contour = _build_contour(cfg)
    tables = {}
    if variant == "regularized":
        profile = _build_profile(cfg)
        tables["aux"] = _load_or_build_table(cfg, profile)
        tables["moll"] = dyn.mollified_stokeslet(profile, cfg["eps"])
    elif variant == "projected":
        profile = _build_profile(cfg)
        tables["moll"] = dyn.mollified_stokeslet(profile, cfg["eps"])
    config = st.EvolveConfig(dt=cfg["dt"], T=cfg["T"], variant=variant,
                             eps=cfg["eps"], N=cfg["N"],
                             diagnostics_stride=cfg["stride"])
    traj = st.evolve(contour, config, tables)
    if traj.status != "completed":
        raise StudyAborted(
            _abort(cfg["out_dir"], "evolve",
                   ex.StudyAbortError(f"trajectory status {traj.status} "
                                      f"at t={traj.stop_time:g}",
                                      {"status": traj.status})))
    os.makedirs(cfg["out_dir"], exist_ok=True)
    traj_path = os.path.join(cfg["out_dir"], "trajectory.csv")
    st.save_trajectory(traj, traj_path)
    outputs = ["trajectory.csv"]
    if cfg["snapshots"]:
        for i, snap in enumerate(traj.contours):
            name = f"contour_{i:04d}.csv"
            ct.save_contour(snap, os.path.join(cfg["out_dir"], name))
            outputs.append(name)
    energy = traj.diagnostics["xs_l2"]
    a = traj.diagnostics["area"]
    rise = float(np.diff(energy).max()) if energy.size > 1 else 0.0
    drift = float(np.abs(a - a[0]).max() / abs(a[0]))
    area_gate = 1e-6 if variant == "projected" else 1e-5
    passed = rise <= 1e-8 and drift < area_gate
    _write_manifest(cfg["out_dir"], "evolve", cfg, outputs, passed,
                    {"energy_max_rise": rise, "area_rel_drift": drift,
                     "area_gate": area_gate, "final_time": traj.stop_time,
                     "status": traj.status})
    click.echo(f"energy max rise {rise:.3e}, area drift {drift:.3e} "
               f"(gate {area_gate:g})")
    if not passed:
        raise GateFailure("conservation gates failed")


def _abort(out_dir: str, name: str, err: ex.StudyAbortError) -> str:
    """Write the abort diagnostics file and return the message."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "abort_diagnostics.json")
    with open(path, "w") as fh:
        json.dump({"subcommand": name, "message": str(err),
                   "diagnostics": err.diagnostics}, fh, indent=2,
                  default=_jsonable)
        fh.write("\n")
    return f"{err} (diagnostics in {path})"


if __name__ == "__main__":
    main()
