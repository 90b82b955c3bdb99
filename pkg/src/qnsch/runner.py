"""Run orchestration: initial data, time loop, diagnostics CSV, checkpoints, summary."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .checkpoint import Checkpoint, read_checkpoint, write_checkpoint
from .config import AUTO, RunConfig
from .errors import CheckpointError, ConfigError, ConfinementError, DivergenceError
from .potentials import ConfinementSpec, Params
from .solver import Model, SchemeConfig, Stepper, project_state, stability_budget
from .spectral import Grid
from .state import State, build_initial_data, mollified_initial_density

log = logging.getLogger(__name__)

CSV_SCHEMA = "# qnsch diagnostics schema 1"
EXIT_OK, EXIT_USAGE, EXIT_CONFINEMENT, EXIT_DIVERGENCE, EXIT_CHECKPOINT = 0, 1, 2, 3, 4


def csv_columns(dim: int) -> list[str]:
    cols = ["step", "time", "mass_rho", "mass_phi"] + [f"momentum_{a}" for a in "xyz"[:dim]]
    cols += ["E_total", "E_sigma_delta", "E_BD", "D_visc", "D_mup", "P_L1", "P_chi_L1",
             "rho_min", "rho_max", "energy_defect", "E_GL", "bd_lap_rho", "bd_curvature", "bd_rotation"]
    cols += [f"tail_{M:g}" for M in dg.TAIL_THRESHOLDS]
    return cols


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


@dataclass
class RunResult:
    status: int
    message: str
    config: RunConfig
    records: list = field(default_factory=list)
    final_state: State | None = None
    summary: dict = field(default_factory=dict)
    out_dir: Path | None = None


def make_params(cfg: RunConfig) -> Params:
    return Params(rho1=cfg["physics.rho1"], beta=cfg["physics.beta"], omega=cfg["physics.omega"],
                  sigma=cfg["physics.sigma"], delta=cfg["physics.delta"], sigma0=cfg["physics.sigma0"])


def make_grid(cfg: RunConfig) -> Grid:
    return Grid(cfg["scheme.dim"], cfg["scheme.n"])


def initial_state(cfg: RunConfig, grid: Grid, params: Params) -> State:
    amp = cfg["init.amplitude"]
    data = build_initial_data(cfg["init.kind"], grid, params, seed=cfg["init.seed"],
                              amplitude=None if amp == AUTO else amp, velocity=cfg["init.velocity"])
    rho0 = data.rho0
    if cfg["init.mollify"] and cfg["physics.level"] != "target" and params.delta > 0:
        rho0 = mollified_initial_density(rho0, params.delta, grid, cfg["init.profile"])
    return project_state(State(0.0, data.u0, rho0), grid)


def resolve(cfg: RunConfig, state: State) -> RunConfig:
    """Replace every ``auto`` entry by the concrete value used, so restarts are exact."""
    grid, params = make_grid(cfg), make_params(cfg)
    upd = {}
    rho_bar = float(np.mean(state.rho)) if cfg["scheme.rho_bar"] == AUTO else cfg["scheme.rho_bar"]
    upd["scheme.rho_bar"] = rho_bar
    level = cfg["physics.level"]
    bare = Model(grid, params, level)
    if level != "target" and params.delta > 0:
        kappa = None if cfg["physics.kappa"] == AUTO else cfg["physics.kappa"]
        dt0 = cfg["scheme.dt"]
        horizon = cfg["scheme.steps"] * (dt0 if dt0 != AUTO else 1.0)
        e0 = dg.compute_energies(state, bare).regularised
        spec = ConfinementSpec.for_run(params, grid.dim, e0, horizon, rho_bar, kappa)
        big_r = spec.big_r if cfg["physics.big_r"] == AUTO else cfg["physics.big_r"]
        upd["physics.kappa"] = spec.kappa
        upd["physics.big_r"] = big_r
    if cfg["scheme.dt"] == AUTO:
        sc = SchemeConfig(dt=1.0, scheme=cfg["scheme.scheme"], safety=cfg["scheme.safety"], rho_bar=rho_bar)
        upd["scheme.dt"] = stability_budget(state, bare, sc)
    return cfg.resolved(**upd)


def build_model(cfg: RunConfig) -> tuple[Model, SchemeConfig]:
    grid, params = make_grid(cfg), make_params(cfg)
    level = cfg["physics.level"]
    conf = None
    if level != "target" and params.delta > 0:
        conf = ConfinementSpec(params.rho_lower, params.theta, params.delta,
                               cfg["physics.kappa"], cfg["physics.big_r"])
    model = Model(grid, params, level, conf)
    scheme = SchemeConfig(dt=cfg["scheme.dt"], scheme=cfg["scheme.scheme"], safety=cfg["scheme.safety"],
                          retry_on_confinement=cfg["scheme.retry_on_confinement"], rho_bar=cfg["scheme.rho_bar"])
    return model, scheme


def _state_payloads(prefix: str, state: State) -> dict:
    out = {f"{prefix}u{i}": c for i, c in enumerate(state.u)}
    out[f"{prefix}rho"] = state.rho
    return out


def save_checkpoint(path, cfg: RunConfig, step: int, state: State, prev: State | None):
    d = state.u.shape[0]
    payloads = _state_payloads("", state)
    if prev is not None:
        payloads.update(_state_payloads("prev_", prev))
        payloads["prev_time"] = np.array([prev.time])
    write_checkpoint(path, Checkpoint(d, state.rho.shape[0], step, state.time, cfg.to_json(), payloads))


def load_state(ckpt: Checkpoint, prefix: str = "") -> State:
    u = np.stack([ckpt.array(f"{prefix}u{i}") for i in range(ckpt.dim)])
    time = ckpt.time if not prefix else float(ckpt.array(f"{prefix}time")[0])
    return State(time, u, ckpt.array(f"{prefix}rho"))


class _CsvSink:
    def __init__(self, path: Path | None, dim: int):
        self.cols = csv_columns(dim)
        self.buf = io.StringIO()
        self.buf.write(CSV_SCHEMA + "\n")
        self.writer = csv.writer(self.buf, lineterminator="\n")
        self.writer.writerow(self.cols)
        self.path = path

    def add(self, rec: dg.DiagnosticsRecord):
        row = rec.row()
        self.writer.writerow([_fmt(row[c]) for c in self.cols])

    def close(self):
        if self.path is not None:
            self.path.write_text(self.buf.getvalue())


def run_loop(cfg: RunConfig, state: State, out_dir=None, start_step: int = 0, prev: State | None = None,
             quiet: bool = False) -> RunResult:
    """Integrate from ``state`` (at ``start_step``) up to ``scheme.steps``."""
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    model, scheme = build_model(cfg)
    stepper = Stepper(model, scheme)
    if prev is not None and scheme.scheme == "imex_bdf2":
        stepper.set_history(prev)
    sink = _CsvSink(out / "diagnostics.csv" if out else None, model.grid.dim)
    total = cfg["scheme.steps"]
    cadence = max(1, cfg["output.cadence"])
    snap_every = max(1, cfg["output.snapshot_every"])
    ck_every = cfg["output.checkpoint_every"]

    records = [dg.make_record(start_step, state, model)]
    sink.add(records[0])
    snaps = [State(state.time, np.empty(0), state.rho)]
    e_prev = dg.compute_energies(state, model).regularised
    worst = 0.0
    status, message = EXIT_OK, "completed"
    stepno = start_step
    try:
        while stepno < total:
            new = stepper.step(state)
            stepno += 1
            e_new = dg.compute_energies(new, model).regularised
            defect = e_new - e_prev + (new.time - state.time) * dg.compute_dissipation(new, model).total
            if abs(defect) >= abs(worst):
                worst = defect
            e_prev, state = e_new, new
            if stepno % snap_every == 0 or stepno == total:
                snaps.append(State(state.time, np.empty(0), state.rho))
            if stepno % cadence == 0 or stepno == total:
                rec = dg.make_record(stepno, state, model, energy_defect=worst)
                records.append(rec)
                sink.add(rec)
                worst = 0.0
                if not quiet and stepno % (cadence * 10) == 0:
                    log.info("step %d t=%.6g E=%.10g rho in [%.6g, %.6g]", stepno, state.time,
                             rec.E_sigma_delta, rec.rho_min, rec.rho_max)
            if out is not None and ck_every and stepno % ck_every == 0:
                save_checkpoint(out / f"checkpoint_{stepno:08d}.qck", cfg, stepno, state, stepper.prev_state)
    except ConfinementError as exc:
        status, message = EXIT_CONFINEMENT, str(exc)
    except DivergenceError as exc:
        status, message = EXIT_DIVERGENCE, str(exc)
    sink.close()

    summary = {"status": status, "message": message, "steps_completed": stepno,
               "final_time": state.time, "config": cfg.values,
               "conservation": dg.conservation_drift(records)}
    if len(snaps) >= 2:
        summary["pressure"] = dg.pressure_integrability(snaps, model)
        summary["tails"] = dg.equi_integrability_tail(snaps, model)
    if out is not None:
        if status == EXIT_OK:
            save_checkpoint(out / "final.qck", cfg, stepno, state, stepper.prev_state)
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if status != EXIT_OK:
        log.error("%s", message)
    return RunResult(status, message, cfg, records, state, summary, out)


def simulate(cfg: RunConfig, out_dir=None, quiet: bool = False) -> RunResult:
    grid, params = make_grid(cfg), make_params(cfg)
    params.check_dim(grid.dim)
    state = initial_state(cfg, grid, params)
    cfg = resolve(cfg, state)
    return run_loop(cfg, state, out_dir, quiet=quiet)


def resume(checkpoint_path, out_dir=None, overrides=None, base: RunConfig | None = None,
           quiet: bool = False) -> RunResult:
    ckpt = read_checkpoint(checkpoint_path)
    stored = RunConfig.from_json(ckpt.params)
    if base is not None:
        merged = dict(base.values)
        for key, value in merged.items():
            if value == AUTO:
                merged[key] = stored[key]
        stored = RunConfig(merged)
    cfg = stored.with_overrides(overrides)
    want = (cfg["scheme.dim"], cfg["scheme.n"])
    if want != (ckpt.dim, ckpt.n):
        raise CheckpointError(
            f"grid mismatch: checkpoint holds {(ckpt.n,) * ckpt.dim}, configuration asks for {(want[1],) * want[0]}")
    state = load_state(ckpt)
    prev = load_state(ckpt, "prev_") if "prev_rho" in ckpt.payloads else None
    return run_loop(cfg, state, out_dir, start_step=ckpt.step, prev=prev, quiet=quiet)


PLOT_COLUMNS = {
    "plot_energy.gp": ("time", ["E_total", "E_sigma_delta"], "energy"),
    "plot_bd_entropy.gp": ("time", ["E_BD"], "BD entropy"),
    "plot_tails.gp": ("time", [f"tail_{M:g}" for M in dg.TAIL_THRESHOLDS], "pressure tail mass"),
}


def write_plot_scripts(csv_path, out_dir=None) -> list[Path]:
    """Emit gnuplot scripts for energy, BD entropy and the pressure tail table."""
    csv_path = Path(csv_path)
    try:
        lines = csv_path.read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read {csv_path}: {exc}") from None
    header = next((ln for ln in lines if ln and not ln.startswith("#")), "")
    cols = header.split(",")
    out = Path(out_dir) if out_dir is not None else csv_path.parent
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, (xcol, ycols, label) in PLOT_COLUMNS.items():
        for c in [xcol] + ycols:
            if c not in cols:
                raise ConfigError(f"{csv_path}: missing column {c!r}")
        plots = ", ".join(
            f"'{csv_path.resolve()}' using {cols.index(xcol) + 1}:{cols.index(c) + 1} with lines title '{c}'"
            for c in ycols)
        logscale = "set logscale y\n" if name == "plot_tails.gp" else ""
        script = (
            "set datafile separator ','\n"
            "set datafile commentschars '#'\n"
            "set key autotitle columnhead\n"
            f"set xlabel '{xcol}'\nset ylabel '{label}'\n{logscale}"
            f"set terminal pngcairo size 900,600\nset output '{Path(name).stem}.png'\n"
            f"plot {plots}\n")
        path = out / name
        path.write_text(script)
        written.append(path)
    return written
