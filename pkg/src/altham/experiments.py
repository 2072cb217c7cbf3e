"""Experiment configuration schema, figure presets and runners used by the CLI."""
from __future__ import annotations

import copy
from functools import partial
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import __version__
from .altered import SparsityPattern
from .altmin import AltMinConfig, HamiltonianFamily, altmin_measurement, altmin_variational
from .annealer import AnnealConfig, anneal, anneal_distribution
from .models import (
    DiagonalLandscape,
    LocalHamiltonian,
    aklt_hamiltonian,
    exhaustive_maxcut,
    grover_hamiltonian,
    load_projector_list,
    maxcut_hamiltonian,
    qmc_hamiltonian,
    random_regular_graph,
    read_edge_list,
    read_landscape_csv,
    well_landscape,
    write_edge_list,
    write_landscape_csv,
)
from .qop import StateVector, spectral
from .rng import derive
from .settings import override
from .stats import spectral_profile, write_profile_csv
from .theory import theorem1_bound_check, theorem2_bound_check, write_reports_csv

__all__ = [
    "ExperimentConfig",
    "PRESETS",
    "preset",
    "build_model",
    "run_repetition",
    "RunResult",
    "RUN_KEY_MARK",
]

_STRICT = ConfigDict(extra="forbid")
# brackets the offending nested key inside validator messages
RUN_KEY_MARK = "\x1f"


class ModelSpec(BaseModel):
    model_config = _STRICT
    type: Literal["maxcut", "qmc", "aklt", "grover", "well", "edges", "landscape_csv", "projectors"]
    n: int | None = Field(default=None, ge=1)
    degree: int = Field(default=4, ge=1)
    graph: Literal["regular"] = "regular"
    term_form: Literal["projector", "literal"] = "projector"
    periodic: bool = False
    marked: int = 0
    n_anchors: int = Field(default=10, ge=0)
    distance_weight: float = 2.0
    metric: Literal["hamming", "index"] = "hamming"
    placement: Literal["random", "adjacent"] = "random"
    path: str | None = None
    edge_model: Literal["maxcut", "qmc"] = "maxcut"
    site_dims: list[int] | None = None
    # instance seed; defaults to the master seed
    seed: int | None = None

    @model_validator(mode="after")
    def _check(self):
        needs_n = {"maxcut", "qmc", "aklt", "grover", "well"}
        if self.type in needs_n and self.n is None:
            raise ValueError(f"model type {self.type!r} needs n")
        if self.type in ("edges", "landscape_csv", "projectors") and not self.path:
            raise ValueError(f"model type {self.type!r} needs path")
        if self.type == "projectors" and not self.site_dims:
            raise ValueError("model type 'projectors' needs site_dims")
        return self


class FamilySpec(BaseModel):
    model_config = _STRICT
    type: Literal["local", "sparse_band", "sparse_hamming"] = "local"
    t: int = Field(default=4, ge=1)


class ProfileRun(BaseModel):
    model_config = _STRICT
    stride: int = Field(default=50, ge=1)
    source: Literal["base", "altered"] = "base"
    target: Literal["base", "altered"] = "altered"
    quartile_rule: Literal["strict", "inclusive"] = "strict"


class AltMinRun(BaseModel):
    model_config = _STRICT
    L: int = Field(ge=1)
    K: int = Field(ge=1)
    mode: Literal["trajectory", "exact_distribution"] = "exact_distribution"
    trajectory: Literal["population", "single"] = "population"
    tie_break: Literal["copy", "index"] = "copy"
    initial: str = "plus"


class VariationalRun(BaseModel):
    model_config = _STRICT
    L: int = Field(default=50, ge=1)
    schedules: list[Literal["standard", "hybrid", "altered"]] = ["standard", "hybrid", "altered"]
    initial: str = "plus"
    theta_mode: Literal["line_search", "prescribed"] = "line_search"
    stall_window: int = Field(default=5, ge=1)
    stall_tol: float = Field(default=1e-4, ge=0)


class AnnealRun(BaseModel):
    model_config = _STRICT
    steps: int = Field(default=50000, ge=1)
    beta_start: float = Field(default=0.1, gt=0)
    beta_end: float = Field(default=50.0, gt=0)
    schedule: Literal["geometric", "linear"] = "geometric"
    mode: Literal["chain", "distribution"] = "chain"
    record_every: int = Field(default=100, ge=1)


class TheoryRun(BaseModel):
    model_config = _STRICT
    n_samples: int = Field(default=10000, ge=100)
    n_states: int = Field(default=5, ge=1)
    state: Literal["haar", "mixed", "product"] = "haar"
    mixed_rank: int = Field(default=3, ge=1)


class ModelDumpRun(BaseModel):
    model_config = _STRICT
    ground_energy: bool = True


_RUN_MODELS = {
    "profile": ProfileRun,
    "altmin": AltMinRun,
    "variational": VariationalRun,
    "anneal": AnnealRun,
    "theory-check": TheoryRun,
    "model-dump": ModelDumpRun,
}


class ExperimentConfig(BaseModel):
    model_config = _STRICT
    kind: Literal["profile", "altmin", "variational", "anneal", "theory-check", "model-dump"]
    seed: int = 0
    repetitions: int = Field(default=1, ge=1)
    model: ModelSpec
    family: Union[FamilySpec, list[FamilySpec]] = FamilySpec()
    run: dict[str, Any] = {}
    output_dir: str = "out"
    max_dim: int | None = Field(default=None, ge=2)
    label: str = ""

    @model_validator(mode="after")
    def _check_run(self):
        try:
            self.run = _RUN_MODELS[self.kind].model_validate(self.run).model_dump()
        except ValidationError as exc:
            first = exc.errors()[0]
            key = ".".join(["run", *map(str, first["loc"])])
            raise ValueError(f"{RUN_KEY_MARK}{key}{RUN_KEY_MARK} {first['msg']}") from None
        return self

    @property
    def families(self) -> list[FamilySpec]:
        return self.family if isinstance(self.family, list) else [self.family]

    @property
    def run_params(self) -> BaseModel:
        return _RUN_MODELS[self.kind].model_validate(self.run)


# -- presets --------------------------------------------------------------------------------

_QMC12 = {"type": "qmc", "n": 12, "degree": 4}
_MC12 = {"type": "maxcut", "n": 12, "degree": 4}
_AKLT8 = {"type": "aklt", "n": 8}
_WELL = {"type": "well", "n": 12, "n_anchors": 10}
_WELL_FLAT = {"type": "well", "n": 12, "n_anchors": 10, "metric": "index", "placement": "adjacent"}

PRESETS: dict[str, dict] = {
    "fig1a": {"kind": "profile", "model": _QMC12, "run": {"source": "base", "target": "altered"}},
    "fig1b": {"kind": "profile", "model": _QMC12, "run": {"source": "altered", "target": "altered"}},
    "fig2a": {"kind": "profile", "model": _AKLT8, "run": {"source": "base", "target": "altered"}},
    "fig2b": {"kind": "profile", "model": _AKLT8, "run": {"source": "altered", "target": "altered"}},
    "fig3a": {"kind": "profile", "model": _MC12, "run": {"source": "base", "target": "altered"}},
    "fig3b": {"kind": "profile", "model": _MC12, "run": {"source": "altered", "target": "altered"}},
    "fig4a": {"kind": "profile", "model": _MC12, "family": {"type": "sparse_hamming"},
              "run": {"source": "base", "target": "altered"}},
    "fig4b": {"kind": "profile", "model": _MC12, "family": {"type": "sparse_band", "t": 4},
              "run": {"source": "base", "target": "altered"}},
    "fig5a": {"kind": "altmin", "model": _WELL, "family": {"type": "sparse_hamming"},
              "run": {"L": 8, "K": 3, "mode": "exact_distribution", "initial": "plus"}},
    "fig5b": {"kind": "anneal", "model": _WELL,
              "run": {"steps": 50000, "beta_start": 0.1, "beta_end": 50.0}},
    "fig5c": {"kind": "model-dump", "model": _WELL_FLAT, "run": {"ground_energy": False}},
    "fig5d": {"kind": "altmin", "model": _WELL_FLAT, "family": {"type": "sparse_band", "t": 4},
              "run": {"L": 4, "K": 3, "mode": "exact_distribution", "initial": "plus"}},
    "fig6a": {"kind": "variational", "model": _AKLT8,
              "run": {"L": 50, "initial": "uniform_product"}},
    "fig6b": {"kind": "variational", "model": {"type": "aklt", "n": 10}, "max_dim": 3 ** 10,
              "run": {"L": 50, "initial": "uniform_product"}},
    "fig8a": {"kind": "altmin", "model": _MC12,
              "family": [{"type": "local"}, {"type": "sparse_hamming"}, {"type": "sparse_band", "t": 4}],
              "run": {"L": 5, "K": 3, "mode": "exact_distribution", "initial": "plus"}},
    "fig8b": {"kind": "variational", "model": {"type": "maxcut", "n": 10, "degree": 6},
              "run": {"L": 50, "initial": "plus"}},
    "fig9a": {"kind": "altmin", "model": {"type": "qmc", "n": 11, "degree": 4},
              "run": {"L": 6, "K": 3, "mode": "exact_distribution", "initial": "plus"}},
    "fig9b": {"kind": "variational", "model": {"type": "qmc", "n": 10, "degree": 6},
              "run": {"L": 50, "initial": "haar"}},
    "fig9c": {"kind": "variational", "model": {"type": "qmc", "n": 10, "degree": 6},
              "run": {"L": 50, "initial": "plus"}},
}

FULL_OVERRIDES = {"fig9a": {"run": {"L": 10}}}


def preset(name: str, full: bool = False) -> ExperimentConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; known: {', '.join(sorted(PRESETS))}")
    raw = copy.deepcopy(PRESETS[name])
    raw.setdefault("label", name)
    raw.setdefault("output_dir", f"out/{name}")
    if full and name in FULL_OVERRIDES:
        for k, v in FULL_OVERRIDES[name].items():
            raw[k] = {**raw.get(k, {}), **v}
    return ExperimentConfig.model_validate(raw)


# -- model construction -----------------------------------------------------------------------

@dataclass
class BuiltModel:
    hamiltonian: LocalHamiltonian | None = None
    landscape: DiagonalLandscape | None = None
    graph: object = None

    @property
    def base(self):
        return self.hamiltonian if self.hamiltonian is not None else self.landscape


def build_model(spec: ModelSpec, master_seed: int) -> BuiltModel:
    seed = master_seed if spec.seed is None else spec.seed
    rng = derive(seed, 0)
    if spec.type in ("maxcut", "qmc"):
        g = random_regular_graph(spec.n, spec.degree, rng)
        h = maxcut_hamiltonian(g) if spec.type == "maxcut" else qmc_hamiltonian(g, spec.term_form)
        return BuiltModel(hamiltonian=h, graph=g)
    if spec.type == "edges":
        g = read_edge_list(spec.path, spec.n)
        h = maxcut_hamiltonian(g) if spec.edge_model == "maxcut" else qmc_hamiltonian(g, spec.term_form)
        return BuiltModel(hamiltonian=h, graph=g)
    if spec.type == "aklt":
        return BuiltModel(hamiltonian=aklt_hamiltonian(spec.n, spec.periodic))
    if spec.type == "grover":
        return BuiltModel(landscape=grover_hamiltonian(spec.n, spec.marked))
    if spec.type == "well":
        return BuiltModel(landscape=well_landscape(
            spec.n, spec.n_anchors, rng, distance_weight=spec.distance_weight,
            metric=spec.metric, placement=spec.placement))
    if spec.type == "landscape_csv":
        return BuiltModel(landscape=read_landscape_csv(spec.path))
    return BuiltModel(hamiltonian=load_projector_list(spec.path, spec.site_dims))


# -- runners -------------------------------------------------------------------------------------

@dataclass
class RunResult:
    """Artifacts of one repetition.

    ``files`` maps an output file name to a callable writing it to a path.
    """

    files: dict[str, Any] = field(default_factory=dict)
    summary: list[str] = field(default_factory=list)
    extra: dict[str, Any] = field(default_factory=dict)


def _family_tag(f: FamilySpec) -> str:
    return f.type if f.type != "sparse_band" else f"sparse_band_t{f.t}"


def _run_profile(cfg, model, rep, rng) -> RunResult:
    p = cfg.run_params
    res = RunResult()
    for fam_spec in cfg.families:
        fam = HamiltonianFamily(model.base, AltMinConfig(L=1, K=1, family=fam_spec.type, t=fam_spec.t,
                                                         diagnostics=False))
        ham_rng = derive(cfg.seed, 1, rep)
        src = fam.base_eigensystem() if p.source == "base" else fam.sample(ham_rng)[0]
        tgt = fam.base_eigensystem() if p.target == "base" else fam.sample(ham_rng)[0]
        rows = spectral_profile(src, tgt, p.stride, p.quartile_rule)
        name = f"profile_{_family_tag(fam_spec)}_rep{rep}.csv"
        res.files[name] = partial(write_profile_csv, rows)
        gaps = np.array([r.mean_energy - r.quartile_energy for r in rows])
        res.summary.append(f"profile family={_family_tag(fam_spec)} rep={rep} rows={len(rows)} "
                           f"median_gap={np.median(gaps):.6g}")
    return res


def _run_altmin(cfg, model, rep, rng) -> RunResult:
    p = cfg.run_params
    res = RunResult()
    for fam_spec in cfg.families:
        ac = AltMinConfig(L=p.L, K=p.K, family=fam_spec.type, t=fam_spec.t, mode=p.mode,
                          trajectory=p.trajectory, tie_break=p.tie_break)
        tr = altmin_measurement(model.base, ac, derive(cfg.seed, 1, rep), p.initial)
        tag = _family_tag(fam_spec)
        res.files[f"trace_{tag}_rep{rep}.csv"] = tr.to_csv
        res.extra["physical_copy_count"] = tr.physical_copy_count
        res.summary.append(f"altmin family={tag} rep={rep} L={p.L} K={p.K} "
                           f"final_energy={tr.final_energy:.6g} physical_copy_count={tr.physical_copy_count}")
    return res


def _run_variational(cfg, model, rep, rng) -> RunResult:
    p = cfg.run_params
    if model.hamiltonian is None:
        raise ValueError("variational runs need a local Hamiltonian model")
    res = RunResult()
    for sched in p.schedules:
        tr = altmin_variational(model.hamiltonian, sched, p.L, p.initial, derive(cfg.seed, 1, rep),
                                theta_mode=p.theta_mode, stall_window=p.stall_window,
                                stall_tol=p.stall_tol)
        res.files[f"trace_{sched}_rep{rep}.csv"] = tr.to_csv
        res.summary.append(f"variational schedule={sched} rep={rep} L={p.L} "
                           f"initial_energy={tr.rows[0].energy_base:.6g} final_energy={tr.final_energy:.6g}")
    return res


def _run_anneal(cfg, model, rep, rng) -> RunResult:
    p = cfg.run_params
    if model.landscape is None:
        raise ValueError("anneal runs need a diagonal landscape model")
    ac = AnnealConfig(p.steps, p.beta_start, p.beta_end, p.schedule)
    if p.mode == "chain":
        tr = anneal(model.landscape, ac, derive(cfg.seed, 1, rep))
        every = p.record_every
    else:
        tr = anneal_distribution(model.landscape, ac, record_every=p.record_every)
        every = 1
    res = RunResult()
    res.files[f"anneal_{p.mode}_rep{rep}.csv"] = partial(tr.to_csv, every=every)
    res.summary.append(f"anneal mode={p.mode} rep={rep} steps={p.steps} best_energy={tr.best_energy:.6g} "
                       f"final_energy={float(tr.current[-1]):.6g}")
    return res


def _random_state(kind: str, shape, rng, rank: int):
    if kind == "haar":
        return StateVector.haar(shape, rng)
    if kind == "product":
        vec = np.ones(1, dtype=complex)
        for d in shape.site_dims:
            z = rng.normal(size=d) + 1j * rng.normal(size=d)
            vec = np.kron(vec, z / np.linalg.norm(z))
        return StateVector(shape, vec)
    a = rng.normal(size=(shape.total_dim, rank)) + 1j * rng.normal(size=(shape.total_dim, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def _run_theory(cfg, model, rep, rng) -> RunResult:
    p = cfg.run_params
    res = RunResult()
    rng = derive(cfg.seed, 1, rep)
    shape = model.base.shape
    for fam_spec in cfg.families:
        reports, labels = [], []
        for i in range(p.n_states):
            if fam_spec.type == "local":
                if model.hamiltonian is None:
                    raise ValueError("the local family needs a local Hamiltonian model")
                state = _random_state(p.state, shape, rng, p.mixed_rank)
                reports.append(theorem1_bound_check(model.hamiltonian, state, p.n_samples, rng))
            else:
                landscape = model.landscape
                if landscape is None:
                    fam = HamiltonianFamily(model.base, AltMinConfig(L=1, K=1, family=fam_spec.type))
                    landscape = fam.landscape
                kind = "band" if fam_spec.type == "sparse_band" else "hamming"
                pat = SparsityPattern(kind, landscape.n_bits, fam_spec.t)
                state = _random_state("haar" if p.state == "mixed" else p.state, shape, rng, 1)
                reports.append(theorem2_bound_check(landscape, pat, state, p.n_samples, rng))
            labels.append(f"state{i}")
        tag = _family_tag(fam_spec)
        res.files[f"theory_{tag}_rep{rep}.csv"] = partial(
            write_reports_csv, reports, labels=labels)
        worst = max(abs(r.z_closed_form) for r in reports)
        res.summary.append(f"theory-check family={tag} rep={rep} states={len(reports)} "
                           f"max_abs_z={worst:.3g} bound_violations={sum(r.violated for r in reports)}")
    return res


def _run_model_dump(cfg, model, rep, rng) -> RunResult:
    p = cfg.run_params
    res = RunResult()
    if model.graph is not None:
        res.files["edges.txt"] = partial(write_edge_list, model.graph)
    if model.landscape is not None:
        res.files["landscape.csv"] = partial(write_landscape_csv, model.landscape)
    line = f"model-dump type={cfg.model.type} dim={model.base.shape.total_dim}"
    if model.hamiltonian is not None:
        line += f" terms={model.hamiltonian.m}"
    if p.ground_energy:
        if model.landscape is not None:
            ground = float(model.landscape.energies.min())
        elif model.graph is not None and cfg.model.type == "maxcut":
            ground = float(len(model.graph.edges) - exhaustive_maxcut(model.graph)[0])
        else:
            ground = float(spectral(model.hamiltonian.to_dense()).energies[0])
        line += f" ground_energy={ground:.10g}"
        res.extra["ground_energy"] = ground
    res.summary.append(line)
    return res


_RUNNERS = {
    "profile": _run_profile,
    "altmin": _run_altmin,
    "variational": _run_variational,
    "anneal": _run_anneal,
    "theory-check": _run_theory,
    "model-dump": _run_model_dump,
}


def run_repetition(cfg: ExperimentConfig, rep: int) -> RunResult:
    """Run one repetition; deterministic given (config, rep)."""
    with override(**({"max_dim": cfg.max_dim} if cfg.max_dim else {})):
        model = build_model(cfg.model, cfg.seed)
        return _RUNNERS[cfg.kind](cfg, model, rep, derive(cfg.seed, 1, rep))


def manifest(cfg: ExperimentConfig, results: list[RunResult], files: list[str]) -> dict:
    extra = {}
    for r in results:
        extra.update(r.extra)
    return {
        "package_version": __version__,
        "master_seed": cfg.seed,
        "repetition_streams": [f"derive(seed={cfg.seed}, keys=(1, {k}))" for k in range(cfg.repetitions)],
        "config": cfg.model_dump(mode="json"),
        "results": extra,
        "artifacts": sorted(files),
    }


def write_artifacts(cfg: ExperimentConfig, results: list[RunResult], out_dir: Path) -> list[str]:
    out_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for r in results:
        for name, writer in r.files.items():
            writer(out_dir / name)
            names.append(name)
    return names


def dump_yaml(data) -> str:
    return yaml.safe_dump(data, sort_keys=True, default_flow_style=False)
