"""Capture and modification of attention internals during a denoising run.

A :class:`CaptureStore` is written by one run and read by later ones: the
reference-color pipeline stores Value matrices, the source run stores
self-attention maps, and the probes read whatever they asked for. Injection
plans describe which sites get Value alignment or self-map replacement and at
which step indices.
"""

from __future__ import annotations

import hashlib
import json
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

import numpy as np
import torch

from .adain import adain
from .arrayio import read_f32, write_f32
from .layout import AttentionSite, ModelLayout, enumerate_sites

ROLES = ("Q", "K", "V", "map")

COND = "cond"
UNCOND = "uncond"


class InstrumentError(RuntimeError):
    pass


class MissingCaptureError(KeyError):
    def __init__(self, site: AttentionSite, timestep: int):
        super().__init__(f"no capture stored for site {site.key} at step {timestep}")
        self.site = site
        self.timestep = timestep


@dataclass
class AttentionCapture:
    """Tensors one attention layer consumed at one step, per head."""

    site: AttentionSite
    timestep: int
    queries: torch.Tensor  # (heads, spatial_tokens, d_k)
    keys: torch.Tensor  # (heads, context_tokens, d_k)
    values: torch.Tensor  # (heads, context_tokens, d_k)
    map: torch.Tensor  # (heads, spatial_tokens, context_tokens)

    def role(self, role: str) -> torch.Tensor:
        return {"Q": self.queries, "K": self.keys, "V": self.values, "map": self.map}[role]


class CaptureStore:
    """Read-only after the producing run completes; keyed by (site, step)."""

    def __init__(self, model_id: str, layout: ModelLayout, steps: int):
        self.model_id = model_id
        self.layout = layout
        self.steps = steps
        self._records: dict[tuple[str, int], AttentionCapture] = {}
        self._frozen = False

    def __len__(self) -> int:
        return len(self._records)

    def freeze(self) -> "CaptureStore":
        self._frozen = True
        return self

    def add(self, capture: AttentionCapture) -> None:
        if self._frozen:
            raise InstrumentError("capture store is frozen")
        key = (capture.site.key, capture.timestep)
        if key in self._records:
            raise InstrumentError(f"duplicate capture for {key}")
        self._records[key] = capture

    def get(self, site: AttentionSite, timestep: int) -> AttentionCapture:
        try:
            return self._records[(site.key, timestep)]
        except KeyError:
            raise MissingCaptureError(site, timestep) from None

    def has(self, site: AttentionSite, timestep: int) -> bool:
        return (site.key, timestep) in self._records

    def items(self):
        return self._records.items()

    def sites(self) -> list[AttentionSite]:
        seen: dict[str, AttentionSite] = {}
        for (key, _), rec in self._records.items():
            seen.setdefault(key, rec.site)
        return sorted(seen.values(), key=AttentionSite.sort_key)

    def timesteps(self, site: AttentionSite) -> list[int]:
        return sorted(t for (key, t) in self._records if key == site.key)

    def layout_hash(self) -> str:
        payload = json.dumps(self.layout.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

    # -- persistence ---------------------------------------------------

    def save(self, directory: Path | str) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        meta = {
            "format_version": 1,
            "model_id": self.model_id,
            "layout_hash": self.layout_hash(),
            "layout": self.layout.to_dict(),
            "steps": self.steps,
            "sites": [s.key for s in self.sites()],
        }
        (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
        for (key, t), rec in sorted(self._records.items()):
            for role in ROLES:
                write_f32(directory / f"{key}_t{t}_{role}.f32", rec.role(role).numpy())

    @classmethod
    def load(cls, directory: Path | str) -> "CaptureStore":
        directory = Path(directory)
        meta = json.loads((directory / "meta.json").read_text())
        layout = ModelLayout.from_dict(meta["layout"])
        store = cls(meta["model_id"], layout, meta["steps"])
        known = {s.key: s for s in enumerate_sites(layout)}
        by_record: dict[tuple[str, int], dict[str, np.ndarray]] = {}
        for path in sorted(directory.glob("*_t*_*.f32")):
            stem = path.stem
            key_part, role = stem.rsplit("_", 1)
            site_key, t_part = key_part.rsplit("_t", 1)
            by_record.setdefault((site_key, int(t_part)), {})[role] = read_f32(path)
        for (site_key, t), roles in sorted(by_record.items()):
            site = known[site_key]
            store.add(
                AttentionCapture(
                    site=site,
                    timestep=t,
                    queries=torch.from_numpy(roles["Q"]),
                    keys=torch.from_numpy(roles["K"]),
                    values=torch.from_numpy(roles["V"]),
                    map=torch.from_numpy(roles["map"]),
                )
            )
        return store.freeze()


@dataclass(frozen=True)
class CapturePlan:
    """Which (site, step) pairs a run records. ``timesteps=None`` means all."""

    sites: frozenset[AttentionSite]
    timesteps: frozenset[int] | None = None

    def wants(self, site: AttentionSite, timestep: int) -> bool:
        if site not in self.sites:
            return False
        return self.timesteps is None or timestep in self.timesteps

    @classmethod
    def of(cls, sites: Iterable[AttentionSite], timesteps: Iterable[int] | None = None) -> "CapturePlan":
        return cls(frozenset(sites), None if timesteps is None else frozenset(timesteps))


def _always(_: int) -> bool:
    return True


@dataclass(frozen=True)
class InjectionPlan:
    """Site/step selection for Value alignment and self-map replacement."""

    value_alignment_sites: frozenset[AttentionSite] = frozenset()
    self_replacement_sites: frozenset[AttentionSite] = frozenset()
    alignment_predicate: Callable[[int], bool] = _always
    replacement_predicate: Callable[[int], bool] = _always

    def __post_init__(self):
        bad = [s for s in self.value_alignment_sites if not s.is_decoder_cross]
        if bad:
            raise ValueError(
                "value alignment is restricted to decoder cross-attention sites; "
                f"offending: {sorted(s.key for s in bad)}"
            )
        non_self = [s for s in self.self_replacement_sites if s.kind.value != "self"]
        if non_self:
            raise ValueError(
                f"self-map replacement needs self sites; offending: {sorted(s.key for s in non_self)}"
            )

    @classmethod
    def value_alignment(
        cls, layout: ModelLayout, threshold: int, sites: Iterable[AttentionSite] | None = None
    ) -> "InjectionPlan":
        """Alignment at decoder cross sites while the step index exceeds
        ``threshold`` (i.e. the earliest denoising steps)."""
        chosen = (
            frozenset(sites)
            if sites is not None
            else frozenset(s for s in enumerate_sites(layout) if s.is_decoder_cross)
        )
        return cls(value_alignment_sites=chosen, alignment_predicate=lambda t: t > threshold)

    @classmethod
    def self_replacement(
        cls, layout: ModelLayout, sites: Iterable[AttentionSite] | None = None
    ) -> "InjectionPlan":
        chosen = (
            frozenset(sites)
            if sites is not None
            else frozenset(s for s in enumerate_sites(layout) if s.kind.value == "self")
        )
        return cls(self_replacement_sites=chosen)

    def merged_with(self, other: "InjectionPlan") -> "InjectionPlan":
        if self.value_alignment_sites and other.value_alignment_sites:
            raise ValueError("both plans define value alignment")
        if self.self_replacement_sites and other.self_replacement_sites:
            raise ValueError("both plans define self replacement")
        return InjectionPlan(
            value_alignment_sites=self.value_alignment_sites | other.value_alignment_sites,
            self_replacement_sites=self.self_replacement_sites | other.self_replacement_sites,
            alignment_predicate=self.alignment_predicate
            if self.value_alignment_sites
            else other.alignment_predicate,
            replacement_predicate=self.replacement_predicate
            if self.self_replacement_sites
            else other.replacement_predicate,
        )


@dataclass(frozen=True)
class TokenScale:
    """Probe directive: rescale the rows of K or V belonging to one token."""

    which: str  # "key" | "value"
    token_index: int
    factor: float
    sites: frozenset[AttentionSite]

    def __post_init__(self):
        if self.which not in ("key", "value"):
            raise ValueError(f"which must be 'key' or 'value', got '{self.which}'")
        if self.factor <= 0:
            raise ValueError(f"factor must be positive, got {self.factor}")


@dataclass
class RunCounters:
    value_alignments: list[tuple[str, int]] = field(default_factory=list)
    map_replacements: list[tuple[str, int]] = field(default_factory=list)

    @property
    def alignment_steps(self) -> set[int]:
        return {t for _, t in self.value_alignments}

    @property
    def alignment_sites(self) -> set[str]:
        return {k for k, _ in self.value_alignments}


class AttentionController:
    """Per-run mediator between the sampler and the attention layers.

    The sampler announces the current step and branch; attention layers route
    their tensors through the transform hooks. Capture and injection act on
    the conditional branch only, so the unconditional pass of classifier-free
    guidance stays untouched.
    """

    def __init__(
        self,
        capture_plan: CapturePlan | None = None,
        capture_into: CaptureStore | None = None,
        align_reference: CaptureStore | None = None,
        replace_source: CaptureStore | None = None,
        plan: InjectionPlan | None = None,
        token_scale: TokenScale | None = None,
    ):
        self.capture_plan = capture_plan
        self.store = capture_into
        self.align_reference = align_reference
        self.replace_source = replace_source
        self.plan = plan or InjectionPlan()
        self.token_scale = token_scale
        self.counters = RunCounters()
        self._step: int | None = None
        self._branch = COND

    # -- sampler side ----------------------------------------------------

    def begin_step(self, timestep: int) -> None:
        self._step = timestep

    def set_branch(self, branch: str) -> None:
        self._branch = branch

    def preflight(self, steps: int) -> None:
        """Fail before the run if a selected (site, step) lacks its record."""
        missing: list[str] = []
        for t in range(1, steps + 1):
            if self.plan.value_alignment_sites and self.plan.alignment_predicate(t):
                for site in self.plan.value_alignment_sites:
                    if self.align_reference is None or not self.align_reference.has(site, t):
                        missing.append(f"value reference {site.key} step {t}")
            if self.plan.self_replacement_sites and self.plan.replacement_predicate(t):
                for site in self.plan.self_replacement_sites:
                    if self.replace_source is None or not self.replace_source.has(site, t):
                        missing.append(f"self map {site.key} step {t}")
        if missing:
            head = ", ".join(sorted(missing)[:6])
            raise InstrumentError(
                f"{len(missing)} missing records for the injection plan: {head}"
                + (", ..." if len(missing) > 6 else "")
            )

    # -- attention-layer side ---------------------------------------------

    def _active(self) -> bool:
        return self._branch == COND and self._step is not None

    def transform_projections(self, site, k: torch.Tensor, v: torch.Tensor):
        ts = self.token_scale
        if ts is None or not self._active() or site not in ts.sites or ts.factor == 1.0:
            return k, v
        if ts.which == "key":
            k = k.clone()
            k[..., ts.token_index, :] *= ts.factor
        else:
            v = v.clone()
            v[..., ts.token_index, :] *= ts.factor
        return k, v

    def transform_map(self, site, attn: torch.Tensor) -> torch.Tensor:
        if (
            not self._active()
            or site not in self.plan.self_replacement_sites
            or not self.plan.replacement_predicate(self._step)
        ):
            return attn
        stored = self.replace_source.get(site, self._step).map
        if stored.shape != attn.shape[1:]:
            raise InstrumentError(
                f"stored self map for {site.key} step {self._step} has shape "
                f"{tuple(stored.shape)}, layer produced {tuple(attn.shape[1:])}"
            )
        self.counters.map_replacements.append((site.key, self._step))
        return stored.unsqueeze(0).to(attn.dtype)

    def transform_values(self, site, v: torch.Tensor) -> torch.Tensor:
        if (
            not self._active()
            or site not in self.plan.value_alignment_sites
            or not self.plan.alignment_predicate(self._step)
        ):
            return v
        reference = self.align_reference.get(site, self._step).values
        self.counters.value_alignments.append((site.key, self._step))
        return adain(v, reference.unsqueeze(0).to(v.dtype))

    def observe(self, site, q, k, v, attn) -> None:
        if (
            self.store is None
            or self.capture_plan is None
            or not self._active()
            or not self.capture_plan.wants(site, self._step)
        ):
            return
        self.store.add(
            AttentionCapture(
                site=site,
                timestep=self._step,
                queries=q.detach()[0].clone(),
                keys=k.detach()[0].clone(),
                values=v.detach()[0].clone(),
                map=attn.detach()[0].clone(),
            )
        )


@contextmanager
def attach_controller(unet, controller: AttentionController):
    """Exclusively attach ``controller`` to every attention module of ``unet``
    for the duration of one run."""
    modules = unet.attention_modules()
    for m in modules:
        if m.controller is not None:
            raise InstrumentError("model already owned by another instrumented run")
    for m in modules:
        m.controller = controller
    try:
        yield controller
    finally:
        for m in modules:
            m.controller = None


def capture_section(model_sites: Iterable[AttentionSite], requested: Iterable[AttentionSite]) -> None:
    """Validate ``requested`` against the model's enumerated sites."""
    known = set(model_sites)
    unknown = [s for s in requested if s not in known]
    if unknown:
        raise InstrumentError(
            f"requested sites absent from the model: {sorted(s.key for s in unknown)}"
        )
