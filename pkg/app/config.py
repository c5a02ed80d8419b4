from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Type, Union

from pydantic import Field, model_validator
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict

from app.curvilinear.connectivity import OracleConfig
from app.curvilinear.delineate import DelineationConfig
from app.curvilinear.metrics import EvalConfig
from app.curvilinear.synth import CorruptionParams, SynthParams


class RunConfig(BaseSettings):
    """Every tunable of the pipeline under one flat key namespace.

    Values come from a ``key=value`` file merged with command-line overrides;
    the environment is never consulted.
    """

    # oracle
    k: int = 33
    s: Optional[int] = None
    tau_occupancy: float = 0.5
    # delineation
    tau_conf: float = 0.5
    r_nbhd: int = 5
    d_restart: Optional[float] = None
    tau_restart: float = 0.75
    max_steps: Optional[int] = None
    complete_tails: bool = True
    # evaluation
    d_match: float = 2.0
    connectivity_ratio: float = 0.8
    d_near: float = 10.0
    symmetric_ratio: bool = False
    # heatmap codec
    sigma: float = Field(default=2.0, gt=0.0)
    min_separation: int = Field(default=3, ge=0)
    # synthetic scenes
    seed: int = 0
    width: int = 256
    height: int = 256
    n_seeds: int = 2
    branch_prob: float = 0.05
    step_len: int = 8
    n_components: int = 1
    walk_steps: int = 12
    max_branches: int = 4
    min_branch_len: Optional[int] = None
    max_retries: int = 50
    blur_radius: int = 0
    noise_amp: float = 0.0
    gap_count: int = 0
    gap_len: int = 7
    clutter_count: int = 0

    model_config = SettingsConfigDict(extra="forbid", frozen=True)

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: Type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> Tuple[PydanticBaseSettingsSource, ...]:
        return (init_settings,)

    @model_validator(mode="after")
    def _validate_sections(self) -> "RunConfig":
        # build every section now so bad values fail before any work starts
        self.delineation_config()
        self.eval_config()
        self.synth_params()
        return self

    def oracle_config(self) -> OracleConfig:
        return OracleConfig(k=self.k, s=self.s, tau_occupancy=self.tau_occupancy)

    def delineation_config(self) -> DelineationConfig:
        return DelineationConfig(
            oracle=self.oracle_config(),
            tau_conf=self.tau_conf,
            r_nbhd=self.r_nbhd,
            d_restart=self.d_restart,
            tau_restart=self.tau_restart,
            max_steps=self.max_steps,
            complete_tails=self.complete_tails,
        )

    def eval_config(self) -> EvalConfig:
        return EvalConfig(
            d_match=self.d_match,
            connectivity_ratio=self.connectivity_ratio,
            d_near=self.d_near,
            symmetric_ratio=self.symmetric_ratio,
        )

    def synth_params(self) -> SynthParams:
        return SynthParams(
            seed=self.seed,
            width=self.width,
            height=self.height,
            n_seeds=self.n_seeds,
            branch_prob=self.branch_prob,
            step_len=self.step_len,
            n_components=self.n_components,
            walk_steps=self.walk_steps,
            max_branches=self.max_branches,
            min_branch_len=self.min_branch_len,
            max_retries=self.max_retries,
            corruption=CorruptionParams(
                blur_radius=self.blur_radius,
                noise_amp=self.noise_amp,
                gap_count=self.gap_count,
                gap_len=self.gap_len,
                clutter_count=self.clutter_count,
            ),
        )


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment, blank lines are skipped."""
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValueError(f"{source}:{lineno}: empty key")
        if key in values:
            raise ValueError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def load_run_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    values: Dict[str, Any] = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text(encoding="utf-8"), str(path)))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig(**values)
