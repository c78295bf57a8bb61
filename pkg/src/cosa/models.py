"""Pydantic-Modelle für alle serialisierbaren Konfigurationen"""
import math
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .config import TRAIN_DEFAULTS

METHODS = ("lora", "pissa", "dora", "vera", "cosa", "full")


# Budget
class LayerShape(BaseModel):
    name: str
    m: int = Field(ge=1)
    n: int = Field(ge=1)
    count: int = Field(default=1, ge=1)


class ModelManifest(BaseModel):
    model_name: str
    layers: List[LayerShape] = Field(min_length=1)


class MethodSpec(BaseModel):
    """Methode plus Hyperparameter; Vollständigkeit prüft budget.layer_params"""
    method: str
    r: Optional[int] = Field(default=None, ge=1)
    a: Optional[int] = Field(default=None, ge=1)
    b: Optional[int] = Field(default=None, ge=1)

    @field_validator("method")
    @classmethod
    def _lower(cls, value: str) -> str:
        return value.lower()

    @property
    def label(self) -> str:
        if self.method == "cosa" and self.a and self.b:
            return f"cosa({self.a},{self.b})"
        if self.method in ("lora", "pissa", "dora") and self.r:
            return f"{self.method}(r={self.r})"
        return self.method


# RIP
class RipTheoryConfig(BaseModel):
    """
    Parameter der Schranke δ_s <= C·√(s·log(n)/m).

    m_eff/n_ambient = None heißt: pro Studien-Konfiguration m·n bzw. a·b.
    """
    C: float = Field(default=1.0, gt=0)
    m_eff: Optional[float] = Field(default=None, ge=1)
    n_ambient: Optional[float] = Field(default=None, ge=2)
    eta: float = Field(default=0.01, gt=0, lt=1)
    log_base: float = Field(default=math.e, gt=1)

    def resolved(self, m: int, n: int, a: int, b: int) -> "RipTheoryConfig":
        return self.model_copy(update={
            "m_eff": self.m_eff if self.m_eff is not None else float(m * n),
            "n_ambient": self.n_ambient if self.n_ambient is not None else float(a * b),
        })


# Training
class OptimizerConfig(BaseModel):
    kind: Literal["sgd", "adam", "adamw"] = TRAIN_DEFAULTS['optimizer']
    lr: float = Field(default=TRAIN_DEFAULTS['lr'], gt=0)
    beta1: float = Field(default=TRAIN_DEFAULTS['beta1'], ge=0, lt=1)
    beta2: float = Field(default=TRAIN_DEFAULTS['beta2'], ge=0, lt=1)
    eps: float = Field(default=TRAIN_DEFAULTS['eps'], gt=0)
    weight_decay: float = Field(default=TRAIN_DEFAULTS['weight_decay'], ge=0)
    schedule: Literal["constant", "linear", "cosine"] = TRAIN_DEFAULTS['schedule']
    warmup_ratio: float = Field(default=TRAIN_DEFAULTS['warmup_ratio'], ge=0, lt=1)
    max_grad_norm: Optional[float] = Field(default=None, gt=0)


class ToyTaskSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["inspan_recovery", "offspan_regression"] = "inspan_recovery"
    m: int = Field(default=64, ge=1)
    n: int = Field(default=48, ge=1)
    a: int = Field(default=16, ge=1)
    b: int = Field(default=8, ge=1)
    seed: int = Field(default=0, ge=0)
    batch_size: int = Field(default=TRAIN_DEFAULTS['batch_size'], ge=1)
    pool_batches: int = Field(default=TRAIN_DEFAULTS['pool_batches'], ge=1)
    steps: int = Field(default=TRAIN_DEFAULTS['steps'], ge=0)
    alpha_scale: float = 1.0
    orthonormalize: bool = False
    adapter: Literal["cosa", "lora"] = "cosa"
    lora_rank: int = Field(default=4, ge=1)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    # Dimensionen, mit denen Lehrer und Projektionen gezogen werden (Sweeps)
    draw_dims: Optional[Tuple[int, int]] = None

    @model_validator(mode="after")
    def _check_dims(self) -> "ToyTaskSpec":
        if self.a > self.m or self.b > self.n:
            raise ValueError(f"need a <= m and b <= n, got (m,n,a,b)=({self.m},{self.n},{self.a},{self.b})")
        if self.draw_dims is not None:
            da, db = self.draw_dims
            if not (self.a <= da <= self.m and self.b <= db <= self.n):
                raise ValueError(f"draw dims {self.draw_dims} must contain ({self.a},{self.b})")
        return self


# CLI
class CliConfig(BaseModel):
    """Aufgelöste Aufrufkonfiguration; landet als Provenienz im Report-Kopf"""
    command: str
    seed: int = 0
    out: Optional[str] = None
    format: Literal["json", "csv"] = "json"
    threads: int = Field(default=1, ge=1)
    flags: Dict[str, Any] = Field(default_factory=dict)
