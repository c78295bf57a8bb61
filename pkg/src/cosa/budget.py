"""
Parameter-, Optimizer-State- und Speicherbudgets nach den Formeln der
PEFT-Methoden, ausgewertet über Modell-Manifeste.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Union

from pydantic import ValidationError

from .config import BUDGET_DEFAULTS
from .errors import ArgumentError, FormatError
from .models import METHODS, LayerShape, MethodSpec, ModelManifest

logger = logging.getLogger(__name__)

MANIFEST_DIR = Path(__file__).parent / "manifests"
UNSUPPORTED_METHODS = {
    "adalora": "AdaLoRA allocates rank adaptively and has no closed-form parameter count",
}


def layer_params(spec: MethodSpec, shape: LayerShape) -> int:
    """Trainierbare Parameter einer einzelnen Schicht (ohne Multiplizität)"""
    m, n = shape.m, shape.n
    method = spec.method
    if method in UNSUPPORTED_METHODS:
        raise ArgumentError(f"unsupported method {method!r}: {UNSUPPORTED_METHODS[method]}")
    if method not in METHODS:
        raise ArgumentError(f"unknown method {method!r}, expected one of {', '.join(METHODS)}")
    if method in ("lora", "pissa", "dora"):
        if spec.r is None:
            raise ArgumentError(f"method {method!r} requires rank r")
        params = (m + n) * spec.r
        return params + m if method == "dora" else params
    if method == "vera":
        return m + n
    if method == "cosa":
        if spec.a is None or spec.b is None:
            raise ArgumentError("method 'cosa' requires compression dims a and b")
        return spec.a * spec.b
    return m * n


def memory_estimate(params: int, bytes_per_param: float = BUDGET_DEFAULTS['bytes_per_param'],
                    opt_multiplier: float = BUDGET_DEFAULTS['opt_multiplier']) -> float:
    """params · bytes_per_param · (1 + opt_multiplier)"""
    if params < 0:
        raise ArgumentError(f"parameter count must be non-negative, got {params}")
    total = params * bytes_per_param * (1 + opt_multiplier)
    return int(total) if float(total).is_integer() else total


@dataclass(frozen=True)
class LayerBudget:
    name: str
    m: int
    n: int
    count: int
    params_per_layer: int

    @property
    def params(self) -> int:
        return self.params_per_layer * self.count


@dataclass(frozen=True)
class BudgetReport:
    model_name: str
    method: str
    layers: List[LayerBudget] = field(default_factory=list)
    bytes_per_param: float = BUDGET_DEFAULTS['bytes_per_param']
    opt_multiplier: float = BUDGET_DEFAULTS['opt_multiplier']

    @property
    def total_params(self) -> int:
        return sum(layer.params for layer in self.layers)

    @property
    def optimizer_state(self) -> float:
        """Optimizer-Zustände in Elementen (z. B. 3 pro Parameter für Adam)"""
        return self.total_params * self.opt_multiplier

    @property
    def storage_bytes(self) -> int:
        """Gespeicherte Adapter-Größe; CoSA braucht zusätzlich einen Seed pro Schicht"""
        seeds = sum(layer.count for layer in self.layers) if self.method.startswith("cosa") else 0
        return int(self.total_params * self.bytes_per_param + seeds * BUDGET_DEFAULTS['seed_bytes'])

    @property
    def memory_bytes(self) -> float:
        return memory_estimate(self.total_params, self.bytes_per_param, self.opt_multiplier)

    def as_rows(self) -> List[Dict]:
        rows = [{'model': self.model_name, 'method': self.method, 'layer': layer.name,
                 'm': layer.m, 'n': layer.n, 'count': layer.count,
                 'params_per_layer': layer.params_per_layer, 'params': layer.params}
                for layer in self.layers]
        rows.append({'model': self.model_name, 'method': self.method, 'layer': 'TOTAL',
                     'm': None, 'n': None, 'count': sum(layer.count for layer in self.layers),
                     'params_per_layer': None, 'params': self.total_params})
        return rows

    def summary(self) -> Dict:
        return {
            'model': self.model_name,
            'method': self.method,
            'total_params': self.total_params,
            'optimizer_state': self.optimizer_state,
            'storage_bytes': self.storage_bytes,
            'memory_bytes': self.memory_bytes,
            'bytes_per_param': self.bytes_per_param,
            'opt_multiplier': self.opt_multiplier,
        }


def model_budget(spec: MethodSpec, manifest: ModelManifest,
                 bytes_per_param: float = BUDGET_DEFAULTS['bytes_per_param'],
                 opt_multiplier: float = BUDGET_DEFAULTS['opt_multiplier']) -> BudgetReport:
    """Summiert layer_params über alle Manifest-Einträge × Multiplizität"""
    layers = [LayerBudget(name=shape.name, m=shape.m, n=shape.n, count=shape.count,
                          params_per_layer=layer_params(spec, shape))
              for shape in manifest.layers]
    report = BudgetReport(model_name=manifest.model_name, method=spec.label, layers=layers,
                          bytes_per_param=bytes_per_param, opt_multiplier=opt_multiplier)
    logger.info(f"Budget {manifest.model_name} / {spec.label}: {report.total_params:,} Parameter")
    return report


def compare_methods(specs: Sequence[MethodSpec], manifest: ModelManifest,
                    bytes_per_param: float = BUDGET_DEFAULTS['bytes_per_param'],
                    opt_multiplier: float = BUDGET_DEFAULTS['opt_multiplier']) -> List[Dict]:
    """Gesamtbudgets mehrerer Methoden; ratio relativ zur ersten Methode"""
    if not specs:
        raise ArgumentError("compare_methods needs at least one method")
    reports = [model_budget(spec, manifest, bytes_per_param, opt_multiplier) for spec in specs]
    reference = reports[0].total_params
    return [dict(report.summary(), ratio=report.total_params / reference if reference else None)
            for report in reports]


def bundled_manifests() -> List[str]:
    return sorted(path.name for path in MANIFEST_DIR.glob("*.json"))


def load_manifest(name_or_path: Union[str, Path]) -> ModelManifest:
    """Manifest aus Pfad oder gebündeltem Dateinamen (z. B. 'llama32-1b.json')"""
    path = Path(name_or_path)
    if not path.exists():
        candidate = MANIFEST_DIR / path.name
        if not candidate.exists() and not path.suffix:
            candidate = MANIFEST_DIR / f"{path.name}.json"
        if not candidate.exists():
            raise ArgumentError(f"manifest not found: {name_or_path} (bundled: {', '.join(bundled_manifests())})")
        path = candidate
    try:
        return ModelManifest.model_validate(json.loads(path.read_text(encoding="utf-8")))
    except json.JSONDecodeError as e:
        raise FormatError(f"manifest {path} is not valid JSON: {e}")
    except ValidationError as e:
        raise FormatError(f"manifest {path} does not match the schema: {e}")
