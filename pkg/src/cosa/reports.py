"""Report-Ausgabe als JSON oder CSV mit Provenienz-Kopf"""
import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from . import TOOL_NAME, __version__
from .models import CliConfig


def _clean(value: Any) -> Any:
    """inf/NaN als Strings, numpy-Skalare als Python-Zahlen"""
    if isinstance(value, np.ndarray):
        value = value.tolist()
    elif isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, dict):
        return {key: _clean(v) for key, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def flatten(row: Dict, prefix: str = "") -> Dict:
    """Verschachtelte Felder als gepunktete Spaltennamen"""
    flat = {}
    for key, value in row.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten(value, f"{name}."))
        elif isinstance(value, (list, tuple)):
            flat[name] = json.dumps(_clean(value))
        else:
            flat[name] = value
    return flat


def provenance(config: CliConfig) -> Dict:
    return {
        'tool': TOOL_NAME,
        'version': __version__,
        'command': config.command,
        'seed': config.seed,
        'format': config.format,
        'threads': config.threads,
        'flags': config.flags,
    }


def render(rows: List[Dict], config: CliConfig, summary: Optional[Dict] = None) -> str:
    """Report-Text; der Kopf enthält keine Zeitstempel, Wiederholungen sind bytegleich"""
    if config.format == "json":
        document = {'provenance': provenance(config), 'data': rows}
        if summary is not None:
            document['summary'] = summary
        return json.dumps(_clean(document), indent=2, sort_keys=False) + "\n"

    buffer = io.StringIO()
    for key, value in provenance(config).items():
        buffer.write(f"# {key}={json.dumps(_clean(value), sort_keys=True)}\n")
    if summary is not None:
        buffer.write(f"# summary={json.dumps(_clean(summary), sort_keys=True)}\n")
    flat_rows = [flatten(_clean(row)) for row in rows]
    columns: List[str] = []
    for row in flat_rows:
        columns.extend(key for key in row if key not in columns)
    writer = csv.DictWriter(buffer, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    writer.writerows(flat_rows)
    return buffer.getvalue()


def report_body(text: str) -> str:
    """Report ohne Provenienz (für Vergleiche über --threads hinweg)"""
    if text.startswith("{"):
        document = json.loads(text)
        document.pop('provenance', None)
        return json.dumps(document, indent=2)
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("# "))


def write_report(rows: List[Dict], config: CliConfig, summary: Optional[Dict] = None) -> str:
    """Schreibt nach config.out (falls gesetzt) und gibt den Text zurück"""
    text = render(rows, config, summary)
    if config.out:
        Path(config.out).write_text(text, encoding="utf-8")
    return text
