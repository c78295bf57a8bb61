#!/usr/bin/env python3
"""
Script zum Generieren der gebündelten Modell-Manifeste (Schichtformen der
Attention- und MLP-Projektionen pro Transformer-Block)
"""

import json
import time
from datetime import datetime
from pathlib import Path

from src.cosa.budget import MANIFEST_DIR, model_budget
from src.cosa.models import MethodSpec, ModelManifest

# Architekturen: (Dateiname, Modellname, Blöcke, hidden, kv-Dimension, intermediate)
ARCHITECTURES = [
    ('llama32-1b.json', 'Llama-3.2-1B', 16, 2048, 512, 8192),
    ('llama31-8b.json', 'Llama-3.1-8B', 32, 4096, 1024, 14336),
    ('qwen2-7b.json', 'Qwen2-7B', 28, 3584, 512, 18944),
]


def build_manifest(model_name: str, blocks: int, hidden: int, kv_dim: int, intermediate: int) -> dict:
    """Sieben adaptierte Projektionen pro Block; m = Ausgabe-, n = Eingabedimension"""
    shapes = [
        ('q_proj', hidden, hidden),
        ('k_proj', kv_dim, hidden),
        ('v_proj', kv_dim, hidden),
        ('o_proj', hidden, hidden),
        ('gate_proj', intermediate, hidden),
        ('up_proj', intermediate, hidden),
        ('down_proj', hidden, intermediate),
    ]
    return {
        'model_name': model_name,
        'layers': [{'name': name, 'm': m, 'n': n, 'count': blocks} for name, m, n in shapes],
    }


def main():
    print("=" * 70)
    print("COSA: Generierung der Modell-Manifeste")
    print("=" * 70)
    print(f"Start: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    print(f"Ziel: {MANIFEST_DIR}")
    print("=" * 70)

    start_time = time.time()
    print(f"\n[1/2] Schreibe {len(ARCHITECTURES)} Manifeste...")
    MANIFEST_DIR.mkdir(parents=True, exist_ok=True)
    written = []
    for filename, model_name, blocks, hidden, kv_dim, intermediate in ARCHITECTURES:
        document = build_manifest(model_name, blocks, hidden, kv_dim, intermediate)
        # Schema-Prüfung vor dem Schreiben
        manifest = ModelManifest.model_validate(document)
        path = Path(MANIFEST_DIR) / filename
        path.write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")
        written.append(manifest)
        print(f"  ✓ {filename}: {len(manifest.layers)} Schichten × {blocks} Blöcke")

    print("\n[2/2] Kontrollrechnung (LoRA r=16, CoSA 256×64)...")
    for manifest in written:
        lora = model_budget(MethodSpec(method="lora", r=16), manifest).total_params
        cosa = model_budget(MethodSpec(method="cosa", a=256, b=64), manifest).total_params
        print(f"  - {manifest.model_name}: LoRA {lora / 1e6:.2f}M | CoSA {cosa / 1e6:.2f}M")

    total_time = time.time() - start_time
    print("\n" + "=" * 70)
    print(f"✓ {len(written)} Manifeste in {total_time:.2f}s geschrieben")
    print(f"Ende: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    print("=" * 70)


if __name__ == "__main__":
    main()
