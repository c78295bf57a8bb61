"""CoSA toolkit: komprimierte Adapter ΔW = L·Y·R, RIP-Analyse und Budget-Rechnung."""

__version__ = "1.0.0"
TOOL_NAME = "cosa-toolkit"
