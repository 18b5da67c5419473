"""Hybrid conversational-analytical workbench core.

Subpackages:
    calculus  - cognitive-overload mathematics and modality policy
    session   - event-sourced session state with provenance replay
    data      - typed columnar datasets, queries, anomalies, zoom, profiles
    grammar   - deterministic intent grammar with fuzzy column matching
    cost      - pointing/typing interaction-cost models
    harness   - seeded synthetic-agent simulations
    gateway   - protocol message handling over all of the above
"""

__version__ = "0.1.0"
