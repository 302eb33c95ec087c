"""Scenario configuration: one JSON tree holding every calibration knob.

Validation collects every problem before failing, rejects unknown keys (with
a nearest-key suggestion), and resolves file paths relative to the config
file. CLI flags are applied as dotted-key overrides before validation, so
the precedence is flag > config > default.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Mapping

from .behavior import (
    BehaviorModel,
    LevyParams,
    ModalityProfile,
    MotifParams,
    PteDistribution,
    validate_modality_shares,
)
from .errors import ConfigValidationError, MobflowError
from .tripgen import EvolutionConfig

# Placeholder category ranking and modality profiles, usable until a scenario
# calibrates its own. Not authoritative: energy rates and shares are
# regional statistics in real use.
DEFAULT_CATEGORY_RANKS = [
    "supermarket", "workplace", "school", "restaurant", "doctor",
    "pharmacy", "gym", "park", "bank", "barber",
]
DEFAULT_MODALITIES = [
    {"name": "walk", "energy_rate": 200.0, "share": 0.3, "speed": 5.0},
    {"name": "bicycle", "energy_rate": 65.0, "share": 0.2, "speed": 15.0},
    {"name": "car", "energy_rate": 6.0, "share": 0.5, "speed": 60.0},
]


@dataclass(frozen=True)
class DemandConfig:
    alpha_poi: float
    top_k: int
    category_ranks: Mapping[str, int]


@dataclass(frozen=True)
class ScenarioConfig:
    config_dir: str
    clusters_path: str
    pois_path: str
    nodes_path: str
    segments_path: str
    side_length_km: float
    margin_km: float | None
    demand: DemandConfig
    behavior: BehaviorModel
    modalities: tuple[ModalityProfile, ...]
    evolution: EvolutionConfig
    rng_seed: int
    output_dir: str
    raw: dict = field(repr=False, default_factory=dict)


def _levenshtein(a: str, b: str) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[-1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def _suggest(key: str, valid: list[str]) -> str:
    near = [(v, _levenshtein(key, v)) for v in valid]
    near = [v for v, d in sorted(near, key=lambda t: (t[1], t[0])) if d <= 2]
    return f" (did you mean '{near[0]}'?)" if near else ""


class _Walker:
    """Accumulates validation errors while pulling typed values out of the tree."""

    def __init__(self, tree: Mapping[str, Any]):
        self.tree = tree
        self.errors: list[str] = []

    def check_unknown(self, node: Mapping[str, Any], valid: list[str], prefix: str = "") -> None:
        for key in node:
            if key not in valid:
                self.errors.append(f"unknown key '{prefix}{key}'{_suggest(key, valid)}")

    def get(self, node, key, default, kind, prefix="", low=None, high=None,
            low_open=False, high_open=False, required=False):
        if key not in node:
            if required:
                self.errors.append(f"missing required key '{prefix}{key}'")
                return default
            return default
        value = node[key]
        if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            value = float(value)
        if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
            self.errors.append(f"'{prefix}{key}' must be an integer, got {value!r}")
            return default
        if not isinstance(value, kind):
            self.errors.append(f"'{prefix}{key}' must be {kind.__name__}, got {value!r}")
            return default
        if kind in (int, float):
            if not math.isfinite(value):
                self.errors.append(f"'{prefix}{key}' must be finite, got {value!r}")
                return default
            if low is not None and (value <= low if low_open else value < low):
                op = ">" if low_open else ">="
                self.errors.append(f"'{prefix}{key}' must be {op} {low}, got {value!r}")
                return default
            if high is not None and (value >= high if high_open else value > high):
                op = "<" if high_open else "<="
                self.errors.append(f"'{prefix}{key}' must be {op} {high}, got {value!r}")
                return default
        return value


def _apply_overrides(tree: dict, overrides: Mapping[str, Any]) -> dict:
    for dotted, value in overrides.items():
        node = tree
        parts = dotted.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return tree


def load_scenario(path: str, overrides: Mapping[str, Any] | None = None) -> ScenarioConfig:
    """Read, override, and validate a scenario file; raises with every problem found."""
    try:
        with open(path) as fh:
            tree = json.load(fh)
    except OSError as exc:
        raise ConfigValidationError([f"cannot read config: {exc}"]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigValidationError([f"config is not valid JSON: {exc}"]) from exc
    if not isinstance(tree, dict):
        raise ConfigValidationError(["config root must be a JSON object"])
    if overrides:
        tree = _apply_overrides(tree, overrides)
    return validate_scenario(tree, os.path.dirname(os.path.abspath(path)))


def validate_scenario(tree: Mapping[str, Any], config_dir: str) -> ScenarioConfig:
    w = _Walker(tree)
    w.check_unknown(tree, ["clusters", "pois", "network", "grid", "demand", "behavior",
                           "evolution", "rng_seed", "output_dir"])

    clusters = w.get(tree, "clusters", None, str, required=True)
    pois = w.get(tree, "pois", None, str, required=True)
    network = tree.get("network")
    nodes_path = segments_path = None
    if not isinstance(network, dict):
        w.errors.append("missing or malformed 'network' block (needs nodes and segments paths)")
    else:
        w.check_unknown(network, ["nodes", "segments"], "network.")
        nodes_path = w.get(network, "nodes", None, str, "network.", required=True)
        segments_path = w.get(network, "segments", None, str, "network.", required=True)

    grid = tree.get("grid", {})
    side = margin = None
    if not isinstance(grid, dict):
        w.errors.append("'grid' must be an object")
        grid = {}
    w.check_unknown(grid, ["side_length_l", "margin_km"], "grid.")
    side = w.get(grid, "side_length_l", 1.0, float, "grid.", low=0, low_open=True)
    if "margin_km" in grid and grid["margin_km"] is not None:
        margin = w.get(grid, "margin_km", None, float, "grid.", low=0)

    demand = tree.get("demand", {})
    if not isinstance(demand, dict):
        w.errors.append("'demand' must be an object")
        demand = {}
    w.check_unknown(demand, ["alpha_poi", "top_k", "category_ranks"], "demand.")
    alpha_poi = w.get(demand, "alpha_poi", 1.0, float, "demand.", low=0, low_open=True)
    top_k = w.get(demand, "top_k", 10, int, "demand.", low=1)
    ranks_list = demand.get("category_ranks", DEFAULT_CATEGORY_RANKS)
    if (not isinstance(ranks_list, list) or not ranks_list
            or not all(isinstance(name, str) for name in ranks_list)):
        w.errors.append("'demand.category_ranks' must be a non-empty list of category names")
        ranks_list = DEFAULT_CATEGORY_RANKS
    elif len(set(ranks_list)) != len(ranks_list):
        w.errors.append("'demand.category_ranks' has duplicate names")
    category_ranks = {name: i + 1 for i, name in enumerate(ranks_list)}

    behavior_tree = tree.get("behavior", {})
    if not isinstance(behavior_tree, dict):
        w.errors.append("'behavior' must be an object")
        behavior_tree = {}
    w.check_unknown(behavior_tree, ["levy", "pte", "motif", "modalities"], "behavior.")
    levy = behavior_tree.get("levy", {})
    if not isinstance(levy, dict):
        w.errors.append("'behavior.levy' must be an object")
        levy = {}
    w.check_unknown(levy, ["mu", "c"], "behavior.levy.")
    levy_mu = w.get(levy, "mu", 0.0, float, "behavior.levy.", low=0)
    levy_c = w.get(levy, "c", 1.0, float, "behavior.levy.", low=0, low_open=True)
    pte = behavior_tree.get("pte", {})
    if not isinstance(pte, dict):
        w.errors.append("'behavior.pte' must be an object")
        pte = {}
    w.check_unknown(pte, ["family", "median_kj"], "behavior.pte.")
    pte_family = w.get(pte, "family", "exponential", str, "behavior.pte.")
    pte_median = w.get(pte, "median_kj", 615.0, float, "behavior.pte.", low=0, low_open=True)
    motif = behavior_tree.get("motif", {})
    if not isinstance(motif, dict):
        w.errors.append("'behavior.motif' must be an object")
        motif = {}
    w.check_unknown(motif, ["p_e", "gamma_r", "gamma_e"], "behavior.motif.")
    motif_pe = w.get(motif, "p_e", 0.2, float, "behavior.motif.", low=0, high=1,
                     low_open=True, high_open=True)
    motif_gr = w.get(motif, "gamma_r", 2.0, float, "behavior.motif.", low=0, low_open=True)
    motif_ge = w.get(motif, "gamma_e", 2.0, float, "behavior.motif.", low=0, low_open=True)

    modalities_tree = behavior_tree.get("modalities", DEFAULT_MODALITIES)
    modalities: list[ModalityProfile] = []
    if not isinstance(modalities_tree, list) or not modalities_tree:
        w.errors.append("'behavior.modalities' must be a non-empty list")
    else:
        for i, m in enumerate(modalities_tree):
            prefix = f"behavior.modalities[{i}]."
            if not isinstance(m, dict):
                w.errors.append(f"'{prefix[:-1]}' must be an object")
                continue
            w.check_unknown(m, ["name", "energy_rate", "share", "speed"], prefix)
            name = w.get(m, "name", None, str, prefix, required=True)
            rate = w.get(m, "energy_rate", None, float, prefix, low=0, low_open=True, required=True)
            share = w.get(m, "share", None, float, prefix, low=0, high=1, required=True)
            speed = w.get(m, "speed", None, float, prefix, low=0, low_open=True, required=True)
            if None not in (name, rate, share, speed):
                modalities.append(ModalityProfile(name=name, energy_rate_kj_per_km=rate,
                                                  share=share, speed_km_h=speed))
        if len(modalities) == len(modalities_tree):
            try:
                validate_modality_shares(modalities)
            except MobflowError as exc:
                w.errors.append(f"behavior.modalities: {exc}")

    evolution_tree = tree.get("evolution", {})
    if not isinstance(evolution_tree, dict):
        w.errors.append("'evolution' must be an object")
        evolution_tree = {}
    w.check_unknown(evolution_tree, ["p_trip_min", "max_intermediate_zones",
                                     "candidates_per_origin", "rng_seed", "k_for_sk"], "evolution.")
    p_trip_min = w.get(evolution_tree, "p_trip_min", 1e-6, float, "evolution.",
                       low=0, high=1, low_open=True)
    max_zones = w.get(evolution_tree, "max_intermediate_zones", 5, int, "evolution.", low=1)
    candidates = w.get(evolution_tree, "candidates_per_origin", 8, int, "evolution.", low=1)
    k_for_sk = w.get(evolution_tree, "k_for_sk", 2, int, "evolution.", low=1)
    rng_seed = w.get(tree, "rng_seed", 0, int, low=0, high=2**64 - 1)
    evo_seed = w.get(evolution_tree, "rng_seed", rng_seed, int, "evolution.", low=0, high=2**64 - 1)
    output_dir = w.get(tree, "output_dir", "out", str)

    paths = {}
    for label, rel in (("clusters", clusters), ("pois", pois),
                       ("network.nodes", nodes_path), ("network.segments", segments_path)):
        if rel is None:
            continue
        resolved = rel if os.path.isabs(rel) else os.path.join(config_dir, rel)
        if not os.path.isfile(resolved):
            w.errors.append(f"'{label}' file not found: {resolved}")
        paths[label] = resolved

    behavior_model = None
    if not w.errors:
        try:
            behavior_model = BehaviorModel(
                levy=LevyParams(mu_km=levy_mu, c_km=levy_c),
                pte=PteDistribution.from_median(pte_median, family=pte_family),
                motif=MotifParams(p_e=motif_pe, gamma_r=motif_gr, gamma_e=motif_ge),
            )
        except MobflowError as exc:
            w.errors.append(f"behavior: {exc}")
    if w.errors:
        raise ConfigValidationError(sorted(w.errors))
    out = output_dir if os.path.isabs(output_dir) else os.path.join(config_dir, output_dir)
    return ScenarioConfig(
        config_dir=config_dir,
        clusters_path=paths["clusters"],
        pois_path=paths["pois"],
        nodes_path=paths["network.nodes"],
        segments_path=paths["network.segments"],
        side_length_km=side,
        margin_km=margin,
        demand=DemandConfig(alpha_poi=alpha_poi, top_k=top_k, category_ranks=category_ranks),
        behavior=behavior_model,
        modalities=tuple(modalities),
        evolution=EvolutionConfig(p_trip_min=p_trip_min, max_intermediate_zones=max_zones,
                                  candidates_per_origin=candidates, rng_seed=evo_seed,
                                  k_for_sk=k_for_sk),
        rng_seed=rng_seed,
        output_dir=out,
        raw=dict(tree),
    )
