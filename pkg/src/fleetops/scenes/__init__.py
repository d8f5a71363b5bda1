"""Bundled benchmark scenes: the difficulty-ordered S1-S5 suite and the
infeasible-assignment suite used by the verification-gate checks."""

from importlib import resources
from pathlib import Path

from ..world import Scenario, load_scenario

SCENE_ORDER = ("s1_house", "s2_store", "s3_restaurant", "s4_office", "s5_garden")


def scenes_path() -> Path:
    return Path(resources.files(__package__))


def bundled_scenes() -> list[Scenario]:
    root = scenes_path()
    return [load_scenario(root / f"{stem}.scn") for stem in SCENE_ORDER]


def infeasible_suite() -> list[Scenario]:
    root = scenes_path() / "infeasible"
    return [load_scenario(path) for path in sorted(root.glob("*.scn"))]
