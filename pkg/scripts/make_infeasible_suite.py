#!/usr/bin/env python3
"""Regenerate the bundled infeasible-assignment suite.

Each scenario baits the allocator into pairing a task with a cheap agent
that cannot actually execute it (a barrier the agent cannot cross), while
a pricier capable agent is available. With verification on, the doomed
pairing is rejected before any dispatch; without it, the run executes at
least one infeasible action before recovering.
"""

from pathlib import Path

from fleetops.world import parse_scenario, save_scenario

OUT = Path(__file__).resolve().parents[1] / "src/fleetops/scenes/infeasible"


def robot(name, kind, speed, caps, trav, start, battery=200):
    return {
        "name": name,
        "kind": kind,
        "height_m": 0.3,
        "width_m": 0.4,
        "max_speed": speed,
        "battery_capacity": battery,
        "battery_pct": 100.0,
        "capabilities": caps,
        "traversable": trav,
        "start": list(start),
    }


def wall_scan(index, width, aerial_backup):
    """Search task behind a barrier the fast scout cannot cross."""
    band = width - 3
    barrier = "#" if aerial_backup else "r"
    rows = ["." * band + barrier + "." * (width - band - 1) for _ in range(4)]
    if aerial_backup:
        backup = robot(
            "Hover1", "aerial", 1, ["aerial", "camera"], ["flat", "door"], (0, 3)
        )
    else:
        backup = robot(
            "Hauler", "wheeled", 1, ["wheeled", "camera", "rough_terrain"],
            ["flat", "rough", "door"], (0, 3),
        )
    return {
        "format": "scenario/1",
        "name": f"infeasible_{index:02d}",
        "seed": 0,
        "max_ticks": 80,
        "min_steps": 1,
        "map": "\n".join(rows),
        "robots": [
            robot("Scout", "wheeled", 3, ["wheeled", "camera"], ["flat", "door"], (0, 0)),
            backup,
        ],
        "objects": [
            {"id": "crate1", "kind": "crate", "x": width - 1, "y": 1, "level": 0,
             "found": False, "carried_by": None},
        ],
        "tasks": [
            {
                "id": "T1",
                "description": "search the sealed-off bay for the crate",
                "requires": ["camera"],
                "target": [band + 1, 0, width - 1, 3],
                "goals": ["found(crate,1)"],
            }
        ],
    }


def wall_fetch(index, width):
    """Delivery whose second leg is unreachable for the nearby arm rover."""
    band = width - 3
    rows = ["." * band + "r" + "." * (width - band - 1) for _ in range(4)]
    return {
        "format": "scenario/1",
        "name": f"infeasible_{index:02d}",
        "seed": 0,
        "max_ticks": 80,
        "min_steps": 1,
        "map": "\n".join(rows),
        "robots": [
            robot("Lift1", "arm", 2, ["arm", "grasp"], ["flat", "door"], (0, 1)),
            robot(
                "Mule", "wheeled", 1,
                ["wheeled", "grasp", "rough_terrain"],
                ["flat", "rough", "door"], (0, 3),
            ),
        ],
        "objects": [
            {"id": "part1", "kind": "part", "x": 2, "y": 1, "level": 0,
             "found": False, "carried_by": None},
        ],
        "tasks": [
            {
                "id": "T1",
                "description": "deliver the part across the gravel strip",
                "requires": ["grasp"],
                "goals": [f"object_at(part1,{width - 1},2,{width - 1},3)"],
            }
        ],
    }


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    for index in range(1, 21):
        width = 6 + (index % 3)
        if index % 2 == 1:
            data = wall_scan(index, width, aerial_backup=(index % 4 == 1))
        else:
            data = wall_fetch(index, width)
        scenario = parse_scenario(data)
        path = OUT / f"{scenario.name}.scn"
        path.write_text(save_scenario(scenario))
        print(path.name)


if __name__ == "__main__":
    main()
