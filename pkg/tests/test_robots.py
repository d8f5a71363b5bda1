"""Robot model: capability gating, movement planning, battery accounting."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fleetops.errors import (
    BatteryInsufficient,
    InfeasibleAction,
    NoActiveTask,
    Unreachable,
)
from fleetops.grid import reachable_cells
from fleetops.robots import KNOWN_CAPABILITIES, ActionCommand, can_perform, passable

from conftest import OPEN_5X5, make_profile, make_world


class TestCanPerform:
    def test_empty_requirement(self):
        assert can_perform(make_profile(capabilities=()), set())

    def test_missing_capability(self):
        rover = make_profile(capabilities=("wheeled",))
        assert not can_perform(rover, {"climb_stairs"})

    def test_unknown_tags_preserved_not_rejected(self):
        quirky = make_profile(capabilities=("wheeled", "laser_show"))
        assert "laser_show" in quirky.capabilities
        assert can_perform(quirky, {"laser_show"})

    def test_matches_subset_oracle_random(self):
        rng = random.Random(11)
        tags = sorted(KNOWN_CAPABILITIES)
        for _ in range(1000):
            have = frozenset(rng.sample(tags, rng.randint(0, len(tags))))
            need = frozenset(rng.sample(tags, rng.randint(0, 4)))
            profile = make_profile(capabilities=have)
            assert can_perform(profile, need) == need.issubset(have)

    @settings(max_examples=200, deadline=None)
    @given(
        have=st.frozensets(st.sampled_from(sorted(KNOWN_CAPABILITIES))),
        extra=st.frozensets(st.sampled_from(sorted(KNOWN_CAPABILITIES))),
        need=st.frozensets(st.sampled_from(sorted(KNOWN_CAPABILITIES))),
    )
    def test_monotone(self, have, extra, need):
        """Adding capabilities never flips a true verdict to false."""
        if can_perform(make_profile(capabilities=have), need):
            assert can_perform(make_profile(capabilities=have | extra), need)


class TestMovePlanning:
    def test_adjacent_cell_one_tick(self, open_world):
        robot = open_world.robots["Rover1"]
        plan = robot.plan_move((1, 0), open_world)
        assert plan.ticks == 1
        assert plan.cost == 1

    def test_enclosed_target_unreachable_flood_fill_oracle(self):
        map_text = "\n".join(
            [
                ".....",
                ".###.",
                ".#.#.",
                ".###.",
                ".....",
            ]
        )
        world = make_world(map_text, robots=[(make_profile(), (0, 0))])
        robot = world.robots["Rover1"]
        reachable = reachable_cells(
            world.grid, (0, 0), lambda c: passable(robot.profile, c)
        )
        assert (2, 2) not in reachable
        with pytest.raises(Unreachable):
            robot.plan_move((2, 2), world)

    def test_six_cell_path_speed_two_takes_three_ticks(self):
        world = make_world("." * 7, robots=[(make_profile(max_speed=2), (0, 0))])
        plan = world.robots["Rover1"].plan_move((6, 0), world)
        assert plan.ticks == 3
        assert plan.cost == 6

    def test_battery_insufficient(self):
        world = make_world(
            "." * 7,
            robots=[(make_profile(battery_capacity=100, battery_pct=3.0), (0, 0))],
        )
        with pytest.raises(BatteryInsufficient):
            world.robots["Rover1"].plan_move((6, 0), world)

    def test_plan_only_traverses_traversable_cells(self):
        rng = random.Random(5)
        chars = [".", ".", ".", "r", "#"]
        for _ in range(50):
            rows = ["".join(rng.choice(chars) for _ in range(6)) for _ in range(6)]
            rows[0] = "." + rows[0][1:]
            world = make_world("\n".join(rows), robots=[(make_profile(), (0, 0))])
            robot = world.robots["Rover1"]
            tx, ty = rng.randrange(6), rng.randrange(6)
            try:
                plan = robot.plan_move((tx, ty), world)
            except Unreachable:
                continue
            for burst in plan.bursts:
                for (x, y) in burst:
                    assert passable(robot.profile, world.grid.at(x, y))

    def test_aerial_ignores_obstacles_but_not_closed_doors(self):
        drone = make_profile(
            name="Drone1", kind="aerial", capabilities=("aerial", "camera")
        )
        world = make_world("..#d.", robots=[(drone, (0, 0))])
        robot = world.robots["Drone1"]
        assert robot.plan_move((2, 0), world).cost == 2  # over the obstacle
        with pytest.raises(Unreachable):
            robot.plan_move((4, 0), world)  # closed door blocks


class TestJumpAndClimb:
    def test_jump_beside_table(self):
        dog = make_profile(
            name="Dog1", kind="legged", capabilities=("legged", "jump")
        )
        world = make_world(".T\n..", robots=[(dog, (0, 0))])
        robot = world.robots["Dog1"]
        robot.jump_upward(world)
        assert robot.elevation_level == 1
        assert robot.energy == 98

    def test_jump_without_capability(self, open_world):
        with pytest.raises(InfeasibleAction):
            open_world.robots["Rover1"].jump_upward(open_world)

    def test_jump_on_open_floor_no_adjacent_table(self):
        dog = make_profile(name="Dog1", kind="legged", capabilities=("jump",))
        world = make_world(OPEN_5X5, robots=[(dog, (2, 2))])
        adjacent_tables = [
            (x, y)
            for (x, y) in world.grid.neighbors4(2, 2)
            if world.grid.at(x, y).kind == "table"
        ]
        assert adjacent_tables == []  # adjacency oracle
        with pytest.raises(InfeasibleAction):
            world.robots["Dog1"].jump_upward(world)

    def test_climb_up_on_stairs(self):
        dog = make_profile(
            name="Dog1",
            kind="legged",
            capabilities=("legged", "climb_stairs"),
            traversable=("flat", "stairs", "door"),
        )
        world = make_world("s.", robots=[(dog, (0, 0))])
        robot = world.robots["Dog1"]
        robot.climb_up(world)
        assert robot.elevation_level == 1
        assert robot.energy == 98

    def test_climb_down_at_ground_level(self):
        dog = make_profile(
            name="Dog1", kind="legged", capabilities=("climb_stairs",)
        )
        world = make_world("s.", robots=[(dog, (0, 0))])
        with pytest.raises(InfeasibleAction):
            world.robots["Dog1"].climb_down(world)

    def test_climb_without_capability(self):
        rover = make_profile(traversable=("flat", "stairs", "door"))
        world = make_world("s.", robots=[(rover, (0, 0))])
        with pytest.raises(InfeasibleAction):
            world.robots["Rover1"].climb_up(world)


class TestStatusAndProgress:
    def test_fresh_robot(self, open_world):
        status = open_world.robots["Rover1"].get_status()
        assert status.battery_pct == 100.0
        assert status.current_task is None
        assert status.progress == 0.0
        assert status.fault is None

    def test_battery_after_five_unit_moves(self):
        world = make_world(
            "." * 6, robots=[(make_profile(battery_capacity=50), (0, 0))]
        )
        robot = world.robots["Rover1"]
        robot.plan = robot.plan_move((5, 0), world)
        while robot.plan:
            world.tick({})
        assert robot.get_status().battery_pct == 100.0 - 5 / 50 * 100

    def test_fault_latches(self, open_world):
        robot = open_world.robots["Rover1"]
        robot.fault = "terrain_block: wedged"
        assert open_world.robots["Rover1"].get_status().fault == "terrain_block: wedged"

    def test_no_active_task(self, open_world):
        with pytest.raises(NoActiveTask):
            open_world.robots["Rover1"].get_task_progress()

    def test_progress_fraction(self, open_world):
        robot = open_world.robots["Rover1"]
        robot.current_task = "T1"
        robot.progress = 0.5
        assert robot.get_task_progress() == ("T1", 0.5)


class TestGraspAndScan:
    def test_grasp_carry_place(self):
        arm = make_profile(name="Arm1", capabilities=("grasp",))
        world = make_world(
            OPEN_5X5,
            robots=[(arm, (0, 0))],
            objects=[{"id": "apple1", "kind": "apple", "x": 1, "y": 0}],
        )
        robot = world.robots["Arm1"]
        robot.grasp("apple1", world)
        assert robot.carrying == "apple1"
        robot.plan = robot.plan_move((3, 0), world)
        while robot.plan:
            world.tick({})
        robot.grasp("apple1", world)
        obj = world.objects["apple1"]
        assert (obj.x, obj.y) == (3, 0)
        assert obj.carried_by is None

    def test_grasp_out_of_reach(self):
        arm = make_profile(name="Arm1", capabilities=("grasp",))
        world = make_world(
            OPEN_5X5,
            robots=[(arm, (0, 0))],
            objects=[{"id": "apple1", "kind": "apple", "x": 4, "y": 4}],
        )
        with pytest.raises(InfeasibleAction):
            world.robots["Arm1"].grasp("apple1", world)

    def test_scan_respects_elevation(self):
        dog = make_profile(
            name="Dog1", kind="legged", capabilities=("jump", "camera")
        )
        world = make_world(
            ".T.",
            robots=[(dog, (0, 0))],
            objects=[{"id": "apple1", "kind": "apple", "x": 1, "y": 0, "level": 1}],
        )
        robot = world.robots["Dog1"]
        assert robot.scan((0, 0, 2, 0), world) == []
        robot.jump_upward(world)
        assert robot.scan((0, 0, 2, 0), world) == ["apple1"]
        assert world.objects["apple1"].found

    def test_scan_requires_camera_and_containment(self):
        blind = make_profile(name="Blind1", capabilities=())
        world = make_world(OPEN_5X5, robots=[(blind, (0, 0))])
        with pytest.raises(InfeasibleAction):
            world.robots["Blind1"].scan((0, 0, 1, 1), world)
        seeing = make_profile(name="Rover2", capabilities=("camera",))
        world2 = make_world(OPEN_5X5, robots=[(seeing, (4, 4))])
        with pytest.raises(InfeasibleAction):
            world2.robots["Rover2"].scan((0, 0, 1, 1), world2)


class TestBatteryInvariants:
    def test_battery_never_increases(self):
        """Random command stream; energy is non-increasing and never < 0."""
        rng = random.Random(23)
        dog = make_profile(
            name="Dog1",
            kind="legged",
            battery_capacity=30,
            capabilities=("jump", "climb_stairs", "camera", "grasp"),
            traversable=("flat", "stairs", "door"),
        )
        world = make_world(
            "\n".join(["..s..", ".T...", ".....", "....."]),
            robots=[(dog, (0, 0))],
            objects=[{"id": "apple1", "kind": "apple", "x": 2, "y": 2}],
        )
        robot = world.robots["Dog1"]
        last = robot.energy
        for _ in range(200):
            action = rng.choice(
                [
                    ActionCommand.move_to(rng.randrange(5), rng.randrange(4)),
                    ActionCommand.jump_upward(),
                    ActionCommand.climb_up(),
                    ActionCommand.climb_down(),
                    ActionCommand.grasp("apple1"),
                    ActionCommand.scan((0, 0, 4, 3)),
                    ActionCommand.wait(),
                ]
            )
            world.tick({"Dog1": action} if not robot.busy else {})
            assert 0 <= robot.energy <= last
            last = robot.energy


class TestProfileValidation:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            make_profile(max_speed=0)
        with pytest.raises(ValueError):
            make_profile(battery_pct=150.0)
        with pytest.raises(ValueError):
            make_profile(kind="hovercraft")

    def test_profile_json_round_trip(self):
        profile = make_profile(capabilities=("wheeled", "camera"))
        from fleetops.robots import RobotProfile

        assert RobotProfile.from_json(profile.to_json()) == profile
