"""The simultaneous exploration-and-identification control loop.

Every step fuses the incoming frame, re-evaluates target identification at
the current threshold, and plans to the identified goal when one exists,
otherwise to the long-term corner goal. Both policies refresh on a fixed
25-step cycle. Stop is emitted only for an identified goal inside the stop
radius, budget expiry, or total disconnection from all corners.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .fusion import threshold_of
from .geometry import Action, Pose, wrap_angle
from .mapping import CORNER_ORDER, CornerGoal, Grid2D, corner_cell, project
from .planner import (
    MotionParams,
    PlannerError,
    dilate,
    extract_path,
    fmm_field,
    fmm_from_mask,
    next_action,
)
from .point_store import PointStore

POLICY_CYCLE = 25
BUDGET = 500
# strictly inside the 1.0 m success radius; the margin absorbs both grid
# discretization and believed-vs-true pose drift under actuation noise
STOP_RADIUS = 0.8
OBSERVATION_POINTS = 4096
MIN_RING2_CONFIRM = 4
REPLAN_PERIOD = 10
CONSISTENCY_SENTINEL = -1.0  # encodes absent consistency in observations


@dataclass
class Observation:
    """Fixed-shape policy input.

    points holds one row per sampled store point: x, y, z, the M normalized
    category probabilities, then consistency (CONSISTENCY_SENTINEL when
    absent). synthetic is set when the store was empty and the rows are a
    repeated placeholder at the agent origin.
    """

    points: np.ndarray  # (OBSERVATION_POINTS, 3 + M + 1) float32
    grid: Grid2D
    target_category: int
    step: int
    pose: Pose
    synthetic: bool = False


ExplorationPolicy = Callable[[Observation], CornerGoal]
IdentificationPolicy = Callable[[Observation], int]


@dataclass(frozen=True)
class PolicyInterface:
    exploration: ExplorationPolicy
    identification: IdentificationPolicy


@dataclass(frozen=True)
class Transition:
    success: bool
    new_count: int


def compute_reward(transition: Transition) -> tuple[float, float, float]:
    """(success, slack, exploration) reward components for one transition:
    2.5 on the successful terminal transition, a -0.01 per-step slack
    penalty, and 0.001 per newly inserted point."""
    r_success = 2.5 if transition.success else 0.0
    r_slack = -0.01
    r_explore = transition.new_count * 1e-3
    return r_success, r_slack, r_explore


# ------------------------------------------------------------ identification


def _identify(
    store: PointStore, category: int, tau: float, min_confirm: int = MIN_RING2_CONFIRM
) -> tuple[Optional[np.ndarray], int]:
    """Identified goal position and the confirmed candidate count.

    A point qualifies as a candidate when its fused probability for the
    category exceeds tau, its consistency is verifiable, and at least
    min_confirm distinct points in its 2-ring are themselves confident argmax
    matches. The goal is the centroid of the largest link-connected candidate
    cluster.
    """
    if store.count == 0:
        return None, 0
    conf = store.sem_column(category)
    cons = store.consistency_values
    cand = np.flatnonzero((conf > tau) & ~np.isnan(cons))
    if cand.size == 0:
        return None, 0
    qualify = (conf > tau) & (store.argmax_categories() == category)
    links = store.links

    # vectorized 2-ring: neighbors plus neighbors-of-neighbors, deduplicated
    r1 = links[cand]
    v1 = r1 >= 0
    r2 = links[np.where(v1, r1, 0)].reshape(cand.size, 64)
    v2 = (r2 >= 0) & np.repeat(v1, 8, axis=1)
    ring = np.concatenate([np.where(v1, r1, -1), np.where(v2, r2, -1)], axis=1)
    ring[ring == cand[:, None]] = -1
    ring = np.sort(ring, axis=1)
    distinct = np.ones_like(ring, dtype=bool)
    distinct[:, 1:] = ring[:, 1:] != ring[:, :-1]
    good = qualify[np.clip(ring, 0, None)] & (ring >= 0) & distinct
    confirmed = [int(p) for p in cand[good.sum(axis=1) >= min_confirm]]
    if not confirmed:
        return None, 0

    # largest connected cluster over (undirected) octree links
    index = {pid: i for i, pid in enumerate(confirmed)}
    parent = list(range(len(confirmed)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for pid in confirmed:
        for j in links[pid]:
            j = int(j)
            if j in index:
                a, b = find(index[pid]), find(index[j])
                if a != b:
                    parent[max(a, b)] = min(a, b)
    roots: dict[int, list[int]] = {}
    for pid in confirmed:
        roots.setdefault(find(index[pid]), []).append(pid)
    largest = max(roots.values(), key=lambda ids: (len(ids), -min(ids)))
    centroid = store.positions[largest].mean(axis=0)
    return centroid, len(confirmed)


def identify_target(store: PointStore, category: int, tau: float) -> Optional[np.ndarray]:
    """World position of the identified target, or None."""
    if not 0.5 <= tau <= 0.95:
        raise ValueError(f"tau must be in [0.5, 0.95], got {tau}")
    goal, _ = _identify(store, category, tau)
    return goal


# ----------------------------------------------------------------- policies


def _reachable_mask(grid: Grid2D) -> np.ndarray:
    """Cells reachable from the agent, unknown space counting as free.

    Without this mask the corridor counts are dominated by forever-unexplored
    cells beyond observed walls, which makes the farther corner always win
    and the choice shuttle between opposite corners.
    """
    traversable = ~grid.obstacle
    ar, ac = grid.world_to_cell(grid.center_pose.x, grid.center_pose.y)
    source = np.zeros_like(traversable)
    source[np.clip(ar, 0, grid.size - 1), np.clip(ac, 0, grid.size - 1)] = True
    try:
        field = fmm_from_mask(traversable, source)
    except PlannerError:
        return traversable
    return np.isfinite(field)


def corridor_unexplored_count(
    grid: Grid2D, corner: CornerGoal, width_cells: float = 3.0, reachable: Optional[np.ndarray] = None
) -> int:
    """Unexplored, traversable, agent-reachable cells within width_cells of
    the straight segment from the agent's cell to the corner cell."""
    size = grid.size
    ar, ac = grid.world_to_cell(grid.center_pose.x, grid.center_pose.y)
    cr, cc = corner_cell(grid, corner)
    rows, cols = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    vr, vc = cr - ar, cc - ac
    ll = vr * vr + vc * vc
    if ll == 0:
        d2 = (rows - ar) ** 2 + (cols - ac) ** 2
    else:
        t = np.clip(((rows - ar) * vr + (cols - ac) * vc) / ll, 0.0, 1.0)
        d2 = (rows - (ar + t * vr)) ** 2 + (cols - (ac + t * vc)) ** 2
    corridor = d2 <= width_cells * width_cells
    if reachable is None:
        reachable = _reachable_mask(grid)
    return int((corridor & ~grid.explored & ~grid.obstacle & reachable).sum())


def heuristic_exploration_policy(obs: Observation) -> CornerGoal:
    """Corner whose straight-line corridor holds the most unexplored
    reachable cells; ties break in the fixed corner order."""
    reachable = _reachable_mask(obs.grid)
    best = CORNER_ORDER[0]
    best_count = -1
    for corner in CORNER_ORDER:
        count = corridor_unexplored_count(obs.grid, corner, reachable=reachable)
        if count > best_count:
            best, best_count = corner, count
    return best


def round_robin_exploration_policy(obs: Observation) -> CornerGoal:
    return CORNER_ORDER[(obs.step // POLICY_CYCLE) % len(CORNER_ORDER)]


def fixed_threshold_policy(s: int = 7) -> IdentificationPolicy:
    """Constant-threshold identification; s = 7 is tau = 0.85."""
    threshold_of(s)  # validate now

    def policy(obs: Observation) -> int:
        return s

    return policy


def staged_threshold_policy(low_s: int = 3, high_s: int = 7, switch_step: int = 50) -> IdentificationPolicy:
    """Stub for a dynamic learned policy: permissive early, strict later."""

    def policy(obs: Observation) -> int:
        return low_s if obs.step < switch_step else high_s

    return policy


def seeded_corner_policy(seed: int = 0) -> ExplorationPolicy:
    """Stand-in for an externally trained corner policy: a seeded table of
    per-cycle corner choices, loaded through the same callable interface."""
    rng = np.random.default_rng(seed)
    table = rng.integers(0, len(CORNER_ORDER), size=BUDGET // POLICY_CYCLE + 1)

    def policy(obs: Observation) -> CornerGoal:
        return CORNER_ORDER[int(table[min(obs.step // POLICY_CYCLE, len(table) - 1)])]

    return policy


# ---------------------------------------------------------------- nav state


@dataclass
class _Plan:
    grid: Grid2D
    field: np.ndarray
    traversable: np.ndarray
    goal_cell: tuple[int, int]
    signature: tuple
    age: int = 0


@dataclass
class NavState:
    store: PointStore
    target_category: int
    pose: Pose  # agent-visible pose; the runner refreshes it every step
    budget: int = BUDGET
    policy_cycle: int = POLICY_CYCLE
    stop_radius: float = STOP_RADIUS
    params: MotionParams = field(default_factory=MotionParams)
    obs_seed: int = 0
    grid_size: int = 240
    cell_len: float = 0.20

    step: int = 0
    corner_goal: CornerGoal = CornerGoal.TOP_LEFT
    threshold_action: int = 7
    identified_goal: Optional[np.ndarray] = None
    stop_emitted: bool = False
    visited: list = field(default_factory=list)
    plan: Optional[_Plan] = None
    reward_totals: np.ndarray = field(default_factory=lambda: np.zeros(3))
    policy_invocation_steps: list = field(default_factory=list)
    last_escape_step: int = -1_000_000
    bumps: list = field(default_factory=list)  # (x, y, heading) of blocked moves
    last_action: Optional[Action] = None
    last_pose: Optional[Pose] = None


@dataclass(frozen=True)
class StepInfo:
    action: Action
    goal_kind: str  # "identified" or "explore"
    corner_goal: CornerGoal
    tau: float
    candidate_count: int
    new_count: int
    merged_count: int


def build_observation(state: NavState) -> Observation:
    m = state.store.n_categories
    grid = project(
        state.store,
        state.pose,
        visited_xy=np.asarray(state.visited) if state.visited else None,
        size=state.grid_size,
        cell_len=state.cell_len,
    )
    pts = np.zeros((OBSERVATION_POINTS, 3 + m + 1), dtype=np.float32)
    ids = state.store.sample_ids(OBSERVATION_POINTS, seed=state.obs_seed * 1_000_003 + state.step)
    synthetic = ids is None
    if synthetic:
        pts[:, 0] = state.pose.x
        pts[:, 1] = state.pose.y
        pts[:, 3 : 3 + m] = 1.0 / m
        pts[:, -1] = CONSISTENCY_SENTINEL
    else:
        pts[:, :3] = state.store.positions[ids]
        pts[:, 3 : 3 + m] = state.store.sem_normalized(ids)
        cons = state.store.consistency_values[ids]
        pts[:, -1] = np.where(np.isnan(cons), CONSISTENCY_SENTINEL, cons)
    return Observation(
        points=pts,
        grid=grid,
        target_category=state.target_category,
        step=state.step,
        pose=state.pose,
        synthetic=synthetic,
    )


def _plan_to_goal(state: NavState, goal_world: tuple[float, float], signature: tuple) -> _Plan:
    """Project a fresh grid and build the travel-cost field to the goal.

    The goal is first snapped to the cell reachable from the agent that lies
    nearest the goal cell. Unknown space counts as traversable; the agent's
    own disk is cleared so a freshly observed wall cannot wedge the start.
    """
    grid = project(
        state.store,
        state.pose,
        visited_xy=np.asarray(state.visited) if state.visited else None,
        size=state.grid_size,
        cell_len=state.cell_len,
    )
    traversable = ~dilate(grid.obstacle, int(np.ceil(state.params.agent_radius / grid.cell_len)))
    ar, ac = grid.world_to_cell(state.pose.x, state.pose.y)
    lo_r, hi_r = max(0, ar - 1), min(grid.size, ar + 2)
    lo_c, hi_c = max(0, ac - 1), min(grid.size, ac + 2)
    traversable[lo_r:hi_r, lo_c:hi_c] = True

    # block the cells where forward moves hit sub-cell geometry the map
    # cannot show, so paths route around instead of re-commanding the bump
    for bx, by, btheta in state.bumps:
        cr, cc = grid.world_to_cell(bx + 0.3 * math.cos(btheta), by + 0.3 * math.sin(btheta))
        if grid.in_bounds(cr, cc) and (cr, cc) != (ar, ac):
            traversable[cr, cc] = False

    agent_mask = np.zeros_like(traversable)
    agent_mask[ar, ac] = True
    reach = fmm_from_mask(traversable, agent_mask)
    reachable_rows, reachable_cols = np.nonzero(np.isfinite(reach))
    if reachable_rows.size == 0:
        raise PlannerError("agent has no reachable cells")

    gr, gc = grid.world_to_cell(goal_world[0], goal_world[1])
    d2 = (reachable_rows - gr) ** 2 + (reachable_cols - gc) ** 2
    best = int(np.argmin(d2))
    goal_cell = (int(reachable_rows[best]), int(reachable_cols[best]))
    fld = fmm_field(traversable, goal_cell)
    return _Plan(grid=grid, field=fld, traversable=traversable, goal_cell=goal_cell, signature=signature)


def _forward_clear(state: NavState, plan: _Plan, pose: Pose, step_len: float) -> bool:
    """Check a forward move against the plan's dilated map and the remembered
    bumps (never re-command a move that just hit invisible geometry)."""
    for bx, by, btheta in state.bumps:
        if (
            math.hypot(pose.x - bx, pose.y - by) < 0.15
            and abs(wrap_angle(pose.theta - btheta)) < math.radians(20.0)
        ):
            return False
    fx, fy = pose.forward()
    for frac in np.linspace(0.0, 1.0, 6):
        x = pose.x + frac * step_len * fx
        y = pose.y + frac * step_len * fy
        r, c = plan.grid.world_to_cell(x, y)
        if plan.grid.in_bounds(r, c) and not plan.traversable[r, c]:
            return False
    return True


def _goal_world(state: NavState) -> tuple[tuple[float, float], str, tuple]:
    if state.identified_goal is not None:
        g = state.identified_goal
        # quantize the signature: per-frame centroid jitter must not force a
        # replan (and a possibly side-flipping path) every step
        sig = ("identified", round(float(g[0]) / 0.2), round(float(g[1]) / 0.2))
        return (float(g[0]), float(g[1])), "identified", sig
    grid_half = state.grid_size * state.cell_len / 2.0
    # corner cell in the *current* agent-centered window
    offsets = {
        CornerGoal.TOP_LEFT: (-1.0, 1.0),
        CornerGoal.TOP_RIGHT: (1.0, 1.0),
        CornerGoal.BOTTOM_LEFT: (-1.0, -1.0),
        CornerGoal.BOTTOM_RIGHT: (1.0, -1.0),
    }
    ox, oy = offsets[state.corner_goal]
    margin = (2 + 0.5) * state.cell_len
    gx = state.pose.x + ox * (grid_half - margin)
    gy = state.pose.y + oy * (grid_half - margin)
    return (gx, gy), "explore", ("explore", state.corner_goal.value)


def nav_step(state: NavState, frame_positions, frame_sems, policies: PolicyInterface) -> tuple[Action, StepInfo]:
    """One navigator step: fuse the frame, refresh policies on cycle, run
    identification, arbitrate the goal, plan, and emit the next action."""
    if state.step >= state.budget:
        raise RuntimeError("episode budget exhausted")

    result = state.store.insert_batch(frame_positions, frame_sems, state.step)
    state.visited.append((state.pose.x, state.pose.y))

    # a forward command that produced no displacement hit something the map
    # does not show (sub-cell geometry); remember the blocked heading and
    # replan around it
    if (
        state.last_action is Action.MOVE_FORWARD
        and state.last_pose is not None
        and math.hypot(state.pose.x - state.last_pose.x, state.pose.y - state.last_pose.y) < 1e-9
    ):
        state.bumps.append((state.pose.x, state.pose.y, state.pose.theta))
        state.plan = None

    if state.step % state.policy_cycle == 0:
        obs = build_observation(state)
        state.corner_goal = policies.exploration(obs)
        state.threshold_action = int(policies.identification(obs))
        state.policy_invocation_steps.append(state.step)

    tau = threshold_of(state.threshold_action)
    goal, candidate_count = _identify(state.store, state.target_category, tau)
    state.identified_goal = goal

    _escape_if_parked(state)
    goal_world, goal_kind, signature = _goal_world(state)
    action = None

    if goal_kind == "identified":
        d = math.hypot(goal_world[0] - state.pose.x, goal_world[1] - state.pose.y)
        if d <= state.stop_radius:
            action = Action.STOP

    if action is None:
        action = _plan_and_act(state, goal_world, goal_kind, signature)

    # turn hysteresis: reversing the previous turn without having moved is a
    # flip-flop between two vetoed headings; committing to one direction
    # turns it into a full rescan that eventually finds a clear heading
    turns = (Action.TURN_LEFT, Action.TURN_RIGHT)
    if (
        action in turns
        and state.last_action in turns
        and action is not state.last_action
        and state.last_pose is not None
        and math.hypot(state.pose.x - state.last_pose.x, state.pose.y - state.last_pose.y) < 1e-9
    ):
        action = state.last_action

    if state.step == state.budget - 1 and action is not Action.STOP:
        action = Action.STOP
    if action is Action.STOP:
        state.stop_emitted = True

    info = StepInfo(
        action=action,
        goal_kind=goal_kind,
        corner_goal=state.corner_goal,
        tau=tau,
        candidate_count=candidate_count,
        new_count=result.new,
        merged_count=result.merged,
    )
    state.last_action = action
    state.last_pose = state.pose
    state.step += 1
    return action, info


_ESCAPE_WINDOW = 30


def _escape_if_parked(state: NavState) -> None:
    """Rotate to the next corner when exploration has made no displacement
    for a full window: the chosen corner's corridor can stay maximally
    unexplored behind a wall forever, so the policy alone never unsticks."""
    if state.identified_goal is not None:
        return
    if state.step - state.last_escape_step < _ESCAPE_WINDOW or len(state.visited) < _ESCAPE_WINDOW:
        return
    recent = np.asarray(state.visited[-_ESCAPE_WINDOW:])
    here = np.array([state.pose.x, state.pose.y])
    if np.hypot(recent[:, 0] - here[0], recent[:, 1] - here[1]).max() < 0.25:
        idx = CORNER_ORDER.index(state.corner_goal)
        state.corner_goal = CORNER_ORDER[(idx + 1) % len(CORNER_ORDER)]
        state.plan = None
        state.last_escape_step = state.step


def _plan_and_act(state: NavState, goal_world, goal_kind: str, signature: tuple) -> Action:
    try:
        action = _follow(state, goal_world, goal_kind, signature)
    except PlannerError:
        if goal_kind == "identified":
            # fall back to exploring this step; the goal stays for stop checks
            goal_world, _, signature = _goal_world_explore(state)
            try:
                return _follow(state, goal_world, "explore", signature)
            except PlannerError:
                pass
        # round-robin through the remaining corners; stop if all disconnect
        start = CORNER_ORDER.index(state.corner_goal)
        for k in range(1, len(CORNER_ORDER)):
            state.corner_goal = CORNER_ORDER[(start + k) % len(CORNER_ORDER)]
            goal_world, _, signature = _goal_world_explore(state)
            try:
                return _follow(state, goal_world, "explore", signature)
            except PlannerError:
                continue
        return Action.STOP
    return action


def _goal_world_explore(state: NavState) -> tuple[tuple[float, float], str, tuple]:
    saved = state.identified_goal
    state.identified_goal = None
    out = _goal_world(state)
    state.identified_goal = saved
    return out


def _follow(state: NavState, goal_world, goal_kind: str, signature: tuple) -> Action:
    plan = state.plan
    need_replan = (
        plan is None
        or plan.signature != signature
        or plan.age >= REPLAN_PERIOD
        or not plan.grid.in_bounds(*plan.grid.world_to_cell(state.pose.x, state.pose.y))
    )
    if need_replan:
        plan = _plan_to_goal(state, goal_world, signature)
        state.plan = plan
    else:
        plan.age += 1

    start = plan.grid.world_to_cell(state.pose.x, state.pose.y)
    try:
        cells = extract_path(plan.field, start)
    except PlannerError:
        plan = _plan_to_goal(state, goal_world, signature)
        state.plan = plan
        cells = extract_path(plan.field, plan.grid.world_to_cell(state.pose.x, state.pose.y))

    waypoints = _waypoints(plan, cells)
    stop_radius = None
    if goal_kind == "identified":
        waypoints.append(goal_world)
        stop_radius = state.stop_radius
    action = next_action_checked(state, plan, waypoints, stop_radius, goal_world, signature)
    return action


def _waypoints(plan: _Plan, cells) -> list:
    # skip the agent's own cell: its center may sit beyond the waypoint
    # tolerance, which would make the follower chase the cell it stands in
    tail = cells[1:] if len(cells) > 1 else cells
    return [plan.grid.cell_to_world(r, c) for r, c in tail]


def next_action_checked(state, plan, waypoints, stop_radius, goal_world, signature) -> Action:
    action = next_action(state.pose, waypoints, state.params, stop_radius=stop_radius)
    if action is Action.MOVE_FORWARD and not _forward_clear(state, plan, state.pose, state.params.forward_step):
        plan = _plan_to_goal(state, goal_world, signature)
        state.plan = plan
        cells = extract_path(plan.field, plan.grid.world_to_cell(state.pose.x, state.pose.y))
        waypoints = _waypoints(plan, cells)
        if stop_radius is not None:
            waypoints.append(goal_world)
        action = next_action(state.pose, waypoints, state.params, stop_radius=stop_radius)
        if action is Action.MOVE_FORWARD and not _forward_clear(state, plan, state.pose, state.params.forward_step):
            action = Action.TURN_LEFT
    return action
