"""Procedurally generated multi-room gridworld with keys, locked doors and a goal.

The world is an R x R arrangement of C x C rooms separated by one-cell walls.
Rooms are connected by doors along a random spanning tree; some doors on the
path from the start room to the goal room are locked and need a matching
key, which is always placed on the start side of its door. The agent sees
an egocentric square window of one-hot cell types plus its key inventory.
Each room has a few interior wall blocks and, by default, its own floor
code, so rooms are told apart by sight and not only by position.

Game rules live in ``transition`` so the breadth-first solver and the
environment share one implementation.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from byol_explore.errors import ConfigurationError, UsageError

UP, DOWN, LEFT, RIGHT, PICKUP, TOGGLE = range(6)
ACTION_NAMES = ("up", "down", "left", "right", "pickup", "toggle")
NUM_ACTIONS = 6
MOVES = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1)}

EMPTY, WALL, OPEN_DOOR, GOAL = 0, 1, 2, 3
BASE_CELL_TYPES = 4


@dataclass(frozen=True)
class EnvConfig:
    rooms: int = 3
    room_size: int = 5
    view_radius: int = 2
    keys: int = 1
    step_limit: int = 500
    noise_tile: bool = False
    procedural: bool = True
    layout_seed: int = 0
    obstacles: int = 3
    room_colors: bool = True

    def __post_init__(self):
        if self.rooms < 1:
            raise ConfigurationError(f"env.rooms must be >= 1, got {self.rooms}")
        if self.room_size < 2:
            raise ConfigurationError(f"env.room_size must be >= 2, got {self.room_size}")
        if self.view_radius < 1:
            raise ConfigurationError(f"env.view_radius must be >= 1, got {self.view_radius}")
        if self.keys < 0:
            raise ConfigurationError(f"env.keys must be >= 0, got {self.keys}")
        if self.step_limit < 1:
            raise ConfigurationError(f"env.step_limit must be >= 1, got {self.step_limit}")
        if not 0 <= self.obstacles <= self.room_size ** 2 // 3:
            raise ConfigurationError(
                f"env.obstacles must lie in [0, {self.room_size ** 2 // 3}] for room_size {self.room_size}, got {self.obstacles}"
            )

    @property
    def grid_size(self) -> int:
        return self.rooms * (self.room_size + 1) + 1

    @property
    def cell_types(self) -> int:
        return BASE_CELL_TYPES + 2 * self.keys + (self.rooms ** 2 if self.room_colors else 0)

    @property
    def window(self) -> int:
        return 2 * self.view_radius + 1

    @property
    def obs_dim(self) -> int:
        return self.cell_types * self.window * self.window + self.keys

    @property
    def grid_shape(self) -> tuple[int, int, int, int]:
        """(channels, height, width, extra) of the flat observation."""
        return self.cell_types, self.window, self.window, self.keys

    def locked_code(self, color: int) -> int:
        return BASE_CELL_TYPES + color

    def key_code(self, color: int) -> int:
        return BASE_CELL_TYPES + self.keys + color

    def floor_code(self, room: int) -> int:
        """Observed code of an empty cell in ``room`` when rooms are colored."""
        return BASE_CELL_TYPES + 2 * self.keys + room


@dataclass(frozen=True)
class Layout:
    config: EnvConfig
    grid: np.ndarray  # static cell codes: walls, doors, goal, keys
    start: tuple[int, int]
    goal: tuple[int, int]
    start_room: int
    goal_room: int
    doors: dict  # (room_a, room_b) -> (cell, color or -1)
    keys: dict  # cell -> color
    locked: dict  # color -> cell
    noise_cell: tuple[int, int] | None = None
    room_distance: dict = field(default_factory=dict)

    def signature(self) -> tuple:
        return (
            tuple(sorted(self.doors.items())),
            tuple(sorted(self.keys.items())),
            self.start,
            self.goal,
        )


def room_of(config: EnvConfig, r: int, c: int) -> int | None:
    step = config.room_size + 1
    if r % step == 0 or c % step == 0:
        return None
    return (r // step) * config.rooms + (c // step)


def room_cells(config: EnvConfig, room: int) -> list[tuple[int, int]]:
    step = config.room_size + 1
    rr, rc = divmod(room, config.rooms)
    return [
        (rr * step + 1 + i, rc * step + 1 + j)
        for i in range(config.room_size)
        for j in range(config.room_size)
    ]


def _neighbours(config: EnvConfig, room: int) -> list[int]:
    R = config.rooms
    rr, rc = divmod(room, R)
    out = []
    for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        nr, nc = rr + dr, rc + dc
        if 0 <= nr < R and 0 <= nc < R:
            out.append(nr * R + nc)
    return out


def _door_cell(config: EnvConfig, a: int, b: int, offset: int) -> tuple[int, int]:
    step = config.room_size + 1
    a, b = min(a, b), max(a, b)
    ar, ac = divmod(a, config.rooms)
    br, bc = divmod(b, config.rooms)
    if ar == br:  # horizontal neighbours share a vertical wall
        return (ar * step + offset, bc * step)
    return (br * step, ac * step + offset)


def _tree_path(adj: dict[int, list[int]], src: int, dst: int) -> list[int]:
    parent = {src: None}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in parent:
                parent[v] = u
                queue.append(v)
    path = [dst]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    return path[::-1]


def _connected(cells: set[tuple[int, int]]) -> bool:
    if not cells:
        return False
    first = next(iter(cells))
    seen = {first}
    queue = deque([first])
    while queue:
        r, c = queue.popleft()
        for dr, dc in MOVES.values():
            n = (r + dr, c + dc)
            if n in cells and n not in seen:
                seen.add(n)
                queue.append(n)
    return len(seen) == len(cells)


def _place_obstacles(config: EnvConfig, grid: np.ndarray, room: int, rng: np.random.Generator):
    """Interior wall blocks that give each room its own look.

    Cells next to a doorway stay free and the remaining floor stays
    4-connected, so reachability is unchanged.
    """
    if config.obstacles == 0:
        return
    cells = room_cells(config, room)
    near_door = {
        c for c in cells
        if any(grid[c[0] + dr, c[1] + dc] not in (EMPTY, WALL) for dr, dc in MOVES.values())
    }
    candidates = [c for c in cells if c not in near_door]
    for _ in range(100):
        idx = rng.choice(len(candidates), size=min(config.obstacles, len(candidates)), replace=False)
        blocks = {candidates[i] for i in idx}
        if _connected(set(cells) - blocks):
            for cell in blocks:
                grid[cell] = WALL
            return
    # no connected arrangement found; leave the room empty


def generate_layout(config: EnvConfig, seed: int) -> Layout:
    """Deterministic layout for ``seed``; solvable by construction."""
    rng = np.random.default_rng(seed)
    R, C = config.rooms, config.room_size
    n_rooms = R * R
    S = config.grid_size

    grid = np.full((S, S), EMPTY, dtype=np.int64)
    step = C + 1
    grid[::step, :] = WALL
    grid[:, ::step] = WALL

    # randomized depth-first spanning tree over rooms
    adj: dict[int, list[int]] = {i: [] for i in range(n_rooms)}
    visited = {int(rng.integers(n_rooms))}
    stack = list(visited)
    edges = []
    while stack:
        u = stack[-1]
        options = [v for v in _neighbours(config, u) if v not in visited]
        if not options:
            stack.pop()
            continue
        v = options[int(rng.integers(len(options)))]
        visited.add(v)
        adj[u].append(v)
        adj[v].append(u)
        edges.append((min(u, v), max(u, v)))
        stack.append(v)

    start_room = int(rng.integers(n_rooms))
    dist = {start_room: 0}
    queue = deque([start_room])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    far = max(dist.values())
    goal_room = min(r for r, d in dist.items() if d == far)

    doors = {}
    for a, b in sorted(edges):
        offset = int(rng.integers(1, C + 1))
        doors[(a, b)] = (_door_cell(config, a, b, offset), -1)

    path = _tree_path(adj, start_room, goal_room)
    path_edges = [(min(a, b), max(a, b)) for a, b in zip(path[:-1], path[1:])]
    n_locked = min(config.keys, len(path_edges))
    chosen = sorted(rng.choice(len(path_edges), size=n_locked, replace=False).tolist()) if n_locked else []
    locked = {}
    for color, idx in enumerate(chosen):
        edge = path_edges[idx]
        cell, _ = doors[edge]
        doors[edge] = (cell, color)
        locked[color] = cell
        grid[cell] = config.locked_code(color)
    for edge, (cell, color) in doors.items():
        if color < 0:
            grid[cell] = OPEN_DOOR

    for room in range(n_rooms):
        _place_obstacles(config, grid, room, rng)

    start_cells = [c for c in room_cells(config, start_room) if grid[c] == EMPTY]
    start = start_cells[int(rng.integers(len(start_cells)))]
    goal_cells = [c for c in room_cells(config, goal_room) if c != start and grid[c] == EMPTY]
    goal = goal_cells[int(rng.integers(len(goal_cells)))]
    grid[goal] = GOAL

    taken = {start, goal}
    keys = {}
    for color, idx in enumerate(chosen):
        # rooms reachable from the start with keys of lower colour only
        blocked = {path_edges[j] for j in chosen[color:]}
        reach = {start_room}
        queue = deque([start_room])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if (min(u, v), max(u, v)) in blocked or v in reach:
                    continue
                reach.add(v)
                queue.append(v)
        rooms = sorted(reach)
        cells = [c for room in rooms for c in room_cells(config, room) if c not in taken and grid[c] == EMPTY]
        cell = cells[int(rng.integers(len(cells)))]
        keys[cell] = color
        taken.add(cell)
        grid[cell] = config.key_code(color)

    noise_cell = None
    if config.noise_tile:
        free = [c for c in start_cells if c not in taken and grid[c] == EMPTY]
        noise_cell = free[int(rng.integers(len(free)))] if free else None

    return Layout(
        config=config,
        grid=grid,
        start=start,
        goal=goal,
        start_room=start_room,
        goal_room=goal_room,
        doors=doors,
        keys=keys,
        locked=locked,
        noise_cell=noise_cell,
        room_distance=dist,
    )


class GameState(NamedTuple):
    row: int
    col: int
    keys: int  # bitmask of held key colours
    doors: int  # bitmask of opened locked doors


def initial_state(layout: Layout) -> GameState:
    return GameState(layout.start[0], layout.start[1], 0, 0)


def transition(layout: Layout, state: GameState, action: int) -> tuple[GameState, float, bool]:
    """Pure game rules: returns (next state, reward, goal reached)."""
    r, c, keys, doors = state
    grid = layout.grid
    cfg = layout.config
    if action in MOVES:
        dr, dc = MOVES[action]
        nr, nc = r + dr, c + dc
        code = int(grid[nr, nc])
        if code == WALL:
            return state, 0.0, False
        color = code - BASE_CELL_TYPES
        if 0 <= color < cfg.keys and not (doors >> color) & 1:
            return state, 0.0, False
        if (nr, nc) == layout.goal:
            return GameState(nr, nc, keys, doors), 1.0, True
        return GameState(nr, nc, keys, doors), 0.0, False
    if action == PICKUP:
        color = layout.keys.get((r, c))
        if color is not None and not (keys >> color) & 1:
            return GameState(r, c, keys | (1 << color), doors), 0.0, False
        return state, 0.0, False
    if action == TOGGLE:
        for dr, dc in MOVES.values():
            code = int(grid[r + dr, c + dc])
            color = code - BASE_CELL_TYPES
            if 0 <= color < cfg.keys and (keys >> color) & 1 and not (doors >> color) & 1:
                doors |= 1 << color
        return GameState(r, c, keys, doors), 0.0, False
    raise UsageError(f"unknown action {action!r}; expected 0..{NUM_ACTIONS - 1}")


def cell_codes(layout: Layout, state: GameState) -> np.ndarray:
    """Current cell-type grid (keys picked up vanish, opened doors show as open)."""
    grid = layout.grid.copy()
    for cell, color in layout.keys.items():
        if (state.keys >> color) & 1:
            grid[cell] = EMPTY
    for color, cell in layout.locked.items():
        if (state.doors >> color) & 1:
            grid[cell] = OPEN_DOOR
    return grid


class StepOutcome(NamedTuple):
    observation: np.ndarray
    reward: float
    terminated: bool
    rooms_visited: int


class MultiRoomWorld:
    """Single environment instance; deterministic given the reset seed."""

    def __init__(self, config: EnvConfig | None = None):
        self.config = config or EnvConfig()
        self.layout: Layout | None = None
        self.state: GameState | None = None
        self.steps = 0
        self.terminated = True
        self.solved = False
        self._visited: set[int] = set()
        self._cells: np.ndarray | None = None
        self._rng = np.random.default_rng(0)
        self._eye = np.eye(self.config.cell_types)

    def reset(self, seed: int) -> np.ndarray:
        cfg = self.config
        layout_seed = int(seed) if cfg.procedural else cfg.layout_seed
        if self.layout is None or self._layout_seed != layout_seed:
            self.layout = generate_layout(cfg, layout_seed)
            self._layout_seed = layout_seed
        self._rng = np.random.default_rng(int(seed))
        self.state = initial_state(self.layout)
        self._cells = cell_codes(self.layout, self.state)
        self._floor = floor_codes(cfg)
        self.steps = 0
        self.terminated = False
        self.solved = False
        self._visited = {room_of(cfg, self.state.row, self.state.col)}
        return self.observe()

    def rooms_visited(self) -> int:
        return len(self._visited)

    @property
    def position(self) -> tuple[int, int]:
        return self.state.row, self.state.col

    def step(self, action: int) -> StepOutcome:
        if self.terminated:
            raise UsageError("episode has terminated; call reset() first")
        prev = self.state
        self.state, reward, reached = transition(self.layout, prev, int(action))
        if self.state.keys != prev.keys or self.state.doors != prev.doors:
            self._cells = cell_codes(self.layout, self.state)
        room = room_of(self.config, self.state.row, self.state.col)
        if room is not None:
            self._visited.add(room)
        self.steps += 1
        self.solved = reached
        self.terminated = reached or self.steps >= self.config.step_limit
        return StepOutcome(self.observe(), reward, self.terminated, len(self._visited))

    def observe(self) -> np.ndarray:
        cfg = self.config
        v = cfg.view_radius
        cells = self._cells
        if cfg.room_colors:
            cells = np.where((cells == EMPTY) & (self._floor >= 0), self._floor, cells)
        padded = np.pad(cells, v, constant_values=WALL)
        r, c = self.state.row + v, self.state.col + v
        window = padded[r - v:r + v + 1, c - v:c + v + 1]
        if self.layout.noise_cell is not None:
            nr, nc = self.layout.noise_cell
            dr, dc = nr - self.state.row, nc - self.state.col
            if abs(dr) <= v and abs(dc) <= v:
                window = window.copy()
                window[dr + v, dc + v] = int(self._rng.integers(cfg.cell_types))
        onehot = self._eye[window].transpose(2, 0, 1).ravel()
        inventory = np.array([(self.state.keys >> i) & 1 for i in range(cfg.keys)], dtype=np.float64)
        return np.concatenate([onehot, inventory])

    def render(self) -> str:
        """Plain-text map of the current state."""
        return render_layout(self.layout, self.state)


def floor_codes(config: EnvConfig) -> np.ndarray:
    """Per-cell floor code of the enclosing room, -1 on walls and doors."""
    out = np.full((config.grid_size, config.grid_size), -1, dtype=np.int64)
    for room in range(config.rooms ** 2):
        for cell in room_cells(config, room):
            out[cell] = config.floor_code(room)
    return out


def render_layout(layout: Layout, state: GameState | None = None) -> str:
    cfg = layout.config
    state = state or initial_state(layout)
    cells = cell_codes(layout, state)
    chars = []
    for r in range(cfg.grid_size):
        row = []
        for c in range(cfg.grid_size):
            code = int(cells[r, c])
            if (r, c) == (state.row, state.col):
                ch = "@"
            elif layout.noise_cell == (r, c):
                ch = "~"
            elif code == EMPTY:
                ch = "."
            elif code == WALL:
                ch = "#"
            elif code == OPEN_DOOR:
                ch = "/"
            elif code == GOAL:
                ch = "G"
            elif code < BASE_CELL_TYPES + cfg.keys:
                ch = chr(ord("A") + code - BASE_CELL_TYPES)
            else:
                ch = chr(ord("a") + code - BASE_CELL_TYPES - cfg.keys)
            row.append(ch)
        chars.append("".join(row))
    return "\n".join(chars) + "\n"


@dataclass
class SearchResult:
    actions: list[int] | None
    reachable_rooms: set[int]
    states_explored: int


def solve(layout: Layout) -> SearchResult:
    """Breadth-first search over (position, keys held, doors opened).

    Returns a shortest action sequence to the goal (or None) and the set of
    rooms reachable from the start at all.
    """
    start = initial_state(layout)
    parent: dict[GameState, tuple[GameState, int] | None] = {start: None}
    queue = deque([start])
    rooms: set[int] = set()
    found = None
    cfg = layout.config
    while queue:
        s = queue.popleft()
        room = room_of(cfg, s.row, s.col)
        if room is not None:
            rooms.add(room)
        for a in range(NUM_ACTIONS):
            nxt, _, reached = transition(layout, s, a)
            if nxt in parent:
                continue
            parent[nxt] = (s, a)
            if reached:
                if found is None:
                    found = nxt
                rooms.add(room_of(cfg, nxt.row, nxt.col))
                continue
            queue.append(nxt)
    actions = None
    if found is not None:
        actions = []
        s = found
        while parent[s] is not None:
            s, a = parent[s]
            actions.append(a)
        actions.reverse()
    return SearchResult(actions, rooms, len(parent))


def random_policy_rooms(config: EnvConfig, seed: int, episodes: int = 100) -> list[int]:
    """Rooms visited per episode by a uniform-random policy.

    Episode seeds are drawn from ``seed``, so procedural configs average
    over layouts and fixed-layout configs replay the same map.
    """
    rng = np.random.default_rng(seed)
    env = MultiRoomWorld(config)
    out = []
    for _ in range(episodes):
        env.reset(int(rng.integers(2**31 - 1)))
        while not env.terminated:
            env.step(int(rng.integers(NUM_ACTIONS)))
        out.append(env.rooms_visited())
    return out
