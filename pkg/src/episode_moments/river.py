"""River-crossing benchmark: a ship drifting east towards a waterfall.

The grid has ``height`` rows and ``width`` columns; row 0 is the left bank
(north side when facing downstream) and the river flows towards increasing
column index. Every cell in the last column is a fail state (the
waterfall); the port cell is the only goal state. From any other cell the
ship moves up-right, right, down-right or left with base probabilities
``(p_forward_each, p_forward_each, p_forward_each, p_back)``. Moves that
would leave the grid or enter an island are unavailable, and their
probability is shared equally by the remaining moves.
"""
from __future__ import annotations

from dataclasses import dataclass

from .chain import Chain, ModelError

Cell = tuple[int, int]


@dataclass(frozen=True)
class RiverConfig:
    width: int = 50
    height: int = 10
    # Port position is not given numerically in the source figure; this is an estimate.
    port: Cell | None = (0, 35)
    obstacles: frozenset[Cell] = frozenset()
    p_forward_each: float = 0.3
    p_back: float = 0.1
    t_diag: int = 2
    t_forward: int = 1
    t_back: int = 5

    def __post_init__(self):
        object.__setattr__(self, "obstacles",
                           frozenset((int(r), int(c)) for r, c in self.obstacles))
        if self.port is not None:
            object.__setattr__(self, "port", (int(self.port[0]), int(self.port[1])))
        if self.width < 1 or self.height < 1:
            raise ModelError("width and height must be positive")
        if abs(3 * self.p_forward_each + self.p_back - 1.0) > 1e-9:
            raise ModelError("3 * p_forward_each + p_back must equal 1")
        if min(self.p_forward_each, self.p_back) < 0:
            raise ModelError("move probabilities must be non-negative")
        if min(self.t_diag, self.t_forward, self.t_back) < 1:
            raise ModelError("move times must be positive integers")
        for cell in self.obstacles:
            if not self.inside(cell):
                raise ModelError(f"obstacle {cell} outside the {self.height}x{self.width} grid")
        if self.port is not None:
            if not self.inside(self.port):
                raise ModelError(f"port {self.port} outside the {self.height}x{self.width} grid")
            if self.port[1] == self.width - 1:
                raise ModelError("port cannot be in the last (waterfall) column")
            if self.port in self.obstacles:
                raise ModelError("port cannot be an obstacle")

    def inside(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.height and 0 <= cell[1] < self.width

    def moves(self) -> list[tuple[int, int, float, int]]:
        """Candidate moves as ``(d_row, d_col, base probability, time)``."""
        return [(-1, 1, self.p_forward_each, self.t_diag),
                (0, 1, self.p_forward_each, self.t_forward),
                (1, 1, self.p_forward_each, self.t_diag),
                (0, -1, self.p_back, self.t_back)]


def build_river(config: RiverConfig = RiverConfig()) -> tuple[Chain, list[Cell]]:
    """Build the chain and the state -> ``(row, col)`` layout.

    States are numbered row-major over the non-obstacle cells.
    """
    layout = [(r, c) for r in range(config.height) for c in range(config.width)
              if (r, c) not in config.obstacles]
    index = {cell: i for i, cell in enumerate(layout)}
    goal = {index[config.port]} if config.port is not None else set()
    fail = {i for i, (_, c) in enumerate(layout) if c == config.width - 1}

    edges = []
    for i, (r, c) in enumerate(layout):
        if i in goal or i in fail:
            continue
        available = []
        blocked = 0.0
        for dr, dc, p, t in config.moves():
            target = (r + dr, c + dc)
            if target in index:
                available.append((index[target], p, t))
            else:
                blocked += p
        if not available:
            raise ModelError(f"cell {(r, c)} has no available moves")
        share = blocked / len(available)
        edges.extend((i, j, p + share, t) for j, p, t in available)
    return Chain.from_edges(len(layout), edges, goal, fail), layout
