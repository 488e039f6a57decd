"""Network geometry: node layout, blockage tests and the LoS graph.

Node indexing follows one global convention: node 0 is the base station,
nodes 1..J are the reflecting surfaces, and node J+k is user k (k = 1..K).
A directed link (i, j) is *admissible* when a surface can physically relay
power along it: the signal must travel outward from the BS (strictly
increasing BS distance, except into a user) and every surface endpoint must
see the other node inside its front half-space.  The LoS indicator adds the
blockage test on top of admissibility.

Scenes and graphs are immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    """Raised when a scenario description is malformed or inconsistent."""


def _unit(v):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ConfigError("zero-length vector where a direction is required")
    return v / n


def panel_axes(normal):
    """Return the in-plane (horizontal, vertical) axes of a panel.

    The horizontal axis is chosen perpendicular to the global up direction
    (0,0,1); a near-vertical normal falls back to (0,1,0) as up.
    """
    n = _unit(normal)
    up = np.array([0.0, 0.0, 1.0])
    if np.linalg.norm(np.cross(up, n)) < 1e-9:
        up = np.array([0.0, 1.0, 0.0])
    ax_h = _unit(np.cross(up, n))
    ax_v = np.cross(n, ax_h)
    return ax_h, ax_v


@dataclass(frozen=True)
class PanelArray:
    """A planar antenna/element panel with a regular rectangular grid.

    `shape` is (rows along the horizontal axis, columns along the vertical
    axis); element index m = i_h * shape[1] + i_v.  `spacing_m` is the
    element pitch in meters.
    """

    center: np.ndarray
    normal: np.ndarray
    shape: tuple[int, int]
    spacing_m: float

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    def element_offsets(self) -> np.ndarray:
        """(size, 3) element positions relative to the panel center."""
        n1, n2 = self.shape
        ax_h, ax_v = panel_axes(self.normal)
        ih = np.arange(n1) - (n1 - 1) / 2.0
        iv = np.arange(n2) - (n2 - 1) / 2.0
        grid = ih[:, None, None] * ax_h[None, None, :] + iv[None, :, None] * ax_v[None, None, :]
        return (grid * self.spacing_m).reshape(n1 * n2, 3)


@dataclass(frozen=True)
class Box:
    """Axis-aligned closed box; grazing contact counts as intersection."""

    lo: np.ndarray
    hi: np.ndarray

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.lo) and np.all(p <= self.hi))

    def intersects_segment(self, a, b) -> bool:
        """Exact slab test of the closed box against segment [a, b]."""
        a = np.asarray(a, dtype=float)
        d = np.asarray(b, dtype=float) - a
        t0, t1 = 0.0, 1.0
        for ax in range(3):
            if d[ax] == 0.0:
                if a[ax] < self.lo[ax] or a[ax] > self.hi[ax]:
                    return False
                continue
            inv = 1.0 / d[ax]
            tn = (self.lo[ax] - a[ax]) * inv
            tf = (self.hi[ax] - a[ax]) * inv
            if tn > tf:
                tn, tf = tf, tn
            t0 = max(t0, tn)
            t1 = min(t1, tf)
            if t0 > t1:
                return False
        return True


_LINK_CLASSES = ("bs_irs", "irs_irs", "irs_user", "bs_user")


@dataclass(frozen=True)
class Constants:
    """Propagation constants of a scene.

    kappa is the Rician factor in linear scale (math.inf means pure LoS,
    0 means Rayleigh).  `alpha` maps a link class to its path-loss
    exponent; `link_overrides` may override alpha/kappa per directed link
    keyed "i-j".
    """

    beta_db: float = -30.0
    alpha: dict = field(default_factory=lambda: {
        "bs_irs": 2.0, "irs_irs": 2.0, "irs_user": 2.0, "bs_user": 3.5,
    })
    kappa: float = math.inf
    carrier_hz: float = 5e9
    noise_dbm: float = -90.0
    tx_dbm: float = 0.0
    link_overrides: dict = field(default_factory=dict)

    @property
    def beta(self) -> float:
        return 10.0 ** (self.beta_db / 10.0)

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def noise_power(self) -> float:
        return 10.0 ** ((self.noise_dbm - 30.0) / 10.0)

    @property
    def tx_power(self) -> float:
        return 10.0 ** ((self.tx_dbm - 30.0) / 10.0)

    def link_params(self, i: int, j: int, link_class: str) -> tuple[float, float]:
        """(alpha, kappa) for directed link (i, j)."""
        alpha = self.alpha.get(link_class, 2.0)
        kappa = self.kappa
        ov = self.link_overrides.get(f"{i}-{j}")
        if ov:
            alpha = ov.get("alpha", alpha)
            kappa = ov.get("kappa", kappa)
        return alpha, kappa


@dataclass(frozen=True)
class Scene:
    """Immutable network layout: BS, reflecting surfaces, users, obstacles."""

    bs: PanelArray
    irs: tuple[PanelArray, ...]
    users: np.ndarray              # (K, 3)
    obstacles: tuple[Box, ...]
    constants: Constants
    effective_regions: tuple[frozenset, ...]  # per user, subset of 1..J

    @property
    def n_bs(self) -> int:
        return self.bs.size

    @property
    def n_irs(self) -> int:
        return len(self.irs)

    @property
    def n_users(self) -> int:
        return len(self.users)

    def is_user(self, i: int) -> bool:
        return i > self.n_irs

    def user_index(self, i: int) -> int:
        """1-based user number of a user node id."""
        if not self.is_user(i):
            raise ValueError(f"node {i} is not a user")
        return i - self.n_irs

    def node_position(self, i: int) -> np.ndarray:
        if i == 0:
            return self.bs.center
        if 1 <= i <= self.n_irs:
            return self.irs[i - 1].center
        k = i - self.n_irs
        if 1 <= k <= self.n_users:
            return self.users[k - 1]
        raise ValueError(f"unknown node id {i}")

    def node_size(self, i: int) -> int:
        if i == 0:
            return self.n_bs
        if 1 <= i <= self.n_irs:
            return self.irs[i - 1].size
        return 1

    def distance(self, i: int, j: int) -> float:
        return float(np.linalg.norm(self.node_position(i) - self.node_position(j)))

    def link_class(self, i: int, j: int) -> str:
        if i == 0:
            return "bs_user" if self.is_user(j) else "bs_irs"
        return "irs_user" if self.is_user(j) else "irs_irs"


def build_scene(config: dict) -> Scene:
    """Validate a scenario description (parsed JSON) and build a Scene.

    Expected keys: bs, irs, users, obstacles, constants, effective_regions.
    Distances are meters, powers dBm, path loss dB; directions are unit
    vectors.  BS elements are half-wavelength spaced, IRS elements
    quarter-wavelength.
    """
    try:
        consts = _parse_constants(config.get("constants", {}))
        lam = consts.wavelength

        bs_cfg = config["bs"]
        shape = tuple(bs_cfg.get("shape", (1, int(bs_cfg["n_elements"]))))
        if len(shape) != 2 or shape[0] < 1 or shape[1] < 1:
            raise ConfigError(f"bad BS array shape {shape}")
        bs = PanelArray(
            center=np.asarray(bs_cfg["position"], dtype=float),
            normal=_unit(bs_cfg.get("normal", (1.0, 0.0, 0.0))),
            shape=shape,
            spacing_m=lam / 2.0,
        )

        irs = []
        for ent in config.get("irs", []):
            if "normal" not in ent:
                raise ConfigError("IRS entry missing pointing normal")
            if "shape" in ent:
                shape = tuple(int(x) for x in ent["shape"])
            else:
                m0 = int(ent["m0"])
                shape = (m0, m0)
            if len(shape) != 2 or min(shape) < 1:
                raise ConfigError(f"bad IRS element grid {shape}")
            irs.append(PanelArray(
                center=np.asarray(ent["position"], dtype=float),
                normal=_unit(ent["normal"]),
                shape=shape,
                spacing_m=lam / 4.0,
            ))

        users = np.asarray(config.get("users", []), dtype=float).reshape(-1, 3)
        obstacles = tuple(
            Box(lo=np.asarray(o["min"], dtype=float), hi=np.asarray(o["max"], dtype=float))
            for o in config.get("obstacles", [])
        )
        for box in obstacles:
            if np.any(box.lo > box.hi):
                raise ConfigError("obstacle with min corner beyond max corner")

        regions = _parse_regions(config.get("effective_regions"), len(irs), len(users))
    except KeyError as exc:
        raise ConfigError(f"missing required field {exc}") from exc

    scene = Scene(bs=bs, irs=tuple(irs), users=users, obstacles=obstacles,
                  constants=consts, effective_regions=regions)

    for i in range(scene.n_irs + scene.n_users + 1):
        p = scene.node_position(i)
        for box in obstacles:
            if box.contains(p):
                raise ConfigError(f"node {i} lies inside an obstacle")
    return scene


def load_scene(path) -> Scene:
    with open(path) as fh:
        try:
            config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return build_scene(config)


def _parse_constants(cfg: dict) -> Constants:
    kappa = _parse_kappa(cfg.get("kappa_db", "inf"))
    alpha = dict(Constants().alpha)
    alpha.update(cfg.get("alpha", {}))
    bad = set(alpha) - set(_LINK_CLASSES)
    if bad:
        raise ConfigError(f"unknown link classes in alpha map: {sorted(bad)}")
    overrides = {}
    for key, ov in cfg.get("link_overrides", {}).items():
        ent = {}
        if "alpha" in ov:
            ent["alpha"] = float(ov["alpha"])
        if "kappa_db" in ov:
            ent["kappa"] = _parse_kappa(ov["kappa_db"])
        overrides[key] = ent
    return Constants(
        beta_db=float(cfg.get("beta_db", -30.0)),
        alpha=alpha,
        kappa=kappa,
        carrier_hz=float(cfg.get("carrier_hz", 5e9)),
        noise_dbm=float(cfg.get("noise_dbm", -90.0)),
        tx_dbm=float(cfg.get("tx_dbm", 0.0)),
        link_overrides=overrides,
    )


def _parse_kappa(value) -> float:
    if isinstance(value, str):
        if value.lower() in ("inf", "+inf", "infinity"):
            return math.inf
        if value.lower() == "-inf":
            return 0.0
        raise ConfigError(f"bad kappa_db value {value!r}")
    return 10.0 ** (float(value) / 10.0)


def _parse_regions(cfg, n_irs: int, n_users: int):
    full = frozenset(range(1, n_irs + 1))
    if cfg is None:
        return tuple(full for _ in range(n_users))
    regions = []
    for k in range(1, n_users + 1):
        ids = cfg.get(str(k), sorted(full))
        reg = frozenset(int(j) for j in ids)
        if not reg <= full:
            raise ConfigError(f"effective region of user {k} names unknown IRSs: {sorted(reg - full)}")
        regions.append(reg)
    return tuple(regions)


# ---------------------------------------------------------------------------
# LoS tests
# ---------------------------------------------------------------------------

def has_geometric_los(scene: Scene, i: int, j: int) -> bool:
    """True iff the segment between reference points of i and j is unblocked.

    Boxes are closed: a segment grazing a face or corner counts as blocked.
    """
    if i == j:
        raise ValueError("LoS test needs two distinct nodes")
    a = scene.node_position(i)
    b = scene.node_position(j)
    return not any(box.intersects_segment(a, b) for box in scene.obstacles)


def half_space_ok(scene: Scene, j: int, point) -> bool:
    """True iff `point` is strictly inside the front half-space of IRS j."""
    panel = scene.irs[j - 1]
    return float(np.dot(panel.normal, np.asarray(point, dtype=float) - panel.center)) > 0.0


def is_admissible_link(scene: Scene, i: int, j: int, user: int | None = None) -> bool:
    """Reflection-geometry admissibility of directed link (i, j).

    Checks everything except blockage: outward distance ordering (unless j
    is a user), front half-space at each IRS endpoint, and membership of
    IRS i in the effective region of the destination user.
    """
    if i == j or scene.is_user(i) or j == 0:
        return False
    if scene.is_user(j):
        k = scene.user_index(j) if user is None else user
        if i != 0 and i not in scene.effective_regions[k - 1]:
            return False
    elif scene.distance(0, j) <= (0.0 if i == 0 else scene.distance(0, i)):
        return False
    if i != 0 and not half_space_ok(scene, i, scene.node_position(j)):
        return False
    if not scene.is_user(j) and not half_space_ok(scene, j, scene.node_position(i)):
        return False
    return True


def los_indicator(scene: Scene, i: int, j: int, user: int | None = None) -> int:
    """Binary effective-LoS indicator of directed link (i, j)."""
    if not is_admissible_link(scene, i, j, user):
        return 0
    return 1 if has_geometric_los(scene, i, j) else 0


@dataclass(frozen=True)
class LosGraph:
    """Directed acyclic graph of effective links toward one user.

    Vertices are the BS (0), the IRSs in the user's effective region, and
    the user vertex; there is no direct BS-to-user edge (the direct channel
    is handled separately).
    """

    user: int                  # 1-based user number
    user_node: int             # vertex id J + user
    nodes: tuple[int, ...]
    edges: frozenset
    distances: dict
    bs_distance: dict

    def successors(self, i: int) -> tuple[int, ...]:
        return tuple(j for j in self.nodes if (i, j) in self.edges)

    def predecessors(self, j: int) -> tuple[int, ...]:
        return tuple(i for i in self.nodes if (i, j) in self.edges)

    @property
    def irs_nodes(self) -> tuple[int, ...]:
        return tuple(n for n in self.nodes if n != 0 and n != self.user_node)


def build_los_graph(scene: Scene, user: int, require_los: bool = True) -> LosGraph:
    """Reflection graph for user k (1-based).

    With require_los the edges are the LoS-indicator links; without it they
    are all admissible links (blocked links then carry scattered power
    only).
    """
    if not 1 <= user <= scene.n_users:
        raise ValueError(f"no user {user} in scene")
    target = scene.n_irs + user
    region = sorted(scene.effective_regions[user - 1])
    nodes = (0, *region, target)
    test = los_indicator if require_los else (
        lambda sc, i, j, u=None: int(is_admissible_link(sc, i, j, u)))
    edges = set()
    for j in region:
        if test(scene, 0, j):
            edges.add((0, j))
        if test(scene, j, target, user):
            edges.add((j, target))
        for i in region:
            if i != j and test(scene, i, j):
                edges.add((i, j))
    distances = {(i, j): scene.distance(i, j) for (i, j) in edges}
    bs_distance = {n: (0.0 if n == 0 else scene.distance(0, n)) for n in nodes}
    return LosGraph(user=user, user_node=target, nodes=nodes, edges=frozenset(edges),
                    distances=distances, bs_distance=bs_distance)
