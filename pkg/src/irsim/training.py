"""Codebook-based beam training: exhaustive and sequential search plus the
distributed table-driven protocol with offline/online phases.

Beam training never touches explicit CSI: the searches probe the realized
channels combination by combination, while the distributed protocol builds
per-node tables of received signal strengths (RSS) measured at the IRS
controllers and composes them into end-to-end gain estimates.  Controller
measurements average over a configurable number of fading realizations;
with a pure-LoS channel they are deterministic and the composed estimate
is exact for any beam choice.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .channels import (ChannelSet, array_response, cascaded_path_channel,
                       effective_channel, effective_channel_affine,
                       enumerate_graph_paths, path_loss)
from .geometry import Scene, build_los_graph, has_geometric_los, los_indicator
from .routing import Infeasible, ReflectionPath, RoutingSolution, optimal_multi_route


class NotTrainable(RuntimeError):
    """A path/beam combination has no surviving table rows."""


@dataclass(frozen=True)
class Codebook:
    """A finite set of beams: unit-modulus rows (passive) or unit-norm
    rows (active)."""

    kind: str                  # "active" | "passive"
    beams: np.ndarray          # (D, dim)

    @property
    def size(self) -> int:
        return self.beams.shape[0]


def dft_codebook(n_points: int, dim: int, kind: str = "passive") -> Codebook:
    """DFT steering grid with n_points beams over `dim` elements."""
    if n_points < dim:
        raise ValueError(f"codebook needs at least as many points ({n_points}) as elements ({dim})")
    m = np.arange(dim)
    d = np.arange(n_points)[:, None]
    beams = np.exp(-2j * np.pi * m[None, :] * d / n_points)
    if kind == "active":
        beams = beams / math.sqrt(dim)
    elif kind != "passive":
        raise ValueError(f"unknown codebook kind {kind!r}")
    return Codebook(kind=kind, beams=beams)


def planar_passive_codebook(n_points: int, m0: int) -> Codebook:
    """3D passive codebook: horizontal x vertical per-dimension DFT beams.

    Joint beam index d = d_h * n_points + d_v; each beam has m0^2 entries.
    """
    line = dft_codebook(n_points, m0, kind="passive").beams
    beams = np.einsum("ah,bv->abhv", line, line).reshape(n_points ** 2, m0 ** 2)
    return Codebook(kind="passive", beams=beams)


# ---------------------------------------------------------------------------
# Search over realized channels
# ---------------------------------------------------------------------------

class GainEvaluator:
    """Measures per-user SNR for beam combinations on realized channels.

    `path` restricts the composition to one reflection route; otherwise the
    full path sum over `irs_ids` applies.
    """

    def __init__(self, channels: ChannelSet, users, irs_ids=None, path=None,
                 los_only: bool = True, include_direct: bool = False):
        self.channels = channels
        self.scene = channels.scene
        self.users = list(users)
        self.path = tuple(path) if path is not None else None
        self.irs_ids = (list(self.path) if path is not None else
                        sorted(irs_ids if irs_ids is not None else
                               range(1, self.scene.n_irs + 1)))
        self.los_only = los_only
        self.include_direct = include_direct
        self.evaluations = 0

    def _channel(self, user: int, phases: dict) -> np.ndarray:
        if self.path is not None:
            return cascaded_path_channel(self.channels, self.path, phases, user=user)
        return effective_channel(self.channels, user, phases, los_only=self.los_only,
                                 include_direct=self.include_direct,
                                 irs_subset=self.irs_ids)

    def snr(self, user: int, w: np.ndarray, phases: dict) -> float:
        consts = self.scene.constants
        amp = self._channel(user, phases) @ w
        self.evaluations += 1
        return float(consts.tx_power * abs(amp) ** 2 / consts.noise_power)

    def min_snr(self, w: np.ndarray, phases: dict) -> float:
        return min(self.snr(k, w, phases) for k in self.users)

    def sweep_bs(self, codebook: Codebook, phases: dict) -> np.ndarray:
        """Min-user SNR for every active beam; one evaluation per beam."""
        consts = self.scene.constants
        snrs = np.full(codebook.size, np.inf)
        for k in self.users:
            h = self._channel(k, phases)
            amps = codebook.beams @ h
            snrs = np.minimum(snrs, consts.tx_power * np.abs(amps) ** 2 / consts.noise_power)
        self.evaluations += codebook.size
        return snrs

    def sweep_irs(self, irs: int, codebook: Codebook, w: np.ndarray, phases: dict) -> np.ndarray:
        """Min-user SNR for every passive beam of one surface."""
        consts = self.scene.constants
        snrs = np.full(codebook.size, np.inf)
        for k in self.users:
            base, coeff = self._affine(k, irs, phases)
            amps = codebook.beams @ (coeff @ w) + base @ w
            snrs = np.minimum(snrs, consts.tx_power * np.abs(amps) ** 2 / consts.noise_power)
        self.evaluations += codebook.size
        return snrs

    def _affine(self, user: int, irs: int, phases: dict):
        if self.path is None:
            return effective_channel_affine(self.channels, user, phases, irs,
                                            los_only=self.los_only,
                                            include_direct=self.include_direct,
                                            irs_subset=self.irs_ids)
        idx = self.path.index(irs)
        target = self.scene.n_irs + user
        left = self.channels.get(0, self.path[0]).matrix
        for a, b in zip(self.path[:idx], self.path[1:idx + 1]):
            left = self.channels.get(a, b).matrix @ (left * phases[a][:, None])
        right = self.channels.get(self.path[-1], target).matrix
        for a, b in zip(reversed(self.path[idx:-1]), reversed(self.path[idx + 1:])):
            right = (right * phases[b][None, :]) @ self.channels.get(a, b).matrix
        coeff = right.ravel()[:, None] * left
        base = np.zeros(self.scene.n_bs, dtype=complex)
        return base, coeff


@dataclass
class TrainedBeams:
    """Outcome of a codebook search."""

    bs_index: int
    irs_indices: dict              # irs id -> joint beam index
    w: np.ndarray
    phases: dict
    objective: float               # min-user SNR (linear)
    evaluations: int
    combinations: int = 0
    sweeps: int = 0


def _apply_indices(evaluator: GainEvaluator, bs_codebook: Codebook, irs_codebooks: dict,
                   bs_idx: int, irs_idx: dict):
    w = bs_codebook.beams[bs_idx]
    phases = {j: irs_codebooks[j].beams[irs_idx[j]] for j in evaluator.irs_ids}
    return w, phases


def exhaustive_search(channels: ChannelSet, users, bs_codebook: Codebook,
                      irs_codebooks: dict, path=None, los_only: bool = True,
                      include_direct: bool = False, max_combinations: int = 10_000_000) -> TrainedBeams:
    """Global search over every active/passive beam combination.

    Refuses when the combination count D_B * prod(D_I) exceeds
    max_combinations.
    """
    evaluator = GainEvaluator(channels, users, irs_ids=sorted(irs_codebooks), path=path,
                              los_only=los_only, include_direct=include_direct)
    ids = evaluator.irs_ids
    combos = bs_codebook.size * int(np.prod([irs_codebooks[j].size for j in ids]))
    if combos > max_combinations:
        raise ValueError(f"exhaustive search would need {combos} combinations "
                         f"(cap {max_combinations})")
    best = None
    for bs_idx in range(bs_codebook.size):
        for choice in itertools.product(*(range(irs_codebooks[j].size) for j in ids)):
            irs_idx = dict(zip(ids, choice))
            w, phases = _apply_indices(evaluator, bs_codebook, irs_codebooks, bs_idx, irs_idx)
            obj = evaluator.min_snr(w, phases)
            key = (obj, -bs_idx, tuple(-c for c in choice))
            if best is None or key > best[0]:
                best = (key, bs_idx, irs_idx, obj)
    _, bs_idx, irs_idx, obj = best
    w, phases = _apply_indices(evaluator, bs_codebook, irs_codebooks, bs_idx, irs_idx)
    return TrainedBeams(bs_index=bs_idx, irs_indices=dict(irs_idx), w=w, phases=phases,
                        objective=obj, evaluations=evaluator.evaluations,
                        combinations=combos)


def sequential_search(channels: ChannelSet, users, bs_codebook: Codebook,
                      irs_codebooks: dict, path=None, los_only: bool = True,
                      include_direct: bool = False, max_sweeps: int = 20) -> TrainedBeams:
    """Cyclic per-node beam updates until a full sweep changes nothing.

    Each sweep costs D_B + sum_j D_I(j) evaluations; the min-user SNR is
    nondecreasing across updates.
    """
    evaluator = GainEvaluator(channels, users, irs_ids=sorted(irs_codebooks), path=path,
                              los_only=los_only, include_direct=include_direct)
    ids = evaluator.irs_ids
    bs_idx = 0
    irs_idx = {j: 0 for j in ids}
    sweeps = 0
    objective = 0.0
    for sweeps in range(1, max_sweeps + 1):
        changed = False
        w, phases = _apply_indices(evaluator, bs_codebook, irs_codebooks, bs_idx, irs_idx)
        snrs = evaluator.sweep_bs(bs_codebook, phases)
        new_bs = int(np.argmax(snrs))
        if snrs[new_bs] > snrs[bs_idx]:
            bs_idx, changed = new_bs, True
        objective = float(snrs[bs_idx])
        for j in ids:
            w, phases = _apply_indices(evaluator, bs_codebook, irs_codebooks, bs_idx, irs_idx)
            snrs = evaluator.sweep_irs(j, irs_codebooks[j], w, phases)
            new_j = int(np.argmax(snrs))
            if snrs[new_j] > snrs[irs_idx[j]]:
                irs_idx[j], changed = new_j, True
            objective = float(snrs[irs_idx[j]])
        if not changed:
            break
    w, phases = _apply_indices(evaluator, bs_codebook, irs_codebooks, bs_idx, irs_idx)
    return TrainedBeams(bs_index=bs_idx, irs_indices=dict(irs_idx), w=w, phases=phases,
                        objective=objective, evaluations=evaluator.evaluations, sweeps=sweeps)


# ---------------------------------------------------------------------------
# Distributed training tables
# ---------------------------------------------------------------------------

@dataclass
class BeamTrainingTable:
    """Per-node table of thresholded RSS measurements.

    Rows are keyed (previous node, beam index, next node); the BS table
    uses previous node None.  `reference_rss` stores the unreflected
    controller-to-controller strength of each incoming link, used to
    normalize composed gain estimates.  Rows with a user as next node are
    the online part of the protocol.
    """

    owner: int
    threshold: float
    rows: dict = field(default_factory=dict)
    reference_rss: dict = field(default_factory=dict)

    def add(self, prev, beam: int, nxt: int, rss: float) -> None:
        if rss >= self.threshold:
            self.rows[(prev, beam, nxt)] = rss

    def online_rows(self, scene: Scene) -> dict:
        return {key: v for key, v in self.rows.items() if scene.is_user(key[2])}


def _controller_rng(seed: int, owner: int, prev, nxt: int, kind: int = 0) -> np.random.Generator:
    prev_id = 999_983 if prev is None else prev
    return np.random.default_rng(
        np.random.SeedSequence(entropy=(seed, 7, owner, prev_id, nxt, kind)))


def _controller_link(scene: Scene, i: int, j: int, rx_elements: bool, tx_elements: bool,
                     rng, averages: int):
    """Realizations of the link between node i and node j where at most one
    side uses its element panel and the other is a reference-point
    controller antenna.  Yields `averages` matrices (n_rx, n_tx)."""
    consts = scene.constants
    lam = consts.wavelength
    d = scene.distance(i, j)
    alpha, kappa = consts.link_params(i, j, scene.link_class(i, j))
    pl = path_loss(d, alpha, consts.beta)
    n_rx = scene.node_size(j) if rx_elements else 1
    n_tx = scene.node_size(i) if tx_elements else 1
    los = has_geometric_los(scene, i, j)
    mean = None
    if los:
        u = (scene.node_position(j) - scene.node_position(i)) / d
        a_tx = _panel_response(scene, i, u, lam) if tx_elements else np.ones(1, dtype=complex)
        a_rx = _panel_response(scene, j, -u, lam) if rx_elements else np.ones(1, dtype=complex)
        mean = math.sqrt(pl) * np.exp(-2j * np.pi * d / lam) * np.outer(a_rx, a_tx)
    for _ in range(averages):
        if los and math.isinf(kappa):
            yield mean
            continue
        noise = math.sqrt(pl) * (rng.standard_normal((n_rx, n_tx))
                                 + 1j * rng.standard_normal((n_rx, n_tx))) / math.sqrt(2)
        if not los:
            yield noise
        else:
            yield math.sqrt(kappa / (1 + kappa)) * mean + math.sqrt(1 / (1 + kappa)) * noise


def _panel_response(scene: Scene, node: int, direction, lam: float) -> np.ndarray:
    if node == 0:
        return array_response(scene.bs, direction, lam)
    return array_response(scene.irs[node - 1], direction, lam)


def _bs_neighbors(scene: Scene) -> list[int]:
    out = [j for j in range(1, scene.n_irs + 1) if los_indicator(scene, 0, j)]
    out += [scene.n_irs + k for k in range(1, scene.n_users + 1)
            if los_indicator(scene, 0, scene.n_irs + k) and has_geometric_los(scene, 0, scene.n_irs + k)]
    return out


def irs_neighbor_sets(scene: Scene, j: int):
    """(previous, next) node sets of surface j per the LoS indicators."""
    prev = [0] if los_indicator(scene, 0, j) else []
    prev += [i for i in range(1, scene.n_irs + 1) if i != j and los_indicator(scene, i, j)]
    nxt = [w for w in range(1, scene.n_irs + 1) if w != j and los_indicator(scene, j, w)]
    nxt += [scene.n_irs + k for k in range(1, scene.n_users + 1)
            if los_indicator(scene, j, scene.n_irs + k)]
    return prev, nxt


def build_bs_btt(scene: Scene, codebook: Codebook, threshold: float | None = None,
                 seed: int = 0, averages: int = 10, next_nodes=None) -> BeamTrainingTable:
    """Offline BS table: time-averaged RSS at every next node's controller
    for each active beam, kept when it clears the threshold.

    `next_nodes` restricts the sounded neighbors (default: every LoS one).
    """
    thr = scene.constants.noise_power if threshold is None else threshold
    table = BeamTrainingTable(owner=0, threshold=thr)
    for nxt in (_bs_neighbors(scene) if next_nodes is None else next_nodes):
        rng = _controller_rng(seed, 0, None, nxt)
        rss = np.zeros(codebook.size)
        for c in _controller_link(scene, 0, nxt, rx_elements=False, tx_elements=True,
                                  rng=rng, averages=averages):
            rss += np.abs(codebook.beams @ c[0]) ** 2
        rss /= averages
        for beam, value in enumerate(rss):
            table.add(None, beam, nxt, float(value))
    return table


def build_irs_btt(scene: Scene, irs: int, codebook: Codebook, threshold: float | None = None,
                  seed: int = 0, averages: int = 10,
                  bs_sounding_beam: np.ndarray | None = None,
                  prev_nodes=None, next_nodes=None) -> BeamTrainingTable:
    """Table of surface `irs`: RSS at each next node for every (previous
    node, passive beam) pair, plus the unreflected reference RSS of each
    incoming link.  Rows toward another controller are the offline phase;
    rows toward a user are measured online.

    `prev_nodes`/`next_nodes` restrict the sounded neighbor sets (default:
    every LoS neighbor).
    """
    thr = scene.constants.noise_power if threshold is None else threshold
    table = BeamTrainingTable(owner=irs, threshold=thr)
    default_prev, default_next = irs_neighbor_sets(scene, irs)
    prev_nodes = default_prev if prev_nodes is None else list(prev_nodes)
    next_nodes = default_next if next_nodes is None else list(next_nodes)
    for prev in prev_nodes:
        rng = _controller_rng(seed, irs, prev, irs)
        if prev == 0:
            w = (np.ones(scene.n_bs, dtype=complex) / math.sqrt(scene.n_bs)
                 if bs_sounding_beam is None else bs_sounding_beam)
            incident = [c @ w for c in _controller_link(scene, 0, irs, rx_elements=True,
                                                        tx_elements=True, rng=rng,
                                                        averages=averages)]
            ref_draws = [c[0] @ w for c in _controller_link(scene, 0, irs, rx_elements=False,
                                                            tx_elements=True,
                                                            rng=_controller_rng(seed, irs, prev, irs, kind=1),
                                                            averages=averages)]
        else:
            incident = [c[:, 0] for c in _controller_link(scene, prev, irs, rx_elements=True,
                                                          tx_elements=False, rng=rng,
                                                          averages=averages)]
            ref_draws = [c[0, 0] for c in _controller_link(scene, prev, irs, rx_elements=False,
                                                           tx_elements=False,
                                                           rng=_controller_rng(seed, irs, prev, irs, kind=1),
                                                           averages=averages)]
        table.reference_rss[prev] = float(np.mean([abs(r) ** 2 for r in ref_draws]))
        for nxt in next_nodes:
            out_rng = _controller_rng(seed, irs, prev, nxt)
            rss = np.zeros(codebook.size)
            for t, out in enumerate(_controller_link(scene, irs, nxt, rx_elements=False,
                                                     tx_elements=True, rng=out_rng,
                                                     averages=averages)):
                rss += np.abs(codebook.beams @ (out[0] * incident[t])) ** 2
            rss /= averages
            for beam, value in enumerate(rss):
                table.add(prev, beam, nxt, float(value))
    return table


@dataclass
class GlobalBtt:
    """All tables merged at the BS."""

    bs_table: BeamTrainingTable
    irs_tables: dict               # irs id -> BeamTrainingTable

    def row_count(self) -> int:
        return len(self.bs_table.rows) + sum(len(t.rows) for t in self.irs_tables.values())

    def online_row_count(self, scene: Scene) -> int:
        return sum(len(t.online_rows(scene)) for t in self.irs_tables.values())


def assemble_global_btt(bs_table: BeamTrainingTable, irs_tables) -> GlobalBtt:
    merged = {}
    for table in irs_tables:
        if table.owner in merged:
            raise ValueError(f"duplicate table for surface {table.owner}")
        merged[table.owner] = table
    return GlobalBtt(bs_table=bs_table, irs_tables=merged)


def approx_gain(gbtt: GlobalBtt, path, user_node: int, beam_choices: dict) -> float:
    """Composed end-to-end gain estimate of a route under given beams.

    Multiplies the BS RSS toward the first surface with each hop's RSS
    divided by the unreflected incoming reference; exact under pure LoS.
    `beam_choices` maps node id (0 for the BS) to the beam index used.
    """
    path = tuple(path)
    key = (None, beam_choices[0], path[0])
    if key not in gbtt.bs_table.rows:
        raise NotTrainable(f"BS table has no row {key}")
    estimate = gbtt.bs_table.rows[key]
    hops = [(0, path[0])] + list(zip(path[:-1], path[1:]))
    for (prev, node), nxt in zip(hops, list(path[1:]) + [user_node]):
        table = gbtt.irs_tables.get(node)
        if table is None:
            raise NotTrainable(f"no table for surface {node}")
        row = (prev, beam_choices[node], nxt)
        if row not in table.rows or prev not in table.reference_rss:
            raise NotTrainable(f"surface {node} has no trained row {row}")
        estimate *= table.rows[row] / table.reference_rss[prev]
    return float(estimate)


def best_beams_for_path(gbtt: GlobalBtt, path, user_node: int):
    """Per-hop argmax beam choices; the estimate factorizes per hop."""
    choices = {}
    bs_rows = [(rss, beam) for (prev, beam, nxt), rss in gbtt.bs_table.rows.items()
               if nxt == path[0]]
    if not bs_rows:
        raise NotTrainable(f"no BS rows toward surface {path[0]}")
    choices[0] = max(bs_rows, key=lambda t: (t[0], -t[1]))[1]
    hops = [(0, path[0])] + list(zip(path[:-1], path[1:]))
    for (prev, node), nxt in zip(hops, list(path[1:]) + [user_node]):
        table = gbtt.irs_tables.get(node)
        if table is None:
            raise NotTrainable(f"no table for surface {node}")
        rows = [(rss, beam) for (p, beam, n), rss in table.rows.items()
                if p == prev and n == nxt]
        if not rows:
            raise NotTrainable(f"surface {node} never trained hop ({prev} -> {nxt})")
        choices[node] = max(rows, key=lambda t: (t[0], -t[1]))[1]
    return choices


def distributed_route_and_beams(scene: Scene, gbtt: GlobalBtt, bs_codebook: Codebook,
                                irs_codebooks: dict, users=None, budget: int | None = None):
    """Joint route and beam selection from the global table alone.

    Picks per-hop beams maximizing the composed estimate for every
    candidate route, then routes one user by the best estimate or several
    users by separated max-min on the estimates.  Returns the routing
    solution plus the chosen beam indices per user.
    """
    users = list(users) if users is not None else list(range(1, scene.n_users + 1))
    graphs = {k: build_los_graph(scene, k) for k in users}

    def trained_gain(user, seq):
        target = scene.n_irs + user
        try:
            choices = best_beams_for_path(gbtt, seq, target)
            return approx_gain(gbtt, seq, target, choices)
        except NotTrainable:
            return None

    if len(users) == 1:
        k = users[0]
        target = scene.n_irs + k
        best = None
        for seq in enumerate_graph_paths(graphs[k]):
            g = trained_gain(k, seq)
            if g is not None and (best is None or g > best[0]):
                best = (g, seq)
        if best is None:
            raise Infeasible(f"no trainable route for user {k}", {k: 0})
        solution = RoutingSolution(
            paths={k: ReflectionPath(irs_sequence=best[1], user=k, gain=best[0])},
            objective=best[0], separation_ok=True)
    else:
        solution = optimal_multi_route(scene, graphs, m_elements=0, beta=scene.constants.beta,
                                       budget=budget, gain_fn=trained_gain)

    beam_choices = {}
    for k, refl in solution.paths.items():
        target = scene.n_irs + k
        beam_choices[k] = best_beams_for_path(gbtt, refl.irs_sequence, target)
    return solution, beam_choices


def beams_from_choices(scene: Scene, bs_codebook: Codebook, irs_codebooks: dict,
                       choices: dict):
    """Materialize (w, phases) from one user's chosen beam indices."""
    w = bs_codebook.beams[choices[0]]
    phases = {j: irs_codebooks[j].beams[idx] for j, idx in choices.items() if j != 0}
    return w, phases


def dump_btt(table: BeamTrainingTable, path) -> None:
    """Serialize a table (the simulated controller feedback wire format)."""
    payload = {
        "owner": table.owner,
        "threshold": table.threshold,
        "reference_rss": {str(k): v for k, v in table.reference_rss.items()},
        "rows": [{"prev": prev, "beam": beam, "next": nxt, "rss": rss}
                 for (prev, beam, nxt), rss in sorted(table.rows.items(),
                                                      key=lambda kv: (str(kv[0][0]), kv[0][1], kv[0][2]))],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_btt(path) -> BeamTrainingTable:
    with open(path) as fh:
        payload = json.load(fh)
    table = BeamTrainingTable(owner=payload["owner"], threshold=payload["threshold"])
    table.reference_rss = {int(k): v for k, v in payload["reference_rss"].items()}
    for row in payload["rows"]:
        table.rows[(row["prev"], row["beam"], row["next"])] = row["rss"]
    return table
