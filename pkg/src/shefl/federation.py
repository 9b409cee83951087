"""Server-side round loop for SHEFL and the FedAvg/FedProx/FedEns baselines.

Random lineages used per seed (see ``core.derive_stream``):

    "partition", 0, 0          client data split
    "init", 0, m               initial weights of submodel m
    "sample", t, 0             clients drawn in round t
    "perm", t, cid             permutation row of client cid, refreshed at t % M == 0
    "local/m", t, cid          minibatch order of client cid training submodel m

Client contributions are always reduced in ascending client id, so the
result does not depend on how many worker threads ran the local updates.
"""

from __future__ import annotations

import dataclasses
import os
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import BinaryIO, Optional, Sequence

import numpy as np

from .config import ALGOS, ExperimentConfig, LocalHyper
from .core import RngStream, derive_stream
from .data import Dataset, Partition, partition_dirichlet, partition_pathological
from .metrics import MetricRow, accuracy
from .models import ModelSpec, forward_probs, init_params, loss_and_grad
from .sparsify import SparseDelta, compute_budgets, encode_delta, quantize_wire, top_k, uplink_bytes

HPC = "HPC"
LPC = "LPC"
TRACE_RECORD = struct.Struct("<III")  # round, client id, payload bytes


@dataclass(frozen=True)
class ClientRecord:
    id: int
    power_class: str
    shard: np.ndarray

    @property
    def num_samples(self) -> int:
        return len(self.shard)


def make_clients(partition: Partition, hpc_count: int) -> list[ClientRecord]:
    """Clients ``0 .. hpc_count-1`` are high-power, the rest low-power."""
    return [ClientRecord(i, HPC if i < hpc_count else LPC, shard)
            for i, shard in enumerate(partition.shards)]


def make_partition(cfg: ExperimentConfig, labels, seed: int) -> Partition:
    rng = derive_stream(seed, "partition")
    if cfg.partition == "dirichlet":
        return partition_dirichlet(labels, cfg.num_clients, cfg.alpha, rng)
    return partition_pathological(labels, cfg.num_clients, cfg.shards_per_client, rng)


@dataclass
class EnsembleState:
    round: int
    submodels: list
    perm_rows: dict = field(default_factory=dict)
    lr: float = 1e-2

    @property
    def M(self) -> int:
        return len(self.submodels)


@dataclass
class RoundPlan:
    """One round's participants and weights.

    ``lpc_assignment`` maps every single-submodel trainer to its model
    index; for the baselines that is every sampled client.
    """

    hpc_selected: list
    lpc_selected: list
    lpc_assignment: dict
    counts: list
    coefficients: list


@dataclass(frozen=True)
class Upload:
    client_id: int
    power_class: str
    delta: SparseDelta


@dataclass
class RoundMetrics:
    round: int
    uplink_bytes: int
    lr: float
    wall_ms: int


def sample_round(clients: Sequence[ClientRecord], clients_per_round: int, hpc_per_round: int,
                 rng: RngStream) -> tuple[list[int], list[int]]:
    """Stratified draw without replacement; both id lists come back sorted."""
    hpc = [c.id for c in clients if c.power_class == HPC]
    lpc = [c.id for c in clients if c.power_class == LPC]
    n_lpc = clients_per_round - hpc_per_round
    if hpc_per_round < 0 or n_lpc < 0:
        raise ValueError("need 0 <= hpc_per_round <= clients_per_round")
    if hpc_per_round > len(hpc) or n_lpc > len(lpc):
        raise ValueError(f"population has {len(hpc)} HPC / {len(lpc)} LPC, "
                         f"round wants {hpc_per_round} / {n_lpc}")
    return sorted(rng.sample(hpc, hpc_per_round)), sorted(rng.sample(lpc, n_lpc))


def refresh_permutations(client_ids, M: int, t: int, seed: int) -> dict:
    return {cid: np.array(derive_stream(seed, "perm", t, cid).shuffle(range(M)))
            for cid in client_ids}


def permutation_assign(state: EnsembleState, client_id: int) -> int:
    return int(state.perm_rows[client_id][state.round % state.M])


def compute_coefficients(H: int, L: int, M: int, mode: str = "eq2") -> tuple[float, float]:
    """Aggregation weights (a_h, a_l) for one submodel.

    ``eq2``: a_h = (H+L)/(2M) * L/H and a_l = (H+L)/2.
    ``balanced``: both (H+L)/2.
    With only one class present that class gets weight 1.
    """
    if H < 0 or L < 0 or H + L < 1:
        raise ValueError("need H, L >= 0 and H + L >= 1")
    if L == 0:
        return 1.0, 0.0
    if H == 0:
        return 0.0, 1.0
    if mode == "eq2":
        return (H + L) * L / (2 * M * H), (H + L) / 2
    if mode == "balanced":
        return (H + L) / 2, (H + L) / 2
    raise ValueError(f"unknown coefficient mode {mode!r}")


def local_update(client: ClientRecord, model_index: int, global_params: np.ndarray,
                 hyper: LocalHyper, coeff: float, budget_k: int, rng: RngStream, *,
                 spec: ModelSpec, train: Dataset, mu: Optional[float] = None,
                 wire_quantize: bool = False) -> SparseDelta:
    """Run local SGD from ``global_params`` and return top_k(coeff * delta).

    ``hyper.lr`` is the learning rate of the current round. Minibatches
    walk a random permutation of the shard and redraw it once fewer than
    a full batch remains; a batch never exceeds the shard.
    """
    if coeff <= 0:
        raise ValueError("coeff must be positive; skip the upload instead")
    n = client.num_samples
    if n == 0:
        raise ValueError(f"client {client.id} has an empty shard")
    b = min(hyper.batch, n)
    prox = None if mu is None else (mu, global_params)
    w = global_params.copy()
    order = client.shard[rng.permutation(n)]
    pos = 0
    for _ in range(hyper.iters):
        if pos + b > n:
            order = client.shard[rng.permutation(n)]
            pos = 0
        idx = order[pos:pos + b]
        pos += b
        _, grad = loss_and_grad(spec, w, train.batch(idx), hyper.weight_decay, prox)
        w -= hyper.lr * grad
    if not np.all(np.isfinite(w)):
        raise FloatingPointError(f"client {client.id} diverged on submodel {model_index}")
    delta = top_k(coeff * (w - global_params), budget_k, model_index)
    return quantize_wire(delta) if wire_quantize else delta


def _check_uploads(plan: RoundPlan, uploads: Sequence[Upload]) -> None:
    hpcs = set(plan.hpc_selected)
    seen = set()
    for u in uploads:
        key = (u.client_id, u.delta.model_index)
        if key in seen:
            raise ValueError(f"duplicate upload for client/model {key}")
        seen.add(key)
        if u.power_class == HPC:
            ok = u.client_id in hpcs
        else:
            ok = plan.lpc_assignment.get(u.client_id) == u.delta.model_index
        if not ok:
            raise ValueError(f"client {u.client_id} is not assigned submodel {u.delta.model_index}")


def aggregate_shefl(state: EnsembleState, plan: RoundPlan, uploads: Sequence[Upload],
                    normalize: bool = True) -> EnsembleState:
    """Workload-aware update of every submodel.

    Uploads are already scaled by their class coefficient on the client.
    Per submodel the HPC mean and LPC mean are added; with ``normalize``
    the sum is divided by a_h + a_l so the step is a convex combination.
    """
    _check_uploads(plan, uploads)
    ordered = sorted(uploads, key=lambda u: (u.client_id, u.delta.model_index))
    new = []
    for m, w in enumerate(state.submodels):
        H, L = plan.counts[m]
        a_h, a_l = plan.coefficients[m]
        sums = {HPC: np.zeros_like(w), LPC: np.zeros_like(w)}
        seen = {HPC: 0, LPC: 0}
        for u in ordered:
            if u.delta.model_index == m:
                sums[u.power_class][u.delta.indices] += u.delta.values
                seen[u.power_class] += 1
        if not seen[HPC] and not seen[LPC]:
            new.append(w)
            continue
        g = np.zeros_like(w)
        if seen[HPC]:
            g += sums[HPC] / H
        if seen[LPC]:
            g += sums[LPC] / L
        if normalize:
            g = g / (a_h + a_l)
        new.append(w + g)
    return dataclasses.replace(state, submodels=new)


def aggregate_mean(state: EnsembleState, uploads: Sequence[Upload]) -> EnsembleState:
    """Unweighted per-submodel mean of client deltas."""
    new = []
    for m, w in enumerate(state.submodels):
        mine = sorted((u for u in uploads if u.delta.model_index == m), key=lambda u: u.client_id)
        if not mine:
            new.append(w)
            continue
        total = np.zeros_like(w)
        for u in mine:
            total[u.delta.indices] += u.delta.values
        new.append(w + total / len(mine))
    return dataclasses.replace(state, submodels=new)


def resolve_workers(workers: Optional[int] = None) -> int:
    """Explicit count, else ``SHEFL_THREADS``; 0 means one per CPU."""
    if workers is None:
        workers = int(os.environ.get("SHEFL_THREADS", "0") or 0)
    if workers <= 0:
        workers = os.cpu_count() or 1
    return workers


@dataclass(frozen=True)
class _Task:
    client_id: int
    power_class: str
    model_index: int
    coeff: float
    k: int


class Federation:
    """One (algorithm, seed) simulation over fixed train/test data."""

    def __init__(self, algo: str, cfg: ExperimentConfig, train: Dataset, test: Dataset,
                 seed: int, workers: Optional[int] = None, trace: Optional[BinaryIO] = None):
        algo = algo.lower()
        if algo not in ALGOS:
            raise ValueError(f"unknown algorithm {algo!r}; choose from {ALGOS}")
        self.algo, self.cfg, self.train, self.test, self.seed = algo, cfg, train, test, seed
        self.M = 1 if algo in ("fedavg", "fedprox") else cfg.M
        self.spec = ModelSpec(cfg.model, train.input_dim, train.num_classes, cfg.hidden)
        self.clients = make_clients(make_partition(cfg, train.labels, seed), cfg.hpc_count)
        self.budget = compute_budgets(cfg.k_frac, cfg.ratio_r, self.M, self.spec.dim)
        self.mu = cfg.mu if algo == "fedprox" else None
        if algo == "shefl":
            self.perm_clients = [c.id for c in self.clients if c.power_class == LPC]
        elif algo == "fedens":
            self.perm_clients = [c.id for c in self.clients]
        else:
            self.perm_clients = []
        self.workers = resolve_workers(workers)
        self.trace = trace

    def init_state(self) -> EnsembleState:
        subs = [init_params(self.spec, derive_stream(self.seed, "init", 0, m)) for m in range(self.M)]
        return EnsembleState(0, subs, {}, self.cfg.local.lr_at(0))

    def plan(self, state: EnsembleState) -> tuple[EnsembleState, RoundPlan, list]:
        t, M = state.round, self.M
        if t % M == 0 and self.perm_clients:
            state = dataclasses.replace(state, perm_rows=refresh_permutations(
                self.perm_clients, M, t, self.seed))
        hpc_sel, lpc_sel = sample_round(self.clients, self.cfg.clients_per_round,
                                        self.cfg.hpc_per_round, derive_stream(self.seed, "sample", t))
        tasks = []
        if self.algo == "shefl":
            assign = {cid: permutation_assign(state, cid) for cid in lpc_sel}
            counts = [(len(hpc_sel), sum(1 for v in assign.values() if v == m)) for m in range(M)]
            coeffs = [compute_coefficients(H, L, M, self.cfg.coefficients) if H + L else (0.0, 0.0)
                      for H, L in counts]
            for cid in hpc_sel:
                tasks += [_Task(cid, HPC, m, coeffs[m][0], self.budget.k_h) for m in range(M)]
            tasks += [_Task(cid, LPC, m, coeffs[m][1], self.budget.k_l) for cid, m in assign.items()]
        else:
            everyone = sorted(hpc_sel + lpc_sel)
            if self.algo == "fedens":
                assign = {cid: permutation_assign(state, cid) for cid in everyone}
            else:
                assign = {cid: 0 for cid in everyone}
            counts = [(0, sum(1 for v in assign.values() if v == m)) for m in range(M)]
            coeffs = [(0.0, 1.0)] * M
            tasks = [_Task(cid, LPC, m, 1.0, self.budget.k_l) for cid, m in assign.items()]
        tasks.sort(key=lambda k: (k.client_id, k.model_index))
        return state, RoundPlan(hpc_sel, lpc_sel, assign, counts, coeffs), tasks

    def _train(self, state: EnsembleState, task: _Task) -> Upload:
        hyper = dataclasses.replace(self.cfg.local, lr=state.lr)
        rng = derive_stream(self.seed, f"local/{task.model_index}", state.round, task.client_id)
        delta = local_update(self.clients[task.client_id], task.model_index,
                             state.submodels[task.model_index], hyper, task.coeff, task.k, rng,
                             spec=self.spec, train=self.train, mu=self.mu,
                             wire_quantize=self.cfg.wire_quantize)
        return Upload(task.client_id, task.power_class, delta)

    def run_round(self, state: EnsembleState, pool: Optional[ThreadPoolExecutor] = None):
        start = time.perf_counter()
        state, plan, tasks = self.plan(state)
        if pool is not None and len(tasks) > 1:
            uploads = list(pool.map(lambda task: self._train(state, task), tasks))
        else:
            uploads = [self._train(state, task) for task in tasks]
        if self.algo == "shefl":
            new = aggregate_shefl(state, plan, uploads, self.cfg.normalize)
        else:
            new = aggregate_mean(state, uploads)
        done = state.round + 1
        if self.trace is not None:
            for u in uploads:
                payload = encode_delta(u.delta)
                self.trace.write(TRACE_RECORD.pack(done, u.client_id, len(payload)) + payload)
        metrics = RoundMetrics(done, uplink_bytes(u.delta for u in uploads), state.lr,
                               int(round((time.perf_counter() - start) * 1000)))
        new = dataclasses.replace(new, round=done, lr=self.cfg.local.lr_at(done))
        return new, metrics

    def evaluate(self, state: EnsembleState) -> tuple[float, list]:
        probs = [forward_probs(self.spec, w, self.test.inputs) for w in state.submodels]
        labels = self.test.labels
        per_model = [accuracy(p.argmax(axis=1), labels) for p in probs]
        mean = probs[0]
        for p in probs[1:]:
            mean = mean + p
        return accuracy((mean / len(probs)).argmax(axis=1), labels), per_model

    def run(self, rounds: Optional[int] = None) -> list[MetricRow]:
        rounds = self.cfg.rounds if rounds is None else rounds
        state = self.init_state()
        rows = []
        pool = ThreadPoolExecutor(self.workers) if self.workers > 1 else None
        try:
            for _ in range(rounds):
                state, rm = self.run_round(state, pool)
                acc, per_model = self.evaluate(state)
                rows.append(MetricRow(rm.round, self.algo, self.seed, acc, per_model,
                                      rm.uplink_bytes, rm.lr,
                                      rm.wall_ms if self.cfg.wall_clock else 0))
        finally:
            if pool is not None:
                pool.shutdown()
        self.final_state = state
        return rows


def run_round(state: EnsembleState, federation: Federation):
    return federation.run_round(state)


def run_algorithm(algo: str, cfg: ExperimentConfig, datasets: tuple[Dataset, Dataset],
                  seeds: Optional[Sequence[int]] = None, workers: Optional[int] = None,
                  trace: Optional[BinaryIO] = None) -> list[MetricRow]:
    """Per-round metrics of ``algo`` for every seed (default: ``cfg.seeds``)."""
    train, test = datasets
    rows = []
    for seed in (cfg.seeds if seeds is None else seeds):
        rows += Federation(algo, cfg, train, test, seed, workers, trace).run()
    return rows
