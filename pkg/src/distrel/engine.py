"""Coordinator/worker loop for the distributed estimator.

The coordinator owns the first shard, fits the initial ``l1``-penalized
quantile estimate there, then repeats: ship the current coefficients to
every worker, pool their kernel density values, ship the pooled density
back, pool their summary vectors into the linear term, and solve the
penalized quadratic with the first shard's Gram matrix.  Workers only
ever exchange O(p) vectors.

Two transports run the same message encoding end to end: "in-process"
workers are threads fed encoded frames over queues, "socket" workers
are separate processes speaking the frame protocol over TCP and
loading their shard from disk.
"""

import collections
import multiprocessing
import os
import queue
import socket
import tempfile
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import wire
from .data import Dataset
from .errors import WorkerUnreachable
from .kernels import aggregate_density, local_density_at_zero
from .prox import QuadraticProblem, SolverSettings, solve_l1_quadratic
from .qr import QrProblem, QrSettings, solve_l1_qr
from .schedules import bandwidth_h, lambda_reg
from .summaries import (DENSITY_FLOOR, ShardSummary, assemble_linear_term,
                        shard_summary)
from .wire import Tag

TRANSPORTS = ("in-process", "socket")
RETRY_ATTEMPTS = 3


def default_init_penalty(scale):
    """Penalty for the first-shard quantile fit that seeds the loop."""
    return 0.5 * np.sqrt(np.log(max(scale.p, scale.n)) / scale.m)


def first_shard_gram(X):
    """Gram matrix of a design block; shared with the pooled baseline
    so the two code paths stay bitwise identical."""
    return X.T @ X / X.shape[0]


@dataclass
class ClusterConfig:
    shards: list
    scale: object
    tau: float
    iterations: int
    first_shard_index: int = 0
    transport: str = "in-process"
    seed: int = 0
    initial_coefficients: object = None
    bandwidth_scale: float = 1.0
    record_iterates: bool = False
    init_penalty: float = None
    timeout_s: float = 60.0

    def __post_init__(self):
        if len(self.shards) == 0:
            raise ValueError("need at least one shard")
        if not 0 <= self.first_shard_index < len(self.shards):
            raise ValueError(
                f"first_shard_index {self.first_shard_index} outside "
                f"[0, {len(self.shards)})")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, "
                             f"got {self.iterations}")
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"quantile level must be in (0, 1), "
                             f"got {self.tau}")
        if self.transport not in TRANSPORTS:
            raise ValueError(f"transport must be one of {TRANSPORTS}, "
                             f"got {self.transport!r}")
        if self.bandwidth_scale <= 0.0:
            raise ValueError("bandwidth_scale must be positive")
        ncols = self.shards[0].ncols
        for k, shard in enumerate(self.shards):
            if shard.ncols != ncols:
                raise ValueError(f"shard {k} has {shard.ncols} columns, "
                                 f"shard 0 has {ncols}")
        if self.scale.p != ncols - 1:
            raise ValueError(f"scale.p={self.scale.p} but shards have "
                             f"{ncols - 1} covariates")
        first_rows = self.shards[self.first_shard_index].n
        if self.scale.m != first_rows:
            raise ValueError(f"scale.m={self.scale.m} but the first shard "
                             f"holds {first_rows} rows")
        total = sum(s.n for s in self.shards)
        if self.scale.n != total:
            raise ValueError(f"scale.n={self.scale.n} but shards hold "
                             f"{total} rows in total")


@dataclass
class IterationRecord:
    g: int
    bandwidth: float
    lam: float
    density: float
    nnz: int
    kkt: float
    wall_time: float
    bytes_exchanged: int
    message_counts: dict
    solver_converged: bool
    iterate: object = None


@dataclass
class IterationTrace:
    records: list = field(default_factory=list)
    init_wall_time: float = 0.0
    init_penalty: float = 0.0
    init_nnz: int = 0
    error: str = None
    aborted_at: int = None

    @property
    def completed(self):
        return len(self.records)


class ShardWorker:
    """Message handler for one shard; transport-agnostic."""

    def __init__(self, shard, tau):
        self.shard = shard
        self.tau = tau
        self.beta = None
        self.last_density = 0.0

    def handle(self, tag, payload):
        if tag == Tag.BETA_BCAST:
            self.beta = wire.unpack_vector(payload)
            return Tag.BETA_BCAST, b""
        if tag == Tag.DENSITY_REQ:
            h = wire.unpack_f64(payload)
            self.last_density = local_density_at_zero(self.shard, self.beta,
                                                      h)
            return Tag.DENSITY_RESP, wire.pack_density(self.last_density,
                                                       self.shard.n)
        if tag == Tag.SUMMARY_REQ:
            f0 = wire.unpack_f64(payload)
            summary = shard_summary(self.shard, self.beta, f0, self.tau,
                                    density_local=self.last_density)
            return Tag.SUMMARY_RESP, summary.to_bytes()
        if tag == Tag.SHUTDOWN:
            return Tag.SHUTDOWN, b""
        raise ValueError(f"worker cannot handle tag {tag}")


class InProcessLink:
    """Worker thread fed encoded frames through a pair of queues."""

    def __init__(self, shard_index, shard, tau):
        self.shard_index = shard_index
        self.bytes_sent = 0
        self.bytes_received = 0
        self._dead = False
        self._inbox = queue.Queue()
        self._outbox = queue.Queue()
        self._thread = threading.Thread(
            target=self._serve, args=(ShardWorker(shard, tau),), daemon=True)
        self._thread.start()

    def _serve(self, worker):
        while True:
            data = self._inbox.get()
            if data is None:
                return
            tag, payload = wire.split_frame(data)
            rtag, rpayload = worker.handle(tag, payload)
            self._outbox.put(wire.encode_frame(rtag, rpayload))
            if tag == Tag.SHUTDOWN:
                return

    def send_frame(self, tag, payload=b""):
        if self._dead:
            raise ConnectionError(
                f"worker {self.shard_index} is gone")
        data = wire.encode_frame(tag, payload)
        self.bytes_sent += len(data)
        self._inbox.put(data)

    def recv_frame(self, timeout):
        try:
            data = self._outbox.get(timeout=timeout)
        except queue.Empty:
            raise TimeoutError(
                f"worker {self.shard_index} sent no response") from None
        self.bytes_received += len(data)
        return wire.split_frame(data)

    def kill(self):
        # test hook: make the worker vanish without a goodbye
        self._dead = True
        self._inbox.put(None)
        self._thread.join()

    def close(self):
        if self._thread.is_alive():
            self._inbox.put(None)
            self._thread.join(timeout=5.0)


def _socket_worker_main(shard_path, tau, port_pipe):
    shard = Dataset.load(shard_path)
    worker = ShardWorker(shard, tau)
    lsock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        lsock.bind(("127.0.0.1", 0))
        lsock.listen(1)
        port_pipe.send(lsock.getsockname()[1])
        port_pipe.close()
        conn, _ = lsock.accept()
        with conn:
            while True:
                tag, payload = wire.recv_frame(conn)
                rtag, rpayload = worker.handle(tag, payload)
                conn.sendall(wire.encode_frame(rtag, rpayload))
                if tag == Tag.SHUTDOWN:
                    return
    finally:
        lsock.close()


class SocketLink:
    """One TCP connection to a worker process serving one shard."""

    def __init__(self, shard_index, shard, tau, tmpdir, timeout_s):
        self.shard_index = shard_index
        self.bytes_sent = 0
        self.bytes_received = 0
        shard_path = os.path.join(tmpdir, f"shard_{shard_index}.bin")
        shard.save(shard_path)
        parent_pipe, child_pipe = multiprocessing.Pipe()
        self._proc = multiprocessing.Process(
            target=_socket_worker_main, args=(shard_path, tau, child_pipe),
            daemon=True)
        self._proc.start()
        child_pipe.close()
        if not parent_pipe.poll(timeout_s):
            self._proc.terminate()
            raise WorkerUnreachable(shard_index,
                                    "worker never reported its port")
        port = parent_pipe.recv()
        parent_pipe.close()
        self._sock = socket.create_connection(("127.0.0.1", port),
                                              timeout=timeout_s)

    def send_frame(self, tag, payload=b""):
        data = wire.encode_frame(tag, payload)
        self._sock.sendall(data)
        self.bytes_sent += len(data)

    def recv_frame(self, timeout):
        self._sock.settimeout(timeout)
        try:
            tag, payload = wire.recv_frame(self._sock)
        except socket.timeout:
            raise TimeoutError(
                f"worker {self.shard_index} sent no response") from None
        self.bytes_received += len(payload) + 6
        return tag, payload

    def kill(self):
        self._proc.terminate()
        self._proc.join()

    def close(self):
        try:
            self._sock.close()
        finally:
            if self._proc.is_alive():
                self._proc.terminate()
            self._proc.join(timeout=5.0)


class WorkerPool:
    """All links of one run, ordered by shard index."""

    def __init__(self, links, tmpdir=None):
        self.links = links
        self.message_counts = collections.Counter()
        self._tmpdir = tmpdir

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    @property
    def bytes_exchanged(self):
        return sum(l.bytes_sent + l.bytes_received for l in self.links)

    def kill(self, shard_index):
        self.links[shard_index].kill()

    def shutdown_workers(self, timeout=5.0):
        for link in self.links:
            try:
                link.send_frame(Tag.SHUTDOWN)
                link.recv_frame(timeout)
            except Exception:
                pass

    def close(self):
        self.shutdown_workers()
        for link in self.links:
            link.close()
        if self._tmpdir is not None:
            self._tmpdir.cleanup()
            self._tmpdir = None


def start_workers(shards, tau, transport="in-process", timeout_s=60.0):
    if transport == "in-process":
        links = [InProcessLink(k, shard, tau)
                 for k, shard in enumerate(shards)]
        return WorkerPool(links)
    if transport == "socket":
        tmpdir = tempfile.TemporaryDirectory(prefix="distrel_shards_")
        links = []
        try:
            for k, shard in enumerate(shards):
                links.append(SocketLink(k, shard, tau, tmpdir.name,
                                        timeout_s))
        except Exception:
            for link in links:
                link.close()
            tmpdir.cleanup()
            raise
        return WorkerPool(links, tmpdir)
    raise ValueError(f"transport must be one of {TRANSPORTS}, "
                     f"got {transport!r}")


def _exchange(pool, link, tag, payload, response_tag, timeout):
    last = "no attempt made"
    for _ in range(RETRY_ATTEMPTS):
        try:
            link.send_frame(tag, payload)
            pool.message_counts[tag.name] += 1
            rtag, rpayload = link.recv_frame(timeout)
        except (TimeoutError, OSError) as exc:
            last = repr(exc)
            continue
        if rtag != response_tag:
            raise ValueError(
                f"worker {link.shard_index} answered {tag.name} with "
                f"{rtag.name}")
        pool.message_counts[rtag.name] += 1
        return rpayload
    raise WorkerUnreachable(link.shard_index, last)


def broadcast(pool, tag, payload, timeout=60.0):
    """Deliver one message to every worker; acks in shard-index order."""
    acks = []
    for link in pool.links:
        acks.append(_exchange(pool, link, tag, payload, tag, timeout))
    return acks


def gather(pool, tag, payload, response_tag, timeout=60.0):
    """Request/response against every worker, sorted by shard index."""
    responses = []
    for link in pool.links:
        responses.append(_exchange(pool, link, tag, payload, response_tag,
                                   timeout))
    return responses


def run_distributed_rel(cfg, pool=None,
                        solver_settings=None, qr_settings=None):
    """Run the full estimator loop and return (coefficients, trace).

    A density estimate at or below the floor aborts the loop; the trace
    carries the error mark and the coefficients from the last completed
    iteration are returned.  Solver non-convergence is recorded in the
    trace and the loop continues.
    """
    own_pool = pool is None
    if own_pool:
        pool = start_workers(cfg.shards, cfg.tau, cfg.transport,
                             cfg.timeout_s)
    trace = IterationTrace()
    try:
        first = cfg.shards[cfg.first_shard_index]
        t0 = time.perf_counter()
        if cfg.initial_coefficients is not None:
            beta = np.array(cfg.initial_coefficients, dtype=np.float64)
            if beta.shape != (first.ncols,):
                raise ValueError(
                    f"initial coefficients have shape {beta.shape}, "
                    f"shards have {first.ncols} columns")
            trace.init_penalty = 0.0
        else:
            lam0 = cfg.init_penalty
            if lam0 is None:
                lam0 = default_init_penalty(cfg.scale)
            beta = solve_l1_qr(QrProblem(first.X, first.y, cfg.tau, lam0),
                               qr_settings or QrSettings())
            trace.init_penalty = lam0
        trace.init_wall_time = time.perf_counter() - t0
        trace.init_nnz = int(np.count_nonzero(beta))

        problem = QuadraticProblem(np.zeros(first.ncols), 0.0,
                                   gram=first_shard_gram(first.X))
        settings = solver_settings or SolverSettings()

        for g in range(1, cfg.iterations + 1):
            iter_t0 = time.perf_counter()
            bytes_before = pool.bytes_exchanged
            counts_before = collections.Counter(pool.message_counts)

            broadcast(pool, Tag.BETA_BCAST, wire.pack_vector(beta),
                      cfg.timeout_s)
            h = bandwidth_h(cfg.scale, g) * cfg.bandwidth_scale
            density_parts = [
                wire.unpack_density(p) for p in
                gather(pool, Tag.DENSITY_REQ, wire.pack_f64(h),
                       Tag.DENSITY_RESP, cfg.timeout_s)
            ]
            f0 = aggregate_density(density_parts)
            if f0 <= DENSITY_FLOOR:
                trace.error = (
                    f"aggregated density {f0:.6g} at or below the floor "
                    f"{DENSITY_FLOOR} in iteration {g}")
                trace.aborted_at = g
                break

            summaries = [
                ShardSummary.from_bytes(p) for p in
                gather(pool, Tag.SUMMARY_REQ, wire.pack_f64(f0),
                       Tag.SUMMARY_RESP, cfg.timeout_s)
            ]
            first_sigma = summaries[cfg.first_shard_index].sigma_beta
            problem.b = assemble_linear_term(summaries, first_sigma, beta)
            problem.lam = lambda_reg(cfg.scale, g)
            beta, info = solve_l1_quadratic(problem, settings,
                                            warm_start=beta,
                                            full_output=True)

            trace.records.append(IterationRecord(
                g=g,
                bandwidth=h,
                lam=problem.lam,
                density=f0,
                nnz=int(np.count_nonzero(beta)),
                kkt=info["kkt"],
                wall_time=time.perf_counter() - iter_t0,
                bytes_exchanged=pool.bytes_exchanged - bytes_before,
                message_counts=dict(pool.message_counts - counts_before),
                solver_converged=info["converged"],
                iterate=beta.copy() if cfg.record_iterates else None,
            ))
        return beta, trace
    finally:
        if own_pool:
            pool.close()
