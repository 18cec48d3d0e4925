"""Fitness evaluation: the contract the search engines call, deterministic
surrogate landscapes for desk-scale verification, a persistent evaluation
cache, and the client side of the external-evaluator wire protocol.

Fitness is validation accuracy in [0, 1]; the engines maximize it. Error-rate
tables elsewhere are 100*(1 - fitness).
"""

from __future__ import annotations

import hashlib
import json
import os
import shlex
import socket
import subprocess
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

from . import rng as rngmod
from .config import TrainBudget
from .genome import Genome, OutOfShape, count_params, effective_length, genome_hash, serialize, to_json_obj


class BackendUnavailable(Exception):
    """The external evaluator cannot be reached (dead process, refused socket)."""


class Timeout(TimeoutError):
    """No response for a request within the configured wall-clock budget."""


class ProtocolError(Exception):
    """The external evaluator sent something the protocol does not allow."""


@dataclass(frozen=True)
class FitnessRecord:
    """Result of evaluating one genome. fitness is 0 whenever error is set."""

    fitness: float
    loss: float | None
    num_params: int
    eval_seconds: float
    source: str  # "surrogate" | "external" | "cache"
    error: str | None = None

    def to_json(self) -> dict:
        return {
            "fitness": self.fitness,
            "loss": self.loss,
            "num_params": self.num_params,
            "eval_seconds": self.eval_seconds,
            "source": self.source,
            "error": self.error,
        }

    @staticmethod
    def from_json(obj: dict) -> "FitnessRecord":
        return FitnessRecord(
            fitness=obj["fitness"],
            loss=obj["loss"],
            num_params=obj["num_params"],
            eval_seconds=obj["eval_seconds"],
            source=obj["source"],
            error=obj.get("error"),
        )


def out_of_shape_record(exc: OutOfShape, source: str) -> FitnessRecord:
    return FitnessRecord(
        fitness=0.0,
        loss=None,
        num_params=0,
        eval_seconds=0.0,
        source=source,
        error=f"out_of_shape:{exc.layer_index}",
    )


def is_out_of_shape(record: FitnessRecord) -> bool:
    return record.error is not None and record.error.startswith("out_of_shape:")


# -- surrogate landscapes -----------------------------------------------------


@dataclass(frozen=True)
class SurrogateSpec:
    """A closed-form stand-in for trained accuracy.

    Families:
      length_peak     1 - |effective_length - peak_length| / max_length, plus noise
      params_logistic rises then saturates in log(parameter count)
      plateau         constant `level` (for exercising no-optimal-space and tie rules)

    Noise is a pure function of (noise_seed, genome hash, repeat index), so
    identical triples give identical records on any machine.
    """

    family: str = "length_peak"
    peak_length: int = 6
    noise_scale: float = 0.0
    noise_seed: int = 0
    level: float = 0.5
    max_length: int = 24
    params_midpoint: float = 50_000.0

    def __post_init__(self):
        if self.family not in ("length_peak", "params_logistic", "plateau"):
            raise ValueError(f"unknown surrogate family {self.family!r}")


def _clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


def surrogate_fitness(
    spec: SurrogateSpec,
    genome: Genome,
    repeat_index: int = 0,
    input_shape: tuple[int, int, int] = (32, 32, 3),
) -> FitnessRecord:
    """Deterministic surrogate accuracy for a genome; pure in all arguments."""
    params = count_params(genome, input_shape)

    if spec.family == "length_peak":
        base = 1.0 - abs(effective_length(genome) - spec.peak_length) / spec.max_length
    elif spec.family == "params_logistic":
        base = params / (params + spec.params_midpoint)
    else:  # plateau
        base = spec.level

    noise = 0.0
    if spec.noise_scale > 0.0:
        u = rngmod.unit(spec.noise_seed, genome_hash(genome), repeat_index)
        noise = (2.0 * u - 1.0) * spec.noise_scale

    fitness = _clamp01(base + noise)
    return FitnessRecord(
        fitness=fitness,
        loss=1.0 - fitness,
        num_params=params,
        eval_seconds=0.0,  # kept exact so run outputs are byte-reproducible
        source="surrogate",
    )


# -- evaluation cache ---------------------------------------------------------


def cache_key(genome: Genome, budget: TrainBudget, repeat_index: int) -> str:
    payload = f"{serialize(genome)}|{json.dumps(budget.to_json(), sort_keys=True)}|{repeat_index}"
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class EvalCache:
    """Append-only record store keyed by (genome, budget, repeat) hash.

    Reads are lock-free on the dict snapshot; writes are serialized. With a
    path, records persist as JSON lines and reload on construction.
    """

    def __init__(self, path: str | None = None):
        self._records: dict[str, FitnessRecord] = {}
        self._lock = threading.Lock()
        self._path = path
        if path and os.path.exists(path):
            with open(path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    entry = json.loads(line)
                    self._records[entry["key"]] = FitnessRecord.from_json(entry["record"])

    def __len__(self) -> int:
        return len(self._records)

    def get(self, key: str) -> FitnessRecord | None:
        return self._records.get(key)

    def put(self, key: str, record: FitnessRecord) -> None:
        with self._lock:
            if key in self._records:
                return
            self._records[key] = record
            if self._path:
                entry = {"key": key, "record": record.to_json()}
                with open(self._path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry, sort_keys=True) + "\n")


# -- evaluator front end ------------------------------------------------------


class FitnessEvaluator:
    """Cache-aware evaluate() front end over a surrogate or external backend.

    Out-of-shape genomes short-circuit to fitness 0 without touching the
    backend. Cache hits return the stored payload with source="cache".
    """

    def __init__(
        self,
        backend,
        input_shape: tuple[int, int, int],
        num_classes: int,
        cache: EvalCache | None = None,
        master_seed: int = 0,
    ):
        self.backend = backend
        self.input_shape = input_shape
        self.num_classes = num_classes
        self.cache = cache if cache is not None else EvalCache()
        self.master_seed = master_seed

    def evaluate(self, genome: Genome, budget: TrainBudget, repeat_index: int = 0) -> FitnessRecord:
        try:
            num_params = count_params(genome, self.input_shape)
        except OutOfShape as exc:
            return out_of_shape_record(exc, self.backend.kind)

        key = cache_key(genome, budget, repeat_index)
        hit = self.cache.get(key)
        if hit is not None:
            return replace(hit, source="cache")

        seed = rngmod.child_seed(self.master_seed, "eval", genome_hash(genome), repeat_index) % 2**31
        record = self.backend.run(
            genome,
            budget,
            repeat_index=repeat_index,
            input_shape=self.input_shape,
            num_classes=self.num_classes,
            num_params=num_params,
            seed=seed,
        )
        if record.error is None:
            self.cache.put(key, record)  # transient backend failures are not cached
        return record

    def evaluate_many(
        self,
        genomes: list[Genome],
        budget: TrainBudget,
        repeat_index: int = 0,
        jobs: int = 1,
    ) -> list[FitnessRecord]:
        """Evaluate a batch; results are committed in slot order regardless of
        completion order, so concurrency cannot change the outcome."""
        return self.evaluate_pairs([(g, repeat_index) for g in genomes], budget, jobs=jobs)

    def evaluate_pairs(
        self,
        pairs: list[tuple[Genome, int]],
        budget: TrainBudget,
        jobs: int = 1,
    ) -> list[FitnessRecord]:
        """Like evaluate_many but with a repeat index per item."""
        if jobs <= 1 or len(pairs) <= 1:
            return [self.evaluate(g, budget, r) for g, r in pairs]
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(self.evaluate, g, budget, r) for g, r in pairs]
            return [f.result() for f in futures]

    def close(self) -> None:
        close = getattr(self.backend, "close", None)
        if close:
            close()


class SurrogateBackend:
    kind = "surrogate"

    def __init__(self, spec: SurrogateSpec):
        self.spec = spec

    def run(self, genome, budget, *, repeat_index, input_shape, num_classes, num_params, seed):
        del budget, num_classes, num_params, seed  # surrogate cost model ignores these
        return surrogate_fitness(self.spec, genome, repeat_index, input_shape)


class ExternalBackend:
    kind = "external"

    def __init__(self, client: "ProtocolClient"):
        self.client = client

    def run(self, genome, budget, *, repeat_index, input_shape, num_classes, num_params, seed):
        del repeat_index, num_params
        try:
            return external_evaluate(
                self.client, genome, budget,
                input_shape=input_shape, num_classes=num_classes, seed=seed,
            )
        except (Timeout, ProtocolError, BackendUnavailable) as exc:
            return FitnessRecord(
                fitness=0.0, loss=None, num_params=0, eval_seconds=0.0,
                source="external", error=f"backend:{exc}",
            )

    def close(self):
        self.client.close()


# -- external evaluator protocol ----------------------------------------------
#
# Newline-delimited JSON over a byte stream (subprocess stdio or TCP).
#   request:  {"id", "genome", "input_shape", "num_classes", "budget", "seed"}
#   response: {"id", "status": "ok"|"error", "fitness", "loss", "num_params",
#              "wall_seconds", "message"?}
# One response per request; ids are unique per run; servers must ignore
# unknown request fields.


def build_request(
    genome: Genome,
    budget: TrainBudget,
    input_shape: tuple[int, int, int],
    num_classes: int,
    seed: int,
    request_id: str,
) -> dict:
    return {
        "id": request_id,
        "genome": to_json_obj(genome),
        "input_shape": list(input_shape),
        "num_classes": num_classes,
        "budget": budget.to_json(),
        "seed": seed,
    }


class _Pending:
    __slots__ = ("event", "response")

    def __init__(self):
        self.event = threading.Event()
        self.response: dict | None = None


class ProtocolClient:
    """Sends requests to one evaluator process or socket and matches responses
    by id. Any number of requests may be in flight; each waits under its own
    timeout and is resent at most `max_retries` times before giving up.
    """

    def __init__(
        self,
        command: tuple[str, ...] | None = None,
        address: str | None = None,
        timeout: float = 60.0,
        max_retries: int = 1,
    ):
        if (command is None) == (address is None):
            raise ValueError("exactly one of command/address must be given")
        self.timeout = timeout
        self.max_retries = max_retries
        self._pending: dict[str, _Pending] = {}
        self._done: dict[str, None] = {}  # recently answered ids, insertion-ordered
        self._lock = threading.Lock()
        self._failure: Exception | None = None
        self._proc: subprocess.Popen | None = None
        self._sock: socket.socket | None = None

        if command is not None:
            try:
                self._proc = subprocess.Popen(
                    list(command),
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                    bufsize=1,
                )
            except OSError as e:
                raise BackendUnavailable(f"cannot start evaluator {command!r}: {e}") from e
            self._writer = self._proc.stdin
            self._lines = self._proc.stdout
        else:
            host, _, port = address.rpartition(":")
            try:
                self._sock = socket.create_connection((host or "127.0.0.1", int(port)), timeout=timeout)
            except OSError as e:
                raise BackendUnavailable(f"cannot connect to evaluator at {address}: {e}") from e
            self._sock.settimeout(None)  # per-request timeouts live in submit()
            self._writer = self._sock.makefile("w", encoding="utf-8")
            self._lines = self._sock.makefile("r", encoding="utf-8")

        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        try:
            for line in self._lines:
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError:
                    self._fail_all(ProtocolError(f"unparseable response line: {line[:120]!r}"))
                    return
                rid = obj.get("id")
                with self._lock:
                    pending = self._pending.get(rid)
                    if pending is None and rid in self._done:
                        continue  # late duplicate after a resend; drop it
                if pending is None:
                    self._fail_all(ProtocolError(f"response with unknown id {rid!r}"))
                    return
                pending.response = obj
                pending.event.set()
        except (OSError, ValueError):
            pass
        self._fail_all(BackendUnavailable("evaluator stream closed"))

    def _fail_all(self, exc: Exception) -> None:
        with self._lock:
            if self._failure is None:
                self._failure = exc
            waiters = list(self._pending.values())
        for p in waiters:
            p.event.set()

    def _send(self, text: str) -> None:
        try:
            self._writer.write(text + "\n")
            self._writer.flush()
        except (OSError, ValueError) as e:
            raise BackendUnavailable(f"cannot write to evaluator: {e}") from e

    def submit(self, request: dict) -> dict:
        """Send one request and block for its matching response."""
        if self._failure is not None:
            raise self._failure
        rid = request["id"]
        pending = _Pending()
        with self._lock:
            self._pending[rid] = pending
        text = json.dumps(request, sort_keys=True)
        try:
            attempts = 1 + max(0, self.max_retries)
            for _ in range(attempts):
                self._send(text)
                if pending.event.wait(self.timeout):
                    break
            else:
                raise Timeout(f"no response for request {rid} after {attempts} attempt(s)")
            if pending.response is None:
                # Woken by a client-level failure rather than a response.
                raise self._failure or BackendUnavailable("evaluator stream closed")
            return pending.response
        finally:
            with self._lock:
                self._pending.pop(rid, None)
                self._done[rid] = None
                while len(self._done) > 4096:
                    self._done.pop(next(iter(self._done)))

    def close(self) -> None:
        self._fail_all(BackendUnavailable("client closed"))
        try:
            self._writer.close()
        except (OSError, ValueError):
            pass
        if self._proc is not None:
            try:
                self._proc.terminate()
                self._proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass


_RESPONSE_OK_FIELDS = ("fitness", "loss", "num_params", "wall_seconds")


def external_evaluate(
    client: ProtocolClient,
    genome: Genome,
    budget: TrainBudget,
    input_shape: tuple[int, int, int],
    num_classes: int,
    seed: int = 0,
) -> FitnessRecord:
    """One round trip through the wire protocol, mapped to a FitnessRecord."""
    request_id = uuid.uuid4().hex
    request = build_request(genome, budget, input_shape, num_classes, seed, request_id)
    response = client.submit(request)

    status = response.get("status")
    if status == "error":
        return FitnessRecord(
            fitness=0.0,
            loss=None,
            num_params=0,
            eval_seconds=float(response.get("wall_seconds", 0.0)),
            source="external",
            error=f"backend:{response.get('message', 'unspecified error')}",
        )
    if status != "ok":
        raise ProtocolError(f"response status must be 'ok' or 'error', got {status!r}")
    missing = [f for f in _RESPONSE_OK_FIELDS if f not in response]
    if missing:
        raise ProtocolError(f"ok response missing field {missing[0]!r}")
    return FitnessRecord(
        fitness=float(response["fitness"]),
        loss=float(response["loss"]),
        num_params=int(response["num_params"]),
        eval_seconds=float(response["wall_seconds"]),
        source="external",
    )


def make_evaluator(backend_cfg, evo_cfg, cache_path: str | None = None) -> FitnessEvaluator:
    """Build the evaluator a run config asks for.

    EVOLEN_BACKEND_CMD overrides the external evaluator command line.
    """
    override = os.environ.get("EVOLEN_BACKEND_CMD")
    if backend_cfg.kind == "external" or override:
        if override:
            command: tuple[str, ...] | None = tuple(shlex.split(override))
            address = None
        else:
            command = backend_cfg.command
            address = backend_cfg.address
        if command is None and address is None:
            raise BackendUnavailable("external backend needs a command or address")
        client = ProtocolClient(
            command=command,
            address=address,
            timeout=backend_cfg.timeout,
            max_retries=backend_cfg.max_retries,
        )
        backend = ExternalBackend(client)
    else:
        spec = SurrogateSpec(
            family=backend_cfg.family,
            peak_length=backend_cfg.peak_length,
            noise_scale=backend_cfg.noise_scale,
            noise_seed=backend_cfg.noise_seed,
            level=backend_cfg.level,
            max_length=evo_cfg.max_length,
            params_midpoint=backend_cfg.params_midpoint,
        )
        backend = SurrogateBackend(spec)
    return FitnessEvaluator(
        backend,
        input_shape=evo_cfg.input_shape,
        num_classes=evo_cfg.num_classes,
        cache=EvalCache(cache_path),
        master_seed=evo_cfg.master_seed,
    )
