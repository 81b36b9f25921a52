"""HTTP recommendation service.

POST /v1/recommend runs a walk against the currently served graph;
GET /v1/health reports the graph version and size. A background
watcher polls the graph directory and atomically swaps in any newer
well-formed binary (name-sorted `*.pixg` with an `.idmap` sibling);
in-flight queries keep the bundle they started with.

Each request is handled by one worker; a semaphore caps concurrent
walks at the configured worker count, which also bounds counter
memory. The response body is deterministic for a pinned seed, so
per-request latency travels in the X-Latency-Micros header instead.
"""

from __future__ import annotations

import glob
import itertools
import logging
import os
import threading
import time
from contextlib import asynccontextmanager
from dataclasses import dataclass, field, replace

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, ConfigDict, Field

from .compiler import id_map_path, read_id_map
from .errors import ConfigError, EmptyQueryError, PinwalkError
from .graph import BipartiteGraph, load_binary
from .rng import RandomSource, derive_seed
from .walk import WalkConfig, WeightedQuery, pixie_random_walk_multiple

log = logging.getLogger("pinwalk.server")

DEFAULT_ACTION_WEIGHTS = {"save": 1.0, "like": 0.5, "click": 0.25}


# -- query building from action histories --------------------------------

@dataclass(frozen=True)
class UserAction:
    pin_key: str
    action_type: str
    age_seconds: float


def decayed_weight(w0: float, age_seconds: float, half_life: float) -> float:
    """Exponential decay: half the weight after each `half_life` seconds."""
    if half_life <= 0:
        raise ConfigError(f"half_life must be positive, got {half_life}")
    if age_seconds < 0:
        raise ConfigError(f"age_seconds must be >= 0, got {age_seconds}")
    return w0 * 2.0 ** (-age_seconds / half_life)


def build_query_from_actions(actions, action_weights, half_life, resolve
                             ) -> tuple[dict[int, float], list[str]]:
    """Fold an action history into normalized per-pin weights.

    `resolve` maps an external pin key to an internal ID or None;
    unresolvable pins are dropped and returned for reporting. Raises
    EmptyQueryError when nothing survives.
    """
    weights: dict[int, float] = {}
    dropped: list[str] = []
    for a in actions:
        if a.action_type not in action_weights:
            raise ConfigError(f"unknown action type {a.action_type!r}")
        pin = resolve(a.pin_key)
        if pin is None:
            dropped.append(a.pin_key)
            continue
        w = decayed_weight(action_weights[a.action_type], a.age_seconds,
                           half_life)
        weights[pin] = weights.get(pin, 0.0) + w
    if not weights:
        raise EmptyQueryError("no action references a known pin")
    total = sum(weights.values())
    return {p: w / total for p, w in weights.items()}, dropped


# -- wire models ----------------------------------------------------------

class QueryEntryModel(BaseModel):
    pin_key: str = Field(alias="pinKey")
    weight: float = Field(default=1.0, gt=0)
    model_config = ConfigDict(populate_by_name=True)


class ActionModel(BaseModel):
    pin_key: str = Field(alias="pinKey")
    action_type: str = Field(alias="actionType")
    age_seconds: float = Field(alias="ageSeconds", ge=0)
    model_config = ConfigDict(populate_by_name=True)


class OverridesModel(BaseModel):
    alpha: float | None = None
    total_steps: int | None = Field(default=None, alias="totalSteps")
    early_stop_pins: int | None = Field(default=None, alias="earlyStopPins")
    early_stop_visits: int | None = Field(default=None, alias="earlyStopVisits")
    bias_strength: float | None = Field(default=None, alias="biasStrength")
    max_walk_length: int | None = Field(default=None, alias="maxWalkLength")
    model_config = ConfigDict(populate_by_name=True)


class RecommendRequestModel(BaseModel):
    query: list[QueryEntryModel] = []
    actions: list[ActionModel] = []
    user_features: list[int | str] = Field(default=[], alias="userFeatures")
    overrides: OverridesModel | None = None
    top_k: int = Field(default=1000, ge=1, alias="topK")
    seed: int | None = None
    model_config = ConfigDict(populate_by_name=True)


# -- service ---------------------------------------------------------------

@dataclass(frozen=True)
class ServerConfig:
    graph_dir: str
    port: int = 8080
    host: str = "127.0.0.1"
    workers: int = 4
    half_life_seconds: float = 86_400.0
    seed: int = 0
    poll_interval: float = 0.5
    walk: WalkConfig = field(default_factory=WalkConfig)
    action_weights: dict = field(default_factory=lambda: dict(DEFAULT_ACTION_WEIGHTS))


@dataclass(frozen=True)
class GraphBundle:
    version: str
    graph: BipartiteGraph
    key_to_id: dict[str, int]
    id_to_key: list[str]


@dataclass
class RecommendOutcome:
    results: list[tuple[str, float]]
    steps_used: int
    early_stopped: bool
    latency_micros: int
    graph_version: str
    warnings: list[str]


def _load_bundle(graph_path: str) -> GraphBundle:
    graph = load_binary(graph_path)
    key_to_id = read_id_map(id_map_path(graph_path))
    id_to_key = [""] * graph.node_count
    for key, i in key_to_id.items():
        id_to_key[i] = key
    return GraphBundle(os.path.basename(graph_path), graph, key_to_id,
                       id_to_key)


class RecommendService:
    """Owns the served graph handle and executes queries."""

    def __init__(self, config: ServerConfig):
        self.config = config
        self._bundle: GraphBundle | None = None
        self._walk_slots = threading.Semaphore(config.workers)
        self._request_ids = itertools.count()
        self._watcher: threading.Thread | None = None
        self._stop = threading.Event()
        self._failed: dict[str, float] = {}
        if not self.check_for_new_graph():
            raise PinwalkError(
                f"no loadable graph (*.pixg with .idmap) in {config.graph_dir}")

    @property
    def bundle(self) -> GraphBundle:
        return self._bundle

    # -- graph refresh --------------------------------------------------

    def _candidate_paths(self) -> list[str]:
        paths = sorted(glob.glob(os.path.join(self.config.graph_dir, "*.pixg")))
        return [p for p in paths if os.path.exists(id_map_path(p))]

    def check_for_new_graph(self) -> bool:
        """Load the newest eligible graph; current serving is untouched
        unless the new one loads and validates completely."""
        paths = self._candidate_paths()
        current = self._bundle.version if self._bundle else ""
        for path in reversed(paths):
            name = os.path.basename(path)
            if name == current:
                return False
            mtime = os.path.getmtime(path)
            if self._failed.get(name) == mtime:
                continue
            try:
                bundle = _load_bundle(path)
            except (PinwalkError, OSError, ValueError) as exc:
                log.warning("skipping graph %s: %s", name, exc)
                self._failed[name] = mtime
                continue
            self._bundle = bundle  # atomic handle swap
            log.info("serving graph %s (%d nodes, %d edge slots)",
                     name, bundle.graph.node_count, bundle.graph.edge_slots)
            return True
        return False

    def start_watcher(self) -> None:
        if self._watcher is not None:
            return
        self._stop.clear()

        def loop():
            while not self._stop.wait(self.config.poll_interval):
                try:
                    self.check_for_new_graph()
                except Exception:
                    log.exception("graph watcher iteration failed")

        self._watcher = threading.Thread(target=loop, name="graph-watcher",
                                         daemon=True)
        self._watcher.start()

    def stop_watcher(self) -> None:
        self._stop.set()
        if self._watcher is not None:
            self._watcher.join()
            self._watcher = None

    # -- query path ------------------------------------------------------

    def _effective_config(self, req: RecommendRequestModel) -> WalkConfig:
        cfg = replace(self.config.walk, top_k=req.top_k)
        if req.overrides is not None:
            updates = {k: v for k, v in req.overrides.model_dump().items()
                       if v is not None}
            cfg = replace(cfg, **updates)
        return cfg.validated()

    def recommend(self, req: RecommendRequestModel) -> RecommendOutcome:
        start = time.perf_counter()
        bundle = self._bundle  # pin the handle for the whole request
        graph = bundle.graph
        try:
            cfg = self._effective_config(req)
        except ConfigError as exc:
            raise HTTPException(400, detail=str(exc))

        def resolve(key: str) -> int | None:
            pin = bundle.key_to_id.get(key)
            if pin is None or pin >= graph.pin_count:
                return None
            if graph.degree(pin) == 0:
                return None
            return pin

        warnings: list[str] = []
        weights: dict[int, float] = {}
        if req.query:
            for entry in req.query:
                pin = resolve(entry.pin_key)
                if pin is None:
                    warnings.append(f"dropped unknown pin {entry.pin_key!r}")
                    continue
                weights[pin] = weights.get(pin, 0.0) + entry.weight
        if req.actions:
            try:
                action_weights, dropped = build_query_from_actions(
                    [UserAction(a.pin_key, a.action_type, a.age_seconds)
                     for a in req.actions],
                    self.config.action_weights,
                    self.config.half_life_seconds, resolve)
            except ConfigError as exc:
                raise HTTPException(400, detail=str(exc))
            except EmptyQueryError:
                action_weights, dropped = {}, [a.pin_key for a in req.actions]
            warnings.extend(f"dropped unknown pin {k!r}" for k in dropped)
            for pin, w in action_weights.items():
                weights[pin] = weights.get(pin, 0.0) + w
        if not weights:
            raise HTTPException(
                400, detail={"error": "no known query pin", "warnings": warnings})

        try:
            features = frozenset(int(name) for name in req.user_features)
        except ValueError:
            raise HTTPException(
                400, detail="userFeatures must be numeric attribute buckets")

        seed = req.seed if req.seed is not None else derive_seed(
            self.config.seed, next(self._request_ids))
        query = WeightedQuery(tuple(sorted(weights.items())), features)

        with self._walk_slots:
            result = pixie_random_walk_multiple(query, graph, cfg,
                                                RandomSource(seed))

        named = [(bundle.id_to_key[p], score) for p, score in result.items]
        named.sort(key=lambda kv: (-kv[1], kv[0]))
        latency = int((time.perf_counter() - start) * 1e6)
        return RecommendOutcome(
            results=named,
            steps_used=result.stats.steps_used,
            early_stopped=result.stats.early_stopped,
            latency_micros=latency,
            graph_version=bundle.version,
            warnings=warnings,
        )


# -- HTTP layer -------------------------------------------------------------

def create_app(service: RecommendService) -> FastAPI:
    @asynccontextmanager
    async def lifespan(_app):
        service.start_watcher()
        yield
        service.stop_watcher()

    app = FastAPI(title="pinwalk", version="0.1.0", lifespan=lifespan)

    @app.get("/v1/health")
    def health():
        bundle = service.bundle
        return {
            "status": "ok",
            "graphVersion": bundle.version,
            "nodes": bundle.graph.node_count,
            "edges": bundle.graph.edge_slots // 2,
        }

    @app.post("/v1/recommend")
    def recommend(req: RecommendRequestModel):
        from fastapi.responses import JSONResponse

        out = service.recommend(req)
        body = {
            "results": [{"pinKey": k, "score": s} for k, s in out.results],
            "stats": {
                "stepsUsed": out.steps_used,
                "earlyStopped": out.early_stopped,
                "graphVersion": out.graph_version,
            },
            "warnings": out.warnings,
        }
        return JSONResponse(body, headers={
            "X-Latency-Micros": str(out.latency_micros)})

    return app


def serve(config: ServerConfig) -> None:
    """Blocking entry point used by the CLI."""
    import uvicorn

    service = RecommendService(config)
    app = create_app(service)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
