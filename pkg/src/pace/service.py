"""Trainer co-pilot HTTP service.

Exposes the engine for interactive use: debrief ingestion, next-batch
recommendations with rationale, trainer overrides, and alignment reporting.
All per-trainee state is event-sourced: the live engine is exactly the fold
of an append-only JSON-lines log over fresh priors, so any record can be
audited or rebuilt.

Requests for one trainee serialize through a per-trainee lock; different
trainees proceed concurrently. The service never sees simulator ground truth;
it works purely from submitted observations.
"""

from __future__ import annotations

import json
import re
import threading
import zlib
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Header, Request
from fastapi.responses import JSONResponse

from .belief import (
    ErrorType,
    Observation,
    Outcome,
    format_timestamp,
    parse_timestamp,
)
from .dynamics import decay_means, decay_risk_from_means
from .engine import CatalogRuntime, EngineParams, TraineeEngine
from .graph import ScenarioCatalog, SkillGraph
from .similarity import HashingEmbedder, IndexArrays, build_index

DEFAULT_ALIGNMENT_OVERLAP = 0.5
_ID_PATTERN = re.compile(r"^[A-Za-z0-9_.-]{1,64}$")


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, detail: str = ""):
        self.status = status
        self.code = code
        self.message = message
        self.detail = detail


@dataclass
class ServiceSettings:
    data_dir: Path
    batch_k: int = 5
    cold_start: int = 15
    n_sessions: int = 50
    alignment_overlap: float = DEFAULT_ALIGNMENT_OVERLAP
    engine: EngineParams = field(default_factory=lambda: EngineParams(
        keep_observation_log=True))


class TraineeRuntime:
    """Live engine plus the bookkeeping an event fold reconstructs."""

    def __init__(self, trainee_id: str, created_at: str, hub: "CopilotHub"):
        self.id = trainee_id
        self.created_at = created_at
        self.engine = TraineeEngine(
            hub.graph, hub.runtime, hub.settings.engine,
            index_arrays=hub.index_arrays,
            training_ids=list(hub.runtime.ids),
        )
        self.lock = threading.RLock()
        self.n_events = 0
        self.idempotency_keys: set[str] = set()
        self.recommendations: dict[str, dict] = {}
        self.decisions: list[dict] = []
        self.sessions_seen: set[int] = set()
        self.rec_counter = 0
        self.last_reward: float | None = None


class CopilotHub:
    """Shared immutable fixtures plus the trainee registry."""

    def __init__(self, graph: SkillGraph, catalog: ScenarioCatalog,
                 settings: ServiceSettings):
        self.graph = graph
        self.catalog = catalog
        self.runtime = CatalogRuntime(graph, catalog)
        embeddings = HashingEmbedder().vectors_for(graph)
        self.index_arrays = IndexArrays(build_index(graph, embeddings), graph)
        self.settings = settings
        self.trainees: dict[str, TraineeRuntime] = {}
        self.registry_lock = threading.Lock()
        settings.data_dir.mkdir(parents=True, exist_ok=True)
        self._restore()

    # -- event persistence ---------------------------------------------------

    def log_path(self, trainee_id: str) -> Path:
        return self.settings.data_dir / f"{trainee_id}.events.jsonl"

    def read_events(self, trainee_id: str) -> list[dict]:
        path = self.log_path(trainee_id)
        if not path.exists():
            return []
        events = []
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                events.append(json.loads(line))
        return events

    def _append_event(self, runtime: TraineeRuntime, event: dict) -> None:
        with open(self.log_path(runtime.id), "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    def _restore(self) -> None:
        for path in sorted(self.settings.data_dir.glob("*.events.jsonl")):
            trainee_id = path.name[: -len(".events.jsonl")]
            runtime = self.fold_events(self.read_events(trainee_id))
            if runtime is not None:
                self.trainees[trainee_id] = runtime

    # -- event application ---------------------------------------------------

    def apply_event(self, runtime: TraineeRuntime | None,
                    event: dict) -> TraineeRuntime:
        kind = event["type"]
        payload = event["payload"]
        if kind == "created":
            runtime = TraineeRuntime(payload["trainee_id"], event["at"], self)
        elif runtime is None:
            raise ApiError(500, "corrupt_log", "event before creation")
        elif kind == "debrief":
            observations = [_observation_from_api(rec, payload["timestamp"])
                            for rec in payload["observations"]]
            now = parse_timestamp(payload["timestamp"])
            reward = runtime.engine.apply_debrief(
                payload["scenario"], observations, now,
                int(payload["session"]),
            )
            runtime.last_reward = reward
            runtime.sessions_seen.add(int(payload["session"]))
            if payload.get("idempotency_key"):
                runtime.idempotency_keys.add(payload["idempotency_key"])
        elif kind == "recommendation":
            runtime.rec_counter += 1
            batch = self._select_batch(runtime, int(payload["k"]))
            if payload.get("batch") and payload["batch"] != [b["scenario"] for b in batch]:
                raise ApiError(500, "corrupt_log",
                               "recommendation replay mismatch",
                               detail=payload["rec_id"])
            runtime.recommendations[payload["rec_id"]] = {
                "rec_id": payload["rec_id"],
                "batch": [b["scenario"] for b in batch],
                "detail": batch,
                "advisory": len(runtime.sessions_seen) < self.settings.cold_start,
                "generated_at": event["at"],
            }
        elif kind == "assignment":
            rec = runtime.recommendations[payload["recommendation_id"]]
            chosen = list(payload["chosen"])
            overlap = len(set(chosen) & set(rec["batch"]))
            share = overlap / len(chosen) if chosen else 0.0
            runtime.decisions.append({
                "recommendation_id": payload["recommendation_id"],
                "recommended": rec["batch"],
                "chosen": chosen,
                "overlap": overlap,
                "aligned": share >= self.settings.alignment_overlap,
            })
        else:
            raise ApiError(500, "corrupt_log", f"unknown event type {kind!r}")
        runtime.n_events += 1
        return runtime

    def fold_events(self, events: list[dict]) -> TraineeRuntime | None:
        runtime: TraineeRuntime | None = None
        for event in events:
            runtime = self.apply_event(runtime, event)
        return runtime

    def record(self, runtime: TraineeRuntime | None, kind: str,
               payload: dict) -> TraineeRuntime:
        offset = runtime.n_events if runtime else 0
        event = {
            "offset": offset,
            "type": kind,
            "at": datetime.now(timezone.utc).isoformat(),
            "payload": payload,
        }
        runtime = self.apply_event(runtime, event)
        self._append_event(runtime, event)
        return runtime

    # -- selection ------------------------------------------------------------

    def _select_batch(self, runtime: TraineeRuntime, k: int) -> list[dict]:
        """Deterministic per (trainee, counter): reproducible for audit."""
        seed = zlib.crc32(f"{runtime.id}:{runtime.rec_counter}".encode())
        runtime.engine.rng = np.random.default_rng(seed)
        engine = runtime.engine
        engine.begin_session(len(runtime.sessions_seen) + 1,
                             engine.now)
        selection, _fallback = engine.select_batch(k)
        p = self.settings.engine
        means = engine.decayed_view_means()
        anchors = engine.view_anchors()
        later = decay_means(means, anchors, engine.now + p.decay_horizon_hours,
                            engine.tracker.psi_hat, p.kappa)
        at_risk = (means >= p.mastery_threshold) & (later < p.mastery_threshold)
        batch = []
        for pos, (sid, _score, explore) in enumerate(selection.picks):
            x = selection.context_snapshots[pos]
            arm_idx = engine._arm_pos[sid]
            nodes = engine.runtime.nodes_for(sid)
            weak = [
                {"node": self.graph.assessable_ids[i],
                 "mean": round(float(means[i]), 4)}
                for i in nodes if means[i] < p.weak_threshold
            ]
            weak.sort(key=lambda r: r["mean"])
            risky = [
                {"node": self.graph.assessable_ids[i],
                 "forecast": round(float(later[i]), 4)}
                for i in nodes if at_risk[i]
            ]
            batch.append({
                "scenario": sid,
                "expected_gain": round(float(engine.arms.means[arm_idx] @ x), 6),
                "explore": bool(explore),
                "targeted_weak_skills": weak[:12],
                "decay_risk_skills": risky[:12],
                "context": [round(float(v), 6) for v in x],
            })
        return batch

    # -- verification -----------------------------------------------------------

    def verify(self, trainee_id: str) -> dict:
        """Rebuild from the log and compare against the live state."""
        live = self.trainees[trainee_id]
        events = self.read_events(trainee_id)
        result = {
            "trainee": trainee_id,
            "events_on_disk": len(events),
            "events_live": live.n_events,
            "consistent": True,
            "first_divergence": None,
        }
        if len(events) != live.n_events:
            result["consistent"] = False
            result["first_divergence"] = min(len(events), live.n_events)
            return result
        rebuilt = self.fold_events(events)
        live_engine, new_engine = live.engine, rebuilt.engine
        checks = [
            np.allclose(live_engine.state.alpha, new_engine.state.alpha, atol=1e-9),
            np.allclose(live_engine.state.beta, new_engine.state.beta, atol=1e-9),
            np.allclose(np.nan_to_num(live_engine.state.last_practiced, nan=-1),
                        np.nan_to_num(new_engine.state.last_practiced, nan=-1),
                        atol=1e-9),
            np.allclose(live_engine.arms.means, new_engine.arms.means, atol=1e-9),
            np.allclose(live_engine.arms.covs, new_engine.arms.covs, atol=1e-9),
            abs(live_engine.tracker.lambda_hat - new_engine.tracker.lambda_hat) < 1e-9,
            abs(live_engine.tracker.psi_hat - new_engine.tracker.psi_hat) < 1e-9,
            len(rebuilt.decisions) == len(live.decisions),
        ]
        if not all(checks):
            result["consistent"] = False
            result["first_divergence"] = len(events)
        return result


def _observation_from_api(rec: dict, default_ts: str) -> Observation:
    try:
        outcome = Outcome(rec["outcome"])
    except (KeyError, ValueError) as exc:
        raise ApiError(422, "bad_observation", f"bad outcome in {rec!r}",
                       detail=str(exc)) from exc
    error = rec.get("error_type")
    try:
        return Observation(
            node=rec["node"],
            outcome=outcome,
            error_type=ErrorType(error) if error else None,
            prompted=bool(rec.get("prompted", False)),
            timestamp=parse_timestamp(rec.get("timestamp", default_ts)),
        )
    except (KeyError, ValueError) as exc:
        raise ApiError(422, "bad_observation", str(exc)) from exc


def _belief_payload(hub: CopilotHub, runtime: TraineeRuntime) -> dict:
    engine = runtime.engine
    p = hub.settings.engine
    summary = engine.state.summary(p.mastery_threshold, p.weak_threshold)
    means = engine.state.means()
    variances = engine.state.variances()
    operative = engine.decayed_view_means()
    nodes = []
    for i, nid in enumerate(engine.state.node_ids):
        lp = engine.state.last_practiced[i]
        nodes.append({
            "node": nid,
            "alpha": round(float(engine.state.alpha[i]), 6),
            "beta": round(float(engine.state.beta[i]), 6),
            "mean": round(float(means[i]), 6),
            "operative_mean": round(float(operative[i]), 6),
            "variance": round(float(variances[i]), 6),
            "last_practiced": None if np.isnan(lp) else format_timestamp(float(lp)),
            "incident_types": sorted(hub.graph.nodes[nid].incident_types),
        })
    return {
        "trainee": runtime.id,
        "summary": {
            "mean_variance": round(summary.mean_variance, 6),
            "coverage": round(summary.coverage, 6),
            "weak_mean": round(summary.weak_mean, 6),
            "n_nodes": len(nodes),
            "sessions_seen": len(runtime.sessions_seen),
        },
        "nodes": nodes,
    }


def _dynamics_payload(hub: CopilotHub, runtime: TraineeRuntime) -> dict:
    engine = runtime.engine
    p = hub.settings.engine
    est = engine.dynamics().to_dict()
    means = engine.decayed_view_means()
    d = decay_risk_from_means(
        engine.view_means(), engine.view_anchors(), engine.now,
        engine.tracker.psi_hat, p.kappa, p.mastery_threshold,
        p.decay_horizon_hours,
    )
    est["decay_risk_count"] = int(d)
    est["coverage"] = round(float((means >= p.mastery_threshold).mean()), 6)
    return est


def create_app(graph: SkillGraph, catalog: ScenarioCatalog,
               settings: ServiceSettings) -> FastAPI:
    hub = CopilotHub(graph, catalog, settings)
    app = FastAPI(title="pace-copilot", version="0.1.0")
    app.state.hub = hub

    @app.exception_handler(ApiError)
    async def handle_api_error(_req: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status,
            content={"code": exc.code, "message": exc.message,
                     "detail": exc.detail},
        )

    def get_trainee(trainee_id: str) -> TraineeRuntime:
        runtime = hub.trainees.get(trainee_id)
        if runtime is None:
            raise ApiError(404, "unknown_trainee",
                           f"trainee {trainee_id!r} not found")
        return runtime

    @app.post("/trainees", status_code=201)
    def create_trainee(body: dict):
        trainee_id = str(body.get("id") or f"trainee-{len(hub.trainees):04d}")
        if not _ID_PATTERN.match(trainee_id):
            raise ApiError(400, "bad_id", f"illegal trainee id {trainee_id!r}")
        graph_ref = body.get("graph", "default")
        if graph_ref != "default":
            raise ApiError(400, "unknown_graph",
                           f"graph {graph_ref!r} is not registered")
        with hub.registry_lock:
            if trainee_id in hub.trainees:
                raise ApiError(409, "duplicate_trainee",
                               f"trainee {trainee_id!r} already exists")
            runtime = hub.record(None, "created", {"trainee_id": trainee_id})
            hub.trainees[trainee_id] = runtime
        summary = runtime.engine.state.summary()
        return {
            "id": trainee_id,
            "created_at": runtime.created_at,
            "n_nodes": len(runtime.engine.state.node_ids),
            "mean_belief": round(float(runtime.engine.state.means().mean()), 6),
            "coverage": round(summary.coverage, 6),
        }

    @app.get("/trainees")
    def roster():
        out = []
        for trainee_id in sorted(hub.trainees):
            runtime = hub.trainees[trainee_id]
            with runtime.lock:
                dyn = _dynamics_payload(hub, runtime)
                out.append({
                    "id": trainee_id,
                    "sessions_seen": len(runtime.sessions_seen),
                    "coverage": dyn["coverage"],
                    "lambda_hat": dyn["lambda_hat"],
                    "psi_hat": dyn["psi_hat"],
                    "decay_risk_count": dyn["decay_risk_count"],
                })
        return {"trainees": out}

    @app.get("/trainees/{trainee_id}/beliefs")
    def beliefs(trainee_id: str):
        runtime = get_trainee(trainee_id)
        with runtime.lock:
            return _belief_payload(hub, runtime)

    @app.get("/trainees/{trainee_id}/dynamics")
    def dynamics(trainee_id: str):
        runtime = get_trainee(trainee_id)
        with runtime.lock:
            return _dynamics_payload(hub, runtime)

    @app.post("/trainees/{trainee_id}/debriefs")
    def ingest_debrief(trainee_id: str, body: dict,
                       idempotency_key: str | None = Header(default=None)):
        runtime = get_trainee(trainee_id)
        for field_name in ("session", "scenario", "observations", "timestamp"):
            if field_name not in body:
                raise ApiError(400, "bad_request",
                               f"missing field {field_name!r}")
        try:
            scenario = hub.catalog.by_id(body["scenario"])
        except KeyError:
            raise ApiError(404, "unknown_scenario",
                           f"scenario {body['scenario']!r} not in catalog")
        key = idempotency_key or f"sha:{zlib.crc32(json.dumps(body, sort_keys=True).encode()):08x}"
        active = hub.graph.activated_subgraph(scenario)
        for rec in body["observations"]:
            node = rec.get("node")
            if node not in hub.graph.node_index:
                raise ApiError(422, "unknown_node",
                               f"observation names unknown node {node!r}")
            if rec.get("outcome") != Outcome.NOT_APPLICABLE.value and node not in active:
                raise ApiError(
                    422, "node_outside_subgraph",
                    f"node {node!r} is not activated by scenario "
                    f"{scenario.id!r}", detail=node)
        with runtime.lock:
            if key in runtime.idempotency_keys:
                raise ApiError(409, "duplicate_debrief",
                               "idempotency key already ingested", detail=key)
            payload = {
                "session": int(body["session"]),
                "scenario": scenario.id,
                "timestamp": body["timestamp"],
                "observations": body["observations"],
                "idempotency_key": key,
            }
            hub.record(runtime, "debrief", payload)
            dyn = _dynamics_payload(hub, runtime)
            summary = runtime.engine.state.summary()
            return {
                "ingested": len(body["observations"]),
                "reward": round(runtime.last_reward or 0.0, 6),
                "summary": {
                    "coverage": round(summary.coverage, 6),
                    "mean_variance": round(summary.mean_variance, 6),
                    "weak_mean": round(summary.weak_mean, 6),
                },
                "dynamics": dyn,
            }

    @app.get("/trainees/{trainee_id}/recommendations")
    def recommend(trainee_id: str, k: int = 5):
        if len(hub.catalog) == 0:
            raise ApiError(503, "empty_catalog", "no scenarios registered")
        runtime = get_trainee(trainee_id)
        with runtime.lock:
            rec_id = f"rec-{runtime.id}-{runtime.rec_counter:05d}"
            hub.record(runtime, "recommendation",
                       {"rec_id": rec_id, "k": int(k), "batch": None})
            rec = runtime.recommendations[rec_id]
            return {
                "recommendation_id": rec_id,
                "advisory": rec["advisory"],
                "generated_at": rec["generated_at"],
                "batch": rec["detail"],
            }

    @app.post("/trainees/{trainee_id}/assignments")
    def record_assignment(trainee_id: str, body: dict):
        runtime = get_trainee(trainee_id)
        rec_id = body.get("recommendation_id")
        with runtime.lock:
            if rec_id not in runtime.recommendations:
                raise ApiError(404, "unknown_recommendation",
                               f"recommendation {rec_id!r} not found")
            hub.record(runtime, "assignment", {
                "recommendation_id": rec_id,
                "chosen": list(body.get("chosen", [])),
            })
            decision = runtime.decisions[-1]
            return {
                "aligned": decision["aligned"],
                "overlap": decision["overlap"],
                "decision_index": len(runtime.decisions) - 1,
            }

    @app.get("/trainees/{trainee_id}/alignment")
    def alignment(trainee_id: str):
        runtime = get_trainee(trainee_id)
        with runtime.lock:
            n = len(runtime.decisions)
            aligned = sum(1 for d in runtime.decisions if d["aligned"])
            return {
                "n_decisions": n,
                "n_aligned": aligned,
                "alignment_rate": (aligned / n) if n else 0.0,
                "decisions": runtime.decisions,
            }

    @app.get("/trainees/{trainee_id}/verify")
    def verify(trainee_id: str):
        runtime = get_trainee(trainee_id)
        with runtime.lock:
            return hub.verify(trainee_id)

    @app.get("/graph")
    def get_graph():
        return hub.graph.to_dict()

    @app.get("/catalog")
    def get_catalog():
        doc = hub.catalog.to_dict()
        sizes = {sid: int(hub.runtime.sizes[hub.runtime.id_to_pos[sid]])
                 for sid in hub.runtime.ids}
        for record in doc["scenarios"]:
            record["n_activated"] = sizes[record["id"]]
            record["activated"] = [
                hub.graph.assessable_ids[i]
                for i in hub.runtime.nodes_for(record["id"])
            ]
        return doc

    return app
