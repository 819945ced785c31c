"""HTTP surface of the registry (FastAPI)."""

from __future__ import annotations

import asyncio
import contextlib
import json
from typing import Any

from fastapi import FastAPI, Request
from fastapi.concurrency import run_in_threadpool
from fastapi.responses import JSONResponse

from .. import __version__, crypto, errors
from ..interop.kernel import parse_kernel_event
from ..timeutil import format_ts
from .config import RegistryConfig
from .service import Registry

# most specific first; the first isinstance match wins
_STATUS: tuple[tuple[type[Exception], int], ...] = (
    (errors.NotFound, 404),
    (errors.UnknownAgent, 404),
    (errors.UnknownCredential, 404),
    (errors.UnknownPrincipal, 404),
    (errors.NotInBatch, 404),
    (errors.DuplicateDid, 409),
    (errors.AlreadyRevoked, 409),
    (errors.BadProofOfControl, 401),
    (errors.BadEventSignature, 401),
    (errors.UnauthorizedRotation, 403),
    (errors.NotIssuer, 403),
    (errors.PrincipalMismatch, 403),
    (errors.BackendUnavailable, 503),
    (errors.RevocationUnavailable, 503),
    (errors.DelegationError, 422),
    (errors.InvalidRecord, 422),
    (errors.InvalidEndorsement, 422),
)


def status_for(exc: Exception) -> int:
    for cls, status in _STATUS:
        if isinstance(exc, cls):
            return status
    return 400


def _error(exc: Exception) -> JSONResponse:
    return JSONResponse({"error": type(exc).__name__, "detail": str(exc)}, status_code=status_for(exc))


def create_app(registry: Registry, config: RegistryConfig | None = None, *, ticker: bool = False) -> FastAPI:
    config = config or RegistryConfig()
    allowed_hosts = set(config.guard_allowed_hosts)

    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        task = None
        if ticker:
            task = asyncio.create_task(_tick_forever(registry, min(config.batch_interval_seconds, 30)))
        try:
            yield
        finally:
            if task is not None:
                task.cancel()

    app = FastAPI(title="agenttrust registry", version=__version__, lifespan=lifespan)
    app.state.registry = registry

    @app.exception_handler(errors.ProtocolError)
    async def _protocol(request: Request, exc: errors.ProtocolError):
        return _error(exc)

    @app.exception_handler(ValueError)
    async def _value(request: Request, exc: ValueError):
        return _error(exc)

    @app.exception_handler(KeyError)
    async def _key(request: Request, exc: KeyError):
        return JSONResponse({"error": "MissingField", "detail": f"missing field {exc}"}, status_code=400)

    @app.exception_handler(TypeError)
    async def _type(request: Request, exc: TypeError):
        return JSONResponse({"error": "MalformedBody", "detail": str(exc)}, status_code=400)

    async def raw_body(request: Request) -> bytes:
        body = await request.body()
        if len(body) > config.max_body_bytes:
            raise ValueError(f"body exceeds {config.max_body_bytes} bytes")
        return body

    async def json_body(request: Request) -> dict[str, Any]:
        data = crypto.parse_json(await raw_body(request))
        if not isinstance(data, dict):
            raise TypeError("body must be a JSON object")
        return data

    def guard_only(request: Request) -> JSONResponse | None:
        host = request.client.host if request.client else None
        if host not in allowed_hosts:
            return JSONResponse({"error": "Forbidden", "detail": f"{host} may not use guard endpoints"}, status_code=403)
        return None

    # -- identity ----------------------------------------------------------

    @app.post("/challenges")
    async def challenges(request: Request):
        body = await json_body(request)
        return registry.issue_challenge(body["did"])

    @app.post("/agents", status_code=201)
    async def register(request: Request):
        b = await json_body(request)
        rec = await run_in_threadpool(
            registry.register_agent,
            b["didDocument"],
            b["principal"],
            b["challenge"],
            crypto.decode_signature(b["signature"]),
            verticals=b.get("verticals", ()),
            seed=b.get("seed"),
        )
        return rec.to_dict()

    @app.get("/agents/{did}")
    def get_agent(did: str):
        return {"agent": registry.agent(did).to_dict(), "didDocument": registry.resolve(did).to_dict()}

    @app.post("/agents/{did}/rotate")
    async def rotate(did: str, request: Request):
        b = await json_body(request)
        if b.get("did") != did:
            raise ValueError("rotation record names a different DID")
        return (await run_in_threadpool(registry.rotate_key, b)).to_dict()

    @app.get("/dids/{did}")
    def resolve(did: str):
        return registry.resolve(did).to_dict()

    @app.get("/.well-known/did.json")
    def operator_document():
        return registry.operator_doc.to_dict()

    # -- trust --------------------------------------------------------------

    @app.post("/endorsements", status_code=201)
    async def endorse(request: Request):
        b = await json_body(request)
        return (await run_in_threadpool(registry.add_endorsement, b)).to_dict()

    @app.get("/agents/{did}/score")
    def score(did: str):
        return registry.score_response(did)

    @app.get("/swarm/stats")
    def swarm_stats():
        return registry.swarm_stats()

    # -- interaction proofs ---------------------------------------------------

    @app.post("/iprs", status_code=201)
    async def submit_ipr(request: Request):
        b = await json_body(request)
        rec = await run_in_threadpool(registry.submit_ipr, b)
        return {**rec.to_dict(), "completed": rec.completed}

    @app.get("/iprs/{record_id}")
    def get_ipr(record_id: str):
        return registry.ipr(record_id).to_dict()

    @app.get("/iprs/{record_id}/proof")
    def ipr_proof(record_id: str):
        return registry.inclusion(record_id)

    @app.get("/batches")
    def batches():
        receipts = {r.batch_root: r for r in registry.receipts}
        return [
            {
                "root": b.root.hex(),
                "size": len(b.leaves),
                "builtAt": format_ts(b.built_at),
                "receipt": receipts[b.root].to_dict() if b.root in receipts else None,
            }
            for b in registry.batches
        ]

    @app.post("/batches/tick")
    async def tick(request: Request):
        denied = guard_only(request)
        if denied:
            return denied
        receipts = await run_in_threadpool(registry.tick)
        return {"anchored": [r.to_dict() for r in receipts], "pending": len(registry.pending)}

    # -- credentials ------------------------------------------------------------

    @app.post("/credentials", status_code=201)
    async def register_credential(request: Request):
        b = await json_body(request)
        vc = await run_in_threadpool(registry.register_credential, b)
        return {"id": vc.id, "statusIndex": registry.credentials.status_indices[vc.id]}

    @app.post("/credentials/verify")
    async def verify(request: Request):
        b = await json_body(request)
        result = await run_in_threadpool(registry.verify_credential, b.get("credential", b.get("id")))
        return {"status": result.status.value, "valid": result.valid, "checkedAt": format_ts(result.checked_at)}

    @app.post("/credentials/revoke")
    async def revoke(request: Request):
        b = await json_body(request)
        return (await run_in_threadpool(registry.revoke_credential, b)).to_dict()

    @app.get("/credentials/{credential_id}/status")
    def credential_status(credential_id: str):
        return registry.credential_status(credential_id)

    @app.get("/status-lists/{issuer}")
    def status_list(issuer: str):
        return registry.status_list(issuer)

    # -- authorization and violations -----------------------------------------------

    @app.post("/aae/authorize")
    async def authorize(request: Request):
        b = await json_body(request)
        chain = b["chain"] if "chain" in b else [b["envelope"]]
        decision = await run_in_threadpool(registry.authorize, chain, b["request"])
        return decision.to_dict()

    @app.post("/violations", status_code=201)
    async def report_violation(request: Request):
        b = await json_body(request)
        return (await run_in_threadpool(registry.report_violation, b)).to_dict()

    @app.get("/violations")
    def violations(principal: str | None = None, agent: str | None = None):
        return [v.to_dict() for v in registry.violations_for(principal=principal, agent=agent)]

    # -- guard --------------------------------------------------------------------

    @app.post("/guard/events")
    async def guard_events(request: Request):
        denied = guard_only(request)
        if denied:
            return denied
        text = (await raw_body(request)).decode("utf-8")
        stored, rejected = [], []
        for n, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                event = parse_kernel_event(json.loads(line))
                record = await run_in_threadpool(registry.record_kernel_event, event)
                stored.append({"line": n, "violationId": record.id, "idempotencyKey": event.idempotency_key})
            except (ValueError, errors.ProtocolError) as exc:
                rejected.append({"line": n, "error": type(exc).__name__, "detail": str(exc)})
        return JSONResponse({"stored": stored, "rejected": rejected}, status_code=200 if not rejected else 207)

    @app.get("/guard/audit/checks")
    def audit_checks():
        return registry.audit_checks(config.max_body_bytes)

    @app.get("/version")
    def version():
        return {"version": __version__, "registryDid": str(registry.operator_did), "logHead": registry.log.head, "logLength": len(registry.log)}

    return app


async def _tick_forever(registry: Registry, every: float) -> None:
    while True:
        await asyncio.sleep(every)
        try:
            await run_in_threadpool(registry.tick)
        except errors.BackendUnavailable:
            pass  # batches stay pending and are retried next round
