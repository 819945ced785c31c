"""Command line entry point: ``agenttrust <command>``."""

from __future__ import annotations

import json
import sys
import urllib.error
import urllib.request
from pathlib import Path
from typing import Any

import click

from . import crypto
from .credential import issue_credential
from .crypto import SigningKey
from .identity import Did, create_did
from .interop import conformance_checksum, conformance_document, run_conformance_vectors, verify_drift
from .registry import Registry, load_config, load_key_file, verify_score_response, write_key_file
from .timeutil import utcnow
from .trust import sign_endorsement


def _emit(data: Any) -> None:
    click.echo(json.dumps(data, indent=2, sort_keys=True))


class RegistryClient:
    def __init__(self, base_url: str, timeout: float = 10.0) -> None:
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def request(self, method: str, path: str, body: Any = None) -> Any:
        data = crypto.canonicalize(body) if body is not None else None
        req = urllib.request.Request(self.base_url + path, data=data, method=method)
        if data is not None:
            req.add_header("Content-Type", "application/json")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return json.loads(resp.read())
        except urllib.error.HTTPError as exc:
            detail = exc.read().decode("utf-8", "replace")
            raise click.ClickException(f"{method} {path} -> {exc.code}: {detail}") from None
        except urllib.error.URLError as exc:
            raise click.ClickException(f"cannot reach {self.base_url}: {exc.reason}") from None

    def get(self, path: str) -> Any:
        return self.request("GET", path)

    def post(self, path: str, body: Any) -> Any:
        return self.request("POST", path, body)


def _identity(key_path: str):
    key = load_key_file(key_path)
    _, doc = create_did(key.verifying_key, now=utcnow())
    return key, doc


url_option = click.option("--url", default="http://127.0.0.1:8080", show_default=True, help="Registry base URL.")
key_option = click.option("--key", "key_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Key file from keygen.")


@click.group()
@click.version_option(package_name="artifact")
def main() -> None:
    """Agent identity, authorization and trust registry."""


@main.command()
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Where to write the key file.")
@click.option("--force", is_flag=True, help="Overwrite an existing file.")
def keygen(out: str, force: bool) -> None:
    """Generate an Ed25519 key file (mode 0600) and print its DID."""
    if Path(out).exists() and not force:
        raise click.ClickException(f"{out} exists; pass --force to overwrite")
    _emit(write_key_file(out, SigningKey.generate()))


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="YAML config file.")
@click.option("--host", help="Override the listen host.")
@click.option("--port", type=int, help="Override the listen port.")
def serve(config_path: str | None, host: str | None, port: int | None) -> None:
    """Run the registry HTTP service."""
    import uvicorn

    from .registry.app import create_app

    config = load_config(config_path)
    if host:
        config.host = host
    if port:
        config.port = port
    if not Path(config.operator_key_path).exists():
        raise click.ClickException(f"operator key {config.operator_key_path} not found; run keygen first")
    registry = Registry.from_config(config)
    click.echo(f"registry {registry.operator_did} listening on {config.host}:{config.port}", err=True)
    uvicorn.run(create_app(registry, config, ticker=True), host=config.host, port=config.port, log_level="info")


@main.command()
@url_option
@key_option
@click.option("--principal", help="Principal DID; defaults to the agent itself.")
@click.option("--vertical", "verticals", multiple=True, help="Declared vertical (repeatable).")
def register(url: str, key_path: str, principal: str | None, verticals: tuple[str, ...]) -> None:
    """Register the key's DID through the challenge flow."""
    client = RegistryClient(url)
    key, doc = _identity(key_path)
    challenge = client.post("/challenges", {"did": str(doc.id)})["challenge"]
    sig = crypto.sign(key, challenge.encode())
    body = {
        "didDocument": doc.to_dict(),
        "principal": principal or str(doc.id),
        "challenge": challenge,
        "signature": crypto.encode_signature(sig),
        "verticals": sorted(verticals),
    }
    _emit(client.post("/agents", body))


@main.command()
@key_option
@click.option("--subject", required=True, help="Subject DID.")
@click.option("--type", "vc_type", required=True, help="Credential type.")
@click.option("--claims", default="{}", show_default=True, help="Claims as a JSON object.")
@click.option("--ttl", default=86400, show_default=True, type=int, help="Lifetime in seconds.")
@click.option("--url", help="Also register the credential with this registry.")
def issue(key_path: str, subject: str, vc_type: str, claims: str, ttl: int, url: str | None) -> None:
    """Issue and sign a credential with the key's DID as issuer."""
    key, doc = _identity(key_path)
    claims_obj = crypto.parse_json(claims)
    if not isinstance(claims_obj, dict):
        raise click.BadParameter("claims must be a JSON object", param_hint="--claims")
    vc = issue_credential(key, doc, Did.parse(subject), vc_type, claims_obj, ttl, now=utcnow())
    if url:
        RegistryClient(url).post("/credentials", vc.to_dict())
    _emit(vc.to_dict())


@main.command()
@url_option
@key_option
@click.option("--subject", required=True, help="DID being endorsed.")
@click.option("--vertical", required=True, help="Vertical of the endorsement.")
def endorse(url: str, key_path: str, subject: str, vertical: str) -> None:
    """Sign an endorsement and submit it."""
    key, doc = _identity(key_path)
    e = sign_endorsement(key, doc.id, Did.parse(subject), vertical, utcnow(), doc.active_methods[0].key_id)
    _emit(RegistryClient(url).post("/endorsements", e.to_dict()))


@main.command()
@url_option
@click.argument("did")
@click.option("--no-verify", is_flag=True, help="Skip the signature check.")
def score(url: str, did: str, no_verify: bool) -> None:
    """Fetch a signed score and verify it against the operator DID document."""
    client = RegistryClient(url)
    resp = client.get(f"/agents/{did}/score")
    if not no_verify:
        operator = client.get("/.well-known/did.json")
        if not verify_score_response(resp, operator):
            _emit(resp)
            raise click.ClickException("score response signature does not verify")
    _emit(resp)


@main.group()
def audit() -> None:
    """Conformance vectors, drift detection and self-audit checks."""


@audit.command("vectors")
def audit_vectors() -> None:
    """Run the TV-001 to TV-005 behavior vectors."""
    report = run_conformance_vectors()
    _emit(report.to_dict())
    if not report.passed:
        sys.exit(1)


@audit.command("drift")
@click.option("--expected", required=True, help="Published SHA-256 hex digest.")
def audit_drift(expected: str) -> None:
    """Compare the generated conformance document against a published digest."""
    doc = conformance_document()
    ok = verify_drift(expected, doc)
    _emit({"expected": expected.lower(), "current": conformance_checksum(doc), "drift": not ok})
    if not ok:
        sys.exit(1)


@audit.command("checksum")
def audit_checksum() -> None:
    """Print the digest of the generated conformance document."""
    click.echo(conformance_checksum(conformance_document()))


@audit.command("checks")
@click.option("--url", help="Query a running registry instead of running locally.")
def audit_checks(url: str | None) -> None:
    """Run the in-scope self-audit checks."""
    if url:
        result = RegistryClient(url).get("/guard/audit/checks")
    else:
        from .registry.audit import run_audit

        result = run_audit(utcnow())
    _emit(result)
    if not result["passed"]:
        sys.exit(1)


@main.command()
@click.option("--data-dir", required=True, type=click.Path(exists=True, file_okay=False), help="Registry data directory.")
def replay(data_dir: str) -> None:
    """Replay the event log and print a digest of the resulting state."""
    registry = Registry(None, data_dir=data_dir)
    state = registry.canonical_state()
    _emit(
        {
            "entries": len(registry.log),
            "head": registry.log.head,
            "registryDid": str(registry.operator_did),
            "agents": len(registry.graph.agents),
            "stateDigest": crypto.digest(state).hex(),
        }
    )


if __name__ == "__main__":
    main()
