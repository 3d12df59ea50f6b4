"""REST API server.

Route map (22 endpoints):

    POST   /access/signup             create account
    POST   /access/token              login, returns access + refresh token
    POST   /access/refresh-token      trade refresh token for new access token
    GET    /access/list-users         list accounts (user management scope)
    GET    /access/list-roles         list roles and their permission scopes
    PUT    /access/change-password    set a password (self, or full scope)
    PUT    /access/change-roles       replace a role set (full scope)
    DELETE /access/delete-user        remove account plus its private data
    POST   /benchmarks/create         store benchmark (409 on visible duplicate)
    GET    /benchmarks/list           headers of visible benchmarks, filterable
    GET    /benchmarks/load           full benchmark by id
    PUT    /benchmarks/publish        make benchmark public
    DELETE /benchmarks/delete         delete benchmark (cascades own episodes)
    POST   /artifacts/upload          multipart upload, idempotent per (bytes, owner)
    GET    /artifacts/list            metadata of visible artifacts, filterable
    GET    /artifacts/download        raw blob bytes by id
    PUT    /artifacts/publish         make artifact public
    DELETE /artifacts/delete          delete artifact
    POST   /episodes/record           store episode against a visible benchmark
    GET    /episodes/list             two-stage filtered episode listing
    PUT    /episodes/publish          make episode public (benchmark must be public)
    DELETE /episodes/delete           delete episode

Conventions: errors are JSON ``{status, code, detail}``; missing or expired
credentials give 401; denied user-management actions give 403; content
objects that are unknown, invisible, or forbidden all give 404 so that
existence is never leaked; duplicates and ordering conflicts give 409;
oversized bodies give 413. Filters arrive as URL-encoded JSON in query
parameters. Object ids are query parameters as well, keeping every path
static.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Any, Callable

from fastapi import Depends, FastAPI, File, Form, Request, Response, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .auth import (
    ACTION_CREATE,
    ACTION_DELETE,
    PERMISSIONS,
    AccessPolicy,
    AccountService,
    PBKDF2_ITERATIONS,
    Principal,
    ROLE_STANDARD,
    TokenAuthority,
    authorize,
    viewer_for,
)
from .errors import (
    NotFound,
    PayloadTooLarge,
    ServiceError,
    Unauthorized,
    ValidationFailed,
)
from .filters import FilterNode, filter_from_json
from .models import BenchmarkQuery, RLTuple
from .storage import OnDiskStore

DEFAULT_MAX_BODY_BYTES = 64 * 1024 * 1024


def _env_flag(name: str, default: bool = False) -> bool:
    raw = os.environ.get(name)
    if raw is None:
        return default
    return raw.strip().lower() in ("1", "true", "yes", "on")


@dataclass(frozen=True)
class ServerConfig:
    """Process configuration, read from the environment in deployments."""

    storage_root: str = "./tupli-data"
    api_secret: str = "change-me"
    admin_username: str = "admin"
    admin_password: str = "admin"
    open_access: bool = False
    open_signup: bool = False
    listen_addr: str = "127.0.0.1:8000"
    max_body_bytes: int = DEFAULT_MAX_BODY_BYTES

    @classmethod
    def from_env(cls) -> "ServerConfig":
        return cls(
            storage_root=os.environ.get("STORAGE_ROOT", "./tupli-data"),
            api_secret=os.environ.get("API_SECRET", "change-me"),
            admin_username=os.environ.get("ADMIN_USERNAME", "admin"),
            admin_password=os.environ.get("ADMIN_PASSWORD", "admin"),
            open_access=_env_flag("OPEN_ACCESS_MODE"),
            open_signup=_env_flag("OPEN_SIGNUP_MODE"),
            listen_addr=os.environ.get("LISTEN_ADDR", "127.0.0.1:8000"),
            max_body_bytes=int(
                os.environ.get("MAX_BODY_BYTES", DEFAULT_MAX_BODY_BYTES)
            ),
        )

    def split_listen(self) -> tuple[str, int]:
        host, _, port = self.listen_addr.rpartition(":")
        return host or "127.0.0.1", int(port)


# -- request bodies ------------------------------------------------------------

class SignupRequest(BaseModel):
    username: str
    password: str
    roles: list[str] | None = None


class LoginRequest(BaseModel):
    username: str
    password: str


class RefreshRequest(BaseModel):
    refresh_token: str


class ChangePasswordRequest(BaseModel):
    new_password: str
    username: str | None = None


class ChangeRolesRequest(BaseModel):
    username: str
    roles: list[str]


class BenchmarkCreateRequest(BaseModel):
    hash: str
    serialized: str
    metadata: dict[str, Any]


class EpisodeRecordRequest(BaseModel):
    benchmark_id: str
    tuples: list[dict[str, Any]]
    metadata: dict[str, Any] = {}


def create_app(
    config: ServerConfig | None = None,
    *,
    store: OnDiskStore | None = None,
    now: Callable[[], int] | None = None,
    pbkdf2_iterations: int = PBKDF2_ITERATIONS,
) -> FastAPI:
    """Build the application around a store and an account service.

    ``now`` overrides the token clock (unix seconds) and
    ``pbkdf2_iterations`` lowers the password work factor, both for tests.
    """
    config = config or ServerConfig()
    store = store or OnDiskStore(config.storage_root)
    tokens = TokenAuthority(config.api_secret, now=now)
    accounts = AccountService(
        store=store,
        tokens=tokens,
        policy=AccessPolicy(
            open_access=config.open_access, open_signup=config.open_signup
        ),
        pbkdf2_iterations=pbkdf2_iterations,
    )
    accounts.bootstrap_admin(config.admin_username, config.admin_password)

    app = FastAPI(title="tupli", version="0.1.0", docs_url=None, redoc_url=None)
    app.state.store = store
    app.state.accounts = accounts
    app.state.config = config

    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_credentials=False,
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.middleware("http")
    async def limit_body_size(request: Request, call_next):
        declared = request.headers.get("content-length")
        if declared is not None and declared.isdigit():
            if int(declared) > config.max_body_bytes:
                err = PayloadTooLarge(
                    f"request body exceeds {config.max_body_bytes} bytes"
                )
                return JSONResponse(status_code=err.status, content=err.to_dict())
        return await call_next(request)

    @app.exception_handler(ServiceError)
    async def service_error_handler(request: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status, content=exc.to_dict())

    @app.exception_handler(RequestValidationError)
    async def validation_error_handler(request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        where = ".".join(str(p) for p in first.get("loc", ()))
        err = ValidationFailed(f"{where}: {first.get('msg', 'invalid request')}")
        return JSONResponse(status_code=err.status, content=err.to_dict())

    # -- auth plumbing ---------------------------------------------------------

    def principal_from_request(request: Request) -> Principal | None:
        header = request.headers.get("authorization")
        if header is None:
            return None
        scheme, _, token = header.partition(" ")
        if scheme.lower() != "bearer" or not token.strip():
            raise Unauthorized("malformed authorization header")
        return accounts.authenticate(token.strip())

    def require_user(principal: Principal | None) -> Principal:
        if principal is None:
            raise Unauthorized("authentication required")
        return principal

    def require_reader(principal: Principal | None) -> None:
        # Anonymous reads are allowed only in open-access deployments.
        if principal is None and not config.open_access:
            raise Unauthorized("authentication required")

    def parse_filter(raw: str | None) -> FilterNode | None:
        return None if raw is None else filter_from_json(raw)

    def check_content(
        principal: Principal, action: str, obj: Any, label: str
    ) -> None:
        # A denied content operation is indistinguishable from a missing id.
        allowed = authorize(
            principal,
            action,
            owner=obj.created_by,
            is_public=obj.is_public,
            open_access=config.open_access,
        )
        if not allowed:
            raise NotFound(f"{label} {obj.id} not found")

    Auth = Depends(principal_from_request)

    # -- access ----------------------------------------------------------------

    @app.post("/access/signup", status_code=201)
    def access_signup(body: SignupRequest, principal: Principal | None = Auth):
        roles = tuple(body.roles) if body.roles else (ROLE_STANDARD,)
        record = accounts.signup(
            body.username, body.password, roles=roles, actor=principal
        )
        return record.public_dict()

    @app.post("/access/token")
    def access_token(body: LoginRequest):
        access, refresh = accounts.login(body.username, body.password)
        return {
            "access_token": access,
            "refresh_token": refresh,
            "token_type": "bearer",
        }

    @app.post("/access/refresh-token")
    def access_refresh(body: RefreshRequest):
        return {
            "access_token": accounts.refresh(body.refresh_token),
            "token_type": "bearer",
        }

    @app.get("/access/list-users")
    def access_list_users(principal: Principal | None = Auth):
        actor = require_user(principal)
        return [u.public_dict() for u in accounts.list_users(actor)]

    @app.get("/access/list-roles")
    def access_list_roles(principal: Principal | None = Auth):
        require_user(principal)
        return [
            {"role": role, "permissions": dict(scopes)}
            for role, scopes in sorted(PERMISSIONS.items())
        ]

    @app.put("/access/change-password", status_code=204)
    def access_change_password(
        body: ChangePasswordRequest, principal: Principal | None = Auth
    ):
        actor = require_user(principal)
        target = body.username or actor.username
        accounts.change_password(actor, target, body.new_password)

    @app.put("/access/change-roles")
    def access_change_roles(
        body: ChangeRolesRequest, principal: Principal | None = Auth
    ):
        actor = require_user(principal)
        record = accounts.change_roles(actor, body.username, tuple(body.roles))
        return record.public_dict()

    @app.delete("/access/delete-user", status_code=204)
    def access_delete_user(username: str, principal: Principal | None = Auth):
        actor = require_user(principal)
        accounts.delete_user(actor, username)

    # -- benchmarks --------------------------------------------------------------

    @app.post("/benchmarks/create", status_code=201)
    def benchmarks_create(
        body: BenchmarkCreateRequest, principal: Principal | None = Auth
    ):
        actor = require_user(principal)
        query = BenchmarkQuery(
            hash=body.hash, serialized=body.serialized, metadata=body.metadata
        )
        return store.put_benchmark(query, owner=actor.username).to_dict()

    @app.get("/benchmarks/list")
    def benchmarks_list(
        benchmark_filter: str | None = None, principal: Principal | None = Auth
    ):
        require_reader(principal)
        flt = parse_filter(benchmark_filter)
        return [
            b.to_dict(include_serialized=False)
            for b in store.list_benchmarks(viewer_for(principal), flt)
        ]

    @app.get("/benchmarks/load")
    def benchmarks_load(benchmark_id: str, principal: Principal | None = Auth):
        require_reader(principal)
        return store.get_benchmark(benchmark_id, viewer_for(principal)).to_dict()

    @app.put("/benchmarks/publish")
    def benchmarks_publish(benchmark_id: str, principal: Principal | None = Auth):
        actor = require_user(principal)
        viewer = viewer_for(actor)
        benchmark = store.get_benchmark(benchmark_id, viewer)
        check_content(actor, ACTION_CREATE, benchmark, "benchmark")
        return store.publish_benchmark(benchmark_id, viewer).to_dict(
            include_serialized=False
        )

    @app.delete("/benchmarks/delete", status_code=204)
    def benchmarks_delete(benchmark_id: str, principal: Principal | None = Auth):
        actor = require_user(principal)
        viewer = viewer_for(actor)
        benchmark = store.get_benchmark(benchmark_id, viewer)
        check_content(actor, ACTION_DELETE, benchmark, "benchmark")
        store.delete_benchmark(benchmark_id, viewer)

    # -- artifacts ---------------------------------------------------------------

    @app.post("/artifacts/upload", status_code=201)
    def artifacts_upload(
        response: Response,
        file: UploadFile = File(...),
        metadata: str = Form("{}"),
        principal: Principal | None = Auth,
    ):
        actor = require_user(principal)
        try:
            meta = json.loads(metadata)
        except ValueError:
            raise ValidationFailed("metadata must be valid JSON") from None
        if not isinstance(meta, dict):
            raise ValidationFailed("metadata must be a JSON object")
        content = file.file.read()
        if len(content) > config.max_body_bytes:
            raise PayloadTooLarge(
                f"artifact exceeds {config.max_body_bytes} bytes"
            )
        artifact, created = store.put_artifact(content, meta, owner=actor.username)
        if not created:
            response.status_code = 200
        return artifact.to_dict()

    @app.get("/artifacts/list")
    def artifacts_list(
        artifact_filter: str | None = None, principal: Principal | None = Auth
    ):
        require_reader(principal)
        flt = parse_filter(artifact_filter)
        return [
            a.to_dict() for a in store.list_artifacts(viewer_for(principal), flt)
        ]

    @app.get("/artifacts/download")
    def artifacts_download(artifact_id: str, principal: Principal | None = Auth):
        require_reader(principal)
        artifact = store.get_artifact(artifact_id, viewer_for(principal))
        return Response(
            content=artifact.content,
            media_type="application/octet-stream",
            headers={
                "Content-Disposition": f'attachment; filename="{artifact.id}.bin"'
            },
        )

    @app.put("/artifacts/publish")
    def artifacts_publish(artifact_id: str, principal: Principal | None = Auth):
        actor = require_user(principal)
        viewer = viewer_for(actor)
        artifact = store.get_artifact(artifact_id, viewer)
        check_content(actor, ACTION_CREATE, artifact, "artifact")
        return store.publish_artifact(artifact_id, viewer).to_dict()

    @app.delete("/artifacts/delete", status_code=204)
    def artifacts_delete(artifact_id: str, principal: Principal | None = Auth):
        actor = require_user(principal)
        artifact = store.get_artifact(artifact_id, viewer_for(actor))
        check_content(actor, ACTION_DELETE, artifact, "artifact")
        store.delete_artifact(artifact_id)

    # -- episodes ----------------------------------------------------------------

    @app.post("/episodes/record", status_code=201)
    def episodes_record(
        body: EpisodeRecordRequest, principal: Principal | None = Auth
    ):
        actor = require_user(principal)
        tuples = [RLTuple.from_dict(t) for t in body.tuples]
        episode = store.put_episode(
            body.benchmark_id, tuples, body.metadata, owner=actor.username
        )
        return episode.to_dict(include_tuples=False)

    @app.get("/episodes/list")
    def episodes_list(
        benchmark_filter: str | None = None,
        episode_filter: str | None = None,
        include_tuples: bool = False,
        principal: Principal | None = Auth,
    ):
        require_reader(principal)
        episodes = store.query_episodes(
            viewer_for(principal),
            parse_filter(benchmark_filter),
            parse_filter(episode_filter),
        )
        return [e.to_dict(include_tuples=include_tuples) for e in episodes]

    @app.put("/episodes/publish")
    def episodes_publish(episode_id: str, principal: Principal | None = Auth):
        actor = require_user(principal)
        viewer = viewer_for(actor)
        episode = store.get_episode(episode_id, viewer)
        check_content(actor, ACTION_CREATE, episode, "episode")
        return store.publish_episode(episode_id, viewer).to_dict(
            include_tuples=False
        )

    @app.delete("/episodes/delete", status_code=204)
    def episodes_delete(episode_id: str, principal: Principal | None = Auth):
        actor = require_user(principal)
        episode = store.get_episode(episode_id, viewer_for(actor))
        check_content(actor, ACTION_DELETE, episode, "episode")
        store.delete_episode(episode_id)

    return app


def main() -> None:
    import uvicorn

    config = ServerConfig.from_env()
    host, port = config.split_listen()
    uvicorn.run(create_app(config), host=host, port=port)


if __name__ == "__main__":
    main()
