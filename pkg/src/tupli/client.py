"""HTTP client for the REST API, plus the on-disk token cache.

The client mirrors the server's endpoint set one method per route, keeps a
bearer token pair, and retries exactly once after transparently refreshing
an expired access token. Errors surface as :class:`~tupli.errors.ApiError`
carrying the server's ``{status, code, detail}`` body.

``ApiClient`` satisfies the dataset layer's ``EpisodeSource`` protocol via
:meth:`ApiClient.fetch_episodes`, so a remote server can back a
:class:`~tupli.dataset.Dataset` directly.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import httpx

from .errors import ApiError
from .filters import FilterNode, filter_to_json
from .models import Episode, MetadataMap, RLTuple, hash_benchmark

DEFAULT_URL = "http://127.0.0.1:8000"


def default_cache_path() -> Path:
    env = os.environ.get("TUPLI_TOKEN_CACHE")
    if env:
        return Path(env)
    return Path.home() / ".config" / "tupli" / "credentials.json"


class TokenCache:
    """Stores the token pair in a user-private file (mode 0600)."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else default_cache_path()

    def load(self) -> dict | None:
        try:
            return json.loads(self.path.read_text("utf-8"))
        except (FileNotFoundError, ValueError):
            return None

    def save(self, data: dict) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True, mode=0o700)
        self.path.touch(mode=0o600, exist_ok=True)
        self.path.chmod(0o600)
        self.path.write_text(json.dumps(data, indent=1), "utf-8")

    def clear(self) -> None:
        self.path.unlink(missing_ok=True)


class ApiClient:
    """Typed access to every endpoint, with one automatic token refresh."""

    def __init__(
        self,
        base_url: str = DEFAULT_URL,
        *,
        cache: TokenCache | None = None,
        access_token: str | None = None,
        refresh_token: str | None = None,
        timeout: float = 30.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.cache = cache
        self.access_token = access_token
        self.refresh_token = refresh_token
        if cache is not None and access_token is None:
            stored = cache.load() or {}
            self.access_token = stored.get("access_token")
            self.refresh_token = stored.get("refresh_token")
        self._http = httpx.Client(
            base_url=self.base_url, timeout=timeout, transport=transport
        )

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> "ApiClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- plumbing ----------------------------------------------------------------

    def _headers(self) -> dict[str, str]:
        if self.access_token:
            return {"Authorization": f"Bearer {self.access_token}"}
        return {}

    @staticmethod
    def _error_from(response: httpx.Response) -> ApiError:
        try:
            body = response.json()
            return ApiError(body["status"], body["code"], body["detail"])
        except (ValueError, KeyError):
            return ApiError(
                response.status_code, "HTTP_ERROR", response.text[:200]
            )

    def _try_refresh(self) -> bool:
        if not self.refresh_token:
            return False
        response = self._http.post(
            "/access/refresh-token", json={"refresh_token": self.refresh_token}
        )
        if response.status_code != 200:
            return False
        self.access_token = response.json()["access_token"]
        self._persist()
        return True

    def _persist(self) -> None:
        if self.cache is not None:
            self.cache.save(
                {
                    "url": self.base_url,
                    "access_token": self.access_token,
                    "refresh_token": self.refresh_token,
                }
            )

    def _request(self, method: str, path: str, **kwargs) -> httpx.Response:
        response = self._http.request(
            method, path, headers=self._headers(), **kwargs
        )
        if response.status_code == 401 and self._try_refresh():
            response = self._http.request(
                method, path, headers=self._headers(), **kwargs
            )
        if response.status_code >= 400:
            raise self._error_from(response)
        return response

    @staticmethod
    def _filter_param(name: str, flt: FilterNode | None) -> dict[str, str]:
        return {} if flt is None else {name: filter_to_json(flt)}

    # -- access -------------------------------------------------------------------

    def signup(
        self,
        username: str,
        password: str,
        roles: list[str] | None = None,
    ) -> dict:
        body: dict = {"username": username, "password": password}
        if roles is not None:
            body["roles"] = roles
        return self._request("POST", "/access/signup", json=body).json()

    def login(self, username: str, password: str) -> dict:
        data = self._request(
            "POST",
            "/access/token",
            json={"username": username, "password": password},
        ).json()
        self.access_token = data["access_token"]
        self.refresh_token = data["refresh_token"]
        self._persist()
        return data

    def logout(self) -> None:
        self.access_token = None
        self.refresh_token = None
        if self.cache is not None:
            self.cache.clear()

    def list_users(self) -> list[dict]:
        return self._request("GET", "/access/list-users").json()

    def list_roles(self) -> list[dict]:
        return self._request("GET", "/access/list-roles").json()

    def change_password(
        self, new_password: str, username: str | None = None
    ) -> None:
        body: dict = {"new_password": new_password}
        if username is not None:
            body["username"] = username
        self._request("PUT", "/access/change-password", json=body)

    def change_roles(self, username: str, roles: list[str]) -> dict:
        return self._request(
            "PUT",
            "/access/change-roles",
            json={"username": username, "roles": roles},
        ).json()

    def delete_user(self, username: str) -> None:
        self._request(
            "DELETE", "/access/delete-user", params={"username": username}
        )

    # -- benchmarks ------------------------------------------------------------------

    def create_benchmark(self, serialized: str, metadata: MetadataMap) -> dict:
        """Hash the payload client-side and submit the creation query."""
        body = {
            "hash": hash_benchmark(serialized),
            "serialized": serialized,
            "metadata": metadata,
        }
        return self._request("POST", "/benchmarks/create", json=body).json()

    def list_benchmarks(self, flt: FilterNode | None = None) -> list[dict]:
        return self._request(
            "GET",
            "/benchmarks/list",
            params=self._filter_param("benchmark_filter", flt),
        ).json()

    def load_benchmark(self, benchmark_id: str) -> dict:
        return self._request(
            "GET", "/benchmarks/load", params={"benchmark_id": benchmark_id}
        ).json()

    def publish_benchmark(self, benchmark_id: str) -> dict:
        return self._request(
            "PUT", "/benchmarks/publish", params={"benchmark_id": benchmark_id}
        ).json()

    def delete_benchmark(self, benchmark_id: str) -> None:
        self._request(
            "DELETE", "/benchmarks/delete", params={"benchmark_id": benchmark_id}
        )

    # -- artifacts --------------------------------------------------------------------

    def upload_artifact(self, content: bytes, metadata: MetadataMap) -> dict:
        return self._request(
            "POST",
            "/artifacts/upload",
            files={"file": ("artifact.bin", content)},
            data={"metadata": json.dumps(metadata)},
        ).json()

    def list_artifacts(self, flt: FilterNode | None = None) -> list[dict]:
        return self._request(
            "GET",
            "/artifacts/list",
            params=self._filter_param("artifact_filter", flt),
        ).json()

    def download_artifact(self, artifact_id: str) -> bytes:
        return self._request(
            "GET", "/artifacts/download", params={"artifact_id": artifact_id}
        ).content

    def publish_artifact(self, artifact_id: str) -> dict:
        return self._request(
            "PUT", "/artifacts/publish", params={"artifact_id": artifact_id}
        ).json()

    def delete_artifact(self, artifact_id: str) -> None:
        self._request(
            "DELETE", "/artifacts/delete", params={"artifact_id": artifact_id}
        )

    # -- episodes ---------------------------------------------------------------------

    def record_episode(
        self,
        benchmark_id: str,
        tuples: list[RLTuple] | list[dict],
        metadata: MetadataMap | None = None,
    ) -> dict:
        payload = [
            t.to_dict() if isinstance(t, RLTuple) else t for t in tuples
        ]
        body = {
            "benchmark_id": benchmark_id,
            "tuples": payload,
            "metadata": metadata or {},
        }
        return self._request("POST", "/episodes/record", json=body).json()

    def list_episodes(
        self,
        benchmark_filter: FilterNode | None = None,
        episode_filter: FilterNode | None = None,
        include_tuples: bool = False,
    ) -> list[dict]:
        params = {
            **self._filter_param("benchmark_filter", benchmark_filter),
            **self._filter_param("episode_filter", episode_filter),
        }
        if include_tuples:
            params["include_tuples"] = "true"
        return self._request("GET", "/episodes/list", params=params).json()

    def publish_episode(self, episode_id: str) -> dict:
        return self._request(
            "PUT", "/episodes/publish", params={"episode_id": episode_id}
        ).json()

    def delete_episode(self, episode_id: str) -> None:
        self._request(
            "DELETE", "/episodes/delete", params={"episode_id": episode_id}
        )

    # -- dataset integration ------------------------------------------------------------

    def fetch_episodes(
        self,
        benchmark_filter: FilterNode | None,
        episode_filter: FilterNode | None,
    ) -> list[Episode]:
        """EpisodeSource implementation: full episodes, tuples included."""
        raw = self.list_episodes(
            benchmark_filter, episode_filter, include_tuples=True
        )
        return [Episode.from_dict(item) for item in raw]
