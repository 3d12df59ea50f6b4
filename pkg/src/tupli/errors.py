"""Error types shared across the storage, auth, HTTP, and client layers.

Every error carries a machine-readable ``code`` and an HTTP ``status`` so the
server can render it as a single JSON error body and the client can re-raise
it with the same identity.
"""

from __future__ import annotations


class ServiceError(Exception):
    """Base class for all expected failures."""

    status: int = 500
    code: str = "INTERNAL"

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail

    def to_dict(self) -> dict:
        return {"status": self.status, "code": self.code, "detail": self.detail}


class ValidationFailed(ServiceError):
    status = 400
    code = "VALIDATION_FAILED"


class MalformedFilter(ValidationFailed):
    code = "MALFORMED_FILTER"


class Unauthorized(ServiceError):
    status = 401
    code = "UNAUTHORIZED"


class Forbidden(ServiceError):
    """Denied user-management action. Content-object denials map to NotFound."""

    status = 403
    code = "FORBIDDEN"


class NotFound(ServiceError):
    status = 404
    code = "NOT_FOUND"


class DuplicateBenchmark(ServiceError):
    status = 409
    code = "DUPLICATE_BENCHMARK"


class DuplicateUser(ServiceError):
    status = 409
    code = "DUPLICATE_USER"


class Conflict(ServiceError):
    """State conflict with a per-case code (e.g. DANGLING_EPISODES, LAST_ADMIN)."""

    status = 409

    def __init__(self, code: str, detail: str):
        super().__init__(detail)
        self.code = code


class PayloadTooLarge(ServiceError):
    status = 413
    code = "PAYLOAD_TOO_LARGE"


class ApiError(ServiceError):
    """Client-side mirror of a server error response body."""

    def __init__(self, status: int, code: str, detail: str):
        super().__init__(detail)
        self.status = status
        self.code = code
