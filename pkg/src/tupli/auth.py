"""Authentication, tokens, and the role/permission model.

Permissions are a matrix: each role assigns one scope to each action class,
and a user with several roles gets the union (most permissive cell wins).
Scopes order objects by ownership and visibility:

    all          every object
    all_public   public objects, plus the caller's own
    own_public   the caller's own objects, public or private
    own_private  the caller's own private objects

Own private objects are reachable under every scope, so even the narrowest
role can always see and remove what it created and never shared. User
management treats target accounts as private objects owned by themselves:
a scope below ``all`` therefore reaches only the caller's own account, and
operations that affect other accounts (role changes, deletion, listing)
additionally demand the full scope.

Tokens are compact three-part web tokens (header.claims.signature) signed
with HMAC-SHA256. Access tokens live 60 minutes, refresh tokens 30 days,
and a token is rejected from the moment ``now >= exp``. Passwords are
stored as salted PBKDF2-HMAC-SHA256 digests with a configurable work
factor; verification is constant-time and runs a dummy check when the user
is unknown so lookups are timing-uniform.
"""

from __future__ import annotations

import base64
import hashlib
import hmac
import json
import secrets
import time
from dataclasses import dataclass, field
from typing import Callable

from .errors import (
    Conflict,
    DuplicateUser,
    Forbidden,
    NotFound,
    Unauthorized,
    ValidationFailed,
)
from .models import UserRecord, is_valid_username
from .storage import OnDiskStore, Viewer

# -- passwords ---------------------------------------------------------------

PBKDF2_ITERATIONS = 310_000


def hash_password(password: str, *, iterations: int = PBKDF2_ITERATIONS) -> str:
    """Salted PBKDF2 digest in the form ``pbkdf2_sha256$iters$salt$hash``."""
    if not isinstance(password, str) or not password:
        raise ValidationFailed("password must be a non-empty string")
    salt = secrets.token_hex(16)
    digest = hashlib.pbkdf2_hmac(
        "sha256", password.encode("utf-8"), salt.encode("utf-8"), iterations
    )
    return f"pbkdf2_sha256${iterations}${salt}${digest.hex()}"


def verify_password(password: str, stored: str) -> bool:
    try:
        scheme, iters, salt, expected = stored.split("$")
        if scheme != "pbkdf2_sha256":
            return False
        digest = hashlib.pbkdf2_hmac(
            "sha256", password.encode("utf-8"), salt.encode("utf-8"), int(iters)
        )
    except (ValueError, AttributeError):
        return False
    return hmac.compare_digest(digest.hex(), expected)


# -- roles and scopes ---------------------------------------------------------

ROLE_ADMIN = "admin"
ROLE_USER_ADMIN = "user_admin"
ROLE_CONTENT_ADMIN = "content_admin"
ROLE_STANDARD = "standard_user"

VALID_ROLES = (ROLE_ADMIN, ROLE_USER_ADMIN, ROLE_CONTENT_ADMIN, ROLE_STANDARD)

ACTION_READ = "read"
ACTION_CREATE = "create"
ACTION_DELETE = "delete"
ACTION_USER_MGMT = "user_mgmt"

ACTIONS = (ACTION_READ, ACTION_CREATE, ACTION_DELETE, ACTION_USER_MGMT)

SCOPE_ALL = "all"
SCOPE_ALL_PUBLIC = "all_public"
SCOPE_OWN_PUBLIC = "own_public"
SCOPE_OWN_PRIVATE = "own_private"

# role -> {action -> scope}
PERMISSIONS: dict[str, dict[str, str]] = {
    ROLE_ADMIN: {
        ACTION_READ: SCOPE_ALL,
        ACTION_CREATE: SCOPE_ALL,
        ACTION_DELETE: SCOPE_ALL,
        ACTION_USER_MGMT: SCOPE_ALL,
    },
    ROLE_USER_ADMIN: {
        ACTION_READ: SCOPE_ALL_PUBLIC,
        ACTION_CREATE: SCOPE_OWN_PUBLIC,
        ACTION_DELETE: SCOPE_OWN_PRIVATE,
        ACTION_USER_MGMT: SCOPE_ALL,
    },
    ROLE_CONTENT_ADMIN: {
        ACTION_READ: SCOPE_ALL,
        ACTION_CREATE: SCOPE_ALL,
        ACTION_DELETE: SCOPE_ALL,
        ACTION_USER_MGMT: SCOPE_OWN_PRIVATE,
    },
    ROLE_STANDARD: {
        ACTION_READ: SCOPE_ALL_PUBLIC,
        ACTION_CREATE: SCOPE_OWN_PUBLIC,
        ACTION_DELETE: SCOPE_OWN_PRIVATE,
        ACTION_USER_MGMT: SCOPE_OWN_PRIVATE,
    },
}


def scope_allows(scope: str, *, is_own: bool, is_public: bool) -> bool:
    """Decide one matrix cell. Own private objects pass under every scope."""
    if scope == SCOPE_ALL:
        return True
    if scope == SCOPE_ALL_PUBLIC:
        return is_public or is_own
    if scope == SCOPE_OWN_PUBLIC:
        return is_own
    if scope == SCOPE_OWN_PRIVATE:
        return is_own and not is_public
    raise ValueError(f"unknown scope {scope!r}")


@dataclass(frozen=True)
class Principal:
    """An authenticated caller: username plus granted roles."""

    username: str
    roles: tuple[str, ...]

    def scope_for(self, action: str) -> tuple[str, ...]:
        return tuple(PERMISSIONS[r][action] for r in self.roles if r in PERMISSIONS)

    def allows(self, action: str, *, is_own: bool, is_public: bool) -> bool:
        return any(
            scope_allows(s, is_own=is_own, is_public=is_public)
            for s in self.scope_for(action)
        )

    def has_scope_all(self, action: str) -> bool:
        return SCOPE_ALL in self.scope_for(action)


def authorize(
    principal: Principal | None,
    action: str,
    *,
    owner: str,
    is_public: bool,
    open_access: bool = False,
) -> bool:
    """Evaluate one access decision against a content object.

    Anonymous callers (``principal is None``) may read public objects when
    open access is switched on; every other anonymous action is denied.
    """
    if action not in ACTIONS:
        raise ValueError(f"unknown action {action!r}")
    if principal is None:
        return action == ACTION_READ and is_public and open_access
    is_own = owner == principal.username
    return principal.allows(action, is_own=is_own, is_public=is_public)


def viewer_for(principal: Principal | None) -> Viewer:
    """Translate a principal into the storage-layer visibility context."""
    if principal is None:
        return Viewer.anonymous()
    return Viewer(
        username=principal.username,
        sees_all=principal.has_scope_all(ACTION_READ),
    )


# -- tokens --------------------------------------------------------------------

ACCESS_TTL_SECONDS = 60 * 60
REFRESH_TTL_SECONDS = 30 * 24 * 60 * 60

TOKEN_KIND_ACCESS = "access"
TOKEN_KIND_REFRESH = "refresh"


def _b64url(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


def _b64url_decode(text: str) -> bytes:
    padding = "=" * (-len(text) % 4)
    return base64.urlsafe_b64decode(text + padding)


@dataclass(frozen=True)
class TokenClaims:
    sub: str
    roles: tuple[str, ...]
    kind: str
    iat: int
    exp: int

    def principal(self) -> Principal:
        return Principal(username=self.sub, roles=self.roles)


class TokenAuthority:
    """Issues and verifies signed bearer tokens with an injectable clock."""

    def __init__(
        self,
        secret: str,
        now: Callable[[], int] | None = None,
        access_ttl: int = ACCESS_TTL_SECONDS,
        refresh_ttl: int = REFRESH_TTL_SECONDS,
    ):
        if not secret:
            raise ValueError("token secret must be non-empty")
        self._key = secret.encode("utf-8")
        self._now = now or (lambda: int(time.time()))
        self._access_ttl = access_ttl
        self._refresh_ttl = refresh_ttl

    def _sign(self, message: bytes) -> str:
        return _b64url(hmac.new(self._key, message, hashlib.sha256).digest())

    def issue(self, username: str, roles: tuple[str, ...], kind: str) -> str:
        ttl = self._access_ttl if kind == TOKEN_KIND_ACCESS else self._refresh_ttl
        now = self._now()
        header = _b64url(json.dumps({"alg": "HS256", "typ": "JWT"}).encode())
        claims = _b64url(
            json.dumps(
                {
                    "sub": username,
                    "roles": list(roles),
                    "kind": kind,
                    "iat": now,
                    "exp": now + ttl,
                },
                separators=(",", ":"),
            ).encode()
        )
        body = f"{header}.{claims}"
        return f"{body}.{self._sign(body.encode('ascii'))}"

    def issue_pair(self, username: str, roles: tuple[str, ...]) -> tuple[str, str]:
        return (
            self.issue(username, roles, TOKEN_KIND_ACCESS),
            self.issue(username, roles, TOKEN_KIND_REFRESH),
        )

    def verify(self, token: str, kind: str = TOKEN_KIND_ACCESS) -> TokenClaims:
        """Check signature, shape, kind, and expiry; raise Unauthorized otherwise."""
        try:
            header_part, claims_part, signature = token.split(".")
        except (ValueError, AttributeError):
            raise Unauthorized("malformed token") from None
        expected = self._sign(f"{header_part}.{claims_part}".encode("ascii"))
        if not hmac.compare_digest(signature, expected):
            raise Unauthorized("invalid token signature")
        try:
            payload = json.loads(_b64url_decode(claims_part))
            claims = TokenClaims(
                sub=payload["sub"],
                roles=tuple(payload["roles"]),
                kind=payload["kind"],
                iat=int(payload["iat"]),
                exp=int(payload["exp"]),
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError):
            raise Unauthorized("malformed token claims") from None
        if claims.kind != kind:
            raise Unauthorized(f"expected a {kind} token")
        if self._now() >= claims.exp:
            raise Unauthorized("token expired")
        return claims


# -- accounts ------------------------------------------------------------------

@dataclass(frozen=True)
class AccessPolicy:
    """Instance-wide switches for anonymous reads and self-service signup."""

    open_access: bool = False
    open_signup: bool = False


@dataclass
class AccountService:
    """User lifecycle on top of the store: signup, login, roles, removal."""

    store: OnDiskStore
    tokens: TokenAuthority
    policy: AccessPolicy = field(default_factory=AccessPolicy)
    pbkdf2_iterations: int = PBKDF2_ITERATIONS

    # Verified against a throwaway hash when the username is unknown so that
    # login timing does not reveal which accounts exist.
    def __post_init__(self) -> None:
        self._dummy_hash = hash_password(
            secrets.token_hex(8), iterations=self.pbkdf2_iterations
        )

    def bootstrap_admin(self, username: str, password: str) -> bool:
        """Create the initial admin account if it does not exist yet."""
        if self.store.get_user(username) is not None:
            return False
        self.store.put_user(
            UserRecord(
                username=username,
                password_hash=hash_password(
                    password, iterations=self.pbkdf2_iterations
                ),
                roles=(ROLE_ADMIN,),
            )
        )
        return True

    @staticmethod
    def _check_roles(roles: tuple[str, ...]) -> tuple[str, ...]:
        if not roles:
            raise ValidationFailed("at least one role is required")
        unknown = [r for r in roles if r not in VALID_ROLES]
        if unknown:
            raise ValidationFailed(f"unknown roles: {', '.join(unknown)}")
        return tuple(dict.fromkeys(roles))

    def signup(
        self,
        username: str,
        password: str,
        roles: tuple[str, ...] = (ROLE_STANDARD,),
        actor: Principal | None = None,
    ) -> UserRecord:
        """Create an account.

        Anonymous signup requires the open-signup switch and always yields a
        standard user; requesting any other role needs a caller with full
        user-management scope.
        """
        if not is_valid_username(username):
            raise ValidationFailed(f"invalid username {username!r}")
        roles = self._check_roles(roles)
        privileged = actor is not None and actor.has_scope_all(ACTION_USER_MGMT)
        if not privileged:
            if actor is None and not self.policy.open_signup:
                raise Unauthorized("signup is disabled")
            if set(roles) != {ROLE_STANDARD}:
                raise Forbidden("only a user administrator can grant roles")
        record = UserRecord(
            username=username,
            password_hash=hash_password(password, iterations=self.pbkdf2_iterations),
            roles=roles,
        )
        try:
            self.store.put_user(record)
        except DuplicateUser:
            raise DuplicateUser(f"user {username} already exists") from None
        return record

    def login(self, username: str, password: str) -> tuple[str, str]:
        record = self.store.get_user(username) if username else None
        if record is None:
            verify_password(password, self._dummy_hash)
            raise Unauthorized("invalid credentials")
        if not verify_password(password, record.password_hash):
            raise Unauthorized("invalid credentials")
        return self.tokens.issue_pair(record.username, record.roles)

    def refresh(self, refresh_token: str) -> str:
        """Mint a fresh access token; roles are re-read so revocations stick."""
        claims = self.tokens.verify(refresh_token, kind=TOKEN_KIND_REFRESH)
        record = self.store.get_user(claims.sub)
        if record is None:
            raise Unauthorized("account no longer exists")
        return self.tokens.issue(
            record.username, record.roles, TOKEN_KIND_ACCESS
        )

    def authenticate(self, access_token: str) -> Principal:
        return self.tokens.verify(access_token, kind=TOKEN_KIND_ACCESS).principal()

    # -- management operations ------------------------------------------------

    def _require_target(self, username: str) -> UserRecord:
        record = self.store.get_user(username)
        if record is None:
            raise NotFound(f"user {username} not found")
        return record

    def _mgmt_allows(self, actor: Principal, target: str) -> bool:
        # Accounts behave as private objects owned by themselves.
        return actor.allows(
            ACTION_USER_MGMT, is_own=actor.username == target, is_public=False
        )

    def _other_admins_exist(self, excluding: str) -> bool:
        return any(
            ROLE_ADMIN in u.roles and u.username != excluding
            for u in self.store.list_users()
        )

    def change_password(
        self, actor: Principal, target: str, new_password: str
    ) -> None:
        record = self._require_target(target)
        if not self._mgmt_allows(actor, target):
            raise Forbidden("not allowed to change this user's password")
        self.store.update_user(
            UserRecord(
                username=record.username,
                password_hash=hash_password(
                    new_password, iterations=self.pbkdf2_iterations
                ),
                roles=record.roles,
            )
        )

    def change_roles(
        self, actor: Principal, target: str, roles: tuple[str, ...]
    ) -> UserRecord:
        """Replace a user's role set; full user-management scope required."""
        roles = self._check_roles(roles)
        record = self._require_target(target)
        if not actor.has_scope_all(ACTION_USER_MGMT):
            raise Forbidden("not allowed to change roles")
        if (
            ROLE_ADMIN in record.roles
            and ROLE_ADMIN not in roles
            and not self._other_admins_exist(record.username)
        ):
            raise Conflict("LAST_ADMIN", "cannot demote the only admin")
        updated = UserRecord(
            username=record.username,
            password_hash=record.password_hash,
            roles=roles,
        )
        self.store.update_user(updated)
        return updated

    def delete_user(self, actor: Principal, target: str) -> None:
        """Remove an account and its private objects; last admin is protected."""
        record = self._require_target(target)
        if not actor.has_scope_all(ACTION_USER_MGMT):
            raise Forbidden("not allowed to delete users")
        if ROLE_ADMIN in record.roles and not self._other_admins_exist(
            record.username
        ):
            raise Conflict("LAST_ADMIN", "cannot delete the only admin")
        self.store.delete_user(target)

    def list_users(self, actor: Principal) -> list[UserRecord]:
        if not actor.has_scope_all(ACTION_USER_MGMT):
            raise Forbidden("not allowed to list users")
        return self.store.list_users()
