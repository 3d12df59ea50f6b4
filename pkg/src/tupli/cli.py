"""Command-line interface.

Command tree::

    tupli login | logout
    tupli user signup | list | set-password | set-roles | delete
    tupli benchmark create | list | load | publish | delete
    tupli artifact upload | list | download | publish | delete
    tupli episode record | list | publish | delete
    tupli dataset export

Every subcommand accepts ``--json`` for machine-readable output; the default
is a plain ASCII table. The server URL comes from ``--url``, the
``TUPLI_URL`` environment variable, or the localhost default, in that order.
Tokens live in a user-private cache file (``TUPLI_TOKEN_CACHE`` overrides
the location) written by ``tupli login`` and removed by ``tupli logout``.

Exit codes: 0 on success, 1 on server or I/O errors, 2 on usage errors
(including malformed filter expressions).
"""

from __future__ import annotations

import argparse
import getpass
import json
import os
import sys
from pathlib import Path

import httpx

from .client import DEFAULT_URL, ApiClient, TokenCache
from .dataset import Dataset, write_columnar
from .errors import ApiError, MalformedFilter
from .filters import FilterNode, filter_from_json
from .models import Scalar


def _parse_scalar(text: str) -> Scalar:
    # Coerce only canonical renderings, so "06" stays the string "06".
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    for cast in (int, float):
        try:
            value = cast(text)
        except ValueError:
            continue
        if str(value) == text:
            return value
    return text


def _parse_meta(items: list[str] | None) -> dict:
    meta = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise MalformedFilter(f"expected key=value, got {item!r}")
        meta[key] = _parse_scalar(value)
    return meta


def _parse_filter(raw: str | None) -> FilterNode | None:
    return None if raw is None else filter_from_json(raw)


def _password_of(args: argparse.Namespace) -> str:
    if args.password is not None:
        return args.password
    return getpass.getpass("password: ")


def render_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [
        max(len(headers[i]), *(len(r[i]) for r in rows), 1) if rows else len(headers[i])
        for i in range(len(headers))
    ]
    line = " | ".join(h.ljust(widths[i]) for i, h in enumerate(headers))
    rule = "-+-".join("-" * w for w in widths)
    body = [
        " | ".join(str(r[i]).ljust(widths[i]) for i in range(len(headers)))
        for r in rows
    ]
    return "\n".join([line, rule, *body])


def _emit(args: argparse.Namespace, data, headers=None, row_of=None) -> None:
    if args.json or headers is None:
        print(json.dumps(data, indent=2))
        return
    rows = [[str(v) for v in row_of(item)] for item in data]
    print(render_table(headers, rows))


# -- command handlers -------------------------------------------------------------

def cmd_login(args, client: ApiClient) -> int:
    data = client.login(args.username, _password_of(args))
    if args.json:
        print(json.dumps({"username": args.username, **data}, indent=2))
    else:
        print(f"logged in as {args.username}")
    return 0


def cmd_logout(args, client: ApiClient) -> int:
    client.logout()
    if args.json:
        print(json.dumps({"logged_out": True}))
    else:
        print("logged out")
    return 0


def cmd_user_signup(args, client: ApiClient) -> int:
    roles = args.roles.split(",") if args.roles else None
    data = client.signup(args.username, _password_of(args), roles=roles)
    _emit(args, [data], ["username", "roles"], lambda u: [u["username"], ",".join(u["roles"])])
    return 0


def cmd_user_list(args, client: ApiClient) -> int:
    data = client.list_users()
    _emit(args, data, ["username", "roles"], lambda u: [u["username"], ",".join(u["roles"])])
    return 0


def cmd_user_set_password(args, client: ApiClient) -> int:
    client.change_password(_password_of(args), username=args.username)
    if args.json:
        print(json.dumps({"password_changed": args.username or "self"}))
    else:
        print("password updated")
    return 0


def cmd_user_set_roles(args, client: ApiClient) -> int:
    data = client.change_roles(args.username, args.roles.split(","))
    _emit(args, [data], ["username", "roles"], lambda u: [u["username"], ",".join(u["roles"])])
    return 0


def cmd_user_delete(args, client: ApiClient) -> int:
    client.delete_user(args.username)
    if args.json:
        print(json.dumps({"deleted": args.username}))
    else:
        print(f"deleted user {args.username}")
    return 0


_BENCHMARK_COLUMNS = ["id", "name", "created_by", "public", "created_at"]


def _benchmark_row(b: dict) -> list:
    return [
        b["id"],
        b.get("metadata", {}).get("name", ""),
        b["created_by"],
        b["is_public"],
        b["created_at"],
    ]


def cmd_benchmark_create(args, client: ApiClient) -> int:
    if args.serialized_file:
        serialized = Path(args.serialized_file).read_text("utf-8")
    else:
        serialized = args.serialized
    metadata = {
        "name": args.name,
        "description": args.description,
        **_parse_meta(args.meta),
    }
    data = client.create_benchmark(serialized, metadata)
    _emit(args, [data], _BENCHMARK_COLUMNS, _benchmark_row)
    return 0


def cmd_benchmark_list(args, client: ApiClient) -> int:
    data = client.list_benchmarks(_parse_filter(args.filter))
    _emit(args, data, _BENCHMARK_COLUMNS, _benchmark_row)
    return 0


def cmd_benchmark_load(args, client: ApiClient) -> int:
    data = client.load_benchmark(args.id)
    if args.out:
        Path(args.out).write_text(data["serialized"], "utf-8")
        if not args.json:
            print(f"wrote serialized benchmark to {args.out}")
            return 0
    print(json.dumps(data, indent=2))
    return 0


def cmd_benchmark_publish(args, client: ApiClient) -> int:
    data = client.publish_benchmark(args.id)
    _emit(args, [data], _BENCHMARK_COLUMNS, _benchmark_row)
    return 0


def cmd_benchmark_delete(args, client: ApiClient) -> int:
    client.delete_benchmark(args.id)
    if args.json:
        print(json.dumps({"deleted": args.id}))
    else:
        print(f"deleted benchmark {args.id}")
    return 0


_ARTIFACT_COLUMNS = ["id", "created_by", "public", "created_at"]


def _artifact_row(a: dict) -> list:
    return [a["id"], a["created_by"], a["is_public"], a["created_at"]]


def cmd_artifact_upload(args, client: ApiClient) -> int:
    content = Path(args.file).read_bytes()
    data = client.upload_artifact(content, _parse_meta(args.meta))
    _emit(args, [data], _ARTIFACT_COLUMNS, _artifact_row)
    return 0


def cmd_artifact_list(args, client: ApiClient) -> int:
    data = client.list_artifacts(_parse_filter(args.filter))
    _emit(args, data, _ARTIFACT_COLUMNS, _artifact_row)
    return 0


def cmd_artifact_download(args, client: ApiClient) -> int:
    content = client.download_artifact(args.id)
    out = args.out or f"{args.id}.bin"
    Path(out).write_bytes(content)
    if args.json:
        print(json.dumps({"id": args.id, "out": out, "bytes": len(content)}))
    else:
        print(f"wrote {len(content)} bytes to {out}")
    return 0


def cmd_artifact_publish(args, client: ApiClient) -> int:
    data = client.publish_artifact(args.id)
    _emit(args, [data], _ARTIFACT_COLUMNS, _artifact_row)
    return 0


def cmd_artifact_delete(args, client: ApiClient) -> int:
    client.delete_artifact(args.id)
    if args.json:
        print(json.dumps({"deleted": args.id}))
    else:
        print(f"deleted artifact {args.id}")
    return 0


_EPISODE_COLUMNS = ["id", "benchmark_id", "n_tuples", "created_by", "public", "created_at"]


def _episode_row(e: dict) -> list:
    return [
        e["id"],
        e["benchmark_id"],
        e.get("n_tuples", ""),
        e["created_by"],
        e["is_public"],
        e["created_at"],
    ]


def cmd_episode_record(args, client: ApiClient) -> int:
    tuples = json.loads(Path(args.tuples_file).read_text("utf-8"))
    data = client.record_episode(args.benchmark_id, tuples, _parse_meta(args.meta))
    _emit(args, [data], _EPISODE_COLUMNS, _episode_row)
    return 0


def cmd_episode_list(args, client: ApiClient) -> int:
    data = client.list_episodes(
        _parse_filter(args.benchmark_filter),
        _parse_filter(args.episode_filter),
    )
    _emit(args, data, _EPISODE_COLUMNS, _episode_row)
    return 0


def cmd_episode_publish(args, client: ApiClient) -> int:
    data = client.publish_episode(args.id)
    _emit(args, [data], _EPISODE_COLUMNS, _episode_row)
    return 0


def cmd_episode_delete(args, client: ApiClient) -> int:
    client.delete_episode(args.id)
    if args.json:
        print(json.dumps({"deleted": args.id}))
    else:
        print(f"deleted episode {args.id}")
    return 0


def cmd_dataset_export(args, client: ApiClient) -> int:
    dataset = (
        Dataset(source=client)
        .with_benchmark_filter(_parse_filter(args.benchmark_filter))
        .with_episode_filter(_parse_filter(args.episode_filter))
        .with_tuple_filter(_parse_filter(args.tuple_filter))
        .load()
    )
    if args.sample is not None:
        dataset = dataset.sample_episodes(args.sample, args.seed)
    batch = dataset.to_columnar()
    write_columnar(args.out, batch)
    summary = {
        "episodes": batch.n_episodes,
        "tuples": batch.n_tuples,
        "out": args.out,
    }
    if args.json:
        print(json.dumps(summary, indent=2))
    else:
        print(
            f"exported {summary['episodes']} episodes "
            f"({summary['tuples']} tuples) to {args.out}"
        )
    return 0


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--json", action="store_true", help="print raw JSON instead of a table"
    )

    parser = argparse.ArgumentParser(
        prog="tupli",
        description="Store and retrieve benchmarks, artifacts, and episode data.",
    )
    parser.add_argument(
        "--url",
        default=None,
        help=f"server URL (default: $TUPLI_URL or {DEFAULT_URL})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("login", parents=[common], help="log in and cache tokens")
    p.add_argument("--username", required=True)
    p.add_argument("--password", help="prompted for when omitted")
    p.set_defaults(func=cmd_login)

    p = sub.add_parser("logout", parents=[common], help="discard cached tokens")
    p.set_defaults(func=cmd_logout)

    user = sub.add_parser("user", help="account management").add_subparsers(
        dest="subcommand", required=True
    )
    p = user.add_parser("signup", parents=[common], help="create an account")
    p.add_argument("--username", required=True)
    p.add_argument("--password", help="prompted for when omitted")
    p.add_argument("--roles", help="comma-separated role names")
    p.set_defaults(func=cmd_user_signup)
    p = user.add_parser("list", parents=[common], help="list accounts")
    p.set_defaults(func=cmd_user_list)
    p = user.add_parser("set-password", parents=[common], help="change a password")
    p.add_argument("--username", help="defaults to the logged-in user")
    p.add_argument("--password", help="prompted for when omitted")
    p.set_defaults(func=cmd_user_set_password)
    p = user.add_parser("set-roles", parents=[common], help="replace a role set")
    p.add_argument("--username", required=True)
    p.add_argument("--roles", required=True, help="comma-separated role names")
    p.set_defaults(func=cmd_user_set_roles)
    p = user.add_parser("delete", parents=[common], help="delete an account")
    p.add_argument("--username", required=True)
    p.set_defaults(func=cmd_user_delete)

    bench = sub.add_parser("benchmark", help="benchmark objects").add_subparsers(
        dest="subcommand", required=True
    )
    p = bench.add_parser("create", parents=[common], help="store a benchmark")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--serialized", help="serialized environment string")
    group.add_argument("--serialized-file", help="file with the serialized payload")
    p.add_argument("--name", required=True)
    p.add_argument("--description", required=True)
    p.add_argument("--meta", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_benchmark_create)
    p = bench.add_parser("list", parents=[common], help="list visible benchmarks")
    p.add_argument("--filter", help="filter as JSON")
    p.set_defaults(func=cmd_benchmark_list)
    p = bench.add_parser("load", parents=[common], help="fetch one benchmark")
    p.add_argument("--id", required=True)
    p.add_argument("--out", help="write the serialized payload to this file")
    p.set_defaults(func=cmd_benchmark_load)
    p = bench.add_parser("publish", parents=[common], help="make a benchmark public")
    p.add_argument("--id", required=True)
    p.set_defaults(func=cmd_benchmark_publish)
    p = bench.add_parser("delete", parents=[common], help="delete a benchmark")
    p.add_argument("--id", required=True)
    p.set_defaults(func=cmd_benchmark_delete)

    art = sub.add_parser("artifact", help="binary artifacts").add_subparsers(
        dest="subcommand", required=True
    )
    p = art.add_parser("upload", parents=[common], help="upload a file")
    p.add_argument("--file", required=True)
    p.add_argument("--meta", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_artifact_upload)
    p = art.add_parser("list", parents=[common], help="list visible artifacts")
    p.add_argument("--filter", help="filter as JSON")
    p.set_defaults(func=cmd_artifact_list)
    p = art.add_parser("download", parents=[common], help="download blob bytes")
    p.add_argument("--id", required=True)
    p.add_argument("--out", help="output path (default: <id>.bin)")
    p.set_defaults(func=cmd_artifact_download)
    p = art.add_parser("publish", parents=[common], help="make an artifact public")
    p.add_argument("--id", required=True)
    p.set_defaults(func=cmd_artifact_publish)
    p = art.add_parser("delete", parents=[common], help="delete an artifact")
    p.add_argument("--id", required=True)
    p.set_defaults(func=cmd_artifact_delete)

    epi = sub.add_parser("episode", help="episode records").add_subparsers(
        dest="subcommand", required=True
    )
    p = epi.add_parser("record", parents=[common], help="store an episode")
    p.add_argument("--benchmark-id", required=True)
    p.add_argument("--tuples-file", required=True, help="JSON list of tuples")
    p.add_argument("--meta", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_episode_record)
    p = epi.add_parser("list", parents=[common], help="list visible episodes")
    p.add_argument("--benchmark-filter", help="benchmark-stage filter as JSON")
    p.add_argument("--episode-filter", help="episode-stage filter as JSON")
    p.set_defaults(func=cmd_episode_list)
    p = epi.add_parser("publish", parents=[common], help="make an episode public")
    p.add_argument("--id", required=True)
    p.set_defaults(func=cmd_episode_publish)
    p = epi.add_parser("delete", parents=[common], help="delete an episode")
    p.add_argument("--id", required=True)
    p.set_defaults(func=cmd_episode_delete)

    ds = sub.add_parser("dataset", help="dataset assembly").add_subparsers(
        dest="subcommand", required=True
    )
    p = ds.add_parser(
        "export", parents=[common], help="export filtered tuples to a columnar file"
    )
    p.add_argument("--benchmark-filter", help="benchmark-stage filter as JSON")
    p.add_argument("--episode-filter", help="episode-stage filter as JSON")
    p.add_argument("--tuple-filter", help="tuple-stage filter as JSON")
    p.add_argument("--sample", type=int, help="sample this many episodes")
    p.add_argument("--seed", type=int, default=0, help="sampling seed")
    p.add_argument("--out", required=True, help="output file path")
    p.set_defaults(func=cmd_dataset_export)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    url = args.url or os.environ.get("TUPLI_URL", DEFAULT_URL)
    client = ApiClient(url, cache=TokenCache())
    try:
        return args.func(args, client)
    except MalformedFilter as exc:
        print(f"usage error: {exc.detail}", file=sys.stderr)
        return 2
    except ApiError as exc:
        print(f"error {exc.status} {exc.code}: {exc.detail}", file=sys.stderr)
        return 1
    except (httpx.HTTPError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        client.close()


if __name__ == "__main__":
    sys.exit(main())
