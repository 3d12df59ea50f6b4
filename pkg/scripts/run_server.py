#!/usr/bin/env python3
"""Start a tupli server from the command line.

Flags override the corresponding environment variables; unset values fall
back to the same defaults the service uses everywhere else. Example:

    python3 scripts/run_server.py --storage-root /var/lib/tupli \\
        --listen 0.0.0.0:8080 --admin-password change-me
"""

from __future__ import annotations

import argparse
import os


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--storage-root", help="data directory (STORAGE_ROOT)")
    parser.add_argument("--listen", help="host:port to bind (LISTEN_ADDR)")
    parser.add_argument("--api-secret", help="token signing secret (API_SECRET)")
    parser.add_argument("--admin-username", help="bootstrap admin (ADMIN_USERNAME)")
    parser.add_argument("--admin-password", help="bootstrap password (ADMIN_PASSWORD)")
    parser.add_argument(
        "--open-access",
        action="store_true",
        help="allow anonymous reads of public content (OPEN_ACCESS_MODE)",
    )
    parser.add_argument(
        "--open-signup",
        action="store_true",
        help="allow account creation without credentials (OPEN_SIGNUP_MODE)",
    )
    args = parser.parse_args()

    overrides = {
        "STORAGE_ROOT": args.storage_root,
        "LISTEN_ADDR": args.listen,
        "API_SECRET": args.api_secret,
        "ADMIN_USERNAME": args.admin_username,
        "ADMIN_PASSWORD": args.admin_password,
        "OPEN_ACCESS_MODE": "1" if args.open_access else None,
        "OPEN_SIGNUP_MODE": "1" if args.open_signup else None,
    }
    for key, value in overrides.items():
        if value is not None:
            os.environ[key] = value

    from tupli.server import main as serve

    serve()


if __name__ == "__main__":
    main()
