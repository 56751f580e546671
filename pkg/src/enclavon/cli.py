"""Command-line entry point: case-study demos, the interpreter, and the
latency report.

Exit codes: 0 success, 1 usage/configuration, 2 transport or handshake,
3 integrity failure of sealed data.
"""

from __future__ import annotations

import argparse
import sys

from . import demos
from .bench import run_bench
from .calculus import ParseError, format_env, parse_program, print_value
from .cleanroom import CleanRoomUsageError
from .paillier import PaillierUsageError
from .runtime import RemoteError, Role, TransportError, UsageError, run_app
from .sealing import IntegrityError, RootSealKey, SealingUsageError
from .semantics import eval_two_pass

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_TRANSPORT = 2
EXIT_INTEGRITY = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _add_role_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--role", choices=[r.value for r in Role], default="local",
        help="which half of the program this process runs (default: local)",
    )
    parser.add_argument("--addr", help="HOST:PORT of the enclave endpoint")
    parser.add_argument("--timeout-ms", type=int, default=30_000)


def build_parser() -> _Parser:
    parser = _Parser(prog="enclavon", description=__doc__)
    sub = parser.add_subparsers(dest="demo", required=True)

    p = sub.add_parser("counter", help="secure counter: three gateway calls")
    _add_role_flags(p)

    p = sub.add_parser("pwdcheck", help="password checker against an enclave constant")
    _add_role_flags(p)

    p = sub.add_parser("wallet", help="sealed password wallet")
    p.add_argument(
        "op",
        choices=["add", "get", "delete", "change-master", "exists", "serve"],
    )
    p.add_argument("--master", help="master password")
    p.add_argument("--title")
    p.add_argument("--username")
    p.add_argument("--password")
    p.add_argument("--new-master")
    _add_role_flags(p)

    p = sub.add_parser("cleanroom", help="differentially private data clean room")
    p.add_argument("--seed", type=int)
    p.add_argument("--users", type=int, default=500)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--lo", type=int, default=10_000)
    p.add_argument("--hi", type=int, default=50_000)
    _add_role_flags(p)

    p = sub.add_parser("fedsum", help="federated aggregation over encrypted weights")
    p.add_argument("--seed", type=int)
    p.add_argument("--clients", type=int, default=3)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--dim", type=int, default=4)
    p.add_argument("--test-data", metavar="FILE",
                   help="host file the enclave endorses at startup")
    _add_role_flags(p)

    p = sub.add_parser("calc", help="evaluate a program and show both memories")
    p.add_argument("--program", required=True, metavar="FILE")

    p = sub.add_parser("bench", help="gateway latency report (CSV + figure)")
    p.add_argument("--rounds", type=int, default=500)
    p.add_argument("--out-dir", default="bench_out")

    return parser


def _wallet_op(args) -> tuple | None:
    def need(**fields):
        missing = [name.replace("_", "-") for name, v in fields.items() if v is None]
        if missing:
            raise UsageError(f"wallet {args.op} needs --{' --'.join(missing)}")
        return fields.values()

    if args.op == "serve":
        return None
    if args.op == "add":
        return ("add", *need(master=args.master, title=args.title,
                             username=args.username, password=args.password))
    if args.op == "get":
        return ("get", *need(master=args.master, title=args.title))
    if args.op == "delete":
        return ("delete", *need(master=args.master, title=args.title))
    if args.op == "change-master":
        return ("change-master", *need(master=args.master, new_master=args.new_master))
    return ("exists",)


def _run(args) -> int:
    role = Role(getattr(args, "role", "local"))

    if args.demo == "calc":
        with open(args.program, "r", encoding="utf-8") as fh:
            program = parse_program(fh.read())
        result = eval_two_pass(program)
        print(f"value: {print_value(result.value)}")
        print("enclave env:")
        print(format_env(result.enclave_env) or "  (empty)")
        print("client env:")
        print(format_env(result.client_env) or "  (empty)")
        return EXIT_OK

    if args.demo == "bench":
        report = run_bench(rounds=args.rounds, out_dir=args.out_dir)
        print(report.summary())
        print(f"samples: {report.csv_path}")
        print(f"figure:  {report.fig_path}")
        return EXIT_OK

    if args.demo == "counter":
        build = demos.build_counter()
    elif args.demo == "pwdcheck":
        build = demos.build_pwdcheck()
    elif args.demo == "wallet":
        if role is not Role.CLIENT:
            RootSealKey.from_env()  # fail before serving if sealing is unconfigured
        op = _wallet_op(args)
        if args.op == "serve" and role is not Role.ENCLAVE:
            raise UsageError("wallet serve needs --role enclave")
        build = demos.build_wallet(op)
    elif args.demo == "cleanroom":
        build = demos.build_cleanroom(
            epsilon=args.epsilon, seed=args.seed, n_users=args.users,
            lo=args.lo, hi=args.hi,
        )
    elif args.demo == "fedsum":
        build = demos.build_fedsum(
            num_clients=args.clients, epochs=args.epochs, dim=args.dim,
            seed=args.seed, test_data_path=args.test_data,
        )
    else:  # pragma: no cover - argparse enforces choices
        raise UsageError(f"unknown demo {args.demo!r}")

    run_app(build, role, args.addr, timeout_ms=args.timeout_ms)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except (UsageError, SealingUsageError, PaillierUsageError,
            CleanRoomUsageError, ParseError, FileNotFoundError) as exc:
        print(f"enclavon: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TransportError as exc:
        print(f"enclavon: transport: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except IntegrityError as exc:
        print(f"enclavon: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except RemoteError as exc:
        # enclave-side faults arrive as remote errors naming the exception
        print(f"enclavon: enclave: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY if str(exc).startswith("IntegrityError") else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
