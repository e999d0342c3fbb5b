"""Single command-line entry point binding all modules.

Every subcommand writes machine-parseable lines to stdout and diagnostics to
stderr. Exit codes: 0 success, 1 domain error, 2 usage error. Nothing except
``sim run`` ever writes to a ledger file.
"""

from __future__ import annotations

import argparse
import random
import sys
from dataclasses import replace

from . import codec, ledger, sim, tracing
from .config import GlobalConfig, load_config
from .guid import GuidPolicy, MalformedGuid, format_guid, is_ioe_entity, new_guid, parse_guid
from .model import IoeError
from .secure import BlobStore, ContentAddress


def main(argv: list[str] | None = None) -> int:
    return run_command(sys.argv[1:] if argv is None else argv)


def run_command(argv: list[str]) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        return args.handler(args, config)
    except (IoeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


# --------------------------------------------------------------------------
# parser


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ioe",
        description="entity/tracker ledger tools: simulate, verify, query, trace",
    )
    parser.add_argument("--config", metavar="PATH", default=None,
                        help="config file (falls back to $IOE_CONFIG, then defaults)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("guid", help="identifier tools")
    guid_sub = p.add_subparsers(dest="guid_command", required=True)
    g_new = guid_sub.add_parser("new", help="generate an entity identifier")
    g_new.add_argument("--preamble", metavar="HEX16", default=None)
    g_new.add_argument("--seed", type=int, default=None)
    g_new.set_defaults(handler=_cmd_guid_new)
    g_check = guid_sub.add_parser("check", help="classify an identifier")
    g_check.add_argument("text")
    g_check.add_argument("--preamble", metavar="HEX16", default=None)
    g_check.set_defaults(handler=_cmd_guid_check)

    p = sub.add_parser("codec", help="wire format tools")
    codec_sub = p.add_subparsers(dest="codec_command", required=True)
    c_dump = codec_sub.add_parser("dump", help="decode a hex packet")
    c_dump.add_argument("hexstring")
    c_dump.set_defaults(handler=_cmd_codec_dump)

    p = sub.add_parser("ledger", help="chain file tools")
    ledger_sub = p.add_subparsers(dest="ledger_command", required=True)
    l_verify = ledger_sub.add_parser("verify", help="revalidate a ledger file")
    l_verify.add_argument("file")
    l_verify.set_defaults(handler=_cmd_ledger_verify)
    l_stats = ledger_sub.add_parser("stats", help="summarize a ledger file")
    l_stats.add_argument("file")
    l_stats.set_defaults(handler=_cmd_ledger_stats)
    l_query = ledger_sub.add_parser("query", help="registrations of one entity")
    l_query.add_argument("file")
    l_query.add_argument("--guid", required=True)
    l_query.set_defaults(handler=_cmd_ledger_query)

    p = sub.add_parser("sim", help="run the radio-world simulation")
    sim_sub = p.add_subparsers(dest="sim_command", required=True)
    s_run = sim_sub.add_parser("run", help="simulate a scenario into a ledger file")
    s_run.add_argument("--scenario", required=True)
    s_run.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")
    s_run.add_argument("--ledger", required=True, metavar="OUT")
    s_run.set_defaults(handler=_cmd_sim_run)

    p = sub.add_parser("trace", help="reconstruct entity movements")
    trace_sub = p.add_subparsers(dest="trace_command", required=True)
    for name in ("direct", "interpolate", "spread"):
        t = trace_sub.add_parser(name)
        t.add_argument("--guid", required=True)
        t.add_argument("--ledger", required=True, metavar="FILE")
        if name == "interpolate":
            t.add_argument("--alpha", type=int, default=None)
        if name in ("interpolate", "spread"):
            t.add_argument("--delta", type=float, default=None, metavar="M")
        t.add_argument("--export", metavar="PATH", default=None)
        t.set_defaults(handler=_cmd_trace, strategy=name)

    p = sub.add_parser("blob", help="encrypted payload store tools")
    blob_sub = p.add_subparsers(dest="blob_command", required=True)
    b_get = blob_sub.add_parser("get", help="fetch and describe one blob")
    b_get.add_argument("address")
    b_get.add_argument("--store", required=True, metavar="DIR")
    b_get.add_argument("--raw", action="store_true", help="write raw envelope bytes to stdout")
    b_get.set_defaults(handler=_cmd_blob_get)
    b_verify = blob_sub.add_parser("verify", help="recheck every stored blob")
    b_verify.add_argument("store", metavar="DIR")
    b_verify.set_defaults(handler=_cmd_blob_verify)

    return parser


def _policy(args, config: GlobalConfig) -> GuidPolicy:
    preamble = getattr(args, "preamble", None)
    if preamble is not None:
        return GuidPolicy(int(preamble, 16))
    return GuidPolicy(config.guid_preamble)


# --------------------------------------------------------------------------
# handlers


def _cmd_guid_new(args, config: GlobalConfig) -> int:
    policy = _policy(args, config)
    rng = random.Random(args.seed) if args.seed is not None else policy.rng()
    print(format_guid(new_guid(policy, rng)))
    return 0


def _cmd_guid_check(args, config: GlobalConfig) -> int:
    policy = _policy(args, config)
    try:
        g = parse_guid(args.text)
    except MalformedGuid as exc:
        print(f"malformed: {exc}", file=sys.stderr)
        return 1
    if is_ioe_entity(g, policy):
        print(f"entity {format_guid(g)}")
        return 0
    print(f"foreign {format_guid(g)}")
    return 1


def _cmd_codec_dump(args, config: GlobalConfig) -> int:
    try:
        data = bytes.fromhex(args.hexstring)
    except ValueError:
        print("error: argument is not a hex string", file=sys.stderr)
        return 1
    print(codec.dump_packet(data))
    return 0


def _cmd_ledger_verify(args, config: GlobalConfig) -> int:
    report, blocks = ledger.verify_ledger_file(args.file, config.max_block_size)
    if report.ok:
        print(f"ok {blocks} blocks")
        return 0
    print(f"bad block {report.first_bad_index}: {report.reason}")
    return 1


def _cmd_ledger_stats(args, config: GlobalConfig) -> int:
    chain = ledger.read_ledger_file(args.file, config.max_block_size)
    regs = list(chain.iter_sealed())
    entities = {r.entity_guid for r in regs}
    print(f"blocks {len(chain.blocks)}")
    print(f"registrations {len(regs)}")
    print(f"entities {len(entities)}")
    if regs:
        times = sorted(r.time for r in regs)
        print(f"span {times[0]} {times[-1]}")
    return 0


def _cmd_ledger_query(args, config: GlobalConfig) -> int:
    chain = ledger.read_ledger_file(args.file, config.max_block_size)
    target = parse_guid(args.guid)
    for r in chain.registrations_for(target):
        neighbors = ",".join(str(g) for g in r.neighbors) or "-"
        print(
            f"{r.time} {r.location.latitude:.6f} {r.location.longitude:.6f} "
            f"{r.resolution.value} {neighbors}"
        )
    return 0


def _cmd_sim_run(args, config: GlobalConfig) -> int:
    scenario = sim.load_scenario(args.scenario)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    chain = sim.run_scenario(
        scenario,
        difficulty_bits=config.difficulty_bits,
        max_block_size=config.max_block_size,
    )
    ledger.write_ledger_file(chain, args.ledger)
    print(f"sealed {len(chain.blocks)} blocks, {chain.sealed_count()} registrations -> {args.ledger}")
    return 0


def _cmd_trace(args, config: GlobalConfig) -> int:
    chain = ledger.read_ledger_file(args.ledger, config.max_block_size)
    target = parse_guid(args.guid)
    delta = getattr(args, "delta", None)
    delta = config.delta_m if delta is None else delta

    if args.strategy == "spread":
        matrix = tracing.spread_trace(target, chain, delta)
        lines = [f"rows {len(matrix.rows)}"]
        for cell in sorted(matrix.cell_counts):
            lines.append(
                f"cell {cell[0]},{cell[1]} {matrix.cell_counts[cell]} "
                f"{matrix.probabilities[cell]:.6f}"
            )
        if not matrix.rows:
            print(f"warning: {args.guid} never appears as a neighbor", file=sys.stderr)
        _emit(lines, args.export)
        return 0

    if args.strategy == "direct":
        trace = tracing.direct_trace(target, chain)
        annotation = tracing.TraceAnnotation({})
    else:
        alpha = args.alpha if args.alpha is not None else config.alpha
        trace, annotation = tracing.interpolate_trace(target, chain, alpha, delta)
    lines = []
    for i, p in enumerate(trace.points):
        witness = annotation.witness_for(i)
        tag = str(witness.neighbor) if witness else "-"
        lines.append(
            f"{p.time} {p.location.latitude:.6f} {p.location.longitude:.6f} "
            f"{p.provenance.name.lower()} {tag}"
        )
    if not lines:
        print(f"warning: no trace points for {args.guid}", file=sys.stderr)
    _emit(lines, args.export)
    return 0


def _emit(lines: list[str], export_path: str | None) -> None:
    for line in lines:
        print(line)
    if export_path:
        with open(export_path, "w", encoding="ascii") as fh:
            fh.write("\n".join(lines) + ("\n" if lines else ""))


def _cmd_blob_get(args, config: GlobalConfig) -> int:
    store = BlobStore(args.store)
    envelope = store.get(ContentAddress.parse(args.address))
    if args.raw:
        from .secure import encode_envelope

        sys.stdout.buffer.write(encode_envelope(envelope))
        return 0
    print(f"scheme {envelope.scheme_id}")
    print(f"fingerprint {envelope.recipient_fingerprint.hex()}")
    print(f"bytes {len(envelope.ciphertext)}")
    return 0


def _cmd_blob_verify(args, config: GlobalConfig) -> int:
    store = BlobStore(args.store)
    ok, bad = store.verify()
    for address in bad:
        print(f"bad {address}")
    if bad:
        return 1
    print(f"ok {ok} blobs")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
