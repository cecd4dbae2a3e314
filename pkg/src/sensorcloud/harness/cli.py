#  Copyright (c) 2026. SensorCloud Protocol contributors. All rights reserved.
#
#  Licensed under the Apache License, Version 2.0 (the "License");
#  you may not use this file except in compliance with the License.
#  You may obtain a copy of the License at
#
#  https://www.apache.org/licenses/LICENSE-2.0
#
#  Unless required by applicable law or agreed to in writing, software
#  distributed under the License is distributed on an "AS IS" BASIS,
#  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
#  See the License for the specific language governing permissions and
#  limitations under the License.

"""The ``sensorcloud`` command line: codec and crypto operations on files, scenarios and vectors."""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional

from rich.console import Console
from rich.table import Table

from ..codec import (
    JsonDocument,
    base64url_decode,
    base64url_encode,
    canonicalize,
    encode_wire,
    parse_wire,
    pem_decode_public_key,
    pem_encode_public_key,
)
from ..errors import SensorCloudError
from ..keys import PublicKeyDirectory
from ..messages import TransmissionHeader, parse_message
from ..security.envelope import decrypt_message, encrypt_fields, encrypt_readings_array
from ..security.primitives import DATA_KEY_BYTES, CounterNonceSource, DataKey, RandomNonceSource, SigningKeyPair
from ..security.signing import sign_message, verify_signature
from ..settings import configure_logging, get_settings
from ..validation import validate
from .scenario import Scenario, ScenarioRunner, demo_scenario, run_scenario
from .vectors import emit_conformance_vectors, seeded_rng

logger = logging.getLogger(__name__)

console = Console()

OPEN_WINDOW = (0, 2**63 - 1)


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text(encoding="utf-8")


def _write(text: str, out: Optional[str]):
    if out is None or out == "-":
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(out).write_text(text, encoding="utf-8")


def _load_data_key(path: str, validity=OPEN_WINDOW) -> DataKey:
    return DataKey(material=base64url_decode(Path(path).read_text(encoding="ascii").strip()), validity=validity)


def _scope(text: str) -> List:
    """``e.0`` -> ``["e", 0]``; an empty string is the top level."""
    return [int(part) if part.isdigit() else part for part in text.split(".") if part]


def cmd_keygen(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = seeded_rng(args.seed) if args.seed is not None else os.urandom
    if args.data_key:
        path = out / f"{args.id}.key"
        path.write_text(base64url_encode(rng(DATA_KEY_BYTES)) + "\n", encoding="ascii")
        console.print(f"[bold]Data key:[/bold] {path}")
        return 0
    keypair = SigningKeyPair.generate(args.id, rng)
    private_path, public_path = out / f"{args.id}.pem", out / f"{args.id}.pub.pem"
    private_path.write_bytes(keypair.private_pem())
    public_path.write_text(pem_encode_public_key(keypair.public_key), encoding="ascii")
    console.print(f"[bold]Private key:[/bold] {private_path}")
    console.print(f"[bold]Public key:[/bold] {public_path}")
    return 0


def cmd_encode(args) -> int:
    doc = json.loads(_read(args.input))
    if "pl" in doc:
        header = TransmissionHeader.model_validate(doc)
        pl = [parse_message(m).to_document() for m in header.pl]
        rendered: JsonDocument = TransmissionHeader(ver=header.ver, seq=header.seq, pl=pl).to_document()
    else:
        rendered = parse_message(doc).to_document()
    _write(encode_wire(rendered), args.out)
    return 0


def cmd_validate(args) -> int:
    report = validate(parse_wire(_read(args.input)))
    _write(json.dumps(report.as_dict(), ensure_ascii=False), None)
    return 0 if report.ok else 1


def cmd_canonicalize(args) -> int:
    _write(canonicalize(parse_wire(_read(args.input))).decode("utf-8"), args.out)
    return 0


def cmd_encrypt(args) -> int:
    doc = parse_wire(_read(args.input))
    key = _load_data_key(args.key, (args.valid_from, args.valid_to))
    allow_expired = args.settings.allow_expired_keys
    nonces = CounterNonceSource(prefix=bytes.fromhex(args.nonce_prefix)) if args.nonce_prefix else RandomNonceSource()
    if args.whole_e:
        encrypted = encrypt_readings_array(doc, key, nonces, at=args.at, allow_expired=allow_expired)
    else:
        encrypted = encrypt_fields(
            doc, _scope(args.scope), args.fields, key, nonces, at=args.at, allow_expired=allow_expired
        )
    _write(encode_wire(encrypted), args.out)
    return 0


def cmd_decrypt(args) -> int:
    doc = parse_wire(_read(args.input))
    keys: Dict[str, DataKey] = {}
    for path in args.key:
        key = _load_data_key(path)
        keys[key.kid] = key
    decrypted, missing = decrypt_message(doc, keys.get)
    _write(encode_wire(decrypted), args.out)
    if missing:
        sys.stderr.write(json.dumps({"undecrypted": missing}) + "\n")
    return 0


def cmd_sign(args) -> int:
    keypair = SigningKeyPair.from_pem(args.id, Path(args.private_key).read_bytes())
    _write(encode_wire(sign_message(parse_wire(_read(args.input)), keypair)), args.out)
    return 0


def cmd_verify(args) -> int:
    directory = PublicKeyDirectory.from_yaml(args.directory) if args.directory else PublicKeyDirectory()
    for item in args.public_key or []:
        entity, _, path = item.partition("=")
        directory.register(entity, pem_decode_public_key(Path(path).read_text(encoding="ascii")))
    result = verify_signature(parse_wire(_read(args.input)), directory)
    _write(json.dumps({"status": result.status.value, "signer": result.signer}), None)
    return 0 if result.ok else 1


def _scenario(args) -> Scenario:
    settings = args.settings
    if args.demo:
        scenario = demo_scenario() if args.seed is None else demo_scenario(args.seed)
        return scenario.model_copy(
            update={"key_window_ms": settings.key_window_ms, "cloud_id": settings.cloud_id}
        )
    if args.scenario:
        scenario = Scenario.load(args.scenario)
        if args.seed is not None:
            scenario = scenario.model_copy(update={"seed": args.seed})
        return scenario
    raise SystemExit(f"{args.command} needs a scenario file or --demo")


def _played(args) -> ScenarioRunner:
    """A runner whose scenario events have all been applied; its assertions are not checked."""
    runner = ScenarioRunner(_scenario(args), args.settings.journal)
    runner.play()
    return runner


def _print_json(value) -> None:
    _write(json.dumps(value, ensure_ascii=False, indent=2, default=str), None)


def cmd_run_scenario(args) -> int:
    report = run_scenario(_scenario(args), raise_on_failure=False, journal=args.settings.journal)
    if args.log:
        with open(args.log, "w", encoding="utf-8") as f:
            for delivery in report.deliveries:
                f.write(json.dumps(delivery, sort_keys=True, ensure_ascii=False) + "\n")
    if args.json:
        _write(report.model_dump_json(indent=2), None)
    else:
        table = Table(title=f"Scenario (seed {report.seed}, {len(report.deliveries)} deliveries)")
        table.add_column("#", justify="right")
        table.add_column("Assertion")
        table.add_column("Result")
        table.add_column("Detail")
        for outcome in report.assertions:
            result = "[green]pass[/green]" if outcome.passed else "[red]FAIL[/red]"
            table.add_row(str(outcome.index), outcome.kind, result, outcome.detail)
        console.print(table)
    return 0 if report.ok else 1


def cmd_flush(args) -> int:
    runner = _played(args)
    gateway = runner.gateway(args.gw)
    items = gateway.flush_all() if args.bn is None else [gateway.flush_device(args.bn)]
    runner.network.run_until_idle()
    _print_json([item.to_document() for item in items])
    return 0


def cmd_distribute(args) -> int:
    runner = _played(args)
    uploads = runner.gateway(args.gw).distribute_keys()
    runner.network.run_until_idle()
    _print_json([upload.to_document() for upload in uploads])
    return 0


def cmd_configure(args) -> int:
    runner = _played(args)
    msg = runner.gateway(args.gw).emit_configuration(args.bn, _read(args.schema))
    runner.network.run_until_idle()
    _print_json(msg.to_document())
    return 0


def cmd_query(args) -> int:
    runner = _played(args)
    service = runner.service(args.srv)
    bt = None
    if args.since is not None:
        bt = [args.since] if args.until is None else [args.since, args.until]
    results = service.query(service.request(args.gw, bt, args.bn, args.n, args.lim, args.off))
    _print_json([{"item": r.document, "undecrypted": r.undecrypted} for r in results])
    return 0


def cmd_send_command(args) -> int:
    runner = _played(args)
    service = runner.service(args.srv)
    params = dict(item.partition("=")[::2] for item in args.param or [])
    seq = service.send_command(args.gw, args.bn, params, args.fn, not args.no_response)
    runner.network.run_until_idle()
    responses = [resp.to_document() for _, resp in service.responses if seq is not None and resp.seq == seq]
    _print_json({"seq": seq, "responses": responses, "diagnostics": service.diagnostics})
    return 0 if seq is None or responses else 1


def cmd_show_pending(args) -> int:
    runner = _played(args)
    pending = runner.service(args.srv).show_pending()
    _print_json({str(seq): cmd.to_document() for seq, cmd in pending.items()})
    return 0


def cmd_emit_vectors(args) -> int:
    for path in emit_conformance_vectors(args.seed, args.out):
        console.print(f"[bold]Wrote[/bold] {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sensorcloud", description="SensorCloud protocol tools")
    parser.add_argument("-v", "--verbose", action="store_true", help="log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="create a P-256 key pair (or a data key) for an entity")
    p.add_argument("--id", required=True)
    p.add_argument("--out", default=".")
    p.add_argument("--seed", type=int)
    p.add_argument("--data-key", action="store_true", help="write 32 random bytes as base64url instead")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("encode", help="render a JSON message or header in wire form")
    p.add_argument("input")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("validate", help="validate a wire message or header")
    p.add_argument("input")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("canonicalize", help="print the canonical form")
    p.add_argument("input")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_canonicalize)

    p = sub.add_parser("encrypt", help="encrypt fields of one scope into an ev array")
    p.add_argument("input")
    p.add_argument("--key", required=True, help="file holding base64url key material")
    p.add_argument("--scope", default="", help="dotted path to the object, e.g. e.0")
    p.add_argument("--fields", nargs="+", default=["sv"])
    p.add_argument("--whole-e", action="store_true", help="encrypt the entire readings array (discouraged)")
    p.add_argument("--nonce-prefix", help="hex; use a counter nonce source with this 4-byte prefix")
    p.add_argument("--valid-from", type=int, default=OPEN_WINDOW[0])
    p.add_argument("--valid-to", type=int, default=OPEN_WINDOW[1])
    p.add_argument("--at", type=int, help="refuse the key unless it is valid at this time (ms)")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_encrypt)

    p = sub.add_parser("decrypt", help="decrypt every ev element with a known key")
    p.add_argument("input")
    p.add_argument("--key", action="append", required=True)
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_decrypt)

    p = sub.add_parser("sign", help="append an ES256 sig block")
    p.add_argument("input")
    p.add_argument("--id", required=True, help="the signing entity")
    p.add_argument("--private-key", required=True)
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_sign)

    p = sub.add_parser("verify", help="verify the sig block of a message")
    p.add_argument("input")
    p.add_argument("--directory", help="YAML file mapping entity ids to PEM files")
    p.add_argument("--public-key", action="append", help="ENTITY=PEM_FILE")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("run-scenario", help="run a scenario on the simulated network")
    p.add_argument("scenario", nargs="?")
    p.add_argument("--demo", action="store_true", help="run the built-in demo scenario")
    p.add_argument("--seed", type=int)
    p.add_argument("--log", help="write the delivery log here, one JSON record per line")
    p.add_argument("--json", action="store_true", help="print the full report as JSON")
    p.set_defaults(func=cmd_run_scenario)

    # node verbs: play a scenario's events, then act on one of its nodes
    played = argparse.ArgumentParser(add_help=False)
    played.add_argument("scenario", nargs="?")
    played.add_argument("--demo", action="store_true", help="start from the built-in demo scenario")
    played.add_argument("--seed", type=int)

    p = sub.add_parser("flush", parents=[played], help="flush a gateway's buffered readings")
    p.add_argument("--gw", required=True)
    p.add_argument("--bn", help="one sensor node; all of them when omitted")
    p.set_defaults(func=cmd_flush)

    p = sub.add_parser("distribute", parents=[played], help="upload undistributed data keys")
    p.add_argument("--gw", required=True)
    p.set_defaults(func=cmd_distribute)

    p = sub.add_parser("configure", parents=[played], help="emit a device schema from a file")
    p.add_argument("--gw", required=True)
    p.add_argument("--bn", required=True)
    p.add_argument("--schema", required=True, help="JSON schema text file")
    p.set_defaults(func=cmd_configure)

    p = sub.add_parser("query", parents=[played], help="query the cloud as a service")
    p.add_argument("--srv", required=True)
    p.add_argument("--gw", required=True, help="gateway id, or * for all")
    p.add_argument("--since", type=int, help="lower bt bound (ms, inclusive)")
    p.add_argument("--until", type=int, help="upper bt bound (ms, inclusive)")
    p.add_argument("--bn", action="append")
    p.add_argument("--n", action="append")
    p.add_argument("--lim", type=int)
    p.add_argument("--off", type=int)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("send-command", parents=[played], help="send an actuator command as a service")
    p.add_argument("--srv", required=True)
    p.add_argument("--gw", required=True)
    p.add_argument("--bn", required=True)
    p.add_argument("--fn")
    p.add_argument("--param", action="append", help="NAME=VALUE")
    p.add_argument("--no-response", action="store_true", help="omit seq; no response is sent")
    p.set_defaults(func=cmd_send_command)

    p = sub.add_parser("show-pending", parents=[played], help="list a service's unanswered commands")
    p.add_argument("--srv", required=True)
    p.set_defaults(func=cmd_show_pending)

    p = sub.add_parser("emit-vectors", help="write conformance vector files")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="vectors")
    p.set_defaults(func=cmd_emit_vectors)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    args.settings = get_settings()
    configure_logging("DEBUG" if args.verbose else args.settings.log_level)
    try:
        return args.func(args)
    except SensorCloudError as err:
        sys.stderr.write(json.dumps(err.to_dict(), default=str) + "\n")
        return 2
    except (OSError, ValueError) as err:
        sys.stderr.write(json.dumps({"error": type(err).__name__, "message": str(err)}) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
