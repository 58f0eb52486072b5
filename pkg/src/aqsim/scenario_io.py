"""Scenario file format, trace export and import.

Scenarios are strict JSON: unknown keys are rejected anywhere, because a
scenario file is an experiment record and a typo that parses silently
corrupts results. Rationals travel as "num/den" strings and never pass
through floating point.

A trace file is line-delimited JSON: one header record binding the trace
to the scenario (content hash plus the embedded scenario itself), one
record per event, then the per-round queue statistics. The file carries
everything needed to reproduce the run.
"""

from __future__ import annotations

import hashlib
import json
from fractions import Fraction

from .buckets import AdversaryType
from .engine import (ExecutionTrace, FailureEvent, Injection, PacketRecord,
                     RecoveryEvent, ScenarioConfig)
from .netmodel import Edge, Network
from .policies import POLICY_NAMES, Prioritized, parse_policy

TRACE_FORMAT = "aqsim-trace"
TRACE_VERSION = 1


class ParseError(ValueError):
    """Scenario or trace text that does not match the schema."""


def format_rational(value: Fraction) -> str:
    return f"{value.numerator}/{value.denominator}"


def parse_rational(text: str) -> Fraction:
    try:
        if "/" in text:
            num, den = text.split("/", 1)
            return Fraction(int(num), int(den))
        return Fraction(int(text))
    except (ValueError, ZeroDivisionError) as exc:
        raise ParseError(f"bad rational {text!r}: {exc}") from None


def _require(mapping, where, required, optional=()):
    if not isinstance(mapping, dict):
        raise ParseError(f"{where}: expected an object")
    allowed = set(required) | set(optional)
    for key in mapping:
        if key not in allowed:
            raise ParseError(f"{where}: unknown key {key!r}")
    for key in required:
        if key not in mapping:
            raise ParseError(f"{where}: missing key {key!r}")
    return mapping


# -- scenario <-> dict ---------------------------------------------------------


def scenario_to_dict(config: ScenarioConfig) -> dict:
    net = config.network
    edges = []
    for eid in sorted(net.edges):
        e = net.edges[eid]
        entry = {"id": e.id, "tail": e.tail, "head": e.head}
        if e.slowness != 1:
            entry["slowness"] = e.slowness
        edges.append(entry)
    policy = config.policy
    if isinstance(policy, Prioritized):
        policy_doc = {"name": policy.base, "priorities": policy.levels}
    else:
        policy_doc = {"name": policy}
    injections = []
    for inj in config.injections:
        entry = {"round": inj.round, "path": list(inj.path)}
        if inj.priority:
            entry["priority"] = inj.priority
        if inj.id is not None:
            entry["id"] = inj.id
        injections.append(entry)
    run = {"horizon": config.horizon}
    if config.seed is not None:
        run["seed"] = config.seed
    if config.promote_after_tau:
        run["promote_after_tau"] = True
    if not config.enforce_buckets:
        run["enforce_buckets"] = False
    return {
        "network": {"nodes": sorted(net.nodes), "edges": edges},
        "adversary": {
            "r": format_rational(config.adversary.rate),
            "b": config.adversary.burst,
            "delta": config.adversary.delay,
            "tau": config.tau,
            "tau_prime": config.tau_prime,
        },
        "policy": policy_doc,
        "schedules": {
            "injections": injections,
            "stalls": [{"edge": edge, "rounds": sorted(config.stalls[edge])}
                       for edge in sorted(config.stalls)],
            "annihilations": [
                {"edge": edge, "round": rnd, "delay": config.annihilation_delays[(edge, rnd)]}
                for edge, rnd in sorted(config.annihilation_delays)],
            "failures": [
                {"edge": ev.edge, "round": ev.round, "notify_delay": ev.notify_delay}
                for ev in config.failures],
            "recoveries": [{"edge": ev.edge, "round": ev.round}
                           for ev in config.recoveries],
        },
        "run": run,
    }


def scenario_from_dict(doc: dict) -> ScenarioConfig:
    _require(doc, "scenario", ("network", "adversary", "policy", "schedules", "run"))
    net_doc = _require(doc["network"], "network", ("nodes", "edges"))
    edges = []
    for i, entry in enumerate(net_doc["edges"]):
        _require(entry, f"network.edges[{i}]", ("id", "tail", "head"), ("slowness",))
        edges.append(Edge(entry["id"], entry["tail"], entry["head"],
                          entry.get("slowness", 1)))
    network = Network(net_doc["nodes"], edges)

    adv_doc = _require(doc["adversary"], "adversary",
                       ("r", "b", "delta", "tau", "tau_prime"))
    adversary = AdversaryType(parse_rational(adv_doc["r"]), adv_doc["b"],
                              adv_doc["delta"])

    pol_doc = _require(doc["policy"], "policy", ("name",), ("priorities",))
    if pol_doc["name"] not in POLICY_NAMES:
        raise ParseError(f"policy: unknown name {pol_doc['name']!r}")
    policy = parse_policy(pol_doc["name"], pol_doc.get("priorities"))

    sched = _require(doc["schedules"], "schedules",
                     (), ("injections", "stalls", "annihilations", "failures",
                          "recoveries"))
    injections = []
    for i, entry in enumerate(sched.get("injections", ())):
        _require(entry, f"injections[{i}]", ("round", "path"), ("priority", "id"))
        injections.append(Injection(entry["round"], tuple(entry["path"]),
                                    entry.get("priority", 0), entry.get("id")))
    stalls = {}
    for i, entry in enumerate(sched.get("stalls", ())):
        _require(entry, f"stalls[{i}]", ("edge", "rounds"))
        stalls[entry["edge"]] = frozenset(entry["rounds"])
    delays = {}
    for i, entry in enumerate(sched.get("annihilations", ())):
        _require(entry, f"annihilations[{i}]", ("edge", "round", "delay"))
        delays[(entry["edge"], entry["round"])] = entry["delay"]
    failures = []
    for i, entry in enumerate(sched.get("failures", ())):
        _require(entry, f"failures[{i}]", ("edge", "round"), ("notify_delay",))
        failures.append(FailureEvent(entry["edge"], entry["round"],
                                     entry.get("notify_delay", 0)))
    recoveries = []
    for i, entry in enumerate(sched.get("recoveries", ())):
        _require(entry, f"recoveries[{i}]", ("edge", "round"))
        recoveries.append(RecoveryEvent(entry["edge"], entry["round"]))

    run_doc = _require(doc["run"], "run", ("horizon",),
                       ("seed", "promote_after_tau", "enforce_buckets"))
    config = ScenarioConfig(
        network=network,
        adversary=adversary,
        policy=policy,
        horizon=run_doc["horizon"],
        injections=tuple(injections),
        stalls=stalls,
        annihilation_delays=delays,
        failures=tuple(failures),
        recoveries=tuple(recoveries),
        tau=adv_doc["tau"],
        tau_prime=adv_doc["tau_prime"],
        seed=run_doc.get("seed"),
        promote_after_tau=run_doc.get("promote_after_tau", False),
        enforce_buckets=run_doc.get("enforce_buckets", True),
    )
    return config.validate()


def dumps_scenario(config: ScenarioConfig) -> str:
    return json.dumps(scenario_to_dict(config), indent=2, sort_keys=True) + "\n"


def loads_scenario(text: str) -> ScenarioConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(doc)


def save_scenario(config: ScenarioConfig, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_scenario(config))


def load_scenario(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return loads_scenario(fh.read())


def scenario_hash(config: ScenarioConfig) -> str:
    return hashlib.sha256(dumps_scenario(config).encode()).hexdigest()


# -- traces ---------------------------------------------------------------------


def _event_lines(trace: ExecutionTrace):
    for ev in trace.events:
        yield json.dumps({"event": ev}, separators=(",", ":"), default=list)
    yield json.dumps({"q_totals": trace.q_totals}, separators=(",", ":"))
    yield json.dumps({"queue_sizes": trace.queue_sizes},
                     separators=(",", ":"), sort_keys=True)


def trace_digest(trace: ExecutionTrace) -> str:
    """Hash of the dynamic record: events plus per-round queue statistics.

    Canonical over semantically equal traces (queue snapshots are hashed
    in sorted key order), so a saved and reloaded trace keeps its digest.
    """
    h = hashlib.sha256()
    h.update(repr(trace.events).encode())
    h.update(repr(trace.q_totals).encode())
    h.update(repr([sorted(d.items()) for d in trace.queue_sizes]).encode())
    return h.hexdigest()


def save_trace(trace: ExecutionTrace, path):
    header = {
        "format": TRACE_FORMAT,
        "version": TRACE_VERSION,
        "scenario_hash": scenario_hash(trace.config),
        "scenario": scenario_to_dict(trace.config),
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for line in _event_lines(trace):
            fh.write(line + "\n")


def _tuplify(value):
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    return value


def load_trace(path) -> ExecutionTrace:
    with open(path, encoding="utf-8") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"trace header: {exc.msg}") from None
        _require(header, "trace header",
                 ("format", "version", "scenario_hash", "scenario"))
        if header["format"] != TRACE_FORMAT or header["version"] != TRACE_VERSION:
            raise ParseError(
                f"unsupported trace format {header['format']!r} "
                f"v{header['version']}")
        config = scenario_from_dict(header["scenario"])
        if header["scenario_hash"] != scenario_hash(config):
            raise ParseError("trace header hash does not match its scenario")
        trace = ExecutionTrace(config)
        for lineno, line in enumerate(fh, 2):
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"line {lineno}: {exc.msg}") from None
            if "event" in doc:
                trace.events.append(_tuplify(doc["event"]))
            elif "q_totals" in doc:
                trace.q_totals = doc["q_totals"]
            elif "queue_sizes" in doc:
                trace.queue_sizes = doc["queue_sizes"]
            else:
                raise ParseError(f"line {lineno}: unknown record")
    _rebuild_packet_records(trace)
    return trace


def _rebuild_packet_records(trace: ExecutionTrace):
    """Fold the event stream back into per-packet audit records."""
    for ev in trace.events:
        kind = ev[0]
        if kind == "inject":
            _, rnd, pid, path, pri = ev
            trace.packets[pid] = PacketRecord(pid, rnd, pri, path, path)
        elif kind == "reroute":
            _, _rnd, pid, old_suffix, new_suffix, _edge, _fail = ev
            rec = trace.packets[pid]
            prefix = rec.final_path[: len(rec.final_path) - len(old_suffix)]
            rec.final_path = prefix + new_suffix
            rec.rerouted = True
        elif kind == "absorb":
            _, rnd, pid = ev
            trace.packets[pid].absorbed_round = rnd


def write_metrics_csv(trace: ExecutionTrace, path):
    """Per-round rows: round, edge, queue length and the total queued."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("round,edge,queue_len,q_total\n")
        for rnd, (sizes, total) in enumerate(
                zip(trace.queue_sizes, trace.q_totals), 1):
            if not sizes:
                fh.write(f"{rnd},,0,{total}\n")
                continue
            for edge in sorted(sizes):
                fh.write(f"{rnd},{edge},{sizes[edge]},{total}\n")
