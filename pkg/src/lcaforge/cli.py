"""Command-line interface: ``lcaforge <command> ...``.

Exit codes: 0 success, 1 findings (violations, invalidating taint) or a
rejected domain operation, 2 usage error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from . import graph as G
from .canonical import canonical_bytes, read_json, write_canonical
from .compute import CharacterizationTable, DemandSpec, Strategy, evaluate, synthetic_cf_table
from .errors import LcaError, SchemaError
from .integrity import RuleSet, StagingStore, default_ruleset, pass1_load, pass2_check, record_path
from .manifest import parse_manifest
from .registry import Advisory, Lockfile, Registry, resolve
from .uncertainty import FactorTable, MCConfig, monte_carlo, synthetic_factor_table
from .versions import VersionReq

EXIT_OK, EXIT_FINDINGS, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3
ENV_REGISTRY = "LCAFORGE_REGISTRY"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ------------------------------------------------------------------ helpers


def _registry(args, create=False) -> Registry:
    root = args.registry or os.environ.get(ENV_REGISTRY)
    if not root:
        raise UsageError(f"no registry: pass --registry or set {ENV_REGISTRY}")
    if create:
        return Registry.init(root)
    if not (Path(root) / "index.json").exists():
        raise UsageError(f"no registry at {root} (run 'lcaforge init' first)")
    return Registry(root)


def _read_input(path):
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {path}")
    return p


def _emit(args, doc, text):
    if args.json:
        sys.stdout.write(canonical_bytes(doc).decode("utf-8") + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _lock(args) -> Lockfile:
    return Lockfile.load(_read_input(args.lock))


# ----------------------------------------------------------------- commands


def cmd_init(args):
    reg = _registry(args, create=True)
    _emit(args, {"registry": str(reg.root)}, f"initialized registry at {reg.root}")
    return EXIT_OK


def cmd_publish(args):
    reg = _registry(args)
    results, text = [], []
    for f in args.files:
        m = parse_manifest(_read_input(f).read_bytes())
        h = reg.publish(m)
        results.append({"id": m.id, "version": str(m.version), "hash": h})
        text.append(f"published {m.id}@{m.version} {h[:16]}")
    _emit(args, {"published": results}, "\n".join(text))
    return EXIT_OK


def cmd_list(args):
    reg = _registry(args)
    entries = reg.list_versions(args.id)
    doc = {"id": args.id, "versions": [e.to_json() for e in entries]}
    text = [f"{args.id}@{e.version} {e.hash[:16]} {e.published_at}{'  [yanked]' if e.yanked else ''}" for e in entries]
    _emit(args, doc, "\n".join(text))
    return EXIT_OK


def cmd_yank(args):
    reg = _registry(args)
    advisory = None
    if args.advisory:
        advisory = Advisory.from_json(read_json(_read_input(args.advisory)))
    reg.yank(args.id, args.version, advisory)
    _emit(args, {"yanked": {"id": args.id, "version": args.version}}, f"yanked {args.id}@{args.version}")
    return EXIT_OK


def cmd_resolve(args):
    reg = _registry(args)
    try:
        req = VersionReq.parse(args.req)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    lock = resolve(args.id, req, reg, allow_yanked=args.allow_yanked)
    lock.save(args.output)
    doc = {"lockfile": str(args.output), "hash": lock.hash, "pins": len(lock.pins)}
    _emit(args, doc, f"resolved {args.id} to {len(lock.pins)} pins -> {args.output} ({lock.hash[:16]})")
    return EXIT_OK


def cmd_validate(args):
    reg = _registry(args)
    lock = _lock(args)
    rules = RuleSet.load(_read_input(args.ruleset)) if args.ruleset else default_ruleset()
    if args.sources:
        staging = pass1_load(args.sources)
        for e in staging.errors:
            print(f"load error: {e.source}: {e.message}", file=sys.stderr)
    else:
        staging = StagingStore.from_registry(reg, lock)
    cf = CharacterizationTable.load(_read_input(args.cf)) if args.cf else None
    rec = pass2_check(staging, lock, rules, advisories=reg.advisories(), cf=cf)
    out = Path(args.output) if args.output else record_path(args.lock)
    rec.save(out)
    lines = [f"{v.severity:7} {v.rule_code:22} {v.model_id}@{v.version} {v.path}: {v.message}" for v in rec.violations]
    lines.append(f"{rec.status}: {len(rec.violations)} violation(s); record {out}")
    _emit(args, rec.to_json(), "\n".join(lines))
    return EXIT_OK if rec.status == "Pass" else EXIT_FINDINGS


def _graph(args):
    reg = _registry(args)
    lock = _lock(args)
    return reg, lock, G.build_graph(lock, reg)


def cmd_compute(args):
    reg, lock, g = _graph(args)
    try:
        demand = DemandSpec.parse(lock.root_id, args.demand)
        strategy = Strategy.parse(args.strategy)
    except (ValueError, LcaError) as exc:
        raise UsageError(str(exc)) from exc
    cf = CharacterizationTable.load(_read_input(args.cf)) if args.cf else synthetic_cf_table()
    if args.mc:
        if args.mc < 1:
            raise UsageError("--mc needs a positive sample count")
        ftable = FactorTable.load(_read_input(args.pedigree)) if args.pedigree else synthetic_factor_table()
        res = monte_carlo(g, demand, strategy, cf, MCConfig(args.mc, args.seed), factor_table=ftable, workers=args.workers)
        doc = res.to_json()
        doc["lockfile_hash"] = lock.hash
        doc["cf_table"] = {"id": cf.table_id, "version": cf.version}
        doc["factor_table"] = {"id": ftable.table_id, "version": ftable.version}
        lines = [f"Monte Carlo: N={res.n} seed={res.seed} ({res.strategy})"]
        for c, st in sorted(res.stats.items()):
            qs = ", ".join(f"q{k}={v:.6g}" for k, v in st["quantiles"].items())
            lines.append(f"  {c}: mean {st['mean']:.6g} sd {st['sd']:.6g} median {st['median']:.6g} {st['unit']} ({qs})")
    else:
        res = evaluate(g, demand, strategy, cf)
        doc = res.to_json()
        doc["lockfile_hash"] = lock.hash
        doc["demand"] = {"product": demand.product, "amount": demand.amount.to_json()}
        doc["cf_table"] = {"id": cf.table_id, "version": cf.version}
        lines = [f"{strategy.value} evaluation of {demand.amount} {demand.product}"]
        for c, q in sorted(res.impacts.items()):
            dev = "" if res.deviation is None else f"  (shortcut deviation {res.deviation[c]:.3%})"
            lines.append(f"  {c}: {q.value:.6g} {q.unit.symbol}{dev}")
        if res.uncharacterized:
            lines.append(f"  uncharacterized flows: {', '.join(res.uncharacterized)}")
        for c in res.cut_offs:
            lines.append(f"  cut off: {c['product']} in {c['consumer']} ({c['justification']})")
    if args.output:
        write_canonical(args.output, doc)
    _emit(args, doc, "\n".join(lines))
    return EXIT_OK


def cmd_advise_publish(args):
    reg = _registry(args)
    try:
        a = Advisory.from_json(read_json(_read_input(args.file)))
    except (KeyError, ValueError) as exc:
        raise SchemaError("/", f"invalid advisory: {exc}") from exc
    reg.publish_advisory(a)
    a = reg.advisory(a.advisory_id)
    _emit(args, a.to_json(), f"published advisory {a.advisory_id} ({a.severity}) on {a.model_id} {a.affected}")
    return EXIT_OK


def audit_report(reg: Registry, lock: Lockfile, g) -> dict:
    taint = G.propagate_taint(g, reg.advisories())
    support = G.support_levels(g)
    hits = G.matching_advisories(g, reg.advisories())
    pins = []
    for mid, ver, h in lock.pins:
        st = taint.statuses[mid]
        entry = reg.entry(mid, ver)
        pins.append(
            {
                "id": mid,
                "version": ver,
                "hash": h,
                "yanked": entry.yanked,
                "support": support[mid].value,
                "taint": st.to_json(),
                "advisories": [a.advisory_id for n, a in hits if n == mid],
            }
        )
    matched = sorted({a.advisory_id for _, a in hits})
    return {
        "lockfile_hash": lock.hash,
        "root": {"id": lock.root_id, "version": lock.root_version},
        "support": support[lock.root_id].value,
        "advisories": [a.to_json() for a in reg.advisories() if a.advisory_id in matched],
        "pins": pins,
        "status": "invalidated" if taint.tainted("Invalidated") else ("tainted" if taint.tainted() else "clean"),
    }


def cmd_audit(args):
    reg, lock, g = _graph(args)
    rep = audit_report(reg, lock, g)
    lines = [f"audit of {lock.root_id}@{lock.root_version}: {rep['status']} (support {rep['support']})"]
    for p in rep["pins"]:
        t = p["taint"]
        flag = "  [yanked]" if p["yanked"] else ""
        if t["status"] == "clean":
            lines.append(f"  {p['id']}@{p['version']}: clean{flag}")
        else:
            lines.append(
                f"  {p['id']}@{p['version']}: {t['severity']} via {t['advisory']} path {' -> '.join(t['path'])}{flag}"
            )
    for a in rep["advisories"]:
        lines.append(f"  note: {a['advisory_id']} {a['severity']} {a['model_id']} {a['affected']}: {a['reason']}")
    _emit(args, rep, "\n".join(lines))
    return EXIT_FINDINGS if rep["status"] == "invalidated" else EXIT_OK


def cmd_export(args):
    reg, lock, g = _graph(args)
    taint = G.propagate_taint(g, reg.advisories())
    if args.format == "dot":
        sys.stdout.write(G.to_dot(g, taint))
    else:
        sys.stdout.write(canonical_bytes(G.to_json(g, taint)).decode("utf-8") + "\n")
    return EXIT_OK


def diff_documents(a, b, prefix="") -> list:
    """Field-level differences between two canonical manifest documents."""
    out = []
    keyed = {"params": "name", "dependencies": "model_id"}
    if isinstance(a, dict) and isinstance(b, dict):
        for k in sorted(set(a) | set(b)):
            if not prefix and k == "version":
                continue
            path = f"{prefix}.{k}" if prefix else k
            if k not in a or k not in b:
                out.append({"path": path, "a": a.get(k), "b": b.get(k)})
            elif not prefix and k in keyed and isinstance(a[k], list) and isinstance(b[k], list):
                key = keyed[k]
                ma, mb = {x[key]: x for x in a[k]}, {x[key]: x for x in b[k]}
                out.extend(diff_documents(ma, mb, path))
            else:
                out.extend(diff_documents(a[k], b[k], path))
        return out
    if a != b:
        out.append({"path": prefix, "a": a, "b": b})
    return out


def cmd_diff(args):
    reg = _registry(args)
    ma, mb = reg.get(args.id, args.ver_a), reg.get(args.id, args.ver_b)
    entries = diff_documents(json.loads(ma.canonical()), json.loads(mb.canonical()))
    doc = {"id": args.id, "a": {"version": args.ver_a, "hash": ma.hash}, "b": {"version": args.ver_b, "hash": mb.hash}, "changes": entries}
    lines = [f"{args.id} {args.ver_a} ({ma.hash[:12]}) -> {args.ver_b} ({mb.hash[:12]}): {len(entries)} change(s)"]
    for e in entries:
        lines.append(f"  {e['path']}: {json.dumps(e['a'], sort_keys=True)} -> {json.dumps(e['b'], sort_keys=True)}")
    _emit(args, doc, "\n".join(lines))
    return EXIT_OK


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--registry", help=f"registry directory (default: ${ENV_REGISTRY})")
    common.add_argument("--json", action="store_true", help="print a machine-readable JSON report")

    p = _Parser(prog="lcaforge", description="Versioned registry and evaluator for composable LCA models.")
    p.add_argument("--version", action="version", version=f"lcaforge {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("init", parents=[common], help="create an empty registry")
    s.set_defaults(func=cmd_init)

    s = sub.add_parser("publish", parents=[common], help="publish manifest files")
    s.add_argument("files", nargs="+")
    s.set_defaults(func=cmd_publish)

    s = sub.add_parser("list", parents=[common], help="list the versions of a model")
    s.add_argument("id")
    s.set_defaults(func=cmd_list)

    s = sub.add_parser("yank", parents=[common], help="exclude a version from future resolutions")
    s.add_argument("id")
    s.add_argument("version")
    s.add_argument("--advisory", help="advisory JSON to publish alongside")
    s.set_defaults(func=cmd_yank)

    s = sub.add_parser("resolve", parents=[common], help="resolve a requirement into a lockfile")
    s.add_argument("id")
    s.add_argument("req")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--allow-yanked", action="store_true")
    s.set_defaults(func=cmd_resolve)

    s = sub.add_parser("validate", parents=[common], help="run the integrity checks on a lockfile")
    s.add_argument("lock")
    s.add_argument("--ruleset")
    s.add_argument("--cf", help="characterization table for shortcut consistency")
    s.add_argument("--sources", nargs="+", help="stage manifests from these paths instead of the registry")
    s.add_argument("-o", "--output", help="validation record path (default: beside the lockfile)")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("compute", parents=[common], help="evaluate impacts for a demand")
    s.add_argument("lock")
    s.add_argument("--demand", required=True, help='functional unit, e.g. "1 item"')
    s.add_argument("--strategy", default="expand", choices=["shortcut", "expand", "compare"])
    s.add_argument("--cf")
    s.add_argument("--mc", type=int, help="Monte Carlo sample count")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--pedigree", help="pedigree factor table")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_compute)

    s = sub.add_parser("advise", help="advisory commands")
    adv = s.add_subparsers(dest="advise_command", parser_class=_Parser)
    adv.required = True
    a = adv.add_parser("publish", parents=[common], help="publish an advisory")
    a.add_argument("file")
    a.set_defaults(func=cmd_advise_publish)

    s = sub.add_parser("audit", parents=[common], help="cross-reference advisories against a lockfile")
    s.add_argument("lock")
    s.set_defaults(func=cmd_audit)

    s = sub.add_parser("export", parents=[common], help="export the dependency graph")
    s.add_argument("lock")
    s.add_argument("--format", choices=["dot", "json"], default="dot")
    s.set_defaults(func=cmd_export)

    s = sub.add_parser("diff", parents=[common], help="compare two versions of a model")
    s.add_argument("id")
    s.add_argument("ver_a")
    s.add_argument("ver_b")
    s.set_defaults(func=cmd_diff)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "workers", 1) < 1:
            raise UsageError("--workers must be at least 1")
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except LcaError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FINDINGS
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
