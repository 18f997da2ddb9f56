"""Staged pipeline: ingest → cluster → personas → simulate → evaluate → bootstrap → report.

Every stage writes JSON artifacts under the output directory and records in
``manifest.json`` the hashes of what it read and what it wrote. A stage whose
recorded inputs still match is skipped. Artifacts embed the config hash so
later stages can refuse inputs produced under a different configuration.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import statistics
import threading
from collections import defaultdict
from collections.abc import Callable
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .agent.loop import journey_stats, run_session
from .agent.records import Limits, SessionLog
from .clustering import Assignment, ClusterModel, assign_all, fit_best, nearest_sessions, select_k
from .config import RunConfig, sha256_file
from .errors import MissingStageInput, StageError, StaleManifest
from .evaluation import behavioral_distribution, bootstrap_analysis, evaluate, shop_result
from .ingest import Session, extract_features, parse_events, sessionize, standardize
from .llm import make_backend
from .persona import (
    AgentProfile,
    ClusterSummary,
    Lexicons,
    ShopMeta,
    ShopNorms,
    aggregate_buyers,
    build_persona,
    calibrate_intent_mix,
    compose_profiles,
    extract_preferences,
    generate_intents,
)
from .persona.intents import BuyerIntent
from .persona.profiles import allocate_agents
from .seeding import derive_seed, session_seed
from .storefront.model import Storefront, load_storefront

log = logging.getLogger(__name__)

STAGES = ("ingest", "cluster", "personas", "simulate", "evaluate", "bootstrap", "report")
UPSTREAM = {
    "cluster": ("ingest",),
    "personas": ("ingest", "cluster"),
    "simulate": ("personas",),
    "evaluate": ("simulate",),
    "bootstrap": ("simulate",),
    "report": ("evaluate",),
}
THEMES = ("control", "treatment")
CHUNK = 50


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


# ---------------------------------------------------------------- manifest


class Manifest:
    def __init__(self, path: Path):
        self.path = path
        self.entries: dict[str, dict] = {}
        if path.exists():
            hint = f"delete {path} (or rerun with --force) to rebuild every stage"
            try:
                data = json.loads(path.read_text(encoding="utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                raise StaleManifest(f"manifest {path} is unreadable: {exc}", hint) from None
            stages = data.get("stages") if isinstance(data, dict) else None
            if not isinstance(stages, dict) or not all(
                isinstance(e, dict) and isinstance(e.get("inputs"), dict) and isinstance(e.get("outputs"), dict)
                for e in stages.values()
            ):
                raise StaleManifest(f"manifest {path} has an unexpected layout", hint)
            self.entries = stages

    def outputs_intact(self, stage: str, root: Path) -> bool:
        entry = self.entries.get(stage)
        if entry is None:
            return False
        return all((root / rel).exists() and sha256_file(root / rel) == digest for rel, digest in entry["outputs"].items())

    def is_current(self, stage: str, inputs: dict, root: Path) -> bool:
        entry = self.entries.get(stage)
        return entry is not None and entry["inputs"] == inputs and self.outputs_intact(stage, root)

    def record(self, stage: str, inputs: dict, outputs: dict) -> None:
        self.entries[stage] = {"inputs": inputs, "outputs": outputs}
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(dump_json({"stages": self.entries}), encoding="utf-8")


@dataclass(frozen=True, slots=True)
class StageResult:
    stage: str
    status: str  # "ran" | "up-to-date"
    outputs: tuple[str, ...]


# ----------------------------------------------------------- simulate jobs


_BACKENDS: dict[str, object] = {}
_BACKENDS_LOCK = threading.Lock()


def _shared_backend(cfg: dict):
    # one backend per process and config, so threads share the HTTP in-flight cap
    key = json.dumps(cfg, sort_keys=True)
    with _BACKENDS_LOCK:
        if key not in _BACKENDS:
            _BACKENDS[key] = make_backend(cfg)
        return _BACKENDS[key]


def _simulate_chunk(job: tuple) -> list[dict]:
    """Worker entry point: run one chunk of profiles against one theme."""
    storefront, theme, profiles, backend_cfg, limits, run_seed, memory_enabled, config_hash = job
    backend = _shared_backend(backend_cfg)
    out = []
    for profile in profiles:
        seed = session_seed(run_seed, profile.shop_id, profile.agent_index, theme)
        session = run_session(profile, storefront, theme, backend, limits, seed, memory_enabled=memory_enabled)
        session.config_hash = config_hash
        out.append(session.to_json())
    return out


def repeat_seed(run_seed: int, run: int) -> int:
    return derive_seed(run_seed, "repeat", run)


# ---------------------------------------------------------------- pipeline


class Pipeline:
    def __init__(self, config: RunConfig, force: bool = False):
        self.config = config
        self.root = config.output_dir
        self.force = force
        self.hash = config.config_hash
        try:
            self.manifest = Manifest(self.root / "manifest.json")
        except StaleManifest:
            if not force:
                raise
            log.warning("ignoring unreadable manifest; rebuilding")
            (self.root / "manifest.json").unlink()
            self.manifest = Manifest(self.root / "manifest.json")
        self._storefronts: dict[str, Storefront] = {}

    # -- plumbing

    def _write(self, rel: str, text: str, outputs: dict) -> None:
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        outputs[rel] = hashlib.sha256(text.encode("utf-8")).hexdigest()

    def _read(self, rel: str) -> dict:
        path = self.root / rel
        if not path.exists():
            raise MissingStageInput(f"missing artifact {path}")
        obj = json.loads(path.read_text(encoding="utf-8"))
        if obj.get("config_hash") != self.hash:
            raise StageError(f"{rel} was produced under config {obj.get('config_hash')}, not {self.hash}; rerun with --force")
        return obj

    def _inputs(self, stage: str) -> dict:
        inputs = {"config_hash": self.hash}
        for up in UPSTREAM.get(stage, ()):
            if not self.manifest.outputs_intact(up, self.root):
                raise MissingStageInput(f"stage '{stage}' needs the outputs of '{up}'; run `synthab {up}` first")
            inputs[f"stage:{up}"] = hashlib.sha256(
                dump_json(self.manifest.entries[up]["outputs"]).encode("utf-8")
            ).hexdigest()
        if stage in ("ingest", "personas", "simulate"):
            for shop in self.config.shops:
                if stage == "ingest":
                    inputs[f"clickstream:{shop.shop_id}"] = sha256_file(shop.clickstream_path)
                inputs[f"storefront:{shop.shop_id}"] = sha256_file(shop.storefront_path)
        if stage == "simulate":
            inputs["repeat"] = self.config.repeat
        if stage == "personas" and self.config.lexicons_path is not None:
            inputs["lexicons"] = sha256_file(self.config.lexicons_path)
        if stage == "report" and self.manifest.outputs_intact("bootstrap", self.root):
            inputs["stage:bootstrap"] = hashlib.sha256(
                dump_json(self.manifest.entries["bootstrap"]["outputs"]).encode("utf-8")
            ).hexdigest()
        return inputs

    def run_stage(self, stage: str) -> StageResult:
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        inputs = self._inputs(stage)
        if not self.force and self.manifest.is_current(stage, inputs, self.root):
            log.info("%s: up-to-date", stage)
            return StageResult(stage, "up-to-date", tuple(self.manifest.entries[stage]["outputs"]))
        outputs: dict[str, str] = {}
        getattr(self, f"_stage_{stage}")(outputs)
        self.manifest.record(stage, inputs, outputs)
        log.info("%s: wrote %d artifact(s)", stage, len(outputs))
        return StageResult(stage, "ran", tuple(outputs))

    def run_all(self, stages=STAGES) -> list[StageResult]:
        return [self.run_stage(s) for s in stages if s != "bootstrap" or self.config.repeat >= 2]

    def storefront(self, shop_id: str) -> Storefront:
        if shop_id not in self._storefronts:
            shop = next(s for s in self.config.shops if s.shop_id == shop_id)
            self._storefronts[shop_id] = load_storefront(json.loads(shop.storefront_path.read_text(encoding="utf-8")))
        return self._storefronts[shop_id]

    def _header(self, **extra) -> dict:
        return {"config_hash": self.hash, "seed": self.config.run_seed, **extra}

    def _lexicons(self) -> Lexicons:
        return Lexicons.load(self.config.lexicons_path) if self.config.lexicons_path else Lexicons()

    # -- stages

    def _stage_ingest(self, outputs: dict) -> None:
        for shop in self.config.shops:
            with open(shop.clickstream_path, encoding="utf-8") as fh:
                parsed = parse_events(fh)
            for bad in parsed.errors:
                log.warning("%s line %d skipped: %s", shop.shop_id, bad.lineno, bad.message)
            sessions = sessionize(parsed.events)
            doc = self._header(
                shop_id=shop.shop_id,
                malformed_lines=[{"line": b.lineno, "error": b.message} for b in parsed.errors],
                sessions=[s.to_json() for s in sessions],
                features=[extract_features(s).to_json() for s in sessions],
            )
            self._write(f"ingest/{shop.shop_id}.json", dump_json(doc), outputs)

    def _sessions(self, shop_id: str) -> tuple[list[Session], list]:
        doc = self._read(f"ingest/{shop_id}.json")
        sessions = [Session.from_json(s) for s in doc["sessions"]]
        return sessions, [extract_features(s) for s in sessions]

    def _stage_cluster(self, outputs: dict) -> None:
        cfg = self.config
        for shop in cfg.shops:
            sessions, feats = self._sessions(shop.shop_id)
            X = standardize([f.as_vector() for f in feats])
            seed = derive_seed(cfg.run_seed, "cluster", shop.shop_id)
            n = len(sessions)
            report = None
            if cfg.k == "auto":
                lo, hi = min(cfg.k_range[0], n), min(cfg.k_range[1], n)
                report = select_k(X, (lo, hi), seed=seed, restarts=cfg.restarts)
                k = report.chosen_k
                model = fit_best(X, k, seed=derive_seed(seed, "k", k), restarts=cfg.restarts)
            else:
                k = min(int(cfg.k), n)
                model = fit_best(X, k, seed=seed, restarts=cfg.restarts)
            assignments = assign_all(model, X)
            doc = self._header(
                shop_id=shop.shop_id,
                model=model.to_json(),
                k_selection=None if report is None else report.to_json(),
                sizes=[sum(1 for a in assignments if a.cluster_id == c) for c in range(model.k)],
                assignments=[
                    {"session_id": s.session_id, "cluster_id": a.cluster_id, "distance": a.distance, "confidence": a.confidence}
                    for s, a in zip(sessions, assignments)
                ],
            )
            self._write(f"cluster/{shop.shop_id}.json", dump_json(doc), outputs)

    def _intents(self, prefs, a2c_mean: float, n: int, seed: int) -> list[BuyerIntent]:
        if n == 1:
            # the mix formula needs two agents; a lone agent follows the majority outcome
            pair = generate_intents(prefs, 1, 2, seed)
            want = a2c_mean >= 0.5
            return [next(i for i in pair if i.purchase_focused == want)]
        return generate_intents(prefs, calibrate_intent_mix(a2c_mean, n), n, seed)

    def _stage_personas(self, outputs: dict) -> None:
        cfg = self.config
        backend = make_backend(cfg.backend)
        lexicons = self._lexicons()
        for shop in cfg.shops:
            sf = self.storefront(shop.shop_id)
            sessions, feats = self._sessions(shop.shop_id)
            cdoc = self._read(f"cluster/{shop.shop_id}.json")
            model = ClusterModel.from_json(cdoc["model"])
            assignments = {
                a["session_id"]: Assignment(a["cluster_id"], a["distance"], a["confidence"]) for a in cdoc["assignments"]
            }
            by_id = {s.session_id: s for s in sessions}
            by_buyer: dict[str, list[Session]] = defaultdict(list)
            for s in sessions:
                by_buyer[s.buyer_id].append(s)
            a2c_flag = {s.session_id: f.a2c_count > 0 for s, f in zip(sessions, feats)}
            catalog = {pid: (p.title, p.price, p.category) for pid, p in sf.catalog.items()}
            medians = sf.category_medians()
            norms = ShopNorms.from_features(feats)
            titles = [p.title for p in sf.catalog.values()]
            meta = ShopMeta(sf.name, sf.industry, sf.country)
            alloc = allocate_agents({c: n for c, n in enumerate(cdoc["sizes"])}, cfg.agents_per_shop)
            next_index = 0
            clusters = []
            for cid in range(model.k):
                n_c = alloc.get(cid, 0)
                if n_c == 0:
                    continue
                members = [sid for sid, a in assignments.items() if a.cluster_id == cid]
                agg = aggregate_buyers([by_id[sid] for sid in members], catalog)
                prefs = extract_preferences(meta, ClusterSummary.from_aggregate(cid, agg), backend, titles)
                a2c_mean = sum(a2c_flag[sid] for sid in members) / len(members)
                intents = self._intents(prefs, a2c_mean, n_c, derive_seed(cfg.run_seed, "intents", shop.shop_id, cid))
                buyers: list[str] = []
                for sid in nearest_sessions(model, assignments, cid, n_c):
                    if by_id[sid].buyer_id not in buyers:
                        buyers.append(by_id[sid].buyer_id)
                personas = [
                    build_persona(aggregate_buyers(by_buyer[b], catalog), medians, norms, lexicons, backend)
                    for b in buyers
                ]
                cycled = [personas[i % len(personas)] for i in range(n_c)]
                profiles = compose_profiles(intents, cycled, prefs, cid, shop.shop_id, medians)
                for p in profiles:
                    p.agent_index = next_index
                    next_index += 1
                clusters.append(
                    {
                        "cluster_id": cid,
                        "agents": n_c,
                        "a2c_mean": a2c_mean,
                        "preferences": prefs.to_json(),
                        "intents": [i.to_json() for i in intents],
                        "personas": [p.to_json() for p in personas],
                        "persona_buyers": buyers,
                        "profiles": [p.to_json() for p in profiles],
                    }
                )
            doc = self._header(shop_id=shop.shop_id, allocation={str(k): v for k, v in sorted(alloc.items())}, clusters=clusters)
            self._write(f"personas/{shop.shop_id}.json", dump_json(doc), outputs)

    def profiles(self, shop_id: str) -> list[AgentProfile]:
        doc = self._read(f"personas/{shop_id}.json")
        return [AgentProfile.from_json(p) for c in doc["clusters"] for p in c["profiles"]]

    def _stage_simulate(self, outputs: dict) -> None:
        cfg = self.config
        jobs, keys = [], []
        for run in range(cfg.repeat):
            seed = repeat_seed(cfg.run_seed, run)
            for shop in cfg.shops:
                sf = self.storefront(shop.shop_id)
                profiles = self.profiles(shop.shop_id)
                for theme in THEMES:
                    for lo in range(0, len(profiles), CHUNK):
                        jobs.append((sf, theme, profiles[lo : lo + CHUNK], cfg.backend, cfg.limits, seed,
                                     cfg.memory_enabled, self.hash))
                        keys.append((run, shop.shop_id, theme))
        results = self._map(_simulate_chunk, jobs)
        grouped: dict[tuple, list[dict]] = defaultdict(list)
        for key, logs in zip(keys, results):
            grouped[key].extend(logs)
        for (run, shop_id, theme), logs in sorted(grouped.items()):
            logs.sort(key=lambda d: d["agent_index"])
            text = "".join(json.dumps(d, sort_keys=True) + "\n" for d in logs)
            self._write(f"simulate/run{run}/{shop_id}__{theme}.jsonl", text, outputs)

    def _map(self, fn: Callable, jobs: list) -> list:
        if self.config.workers <= 1 or len(jobs) <= 1:
            return [fn(j) for j in jobs]
        # HTTP clients hold sockets and locks, so they stay in-process
        pool_cls = ThreadPoolExecutor if self.config.backend.get("kind") == "http" else ProcessPoolExecutor
        with pool_cls(max_workers=self.config.workers) as pool:
            return list(pool.map(fn, jobs))

    def logs(self, run: int) -> dict[tuple[str, str], list[SessionLog]]:
        out = {}
        for shop in self.config.shops:
            for theme in THEMES:
                path = self.root / f"simulate/run{run}/{shop.shop_id}__{theme}.jsonl"
                if not path.exists():
                    raise MissingStageInput(f"missing session logs {path}")
                logs = [SessionLog.from_json(json.loads(line)) for line in path.read_text(encoding="utf-8").splitlines() if line]
                mixed = {lg.config_hash for lg in logs} - {self.hash}
                if mixed:
                    raise StageError(f"{path} mixes logs from configs {sorted(mixed)}; rerun simulate with --force")
                out[(shop.shop_id, theme)] = logs
        return out

    def _stage_evaluate(self, outputs: dict) -> None:
        cfg = self.config
        runs = []
        scatter = io.StringIO()
        writer = csv.writer(scatter, lineterminator="\n")
        writer.writerow(["run", "shop_id", "agent_delta", "human_delta"])
        for run in range(cfg.repeat):
            logs = self.logs(run)
            shops = [
                shop_result(s.shop_id, s.human_delta, logs[(s.shop_id, "control")], logs[(s.shop_id, "treatment")],
                            s.cluster_human_deltas)
                for s in cfg.shops
            ]
            result = evaluate(shops, logs, cfg.mc_samples, derive_seed(cfg.run_seed, "evaluate", run))
            for pt in result["scatter"]:
                writer.writerow([run, pt["shop_id"], repr(pt["x"]), repr(pt["y"])])
            all_c = [lg for s in cfg.shops for lg in logs[(s.shop_id, "control")]]
            all_t = [lg for s in cfg.shops for lg in logs[(s.shop_id, "treatment")]]
            result["journey"] = {"control": journey_stats(all_c), "treatment": journey_stats(all_t)}
            result["behavioral_distribution"] = behavioral_distribution(all_c, all_t).to_json()
            result["run"] = run
            runs.append(result)
        doc = self._header(runs=runs, average=average_metrics([r["metrics"] for r in runs]))
        self._write("evaluate/report.json", dump_json(doc), outputs)
        self._write("evaluate/scatter.csv", scatter.getvalue(), outputs)

    def _stage_bootstrap(self, outputs: dict) -> None:
        cfg = self.config
        if cfg.repeat < 2:
            raise MissingStageInput("bootstrap compares two simulation runs; rerun simulate with --repeat 2")
        run0 = [lg for logs in self.logs(0).values() for lg in logs]
        run1 = [lg for logs in self.logs(1).values() for lg in logs]
        report = bootstrap_analysis(run0, run1, cfg.bootstrap_sizes, cfg.bootstrap_iterations,
                                    derive_seed(cfg.run_seed, "bootstrap"))
        self._write("bootstrap/bootstrap.json", dump_json(self._header(bootstrap=report.to_json())), outputs)
        bands = io.StringIO()
        writer = csv.writer(bands, lineterminator="\n")
        writer.writerow(["size", "metric", "mean", "median", "p10", "p90"])
        for row in report.rows:
            for name, band in (("sign_alignment", row.sign_alignment), ("correlation", row.correlation)):
                if band is None:
                    writer.writerow([row.size, name, "", "", "", ""])
                else:
                    writer.writerow([row.size, name, repr(band.mean), repr(band.median), repr(band.p10), repr(band.p90)])
        self._write("bootstrap/bands.csv", bands.getvalue(), outputs)

    def _stage_report(self, outputs: dict) -> None:
        ev = self._read("evaluate/report.json")
        boot_path = self.root / "bootstrap/bootstrap.json"
        boot = self._read("bootstrap/bootstrap.json")["bootstrap"] if boot_path.exists() else None
        doc = self._header(evaluation=ev["average"], runs=len(ev["runs"]), bootstrap=boot)
        self._write("report/report.json", dump_json(doc), outputs)
        self._write("report/summary.md", render_summary(ev, boot), outputs)


# ----------------------------------------------------------------- summary


def average_metrics(metrics: list[dict]) -> dict:
    """Mean of each headline metric over runs; undefined correlations are skipped."""

    def mean_of(key):
        vals = [m[key] for m in metrics if m[key] is not None]
        return statistics.fmean(vals) if vals else None

    return {
        "alignment_rate": mean_of("alignment_rate"),
        "alignment_probability": mean_of("alignment_probability"),
        "pearson": mean_of("pearson"),
        "runs": len(metrics),
        "shops_evaluated": metrics[0]["shops_evaluated"],
        "shops_excluded": metrics[0]["shops_excluded"],
    }


def _fmt(x, spec=".3f") -> str:
    return "undefined" if x is None else format(x, spec)


def render_summary(ev: dict, boot: dict | None) -> str:
    avg = ev["average"]
    lines = [
        "# Simulation summary",
        "",
        f"Runs averaged: {avg['runs']}. Shops evaluated: {avg['shops_evaluated']} (excluded for zero human delta: {avg['shops_excluded']}).",
        "",
        "## Alignment",
        "",
        "| metric | value |",
        "|---|---|",
        f"| correlation (per-shop deltas) | {_fmt(avg['pearson'])} |",
        f"| alignment rate (%) | {_fmt(avg['alignment_rate'], '.1f')} |",
        f"| alignment probability | {_fmt(avg['alignment_probability'])} |",
        "",
        "## Journeys",
        "",
        "| run | theme | goal reached (%) | timeout (%) | mean steps | std steps |",
        "|---|---|---|---|---|---|",
    ]
    for r in ev["runs"]:
        for theme in THEMES:
            j = r["journey"][theme]
            lines.append(
                f"| {r['run']} | {theme} | {j['goal_reached_pct']:.1f} | {j['timeout_pct']:.1f} | {j['mean_steps']:.2f} | {j['std_steps']:.2f} |"
            )
    lines += ["", "## Behaviour of agents whose outcome changed", "", "| run | mode | share |", "|---|---|---|"]
    for r in ev["runs"]:
        dist = r["behavioral_distribution"]
        if dist["no_differing_agents"]:
            lines.append(f"| {r['run']} | (no differing agents) | - |")
            continue
        for mode, share in dist["shares"].items():
            lines.append(f"| {r['run']} | {mode} | {share:.3f} |")
    lines += ["", "## Per shop", "", "| run | shop | human Δ | agent Δ | aligned | P(aligned) | within noise |", "|---|---|---|---|---|---|---|"]
    for r in ev["runs"]:
        for s in r["per_shop"]:
            aligned = "n/a" if s["aligned"] is None else ("yes" if s["aligned"] else "no")
            noise = "yes" if s.get("within_noise") else "no"
            lines.append(
                f"| {r['run']} | {s['shop_id']} | {s['human_delta']:+.4f} | {s['agent_delta']:+.4f} | {aligned} | {_fmt(s['alignment_prob'])} | {noise} |"
            )
    if boot is not None:
        lines += [
            "",
            f"## Bootstrap ({boot['iterations']} iterations)",
            "",
            "| agents | sign agreement mean | p10 | median | p90 | correlation median |",
            "|---|---|---|---|---|---|",
        ]
        for row in boot["rows"]:
            sa, co = row["sign_alignment"], row["correlation"]
            lines.append(
                f"| {row['size']} | {sa['mean']:.3f} | {sa['p10']:.3f} | {sa['median']:.3f} | {sa['p90']:.3f} | {_fmt(co and co['median'])} |"
            )
    return "\n".join(lines) + "\n"
