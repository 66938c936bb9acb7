"""Learned priors: size-based category posterior, support frequencies, and
the wall/floor constraint sets driving refinement.

The geometric model is a per-category 2D Gaussian over (log base area,
log height) turned into a posterior by normalizing class-conditional
densities with a uniform class prior. Support frequencies count labeled
edges against labeled co-occurrences, with a dedicated floor row.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Cuboid
from .structure_graph import FLOOR_ID, StructureGraph

MODEL_SCHEMA = "prior-model/1"
FLOOR_LABEL = "floor"


class PriorError(Exception):
    pass


class MissingSpec(PriorError):
    pass


class InsufficientSamples(PriorError):
    pass


class UnknownCategory(PriorError):
    pass


class UnknownLabel(PriorError):
    pass


@dataclass(frozen=True)
class PriorConfig:
    area_jitter_sd: float = 0.01      # m^2; the quoted 100 cm^2 read as a std dev
    height_jitter_sd: float = 0.10    # m
    sample_floor: float = 1e-4        # clamp for jittered sizes
    spatial_threshold: float = 0.7    # strict > for wall constraint sets
    floor_support_threshold: float = 0.7  # >= for the floor-support set
    eps: float = 1e-6                 # log floor shared with prediction
    cov_reg: float = 1e-4
    n_enrich: int = 20

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "area_jitter_sd", "height_jitter_sd", "sample_floor",
            "spatial_threshold", "floor_support_threshold", "eps", "cov_reg",
            "n_enrich")}

    @staticmethod
    def from_dict(d: dict) -> "PriorConfig":
        return PriorConfig(**d)


@dataclass(frozen=True)
class GeomSample:
    category: str
    base_area: float   # m^2, bottom face
    height: float      # m

    def __post_init__(self):
        if self.base_area <= 0 or self.height <= 0:
            raise PriorError("geometric samples must be positive")


def cuboid_features(c: Cuboid) -> tuple[float, float]:
    """(bottom face area, height) of a cuboid."""
    return (4.0 * float(c.half_extents[0] * c.half_extents[1]),
            2.0 * float(c.half_extents[2]))


def enrich_samples(spec: dict[str, list[tuple[float, float]]], n_extra: int,
                   rng_seed: int, cfg: PriorConfig | None = None,
                   categories: list[str] | None = None) -> list[GeomSample]:
    """Jittered samples around nominal catalog sizes, n_extra per category."""
    cfg = cfg or PriorConfig()
    cats = categories if categories is not None else sorted(spec)
    out: list[GeomSample] = []
    rng = np.random.default_rng(rng_seed)
    for cat in cats:
        if cat not in spec or not spec[cat]:
            raise MissingSpec(cat)
        nominals = spec[cat]
        for i in range(n_extra):
            area0, height0 = nominals[i % len(nominals)]
            area = max(cfg.sample_floor,
                       area0 + rng.normal(0.0, cfg.area_jitter_sd))
            height = max(cfg.sample_floor,
                         height0 + rng.normal(0.0, cfg.height_jitter_sd))
            out.append(GeomSample(cat, float(area), float(height)))
    return out


# ---------------------------------------------------------------------------
# accumulated training statistics (mergeable, serializable)


@dataclass
class TrainingStats:
    geom: dict[str, list[tuple[float, float]]] = field(default_factory=dict)
    edge_counts: dict[str, Counter] = field(default_factory=dict)
    cooc_counts: dict[str, Counter] = field(default_factory=dict)
    wall_counts: dict[str, list[int]] = field(default_factory=dict)  # [n, contact, align]
    n_graphs: int = 0

    def add_graph(self, g: StructureGraph, categories: set[str]) -> None:
        labels = {}
        for nid, n in g.nodes.items():
            if n.label is None or n.label not in categories:
                raise UnknownLabel(f"node {nid} labeled {n.label!r}")
            labels[nid] = n.label
        counts = Counter(labels.values())
        for a, na in counts.items():
            row = self.cooc_counts.setdefault(a, Counter())
            for b, nb in counts.items():
                row[b] += na * nb - (na if a == b else 0)
        floor_row = self.cooc_counts.setdefault(FLOOR_LABEL, Counter())
        for b, nb in counts.items():
            floor_row[b] += nb
        for p, c in g.edges:
            pl = FLOOR_LABEL if p == FLOOR_ID else labels[p]
            self.edge_counts.setdefault(pl, Counter())[labels[c]] += 1
        for nid, n in g.nodes.items():
            area, height = cuboid_features(n.cuboid)
            self.geom.setdefault(labels[nid], []).append((area, height))
            wc = self.wall_counts.setdefault(labels[nid], [0, 0, 0])
            wc[0] += 1
            wc[1] += int(n.wall_contact)
            wc[2] += int(n.wall_align)
        self.n_graphs += 1

    def merged(self, other: "TrainingStats") -> "TrainingStats":
        out = TrainingStats(n_graphs=self.n_graphs + other.n_graphs)
        for src in (self, other):
            for k, v in src.geom.items():
                out.geom.setdefault(k, []).extend(v)
            for k, v in src.edge_counts.items():
                out.edge_counts.setdefault(k, Counter()).update(v)
            for k, v in src.cooc_counts.items():
                out.cooc_counts.setdefault(k, Counter()).update(v)
            for k, v in src.wall_counts.items():
                wc = out.wall_counts.setdefault(k, [0, 0, 0])
                for i in range(3):
                    wc[i] += v[i]
        return out

    def to_dict(self) -> dict:
        return {
            "geom": {k: [[a, h] for a, h in v] for k, v in sorted(self.geom.items())},
            "edge_counts": {k: dict(sorted(v.items()))
                            for k, v in sorted(self.edge_counts.items())},
            "cooc_counts": {k: dict(sorted(v.items()))
                            for k, v in sorted(self.cooc_counts.items())},
            "wall_counts": {k: list(v) for k, v in sorted(self.wall_counts.items())},
            "n_graphs": self.n_graphs,
        }

    @staticmethod
    def from_dict(d: dict) -> "TrainingStats":
        return TrainingStats(
            geom={k: [(float(a), float(h)) for a, h in v]
                  for k, v in d["geom"].items()},
            edge_counts={k: Counter({kk: int(vv) for kk, vv in v.items()})
                         for k, v in d["edge_counts"].items()},
            cooc_counts={k: Counter({kk: int(vv) for kk, vv in v.items()})
                         for k, v in d["cooc_counts"].items()},
            wall_counts={k: [int(x) for x in v] for k, v in d["wall_counts"].items()},
            n_graphs=int(d["n_graphs"]))


# ---------------------------------------------------------------------------
# the model


@dataclass
class PriorModel:
    categories: tuple[str, ...]
    gaussians: dict[str, tuple[np.ndarray, np.ndarray, int]]  # mean, cov, n
    edge_counts: dict[str, Counter]
    cooc_counts: dict[str, Counter]
    o_c: frozenset[str]
    o_p: frozenset[str]
    o_s: frozenset[str]
    enrichment: list[GeomSample]
    stats: TrainingStats
    config: PriorConfig = field(default_factory=PriorConfig)

    # -- geometric posterior ------------------------------------------------

    def log_densities(self, base_area: float, height: float) -> dict[str, float]:
        x = np.array([math.log(max(base_area, 1e-9)),
                      math.log(max(height, 1e-9))])
        out = {}
        for cat in self.categories:
            mean, cov, _ = self.gaussians[cat]
            diff = x - mean
            inv = np.linalg.inv(cov)
            _, logdet = np.linalg.slogdet(cov)
            out[cat] = float(-math.log(2 * math.pi) - 0.5 * logdet
                             - 0.5 * diff @ inv @ diff)
        return out

    def p_g_map(self, base_area: float, height: float) -> dict[str, float]:
        """Posterior over all categories for one (area, height) query."""
        logs = self.log_densities(base_area, height)
        mx = max(logs.values())
        expd = {k: math.exp(v - mx) for k, v in logs.items()}
        z = sum(expd.values())
        return {k: v / z for k, v in expd.items()}

    def p_g(self, category: str, base_area: float, height: float) -> float:
        if category not in self.gaussians:
            raise UnknownCategory(category)
        return self.p_g_map(base_area, height)[category]

    def p_g_cuboid(self, category: str, c: Cuboid) -> float:
        return self.p_g(category, *cuboid_features(c))

    # -- support frequencies --------------------------------------------------

    def p_s(self, parent: str, child: str) -> float:
        cooc = self.cooc_counts.get(parent, Counter()).get(child, 0)
        if cooc == 0:
            return 0.0
        return self.edge_counts.get(parent, Counter()).get(child, 0) / cooc

    def log_p_s(self, parent: str, child: str) -> float:
        return math.log(max(self.p_s(parent, child), self.config.eps))

    def log_p_g(self, category: str, base_area: float, height: float) -> float:
        return math.log(max(self.p_g(category, base_area, height),
                            self.config.eps))

    # -- persistence ----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema": MODEL_SCHEMA,
            "categories": list(self.categories),
            "gaussians": {cat: {"mean": [float(x) for x in g[0]],
                                "cov": [[float(x) for x in row] for row in g[1]],
                                "n": g[2]}
                          for cat, g in sorted(self.gaussians.items())},
            "sets": {"o_c": sorted(self.o_c), "o_p": sorted(self.o_p),
                     "o_s": sorted(self.o_s)},
            "enrichment": [[s.category, s.base_area, s.height]
                           for s in self.enrichment],
            "stats": self.stats.to_dict(),
            "config": self.config.to_dict(),
        }

    @staticmethod
    def from_dict(d: dict) -> "PriorModel":
        if d.get("schema") != MODEL_SCHEMA:
            raise PriorError(f"expected {MODEL_SCHEMA}, got {d.get('schema')}")
        stats = TrainingStats.from_dict(d["stats"])
        cfg = PriorConfig.from_dict(d["config"])
        enrichment = [GeomSample(c, float(a), float(h))
                      for c, a, h in d["enrichment"]]
        model = PriorModel(
            categories=tuple(d["categories"]),
            gaussians={cat: (np.asarray(g["mean"]), np.asarray(g["cov"]),
                             int(g["n"]))
                       for cat, g in d["gaussians"].items()},
            edge_counts=stats.edge_counts, cooc_counts=stats.cooc_counts,
            o_c=frozenset(d["sets"]["o_c"]), o_p=frozenset(d["sets"]["o_p"]),
            o_s=frozenset(d["sets"]["o_s"]), enrichment=enrichment,
            stats=stats, config=cfg)
        return model

    def content_hash(self) -> str:
        from .rgbd_io import content_hash
        return content_hash(self.to_dict())


# ---------------------------------------------------------------------------
# training


def train_geometric(samples: list[GeomSample], categories: list[str],
                    cfg: PriorConfig) -> dict[str, tuple[np.ndarray, np.ndarray, int]]:
    """Per-category Gaussian in (log area, log height) with regularized
    covariance; every category needs at least 2 samples."""
    by_cat: dict[str, list[list[float]]] = {c: [] for c in categories}
    for s in samples:
        if s.category not in by_cat:
            raise UnknownLabel(s.category)
        by_cat[s.category].append([math.log(s.base_area), math.log(s.height)])
    out = {}
    for cat in categories:
        feats = np.asarray(by_cat[cat])
        if feats.shape[0] < 2:
            raise InsufficientSamples(cat)
        mean = feats.mean(axis=0)
        cov = np.cov(feats.T, bias=False) + cfg.cov_reg * np.eye(2)
        out[cat] = (mean, cov, feats.shape[0])
    return out


def train_support(stats: TrainingStats, categories: list[str],
                  cfg: PriorConfig):
    """Edge-frequency table plus the floor-support constraint set."""
    o_s = set()
    for cat in categories:
        cooc = stats.cooc_counts.get(FLOOR_LABEL, Counter()).get(cat, 0)
        if cooc == 0:
            continue
        ps = stats.edge_counts.get(FLOOR_LABEL, Counter()).get(cat, 0) / cooc
        if ps >= cfg.floor_support_threshold:
            o_s.add(cat)
    return frozenset(o_s)


def train_spatial(stats: TrainingStats, categories: list[str], cfg: PriorConfig):
    """Wall contact/alignment constraint sets at a strict 0.7 ratio."""
    o_c, o_p = set(), set()
    for cat in categories:
        n, contact, align = stats.wall_counts.get(cat, [0, 0, 0])
        if n == 0:
            continue
        if contact / n > cfg.spatial_threshold:
            o_c.add(cat)
        if align / n > cfg.spatial_threshold:
            o_p.add(cat)
    return frozenset(o_c), frozenset(o_p)


def train(graphs: list[StructureGraph], categories: list[str],
          enrichment: list[GeomSample], cfg: PriorConfig | None = None,
          stats: TrainingStats | None = None) -> PriorModel:
    """Batch training over a labeled corpus (plus optional precomputed stats).

    A category left with a single sample (a freshly typed label without
    catalog enrichment) gets one jittered duplicate so its density is
    defined; the duplicate is deterministic per category name.
    """
    cfg = cfg or PriorConfig()
    if FLOOR_LABEL in categories:
        raise PriorError("'floor' is reserved and cannot be a category")
    if len(set(categories)) != len(categories):
        raise PriorError("categories must be unique")
    stats = stats or TrainingStats()
    catset = set(categories)
    for g in graphs:
        stats.add_graph(g, catset)
    geom_samples = list(enrichment)
    for cat, feats in sorted(stats.geom.items()):
        geom_samples.extend(GeomSample(cat, a, h) for a, h in feats)
    counts = Counter(s.category for s in geom_samples)
    for cat in categories:
        if counts.get(cat, 0) == 1:
            import zlib
            base = next(s for s in geom_samples if s.category == cat)
            rng = np.random.default_rng(zlib.crc32(cat.encode()))
            geom_samples.append(GeomSample(
                cat,
                max(cfg.sample_floor,
                    base.base_area + float(rng.normal(0, cfg.area_jitter_sd))),
                max(cfg.sample_floor,
                    base.height + float(rng.normal(0, cfg.height_jitter_sd)))))
    gaussians = train_geometric(geom_samples, list(categories), cfg)
    o_s = train_support(stats, list(categories), cfg)
    o_c, o_p = train_spatial(stats, list(categories), cfg)
    return PriorModel(categories=tuple(categories), gaussians=gaussians,
                      edge_counts=stats.edge_counts,
                      cooc_counts=stats.cooc_counts,
                      o_c=o_c, o_p=o_p, o_s=o_s,
                      enrichment=list(enrichment), stats=stats, config=cfg)


def retrain_incremental(model: PriorModel, new_graphs: list[StructureGraph],
                        new_categories: list[str] = ()) -> PriorModel:
    """Retrain over the accumulated corpus; equals batch training on the
    union of old and new graphs. ``new_categories`` extends the category
    list (typed novel labels, when the session config allows them)."""
    stats = model.stats.merged(TrainingStats())
    categories = list(model.categories) + [c for c in new_categories
                                           if c not in model.categories]
    return train(new_graphs, categories, model.enrichment,
                 cfg=model.config, stats=stats)


def save_model(model: PriorModel, path) -> None:
    import json
    with open(path, "w") as f:
        json.dump(model.to_dict(), f, indent=1)


def load_model(path) -> PriorModel:
    import json
    with open(path) as f:
        return PriorModel.from_dict(json.load(f))
