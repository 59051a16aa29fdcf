"""End-to-end orchestration: stats, align, extract, fuse, noise.

One master seed drives the whole run; stage- and sample-level seeds are
derived by hashing "master:stage:item", so a subcommand run standalone with
the same master seed reproduces the pipeline's artifacts exactly. Each
stage consumes the previous stage's on-disk output (quantized PNGs), which
makes that reproduction hold bit-for-bit.
"""

import hashlib
import json
import shutil
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from importlib import metadata
from pathlib import Path

from .channel_align import GammaParams, apply_gamma, compute_gamma, refine_gamma
from .dataset_io import DatasetStats, LabeledSample, dataset_stats, load_dataset, save_sample
from .noise_repr import NoiseConfig, add_noise
from .patch_match import MatchConfig, TargetPatch, extract_patches, save_patch, load_patches
from .poisson_fusion import FusionResult, fuse_dataset

try:
    VERSION = metadata.version("istdkit")
except metadata.PackageNotFoundError:  # running from a source tree
    VERSION = "0.1.0"

STAGES = ("stats", "align", "extract", "fuse", "noise")


class PipelineError(RuntimeError):
    """A stage failed; carries the stage name and the original cause."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class PipelineConfig:
    """Every knob of the five-stage run; see parse_config for the file form."""

    source_dir: str = "source"
    target_dir: str = "target"
    output_dir: str = "out"
    gamma_refine: bool = True
    tolerance: float = 0.5
    padding: int = 2
    stride: int = 4
    k: int = 3
    min_separation: float = 0.0  # 0 = auto: max(patch width, patch height)
    alpha: float = 0.6
    seed: int = 0
    centroid_threshold: float = 3.0

    def __post_init__(self):
        checks = [
            ("tolerance", self.tolerance > 0.0, "must be > 0"),
            ("padding", self.padding >= 0, "must be >= 0"),
            ("stride", self.stride >= 1, "must be >= 1"),
            ("k", self.k >= 1, "must be >= 1"),
            ("min_separation", self.min_separation >= 0.0, "must be >= 0 (0 = auto)"),
            ("alpha", self.alpha >= 0.0, "must be >= 0"),
            ("centroid_threshold", self.centroid_threshold > 0.0, "must be > 0"),
        ]
        for name, ok, constraint in checks:
            if not ok:
                raise ValueError(f"config field '{name}' {constraint}, got {getattr(self, name)}")

    def match_config(self) -> MatchConfig:
        separation = self.min_separation if self.min_separation > 0 else None
        return MatchConfig(
            k=self.k,
            min_separation=separation,
            stride=self.stride,
            exclude_target_overlap=True,
        )


@dataclass
class RunReport:
    """What a pipeline run did: gamma, means, counts, timing, config echo."""

    gamma: float
    gamma_refined: bool
    source_mean_before: float
    source_mean_after: float
    target_mean: float
    n_source: int
    n_target: int
    n_aligned: int
    n_fused: int
    stage_seconds: dict
    config: dict
    version: str

    def to_json(self, include_timing: bool = True) -> str:
        payload = asdict(self)
        if not include_timing:
            payload.pop("stage_seconds")
        return json.dumps(payload, indent=2, sort_keys=True)


_BOOL_WORDS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _parse_value(key: str, raw: str, kind):
    if kind is bool:
        word = raw.strip().lower()
        if word not in _BOOL_WORDS:
            raise ValueError(f"config field '{key}' expects a boolean, got '{raw}'")
        return _BOOL_WORDS[word]
    try:
        return kind(raw.strip())
    except ValueError as exc:
        raise ValueError(f"config field '{key}' expects {kind.__name__}, got '{raw}'") from exc


def parse_config(path) -> PipelineConfig:
    """Read a flat ``key = value`` config file.

    Blank lines and ``#`` comments are ignored; unknown keys are errors,
    not warnings, so typos cannot silently change a run. Missing keys take
    their defaults; an empty file is a fully defaulted config.
    """
    path = Path(path)
    field_types = {f.name: f.type for f in fields(PipelineConfig)}
    values = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got '{line.strip()}'")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in field_types:
            raise ValueError(f"{path}:{lineno}: unknown config key '{key}'")
        if key in values:
            raise ValueError(f"{path}:{lineno}: duplicate config key '{key}'")
        values[key] = _parse_value(key, raw, field_types[key])
    return PipelineConfig(**values)


def derive_seed(master: int, stage: str, item: str = "") -> int:
    """Stable 64-bit sub-seed from (master seed, stage name, item id)."""
    digest = hashlib.sha256(f"{master}:{stage}:{item}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _parallel_map(fn, items, threads: int):
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- stages

def align_stage(
    source: list[LabeledSample],
    target_stats: DatasetStats,
    refine: bool,
    tolerance: float,
    threads: int = 1,
) -> tuple[list[LabeledSample], GammaParams]:
    """Derive the dataset gamma and apply it to every source image."""
    if refine:
        params = refine_gamma(source, target_stats.mean_intensity, tolerance)
    else:
        source_mean = dataset_stats(source).mean_intensity
        params = compute_gamma(source_mean, target_stats.mean_intensity)
    corrected = _parallel_map(lambda s: apply_gamma(s.image, params), source, threads)
    aligned = [
        LabeledSample(s.id, image, s.mask) for s, image in zip(source, corrected)
    ]
    return aligned, params


def extract_stage(samples: list[LabeledSample], padding: int) -> list[TargetPatch]:
    """All target patches of a dataset, sample order then (y, x) order."""
    patches = []
    for sample in samples:
        patches.extend(extract_patches(sample, padding))
    return patches


def fuse_stage(
    aligned: list[LabeledSample],
    patches: list[TargetPatch],
    config: PipelineConfig,
    master_seed: int,
) -> list[FusionResult]:
    """Top-k fusion with the stage seed derived from the master seed."""
    return fuse_dataset(
        aligned, patches, config.match_config(), seed=derive_seed(master_seed, "fuse")
    )


def fused_sample_id(result: FusionResult) -> str:
    p = result.provenance
    return f"{p['background_sample']}__{p['patch_id']}__k{p['k_rank']}"


def noise_stage(
    samples: list[LabeledSample], alpha: float, master_seed: int, threads: int = 1
) -> list[LabeledSample]:
    """Per-sample seeded noise; the seed depends only on (master, id)."""

    def perturb(sample: LabeledSample) -> LabeledSample:
        config = NoiseConfig(alpha=alpha, seed=derive_seed(master_seed, "noise", sample.id))
        return LabeledSample(sample.id, add_noise(sample.image, config), sample.mask)

    return _parallel_map(perturb, samples, threads)


# ---------------------------------------------------------------- driver

def write_dataset(samples: list[LabeledSample], out_dir: Path) -> None:
    for sample in samples:
        save_sample(sample, out_dir)


def write_fusion_results(results: list[FusionResult], out_dir: Path) -> None:
    """Persist fused pairs as a dataset plus a JSON-lines provenance log."""
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for result in results:
        sample = LabeledSample(fused_sample_id(result), result.image, result.mask)
        save_sample(sample, out_dir)
        record = dict(result.provenance)
        record["sample_id"] = sample.id
        lines.append(json.dumps(record, sort_keys=True))
    (out_dir / "provenance.jsonl").write_text("".join(line + "\n" for line in lines))


def run_pipeline(config: PipelineConfig, threads: int = 1) -> RunReport:
    """Execute stats, align, extract, fuse and noise; write all artifacts.

    Artifacts land under ``config.output_dir`` in ``aligned/``, ``patches/``,
    ``fused/`` and ``noisy/`` plus a deterministic ``run_report.json`` (the
    returned RunReport additionally carries per-stage wall times, which stay
    out of the file so reruns are byte-identical). On a stage failure the
    partial output directory is renamed with a ``_failed`` suffix and a
    PipelineError names the stage.
    """
    out_root = Path(config.output_dir)
    timing: dict[str, float] = {}
    state: dict = {}

    def run_stage(name: str, fn):
        start = time.perf_counter()
        try:
            fn()
        except Exception as exc:
            if out_root.exists():
                failed = out_root.with_name(out_root.name + "_failed")
                if failed.exists():
                    shutil.rmtree(failed)
                out_root.rename(failed)
            raise PipelineError(name, exc) from exc
        timing[name] = time.perf_counter() - start

    def stage_stats():
        state["source"] = load_dataset(config.source_dir)
        state["target_stats"] = dataset_stats(load_dataset(config.target_dir))
        state["n_target"] = state["target_stats"].sample_count
        state["source_stats"] = dataset_stats(state["source"])

    def stage_align():
        aligned, params = align_stage(
            state["source"],
            state["target_stats"],
            config.gamma_refine,
            config.tolerance,
            threads,
        )
        state["params"] = params
        write_dataset(aligned, out_root / "aligned")
        state["aligned"] = load_dataset(out_root / "aligned")

    def stage_extract():
        patches = extract_stage(state["aligned"], config.padding)
        if not patches:
            raise ValueError("no target patches found in the aligned dataset")
        patch_dir = out_root / "patches"
        patch_dir.mkdir(parents=True, exist_ok=True)
        for patch in patches:
            save_patch(patch, patch_dir)
        state["patches"] = load_patches(patch_dir)

    def stage_fuse():
        results = fuse_stage(state["aligned"], state["patches"], config, config.seed)
        write_fusion_results(results, out_root / "fused")
        state["n_fused"] = len(results)
        state["fused"] = load_dataset(out_root / "fused") if results else []

    def stage_noise():
        if not state["fused"]:
            state["noisy"] = []
            return
        noisy = noise_stage(state["fused"], config.alpha, config.seed, threads)
        write_dataset(noisy, out_root / "noisy")
        state["noisy"] = noisy

    run_stage("stats", stage_stats)
    run_stage("align", stage_align)
    run_stage("extract", stage_extract)
    run_stage("fuse", stage_fuse)
    run_stage("noise", stage_noise)

    report = RunReport(
        gamma=state["params"].gamma,
        gamma_refined=state["params"].refined,
        source_mean_before=state["source_stats"].mean_intensity,
        source_mean_after=dataset_stats(state["aligned"]).mean_intensity,
        target_mean=state["target_stats"].mean_intensity,
        n_source=len(state["source"]),
        n_target=state["n_target"],
        n_aligned=len(state["aligned"]),
        n_fused=state["n_fused"],
        stage_seconds=timing,
        config=asdict(config),
        version=VERSION,
    )
    (out_root / "run_report.json").write_text(report.to_json(include_timing=False) + "\n")
    return report
