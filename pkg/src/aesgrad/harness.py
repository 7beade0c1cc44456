"""Quantitative evaluation harness.

Runs the paired protocol: for every prompt in the embedded 25-prompt
corpus, encode the original conditioning, personalize a private copy of
the weights, optionally build a keyword-append conditioning, generate
``seeds_per_prompt`` surrogate images per condition with matched noise
seeds, and score each one. The toy generator stands in for the diffusion
model: it maps a conditioning vector straight to a unit-norm "generated
image" embedding, so scores remain a function of the conditioning without
synthesizing pixels.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aesthetics import (
    AestheticEmbedding,
    PersonalizationConfig,
    personalize,
    semantic_drift,
    similarity,
)
from .encoder import MiniClipWeights, Vocabulary, build_vocab, encode_text_plain, tokenize
from .errors import (
    ConfigError,
    DegenerateVectorError,
    InputError,
    ShapeMismatchError,
    ToolkitError,
)
from .scorer import ScorerWeights, score
from .tensor import Tensor

PROMPT_CORPUS: tuple[str, ...] = (
    "A fountain, sculpture",
    "A pyramid over a snowy scenery",
    "A giant octopus, bioluminescence",
    "A still life of flowers, volumetric lighting",
    "A still life of flowers, stained glass",
    "A nighttime cityscape, concept art",
    "The sacred library by Simon Stålenhag and Thomas Kinkade, oil on canvas",
    "A gateway between dreams",
    "Space jellyfish, watercolor",
    "Giant skull without a lower jaw, floating above a pile of gems while "
    "it leaks gems and bone. An orange, cloudy sky fills the background",
    "An orange overstuffed chair, custom design",
    "Ethereal",
    "A clearing filled with colorful plants in a thick woods "
    "where time has stopped, trending on Artstation",
    "An archer lounging against a tree with petals falling, "
    "painting by Horace Vernet",
    "Textless, 8k, hyperdetail Papier-mache, Ambient occlusion High key light, "
    "Contour rivalry, octane render redshift render, Porcelain painted "
    "ceramics by Krystle Mitchell, The efficient panda surrounds bangle, "
    "ascot plain peel postfix circadian sunroom",
    "Dimming dares to swifting ruins lights, charges changes on the skies "
    "from above, blinks true to throughout, to a closing of hands on spacing "
    "world to binding breaks of recreating strings, then to dusting fantasy "
    "of hands that try to wave a reach of each, and a "
    "spine of splitting reeks of falling sense of decaying skying",
    "Centuries of citadels, and been tuning in tones that been crystalize in a "
    "field that felt a widing in its own, still a lighten "
    "abyss vision for depths, it still crystalline in souls "
    "that truly enjoyed, of a meaning",
    "White marble, white marble bas relief profile sculpture of a "
    "beautiful black haired woman with pale skin and a crown on her head "
    "sitted on an intricate metal throne, medusa, white and gold kintsugi, "
    "feminine shapes, crabs, spiders, scorpions, tarantulas, stunning, "
    "art by hr geiger and ridley scott and alphonse mucha "
    "and josephine wall, highly detailed, intricately detailed",
    "Photorealistic white marble greek goddess face profile sculpture "
    "entwined by golden and crimson vines and roots, flesh shows at "
    "some parts under the broken marble, swirling liquified meat and "
    "red kintsugi, symbolist, visionary, etheric, entwined with iridiscent "
    "fractal lace, alien botanicals, cinematic composition, cinematic lighting",
    "A beautiful mannequin made of marble printed in 3 d geometric neon "
    "+ kintsugi, facing a giant doorway opening with a neon pink light, "
    "flowering iridescent pineapples + orchids, transcendent, vibrant color, "
    "clean linework, finely detailed, 4k, trending on artstation, "
    "photorealistic, volumetric lighting, octane render",
    "A pirate ship, sepia coloring, hyper-detailed, dusk, 4k octane render",
    "Vaporwave soviet skyline at sunrise, trending on Artstation. "
    "Many intrincate details",
    "Marble Polished Tile. Sky Blue is an impressive pale blue quartzite. "
    "Its appearance is reminiscent of a splendid blue sky interspersed with "
    "fluffy white clouds, as its name suggests. This natural stone's "
    "base shuffles different soft blues such as blue lavender, "
    "pale blue, and pastel indigo. The veins look like clouds. "
    "Decorative marble tile",
    "A photograph of an astronaut riding a horse",
    "A painting of a tree, oil on canvas",
)

CONDITION_ORIGINAL = "original"
CONDITION_PERSONALIZED = "personalized"
CONDITION_KEYWORD = "keyword"

_GENERATOR_PERTURBATION = 0.25


@dataclass(frozen=True)
class ToyGeneratorWeights:
    """Near-identity conditioning -> image-embedding map with seeded noise."""

    m: np.ndarray
    g: np.ndarray
    noise_scale: float
    seed: int

    def __post_init__(self) -> None:
        d = self.m.shape[0]
        if self.m.shape != (d, d) or self.g.shape != (d, d):
            raise ShapeMismatchError(
                f"generator matrices must be square and equal: {self.m.shape}, {self.g.shape}")
        if self.noise_scale < 0:
            raise ConfigError(f"noise_scale must be non-negative, got {self.noise_scale}")


def init_toy_generator(d_joint: int, seed: int, noise_scale: float = 0.1) -> ToyGeneratorWeights:
    """Identity plus a small seeded perturbation, so conditioning direction
    survives generation (which is what makes scores respond to it)."""
    rng = np.random.default_rng(seed)
    eye = np.eye(d_joint)
    scale = _GENERATOR_PERTURBATION / np.sqrt(d_joint)
    m = (eye + rng.standard_normal((d_joint, d_joint)) * scale).astype(np.float32)
    g = (eye + rng.standard_normal((d_joint, d_joint)) * scale).astype(np.float32)
    return ToyGeneratorWeights(m=m, g=g, noise_scale=float(noise_scale), seed=seed)


def toy_generate(conditioning: np.ndarray | Tensor, gen: ToyGeneratorWeights,
                 seed: int) -> np.ndarray:
    """Unit-norm surrogate image embedding for a conditioning vector."""
    c = np.asarray(conditioning.data if isinstance(conditioning, Tensor) else conditioning,
                   dtype=np.float32)
    d = gen.m.shape[0]
    if c.shape != (d,):
        raise ShapeMismatchError(f"conditioning shape {c.shape} vs generator dim {d}")
    base = gen.g @ np.tanh(gen.m @ c)
    for attempt in range(4):
        z = np.random.default_rng([gen.seed, seed + attempt]).standard_normal(d)
        raw = base + gen.noise_scale * z.astype(np.float32)
        norm = float(np.linalg.norm(np.asarray(raw, dtype=np.float64)))
        if norm >= 1e-8:
            return (raw / np.float32(norm)).astype(np.float32)
    raise DegenerateVectorError(
        f"generator output stayed degenerate after 3 noise reseeds (seed {seed})")


def keyword_baseline(prompt: str, keyword: str) -> str:
    """Append the aesthetic keyword to the prompt instead of using gradients."""
    if not keyword:
        raise InputError("keyword must be nonempty")
    return f"{prompt}, {keyword}"


@dataclass(frozen=True)
class ScoreRow:
    prompt_index: int
    condition: str
    seed: int
    score: float
    similarity_to_e: float
    drift_cosine: float


@dataclass(frozen=True)
class PromptSummary:
    prompt_index: int
    prompt: str
    original_mean: float
    personalized_mean: float
    mean_difference: float
    delta_sim_personalized: float
    delta_sim_keyword: float | None
    keyword_mean: float | None
    drift_cosine: float


@dataclass
class ExperimentReport:
    rows: list[ScoreRow]
    condition_summaries: dict[str, dict[str, float]]
    per_prompt: list[PromptSummary]
    sign_test_personalized_gt_original: int
    config_snapshot: dict = field(default_factory=dict)

    @property
    def conditions(self) -> list[str]:
        seen = []
        for row in self.rows:
            if row.condition not in seen:
                seen.append(row.condition)
        return seen

    def scores_for(self, condition: str) -> list[float]:
        return [r.score for r in self.rows if r.condition == condition]


def _derived_seed(*entries: int) -> int:
    return int(np.random.SeedSequence(list(entries)).generate_state(1)[0])


@dataclass(frozen=True)
class _PromptResult:
    rows: tuple[ScoreRow, ...]
    summary: PromptSummary


def _run_prompt(prompt_index: int, prompt: str, base_weights: MiniClipWeights,
                vocab: Vocabulary, e: AestheticEmbedding, scorer: ScorerWeights,
                gen: ToyGeneratorWeights, pcfg: PersonalizationConfig,
                seeds_per_prompt: int, keyword: str | None,
                master_seed: int) -> _PromptResult:
    ctx = base_weights.config.context_length
    tokens = tokenize(prompt, vocab, ctx)
    c = encode_text_plain(base_weights, tokens)
    sim_original = similarity(c, e)

    personalized, _trace = personalize(
        base_weights, tokens, e, pcfg, seed=_derived_seed(master_seed, prompt_index, 0))
    c_prime = encode_text_plain(personalized, tokens)
    sim_personalized = similarity(c_prime, e)
    drift = semantic_drift(c, c_prime)

    conditions: list[tuple[str, Tensor, float, float]] = [
        (CONDITION_ORIGINAL, c, sim_original, 1.0),
        (CONDITION_PERSONALIZED, c_prime, sim_personalized, drift),
    ]
    sim_keyword = None
    if keyword is not None:
        kw_tokens = tokenize(keyword_baseline(prompt, keyword), vocab, ctx)
        c_kw = encode_text_plain(base_weights, kw_tokens)
        sim_keyword = similarity(c_kw, e)
        conditions.append((CONDITION_KEYWORD, c_kw, sim_keyword, semantic_drift(c, c_kw)))

    rows: list[ScoreRow] = []
    means: dict[str, float] = {}
    for condition, conditioning, sim_value, drift_value in conditions:
        values = []
        for j in range(seeds_per_prompt):
            gen_seed = _derived_seed(master_seed, prompt_index, 1 + j)
            v = toy_generate(conditioning, gen, gen_seed)
            s = score(v, scorer)
            values.append(s)
            rows.append(ScoreRow(prompt_index, condition, j, s, sim_value, drift_value))
        means[condition] = float(np.mean(values))

    summary = PromptSummary(
        prompt_index=prompt_index,
        prompt=prompt,
        original_mean=means[CONDITION_ORIGINAL],
        personalized_mean=means[CONDITION_PERSONALIZED],
        mean_difference=means[CONDITION_PERSONALIZED] - means[CONDITION_ORIGINAL],
        delta_sim_personalized=sim_personalized - sim_original,
        delta_sim_keyword=None if sim_keyword is None else sim_keyword - sim_original,
        keyword_mean=means.get(CONDITION_KEYWORD),
        drift_cosine=drift,
    )
    return _PromptResult(rows=tuple(rows), summary=summary)


def run_experiment(base_weights: MiniClipWeights, corpus: tuple[str, ...],
                   e: AestheticEmbedding, scorer: ScorerWeights,
                   gen: ToyGeneratorWeights, pcfg: PersonalizationConfig,
                   seeds_per_prompt: int = 6, keyword: str | None = None,
                   master_seed: int = 0, vocab: Vocabulary | None = None,
                   max_workers: int | None = None) -> ExperimentReport:
    """Paired original/personalized (and optional keyword) score comparison.

    Prompt jobs are independent; with max_workers > 1 they run in a thread
    pool and are merged by index, which leaves the report identical to a
    serial run.
    """
    if not corpus:
        raise InputError("prompt corpus is empty")
    if seeds_per_prompt < 1:
        raise ConfigError(f"seeds_per_prompt must be positive, got {seeds_per_prompt}")
    if vocab is None:
        texts = list(corpus) + ([keyword] if keyword else [])
        vocab = build_vocab(texts, base_weights.config.vocab_size)

    def job(i: int) -> _PromptResult:
        try:
            return _run_prompt(i, corpus[i], base_weights, vocab, e, scorer, gen,
                               pcfg, seeds_per_prompt, keyword, master_seed)
        except ToolkitError as exc:
            raise type(exc)(f"prompt {i}: {exc}") from exc

    indices = range(len(corpus))
    if max_workers is not None and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(job, indices))
    else:
        results = [job(i) for i in indices]

    rows = [row for result in results for row in result.rows]
    summaries = [result.summary for result in results]
    condition_summaries: dict[str, dict[str, float]] = {}
    for condition in (CONDITION_ORIGINAL, CONDITION_PERSONALIZED, CONDITION_KEYWORD):
        values = [r.score for r in rows if r.condition == condition]
        if values:
            arr = np.asarray(values, dtype=np.float64)
            condition_summaries[condition] = {
                "mean": float(arr.mean()),
                "std": float(arr.std()),
                "median": float(np.median(arr)),
            }
    sign_count = sum(1 for s in summaries if s.personalized_mean > s.original_mean)

    snapshot = {
        "n_prompts": len(corpus),
        "seeds_per_prompt": seeds_per_prompt,
        "keyword": keyword,
        "master_seed": master_seed,
        "epsilon": pcfg.epsilon,
        "iterations": pcfg.iterations,
        "optimizer": pcfg.optimizer,
        "sgld_temperature": pcfg.sgld_temperature,
        "normalize_text_in_loss": pcfg.normalize_text_in_loss,
        "generator_noise_scale": gen.noise_scale,
        "generator_seed": gen.seed,
        "aesthetic_name": e.name,
        "aesthetic_digest": e.source_digest,
        "scorer_name": scorer.name,
        "scorer_bias": scorer.b,
        "d_joint": base_weights.config.d_joint,
    }
    return ExperimentReport(
        rows=rows,
        condition_summaries=condition_summaries,
        per_prompt=summaries,
        sign_test_personalized_gt_original=sign_count,
        config_snapshot=snapshot,
    )


SCORES_HEADER = "prompt_index,condition,seed,score,similarity_to_e,drift_cosine"
_CONDITION_ORDER = {CONDITION_ORIGINAL: 0, CONDITION_PERSONALIZED: 1, CONDITION_KEYWORD: 2}
_CONDITION_COLORS = {
    CONDITION_ORIGINAL: "#1f77b4",
    CONDITION_PERSONALIZED: "#d62728",
    CONDITION_KEYWORD: "#2ca02c",
}
HISTOGRAM_BINS = 20


def _scores_csv(report: ExperimentReport) -> str:
    ordered = sorted(report.rows,
                     key=lambda r: (r.prompt_index, _CONDITION_ORDER[r.condition], r.seed))
    lines = [SCORES_HEADER]
    for r in ordered:
        lines.append(f"{r.prompt_index},{r.condition},{r.seed},"
                     f"{r.score!r},{r.similarity_to_e!r},{r.drift_cosine!r}")
    return "\n".join(lines) + "\n"


def _summary_json(report: ExperimentReport) -> str:
    import json

    payload = {
        "conditions": report.condition_summaries,
        "sign_test_personalized_gt_original": report.sign_test_personalized_gt_original,
        "n_prompts": len(report.per_prompt),
        "per_prompt": [
            {
                "prompt_index": s.prompt_index,
                "prompt": s.prompt,
                "original_mean": s.original_mean,
                "personalized_mean": s.personalized_mean,
                "mean_difference": s.mean_difference,
                "delta_sim_personalized": s.delta_sim_personalized,
                "delta_sim_keyword": s.delta_sim_keyword,
                "keyword_mean": s.keyword_mean,
                "drift_cosine": s.drift_cosine,
            }
            for s in report.per_prompt
        ],
        "config": report.config_snapshot,
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _histogram_svg(report: ExperimentReport) -> str:
    """Overlaid per-condition score histograms, emitted as fixed-layout SVG.

    The markup is assembled from the report alone with pinned float
    formatting, so two identical reports produce identical bytes.
    """
    width, height = 640, 400
    left, right, top, bottom = 60, 620, 40, 340
    all_scores = [r.score for r in report.rows]
    lo, hi = min(all_scores), max(all_scores)
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    edges = [lo + span * i / HISTOGRAM_BINS for i in range(HISTOGRAM_BINS + 1)]

    counts: dict[str, list[int]] = {}
    for condition in report.conditions:
        bins = [0] * HISTOGRAM_BINS
        for s in report.scores_for(condition):
            idx = min(int((s - lo) / span * HISTOGRAM_BINS), HISTOGRAM_BINS - 1)
            bins[idx] += 1
        counts[condition] = bins
    peak = max(max(bins) for bins in counts.values()) or 1

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="#000000"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="#000000"/>',
        f'<text x="{left}" y="{bottom + 20}" font-size="12" text-anchor="middle">{lo:.4f}</text>',
        f'<text x="{right}" y="{bottom + 20}" font-size="12" text-anchor="middle">{hi:.4f}</text>',
        f'<text x="{left - 8}" y="{top + 4}" font-size="12" text-anchor="end">{peak}</text>',
        f'<text x="{(left + right) / 2:.1f}" y="24" font-size="14" '
        f'text-anchor="middle">score distribution by condition</text>',
    ]
    bin_width = (right - left) / HISTOGRAM_BINS
    for condition in report.conditions:
        color = _CONDITION_COLORS[condition]
        for i, count in enumerate(counts[condition]):
            if count == 0:
                continue
            bar_height = (bottom - top) * count / peak
            x = left + i * bin_width
            y = bottom - bar_height
            parts.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{bin_width:.2f}" '
                f'height="{bar_height:.2f}" fill="{color}" fill-opacity="0.55"/>')
    for slot, condition in enumerate(report.conditions):
        color = _CONDITION_COLORS[condition]
        y = top + 16 * slot
        parts.append(f'<rect x="{right - 150}" y="{y}" width="10" height="10" fill="{color}"/>')
        parts.append(f'<text x="{right - 134}" y="{y + 9}" font-size="12">{condition}</text>')
    parts.append(f'<!-- bin edges: {",".join(f"{edge!r}" for edge in edges)} -->')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(report: ExperimentReport, out_dir: str | Path) -> dict[str, Path]:
    """Write scores.csv, summary.json, and histogram.svg under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "scores.csv": _scores_csv(report),
        "summary.json": _summary_json(report),
        "histogram.svg": _histogram_svg(report),
    }
    written: dict[str, Path] = {}
    for name, text in files.items():
        path = out / name
        path.write_text(text, encoding="utf-8")
        written[name] = path
    return written
