"""Prompt corpus, toy generator, paired experiment, report emission."""

import xml.etree.ElementTree as ET

import numpy as np
import pytest

import aesgrad as ag
from aesgrad import errors, harness


@pytest.fixture()
def small_setup(tiny_config):
    """Four-prompt experiment fixture small enough for unit tests."""
    weights = ag.init_weights(tiny_config, seed=0)
    e = ag.synthesize_aesthetic(tiny_config.d_joint, 8, 0)
    scorer = ag.make_aligned_scorer(e, gain=4.0, b=5.0)
    gen = ag.init_toy_generator(tiny_config.d_joint, seed=7, noise_scale=0.1)
    corpus = ag.PROMPT_CORPUS[:4]
    return weights, corpus, e, scorer, gen


# --- corpus -------------------------------------------------------------------

def test_corpus_has_25_fixed_prompts():
    assert len(ag.PROMPT_CORPUS) == 25
    assert ag.PROMPT_CORPUS[0] == "A fountain, sculpture"
    assert ag.PROMPT_CORPUS[-1] == "A painting of a tree, oil on canvas"
    assert all(isinstance(p, str) and p for p in ag.PROMPT_CORPUS)
    assert len(set(ag.PROMPT_CORPUS)) == 25


# --- toy generator --------------------------------------------------------------

def test_generator_output_is_unit_norm(unit_vector):
    gen = ag.init_toy_generator(8, seed=1, noise_scale=0.3)
    for seed in range(10):
        v = ag.toy_generate(unit_vector(8, seed=seed), gen, seed=seed)
        assert np.linalg.norm(v.astype(np.float64)) == pytest.approx(1.0, abs=1e-6)


def test_generator_deterministic_given_seed(unit_vector):
    gen = ag.init_toy_generator(8, seed=1, noise_scale=0.2)
    c = unit_vector(8)
    a = ag.toy_generate(c, gen, seed=3)
    b = ag.toy_generate(c, gen, seed=3)
    other = ag.toy_generate(c, gen, seed=4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, other)


def test_generator_noiseless_ignores_seed(unit_vector):
    gen = ag.init_toy_generator(8, seed=1, noise_scale=0.0)
    c = unit_vector(8)
    np.testing.assert_array_equal(ag.toy_generate(c, gen, seed=0),
                                  ag.toy_generate(c, gen, seed=99))


def test_generator_dim_mismatch(unit_vector):
    gen = ag.init_toy_generator(8, seed=1)
    with pytest.raises(errors.ShapeMismatchError):
        ag.toy_generate(unit_vector(4), gen, seed=0)


def test_generator_degenerate_zero_conditioning_errors_without_noise():
    gen = ag.init_toy_generator(8, seed=1, noise_scale=0.0)
    with pytest.raises(errors.DegenerateVectorError, match="reseed"):
        ag.toy_generate(np.zeros(8, dtype=np.float32), gen, seed=0)


def test_generator_noise_rescues_zero_conditioning():
    gen = ag.init_toy_generator(8, seed=1, noise_scale=0.1)
    v = ag.toy_generate(np.zeros(8, dtype=np.float32), gen, seed=0)
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-6)


def test_generator_preserves_conditioning_direction():
    """Monte-Carlo: similarity(v_gen, e) tracks similarity(conditioning, e)."""
    spearmanr = pytest.importorskip("scipy.stats").spearmanr
    d = 16
    gen = ag.init_toy_generator(d, seed=7, noise_scale=0.1)
    e = ag.synthesize_aesthetic(d, 8, 0)
    rng = np.random.default_rng(42)
    before, after = [], []
    for i in range(100):
        c = rng.standard_normal(d).astype(np.float32)
        c /= np.linalg.norm(c)
        v = ag.toy_generate(c, gen, seed=i)
        before.append(float(c @ e.vector))
        after.append(float(v @ e.vector))
    assert spearmanr(before, after).statistic > 0.5


def test_generator_config_validation():
    with pytest.raises(errors.ConfigError):
        ag.init_toy_generator(8, seed=0, noise_scale=-0.1)
    with pytest.raises(errors.ShapeMismatchError):
        harness.ToyGeneratorWeights(m=np.eye(3), g=np.eye(4), noise_scale=0.1, seed=0)


# --- keyword baseline ------------------------------------------------------------

def test_keyword_baseline_appends_with_comma():
    assert ag.keyword_baseline("A painting of a tree, oil on canvas", "aivazovsky") == \
        "A painting of a tree, oil on canvas, aivazovsky"
    assert ag.keyword_baseline("Ethereal", "gloomcore") == "Ethereal, gloomcore"


def test_keyword_baseline_rejects_empty():
    with pytest.raises(errors.InputError):
        ag.keyword_baseline("Ethereal", "")


# --- run_experiment ----------------------------------------------------------------

def test_report_is_complete_and_paired(small_setup):
    weights, corpus, e, scorer, gen = small_setup
    pcfg = ag.toy_default_config(iterations=2)
    report = ag.run_experiment(weights, corpus, e, scorer, gen, pcfg,
                               seeds_per_prompt=3, master_seed=0)
    cells = {(r.prompt_index, r.condition, r.seed) for r in report.rows}
    assert len(report.rows) == len(corpus) * 2 * 3
    assert len(cells) == len(report.rows)  # every cell exactly once
    assert {r.condition for r in report.rows} == {"original", "personalized"}
    assert set(report.condition_summaries) == {"original", "personalized"}
    assert len(report.per_prompt) == len(corpus)
    assert 0 <= report.sign_test_personalized_gt_original <= len(corpus)


def test_keyword_condition_adds_rows(small_setup):
    weights, corpus, e, scorer, gen = small_setup
    pcfg = ag.toy_default_config(iterations=1)
    report = ag.run_experiment(weights, corpus, e, scorer, gen, pcfg,
                               seeds_per_prompt=2, keyword="gloomcore", master_seed=0)
    assert len(report.rows) == len(corpus) * 3 * 2
    assert "keyword" in report.condition_summaries
    for summary in report.per_prompt:
        assert summary.delta_sim_keyword is not None
        assert summary.keyword_mean is not None


def test_zero_iterations_collapses_conditions(small_setup):
    weights, corpus, e, scorer, gen = small_setup
    pcfg = ag.toy_default_config(iterations=0)
    report = ag.run_experiment(weights, corpus, e, scorer, gen, pcfg,
                               seeds_per_prompt=3, master_seed=0)
    by_cell = {(r.prompt_index, r.condition, r.seed): r.score for r in report.rows}
    for i in range(len(corpus)):
        for j in range(3):
            assert by_cell[(i, "original", j)] == by_cell[(i, "personalized", j)]
    assert report.sign_test_personalized_gt_original == 0


def test_original_condition_independent_of_personalization(small_setup):
    weights, corpus, e, scorer, gen = small_setup
    light = ag.run_experiment(weights, corpus, e, scorer, gen,
                              ag.toy_default_config(iterations=1),
                              seeds_per_prompt=2, master_seed=0)
    heavy = ag.run_experiment(weights, corpus, e, scorer, gen,
                              ag.toy_default_config(iterations=6, epsilon=3e-4),
                              seeds_per_prompt=2, master_seed=0)
    a = [r.score for r in light.rows if r.condition == "original"]
    b = [r.score for r in heavy.rows if r.condition == "original"]
    assert a == b


def test_master_seed_determinism_and_parallel_equivalence(small_setup):
    weights, corpus, e, scorer, gen = small_setup
    pcfg = ag.toy_default_config(iterations=2)
    serial = ag.run_experiment(weights, corpus, e, scorer, gen, pcfg,
                               seeds_per_prompt=2, master_seed=3)
    again = ag.run_experiment(weights, corpus, e, scorer, gen, pcfg,
                              seeds_per_prompt=2, master_seed=3)
    parallel = ag.run_experiment(weights, corpus, e, scorer, gen, pcfg,
                                 seeds_per_prompt=2, master_seed=3, max_workers=4)
    assert serial.rows == again.rows == parallel.rows
    assert serial.per_prompt == parallel.per_prompt
    shifted = ag.run_experiment(weights, corpus, e, scorer, gen, pcfg,
                                seeds_per_prompt=2, master_seed=4)
    assert shifted.rows != serial.rows


def test_errors_carry_prompt_index(small_setup, tiny_config):
    weights, corpus, e, _, gen = small_setup
    bad_scorer = ag.ScorerWeights(w=np.ones(tiny_config.d_joint + 1, dtype=np.float32), b=0.0)
    with pytest.raises(errors.ShapeMismatchError, match=r"prompt 0:"):
        ag.run_experiment(weights, corpus, e, bad_scorer, gen,
                          ag.toy_default_config(iterations=0), seeds_per_prompt=1)


def test_run_experiment_input_validation(small_setup):
    weights, corpus, e, scorer, gen = small_setup
    with pytest.raises(errors.InputError):
        ag.run_experiment(weights, (), e, scorer, gen, ag.toy_default_config())
    with pytest.raises(errors.ConfigError):
        ag.run_experiment(weights, corpus, e, scorer, gen, ag.toy_default_config(),
                          seeds_per_prompt=0)


# --- emit_report --------------------------------------------------------------------

def test_emit_report_files(small_setup, tmp_path):
    weights, corpus, e, scorer, gen = small_setup
    pcfg = ag.toy_default_config(iterations=1)
    report = ag.run_experiment(weights, corpus, e, scorer, gen, pcfg,
                               seeds_per_prompt=2, master_seed=0)
    written = ag.emit_report(report, tmp_path / "out")
    assert set(written) == {"scores.csv", "summary.json", "histogram.svg"}

    csv_lines = written["scores.csv"].read_text().splitlines()
    assert csv_lines[0] == "prompt_index,condition,seed,score,similarity_to_e,drift_cosine"
    assert len(csv_lines) == 1 + len(report.rows)

    import json
    summary = json.loads(written["summary.json"].read_text())
    assert summary["n_prompts"] == len(corpus)
    assert len(summary["per_prompt"]) == len(corpus)
    assert "original" in summary["conditions"]

    tree = ET.parse(written["histogram.svg"])
    assert tree.getroot().tag.endswith("svg")


def test_emit_report_is_byte_deterministic(small_setup, tmp_path):
    weights, corpus, e, scorer, gen = small_setup
    pcfg = ag.toy_default_config(iterations=1)
    report = ag.run_experiment(weights, corpus, e, scorer, gen, pcfg,
                               seeds_per_prompt=2, master_seed=0)
    first = ag.emit_report(report, tmp_path / "a")
    second = ag.emit_report(report, tmp_path / "b")
    for name in first:
        assert first[name].read_bytes() == second[name].read_bytes(), name
