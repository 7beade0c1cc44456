import numpy as np
import pytest

import aesgrad as ag


@pytest.fixture(scope="session")
def tiny_config():
    return ag.encoder_preset("tiny")


@pytest.fixture(scope="session")
def corpus_vocab(tiny_config):
    return ag.build_vocab(list(ag.PROMPT_CORPUS), tiny_config.vocab_size)


@pytest.fixture()
def tiny_weights(tiny_config):
    return ag.init_weights(tiny_config, seed=0)


@pytest.fixture()
def tiny_aesthetic(tiny_config):
    return ag.synthesize_aesthetic(tiny_config.d_joint, 8, 0)


@pytest.fixture()
def fountain_tokens(tiny_config, corpus_vocab):
    return ag.tokenize("A fountain, sculpture", corpus_vocab, tiny_config.context_length)


@pytest.fixture()
def unit_vector():
    def make(dim, seed=0):
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(dim)
        return (v / np.linalg.norm(v)).astype(np.float32)

    return make
