"""Shared fixtures: one small synthetic corpus per test session."""

import pytest

from histocurate import pipeline as pl
from histocurate import retrieval as rt
from histocurate import synth
from histocurate.catalog import assign_groups, load_group_rules, load_manifest


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("session_corpus")
    spec = synth.SynthSpec(slides=10, diagnoses=5, size=512, seed=3)
    manifest = synth.generate_corpus(out, spec)
    return {"dir": out, "manifest": manifest}


@pytest.fixture(scope="session")
def corpus_catalog(corpus):
    rules = load_group_rules(corpus["dir"] / "groups.yaml")
    return assign_groups(load_manifest(corpus["manifest"]), rules)


@pytest.fixture(scope="session")
def corpus_tiles(corpus_catalog):
    return pl.tiles_for_catalog(corpus_catalog)


@pytest.fixture(scope="session")
def corpus_store(corpus, corpus_catalog, corpus_tiles):
    path = corpus["dir"] / "store.rves"
    store = rt.build_store(corpus_catalog, corpus_tiles, rt.FeatureEmbedder(), out_path=path)
    return {"path": path, "store": store}
