import numpy as np
import pytest

from zsl.datagen import export_benchmark, generate
from zsl.models.data_schema import (
    ClassifierConfig,
    GenConfig,
    PathsConfig,
    RunConfig,
    RunSection,
    TrainConfig,
    VaeConfig,
)
from zsl.taxonomy import load_taxonomy

TAXONOMY_TSV = (
    "taxon_id\tspecies\tgenus\tfamily\torder\tclass\tphylum\tkingdom\n"
    "a\tsp_a\tg1\tf1\to1\tc1\tp1\tk1\n"
    "b\tsp_b\tg1\tf1\to1\tc1\tp1\tk1\n"
    "c\tsp_c\tg2\tf2\to2\tc1\tp1\tk1\n"
    "d\tsp_d\tg3\tf3\to3\tc2\tp1\tk1\n"
    "e\tsp_e\tg4\tf4\to4\tc3\tp2\tk2\n"
)


@pytest.fixture
def small_taxonomy():
    return load_taxonomy(TAXONOMY_TSV)


@pytest.fixture
def tiny_gen_config():
    # 32 species, 8 per Class node: 3 seen, 2 unseen, 3 per auxiliary pool
    return GenConfig(
        branching=[2, 2, 1, 2, 2, 1, 2],
        feature_dim=6,
        attr_dim=4,
        samples_per_class=10,
        n_seen=3,
        n_unseen=2,
        aux_pool_size=3,
        seed=3,
    )


@pytest.fixture
def tiny_benchmark(tiny_gen_config):
    return generate(tiny_gen_config)


@pytest.fixture
def tiny_run_config(tmp_path, tiny_gen_config):
    return RunConfig(
        paths=PathsConfig(benchmark_dir=str(tmp_path / "bench"), output_dir=str(tmp_path / "runs")),
        gen=tiny_gen_config,
        train=TrainConfig(lr=0.01, epochs=2, batch_size=8, feature_width=8, hidden_width=8,
                          pretrain_epochs=1, pretext_classes=3, pretext_samples_per_class=10),
        vae=VaeConfig(latent_width=3, hidden_width=8, epochs=2, batch_size=8),
        classifier=ClassifierConfig(epochs=2, batch_size=8),
        run=RunSection(draws_per_item=4, seeds=[0, 1], aux_classes=2),
    )


@pytest.fixture
def tiny_benchmark_dir(tiny_run_config, tiny_benchmark):
    export_benchmark(tiny_benchmark, tiny_run_config.paths.benchmark_dir)
    return tiny_run_config.paths.benchmark_dir


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
