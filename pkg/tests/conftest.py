import numpy as np
import pytest

from icubench.core import EpisodeTimeline, ccs_map, load_phenotype_config, load_variable_config
from icubench.pipeline import build_benchmark
from icubench.syngen import SynthConfig, generate_tables


@pytest.fixture(scope="session")
def specs():
    return load_variable_config()


@pytest.fixture(scope="session")
def phenotypes():
    return load_phenotype_config()


@pytest.fixture(scope="session")
def ccs(phenotypes):
    return ccs_map(phenotypes)


@pytest.fixture(scope="session")
def cohort(specs, ccs):
    """200 synthetic patients with default anomaly rates: (tables, ground truth, benchmark)."""
    tables, truth = generate_tables(SynthConfig(seed=7, n_patients=200))
    bench = build_benchmark(tables, specs, ccs)
    return tables, truth, bench


def make_episode(times=(), variables=(), values=(), los=None, dod=None, stay=1, patient=1, diagnoses=()):
    return EpisodeTimeline(
        stay_id=stay,
        patient_id=patient,
        admission_id=stay,
        intime="2130-01-01 00:00:00",
        outtime="2130-01-02 00:00:00",
        los_hours=los,
        age_years=60.0,
        mortality_inhospital=dod is not None,
        dod_hours=dod,
        diagnoses=frozenset(diagnoses),
        times=np.asarray(times, dtype=float),
        variables=np.asarray(variables, dtype=int),
        values=np.asarray(values, dtype=float),
    )


def random_episode(rng, specs, n_events=40, horizon=30.0, stay=1):
    """Events at random times; categorical variables get valid category indices."""
    times = np.sort(rng.uniform(0, horizon, n_events))
    variables = rng.integers(0, len(specs), n_events)
    values = np.empty(n_events)
    for k, v in enumerate(variables):
        s = specs[v]
        if s.is_categorical:
            values[k] = rng.integers(len(s.categories))
        else:
            lo, hi = s.valid_range
            values[k] = rng.uniform(lo, hi)
    return make_episode(times, variables, values, los=horizon + 1.0, stay=stay)
